#include "temvip/data.hpp"

#include "temvip/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace temvip {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::BadTreatmentCode: return "BadTreatmentCode";
    case ErrorCode::EmptyData: return "EmptyData";
    case ErrorCode::SurvivalGridViolation: return "SurvivalGridViolation";
    case ErrorCode::AllColumnsDropped: return "AllColumnsDropped";
    case ErrorCode::DegenerateOutcome: return "DegenerateOutcome";
    case ErrorCode::NonPositiveTime: return "NonPositiveTime";
    case ErrorCode::OneClassOnly: return "OneClassOnly";
    case ErrorCode::AllLearnersFailed: return "AllLearnersFailed";
    case ErrorCode::NoEventsBeforeHorizon: return "NoEventsBeforeHorizon";
    case ErrorCode::GridExceeded: return "GridExceeded";
    case ErrorCode::TiltDiverged: return "TiltDiverged";
    case ErrorCode::PositiveOutcomeRequired: return "PositiveOutcomeRequired";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NoCovariates: return "NoCovariates";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

std::string_view to_string(WarningCode code) {
  switch (code) {
    case WarningCode::NoConvergence: return "NoConvergence";
    case WarningCode::SeparationDetected: return "SeparationDetected";
    case WarningCode::TruncationApplied: return "TruncationApplied";
    case WarningCode::FloorApplied: return "FloorApplied";
    case WarningCode::CensoringPositivityViolation: return "CensoringPositivityViolation";
    case WarningCode::TiltMaxIter: return "TiltMaxIter";
    case WarningCode::HazardBoundary: return "HazardBoundary";
    case WarningCode::DegenerateVariance: return "DegenerateVariance";
    case WarningCode::LearnerFailed: return "LearnerFailed";
  }
  return "Unknown";
}

OutcomeFamily ObservedDataset::family() const {
  if (std::holds_alternative<ContinuousOutcome>(outcome)) return OutcomeFamily::Continuous;
  if (std::holds_alternative<BinaryOutcome>(outcome)) return OutcomeFamily::Binary;
  return OutcomeFamily::Survival;
}

const Vector& ObservedDataset::y() const {
  if (const auto* c = std::get_if<ContinuousOutcome>(&outcome)) return c->y;
  if (const auto* b = std::get_if<BinaryOutcome>(&outcome)) return b->y;
  throw Error(ErrorCode::InvalidArgument, "dataset has a survival outcome, not y");
}

namespace {

std::string column_label(const ObservedDataset& d, std::size_t j) {
  if (j < d.covariate_names.size()) return d.covariate_names[j];
  return "W" + std::to_string(j + 1);
}

void check_outcome_length(std::size_t got, std::size_t n, const char* what) {
  if (got != n)
    throw Error(ErrorCode::EmptyData, std::string(what) + " has " + std::to_string(got) +
                                          " entries, expected " + std::to_string(n));
}

}  // namespace

ObservedDataset validate(ObservedDataset raw) {
  const std::size_t n = raw.n();
  const std::size_t p = raw.p();
  if (n < 2) throw Error(ErrorCode::EmptyData, "need at least 2 observations, got " + std::to_string(n));
  if (p < 1) throw Error(ErrorCode::EmptyData, "need at least 1 covariate");
  if (static_cast<std::size_t>(raw.treatment.size()) != n)
    throw Error(ErrorCode::EmptyData, "treatment length does not match covariate rows");
  if (!raw.covariate_names.empty() && raw.covariate_names.size() != p)
    throw Error(ErrorCode::EmptyData, "covariate_names length does not match covariate columns");

  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(raw.covariates(i, j)))
        throw Error(ErrorCode::NonFinite, "non-finite covariate value in column '" +
                                              column_label(raw, j) + "', row " + std::to_string(i + 1));

  for (std::size_t i = 0; i < n; ++i) {
    const double a = raw.treatment[i];
    if (!std::isfinite(a)) throw Error(ErrorCode::NonFinite, "non-finite treatment in row " + std::to_string(i + 1));
    if (a != 0.0 && a != 1.0)
      throw Error(ErrorCode::BadTreatmentCode,
                  "treatment must be 0 or 1; row " + std::to_string(i + 1) + " has " + std::to_string(a));
  }

  if (auto* c = std::get_if<ContinuousOutcome>(&raw.outcome)) {
    check_outcome_length(c->y.size(), n, "outcome");
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(c->y[i]))
        throw Error(ErrorCode::NonFinite, "non-finite outcome in row " + std::to_string(i + 1));
  } else if (auto* b = std::get_if<BinaryOutcome>(&raw.outcome)) {
    check_outcome_length(b->y.size(), n, "outcome");
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(b->y[i]))
        throw Error(ErrorCode::NonFinite, "non-finite outcome in row " + std::to_string(i + 1));
      if (b->y[i] != 0.0 && b->y[i] != 1.0)
        throw Error(ErrorCode::InvalidArgument,
                    "binary outcome must be 0 or 1; row " + std::to_string(i + 1));
    }
  } else {
    auto& s = std::get<SurvivalOutcome>(raw.outcome);
    check_outcome_length(s.t_tilde.size(), n, "time");
    check_outcome_length(s.delta.size(), n, "censoring indicator");
    if (s.t_max < 1)
      throw Error(ErrorCode::SurvivalGridViolation, "time grid must have t_max >= 1");
    for (std::size_t i = 0; i < n; ++i) {
      if (s.t_tilde[i] < 1 || s.t_tilde[i] > s.t_max)
        throw Error(ErrorCode::SurvivalGridViolation,
                    "time in row " + std::to_string(i + 1) + " is " + std::to_string(s.t_tilde[i]) +
                        ", outside grid 1.." + std::to_string(s.t_max));
      if (s.delta[i] != 0 && s.delta[i] != 1)
        throw Error(ErrorCode::InvalidArgument,
                    "censoring indicator must be 0 or 1; row " + std::to_string(i + 1));
    }
  }
  return raw;
}

std::pair<ObservedDataset, PreprocessReport> center_and_filter(const ObservedDataset& d, double var_tol) {
  const auto n = static_cast<Eigen::Index>(d.n());
  PreprocessReport report;
  report.centers.reserve(d.p());

  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < d.covariates.cols(); ++j) {
    double mean = d.covariates.col(j).mean();
    // A column that is already centered up to rounding is left bit-identical,
    // which keeps centering idempotent.
    const double scale = d.covariates.col(j).cwiseAbs().maxCoeff();
    if (std::abs(mean) <= 64.0 * std::numeric_limits<double>::epsilon() * scale) mean = 0.0;
    report.centers.push_back(mean);
    const double ss = (d.covariates.col(j).array() - mean).square().sum();
    const double var = ss / static_cast<double>(n - 1);
    if (var > var_tol)
      keep.push_back(j);
    else
      report.dropped_columns.push_back(column_label(d, static_cast<std::size_t>(j)));
  }
  if (keep.empty()) throw Error(ErrorCode::AllColumnsDropped, "every covariate has zero variance");

  ObservedDataset out;
  out.treatment = d.treatment;
  out.outcome = d.outcome;
  out.covariates.resize(n, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const Eigen::Index j = keep[k];
    out.covariates.col(static_cast<Eigen::Index>(k)) =
        d.covariates.col(j).array() - report.centers[static_cast<std::size_t>(j)];
    out.covariate_names.push_back(column_label(d, static_cast<std::size_t>(j)));
  }
  return {std::move(out), std::move(report)};
}

std::pair<Vector, ScaleInfo> rescale_outcome_unit_interval(const Vector& y) {
  if (y.size() == 0) throw Error(ErrorCode::EmptyData, "empty outcome");
  ScaleInfo info{y.minCoeff(), y.maxCoeff()};
  if (!(info.max > info.min))
    throw Error(ErrorCode::DegenerateOutcome, "outcome is constant; cannot rescale");
  Vector out = (y.array() - info.min) / info.range();
  return {std::move(out), info};
}

std::pair<std::vector<int>, TimeGrid> discretize_times(std::span<const double> raw_times, double bin_width) {
  if (!(bin_width > 0.0) || !std::isfinite(bin_width))
    throw Error(ErrorCode::InvalidArgument, "bin width must be positive");
  std::vector<int> bins;
  bins.reserve(raw_times.size());
  int t_max = 0;
  for (std::size_t i = 0; i < raw_times.size(); ++i) {
    const double t = raw_times[i];
    if (!std::isfinite(t)) throw Error(ErrorCode::NonFinite, "non-finite time in row " + std::to_string(i + 1));
    if (!(t > 0.0))
      throw Error(ErrorCode::NonPositiveTime, "time in row " + std::to_string(i + 1) + " is not positive");
    const int k = static_cast<int>(std::ceil(t / bin_width - 1e-9));
    bins.push_back(std::max(k, 1));
    t_max = std::max(t_max, bins.back());
  }
  return {std::move(bins), TimeGrid{t_max, t_max}};
}

}  // namespace temvip
