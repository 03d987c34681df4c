#include "temvip/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace temvip {

namespace {

LearnerSpec lasso(Family family, double rel_lambda, bool interactions) {
  LearnerSpec s;
  s.family = family;
  s.penalty = {PenaltyKind::L1, rel_lambda, 1.0};
  s.relative_lambda = true;
  s.interactions = interactions;
  return s;
}

LearnerSpec intercept_only(Family family) {
  LearnerSpec s;
  s.family = family;
  s.intercept_only = true;
  return s;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

// Coefficients of a fitted A/W/AxW block starting at column `offset`.
struct LinearParts {
  double b_a = 0.0;
  Vector w_main;  // n: W beta_W
  Vector w_int;   // n: W beta_AW
};

LinearParts split_parts(const GlmFit& fit, const LearnerSpec& spec, const Matrix& W, Eigen::Index offset,
                        bool has_treatment) {
  LinearParts parts;
  parts.w_main = Vector::Zero(W.rows());
  parts.w_int = Vector::Zero(W.rows());
  if (spec.intercept_only) return parts;
  const Eigen::Index p = W.cols();
  Eigen::Index c = offset;
  if (has_treatment) parts.b_a = fit.beta[c++];
  parts.w_main = W * fit.beta.segment(c, p);
  c += p;
  if (has_treatment && spec.interactions) parts.w_int = W * fit.beta.segment(c, p);
  return parts;
}

void add_treatment_block(Matrix& X, Eigen::Index col, const Matrix& W, const Vector& a,
                         std::span<const std::size_t> rows, std::span<const std::size_t> subject,
                         bool interactions) {
  const Eigen::Index p = W.cols();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(subject.empty() ? rows[r] : subject[rows[r]]);
    const auto ri = static_cast<Eigen::Index>(r);
    X(ri, col) = a[i];
    X.row(ri).segment(col + 1, p) = W.row(i);
    if (interactions) X.row(ri).segment(col + 1 + p, p) = a[i] * W.row(i);
  }
}

std::vector<int> inner_folds(std::span<const std::size_t> rows, const Vector& strata, int v, std::uint64_t seed) {
  std::vector<double> s(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) s[k] = strata[static_cast<Eigen::Index>(rows[k])];
  return make_folds(rows.size(), v, seed, s);
}

// Training/evaluation subject sets, one entry per fit.
struct FitSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
};

std::vector<FitSplit> make_splits(std::size_t n, const CrossFitPlan& plan) {
  if (!plan.active()) return {FitSplit{all_rows(n), all_rows(n)}};
  if (plan.fold.size() != n) throw Error(ErrorCode::InvalidArgument, "cross-fitting plan does not match data");
  std::vector<FitSplit> splits(static_cast<std::size_t>(plan.k));
  for (std::size_t i = 0; i < n; ++i)
    for (int f = 0; f < plan.k; ++f)
      (plan.fold[i] == f ? splits[static_cast<std::size_t>(f)].eval : splits[static_cast<std::size_t>(f)].train)
          .push_back(i);
  return splits;
}

void check_two_classes(const Vector& y, const char* what) {
  if (!(y.maxCoeff() > y.minCoeff()))
    throw Error(ErrorCode::OneClassOnly, std::string(what) + " takes a single value; logistic fit impossible");
}

}  // namespace

CrossFitPlan CrossFitPlan::stratified(const Vector& treatment, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "cross-fitting needs K >= 2");
  const auto n = static_cast<std::size_t>(treatment.size());
  CrossFitPlan plan;
  plan.k = k;
  plan.fold = make_folds(n, k, seed, std::span<const double>(treatment.data(), n));
  std::vector<std::array<int, 2>> seen(static_cast<std::size_t>(k), {0, 0});
  for (std::size_t i = 0; i < n; ++i)
    ++seen[static_cast<std::size_t>(plan.fold[i])][treatment[static_cast<Eigen::Index>(i)] > 0.5 ? 1 : 0];
  for (const auto& s : seen)
    if (s[0] == 0 || s[1] == 0)
      throw Error(ErrorCode::InvalidArgument, "a cross-fitting fold lacks one treatment arm; lower K");
  return plan;
}

std::vector<LearnerSpec> default_propensity_menu() {
  return {lasso(Family::Logistic, 0.5, false), lasso(Family::Logistic, 0.25, false),
          lasso(Family::Logistic, 0.1, false), lasso(Family::Logistic, 0.05, false),
          intercept_only(Family::Logistic)};
}

std::vector<LearnerSpec> default_outcome_menu(Family family) {
  std::vector<LearnerSpec> menu;
  for (double f : {0.2, 0.1, 0.05, 0.02}) menu.push_back(lasso(family, f, true));
  menu.push_back(intercept_only(family));
  return menu;
}

std::vector<LearnerSpec> default_hazard_menu() {
  return {lasso(Family::Logistic, 0.2, true), lasso(Family::Logistic, 0.1, true),
          lasso(Family::Logistic, 0.05, true), intercept_only(Family::Logistic)};
}

std::vector<LearnerSpec> default_censoring_menu() {
  return {lasso(Family::Logistic, 0.2, false), lasso(Family::Logistic, 0.05, false),
          intercept_only(Family::Logistic)};
}

Vector PropensityFit::evaluate(const Matrix& W) const {
  if (known) return Vector::Constant(W.rows(), *known);
  if (models.empty()) throw Error(ErrorCode::InvalidArgument, "propensity built from values cannot score new rows");
  Vector out = Vector::Zero(W.rows());
  for (const auto& m : models)
    out += m.spec.intercept_only ? Vector::Constant(W.rows(), expit(m.fit.intercept))
                                 : predict(m.fit, W, Family::Logistic);
  out /= static_cast<double>(models.size());
  return out.cwiseMax(truncation).cwiseMin(1.0 - truncation);
}

PropensityFit PropensityFit::from_values(Vector g, double truncation) {
  PropensityFit fit;
  fit.truncation = truncation;
  fit.values = g.cwiseMax(truncation).cwiseMin(1.0 - truncation);
  fit.provenance = "supplied";
  return fit;
}

Vector OutcomeRegressionFit::evaluate(double a, const Matrix& W) const {
  if (models.empty()) throw Error(ErrorCode::InvalidArgument, "outcome fit built from values cannot score new rows");
  Vector out = Vector::Zero(W.rows());
  for (const auto& m : models) {
    const LinearParts parts = split_parts(m.fit, m.spec, W, 0, true);
    Vector eta = (parts.w_main + a * parts.w_int).array() + m.fit.intercept + parts.b_a * a;
    if (family == Family::Logistic)
      for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] = expit(std::clamp(eta[i], -kSeparationBound, kSeparationBound));
    out += eta;
  }
  return out / static_cast<double>(models.size());
}

OutcomeRegressionFit OutcomeRegressionFit::from_values(Vector q1, Vector q0, const Vector& treatment,
                                                       bool unit_interval) {
  OutcomeRegressionFit fit;
  fit.q_obs = (treatment.array() > 0.5).select(q1, q0);
  fit.q1 = std::move(q1);
  fit.q0 = std::move(q0);
  fit.unit_interval = unit_interval;
  fit.family = unit_interval ? Family::Logistic : Family::Linear;
  fit.provenance = "supplied";
  return fit;
}

void SurvivalNuisanceFit::recompute_survival() {
  for (std::size_t a = 0; a < 2; ++a) {
    survival[a].resize(hazard[a].rows(), hazard[a].cols());
    for (Eigen::Index i = 0; i < hazard[a].rows(); ++i) {
      double s = 1.0;
      for (Eigen::Index u = 0; u < hazard[a].cols(); ++u) {
        s *= 1.0 - hazard[a](i, u);
        survival[a](i, u) = s;
      }
    }
  }
}

SurvivalNuisanceFit SurvivalNuisanceFit::from_hazards(Matrix hazard1, Matrix hazard0, Matrix cens1, Matrix cens0) {
  if (hazard1.rows() != hazard0.rows() || hazard1.cols() != hazard0.cols() || cens1.rows() != hazard1.rows() ||
      cens0.rows() != hazard1.rows() || cens1.cols() < hazard1.cols() || cens0.cols() < hazard1.cols())
    throw Error(ErrorCode::InvalidArgument, "survival nuisance matrices have inconsistent shapes");
  SurvivalNuisanceFit fit;
  fit.horizon = static_cast<int>(hazard1.cols());
  fit.hazard = {std::move(hazard0), std::move(hazard1)};
  fit.censoring = {std::move(cens0), std::move(cens1)};
  fit.recompute_survival();
  fit.hazard_provenance = fit.censoring_provenance = "supplied";
  return fit;
}

Design outcome_design(const Matrix& W, const Vector& a, const LearnerSpec& spec, std::span<const std::size_t> rows) {
  Design d;
  if (spec.intercept_only) {
    d.X.resize(static_cast<Eigen::Index>(rows.size()), 0);
    return d;
  }
  const Eigen::Index p = W.cols();
  d.X.resize(static_cast<Eigen::Index>(rows.size()), 1 + p * (spec.interactions ? 2 : 1));
  add_treatment_block(d.X, 0, W, a, rows, {}, spec.interactions);
  return d;
}

PropensityFit fit_propensity(const ObservedDataset& d, std::span<const LearnerSpec> menu, const CrossFitPlan& plan,
                             std::optional<double> known, const NuisanceSettings& settings, Diagnostics* diag) {
  const auto n = static_cast<Eigen::Index>(d.n());
  PropensityFit fit;
  fit.truncation = settings.truncation;
  if (known) {
    if (!(*known > 0.0 && *known < 1.0))
      throw Error(ErrorCode::InvalidArgument, "known propensity must lie strictly between 0 and 1");
    fit.known = known;
    fit.values = Vector::Constant(n, *known);
    fit.provenance = "known";
    return fit;
  }
  check_two_classes(d.treatment, "treatment");
  const Matrix& W = d.covariates;
  DesignBuilder builder = [&](const LearnerSpec& spec, std::span<const std::size_t> rows) {
    Design out;
    out.X.resize(static_cast<Eigen::Index>(rows.size()), spec.intercept_only ? 0 : W.cols());
    if (!spec.intercept_only)
      for (std::size_t r = 0; r < rows.size(); ++r)
        out.X.row(static_cast<Eigen::Index>(r)) = W.row(static_cast<Eigen::Index>(rows[r]));
    return out;
  };

  Vector raw(n);
  const auto splits = make_splits(d.n(), plan);
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const auto& split = splits[s];
    const auto folds = inner_folds(split.train, d.treatment, settings.cv_folds, settings.seed + 17 * s + 1);
    SelectedFit sel = select_and_fit(builder, d.treatment, split.train, menu, folds, settings.cv_folds, diag);
    const Design ev = builder(sel.spec, split.eval);
    const Vector pred = predict(sel.fit, ev.X, Family::Logistic);
    for (std::size_t r = 0; r < split.eval.size(); ++r)
      raw[static_cast<Eigen::Index>(split.eval[r])] = pred[static_cast<Eigen::Index>(r)];
    fit.provenance = sel.spec.id();
    fit.models.push_back(std::move(sel));
  }
  if (splits.size() > 1) fit.provenance = "cross-fitted " + fit.provenance;

  fit.values = raw.cwiseMax(settings.truncation).cwiseMin(1.0 - settings.truncation);
  const auto clipped = (fit.values.array() != raw.array()).count();
  if (clipped > 0 && diag)
    diag->warn(WarningCode::TruncationApplied, std::to_string(clipped) + " propensity values truncated into [" +
                                                   std::to_string(settings.truncation) + ", " +
                                                   std::to_string(1.0 - settings.truncation) + "]");
  return fit;
}

OutcomeRegressionFit fit_outcome_regression(const ObservedDataset& d, std::span<const LearnerSpec> menu,
                                            const CrossFitPlan& plan, const NuisanceSettings& settings,
                                            Diagnostics* diag, const Vector* y_override) {
  if (d.family() == OutcomeFamily::Survival)
    throw Error(ErrorCode::InvalidArgument, "outcome regression needs a continuous or binary outcome");
  const Vector& y = y_override ? *y_override : d.y();
  if (menu.empty()) throw Error(ErrorCode::InvalidArgument, "empty outcome learner menu");
  const Family family = menu.front().family;
  for (const auto& s : menu)
    if (s.family != family) throw Error(ErrorCode::InvalidArgument, "outcome menu mixes learner families");
  if (family == Family::Logistic) check_two_classes(y, "outcome");

  const auto n = static_cast<Eigen::Index>(d.n());
  const Matrix& W = d.covariates;
  DesignBuilder builder = [&](const LearnerSpec& spec, std::span<const std::size_t> rows) {
    return outcome_design(W, d.treatment, spec, rows);
  };

  OutcomeRegressionFit fit;
  fit.family = family;
  fit.unit_interval = family == Family::Logistic;
  fit.q_obs.resize(n);
  fit.q1.resize(n);
  fit.q0.resize(n);
  const auto splits = make_splits(d.n(), plan);
  std::vector<SelectedFit> fold_models;
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const auto& split = splits[s];
    const auto folds = inner_folds(split.train, d.treatment, settings.cv_folds, settings.seed + 17 * s + 2);
    SelectedFit sel = select_and_fit(builder, y, split.train, menu, folds, settings.cv_folds, diag);
    fit.models = {sel};
    const Vector q1 = fit.evaluate(1.0, W);
    const Vector q0 = fit.evaluate(0.0, W);
    for (std::size_t i : split.eval) {
      const auto ii = static_cast<Eigen::Index>(i);
      fit.q1[ii] = q1[ii];
      fit.q0[ii] = q0[ii];
    }
    fit.provenance = (splits.size() > 1 ? "cross-fitted " : "") + sel.spec.id();
    fold_models.push_back(std::move(sel));
  }
  fit.models = std::move(fold_models);
  fit.q_obs = (d.treatment.array() > 0.5).select(fit.q1, fit.q0);
  return fit;
}

LongFormat expand_long(const SurvivalOutcome& s, int horizon) {
  LongFormat lf;
  for (std::size_t i = 0; i < s.t_tilde.size(); ++i) {
    const int last = std::min(s.t_tilde[i], horizon);
    for (int u = 1; u <= last; ++u) {
      lf.subject.push_back(i);
      lf.time.push_back(u);
    }
  }
  const auto rows = static_cast<Eigen::Index>(lf.subject.size());
  lf.event = Vector::Zero(rows);
  lf.censored = Vector::Zero(rows);
  lf.at_risk_censoring.assign(lf.subject.size(), 1);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::size_t i = lf.subject[static_cast<std::size_t>(r)];
    if (lf.time[static_cast<std::size_t>(r)] != s.t_tilde[i]) continue;
    if (s.delta[i] == 1) {
      lf.censored[r] = 1.0;
    } else {
      lf.event[r] = 1.0;
      lf.at_risk_censoring[static_cast<std::size_t>(r)] = 0;
    }
  }
  return lf;
}

std::array<Vector, 2> km_censoring(const SurvivalOutcome& s, const Vector& treatment, int horizon) {
  std::array<Vector, 2> c{Vector::Ones(horizon), Vector::Ones(horizon)};
  for (int a = 0; a < 2; ++a) {
    double surv = 1.0;
    for (int u = 1; u <= horizon; ++u) {
      double risk = 0.0, cens = 0.0;
      for (std::size_t i = 0; i < s.t_tilde.size(); ++i) {
        if ((treatment[static_cast<Eigen::Index>(i)] > 0.5 ? 1 : 0) != a || s.t_tilde[i] < u) continue;
        if (s.t_tilde[i] == u && s.delta[i] == 0) continue;  // event in this bin, removed before censoring
        risk += 1.0;
        if (s.t_tilde[i] == u) cens += 1.0;
      }
      if (risk > 0.0) surv *= 1.0 - cens / risk;
      c[static_cast<std::size_t>(a)][u - 1] = surv;
    }
  }
  return c;
}

namespace {

// Pooled logistic hazard over long-format rows; returns lambda(u | a, W_i) per arm.
struct HazardModel {
  std::array<Matrix, 2> values;
  std::string provenance;
};

HazardModel fit_pooled_hazard(const ObservedDataset& d, const LongFormat& lf, const Vector& outcome,
                              const std::vector<std::size_t>& usable, int horizon,
                              std::span<const LearnerSpec> menu, const CrossFitPlan& plan,
                              const NuisanceSettings& settings, std::uint64_t salt, Diagnostics* diag) {
  const Matrix& W = d.covariates;
  const Eigen::Index p = W.cols();
  const auto n = static_cast<Eigen::Index>(d.n());
  const Eigen::Index n_dummies = horizon;

  // One unpenalized indicator per grid time and no intercept. The indicators
  // are orthogonal, so a time without events only sends its own coefficient
  // off (caught by the separation rule); with an intercept and a reference
  // time, an event-free reference drags every time effect along with it.
  DesignBuilder builder = [&](const LearnerSpec& spec, std::span<const std::size_t> rows) {
    Design out;
    out.intercept = false;
    const Eigen::Index extra = spec.intercept_only ? 0 : 1 + p * (spec.interactions ? 2 : 1);
    out.X = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), n_dummies + extra);
    for (std::size_t r = 0; r < rows.size(); ++r) out.X(static_cast<Eigen::Index>(r), lf.time[rows[r]] - 1) = 1.0;
    if (!spec.intercept_only)
      add_treatment_block(out.X, n_dummies, W, d.treatment, rows, lf.subject, spec.interactions);
    out.penalty_factor.assign(static_cast<std::size_t>(out.X.cols()), 1.0);
    std::fill_n(out.penalty_factor.begin(), n_dummies, 0.0);
    return out;
  };

  HazardModel model;
  model.values = {Matrix(n, horizon), Matrix(n, horizon)};
  const auto splits = make_splits(d.n(), plan);
  for (std::size_t s = 0; s < splits.size(); ++s) {
    std::vector<char> in_train(d.n(), 0);
    for (std::size_t i : splits[s].train) in_train[i] = 1;
    std::vector<std::size_t> rows;
    for (std::size_t r : usable)
      if (in_train[lf.subject[r]]) rows.push_back(r);
    double events = 0.0;
    for (std::size_t r : rows) events += outcome[static_cast<Eigen::Index>(r)];
    if (events <= 0.0)
      throw Error(ErrorCode::NoEventsBeforeHorizon, "no events on the grid up to the horizon in a training set");

    // Selection folds are assigned per subject so a subject's rows stay together.
    const auto subj_folds = make_folds(d.n(), settings.cv_folds, settings.seed + salt + 17 * s,
                                       std::span<const double>(d.treatment.data(), d.n()));
    std::vector<int> row_folds(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) row_folds[k] = subj_folds[lf.subject[rows[k]]];

    SelectedFit sel = select_and_fit(builder, outcome, rows, menu, row_folds, settings.cv_folds, diag);
    model.provenance = (splits.size() > 1 ? "cross-fitted " : "") + sel.spec.id();

    const Eigen::Index offset = n_dummies;
    const LinearParts parts = split_parts(sel.fit, sel.spec, W, offset, true);
    for (std::size_t i : splits[s].eval) {
      const auto ii = static_cast<Eigen::Index>(i);
      for (int a = 0; a < 2; ++a) {
        for (int u = 1; u <= horizon; ++u) {
          double eta = sel.fit.beta[u - 1];
          eta += parts.b_a * a + parts.w_main[ii] + a * parts.w_int[ii];
          model.values[static_cast<std::size_t>(a)](ii, u - 1) =
              expit(std::clamp(eta, -kSeparationBound, kSeparationBound));
        }
      }
    }
  }
  return model;
}

}  // namespace

SurvivalNuisanceFit fit_survival_nuisances(const ObservedDataset& d, int horizon,
                                           std::span<const LearnerSpec> hazard_menu,
                                           std::span<const LearnerSpec> censoring_menu, const CrossFitPlan& plan,
                                           bool use_km_censoring, const NuisanceSettings& settings,
                                           Diagnostics* diag) {
  if (d.family() != OutcomeFamily::Survival)
    throw Error(ErrorCode::InvalidArgument, "survival nuisances need a survival outcome");
  const SurvivalOutcome& s = d.survival();
  if (horizon < 1 || horizon > s.t_max)
    throw Error(ErrorCode::GridExceeded, "horizon " + std::to_string(horizon) + " is outside the grid 1.." +
                                             std::to_string(s.t_max));
  const LongFormat lf = expand_long(s, horizon);
  if (lf.event.sum() <= 0.0)
    throw Error(ErrorCode::NoEventsBeforeHorizon, "no events observed up to the horizon");
  const auto n = static_cast<Eigen::Index>(d.n());

  SurvivalNuisanceFit fit;
  fit.horizon = horizon;
  std::vector<std::size_t> every(lf.subject.size());
  std::iota(every.begin(), every.end(), std::size_t{0});
  HazardModel hz = fit_pooled_hazard(d, lf, lf.event, every, horizon, hazard_menu, plan, settings, 101, diag);
  fit.hazard = std::move(hz.values);
  fit.hazard_provenance = hz.provenance;
  fit.recompute_survival();

  fit.censoring = {Matrix::Ones(n, horizon), Matrix::Ones(n, horizon)};
  std::vector<std::size_t> cens_rows;
  double cens_events = 0.0;
  for (std::size_t r = 0; r < lf.subject.size(); ++r)
    if (lf.at_risk_censoring[r]) {
      cens_rows.push_back(r);
      cens_events += lf.censored[static_cast<Eigen::Index>(r)];
    }
  if (cens_events <= 0.0) {
    fit.censoring_provenance = "no censoring observed";
  } else if (use_km_censoring) {
    const auto km = km_censoring(s, d.treatment, horizon);
    for (int a = 0; a < 2; ++a)
      for (Eigen::Index i = 0; i < n; ++i) fit.censoring[static_cast<std::size_t>(a)].row(i) = km[static_cast<std::size_t>(a)].transpose();
    fit.censoring_provenance = "kaplan-meier by arm";
  } else {
    HazardModel cz;
    try {
      cz = fit_pooled_hazard(d, lf, lf.censored, cens_rows, horizon, censoring_menu, plan, settings, 202, diag);
    } catch (const Error& e) {
      // Too little censoring for a regression in some training or selection fold;
      // use the product-limit estimate by arm.
      if (e.code() != ErrorCode::NoEventsBeforeHorizon && e.code() != ErrorCode::AllLearnersFailed) throw;
      if (diag) diag->warn(WarningCode::LearnerFailed, std::string("censoring regression failed (") + e.what() +
                                                          "); using Kaplan-Meier by arm");
      const auto km = km_censoring(s, d.treatment, horizon);
      for (int a = 0; a < 2; ++a)
        for (Eigen::Index i = 0; i < n; ++i) fit.censoring[static_cast<std::size_t>(a)].row(i) = km[static_cast<std::size_t>(a)].transpose();
      fit.censoring_provenance = "kaplan-meier by arm (too few censoring events for a regression)";
    }
    if (fit.censoring_provenance.empty()) {
      for (std::size_t a = 0; a < 2; ++a)
        for (Eigen::Index i = 0; i < n; ++i) {
          double c = 1.0;
          for (Eigen::Index u = 0; u < horizon; ++u) {
            c *= 1.0 - cz.values[a](i, u);
            fit.censoring[a](i, u) = c;
          }
        }
      fit.censoring_provenance = cz.provenance;
    }
  }

  Eigen::Index floored = 0;
  for (auto& c : fit.censoring) {
    floored += (c.array() < settings.censoring_floor).count();
    c = c.cwiseMax(settings.censoring_floor);
  }
  if (floored > 0 && diag)
    diag->warn(WarningCode::CensoringPositivityViolation,
               std::to_string(floored) + " censoring-survival values below " + std::to_string(settings.censoring_floor) +
                   " were floored");
  return fit;
}

}  // namespace temvip
