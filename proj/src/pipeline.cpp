#include "temvip/pipeline.hpp"

#include <algorithm>

namespace temvip {

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFinite:
    case ErrorCode::BadTreatmentCode:
    case ErrorCode::EmptyData:
    case ErrorCode::SurvivalGridViolation:
    case ErrorCode::AllColumnsDropped:
    case ErrorCode::DegenerateOutcome:
    case ErrorCode::NonPositiveTime:
    case ErrorCode::PositiveOutcomeRequired:
    case ErrorCode::MissingColumn:
    case ErrorCode::ParseError:
    case ErrorCode::NoCovariates:
    case ErrorCode::InvalidArgument:
    case ErrorCode::GridExceeded:
      return true;
    default:
      return false;
  }
}

namespace {

std::vector<LearnerSpec> with_family(std::vector<LearnerSpec> menu, Family family) {
  for (auto& s : menu) s.family = family;
  return menu;
}

void check_kind(const ObservedDataset& d, const EstimationConfig& cfg) {
  const auto fam = d.family();
  if (cfg.kind.survival()) {
    if (fam != OutcomeFamily::Survival)
      throw Error(ErrorCode::InvalidArgument, cfg.kind.name() + " needs a survival outcome (time and censor columns)");
    if (cfg.kind.horizon < 1 || cfg.kind.horizon > d.survival().t_max)
      throw Error(ErrorCode::GridExceeded, "horizon " + std::to_string(cfg.kind.horizon) +
                                               " is outside the time grid 1.." + std::to_string(d.survival().t_max));
    return;
  }
  if (fam == OutcomeFamily::Survival)
    throw Error(ErrorCode::InvalidArgument, cfg.kind.name() + " needs a continuous or binary outcome");
  if (cfg.kind.type == EstimandType::RelCont && fam == OutcomeFamily::Continuous && !(d.y().minCoeff() > 0.0))
    throw Error(ErrorCode::PositiveOutcomeRequired,
                "the relative estimand needs a strictly positive outcome; minimum is " +
                    std::to_string(d.y().minCoeff()));
}

OutcomeRegressionFit unit_scale_outcome(const OutcomeRegressionFit& q, double shift, double range) {
  auto map = [&](const Vector& v) {
    return Vector(((v.array() - shift) / range).max(kTmlOutcomeBound).min(1.0 - kTmlOutcomeBound));
  };
  OutcomeRegressionFit out = q;
  out.q_obs = map(q.q_obs);
  out.q1 = map(q.q1);
  out.q0 = map(q.q0);
  out.unit_interval = true;
  return out;
}

}  // namespace

EstimationOutput run_estimation(const ObservedDataset& raw, const EstimationConfig& cfg) {
  cfg.inference.check();
  if (cfg.supplied_propensity && cfg.supplied_propensity->values.size() != raw.treatment.size())
    throw Error(ErrorCode::InvalidArgument, "supplied propensity values do not match the data");
  EstimationOutput out;
  ObservedDataset valid = validate(raw);
  auto [data, report] = center_and_filter(valid, cfg.var_tol);
  out.data = std::move(data);
  out.report = std::move(report);
  const ObservedDataset& d = out.data;
  check_kind(d, cfg);
  Diagnostics& diag = out.diagnostics;

  CrossFitPlan plan;
  if (cfg.cross_fit_k >= 2) plan = CrossFitPlan::stratified(d.treatment, cfg.cross_fit_k, cfg.nuisance.seed ^ 0x5eedULL);

  if (cfg.supplied_propensity) {
    out.nuisances.propensity = *cfg.supplied_propensity;
  } else {
    const auto menu = cfg.propensity_menu.empty() ? default_propensity_menu()
                                                  : with_family(cfg.propensity_menu, Family::Logistic);
    out.nuisances.propensity = fit_propensity(d, menu, plan, cfg.known_propensity, cfg.nuisance, &diag);
  }

  const bool binary = d.family() == OutcomeFamily::Binary;
  if (cfg.kind.survival()) {
    const auto hz = cfg.hazard_menu.empty() ? default_hazard_menu() : with_family(cfg.hazard_menu, Family::Logistic);
    const auto cz = cfg.censoring_menu.empty() ? default_censoring_menu()
                                               : with_family(cfg.censoring_menu, Family::Logistic);
    out.nuisances.survival =
        fit_survival_nuisances(d, cfg.kind.horizon, hz, cz, plan, cfg.km_censoring, cfg.nuisance, &diag);
  } else if (cfg.supplied_outcome) {
    out.nuisances.outcome = *cfg.supplied_outcome;
  } else {
    const Family fam = binary ? Family::Logistic : Family::Linear;
    const auto menu = cfg.outcome_menu.empty() ? default_outcome_menu(fam) : with_family(cfg.outcome_menu, fam);
    out.nuisances.outcome = fit_outcome_regression(d, menu, plan, cfg.nuisance, &diag);
  }

  const double q_min = cfg.nuisance.q_min;
  for (EstimatorKind est : cfg.estimators) {
    EstimatorOutput eo;
    eo.estimator = est;
    if (est == EstimatorKind::OneStep) {
      eo.fit = onestep_estimate(d, cfg.kind, out.nuisances, q_min, &diag);
    } else if (cfg.kind.survival()) {
      eo.fit = tml_estimate_surv(d, cfg.kind, out.nuisances, cfg.inference, q_min, &diag);
    } else {
      const auto& q = *out.nuisances.outcome;
      const Vector& y = d.y();
      if (binary || q.unit_interval) {
        eo.fit = tml_estimate_cont(d.covariates, d.treatment, y, cfg.kind, out.nuisances.propensity, q, 1.0, cfg.inference,
                                   q_min, &diag);
      } else if (cfg.kind.type == EstimandType::AbsCont) {
        auto [y_unit, scale] = rescale_outcome_unit_interval(y);
        out.report.scale_info = scale;
        eo.fit = tml_estimate_cont(d.covariates, d.treatment, y_unit, cfg.kind, out.nuisances.propensity,
                                   unit_scale_outcome(q, scale.min, scale.range()), scale.range(), cfg.inference,
                                   q_min, &diag);
      } else {
        // Log ratios are invariant to y / max(y), so no back-transform is needed.
        const double ymax = y.maxCoeff();
        eo.fit = tml_estimate_cont(d.covariates, d.treatment, y / ymax, cfg.kind, out.nuisances.propensity,
                                   unit_scale_outcome(q, 0.0, ymax), 1.0, cfg.inference, q_min, &diag);
      }
    }
    eo.result = wald_inference(d.covariate_names, eo.fit.estimates, eo.fit.eif.sigma2, d.n(), cfg.inference, &diag);
    eo.result.estimator = est;
    eo.result.kind = cfg.kind;
    const auto flags = classify_tems(eo.result, cfg.fdr_level, cfg.effect_threshold);
    for (std::size_t j = 0; j < flags.size(); ++j) eo.result.rows[j].tem = flags[j];
    out.estimates.push_back(std::move(eo));
  }
  return out;
}

}  // namespace temvip
