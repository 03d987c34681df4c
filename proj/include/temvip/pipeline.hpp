#ifndef TEMVIP_PIPELINE_HPP
#define TEMVIP_PIPELINE_HPP

#include "temvip/data.hpp"
#include "temvip/eif.hpp"
#include "temvip/estimators.hpp"
#include "temvip/nuisance.hpp"

#include <optional>
#include <vector>

namespace temvip {

struct EstimationConfig {
  EstimandKind kind;
  std::vector<EstimatorKind> estimators{EstimatorKind::OneStep};
  InferenceConfig inference;
  NuisanceSettings nuisance;
  double var_tol = kDefaultVarTol;
  double fdr_level = 0.05;
  double effect_threshold = 0.0;
  int cross_fit_k = 0;  // 0 = no cross-fitting
  std::optional<double> known_propensity;
  bool km_censoring = false;

  // Empty menus fall back to the defaults; the learner family is set by the outcome type.
  std::vector<LearnerSpec> propensity_menu;
  std::vector<LearnerSpec> outcome_menu;
  std::vector<LearnerSpec> hazard_menu;
  std::vector<LearnerSpec> censoring_menu;

  // Nuisances evaluated outside the pipeline (row order of the input data).
  std::optional<PropensityFit> supplied_propensity;
  std::optional<OutcomeRegressionFit> supplied_outcome;
};

struct EstimatorOutput {
  EstimatorKind estimator = EstimatorKind::OneStep;
  EstimateResult fit;
  TemVipResult result;
};

struct EstimationOutput {
  ObservedDataset data;  // after preprocessing
  PreprocessReport report;
  NuisanceBundle nuisances;
  std::vector<EstimatorOutput> estimates;
  Diagnostics diagnostics;
};

/// Bound applied to the initial unit-scale outcome regression before TML.
inline constexpr double kTmlOutcomeBound = 1e-3;

/// validate -> center/filter -> nuisances -> estimators -> Wald/BH -> TEM labels.
/// Throws Error on validation or estimation failures; warnings land in `diagnostics`.
EstimationOutput run_estimation(const ObservedDataset& raw, const EstimationConfig& cfg);

/// Errors raised before any model is fitted (bad input, bad configuration).
bool is_validation_error(ErrorCode code);

}  // namespace temvip

#endif  // TEMVIP_PIPELINE_HPP
