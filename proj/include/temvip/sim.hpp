#ifndef TEMVIP_SIM_HPP
#define TEMVIP_SIM_HPP

#include "temvip/data.hpp"
#include "temvip/pipeline.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace temvip {

enum class ScenarioKind { ContObs, BinObs, TteRct };

std::string to_string(ScenarioKind k);
ScenarioKind parse_scenario(const std::string& name);

struct SimScenario {
  ScenarioKind kind = ScenarioKind::ContObs;
  std::size_t n = 125;
  std::uint64_t seed = 1;
  std::uint64_t replicate = 0;
  int p = 0;               // 0 = the scenario's default dimension (500, 100, 300)
  double block_rho = 0.5;  // within-block correlation for TteRct
  // TteRct only: censoring hazard expit(-(2 + A)), free of W and heavier than the
  // default, so arm-stratified Kaplan-Meier is a consistent censoring estimator.
  bool arm_only_censoring = false;

  int dimension() const;
  void check() const;
};

inline constexpr int kTteGridMax = 10;
inline constexpr int kTteHorizon = 9;

/// Deterministic in (kind, seed, replicate, n, p).
ObservedDataset generate(const SimScenario& s);

/// Covariance used by the generator (dense, p x p).
Matrix scenario_covariance(const SimScenario& s);

/// The generating nuisances evaluated on a dataset drawn from `s` (raw rows).
struct TrueNuisances {
  Vector g;
  Vector q1, q0;                              // ContObs, BinObs
  std::optional<SurvivalNuisanceFit> survival;  // TteRct, horizon kTteGridMax - 1
};

TrueNuisances true_nuisances(const SimScenario& s, const ObservedDataset& raw);

struct OracleTruth {
  Vector truth;
  Vector mc_se;                   // zero for closed-form truths
  std::vector<std::size_t> tems;  // 0-based covariate indices
  std::string provenance;
};

/// Estimand for each scenario: ContObs AbsCont, BinObs RelCont, TteRct AbsSurv at t = 9.
EstimandKind scenario_estimand(ScenarioKind k);

OracleTruth oracle_truth(const SimScenario& s, std::size_t draws);

struct TidyRow {
  std::string scenario;
  std::size_t n = 0;
  std::size_t rep = 0;
  std::string estimator;
  std::string covariate;
  double estimate = 0.0;
  double std_err = 0.0;
  double p_adj = 0.0;
  double truth = 0.0;
  bool tem = false;
};

struct MetricsRow {
  std::string scenario;
  std::size_t n = 0;
  std::string estimator;
  std::size_t reps = 0;
  std::size_t failures = 0;
  double bias_tem = 0.0;  // mean over TEM columns of |mean estimate - truth|
  double bias_nontem = 0.0;
  double var_tem = 0.0;   // mean over TEM columns of the empirical variance
  double var_nontem = 0.0;
  double se2_tem = 0.0;   // mean over TEM columns and replicates of std_err^2
  double fdr = 0.0;
  double tnr = 0.0;
  double tpr = 0.0;
};

struct ReplicateConfig {
  std::vector<ScenarioKind> scenarios{ScenarioKind::ContObs};
  std::vector<std::size_t> sample_sizes{125};
  std::vector<EstimatorKind> estimators{EstimatorKind::OneStep, EstimatorKind::Tml};
  std::size_t reps = 2;
  std::uint64_t seed = 1;
  int p = 0;
  double fdr_level = 0.05;
  std::size_t truth_draws = 200000;
  int threads = 0;  // 0 = OpenMP default
  EstimationConfig estimation;  // menus, settings; kind and propensity are set per scenario
};

struct ReplicateOutput {
  std::vector<TidyRow> tidy;
  std::vector<MetricsRow> metrics;
  std::vector<std::string> failures;  // "scenario n rep: message"
};

/// Classification rates for one replicate.
struct ClassificationRates {
  double fdr = 0.0;
  double tnr = 0.0;
  double tpr = 0.0;
};
ClassificationRates classification_rates(const std::vector<bool>& predicted, const std::vector<std::size_t>& tems);

ReplicateOutput run_replicates(const ReplicateConfig& cfg);

/// Metrics from tidy rows of one (scenario, n, estimator) cell.
MetricsRow aggregate_metrics(const std::vector<const TidyRow*>& rows, const OracleTruth& truth, std::size_t failures);

}  // namespace temvip

#endif  // TEMVIP_SIM_HPP
