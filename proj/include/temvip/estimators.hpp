#ifndef TEMVIP_ESTIMATORS_HPP
#define TEMVIP_ESTIMATORS_HPP

#include "temvip/eif.hpp"
#include "temvip/error.hpp"
#include "temvip/nuisance.hpp"

#include <string>
#include <vector>

namespace temvip {

enum class EstimatorKind { OneStep, Tml };

std::string to_string(EstimatorKind k);
EstimatorKind parse_estimator(const std::string& name);

struct InferenceConfig {
  double alpha = 0.05;
  double tilt_tol = 1e-4;
  int max_tilt_iter = 20;
  double null_threshold = 0.0;  // m in the test of |Theta_j| <= m
  bool keep_clever = false;     // retain clever covariate values in TiltState

  void check() const;
};

/// Fluctuation record for one covariate.
struct TiltState {
  double epsilon = 0.0;        // last fitted fluctuation coefficient
  double total_epsilon = 0.0;  // sum over iterations
  int iterations = 0;          // number of fitted tilts
  bool converged = false;
  double score_ratio = 0.0;    // |P_n D_j| / sigma_j at the returned fit
  Matrix clever;               // H at the observed arm: n x 1, or n x t for survival (if kept)
};

struct EstimateResult {
  Vector estimates;
  EifMatrix eif;                 // at the returned estimates
  std::vector<TiltState> tilts;  // TML only
  Vector uncentered;             // d_i (one-step only)
};

/// Theta_j = sum_i W_ij d_i / sum_i W_ij^2 with the EIF matrix at that solution.
EstimateResult onestep_estimate(const ObservedDataset& d, EstimandKind kind, const NuisanceBundle& nuisances,
                                double q_min, Diagnostics* diag);

/// Continuous-outcome TML. `y_unit` and `q_unit` live on the unit interval;
/// AbsCont estimates and EIF values are multiplied by `scale` on return.
EstimateResult tml_estimate_cont(const Matrix& W, const Vector& treatment, const Vector& y_unit, EstimandKind kind,
                                 const PropensityFit& g, const OutcomeRegressionFit& q_unit, double scale,
                                 const InferenceConfig& cfg, double q_min, Diagnostics* diag);

/// Survival TML by iterative hazard tilting.
EstimateResult tml_estimate_surv(const ObservedDataset& d, EstimandKind kind, const NuisanceBundle& nuisances,
                                 const InferenceConfig& cfg, double q_min, Diagnostics* diag);

/// MLE of eps in logit p = offset + eps * h, by Newton with step halving.
/// Throws TiltDiverged when the fit fails.
double fit_fluctuation(const Vector& offset, const Vector& h, const Vector& y, int max_iter = 50);

struct TemVipRow {
  std::string covariate;
  double estimate = 0.0;
  double std_err = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  double p_value = 0.0;  // NaN when the variance is degenerate
  double p_adj = 0.0;
  bool tem = false;
  bool degenerate = false;
};

struct TemVipResult {
  EstimatorKind estimator = EstimatorKind::OneStep;
  EstimandKind kind;
  std::vector<TemVipRow> rows;
};

double normal_cdf(double x);
double normal_quantile(double p);

/// NaN entries are left out of the family and stay NaN.
Vector benjamini_hochberg(const Vector& p);

TemVipResult wald_inference(const std::vector<std::string>& names, const Vector& estimates, const Vector& sigma2,
                            std::size_t n, const InferenceConfig& cfg, Diagnostics* diag);

std::vector<bool> classify_tems(const TemVipResult& result, double fdr_level, double effect_threshold);

}  // namespace temvip

#endif  // TEMVIP_ESTIMATORS_HPP
