#include "temvip/estimators.hpp"

namespace temvip {

std::string to_string(EstimatorKind k) { return k == EstimatorKind::OneStep ? "onestep" : "tml"; }

EstimatorKind parse_estimator(const std::string& name) {
  if (name == "onestep" || name == "one-step") return EstimatorKind::OneStep;
  if (name == "tml" || name == "tmle") return EstimatorKind::Tml;
  throw Error(ErrorCode::InvalidArgument, "unknown estimator '" + name + "' (expected onestep or tml)");
}

void InferenceConfig::check() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  if (!(null_threshold >= 0.0)) throw Error(ErrorCode::InvalidArgument, "null threshold m must be >= 0");
  if (!(tilt_tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tilt_tol must be > 0");
  if (max_tilt_iter < 1) throw Error(ErrorCode::InvalidArgument, "max_tilt_iter must be >= 1");
}

EstimateResult onestep_estimate(const ObservedDataset& d, EstimandKind kind, const NuisanceBundle& nuisances,
                                double q_min, Diagnostics* diag) {
  EstimateResult out;
  out.uncentered = uncentered_eif(d, kind, nuisances, q_min, diag);
  out.estimates = kernels::parallel::project(d.covariates, out.uncentered);
  out.eif = assemble_eif_matrix(d.covariates, out.uncentered, out.estimates);
  return out;
}

}  // namespace temvip
