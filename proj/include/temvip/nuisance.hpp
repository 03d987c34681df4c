#ifndef TEMVIP_NUISANCE_HPP
#define TEMVIP_NUISANCE_HPP

#include "temvip/data.hpp"
#include "temvip/error.hpp"
#include "temvip/learners.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace temvip {

/// Out-of-fold evaluation plan. `k == 0` disables cross-fitting.
struct CrossFitPlan {
  int k = 0;
  std::vector<int> fold;  // per subject, 0..k-1

  bool active() const { return k >= 2; }

  /// Folds stratified by treatment arm; every fold holds both arms when each
  /// arm has at least k members.
  static CrossFitPlan stratified(const Vector& treatment, int k, std::uint64_t seed);
  static CrossFitPlan off() { return {}; }
};

struct NuisanceSettings {
  double truncation = 0.01;      // propensity bound delta
  double q_min = 1e-3;           // floor for relative-estimand denominators
  double censoring_floor = 0.01; // epsilon_c
  int cv_folds = 5;              // V for the discrete selector
  std::uint64_t seed = 20240611;
};

/// Per-row propensity values plus the fitted models, so new rows can be scored.
struct PropensityFit {
  Vector values;  // g_n(W_i), already truncated into [delta, 1 - delta]
  double truncation = 0.01;
  std::string provenance;  // learner id or "known"
  std::optional<double> known;
  std::vector<SelectedFit> models;  // one per cross-fitting fold, or a single full-data fit

  /// Averages the fold models' predictions; truncated like `values`.
  Vector evaluate(const Matrix& W) const;

  static PropensityFit from_values(Vector g, double truncation = 0.01);
};

struct OutcomeRegressionFit {
  Vector q_obs;  // Qbar_n(A_i, W_i)
  Vector q1;     // Qbar_n(1, W_i)
  Vector q0;     // Qbar_n(0, W_i)
  Family family = Family::Linear;
  bool unit_interval = false;  // values confined to (0, 1)
  std::string provenance;
  std::vector<SelectedFit> models;

  Vector evaluate(double a, const Matrix& W) const;

  static OutcomeRegressionFit from_values(Vector q1, Vector q0, const Vector& treatment,
                                          bool unit_interval = false);
};

/// Discrete-time hazards on the grid 1..horizon, stored per arm as n x horizon
/// matrices: column u-1 holds the value at grid time u.
struct SurvivalNuisanceFit {
  int horizon = 0;
  std::array<Matrix, 2> hazard;     // lambda_n(u | a, W_i)
  std::array<Matrix, 2> survival;   // S_n(u | a, W_i) = prod_{v<=u} (1 - lambda)
  std::array<Matrix, 2> censoring;  // c_n(u | a, W_i), floored at epsilon_c
  std::string hazard_provenance;
  std::string censoring_provenance;

  /// c_n(u- | a, W_i) = c_n(u - 1), with c_n(0) = 1.
  double censoring_before(int a, Eigen::Index i, int u) const {
    return u <= 1 ? 1.0 : censoring[static_cast<std::size_t>(a)](i, u - 2);
  }

  /// Rebuilds `survival` from `hazard`.
  void recompute_survival();

  static SurvivalNuisanceFit from_hazards(Matrix hazard1, Matrix hazard0, Matrix cens1, Matrix cens0);
};

/// All nuisances an estimand may need. Unused members stay empty.
struct NuisanceBundle {
  PropensityFit propensity;
  std::optional<OutcomeRegressionFit> outcome;
  std::optional<SurvivalNuisanceFit> survival;
};

std::vector<LearnerSpec> default_propensity_menu();
std::vector<LearnerSpec> default_outcome_menu(Family family);
std::vector<LearnerSpec> default_hazard_menu();
std::vector<LearnerSpec> default_censoring_menu();

/// Outcome design: columns A, W, and A x W when the spec asks for interactions.
Design outcome_design(const Matrix& W, const Vector& a, const LearnerSpec& spec,
                      std::span<const std::size_t> rows);

PropensityFit fit_propensity(const ObservedDataset& d, std::span<const LearnerSpec> menu,
                             const CrossFitPlan& plan, std::optional<double> known,
                             const NuisanceSettings& settings, Diagnostics* diag);

/// `y_override` replaces the dataset's outcome (e.g. a rescaled version); the
/// family decides between squared-error and logistic fitting.
OutcomeRegressionFit fit_outcome_regression(const ObservedDataset& d, std::span<const LearnerSpec> menu,
                                            const CrossFitPlan& plan, const NuisanceSettings& settings,
                                            Diagnostics* diag, const Vector* y_override = nullptr);

/// One row per subject and grid time u <= min(T~_i, horizon).
struct LongFormat {
  std::vector<std::size_t> subject;
  std::vector<int> time;
  Vector event;      // (1 - Delta) I(T~ = u)
  Vector censored;   // Delta I(T~ = u)
  std::vector<char> at_risk_censoring;  // false on an event row: events precede censoring
};

LongFormat expand_long(const SurvivalOutcome& s, int horizon);

/// Kaplan-Meier censoring survival per arm, c(u) for u = 1..horizon.
std::array<Vector, 2> km_censoring(const SurvivalOutcome& s, const Vector& treatment, int horizon);

SurvivalNuisanceFit fit_survival_nuisances(const ObservedDataset& d, int horizon,
                                           std::span<const LearnerSpec> hazard_menu,
                                           std::span<const LearnerSpec> censoring_menu,
                                           const CrossFitPlan& plan, bool use_km_censoring,
                                           const NuisanceSettings& settings, Diagnostics* diag);

}  // namespace temvip

#endif  // TEMVIP_NUISANCE_HPP
