#ifndef TEMVIP_LEARNERS_HPP
#define TEMVIP_LEARNERS_HPP

#include "temvip/data.hpp"
#include "temvip/error.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace temvip {

enum class Family { Linear, Logistic };

enum class PenaltyKind { None, L1, L2, ElasticNet };

struct Penalty {
  PenaltyKind kind = PenaltyKind::None;
  double lambda = 0.0;
  double alpha = 1.0;  // only read for ElasticNet

  /// Mixing weight actually applied: 1 for L1, 0 for L2, alpha for elastic net.
  double mixing() const;
  double strength() const { return kind == PenaltyKind::None ? 0.0 : lambda; }
};

/// One candidate in a learner menu.
struct LearnerSpec {
  Family family = Family::Linear;
  Penalty penalty;
  bool interactions = false;     // add A x W columns (outcome and hazard models)
  bool intercept_only = false;   // ignore every covariate
  bool relative_lambda = false;  // lambda is a fraction of the data's lambda_max
  int max_iter = 1000;
  double tol = 1e-7;

  std::string id() const;
  void check() const;
};

struct GlmFit;

/// Optional knobs for the penalized solvers.
struct FitControls {
  std::span<const double> weights;         // observation weights, default 1
  std::span<const double> penalty_factor;  // per-column multipliers, default 1
  bool intercept = true;                   // unpenalized intercept
  const GlmFit* warm_start = nullptr;  // initial iterate (same columns)
};

struct GlmFit {
  double intercept = 0.0;
  Vector beta;
  double lambda = 0.0;  // absolute lambda used
  int iterations = 0;
  bool converged = false;
  bool separation = false;
};

inline constexpr double kSeparationBound = 30.0;

/// Elastic net by cyclic coordinate descent:
///   (1/2n) sum w_i (y_i - b0 - x_i b)^2 + lambda [alpha |b|_1 + (1-alpha)/2 |b|_2^2].
/// NoConvergence is reported through `diag`; the last iterate is returned.
GlmFit fit_linear_penalized(const Matrix& X, const Vector& y, const LearnerSpec& spec,
                            const FitControls& controls = {}, Diagnostics* diag = nullptr);

/// Penalized Bernoulli negative log-likelihood by IRLS with inner coordinate descent.
/// `y` may be fractional in [0, 1] (quasi-binomial). Throws OneClassOnly when y is constant.
GlmFit fit_logistic_penalized(const Matrix& X, const Vector& y, const LearnerSpec& spec,
                              const FitControls& controls = {}, Diagnostics* diag = nullptr);

GlmFit fit_penalized(const Matrix& X, const Vector& y, const LearnerSpec& spec,
                     const FitControls& controls = {}, Diagnostics* diag = nullptr);

/// Smallest lambda that zeroes every penalized coefficient (alpha floored at 1e-3).
double lambda_max(const Matrix& X, const Vector& y, Family family, double alpha,
                  const FitControls& controls = {});

Vector linear_predictor(const GlmFit& fit, const Matrix& X);
Vector predict(const GlmFit& fit, const Matrix& X, Family family);

double expit(double x);
double logit(double p);

/// Held-out loss summed over rows: squared error or Bernoulli deviance / 2.
double heldout_loss(Family family, const Vector& y, const Vector& prediction);

/// Fold labels 0..k-1. With `strata`, each stratum is dealt round-robin after a
/// seeded shuffle so every fold sees every stratum.
std::vector<int> make_folds(std::size_t n, int k, std::uint64_t seed,
                            std::span<const double> strata = {});

/// argmin over specs of the mean held-out loss across folds; ties go to the lower index.
std::size_t cv_select(std::size_t menu_size, int n_folds,
                      const std::function<double(std::size_t spec, int fold)>& loss);

/// Result of choosing one spec from a menu by V-fold cross-validation and
/// refitting it on all supplied rows.
struct SelectedFit {
  std::size_t spec_index = 0;
  LearnerSpec spec;
  GlmFit fit;
  std::vector<double> cv_risk;  // mean held-out loss per spec (NaN if the spec failed)
};

struct Design {
  Matrix X;
  std::vector<double> penalty_factor;  // empty = all ones
  bool intercept = true;
};

/// Builds the design for a spec restricted to `rows`.
using DesignBuilder = std::function<Design(const LearnerSpec&, std::span<const std::size_t> rows)>;

/// CV-selects a spec over `rows` (fold labels aligned with `rows`) and refits it
/// on all of `rows`. Specs that throw are skipped; AllLearnersFailed if none fit.
SelectedFit select_and_fit(const DesignBuilder& design_for, const Vector& y,
                           std::span<const std::size_t> rows, std::span<const LearnerSpec> menu,
                           std::span<const int> cv_folds, int n_cv_folds, Diagnostics* diag);

}  // namespace temvip

#endif  // TEMVIP_LEARNERS_HPP
