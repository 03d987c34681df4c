#ifndef TEMVIP_DATA_HPP
#define TEMVIP_DATA_HPP

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace temvip {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ContinuousOutcome {
  Vector y;
};

struct BinaryOutcome {
  Vector y;  // entries in {0, 1}
};

/// Right-censored time-to-event outcome on an integer grid 1..t_max.
///
/// NOTE: `delta` is the *censoring* indicator, delta = I(T > C). A value of 1
/// marks a censored row; the event indicator is 1 - delta. This is the
/// opposite of the usual status coding.
struct SurvivalOutcome {
  std::vector<int> t_tilde;
  std::vector<int> delta;
  int t_max = 0;
};

using OutcomePayload = std::variant<ContinuousOutcome, BinaryOutcome, SurvivalOutcome>;

enum class OutcomeFamily { Continuous, Binary, Survival };

struct ObservedDataset {
  Matrix covariates;  // n x p, column-major
  Vector treatment;   // n, entries in {0, 1}
  OutcomePayload outcome;
  std::vector<std::string> covariate_names;

  std::size_t n() const { return static_cast<std::size_t>(covariates.rows()); }
  std::size_t p() const { return static_cast<std::size_t>(covariates.cols()); }
  OutcomeFamily family() const;
  const SurvivalOutcome& survival() const { return std::get<SurvivalOutcome>(outcome); }
  /// Continuous or binary outcome vector.
  const Vector& y() const;
};

struct TimeGrid {
  int t_max = 0;
  int horizon = 0;

  bool contains(int t) const { return t >= 1 && t <= t_max; }
};

struct ScaleInfo {
  double min = 0.0;
  double max = 1.0;
  double range() const { return max - min; }
};

struct PreprocessReport {
  std::vector<std::string> dropped_columns;
  std::vector<double> centers;  // original means of every input column
  std::optional<ScaleInfo> scale_info;
};

/// Returns `raw` unchanged when every invariant holds, throws Error otherwise.
ObservedDataset validate(ObservedDataset raw);

inline constexpr double kDefaultVarTol = 1e-12;

/// Centers each covariate and drops columns whose sample variance is <= var_tol.
/// Row order and the relative order of retained columns are preserved.
std::pair<ObservedDataset, PreprocessReport> center_and_filter(const ObservedDataset& d,
                                                               double var_tol = kDefaultVarTol);

/// Affine map onto [0, 1]; the inverse is y = min + y' * (max - min).
std::pair<Vector, ScaleInfo> rescale_outcome_unit_interval(const Vector& y);

/// Bin k holds times in ((k-1) w, k w]; the grid spans 1..ceil(max / w).
std::pair<std::vector<int>, TimeGrid> discretize_times(std::span<const double> raw_times,
                                                       double bin_width);

}  // namespace temvip

#endif  // TEMVIP_DATA_HPP
