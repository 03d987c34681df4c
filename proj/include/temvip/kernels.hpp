#ifndef TEMVIP_KERNELS_HPP
#define TEMVIP_KERNELS_HPP

#include "temvip/data.hpp"

#include <array>
#include <cstddef>

namespace temvip {

struct SurvivalNuisanceFit;

/// D_j(O_i) values with their column summaries.
struct EifMatrix {
  Matrix values;  // n x p
  Vector sigma2;  // mean of D_j^2
  Vector means;   // mean of D_j
};

/// Values on the grid 1..H read with a stride, so a row of a column-major
/// n x H matrix and a plain array share one accessor.
struct GridSeries {
  const double* data = nullptr;
  std::ptrdiff_t stride = 1;

  double operator()(int u) const { return data[(u - 1) * stride]; }

  static GridSeries row(const Matrix& m, Eigen::Index i) { return {m.data() + i, m.rows()}; }
};

/// One subject's survival data and nuisances. `g` is P(A = 1 | W).
struct SurvivalRowView {
  int a = 0;
  int t_tilde = 1;
  int delta = 0;  // 1 = censored
  double g = 0.5;
  std::array<GridSeries, 2> hazard;
  std::array<GridSeries, 2> survival;
  std::array<GridSeries, 2> censoring;  // c(u), u >= 1; c(0) = 1 implied
};

SurvivalRowView survival_row(const SurvivalNuisanceFit& fit, int a, int t_tilde, int delta, double g,
                             Eigen::Index i);

/// The kernels come in two builds: `serial` is the reference and `parallel`
/// splits the same per-column (or per-row) loops across OpenMP threads. Each
/// column or row is computed by identical code, so results agree bit for bit.
namespace kernels {

namespace serial {
Vector project(const Matrix& W, const Vector& d);
void assemble(const Matrix& W, const Vector& d, const Vector& theta, EifMatrix& out);
/// Uncentered survival EIF per subject. Returns the number of q_min floor hits
/// (relative kind only) through `floor_hits`.
Vector survival_eif(const SurvivalNuisanceFit& fit, const Vector& treatment, const SurvivalOutcome& s,
                    const Vector& g, int t, bool relative, double q_min, long& floor_hits);
}  // namespace serial

namespace parallel {
Vector project(const Matrix& W, const Vector& d);
void assemble(const Matrix& W, const Vector& d, const Vector& theta, EifMatrix& out);
Vector survival_eif(const SurvivalNuisanceFit& fit, const Vector& treatment, const SurvivalOutcome& s,
                    const Vector& g, int t, bool relative, double q_min, long& floor_hits);
}  // namespace parallel

}  // namespace kernels

}  // namespace temvip

#endif  // TEMVIP_KERNELS_HPP
