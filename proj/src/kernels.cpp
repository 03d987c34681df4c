#include "temvip/kernels.hpp"

#include "temvip/eif.hpp"
#include "temvip/nuisance.hpp"

#include <omp.h>

namespace temvip {

SurvivalRowView survival_row(const SurvivalNuisanceFit& fit, int a, int t_tilde, int delta, double g, Eigen::Index i) {
  SurvivalRowView v;
  v.a = a;
  v.t_tilde = t_tilde;
  v.delta = delta;
  v.g = g;
  for (std::size_t arm = 0; arm < 2; ++arm) {
    v.hazard[arm] = GridSeries::row(fit.hazard[arm], i);
    v.survival[arm] = GridSeries::row(fit.survival[arm], i);
    v.censoring[arm] = GridSeries::row(fit.censoring[arm], i);
  }
  return v;
}

namespace {

double project_column(const Matrix& W, const Vector& d, Eigen::Index j) {
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    const double w = W(i, j);
    num += w * d[i];
    den += w * w;
  }
  return num / den;
}

void assemble_column(const Matrix& W, const Vector& d, const Vector& theta, EifMatrix& out, Eigen::Index j) {
  const Eigen::Index n = W.rows();
  double ss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) ss += W(i, j) * W(i, j);
  const double ew2 = ss / static_cast<double>(n);
  double sum = 0.0, sum2 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = W(i, j);
    const double v = w / ew2 * (d[i] - w * theta[j]);
    out.values(i, j) = v;
    sum += v;
    sum2 += v * v;
  }
  out.means[j] = sum / static_cast<double>(n);
  out.sigma2[j] = sum2 / static_cast<double>(n);
}

void prepare(const Matrix& W, EifMatrix& out) {
  out.values.resize(W.rows(), W.cols());
  out.means.resize(W.cols());
  out.sigma2.resize(W.cols());
}

double survival_value(const SurvivalNuisanceFit& fit, const Vector& treatment, const SurvivalOutcome& s,
                      const Vector& g, int t, bool relative, double q_min, Eigen::Index i, long& hits) {
  const auto ui = static_cast<std::size_t>(i);
  const SurvivalRowView row =
      survival_row(fit, treatment[i] > 0.5 ? 1 : 0, s.t_tilde[ui], s.delta[ui], g[i], i);
  return relative ? eif_rel_surv_row(row, t, q_min, hits) : eif_abs_surv_row(row, t);
}

}  // namespace

namespace kernels {

namespace serial {

Vector project(const Matrix& W, const Vector& d) {
  Vector theta(W.cols());
  for (Eigen::Index j = 0; j < W.cols(); ++j) theta[j] = project_column(W, d, j);
  return theta;
}

void assemble(const Matrix& W, const Vector& d, const Vector& theta, EifMatrix& out) {
  prepare(W, out);
  for (Eigen::Index j = 0; j < W.cols(); ++j) assemble_column(W, d, theta, out, j);
}

Vector survival_eif(const SurvivalNuisanceFit& fit, const Vector& treatment, const SurvivalOutcome& s,
                    const Vector& g, int t, bool relative, double q_min, long& floor_hits) {
  Vector out(treatment.size());
  for (Eigen::Index i = 0; i < treatment.size(); ++i)
    out[i] = survival_value(fit, treatment, s, g, t, relative, q_min, i, floor_hits);
  return out;
}

}  // namespace serial

namespace parallel {

// Nested regions (e.g. inside a parallel replicate loop) run serially.

Vector project(const Matrix& W, const Vector& d) {
  Vector theta(W.cols());
  const Eigen::Index p = W.cols();
#pragma omp parallel for schedule(static) if (!omp_in_parallel())
  for (Eigen::Index j = 0; j < p; ++j) theta[j] = project_column(W, d, j);
  return theta;
}

void assemble(const Matrix& W, const Vector& d, const Vector& theta, EifMatrix& out) {
  prepare(W, out);
  const Eigen::Index p = W.cols();
#pragma omp parallel for schedule(static) if (!omp_in_parallel())
  for (Eigen::Index j = 0; j < p; ++j) assemble_column(W, d, theta, out, j);
}

Vector survival_eif(const SurvivalNuisanceFit& fit, const Vector& treatment, const SurvivalOutcome& s,
                    const Vector& g, int t, bool relative, double q_min, long& floor_hits) {
  const Eigen::Index n = treatment.size();
  Vector out(n);
  long hits = 0;
#pragma omp parallel for schedule(static) reduction(+ : hits) if (!omp_in_parallel())
  for (Eigen::Index i = 0; i < n; ++i) out[i] = survival_value(fit, treatment, s, g, t, relative, q_min, i, hits);
  floor_hits += hits;
  return out;
}

}  // namespace parallel

}  // namespace kernels

}  // namespace temvip
