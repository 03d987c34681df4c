#ifndef TEMVIP_EIF_HPP
#define TEMVIP_EIF_HPP

#include "temvip/data.hpp"
#include "temvip/error.hpp"
#include "temvip/kernels.hpp"
#include "temvip/nuisance.hpp"

#include <string>

namespace temvip {

enum class EstimandType { AbsCont, RelCont, AbsSurv, RelSurv };

struct EstimandKind {
  EstimandType type = EstimandType::AbsCont;
  int horizon = 0;  // survival kinds only

  static EstimandKind abs_cont() { return {EstimandType::AbsCont, 0}; }
  static EstimandKind rel_cont() { return {EstimandType::RelCont, 0}; }
  static EstimandKind abs_surv(int t) { return {EstimandType::AbsSurv, t}; }
  static EstimandKind rel_surv(int t) { return {EstimandType::RelSurv, t}; }

  bool survival() const { return type == EstimandType::AbsSurv || type == EstimandType::RelSurv; }
  bool relative() const { return type == EstimandType::RelCont || type == EstimandType::RelSurv; }
  std::string name() const;
  static EstimandKind parse(const std::string& name, int horizon);
};

/// Treatment-arm probability P(A = a | W) from g = P(A = 1 | W).
inline double arm_probability(int a, double g) { return a == 1 ? g : 1.0 - g; }

double eif_abs_cont_row(int a, double y, double g, double q1, double q0);

/// `q1`, `q0` must already be floored.
double eif_rel_cont_row(int a, double y, double g, double q1, double q0);

/// sum_{u=1..t} d(O; u, arm).
double eif_abs_surv_arm(const SurvivalRowView& row, int arm, int t);
double eif_abs_surv_row(const SurvivalRowView& row, int t);

/// Floors S(.|a) at q_min inside the log ratio and the martingale denominators;
/// increments `floor_hits` for every floored value.
double eif_rel_surv_row(const SurvivalRowView& row, int t, double q_min, long& floor_hits);

/// R(v) = sum_{u=v..t} S(u)/S(v), built backwards from the hazard so no
/// division by a small survival probability is needed. Fills r[v-1], v = 1..t.
void survival_ratio_sums(const GridSeries& hazard, int t, double* r);

/// Uncentered EIF d_i of the base effect for every observation.
Vector uncentered_eif(const ObservedDataset& d, EstimandKind kind, const NuisanceBundle& nuisances,
                      double q_min, Diagnostics* diag);

/// sum_k W_kj^2 / n per column.
Vector second_moments(const Matrix& W);

/// Entry (i, j) = W_ij / (sum_k W_kj^2 / n) * (d_i - W_ij theta_j).
EifMatrix assemble_eif_matrix(const Matrix& W, const Vector& d, const Vector& theta);

}  // namespace temvip

#endif  // TEMVIP_EIF_HPP
