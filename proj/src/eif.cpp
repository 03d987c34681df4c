#include "temvip/eif.hpp"

#include <algorithm>
#include <cmath>

namespace temvip {

std::string EstimandKind::name() const {
  switch (type) {
    case EstimandType::AbsCont: return "abs-cont";
    case EstimandType::RelCont: return "rel-cont";
    case EstimandType::AbsSurv: return "abs-surv";
    case EstimandType::RelSurv: return "rel-surv";
  }
  return "unknown";
}

EstimandKind EstimandKind::parse(const std::string& name, int horizon) {
  if (name == "abs-cont") return abs_cont();
  if (name == "rel-cont") return rel_cont();
  if (name == "abs-surv") return abs_surv(horizon);
  if (name == "rel-surv") return rel_surv(horizon);
  throw Error(ErrorCode::InvalidArgument,
              "unknown estimand '" + name + "' (expected abs-cont, rel-cont, abs-surv or rel-surv)");
}

double eif_abs_cont_row(int a, double y, double g, double q1, double q0) {
  const double qa = a == 1 ? q1 : q0;
  return (2.0 * a - 1.0) / arm_probability(a, g) * (y - qa) + q1 - q0;
}

double eif_rel_cont_row(int a, double y, double g, double q1, double q0) {
  const double qa = a == 1 ? q1 : q0;
  return (2.0 * a - 1.0) / arm_probability(a, g) * (y - qa) / qa + std::log(q1) - std::log(q0);
}

void survival_ratio_sums(const GridSeries& hazard, int t, double* r) {
  r[t - 1] = 1.0;
  for (int v = t - 1; v >= 1; --v) r[v - 1] = 1.0 + (1.0 - hazard(v + 1)) * r[v];
}

double eif_abs_surv_arm(const SurvivalRowView& row, int arm, int t) {
  const auto a = static_cast<std::size_t>(arm);
  double sum_s = 0.0;
  for (int u = 1; u <= t; ++u) sum_s += row.survival[a](u);
  if (row.a != arm) return sum_s;

  double r_small[64];
  std::vector<double> r_big;
  double* r = r_small;
  if (t > 64) {
    r_big.resize(static_cast<std::size_t>(t));
    r = r_big.data();
  }
  survival_ratio_sums(row.hazard[a], t, r);
  const int last = std::min(t, row.t_tilde);
  double m = 0.0;
  for (int v = 1; v <= last; ++v) {
    const double dn = (row.delta == 0 && row.t_tilde == v) ? 1.0 : 0.0;
    const double c_prev = v == 1 ? 1.0 : row.censoring[a](v - 1);
    m += (dn - row.hazard[a](v)) / c_prev * r[v - 1];
  }
  return sum_s - m / arm_probability(arm, row.g);
}

double eif_abs_surv_row(const SurvivalRowView& row, int t) {
  return eif_abs_surv_arm(row, 1, t) - eif_abs_surv_arm(row, 0, t);
}

double eif_rel_surv_row(const SurvivalRowView& row, int t, double q_min, long& floor_hits) {
  auto floored = [&](double s) {
    if (s < q_min) {
      ++floor_hits;
      return q_min;
    }
    return s;
  };
  const auto a = static_cast<std::size_t>(row.a);
  const int last = std::min(t, row.t_tilde);
  double m = 0.0;
  for (int v = 1; v <= last; ++v) {
    const double dn = (row.delta == 0 && row.t_tilde == v) ? 1.0 : 0.0;
    const double c_prev = v == 1 ? 1.0 : row.censoring[a](v - 1);
    m += (dn - row.hazard[a](v)) / (c_prev * floored(row.survival[a](v)));
  }
  const double sign = 2.0 * row.a - 1.0;
  return -sign / arm_probability(row.a, row.g) * m + std::log(floored(row.survival[1](t))) -
         std::log(floored(row.survival[0](t)));
}

Vector uncentered_eif(const ObservedDataset& d, EstimandKind kind, const NuisanceBundle& nuisances, double q_min,
                      Diagnostics* diag) {
  const auto n = static_cast<Eigen::Index>(d.n());
  const Vector& g = nuisances.propensity.values;
  if (g.size() != n) throw Error(ErrorCode::InvalidArgument, "propensity values do not match the data");
  Vector out(n);

  if (!kind.survival()) {
    if (d.family() == OutcomeFamily::Survival)
      throw Error(ErrorCode::InvalidArgument, kind.name() + " needs a continuous or binary outcome");
    if (!nuisances.outcome) throw Error(ErrorCode::InvalidArgument, "outcome regression missing");
    const auto& q = *nuisances.outcome;
    const Vector& y = d.y();
    if (kind.type == EstimandType::AbsCont) {
      for (Eigen::Index i = 0; i < n; ++i)
        out[i] = eif_abs_cont_row(d.treatment[i] > 0.5 ? 1 : 0, y[i], g[i], q.q1[i], q.q0[i]);
      return out;
    }
    long hits = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double q1 = q.q1[i], q0 = q.q0[i];
      if (q1 < q_min) q1 = q_min, ++hits;
      if (q0 < q_min) q0 = q_min, ++hits;
      out[i] = eif_rel_cont_row(d.treatment[i] > 0.5 ? 1 : 0, y[i], g[i], q1, q0);
    }
    if (hits > 0 && diag)
      diag->warn(WarningCode::FloorApplied,
                 std::to_string(hits) + " outcome-regression values floored at q_min=" + std::to_string(q_min));
    return out;
  }

  if (d.family() != OutcomeFamily::Survival)
    throw Error(ErrorCode::InvalidArgument, kind.name() + " needs a survival outcome");
  if (!nuisances.survival) throw Error(ErrorCode::InvalidArgument, "survival nuisances missing");
  const auto& fit = *nuisances.survival;
  if (kind.horizon < 1 || kind.horizon > fit.horizon || kind.horizon > d.survival().t_max)
    throw Error(ErrorCode::GridExceeded, "horizon " + std::to_string(kind.horizon) +
                                             " exceeds the fitted grid 1.." + std::to_string(fit.horizon));
  long hits = 0;
  out = kernels::parallel::survival_eif(fit, d.treatment, d.survival(), g, kind.horizon,
                                        kind.type == EstimandType::RelSurv, q_min, hits);
  if (hits > 0 && diag)
    diag->warn(WarningCode::FloorApplied,
               std::to_string(hits) + " survival values floored at q_min=" + std::to_string(q_min));
  return out;
}

Vector second_moments(const Matrix& W) {
  return W.colwise().squaredNorm().transpose() / static_cast<double>(W.rows());
}

EifMatrix assemble_eif_matrix(const Matrix& W, const Vector& d, const Vector& theta) {
  if (d.size() != W.rows() || theta.size() != W.cols())
    throw Error(ErrorCode::InvalidArgument, "EIF assembly inputs have mismatched shapes");
  EifMatrix out;
  kernels::parallel::assemble(W, d, theta, out);
  return out;
}

}  // namespace temvip
