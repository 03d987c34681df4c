#include "temvip/estimators.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace temvip {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::InvalidArgument, "normal quantile needs p in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

Vector benjamini_hochberg(const Vector& p) {
  Vector out = Vector::Constant(p.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<Eigen::Index> order;
  for (Eigen::Index i = 0; i < p.size(); ++i)
    if (!std::isnan(p[i])) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return p[a] < p[b]; });
  const auto m = static_cast<double>(order.size());
  double running = 1.0;
  for (std::size_t k = order.size(); k-- > 0;) {
    const double rank = static_cast<double>(k + 1);
    running = std::min(running, std::min(1.0, m * p[order[k]] / rank));
    out[order[k]] = running;
  }
  return out;
}

TemVipResult wald_inference(const std::vector<std::string>& names, const Vector& estimates, const Vector& sigma2,
                            std::size_t n, const InferenceConfig& cfg, Diagnostics* diag) {
  cfg.check();
  if (static_cast<std::size_t>(estimates.size()) != names.size() || sigma2.size() != estimates.size())
    throw Error(ErrorCode::InvalidArgument, "inference inputs have mismatched lengths");
  const double z = normal_quantile(1.0 - cfg.alpha / 2.0);
  TemVipResult res;
  Vector pvals(estimates.size());
  for (Eigen::Index j = 0; j < estimates.size(); ++j) {
    TemVipRow row;
    row.covariate = names[static_cast<std::size_t>(j)];
    row.estimate = estimates[j];
    row.std_err = std::sqrt(std::max(sigma2[j], 0.0) / static_cast<double>(n));
    row.ci_lower = row.estimate - z * row.std_err;
    row.ci_upper = row.estimate + z * row.std_err;
    if (!(row.std_err > 0.0)) {
      row.degenerate = true;
      row.p_value = std::numeric_limits<double>::quiet_NaN();
      if (diag)
        diag->warn(WarningCode::DegenerateVariance,
                   "covariate '" + row.covariate + "' has zero EIF variance; p-value undefined");
    } else {
      const double stat = (std::abs(row.estimate) - cfg.null_threshold) / row.std_err;
      row.p_value = std::min(1.0, 2.0 * normal_cdf(-stat));
    }
    pvals[j] = row.p_value;
    res.rows.push_back(std::move(row));
  }
  const Vector adj = benjamini_hochberg(pvals);
  for (std::size_t j = 0; j < res.rows.size(); ++j) res.rows[j].p_adj = adj[static_cast<Eigen::Index>(j)];
  return res;
}

std::vector<bool> classify_tems(const TemVipResult& result, double fdr_level, double effect_threshold) {
  std::vector<bool> out;
  out.reserve(result.rows.size());
  for (const auto& r : result.rows)
    out.push_back(!r.degenerate && r.p_adj < fdr_level && std::abs(r.estimate) > effect_threshold);
  return out;
}

}  // namespace temvip
