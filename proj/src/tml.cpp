#include "temvip/estimators.hpp"

#include <boost/math/tools/toms748_solve.hpp>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <exception>

namespace temvip {

namespace {

constexpr double kHazardLow = 1e-6;
constexpr double kHazardHigh = 1.0 - 1e-6;
constexpr double kUnitClip = 1e-9;

double loglik(const Vector& offset, const Vector& h, const Vector& y, double eps) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double eta = offset[i] + eps * h[i];
    // log p = -log(1 + e^-eta), log(1 - p) = -log(1 + e^eta)
    const double lp = eta >= 0 ? -std::log1p(std::exp(-eta)) : eta - std::log1p(std::exp(eta));
    const double lq = lp - eta;
    ll += y[i] * lp + (1.0 - y[i]) * lq;
  }
  return ll;
}

// Runs f(j) for every covariate, in parallel unless nested, and rethrows the
// first failure in column order.
template <class F>
void for_each_column(Eigen::Index p, F&& f) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(p));
#pragma omp parallel for schedule(dynamic) if (!omp_in_parallel())
  for (Eigen::Index j = 0; j < p; ++j) {
    try {
      f(j);
    } catch (...) {
      errors[static_cast<std::size_t>(j)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

int treatment_arm(const ObservedDataset& d, Eigen::Index i) { return d.treatment[i] > 0.5 ? 1 : 0; }

bool targeted(double mean, double sigma2, double tol) {
  return std::abs(mean) <= 0.01 * tol * std::sqrt(sigma2);
}

}  // namespace

// The MLE step alone converges slowly when the clever covariate moves with the fit
// (1/Q, 1/S terms). Find the root of the EIF mean along the same path instead.
// score(e) returns the mean at step e; f0 and f1 are its values at 0 and e1.
template <class F>
double refine_along_path(F&& score, double e1, double f0, double f1) {
  double a = 0.0, fa = f0, b = e1, fb = f1;
  for (int k = 0; k < 8 && fa * fb > 0.0 && std::abs(fb) < std::abs(fa); ++k) {
    a = b;
    fa = fb;
    b *= 2.0;
    fb = score(b);
  }
  if (!(fa * fb <= 0.0) || !std::isfinite(fb)) return e1;
  if (a > b) {
    std::swap(a, b);
    std::swap(fa, fb);
  }
  std::uintmax_t max_iter = 60;
  const auto root = boost::math::tools::toms748_solve(
      score, a, b, fa, fb,
      [](double lo, double hi) { return std::abs(hi - lo) <= 1e-14 * std::max(std::abs(lo), std::abs(hi)); },
      max_iter);
  return std::abs(score(root.first)) <= std::abs(score(root.second)) ? root.first : root.second;
}

double fit_fluctuation(const Vector& offset, const Vector& h, const Vector& y, int max_iter) {
  if (!h.allFinite() || !offset.allFinite()) throw Error(ErrorCode::TiltDiverged, "non-finite clever covariate");
  double eps = 0.0;
  double ll = loglik(offset, h, y, eps);
  for (int it = 0; it < max_iter; ++it) {
    double score = 0.0, info = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double p = expit(offset[i] + eps * h[i]);
      score += h[i] * (y[i] - p);
      info += h[i] * h[i] * p * (1.0 - p);
    }
    if (score == 0.0) return eps;
    if (!(info > 0.0) || !std::isfinite(info))
      throw Error(ErrorCode::TiltDiverged, "fluctuation information vanished");
    double step = score / info;
    double next = eps + step;
    double ll_next = loglik(offset, h, y, next);
    int halvings = 0;
    while (!(ll_next >= ll) && halvings < 60) {
      step *= 0.5;
      next = eps + step;
      ll_next = loglik(offset, h, y, next);
      ++halvings;
    }
    if (!std::isfinite(next)) throw Error(ErrorCode::TiltDiverged, "fluctuation coefficient diverged");
    eps = next;
    ll = ll_next;
    if (std::abs(step) <= 1e-12 * (1.0 + std::abs(eps))) return eps;
  }
  throw Error(ErrorCode::TiltDiverged,
              "fluctuation fit did not converge in " + std::to_string(max_iter) + " iterations");
}

EstimateResult tml_estimate_cont(const Matrix& W, const Vector& treatment, const Vector& y_unit, EstimandKind kind,
                                 const PropensityFit& g, const OutcomeRegressionFit& q_unit, double scale,
                                 const InferenceConfig& cfg, double q_min, Diagnostics* diag) {
  cfg.check();
  if (kind.survival()) throw Error(ErrorCode::InvalidArgument, "continuous TML called with a survival estimand");
  if (y_unit.minCoeff() < 0.0 || y_unit.maxCoeff() > 1.0)
    throw Error(ErrorCode::InvalidArgument, "TML outcome must be rescaled into [0, 1]");
  const Eigen::Index n = W.rows();
  const Eigen::Index p = W.cols();
  const bool rel = kind.type == EstimandType::RelCont;
  const Vector ew2 = second_moments(W);

  auto clip_logit = [](double q) { return logit(std::clamp(q, kUnitClip, 1.0 - kUnitClip)); };
  Vector off1_0(n), off0_0(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    off1_0[i] = clip_logit(q_unit.q1[i]);
    off0_0[i] = clip_logit(q_unit.q0[i]);
  }
  std::vector<int> arm(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) arm[static_cast<std::size_t>(i)] = treatment[i] > 0.5 ? 1 : 0;

  EstimateResult out;
  out.estimates.resize(p);
  out.eif.values.resize(n, p);
  out.eif.means.resize(p);
  out.eif.sigma2.resize(p);
  out.tilts.resize(static_cast<std::size_t>(p));
  std::vector<Diagnostics> local(static_cast<std::size_t>(p));

  for_each_column(p, [&](Eigen::Index j) {
    const auto uj = static_cast<std::size_t>(j);
    TiltState& st = out.tilts[uj];
    Vector off1 = off1_0, off0 = off0_0;
    Vector q1(n), q0(n), f(n), d(n), h_obs(n), off_obs(n), h1v(n), h0v(n), t1(n), t0(n);
    long floor_hits = 0;
    double theta = 0.0, mean = 0.0, sigma2 = 0.0;
    Vector col(n);
    // score of column j with the outcome regression at logits (o1, o0)
    auto evaluate = [&](const Vector& o1, const Vector& o0) {
      floor_hits = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        q1[i] = expit(o1[i]);
        q0[i] = expit(o0[i]);
        if (rel) {
          if (q1[i] < q_min) q1[i] = q_min, ++floor_hits;
          if (q0[i] < q_min) q0[i] = q_min, ++floor_hits;
          f[i] = std::log(q1[i]) - std::log(q0[i]);
          d[i] = eif_rel_cont_row(arm[static_cast<std::size_t>(i)], y_unit[i], g.values[i], q1[i], q0[i]);
        } else {
          f[i] = q1[i] - q0[i];
          d[i] = eif_abs_cont_row(arm[static_cast<std::size_t>(i)], y_unit[i], g.values[i], q1[i], q0[i]);
        }
      }
      double num = 0.0, den = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        num += W(i, j) * f[i];
        den += W(i, j) * W(i, j);
      }
      theta = num / den;
      double sum = 0.0, sum2 = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        col[i] = W(i, j) / ew2[j] * (d[i] - W(i, j) * theta);
        sum += col[i];
        sum2 += col[i] * col[i];
      }
      mean = sum / static_cast<double>(n);
      sigma2 = sum2 / static_cast<double>(n);
      return mean;
    };
    auto score_at = [&](double e) {
      t1 = off1 + e * h1v;
      t0 = off0 + e * h0v;
      return evaluate(t1, t0);
    };
    evaluate(off1, off0);
    for (int it = 0;; ++it) {
      st.score_ratio = sigma2 > 0.0 ? std::abs(mean) / std::sqrt(sigma2) : 0.0;
      if (targeted(mean, sigma2, cfg.tilt_tol)) {
        st.converged = true;
        break;
      }
      if (it == cfg.max_tilt_iter) {
        local[uj].warn(WarningCode::TiltMaxIter, "covariate " + std::to_string(j + 1) + ": tilting stopped after " +
                                                     std::to_string(cfg.max_tilt_iter) + " iterations");
        break;
      }
      for (Eigen::Index i = 0; i < n; ++i) {
        const int a = arm[static_cast<std::size_t>(i)];
        const double base = W(i, j) / ew2[j];
        double h1 = base / g.values[i];
        double h0 = -base / (1.0 - g.values[i]);
        if (rel) {
          h1 /= q1[i];
          h0 /= q0[i];
        }
        h_obs[i] = a == 1 ? h1 : h0;
        off_obs[i] = a == 1 ? off1[i] : off0[i];
        h1v[i] = h1;
        h0v[i] = h0;
      }
      const double m0 = mean;
      double eps = fit_fluctuation(off_obs, h_obs, y_unit);
      score_at(eps);
      if (!targeted(mean, sigma2, cfg.tilt_tol) && eps != 0.0) eps = refine_along_path(score_at, eps, m0, mean);
      off1 += eps * h1v;
      off0 += eps * h0v;
      evaluate(off1, off0);
      st.epsilon = eps;
      st.total_epsilon += eps;
      st.iterations = it + 1;
    }
    if (floor_hits > 0)
      local[uj].warn(WarningCode::FloorApplied, "covariate " + std::to_string(j + 1) + ": " +
                                                    std::to_string(floor_hits) + " tilted values floored at q_min");
    if (cfg.keep_clever) {
      st.clever.resize(n, 1);
      for (Eigen::Index i = 0; i < n; ++i) {
        const int a = arm[static_cast<std::size_t>(i)];
        double h = W(i, j) / ew2[j] * (2.0 * a - 1.0) / arm_probability(a, g.values[i]);
        if (rel) h /= a == 1 ? q1[i] : q0[i];
        st.clever(i, 0) = h;
      }
    }
    const double s = rel ? 1.0 : scale;
    out.estimates[j] = theta * s;
    out.eif.values.col(j) = col * s;
    out.eif.means[j] = mean * s;
    out.eif.sigma2[j] = sigma2 * s * s;
  });
  if (diag)
    for (const auto& l : local) diag->merge(l);
  return out;
}

EstimateResult tml_estimate_surv(const ObservedDataset& d, EstimandKind kind, const NuisanceBundle& nuisances,
                                 const InferenceConfig& cfg, double q_min, Diagnostics* diag) {
  cfg.check();
  if (!kind.survival()) throw Error(ErrorCode::InvalidArgument, "survival TML called with a continuous estimand");
  if (!nuisances.survival) throw Error(ErrorCode::InvalidArgument, "survival nuisances missing");
  const SurvivalNuisanceFit& base = *nuisances.survival;
  const SurvivalOutcome& s = d.survival();
  const int t = kind.horizon;
  if (t < 1 || t > base.horizon)
    throw Error(ErrorCode::GridExceeded, "horizon " + std::to_string(t) + " exceeds the fitted grid 1.." +
                                             std::to_string(base.horizon));
  const Matrix& W = d.covariates;
  const Eigen::Index n = W.rows();
  const Eigen::Index p = W.cols();
  const bool rel = kind.type == EstimandType::RelSurv;
  const Vector& g = nuisances.propensity.values;
  const Vector ew2 = second_moments(W);

  // Long-format rows used to fit each fluctuation: u <= min(T~, t).
  std::vector<Eigen::Index> row_subject;
  std::vector<int> row_time;
  for (Eigen::Index i = 0; i < n; ++i)
    for (int u = 1; u <= std::min(t, s.t_tilde[static_cast<std::size_t>(i)]); ++u) {
      row_subject.push_back(i);
      row_time.push_back(u);
    }
  const auto n_long = static_cast<Eigen::Index>(row_subject.size());
  Vector dn(n_long);
  for (Eigen::Index r = 0; r < n_long; ++r) {
    const auto i = static_cast<std::size_t>(row_subject[static_cast<std::size_t>(r)]);
    dn[r] = (s.delta[i] == 0 && s.t_tilde[i] == row_time[static_cast<std::size_t>(r)]) ? 1.0 : 0.0;
  }

  EstimateResult out;
  out.estimates.resize(p);
  out.eif.values.resize(n, p);
  out.eif.means.resize(p);
  out.eif.sigma2.resize(p);
  out.tilts.resize(static_cast<std::size_t>(p));
  std::vector<Diagnostics> local(static_cast<std::size_t>(p));

  for_each_column(p, [&](Eigen::Index j) {
    const auto uj = static_cast<std::size_t>(j);
    TiltState& st = out.tilts[uj];
    SurvivalNuisanceFit work;
    work.horizon = t;
    for (std::size_t a = 0; a < 2; ++a) {
      work.hazard[a] = base.hazard[a].leftCols(t);
      work.censoring[a] = base.censoring[a].leftCols(t);
    }
    SurvivalNuisanceFit trial = work;
    std::array<Matrix, 2> clever{Matrix::Zero(n, t), Matrix::Zero(n, t)};
    Vector dvals(n), col(n), trial_col(n), off(n_long), h(n_long);
    std::vector<double> r(static_cast<std::size_t>(t));
    long boundary_hits = 0;

    struct Score {
      double theta = 0.0, mean = 0.0, sigma2 = 0.0;
      long floor_hits = 0;
    };
    auto evaluate = [&](SurvivalNuisanceFit& fit, Vector& c) {
      fit.recompute_survival();
      Score sc;
      double num = 0.0, den = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const SurvivalRowView row = survival_row(fit, treatment_arm(d, i), s.t_tilde[ui], s.delta[ui], g[i], i);
        double f;
        if (rel) {
          dvals[i] = eif_rel_surv_row(row, t, q_min, sc.floor_hits);
          f = std::log(std::max(fit.survival[1](i, t - 1), q_min)) - std::log(std::max(fit.survival[0](i, t - 1), q_min));
        } else {
          dvals[i] = eif_abs_surv_row(row, t);
          f = 0.0;
          for (int u = 0; u < t; ++u) f += fit.survival[1](i, u) - fit.survival[0](i, u);
        }
        num += W(i, j) * f;
        den += W(i, j) * W(i, j);
      }
      sc.theta = num / den;
      double sum = 0.0, sum2 = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        c[i] = W(i, j) / ew2[j] * (dvals[i] - W(i, j) * sc.theta);
        sum += c[i];
        sum2 += c[i] * c[i];
      }
      sc.mean = sum / static_cast<double>(n);
      sc.sigma2 = sum2 / static_cast<double>(n);
      return sc;
    };
    // hazards of `work` moved along the current clever covariate; returns clipped cells
    auto tilt = [&](double eps) {
      long hits = 0;
      for (std::size_t a = 0; a < 2; ++a)
        for (int u = 0; u < t; ++u)
          for (Eigen::Index i = 0; i < n; ++i) {
            const double old = work.hazard[a](i, u);
            const double next = expit(logit(old) + eps * clever[a](i, u));
            const double lo = std::min(old, kHazardLow), hi = std::max(old, kHazardHigh);
            if (next < lo || next > hi || !std::isfinite(next)) ++hits;
            trial.hazard[a](i, u) = std::isfinite(next) ? std::clamp(next, lo, hi) : old;
          }
      return hits;
    };

    Score cur = evaluate(work, col);
    for (int it = 0;; ++it) {
      st.score_ratio = cur.sigma2 > 0.0 ? std::abs(cur.mean) / std::sqrt(cur.sigma2) : 0.0;
      if (targeted(cur.mean, cur.sigma2, cfg.tilt_tol)) {
        st.converged = true;
        break;
      }
      if (it == cfg.max_tilt_iter) {
        local[uj].warn(WarningCode::TiltMaxIter, "covariate " + std::to_string(j + 1) + ": hazard tilting stopped after " +
                                                     std::to_string(cfg.max_tilt_iter) + " iterations");
        break;
      }

      for (Eigen::Index i = 0; i < n; ++i) {
        const double base_h = -W(i, j) / ew2[j];
        for (int a = 0; a < 2; ++a) {
          const auto ua = static_cast<std::size_t>(a);
          const double lead = base_h * (2.0 * a - 1.0) / arm_probability(a, g[i]);
          if (!rel) survival_ratio_sums(GridSeries::row(work.hazard[ua], i), t, r.data());
          for (int u = 1; u <= t; ++u) {
            const double c_prev = u == 1 ? 1.0 : work.censoring[ua](i, u - 2);
            clever[ua](i, u - 1) = rel ? lead / (c_prev * std::max(work.survival[ua](i, u - 1), q_min))
                                       : lead * r[static_cast<std::size_t>(u - 1)] / c_prev;
          }
        }
      }
      for (Eigen::Index k = 0; k < n_long; ++k) {
        const Eigen::Index i = row_subject[static_cast<std::size_t>(k)];
        const int u = row_time[static_cast<std::size_t>(k)];
        const auto ua = static_cast<std::size_t>(treatment_arm(d, i));
        off[k] = logit(work.hazard[ua](i, u - 1));
        h[k] = clever[ua](i, u - 1);
      }
      double eps = fit_fluctuation(off, h, dn);
      long hits = tilt(eps);
      Score next = evaluate(trial, trial_col);

      if (!targeted(next.mean, next.sigma2, cfg.tilt_tol) && eps != 0.0) {
        auto score_at = [&](double e) {
          tilt(e);
          return evaluate(trial, trial_col).mean;
        };
        eps = refine_along_path(score_at, eps, cur.mean, next.mean);
        hits = tilt(eps);
        next = evaluate(trial, trial_col);
      }
      boundary_hits += hits;
      std::swap(work.hazard, trial.hazard);
      std::swap(work.survival, trial.survival);
      std::swap(col, trial_col);
      cur = next;
      st.epsilon = eps;
      st.total_epsilon += eps;
      st.iterations = it + 1;
    }
    if (boundary_hits > 0)
      local[uj].warn(WarningCode::HazardBoundary, "covariate " + std::to_string(j + 1) + ": " +
                                                      std::to_string(boundary_hits) +
                                                      " tilted hazards clipped to [1e-6, 1-1e-6]");
    if (cur.floor_hits > 0)
      local[uj].warn(WarningCode::FloorApplied, "covariate " + std::to_string(j + 1) + ": " +
                                                    std::to_string(cur.floor_hits) + " survival values floored at q_min");
    if (cfg.keep_clever) {
      st.clever.resize(n, t);
      for (Eigen::Index i = 0; i < n; ++i) st.clever.row(i) = clever[static_cast<std::size_t>(treatment_arm(d, i))].row(i);
    }
    out.estimates[j] = cur.theta;
    out.eif.values.col(j) = col;
    out.eif.means[j] = cur.mean;
    out.eif.sigma2[j] = cur.sigma2;
  });
  if (diag)
    for (const auto& l : local) diag->merge(l);
  return out;
}

}  // namespace temvip
