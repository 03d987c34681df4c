#include "temvip/learners.hpp"

#include "temvip/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

namespace temvip {

double Penalty::mixing() const {
  switch (kind) {
    case PenaltyKind::None: return 1.0;
    case PenaltyKind::L1: return 1.0;
    case PenaltyKind::L2: return 0.0;
    case PenaltyKind::ElasticNet: return alpha;
  }
  return 1.0;
}

std::string LearnerSpec::id() const {
  std::ostringstream os;
  os << (family == Family::Linear ? "linear" : "logistic");
  if (intercept_only) {
    os << "-intercept";
    return os.str();
  }
  switch (penalty.kind) {
    case PenaltyKind::None: os << "-unpenalized"; break;
    case PenaltyKind::L1: os << "-lasso"; break;
    case PenaltyKind::L2: os << "-ridge"; break;
    case PenaltyKind::ElasticNet: os << "-enet(alpha=" << penalty.alpha << ")"; break;
  }
  if (penalty.kind != PenaltyKind::None)
    os << (relative_lambda ? "(rel.lambda=" : "(lambda=") << penalty.lambda << ")";
  if (interactions) os << "-interactions";
  return os.str();
}

void LearnerSpec::check() const {
  if (penalty.lambda < 0.0 || !std::isfinite(penalty.lambda))
    throw Error(ErrorCode::InvalidArgument, "learner lambda must be >= 0");
  if (penalty.alpha < 0.0 || penalty.alpha > 1.0)
    throw Error(ErrorCode::InvalidArgument, "learner alpha must lie in [0, 1]");
  if (max_iter < 1) throw Error(ErrorCode::InvalidArgument, "learner max_iter must be >= 1");
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "learner tol must be > 0");
}

double expit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

namespace {

double weight_at(const FitControls& c, Eigen::Index i) {
  return c.weights.empty() ? 1.0 : c.weights[static_cast<std::size_t>(i)];
}

double penalty_at(std::span<const double> pf, Eigen::Index j) {
  return pf.empty() ? 1.0 : pf[static_cast<std::size_t>(j)];
}

double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

/// Weighted elastic-net coordinate descent on a fixed quadratic problem.
/// Minimizes (1/2n) sum w_i (z_i - b0 - x_i beta)^2 + penalty, warm-started
/// from (b0, beta). Returns true when a full sweep moves no coefficient by tol.
struct QuadraticProblem {
  const Matrix& X;
  const Vector& z;
  const Vector* w;  // null = unit weights
  std::span<const double> penalty_factor;
  double lambda;
  double alpha;
  bool intercept;
};

class CoordinateDescent {
 public:
  explicit CoordinateDescent(const QuadraticProblem& prob) : prob_(prob) {
    const Eigen::Index q = prob.X.cols();
    n_ = static_cast<double>(prob.X.rows());
    xwx_.resize(q);
    for (Eigen::Index j = 0; j < q; ++j) {
      if (prob.w)
        xwx_[j] = (prob.X.col(j).array().square() * prob.w->array()).sum() / n_;
      else
        xwx_[j] = prob.X.col(j).squaredNorm() / n_;
    }
    sum_w_ = prob.w ? prob.w->sum() : n_;
  }

  bool run(double& b0, Vector& beta, double tol, int max_sweeps, int& sweeps) {
    const Eigen::Index q = prob_.X.cols();
    r_ = prob_.z - prob_.X * beta;
    r_.array() -= b0;
    if (prob_.w) wr_ = prob_.w->cwiseProduct(r_);
    std::vector<Eigen::Index> all(static_cast<std::size_t>(q));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    while (sweeps < max_sweeps) {
      const double dmax = sweep(all, b0, beta);
      ++sweeps;
      if (dmax < tol) return true;
      std::vector<Eigen::Index> active;
      for (Eigen::Index j = 0; j < q; ++j)
        if (beta[j] != 0.0) active.push_back(j);
      while (sweeps < max_sweeps) {
        const double d = sweep(active, b0, beta);
        ++sweeps;
        if (d < tol) break;
      }
    }
    return false;
  }

  /// Re-solves the stationarity conditions on the active set with the signs
  /// held fixed. Exact up to rounding; rejected when signs flip or the system
  /// is singular, in which case the coordinate-descent iterate stands.
  void polish(double& b0, Vector& beta, std::size_t max_active) const {
    const Eigen::Index q = prob_.X.cols();
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < q; ++j)
      if (beta[j] != 0.0) active.push_back(j);
    if (active.empty() || active.size() > max_active) return;

    const auto k = static_cast<Eigen::Index>(active.size());
    const Eigen::Index off = prob_.intercept ? 1 : 0;
    const Eigen::Index dim = k + off;
    Matrix xa(prob_.X.rows(), dim);
    if (prob_.intercept) xa.col(0).setOnes();
    for (Eigen::Index c = 0; c < k; ++c) xa.col(c + off) = prob_.X.col(active[static_cast<std::size_t>(c)]);

    Matrix xw = xa;
    if (prob_.w) xw = xa.array().colwise() * prob_.w->array();
    Matrix gram = xw.transpose() * xa / n_;
    Vector rhs = xw.transpose() * prob_.z / n_;
    for (Eigen::Index c = 0; c < k; ++c) {
      const Eigen::Index j = active[static_cast<std::size_t>(c)];
      const double pf = penalty_at(prob_.penalty_factor, j);
      gram(c + off, c + off) += prob_.lambda * (1.0 - prob_.alpha) * pf;
      const double s = beta[j] > 0.0 ? 1.0 : -1.0;
      rhs[c + off] -= prob_.lambda * prob_.alpha * pf * s;
    }
    Eigen::LDLT<Matrix> ldlt(gram);
    if (ldlt.info() != Eigen::Success) return;
    Vector sol = ldlt.solve(rhs);
    if (!sol.allFinite()) return;
    const double resid = (gram * sol - rhs).norm();
    if (resid > 1e-9 * (1.0 + rhs.norm())) return;
    for (Eigen::Index c = 0; c < k; ++c) {
      const Eigen::Index j = active[static_cast<std::size_t>(c)];
      const double pf = penalty_at(prob_.penalty_factor, j);
      if (prob_.lambda * prob_.alpha * pf > 0.0 && sol[c + off] * beta[j] <= 0.0) return;
    }
    // Moves beyond a coordinate-descent tolerance indicate a wrong active set.
    for (Eigen::Index c = 0; c < k; ++c)
      if (std::abs(sol[c + off] - beta[active[static_cast<std::size_t>(c)]]) > 1e-3 * (1.0 + std::abs(beta[active[static_cast<std::size_t>(c)]])))
        return;
    if (prob_.intercept) b0 = sol[0];
    for (Eigen::Index c = 0; c < k; ++c) beta[active[static_cast<std::size_t>(c)]] = sol[c + off];
  }

 private:
  double sweep(const std::vector<Eigen::Index>& cols, double& b0, Vector& beta) {
    double dmax = 0.0;
    for (Eigen::Index j : cols) {
      const double denom_base = xwx_[j];
      if (denom_base <= 0.0) {
        beta[j] = 0.0;
        continue;
      }
      const double pf = penalty_at(prob_.penalty_factor, j);
      double grad;
      grad = prob_.X.col(j).dot(prob_.w ? wr_ : r_) / n_;
      const double old = beta[j];
      const double l1 = prob_.lambda * prob_.alpha * pf;
      const double l2 = prob_.lambda * (1.0 - prob_.alpha) * pf;
      const double updated = soft_threshold(grad + denom_base * old, l1) / (denom_base + l2);
      if (updated != old) {
        r_ -= (updated - old) * prob_.X.col(j);
        if (prob_.w) wr_ -= (updated - old) * prob_.X.col(j).cwiseProduct(*prob_.w);
        beta[j] = updated;
        dmax = std::max(dmax, std::abs(updated - old));
      }
    }
    if (prob_.intercept && sum_w_ > 0.0) {
      const double delta = prob_.w ? wr_.sum() / sum_w_ : r_.sum() / sum_w_;
      if (delta != 0.0) {
        b0 += delta;
        r_.array() -= delta;
        if (prob_.w) wr_ -= delta * *prob_.w;
        dmax = std::max(dmax, std::abs(delta));
      }
    }
    return dmax;
  }

  const QuadraticProblem& prob_;
  double n_ = 0.0;
  double sum_w_ = 0.0;
  Vector xwx_;
  Vector r_;
  Vector wr_;  // w .* r, kept in step with r_
};

constexpr std::size_t kMaxPolishActive = 250;

double resolve_lambda(const Matrix& X, const Vector& y, const LearnerSpec& spec, const FitControls& controls) {
  if (spec.penalty.kind == PenaltyKind::None || X.cols() == 0) return 0.0;
  if (!spec.relative_lambda) return spec.penalty.lambda;
  return spec.penalty.lambda * lambda_max(X, y, spec.family, spec.penalty.mixing(), controls);
}

void check_dims(const Matrix& X, const Vector& y, const FitControls& controls) {
  if (X.rows() != y.size()) throw Error(ErrorCode::InvalidArgument, "design rows do not match outcome length");
  if (X.rows() == 0) throw Error(ErrorCode::EmptyData, "cannot fit a learner on zero rows");
  if (!controls.weights.empty() && controls.weights.size() != static_cast<std::size_t>(X.rows()))
    throw Error(ErrorCode::InvalidArgument, "weights length does not match design rows");
  if (!controls.penalty_factor.empty() && controls.penalty_factor.size() != static_cast<std::size_t>(X.cols()))
    throw Error(ErrorCode::InvalidArgument, "penalty_factor length does not match design columns");
}

}  // namespace

double lambda_max(const Matrix& X, const Vector& y, Family /*family*/, double alpha, const FitControls& controls) {
  const Eigen::Index n = X.rows();
  // Gradient at the fit on the unpenalized part (intercept plus zero-factor
  // columns), which has the same form for squared error and Bernoulli loss.
  // The linear projection stands in for that fit; for an intercept or disjoint
  // indicators it is exact for both families.
  std::vector<Eigen::Index> free_cols;
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    if (penalty_at(controls.penalty_factor, j) <= 0.0) free_cols.push_back(j);
  const Eigen::Index k = static_cast<Eigen::Index>(free_cols.size()) + (controls.intercept ? 1 : 0);
  Vector fitted = Vector::Zero(n);
  if (k > 0) {
    Matrix U(n, k);
    Eigen::Index c = 0;
    if (controls.intercept) U.col(c++).setOnes();
    for (Eigen::Index j : free_cols) U.col(c++) = X.col(j);
    Vector sw(n);
    for (Eigen::Index i = 0; i < n; ++i) sw[i] = std::sqrt(weight_at(controls, i));
    const Matrix Uw = sw.asDiagonal() * U;
    const Vector b = Uw.colPivHouseholderQr().solve(sw.cwiseProduct(y));
    fitted = U * b;
  }
  Vector r(n);
  for (Eigen::Index i = 0; i < n; ++i) r[i] = weight_at(controls, i) * (y[i] - fitted[i]);
  double best = 0.0;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double pf = penalty_at(controls.penalty_factor, j);
    if (pf <= 0.0) continue;
    best = std::max(best, std::abs(X.col(j).dot(r)) / (static_cast<double>(n) * pf));
  }
  return best / std::max(alpha, 1e-3);
}

GlmFit fit_linear_penalized(const Matrix& X, const Vector& y, const LearnerSpec& spec,
                            const FitControls& controls, Diagnostics* diag) {
  spec.check();
  check_dims(X, y, controls);
  GlmFit fit;
  fit.beta = Vector::Zero(X.cols());
  fit.lambda = resolve_lambda(X, y, spec, controls);

  Vector w;
  if (!controls.weights.empty()) w = Eigen::Map<const Vector>(controls.weights.data(), X.rows());
  QuadraticProblem prob{X, y, controls.weights.empty() ? nullptr : &w, controls.penalty_factor,
                        fit.lambda, spec.penalty.kind == PenaltyKind::None ? 1.0 : spec.penalty.mixing(),
                        controls.intercept};
  if (controls.warm_start && controls.warm_start->beta.size() == X.cols()) {
    fit.beta = controls.warm_start->beta;
    fit.intercept = controls.intercept ? controls.warm_start->intercept : 0.0;
  } else if (controls.intercept) {
    const double sw = prob.w ? w.sum() : static_cast<double>(X.rows());
    fit.intercept = (prob.w ? w.dot(y) : y.sum()) / sw;
  }
  CoordinateDescent cd(prob);
  int sweeps = 0;
  fit.converged = cd.run(fit.intercept, fit.beta, spec.tol, spec.max_iter, sweeps);
  fit.iterations = sweeps;
  if (fit.converged) cd.polish(fit.intercept, fit.beta, kMaxPolishActive);
  if (!fit.converged && diag)
    diag->warn(WarningCode::NoConvergence, spec.id() + ": coordinate descent hit max_iter=" +
                                               std::to_string(spec.max_iter));
  return fit;
}

GlmFit fit_logistic_penalized(const Matrix& X, const Vector& y, const LearnerSpec& spec,
                              const FitControls& controls, Diagnostics* diag) {
  spec.check();
  check_dims(X, y, controls);
  const Eigen::Index n = X.rows();
  if (y.minCoeff() < 0.0 || y.maxCoeff() > 1.0)
    throw Error(ErrorCode::InvalidArgument, "logistic outcome must lie in [0, 1]");
  if (!(y.maxCoeff() > y.minCoeff()))
    throw Error(ErrorCode::OneClassOnly, "logistic learner needs both outcome classes");

  GlmFit fit;
  fit.beta = Vector::Zero(X.cols());
  fit.lambda = resolve_lambda(X, y, spec, controls);
  const double alpha = spec.penalty.kind == PenaltyKind::None ? 1.0 : spec.penalty.mixing();

  double sw = 0.0, swy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    sw += weight_at(controls, i);
    swy += weight_at(controls, i) * y[i];
  }
  const double ybar = std::clamp(swy / sw, 1e-6, 1.0 - 1e-6);
  fit.intercept = controls.intercept ? logit(ybar) : 0.0;
  if (controls.warm_start && controls.warm_start->beta.size() == X.cols()) {
    fit.beta = controls.warm_start->beta;
    if (controls.intercept) fit.intercept = controls.warm_start->intercept;
  }

  Vector eta = linear_predictor(fit, X);
  Vector w(n), z(n);
  // Penalized objective, used to stop once the only movement left is a
  // coefficient running off to infinity under separation.
  auto objective = [&](const Vector& e) {
    double nll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double lp = e[i] >= 0 ? -std::log1p(std::exp(-e[i])) : e[i] - std::log1p(std::exp(e[i]));
      nll -= weight_at(controls, i) * (y[i] * lp + (1.0 - y[i]) * (lp - e[i]));
    }
    double pen = 0.0;
    for (Eigen::Index j = 0; j < fit.beta.size(); ++j)
      pen += penalty_at(controls.penalty_factor, j) *
             (alpha * std::abs(fit.beta[j]) + 0.5 * (1.0 - alpha) * fit.beta[j] * fit.beta[j]);
    return nll / sw + fit.lambda * pen;
  };
  double obj = objective(eta);
  for (int it = 0; it < spec.max_iter; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = expit(eta[i]);
      // tiny floor: a larger one turns Newton steps into a crawl once p nears 0 or 1
      const double v = std::max(p * (1.0 - p), 1e-16);
      w[i] = v * weight_at(controls, i);
      z[i] = eta[i] + (y[i] - p) / v;
    }
    const double old_b0 = fit.intercept;
    const Vector old_beta = fit.beta;
    QuadraticProblem prob{X, z, &w, controls.penalty_factor, fit.lambda, alpha, controls.intercept};
    CoordinateDescent cd(prob);
    int sweeps = 0;
    if (cd.run(fit.intercept, fit.beta, spec.tol * 0.1, spec.max_iter, sweeps))
      cd.polish(fit.intercept, fit.beta, kMaxPolishActive);
    eta = X * fit.beta;
    eta.array() += fit.intercept;
    double next_obj = objective(eta);
    // Step halving: the near-exact weights can overshoot badly on rows whose
    // fitted probability is close to 0 or 1.
    for (int h = 0; h < 40 && !(next_obj <= obj + 1e-12 * (1.0 + std::abs(obj))); ++h) {
      fit.intercept = 0.5 * (fit.intercept + old_b0);
      fit.beta = 0.5 * (fit.beta + old_beta);
      eta = X * fit.beta;
      eta.array() += fit.intercept;
      next_obj = objective(eta);
    }
    fit.iterations = it + 1;

    double change = std::abs(fit.intercept - old_b0);
    if (fit.beta.size() > 0) change = std::max(change, (fit.beta - old_beta).cwiseAbs().maxCoeff());
    const bool flat = std::abs(obj - next_obj) <= 1e-12 * (1.0 + std::abs(next_obj));
    obj = next_obj;
    if (change < spec.tol) {
      fit.converged = true;
      break;
    }
    if (eta.cwiseAbs().maxCoeff() > kSeparationBound && flat) {
      fit.separation = true;
      fit.converged = true;
      break;
    }
  }
  if (fit.converged && !fit.separation && eta.size() > 0 && eta.cwiseAbs().maxCoeff() > kSeparationBound)
    fit.separation = true;
  if (diag) {
    if (fit.separation)
      diag->warn(WarningCode::SeparationDetected,
                 spec.id() + ": |linear predictor| exceeded 30; predictions are clipped");
    else if (!fit.converged)
      diag->warn(WarningCode::NoConvergence, spec.id() + ": IRLS hit max_iter=" + std::to_string(spec.max_iter));
  }
  return fit;
}

GlmFit fit_penalized(const Matrix& X, const Vector& y, const LearnerSpec& spec, const FitControls& controls,
                     Diagnostics* diag) {
  return spec.family == Family::Linear ? fit_linear_penalized(X, y, spec, controls, diag)
                                       : fit_logistic_penalized(X, y, spec, controls, diag);
}

Vector linear_predictor(const GlmFit& fit, const Matrix& X) {
  Vector eta = fit.beta.size() > 0 ? Vector(X * fit.beta) : Vector::Zero(X.rows());
  eta.array() += fit.intercept;
  return eta;
}

Vector predict(const GlmFit& fit, const Matrix& X, Family family) {
  Vector eta = linear_predictor(fit, X);
  if (family == Family::Linear) return eta;
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    eta[i] = expit(std::clamp(eta[i], -kSeparationBound, kSeparationBound));
  return eta;
}

double heldout_loss(Family family, const Vector& y, const Vector& prediction) {
  double loss = 0.0;
  if (family == Family::Linear) {
    loss = (y - prediction).squaredNorm();
  } else {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double p = std::clamp(prediction[i], 1e-12, 1.0 - 1e-12);
      loss -= y[i] * std::log(p) + (1.0 - y[i]) * std::log1p(-p);
    }
  }
  return loss;
}

std::vector<int> make_folds(std::size_t n, int k, std::uint64_t seed, std::span<const double> strata) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 folds");
  std::vector<int> folds(n, 0);
  RandomStream rng({seed, 0xf01dULL});
  auto shuffle = [&](std::vector<std::size_t>& idx) {
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  };
  std::map<double, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[strata.empty() ? 0.0 : strata[i]].push_back(i);
  int next = 0;
  for (auto& [_, idx] : groups) {
    shuffle(idx);
    // Continue the round-robin across strata so fold sizes stay balanced.
    for (std::size_t i : idx) {
      folds[i] = next;
      next = (next + 1) % k;
    }
  }
  return folds;
}

std::size_t cv_select(std::size_t menu_size, int n_folds, const std::function<double(std::size_t, int)>& loss) {
  if (menu_size == 0) throw Error(ErrorCode::InvalidArgument, "empty learner menu");
  std::size_t best = menu_size;
  double best_risk = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < menu_size; ++s) {
    double total = 0.0;
    for (int f = 0; f < n_folds; ++f) total += loss(s, f);
    const double risk = total / n_folds;
    if (std::isfinite(risk) && risk < best_risk) {
      best_risk = risk;
      best = s;
    }
  }
  if (best == menu_size) throw Error(ErrorCode::AllLearnersFailed, "no learner produced a finite CV risk");
  return best;
}

SelectedFit select_and_fit(const DesignBuilder& design_for, const Vector& y, std::span<const std::size_t> rows,
                           std::span<const LearnerSpec> menu, std::span<const int> cv_folds, int n_cv_folds,
                           Diagnostics* diag) {
  if (menu.empty()) throw Error(ErrorCode::InvalidArgument, "empty learner menu");
  if (cv_folds.size() != rows.size()) throw Error(ErrorCode::InvalidArgument, "fold labels do not match rows");

  auto subset = [&](std::span<const std::size_t> idx) {
    Vector out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out[static_cast<Eigen::Index>(k)] = y[static_cast<Eigen::Index>(idx[k])];
    return out;
  };
  auto fit_on = [&](const LearnerSpec& spec, std::span<const std::size_t> idx, const Design& design, Diagnostics* d,
                    const GlmFit* warm = nullptr) {
    FitControls controls;
    controls.penalty_factor = design.penalty_factor;
    controls.intercept = design.intercept;
    controls.warm_start = warm;
    return fit_penalized(design.X, subset(idx), spec, controls, d);
  };

  SelectedFit out;
  out.cv_risk.assign(menu.size(), std::numeric_limits<double>::quiet_NaN());
  if (menu.size() > 1) {
    std::vector<std::vector<std::size_t>> train(static_cast<std::size_t>(n_cv_folds)),
        test(static_cast<std::size_t>(n_cv_folds));
    for (std::size_t k = 0; k < rows.size(); ++k)
      for (int f = 0; f < n_cv_folds; ++f)
        (cv_folds[k] == f ? test : train)[static_cast<std::size_t>(f)].push_back(rows[k]);

    // Designs depend on the spec only through its column layout.
    std::map<std::pair<int, int>, std::map<int, std::pair<Design, Design>>> cache;
    auto designs = [&](const LearnerSpec& spec, int f) -> const std::pair<Design, Design>& {
      auto& per_fold = cache[{spec.interactions ? 1 : 0, spec.intercept_only ? 1 : 0}];
      auto it = per_fold.find(f);
      if (it == per_fold.end()) {
        const auto uf = static_cast<std::size_t>(f);
        it = per_fold.emplace(f, std::make_pair(design_for(spec, train[uf]), design_for(spec, test[uf]))).first;
      }
      return it->second;
    };
    std::vector<std::vector<double>> losses(menu.size(), std::vector<double>(static_cast<std::size_t>(n_cv_folds)));
    // Within a fold, each fit starts from the previous menu entry with the same
    // layout and family (menus run from strong to weak penalties).
    std::map<std::tuple<int, int, int, int>, GlmFit> previous;
    for (std::size_t s = 0; s < menu.size(); ++s) {
      for (int f = 0; f < n_cv_folds; ++f) {
        const auto uf = static_cast<std::size_t>(f);
        double l = std::numeric_limits<double>::infinity();
        try {
          const auto& [dtrain, dtest] = designs(menu[s], f);
          const std::tuple<int, int, int, int> key{menu[s].interactions, menu[s].intercept_only,
                                                   static_cast<int>(menu[s].family), f};
          auto prev = previous.find(key);
          GlmFit g = fit_on(menu[s], train[uf], dtrain, nullptr, prev == previous.end() ? nullptr : &prev->second);
          previous[key] = g;
          l = heldout_loss(menu[s].family, subset(test[uf]), predict(g, dtest.X, menu[s].family)) /
              static_cast<double>(test[uf].size());
        } catch (const Error&) {
        }
        losses[s][uf] = l;
      }
    }
    if (diag)
      for (std::size_t s = 0; s < menu.size(); ++s)
        if (std::any_of(losses[s].begin(), losses[s].end(), [](double l) { return !std::isfinite(l); }))
          diag->warn(WarningCode::LearnerFailed, menu[s].id() + " failed in cross-validation and was skipped");
    out.spec_index = cv_select(menu.size(), n_cv_folds, [&](std::size_t s, int f) {
      return losses[s][static_cast<std::size_t>(f)];
    });
    for (std::size_t s = 0; s < menu.size(); ++s) {
      double total = 0.0;
      for (double l : losses[s]) total += l;
      out.cv_risk[s] = total / n_cv_folds;
    }
  }
  out.spec = menu[out.spec_index];
  const Design full = design_for(out.spec, rows);
  out.fit = fit_on(out.spec, rows, full, diag);
  return out;
}

}  // namespace temvip
