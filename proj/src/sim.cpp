#include "temvip/sim.hpp"

#include "temvip/rng.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <map>

namespace temvip {

namespace {

enum Stream : std::uint64_t { kCovariates = 1, kTreatment = 2, kOutcome = 3, kCensoring = 4, kTruth = 5 };

std::uint64_t scenario_id(ScenarioKind k) { return 0xc0ffee00ULL + static_cast<std::uint64_t>(k); }

RandomStream stream(const SimScenario& s, Stream purpose) {
  return RandomStream({scenario_id(s.kind), s.seed, s.replicate, static_cast<std::uint64_t>(s.n),
                       static_cast<std::uint64_t>(s.dimension()), purpose});
}

// Rows of W drawn from the scenario's covariance, using `rng`.
Matrix draw_covariates(const SimScenario& s, std::size_t rows, RandomStream& rng, const Matrix* chol) {
  const int p = s.dimension();
  const auto n = static_cast<Eigen::Index>(rows);
  Matrix W(n, p);
  if (s.kind == ScenarioKind::TteRct) {
    // Equicorrelated blocks of ten: W = sqrt(rho) Z_block + sqrt(1 - rho) Z.
    const double a = std::sqrt(s.block_rho), b = std::sqrt(1.0 - s.block_rho);
    for (Eigen::Index i = 0; i < n; ++i) {
      double shared = 0.0;
      for (int j = 0; j < p; ++j) {
        if (j % 10 == 0) shared = rng.normal();
        W(i, j) = a * shared + b * rng.normal();
      }
    }
    return W;
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) W(i, j) = rng.normal();
  if (chol) W = W * chol->transpose();
  return W;
}

Matrix toeplitz_cholesky(const SimScenario& s) {
  const Matrix sigma = scenario_covariance(s);
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::InvalidArgument, "scenario covariance is not positive definite");
  return llt.matrixL();
}

double row_sum(const Matrix& W, Eigen::Index i, int k) { return W.row(i).head(k).sum(); }

double cont_q(double a, double s5) { return 1.0 + 2.0 * std::abs(s5) + (5.0 * a - 2.0) * s5; }
double bin_q(double a, double s5) { return expit(1.0 - 2.0 * a + s5 + (a - 0.5) * s5); }
double tte_hazard(double a, double s10) { return expit(-2.0 - a + (10.0 * a - 5.0) * s10); }
double tte_censor_hazard(double a, double w1) { return expit(-(5.0 + a + w1)); }
double tte_censor_hazard(const SimScenario& s, double a, double w1) {
  return s.arm_only_censoring ? expit(-(2.0 + a)) : tte_censor_hazard(a, w1);
}

}  // namespace

std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::ContObs: return "cont-obs";
    case ScenarioKind::BinObs: return "bin-obs";
    case ScenarioKind::TteRct: return "tte-rct";
  }
  return "unknown";
}

ScenarioKind parse_scenario(const std::string& name) {
  if (name == "cont-obs" || name == "ContObs") return ScenarioKind::ContObs;
  if (name == "bin-obs" || name == "BinObs") return ScenarioKind::BinObs;
  if (name == "tte-rct" || name == "TteRct") return ScenarioKind::TteRct;
  throw Error(ErrorCode::InvalidArgument, "unknown scenario '" + name + "' (expected cont-obs, bin-obs or tte-rct)");
}

int SimScenario::dimension() const {
  if (p > 0) return p;
  switch (kind) {
    case ScenarioKind::ContObs: return 500;
    case ScenarioKind::BinObs: return 100;
    case ScenarioKind::TteRct: return 300;
  }
  return 0;
}

void SimScenario::check() const {
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "scenario sample size must be >= 2");
  const int need = kind == ScenarioKind::TteRct ? 10 : 5;
  if (dimension() < need)
    throw Error(ErrorCode::InvalidArgument, to_string(kind) + " needs at least " + std::to_string(need) + " covariates");
  if (!(block_rho >= 0.0 && block_rho < 1.0)) throw Error(ErrorCode::InvalidArgument, "block_rho must lie in [0, 1)");
}

Matrix scenario_covariance(const SimScenario& s) {
  const int p = s.dimension();
  Matrix sigma = Matrix::Identity(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      if (i == j) continue;
      if (s.kind == ScenarioKind::BinObs)
        sigma(i, j) = 0.1 * std::pow(std::abs(i - j), -1.8);
      else if (s.kind == ScenarioKind::TteRct && i / 10 == j / 10)
        sigma(i, j) = s.block_rho;
    }
  return sigma;
}

ObservedDataset generate(const SimScenario& s) {
  s.check();
  const auto n = static_cast<Eigen::Index>(s.n);
  const int p = s.dimension();
  RandomStream wr = stream(s, kCovariates), ar = stream(s, kTreatment), yr = stream(s, kOutcome),
               cr = stream(s, kCensoring);
  Matrix chol;
  if (s.kind == ScenarioKind::BinObs) chol = toeplitz_cholesky(s);

  ObservedDataset d;
  d.covariates = draw_covariates(s, s.n, wr, s.kind == ScenarioKind::BinObs ? &chol : nullptr);
  d.treatment.resize(n);
  for (int j = 0; j < p; ++j) d.covariate_names.push_back("W" + std::to_string(j + 1));
  const Matrix& W = d.covariates;

  switch (s.kind) {
    case ScenarioKind::ContObs: {
      Vector y(n);
      const double sd = std::sqrt(0.5);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double a = ar.bernoulli(expit((W(i, 0) - W(i, 1) + W(i, 2)) / 4.0)) ? 1.0 : 0.0;
        d.treatment[i] = a;
        y[i] = cont_q(a, row_sum(W, i, 5)) + sd * yr.normal();
      }
      d.outcome = ContinuousOutcome{std::move(y)};
      break;
    }
    case ScenarioKind::BinObs: {
      Vector y(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double a = ar.bernoulli(expit((W(i, 0) + W(i, 1) + W(i, 2)) / 4.0)) ? 1.0 : 0.0;
        d.treatment[i] = a;
        y[i] = yr.bernoulli(bin_q(a, row_sum(W, i, 5))) ? 1.0 : 0.0;
      }
      d.outcome = BinaryOutcome{std::move(y)};
      break;
    }
    case ScenarioKind::TteRct: {
      SurvivalOutcome out;
      out.t_max = kTteGridMax;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double a = ar.bernoulli(0.5) ? 1.0 : 0.0;
        d.treatment[i] = a;
        const long c = std::min<long>(cr.geometric_shifted(tte_censor_hazard(s, a, W(i, 0))), kTteGridMax);
        const long t = yr.geometric_shifted(tte_hazard(a, row_sum(W, i, 10)));
        out.t_tilde.push_back(static_cast<int>(std::min(t, c)));
        out.delta.push_back(t > c ? 1 : 0);  // ties count as events
      }
      d.outcome = std::move(out);
      break;
    }
  }
  return d;
}

TrueNuisances true_nuisances(const SimScenario& s, const ObservedDataset& raw) {
  const Matrix& W = raw.covariates;
  const Eigen::Index n = W.rows();
  TrueNuisances t;
  t.g.resize(n);
  switch (s.kind) {
    case ScenarioKind::ContObs:
    case ScenarioKind::BinObs: {
      t.q1.resize(n);
      t.q0.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double s5 = row_sum(W, i, 5);
        if (s.kind == ScenarioKind::ContObs) {
          t.g[i] = expit((W(i, 0) - W(i, 1) + W(i, 2)) / 4.0);
          t.q1[i] = cont_q(1.0, s5);
          t.q0[i] = cont_q(0.0, s5);
        } else {
          t.g[i] = expit((W(i, 0) + W(i, 1) + W(i, 2)) / 4.0);
          t.q1[i] = bin_q(1.0, s5);
          t.q0[i] = bin_q(0.0, s5);
        }
      }
      break;
    }
    case ScenarioKind::TteRct: {
      t.g.setConstant(0.5);
      const int H = kTteGridMax;
      Matrix h1(n, H), h0(n, H), c1(n, H), c0(n, H);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double s10 = row_sum(W, i, 10);
        for (int a = 0; a < 2; ++a) {
          const double lam = tte_hazard(a, s10);
          const double lc = tte_censor_hazard(s, a, W(i, 0));
          Matrix& h = a == 1 ? h1 : h0;
          Matrix& c = a == 1 ? c1 : c0;
          for (int u = 1; u <= H; ++u) {
            h(i, u - 1) = lam;
            c(i, u - 1) = u < H ? std::pow(1.0 - lc, u) : 0.0;  // C is capped at the last grid point
          }
        }
      }
      t.survival = SurvivalNuisanceFit::from_hazards(std::move(h1), std::move(h0), std::move(c1), std::move(c0));
      t.survival->hazard_provenance = t.survival->censoring_provenance = "generating model";
      break;
    }
  }
  return t;
}

EstimandKind scenario_estimand(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::ContObs: return EstimandKind::abs_cont();
    case ScenarioKind::BinObs: return EstimandKind::rel_cont();
    case ScenarioKind::TteRct: return EstimandKind::abs_surv(kTteHorizon);
  }
  return EstimandKind::abs_cont();
}

OracleTruth oracle_truth(const SimScenario& s, std::size_t draws) {
  s.check();
  const int p = s.dimension();
  OracleTruth out;
  if (s.kind == ScenarioKind::ContObs) {
    out.truth = Vector::Zero(p);
    out.truth.head(5).setConstant(5.0);
    out.mc_se = Vector::Zero(p);
    out.tems = {0, 1, 2, 3, 4};
    out.provenance = "closed-form";
    return out;
  }
  if (draws < 2) throw Error(ErrorCode::InvalidArgument, "Monte Carlo truth needs at least 2 draws");

  // Theta_j = E[f(W) W_j] / E[W_j^2] with E[W_j^2] = 1 for every scenario.
  SimScenario key = s;
  key.replicate = ~std::uint64_t{0};
  key.n = draws;
  RandomStream rng = stream(key, kTruth);
  Matrix chol;
  if (s.kind == ScenarioKind::BinObs) chol = toeplitz_cholesky(s);
  Vector sum = Vector::Zero(p), sum2 = Vector::Zero(p);
  const std::size_t batch = 2000;
  for (std::size_t done = 0; done < draws; done += batch) {
    const std::size_t m = std::min(batch, draws - done);
    const Matrix W = draw_covariates(s, m, rng, s.kind == ScenarioKind::BinObs ? &chol : nullptr);
    Vector f(static_cast<Eigen::Index>(m));
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      if (s.kind == ScenarioKind::BinObs) {
        const double s5 = row_sum(W, i, 5);
        f[i] = std::log(bin_q(1.0, s5)) - std::log(bin_q(0.0, s5));
      } else {
        const double s10 = row_sum(W, i, 10);
        const double l1 = tte_hazard(1.0, s10), l0 = tte_hazard(0.0, s10);
        double acc = 0.0;
        for (int u = 1; u <= kTteHorizon; ++u) acc += std::pow(1.0 - l1, u) - std::pow(1.0 - l0, u);
        f[i] = acc;
      }
    }
    const Matrix fw = W.array().colwise() * f.array();
    sum += fw.colwise().sum().transpose();
    sum2 += fw.array().square().matrix().colwise().sum().transpose();
  }
  const auto nd = static_cast<double>(draws);
  out.truth = sum / nd;
  out.mc_se = ((sum2 / nd - out.truth.cwiseAbs2()).cwiseMax(0.0) / (nd - 1.0)).cwiseSqrt();
  const int k = s.kind == ScenarioKind::BinObs ? 5 : 10;
  for (int j = 0; j < k; ++j) out.tems.push_back(static_cast<std::size_t>(j));
  out.provenance = "monte-carlo(" + std::to_string(draws) + ")";
  return out;
}

ClassificationRates classification_rates(const std::vector<bool>& predicted, const std::vector<std::size_t>& tems) {
  std::vector<char> is_tem(predicted.size(), 0);
  for (std::size_t j : tems)
    if (j < is_tem.size()) is_tem[j] = 1;
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t j = 0; j < predicted.size(); ++j) {
    if (predicted[j]) (is_tem[j] ? tp : fp) += 1.0;
    else (is_tem[j] ? fn : tn) += 1.0;
  }
  ClassificationRates r;
  r.fdr = tp + fp > 0 ? fp / (tp + fp) : 0.0;
  r.tpr = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  r.tnr = tn + fp > 0 ? tn / (tn + fp) : 0.0;
  return r;
}

MetricsRow aggregate_metrics(const std::vector<const TidyRow*>& rows, const OracleTruth& truth, std::size_t failures) {
  MetricsRow m;
  m.failures = failures;
  if (rows.empty()) return m;
  m.scenario = rows.front()->scenario;
  m.n = rows.front()->n;
  m.estimator = rows.front()->estimator;

  const auto p = static_cast<std::size_t>(truth.truth.size());
  // Rows arrive grouped by replicate in covariate order.
  std::map<std::size_t, std::vector<const TidyRow*>> by_rep;
  for (const TidyRow* r : rows) by_rep[r->rep].push_back(r);
  m.reps = by_rep.size();

  std::vector<char> is_tem(p, 0);
  for (std::size_t j : truth.tems) is_tem[j] = 1;
  std::vector<double> sum(p, 0.0), sum2(p, 0.0), se2(p, 0.0);
  std::vector<std::size_t> count(p, 0);
  ClassificationRates rates;
  for (const auto& [rep, rr] : by_rep) {
    std::vector<bool> pred(p, false);
    for (std::size_t k = 0; k < rr.size(); ++k) {
      const std::size_t j = static_cast<std::size_t>(std::stoul(rr[k]->covariate.substr(1))) - 1;
      sum[j] += rr[k]->estimate;
      sum2[j] += rr[k]->estimate * rr[k]->estimate;
      se2[j] += rr[k]->std_err * rr[k]->std_err;
      ++count[j];
      pred[j] = rr[k]->tem;
    }
    const ClassificationRates r = classification_rates(pred, truth.tems);
    rates.fdr += r.fdr;
    rates.tnr += r.tnr;
    rates.tpr += r.tpr;
  }
  const auto reps = static_cast<double>(m.reps);
  m.fdr = rates.fdr / reps;
  m.tnr = rates.tnr / reps;
  m.tpr = rates.tpr / reps;

  double nt = 0, nn = 0;
  for (std::size_t j = 0; j < p; ++j) {
    if (count[j] == 0) continue;
    const auto c = static_cast<double>(count[j]);
    const double mean = sum[j] / c;
    const double bias = std::abs(mean - truth.truth[static_cast<Eigen::Index>(j)]);
    const double var = c > 1 ? (sum2[j] - c * mean * mean) / (c - 1.0) : 0.0;
    if (is_tem[j]) {
      m.bias_tem += bias;
      m.var_tem += var;
      m.se2_tem += se2[j] / c;
      nt += 1;
    } else {
      m.bias_nontem += bias;
      m.var_nontem += var;
      nn += 1;
    }
  }
  if (nt > 0) m.bias_tem /= nt, m.var_tem /= nt, m.se2_tem /= nt;
  if (nn > 0) m.bias_nontem /= nn, m.var_nontem /= nn;
  return m;
}

ReplicateOutput run_replicates(const ReplicateConfig& cfg) {
  if (cfg.reps < 1) throw Error(ErrorCode::InvalidArgument, "need at least one replicate");
  if (cfg.estimators.empty()) throw Error(ErrorCode::InvalidArgument, "no estimators requested");
  ReplicateOutput out;
  for (ScenarioKind kind : cfg.scenarios) {
    SimScenario base;
    base.kind = kind;
    base.seed = cfg.seed;
    base.p = cfg.p;
    const OracleTruth truth = oracle_truth(base, cfg.truth_draws);
    for (std::size_t n : cfg.sample_sizes) {
      struct RepResult {
        std::vector<TidyRow> rows;
        std::string failure;
      };
      std::vector<RepResult> results(cfg.reps);
      const int threads = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();
      const auto reps = static_cast<long>(cfg.reps);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
      for (long r = 0; r < reps; ++r) {
        RepResult& rr = results[static_cast<std::size_t>(r)];
        SimScenario s = base;
        s.n = n;
        s.replicate = static_cast<std::uint64_t>(r);
        try {
          const ObservedDataset raw = generate(s);
          EstimationConfig ec = cfg.estimation;
          ec.kind = scenario_estimand(kind);
          ec.estimators = cfg.estimators;
          ec.fdr_level = cfg.fdr_level;
          ec.nuisance.seed = splitmix64(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(r) + 1));
          if (kind == ScenarioKind::TteRct) ec.known_propensity = 0.5;
          const EstimationOutput eo = run_estimation(raw, ec);
          for (const auto& est : eo.estimates)
            for (const auto& row : est.result.rows) {
              TidyRow t;
              t.scenario = to_string(kind);
              t.n = n;
              t.rep = static_cast<std::size_t>(r);
              t.estimator = to_string(est.estimator);
              t.covariate = row.covariate;
              t.estimate = row.estimate;
              t.std_err = row.std_err;
              t.p_adj = row.p_adj;
              const std::size_t j = static_cast<std::size_t>(std::stoul(row.covariate.substr(1))) - 1;
              t.truth = truth.truth[static_cast<Eigen::Index>(j)];
              t.tem = row.tem;
              rr.rows.push_back(std::move(t));
            }
        } catch (const std::exception& e) {
          rr.failure = to_string(kind) + " n=" + std::to_string(n) + " rep=" + std::to_string(r) + ": " + e.what();
        }
      }
      std::size_t failures = 0;
      const std::size_t first = out.tidy.size();
      for (auto& rr : results) {
        if (!rr.failure.empty()) {
          ++failures;
          out.failures.push_back(rr.failure);
        }
        for (auto& row : rr.rows) out.tidy.push_back(std::move(row));
      }
      for (EstimatorKind est : cfg.estimators) {
        std::vector<const TidyRow*> cell;
        for (std::size_t k = first; k < out.tidy.size(); ++k)
          if (out.tidy[k].estimator == to_string(est)) cell.push_back(&out.tidy[k]);
        MetricsRow mrow = aggregate_metrics(cell, truth, failures);
        mrow.scenario = to_string(kind);
        mrow.n = n;
        mrow.estimator = to_string(est);
        out.metrics.push_back(mrow);
      }
    }
  }
  return out;
}

}  // namespace temvip
