// Acceptance checks 1-10. One PASS/FAIL line per criterion; exit code 1 if any fails.
#include "temvip/cli.hpp"
#include "temvip/config.hpp"
#include "temvip/estimators.hpp"
#include "temvip/pipeline.hpp"
#include "temvip/sim.hpp"

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace temvip;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void run(int id, const std::function<Verdict()>& body, double budget_s = 0.0) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0.0 && secs > budget_s) {
    v.pass = false;
    v.detail += " [over the " + std::to_string(static_cast<int>(budget_s)) + " s budget]";
  }
  if (!v.pass) ++failures;
  std::printf("criterion %d: %s  %s  (%.1f s)\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

// The n=200, p=10 instances shared by criteria 1 and 2.
struct Instance {
  std::string label;
  ScenarioKind scenario;
  EstimandKind kind;
};

std::vector<Instance> small_instances() {
  return {{"cont-obs abs-cont", ScenarioKind::ContObs, EstimandKind::abs_cont()},
          {"bin-obs abs-cont", ScenarioKind::BinObs, EstimandKind::abs_cont()},
          {"bin-obs rel-cont", ScenarioKind::BinObs, EstimandKind::rel_cont()},
          {"tte-rct abs-surv", ScenarioKind::TteRct, EstimandKind::abs_surv(kTteHorizon)},
          {"tte-rct rel-surv", ScenarioKind::TteRct, EstimandKind::rel_surv(kTteHorizon)}};
}

EstimationOutput fit_instance(const Instance& in, EstimatorKind est) {
  SimScenario s;
  s.kind = in.scenario;
  s.n = 200;
  s.p = 10;
  s.seed = 2024;
  EstimationConfig cfg;
  cfg.kind = in.kind;
  cfg.estimators = {est};
  if (in.scenario == ScenarioKind::TteRct) cfg.known_propensity = 0.5;
  return run_estimation(generate(s), cfg);
}

Verdict criterion1() {
  double worst = 0.0;
  std::string at;
  for (const auto& in : small_instances()) {
    const auto out = fit_instance(in, EstimatorKind::OneStep);
    const double m = out.estimates[0].fit.eif.means.cwiseAbs().maxCoeff();
    if (m >= worst) worst = m, at = in.label;
  }
  return {worst < 1e-10, "max |mean EIF| " + fmt("%.2e", worst) + " (" + at + "), bound 1e-10"};
}

Verdict criterion2() {
  double worst = 0.0;
  int unconverged = 0;
  std::string at;
  for (const auto& in : small_instances()) {
    const auto out = fit_instance(in, EstimatorKind::Tml);
    const auto& fit = out.estimates[0].fit;
    for (Eigen::Index j = 0; j < fit.estimates.size(); ++j) {
      const double r = std::abs(fit.eif.means[j]) / std::sqrt(fit.eif.sigma2[j]);
      if (r >= worst) worst = r, at = in.label;
      if (!fit.tilts[static_cast<std::size_t>(j)].converged) ++unconverged;
    }
  }
  return {worst < 1e-4, "max |mean D|/sigma " + fmt("%.2e", worst) + " (" + at + "), bound 1e-4, unconverged " +
                            std::to_string(unconverged)};
}

// Criteria 3 and 4 share one run.
ReplicateOutput cont_recovery_run() {
  ReplicateConfig cfg;
  cfg.scenarios = {ScenarioKind::ContObs};
  cfg.sample_sizes = {1000};
  cfg.reps = 50;
  cfg.seed = 7;
  cfg.estimation.cross_fit_k = 5;
  return run_replicates(cfg);
}

Verdict criterion3(const ReplicateOutput& run3) {
  bool ok = run3.failures.empty();
  std::string detail;
  for (const char* est : {"onestep", "tml"}) {
    std::map<std::string, std::pair<double, int>> sums;
    for (const auto& r : run3.tidy)
      if (r.estimator == est) {
        sums[r.covariate].first += r.estimate;
        ++sums[r.covariate].second;
      }
    double lo = 1e300, hi = -1e300, nontem = 0.0;
    int n_non = 0;
    for (const auto& [name, s] : sums) {
      const double mean = s.first / s.second;
      const int j = std::stoi(name.substr(1));
      if (j <= 5) {
        lo = std::min(lo, mean);
        hi = std::max(hi, mean);
      } else {
        nontem += std::abs(mean);
        ++n_non;
      }
    }
    nontem /= n_non;
    ok = ok && lo >= 4.5 && hi <= 5.5 && nontem < 0.15;
    detail += std::string(est) + ": TEM means in [" + fmt("%.3f", lo) + ", " + fmt("%.3f", hi) +
              "], non-TEM mean |bias| " + fmt("%.3f", nontem) + "; ";
  }
  return {ok, detail + "failed reps " + std::to_string(run3.failures.size())};
}

Verdict criterion4(const ReplicateOutput& run3) {
  bool ok = !run3.metrics.empty();
  std::string detail;
  for (const auto& m : run3.metrics) {
    ok = ok && m.fdr <= 0.075 && m.tnr >= 0.99;
    detail += m.estimator + ": FDR " + fmt("%.3f", m.fdr) + " TNR " + fmt("%.4f", m.tnr) + " TPR " +
              fmt("%.3f", m.tpr) + "; ";
  }
  if (!detail.empty()) detail.resize(detail.size() - 2);
  return {ok, detail};
}

// Replicate-level bias averaged over the TEM columns, with its Monte Carlo SE
// (oracle MC error added in quadrature).
struct BiasSummary {
  double bias = 0.0;
  double se = 0.0;
};

BiasSummary pooled_bias(const std::vector<double>& per_rep, const OracleTruth& truth) {
  const double k = static_cast<double>(per_rep.size());
  double mean = 0.0;
  for (double b : per_rep) mean += b;
  mean /= k;
  double ss = 0.0;
  for (double b : per_rep) ss += (b - mean) * (b - mean);
  double truth_se = 0.0;
  for (std::size_t j : truth.tems) truth_se += truth.mc_se[static_cast<Eigen::Index>(j)];
  truth_se /= static_cast<double>(truth.tems.size());
  return {mean, std::sqrt(ss / (k - 1.0) / k + truth_se * truth_se)};
}

double tem_bias(const Vector& estimates, const OracleTruth& truth) {
  double b = 0.0;
  for (std::size_t j : truth.tems) {
    const auto jj = static_cast<Eigen::Index>(j);
    b += estimates[jj] - truth.truth[jj];
  }
  return b / static_cast<double>(truth.tems.size());
}

enum class Misfit { OutcomeOnly, PropensityOnly };

BiasSummary robustness_case(ScenarioKind scenario, EstimandKind kind, Misfit which) {
  SimScenario base;
  base.kind = scenario;
  base.p = 20;
  base.n = 5000;
  base.seed = 31;
  const OracleTruth truth = oracle_truth(base, 1000000);
  std::vector<double> per_rep;
  for (std::uint64_t r = 0; r < 20; ++r) {
    SimScenario s = base;
    s.replicate = r;
    const ObservedDataset raw = generate(s);
    const TrueNuisances tn = true_nuisances(s, raw);
    EstimationConfig cfg;
    cfg.kind = kind;
    cfg.nuisance.seed = 100 + r;
    LearnerSpec constant;
    constant.intercept_only = true;
    if (which == Misfit::OutcomeOnly) {
      cfg.supplied_propensity = PropensityFit::from_values(tn.g);
      constant.family = raw.family() == OutcomeFamily::Binary ? Family::Logistic : Family::Linear;
      cfg.outcome_menu = {constant};
    } else {
      cfg.supplied_outcome = OutcomeRegressionFit::from_values(tn.q1, tn.q0, raw.treatment);
      constant.family = Family::Logistic;
      cfg.propensity_menu = {constant};
    }
    per_rep.push_back(tem_bias(run_estimation(raw, cfg).estimates[0].fit.estimates, truth));
  }
  return pooled_bias(per_rep, truth);
}

Verdict criterion5() {
  const BiasSummary a = robustness_case(ScenarioKind::ContObs, EstimandKind::abs_cont(), Misfit::OutcomeOnly);
  const BiasSummary b = robustness_case(ScenarioKind::ContObs, EstimandKind::abs_cont(), Misfit::PropensityOnly);
  const BiasSummary c = robustness_case(ScenarioKind::BinObs, EstimandKind::rel_cont(), Misfit::OutcomeOnly);
  auto line = [](const char* tag, const BiasSummary& s) {
    return std::string(tag) + " bias " + fmt("%.4f", s.bias) + " (" + fmt("%.1f", std::abs(s.bias) / s.se) + " SE)";
  };
  const bool ok = std::abs(a.bias) < 3.0 * a.se && std::abs(b.bias) < 3.0 * b.se && std::abs(c.bias) > 3.0 * c.se;
  return {ok, line("abs true g", a) + "; " + line("abs true Q", b) + "; " + line("rel true g", c)};
}

Verdict criterion6() {
  SimScenario s;
  s.kind = ScenarioKind::TteRct;
  s.n = 600;
  s.p = 10;
  s.seed = 12;
  ObservedDataset raw = generate(s);
  SurvivalOutcome& so = std::get<SurvivalOutcome>(raw.outcome);
  for (auto& d : so.delta) d = 0;  // every time observed
  EstimationConfig cfg;
  cfg.kind = EstimandKind::abs_surv(1);
  const EstimationOutput out = run_estimation(raw, cfg);

  ObservedDataset cont;
  cont.covariates = out.data.covariates;
  cont.treatment = out.data.treatment;
  cont.covariate_names = out.data.covariate_names;
  Vector y(cont.covariates.rows());
  for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = out.data.survival().t_tilde[static_cast<std::size_t>(i)] > 1;
  cont.outcome = BinaryOutcome{y};
  const SurvivalNuisanceFit& sv = *out.nuisances.survival;
  NuisanceBundle b;
  b.propensity = out.nuisances.propensity;
  b.outcome = OutcomeRegressionFit::from_values(Vector(1.0 - sv.hazard[1].col(0).array()),
                                                Vector(1.0 - sv.hazard[0].col(0).array()), cont.treatment, true);
  const EstimateResult ref = onestep_estimate(cont, EstimandKind::abs_cont(), b, 1e-3, nullptr);
  const double gap = (ref.estimates - out.estimates[0].fit.estimates).cwiseAbs().maxCoeff();
  return {gap < 1e-8, "max |AbsSurv(t=1) - AbsCont(I(T>1))| " + fmt("%.2e", gap) + ", bound 1e-8"};
}

Verdict criterion7() {
  SimScenario base;
  base.kind = ScenarioKind::TteRct;
  base.p = 20;
  base.n = 2000;
  base.seed = 77;
  base.arm_only_censoring = true;
  const OracleTruth truth = oracle_truth(base, 1000000);
  std::vector<double> per_rep;
  for (std::uint64_t r = 0; r < 20; ++r) {
    SimScenario s = base;
    s.replicate = r;
    EstimationConfig cfg;
    cfg.kind = EstimandKind::abs_surv(kTteHorizon);
    cfg.known_propensity = 0.5;
    cfg.km_censoring = true;
    LearnerSpec time_only;  // baseline hazard only: ignores treatment and covariates
    time_only.family = Family::Logistic;
    time_only.intercept_only = true;
    cfg.hazard_menu = {time_only};
    cfg.nuisance.seed = 500 + r;
    per_rep.push_back(tem_bias(run_estimation(generate(s), cfg).estimates[0].fit.estimates, truth));
  }
  const BiasSummary b = pooled_bias(per_rep, truth);
  return {std::abs(b.bias) < 3.0 * b.se,
          "TEM bias " + fmt("%.4f", b.bias) + " = " + fmt("%.2f", std::abs(b.bias) / b.se) + " MC-SE, bound 3"};
}

Verdict criterion8() {
  ReplicateConfig cfg;
  cfg.scenarios = {ScenarioKind::ContObs};
  cfg.sample_sizes = {1000};
  cfg.reps = 200;
  cfg.seed = 8;
  cfg.estimators = {EstimatorKind::OneStep};
  const ReplicateOutput out = run_replicates(cfg);
  std::vector<double> est, se2;
  for (const auto& r : out.tidy)
    if (r.covariate == "W1") {
      est.push_back(r.estimate);
      se2.push_back(r.std_err * r.std_err);
    }
  const double k = static_cast<double>(est.size());
  double mean = 0.0, mse2 = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) mean += est[i], mse2 += se2[i];
  mean /= k;
  mse2 /= k;
  double var = 0.0;
  for (double e : est) var += (e - mean) * (e - mean);
  var /= k - 1.0;
  const double ratio = mse2 / var;
  return {out.failures.empty() && std::abs(ratio - 1.0) <= 0.2,
          "mean sigma^2/n " + fmt("%.4f", mse2) + " vs empirical variance " + fmt("%.4f", var) + " (ratio " +
              fmt("%.3f", ratio) + "), reps " + std::to_string(est.size())};
}

Verdict criterion9() {
  bool ok = true;
  std::string bad;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) ok = false, bad += what + "; ";
  };
  const double z = 1.959963984540054;  // Phi^{-1}(0.975)
  InferenceConfig ic;
  const auto w = wald_inference({"W1"}, Vector::Constant(1, 2.0), Vector::Constant(1, 4.0), 100, ic, nullptr);
  const auto& row = w.rows[0];
  expect(std::abs(row.ci_lower - (2.0 - z * 0.2)) < 1e-6, "ci_lower");
  expect(std::abs(row.ci_upper - (2.0 + z * 0.2)) < 1e-6, "ci_upper");
  expect(std::round(row.ci_lower * 1000) == 1608 && std::round(row.ci_upper * 1000) == 2392, "rounded CI");
  const auto zero = wald_inference({"W1"}, Vector::Zero(1), Vector::Constant(1, 3.0), 50, ic, nullptr);
  expect(std::abs(zero.rows[0].p_value - 1.0) < 1e-12, "p at 0");

  auto close = [](const Vector& a, std::vector<double> b) {
    if (a.size() != static_cast<Eigen::Index>(b.size())) return false;
    for (Eigen::Index i = 0; i < a.size(); ++i)
      if (std::abs(a[i] - b[static_cast<std::size_t>(i)]) > 1e-6) return false;
    return true;
  };
  Vector p4(4), p3(3), ones = Vector::Ones(5), one(1);
  p4 << 0.01, 0.02, 0.03, 0.04;
  p3 << 0.005, 0.2, 0.9;
  one << 0.37;
  expect(close(benjamini_hochberg(p4), {0.04, 0.04, 0.04, 0.04}), "BH (0.01..0.04)");
  expect(close(benjamini_hochberg(p3), {0.015, 0.3, 0.9}), "BH (0.005, 0.2, 0.9)");
  expect(close(benjamini_hochberg(ones), {1, 1, 1, 1, 1}), "BH all ones");
  expect(close(benjamini_hochberg(one), {0.37}), "BH single");
  return {ok, ok ? "CI [" + fmt("%.6f", row.ci_lower) + ", " + fmt("%.6f", row.ci_upper) + "], BH examples match"
                 : "mismatch: " + bad};
}

Verdict criterion10() {
  const fs::path dir = fs::temp_directory_path() / ("temvip_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  auto once = [&](const std::string& tag) {
    RunConfig c;
    c.command = "simulate";
    c.scenarios = {"cont-obs", "tte-rct"};
    c.sample_sizes = {125};
    c.reps = 2;
    c.p = 20;
    c.truth_draws = 20000;
    c.seed = 99;
    c.threads = 1;
    c.tidy_output = (dir / (tag + "_tidy.csv")).string();
    c.metrics_output = (dir / (tag + "_metrics.csv")).string();
    std::ostringstream out, err;
    if (cmd_simulate(c, out, err) != 0) throw std::runtime_error("simulate failed: " + err.str());
    std::string all = out.str();
    for (const auto& path : {c.tidy_output, c.metrics_output}) {
      std::ifstream f(path, std::ios::binary);
      std::ostringstream s;
      s << f.rdbuf();
      all += s.str();
    }
    return all;
  };
  const std::string a = once("a"), b = once("b");
  fs::remove_all(dir);
  return {a == b && !a.empty(), std::to_string(a.size()) + " bytes, " + (a == b ? "identical" : "different")};
}

}  // namespace

int main() {
  run(9, criterion9);
  run(1, criterion1, 10.0);
  run(2, criterion2, 60.0);
  run(6, criterion6);
  run(10, criterion10);
  run(7, criterion7);
  run(5, criterion5);
  {
    ReplicateOutput shared;
    std::string err;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      shared = cont_recovery_run();
    } catch (const std::exception& e) {
      err = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("(criteria 3 and 4 share a 50-replicate run: %.1f s)\n", secs);
    run(3, [&] {
      if (!err.empty()) return Verdict{false, "exception: " + err};
      Verdict v = criterion3(shared);
      if (secs > 1800.0) v.pass = false, v.detail += " [over the 1800 s budget]";
      return v;
    });
    run(4, [&] { return err.empty() ? criterion4(shared) : Verdict{false, "exception: " + err}; });
  }
  run(8, criterion8);
  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
