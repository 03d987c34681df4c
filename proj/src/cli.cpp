#include "temvip/cli.hpp"

#include "temvip/csv.hpp"
#include "temvip/log.hpp"

#include <CLI11.hpp>
#include <omp.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace temvip {

using nlohmann::json;

namespace {

json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json warnings_json(const Diagnostics& diag) {
  json out = json::array();
  for (const auto& w : diag.items())
    out.push_back({{"code", std::string(to_string(w.code))}, {"message", w.message}});
  return out;
}

json preprocessing_json(const ObservedDataset& raw_names, const PreprocessReport& r) {
  json centers = json::object();
  const auto& names = raw_names.covariate_names;
  for (std::size_t j = 0; j < r.centers.size() && j < names.size(); ++j) centers[names[j]] = number(r.centers[j]);
  json out{{"dropped_columns", r.dropped_columns}, {"centers", centers}};
  if (r.scale_info) out["outcome_scale"] = {{"min", r.scale_info->min}, {"max", r.scale_info->max}};
  return out;
}

json nuisance_json(const NuisanceBundle& b) {
  json out{{"propensity", b.propensity.provenance}};
  if (b.outcome) out["outcome"] = b.outcome->provenance;
  if (b.survival) {
    out["hazard"] = b.survival->hazard_provenance;
    out["censoring"] = b.survival->censoring_provenance;
  }
  return out;
}

// Names of the raw covariates, needed to label the centers after filtering.
ObservedDataset names_only(const ObservedDataset& raw) {
  ObservedDataset d;
  d.covariate_names = raw.covariate_names;
  return d;
}

bool write_file(const std::string& path, const std::string& body, std::ostream& err) {
  std::ofstream f(path, std::ios::binary);
  if (!f) {
    err << "temvip: cannot write '" << path << "'\n";
    return false;
  }
  f << body;
  return static_cast<bool>(f);
}

int fail(std::ostream& err, const Error& e) {
  err << "temvip: " << to_string(e.code()) << ": " << e.what() << '\n';
  return is_validation_error(e.code()) ? kExitValidation : kExitEstimation;
}

}  // namespace

json build_manifest(const RunConfig& cfg, const EstimationOutput& run) {
  json m;
  m["config"] = cfg.to_json();
  m["n"] = run.data.n();
  m["p"] = run.data.p();
  m["nuisances"] = nuisance_json(run.nuisances);
  json ests = json::array();
  for (const auto& e : run.estimates) {
    json est{{"estimator", to_string(e.estimator)}, {"estimand", e.result.kind.name()}};
    if (e.estimator == EstimatorKind::Tml) {
      json tilts = json::array();
      for (std::size_t j = 0; j < e.fit.tilts.size(); ++j) {
        const TiltState& t = e.fit.tilts[j];
        tilts.push_back({{"covariate", run.data.covariate_names[j]},
                         {"iterations", t.iterations},
                         {"converged", t.converged},
                         {"epsilon", number(t.epsilon)},
                         {"total_epsilon", number(t.total_epsilon)},
                         {"score_ratio", number(t.score_ratio)}});
      }
      est["tilts"] = std::move(tilts);
    }
    std::size_t tems = 0;
    for (const auto& r : e.result.rows) tems += r.tem;
    est["tem_count"] = tems;
    ests.push_back(std::move(est));
  }
  m["estimates"] = std::move(ests);
  m["warnings"] = warnings_json(run.diagnostics);
  return m;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::InvalidArgument, "cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, "config '" + path + "' is not valid JSON: " + e.what());
  }
  if (j.is_object() && j.contains("config") && j["config"].is_object()) return RunConfig::from_json(j["config"]);
  return RunConfig::from_json(j);
}

int cmd_estimate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  EstimationOutput run;
  ObservedDataset raw;
  try {
    cfg.check();
    if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
    log::info("reading " + cfg.data);
    raw = parse_csv(cfg.data, cfg.roles);
    log::info("n=" + std::to_string(raw.n()) + " p=" + std::to_string(raw.p()));
    run = run_estimation(raw, cfg.estimation());
  } catch (const Error& e) {
    return fail(err, e);
  } catch (const std::exception& e) {
    err << "temvip: " << e.what() << '\n';
    return kExitEstimation;
  }

  for (const auto& w : run.diagnostics.items())
    log::warn(std::string(to_string(w.code)) + ": " + w.message);

  std::ostringstream table;
  write_result_csv(table, run.estimates.front().result);
  json manifest = build_manifest(cfg, run);
  manifest["preprocessing"] = preprocessing_json(names_only(raw), run.report);
  if (!write_file(cfg.output, table.str(), err)) return kExitEstimation;
  if (!write_file(cfg.manifest_path(), manifest.dump(2) + "\n", err)) return kExitEstimation;

  std::size_t tems = 0;
  for (const auto& r : run.estimates.front().result.rows) tems += r.tem;
  out << run.estimates.front().result.rows.size() << " covariates, " << tems << " flagged; wrote " << cfg.output
      << '\n';
  return kExitOk;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  ReplicateConfig rc;
  try {
    cfg.check();
    rc = cfg.replicate();
  } catch (const Error& e) {
    return fail(err, e);
  }

  ReplicateOutput res;
  try {
    res = run_replicates(rc);
  } catch (const Error& e) {
    return fail(err, e);
  }

  std::ostringstream tidy, metrics;
  write_tidy_csv(tidy, res.tidy);
  write_metrics_csv(metrics, res.metrics);
  if (!write_file(cfg.tidy_output, tidy.str(), err)) return kExitEstimation;
  if (!write_file(cfg.metrics_output, metrics.str(), err)) return kExitEstimation;

  for (const auto& m : res.metrics) {
    char line[256];
    std::snprintf(line, sizeof line, "%s n=%zu %s: FDR=%.4f TPR=%.4f TNR=%.4f (reps=%zu, failed=%zu)\n",
                  m.scenario.c_str(), m.n, m.estimator.c_str(), m.fdr, m.tpr, m.tnr, m.reps, m.failures);
    out << line;
  }
  for (const auto& f : res.failures) log::warn(f);
  const std::size_t total = rc.scenarios.size() * rc.sample_sizes.size() * rc.reps;
  if (!res.failures.empty()) err << "temvip: " << res.failures.size() << " of " << total << " replicates failed\n";
  return res.failures.size() == total ? kExitEstimation : kExitOk;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  // The config file is read first so that explicit flags land on top of it.
  std::string config_path;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) config_path = argv[i + 1];
    else if (a.rfind("--config=", 0) == 0) config_path = a.substr(9);
  }
  RunConfig c;
  if (!config_path.empty()) {
    try {
      c = load_config(config_path);
    } catch (const Error& e) {
      return fail(err, e);
    }
  }

  CLI::App app{"Treatment-effect-modifier variable importance"};
  app.require_subcommand(1);
  std::string unused_config;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", unused_config, "JSON config file or run manifest; flags override it");
    sub->add_option("--seed", c.seed, "Random seed");
    sub->add_option("--threads", c.threads, "OpenMP threads (0 = all cores)");
    sub->add_option("--fdr", c.fdr_level, "BH FDR level");
    sub->add_option("--cross-fit", c.cross_fit, "Cross-fitting folds (0 = off)");
    sub->add_option("--truncation", c.truncation, "Propensity truncation delta");
  };

  auto* est = app.add_subcommand("estimate", "Estimate TEM-VIPs on a CSV file");
  common(est);
  est->add_option("--data", c.data, "Input CSV");
  est->add_option("-o,--output", c.output, "Result CSV");
  est->add_option("--manifest", c.manifest, "Run manifest (default: <output>.manifest.json)");
  est->add_option("--treatment", c.roles.treatment, "Treatment column");
  est->add_option("--outcome", c.roles.outcome, "Outcome column");
  est->add_option("--time", c.roles.time, "Observed time column (survival)");
  est->add_option("--censor", c.roles.censor, "Censoring indicator column, 1 = censored");
  est->add_option("--include", c.roles.include, "Covariate columns to use");
  est->add_option("--exclude", c.roles.exclude, "Columns to ignore");
  std::string outcome_type;
  auto* ot = est->add_option("--outcome-type", outcome_type, "auto | continuous | binary | survival");
  est->add_option("--bin-width", c.roles.bin_width, "Width of a time bin (survival)");
  est->add_option("--estimand", c.estimand, "abs-cont | rel-cont | abs-surv | rel-surv");
  est->add_option("--estimator", c.estimator, "onestep | tml");
  est->add_option("--horizon", c.horizon, "Horizon t on the binned grid (survival)");
  est->add_option("--q-min", c.q_min, "Floor for relative-estimand denominators");
  est->add_option("--censoring-floor", c.censoring_floor, "Floor for the censoring survival");
  est->add_option("--cv-folds", c.cv_folds, "Folds for learner selection");
  double known = 0.0;
  auto* kp = est->add_option("--known-propensity", known, "Use a constant propensity (RCT)");
  est->add_flag("--km-censoring", c.km_censoring, "Kaplan-Meier censoring by arm");
  est->add_option("--alpha", c.alpha, "CI level is 1 - alpha");
  est->add_option("--threshold", c.effect_threshold, "Effect threshold m for TEM labels");
  est->add_option("--null-threshold", c.null_threshold, "Null margin for the Wald test");
  est->add_option("--tilt-tol", c.tilt_tol, "TML stopping tolerance");
  est->add_option("--max-tilt-iter", c.max_tilt_iter, "TML iteration cap");

  auto* sim = app.add_subcommand("simulate", "Run the simulation harness");
  common(sim);
  sim->add_option("--scenario", c.scenarios, "cont-obs | bin-obs | tte-rct");
  sim->add_option("--n", c.sample_sizes, "Sample sizes");
  sim->add_option("--estimators", c.estimators, "onestep, tml");
  sim->add_option("--reps", c.reps, "Replicates per cell");
  sim->add_flag("--full-grid", c.full_grid, "200 replicates at five sample sizes");
  sim->add_option("--p", c.p, "Covariate dimension (0 = scenario default)");
  sim->add_option("--truth-draws", c.truth_draws, "Monte Carlo draws for the oracle truth");
  sim->add_option("--tidy", c.tidy_output, "Tidy CSV");
  sim->add_option("--metrics", c.metrics_output, "Metrics CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (ot->count() > 0) c.roles.outcome_type = parse_outcome_type(outcome_type);
    if (kp->count() > 0) c.known_propensity = known;
  } catch (const Error& e) {
    return fail(err, e);
  }

  if (est->parsed()) {
    c.command = "estimate";
    return cmd_estimate(c, out, err);
  }
  c.command = "simulate";
  return cmd_simulate(c, out, err);
}

}  // namespace temvip
