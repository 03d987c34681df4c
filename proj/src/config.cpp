#include "temvip/config.hpp"

#include <algorithm>

namespace temvip {

using nlohmann::json;

namespace {

std::string penalty_name(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::None: return "none";
    case PenaltyKind::L1: return "l1";
    case PenaltyKind::L2: return "l2";
    case PenaltyKind::ElasticNet: return "elastic-net";
  }
  return "none";
}

PenaltyKind parse_penalty(const std::string& s) {
  if (s == "none") return PenaltyKind::None;
  if (s == "l1" || s == "lasso") return PenaltyKind::L1;
  if (s == "l2" || s == "ridge") return PenaltyKind::L2;
  if (s == "elastic-net" || s == "enet") return PenaltyKind::ElasticNet;
  throw Error(ErrorCode::InvalidArgument, "unknown penalty '" + s + "'");
}

json menu_to_json(const std::vector<LearnerSpec>& menu) {
  json out = json::array();
  for (const auto& s : menu) out.push_back(learner_to_json(s));
  return out;
}

std::vector<LearnerSpec> menu_from_json(const json& j) {
  std::vector<LearnerSpec> out;
  for (const auto& e : j) out.push_back(learner_from_json(e));
  return out;
}

// Reads j[key] into `out` when present; wrong types surface as InvalidArgument.
template <typename T>
void read(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

json learner_to_json(const LearnerSpec& s) {
  return json{{"penalty", penalty_name(s.penalty.kind)},
              {"lambda", s.penalty.lambda},
              {"alpha", s.penalty.alpha},
              {"interactions", s.interactions},
              {"intercept_only", s.intercept_only},
              {"relative_lambda", s.relative_lambda},
              {"max_iter", s.max_iter},
              {"tol", s.tol}};
}

LearnerSpec learner_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "learner spec must be a JSON object");
  LearnerSpec s;
  std::string pen = "l1";
  read(j, "penalty", pen);
  s.penalty.kind = parse_penalty(pen);
  read(j, "lambda", s.penalty.lambda);
  read(j, "alpha", s.penalty.alpha);
  read(j, "interactions", s.interactions);
  read(j, "intercept_only", s.intercept_only);
  read(j, "relative_lambda", s.relative_lambda);
  read(j, "max_iter", s.max_iter);
  read(j, "tol", s.tol);
  s.check();
  return s;
}

json RunConfig::to_json() const {
  json j;
  j["command"] = command;
  j["data"] = data;
  j["output"] = output;
  j["manifest"] = manifest;
  j["treatment"] = roles.treatment;
  j["outcome"] = roles.outcome;
  j["time"] = roles.time;
  j["censor"] = roles.censor;
  j["include"] = roles.include;
  j["exclude"] = roles.exclude;
  j["outcome_type"] = to_string(roles.outcome_type);
  j["bin_width"] = roles.bin_width;
  j["estimand"] = estimand;
  j["estimator"] = estimator;
  j["horizon"] = horizon;
  j["propensity_menu"] = menu_to_json(propensity_menu);
  j["outcome_menu"] = menu_to_json(outcome_menu);
  j["hazard_menu"] = menu_to_json(hazard_menu);
  j["censoring_menu"] = menu_to_json(censoring_menu);
  j["cross_fit"] = cross_fit;
  j["truncation"] = truncation;
  j["q_min"] = q_min;
  j["censoring_floor"] = censoring_floor;
  j["cv_folds"] = cv_folds;
  j["known_propensity"] = known_propensity ? json(*known_propensity) : json(nullptr);
  j["km_censoring"] = km_censoring;
  j["var_tol"] = var_tol;
  j["alpha"] = alpha;
  j["fdr_level"] = fdr_level;
  j["effect_threshold"] = effect_threshold;
  j["null_threshold"] = null_threshold;
  j["tilt_tol"] = tilt_tol;
  j["max_tilt_iter"] = max_tilt_iter;
  j["scenarios"] = scenarios;
  j["sample_sizes"] = sample_sizes;
  j["estimators"] = estimators;
  j["reps"] = reps;
  j["full_grid"] = full_grid;
  j["p"] = p;
  j["truth_draws"] = truth_draws;
  j["tidy_output"] = tidy_output;
  j["metrics_output"] = metrics_output;
  j["seed"] = seed;
  j["threads"] = threads;
  return j;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "config must be a JSON object");
  RunConfig c;
  read(j, "command", c.command);
  read(j, "data", c.data);
  read(j, "output", c.output);
  read(j, "manifest", c.manifest);
  read(j, "treatment", c.roles.treatment);
  read(j, "outcome", c.roles.outcome);
  read(j, "time", c.roles.time);
  read(j, "censor", c.roles.censor);
  read(j, "include", c.roles.include);
  read(j, "exclude", c.roles.exclude);
  std::string ot = to_string(c.roles.outcome_type);
  read(j, "outcome_type", ot);
  c.roles.outcome_type = parse_outcome_type(ot);
  read(j, "bin_width", c.roles.bin_width);
  read(j, "estimand", c.estimand);
  read(j, "estimator", c.estimator);
  read(j, "horizon", c.horizon);
  if (j.contains("propensity_menu")) c.propensity_menu = menu_from_json(j["propensity_menu"]);
  if (j.contains("outcome_menu")) c.outcome_menu = menu_from_json(j["outcome_menu"]);
  if (j.contains("hazard_menu")) c.hazard_menu = menu_from_json(j["hazard_menu"]);
  if (j.contains("censoring_menu")) c.censoring_menu = menu_from_json(j["censoring_menu"]);
  read(j, "cross_fit", c.cross_fit);
  read(j, "truncation", c.truncation);
  read(j, "q_min", c.q_min);
  read(j, "censoring_floor", c.censoring_floor);
  read(j, "cv_folds", c.cv_folds);
  if (j.contains("known_propensity") && !j["known_propensity"].is_null()) {
    double g = 0.0;
    read(j, "known_propensity", g);
    c.known_propensity = g;
  }
  read(j, "km_censoring", c.km_censoring);
  read(j, "var_tol", c.var_tol);
  read(j, "alpha", c.alpha);
  read(j, "fdr_level", c.fdr_level);
  read(j, "effect_threshold", c.effect_threshold);
  read(j, "null_threshold", c.null_threshold);
  read(j, "tilt_tol", c.tilt_tol);
  read(j, "max_tilt_iter", c.max_tilt_iter);
  read(j, "scenarios", c.scenarios);
  read(j, "sample_sizes", c.sample_sizes);
  read(j, "estimators", c.estimators);
  read(j, "reps", c.reps);
  read(j, "full_grid", c.full_grid);
  read(j, "p", c.p);
  read(j, "truth_draws", c.truth_draws);
  read(j, "tidy_output", c.tidy_output);
  read(j, "metrics_output", c.metrics_output);
  read(j, "seed", c.seed);
  read(j, "threads", c.threads);
  return c;
}

void RunConfig::check() const {
  auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, m); };
  if (command != "estimate" && command != "simulate") bad("unknown command '" + command + "'");
  if (command == "simulate") {
    for (const auto& s : scenarios) parse_scenario(s);
    for (const auto& e : estimators) parse_estimator(e);
    if (scenarios.empty() || sample_sizes.empty() || estimators.empty()) bad("empty simulation grid");
    if (reps == 0) bad("reps must be positive");
    return;
  }
  if (data.empty()) bad("no data file given");
  const auto kind = EstimandKind::parse(estimand, horizon);
  parse_estimator(estimator);
  if (roles.treatment.empty()) bad("treatment column not set");
  if (kind.survival()) {
    if (horizon < 1) bad("survival estimands need a horizon >= 1");
    if (roles.time.empty()) bad("survival estimands need a time column");
    if (roles.censor.empty()) bad("survival estimands need a censor column");
    if (!(roles.bin_width > 0.0)) bad("survival estimands need a positive bin width");
    if (roles.outcome_type != OutcomeType::Auto && roles.outcome_type != OutcomeType::Survival)
      bad("survival estimand with a non-survival outcome type");
  } else {
    if (roles.outcome.empty()) bad("outcome column not set");
    if (roles.outcome_type == OutcomeType::Survival) bad("continuous estimand with a survival outcome type");
  }
  if (cross_fit == 1 || cross_fit < 0) bad("cross-fit K must be 0 (off) or at least 2");
  if (known_propensity && !(*known_propensity > 0.0 && *known_propensity < 1.0))
    bad("known propensity must lie in (0, 1)");
  if (!(fdr_level > 0.0 && fdr_level < 1.0)) bad("FDR level must lie in (0, 1)");
  if (effect_threshold < 0.0) bad("effect threshold must be >= 0");
}

EstimationConfig RunConfig::estimation() const {
  EstimationConfig e;
  e.kind = EstimandKind::parse(estimand, horizon);
  e.estimators = {parse_estimator(estimator)};
  e.inference.alpha = alpha;
  e.inference.tilt_tol = tilt_tol;
  e.inference.max_tilt_iter = max_tilt_iter;
  e.inference.null_threshold = null_threshold;
  e.nuisance.truncation = truncation;
  e.nuisance.q_min = q_min;
  e.nuisance.censoring_floor = censoring_floor;
  e.nuisance.cv_folds = cv_folds;
  e.nuisance.seed = seed;
  e.var_tol = var_tol;
  e.fdr_level = fdr_level;
  e.effect_threshold = effect_threshold;
  e.cross_fit_k = cross_fit;
  e.known_propensity = known_propensity;
  e.km_censoring = km_censoring;
  e.propensity_menu = propensity_menu;
  e.outcome_menu = outcome_menu;
  e.hazard_menu = hazard_menu;
  e.censoring_menu = censoring_menu;
  return e;
}

ReplicateConfig RunConfig::replicate() const {
  ReplicateConfig r;
  r.scenarios.clear();
  for (const auto& s : scenarios) r.scenarios.push_back(parse_scenario(s));
  r.estimators.clear();
  for (const auto& e : estimators) r.estimators.push_back(parse_estimator(e));
  r.sample_sizes = sample_sizes;
  r.reps = reps;
  if (full_grid) {
    r.sample_sizes = {125, 250, 500, 1000, 2000};
    r.reps = 200;
  }
  r.seed = seed;
  r.p = p;
  r.fdr_level = fdr_level;
  r.truth_draws = truth_draws;
  r.threads = threads;
  r.estimation = estimation();
  r.estimation.estimators = r.estimators;
  return r;
}

}  // namespace temvip
