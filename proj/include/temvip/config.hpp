#ifndef TEMVIP_CONFIG_HPP
#define TEMVIP_CONFIG_HPP

#include "temvip/csv.hpp"
#include "temvip/pipeline.hpp"
#include "temvip/sim.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace temvip {

/// Everything one CLI run needs. Serializes to and from JSON so a run manifest
/// can be fed back as a config file.
struct RunConfig {
  std::string command = "estimate";

  // estimate
  std::string data;
  std::string output = "temvip_results.csv";
  std::string manifest;  // default: output with ".manifest.json" appended
  ColumnRoles roles;
  std::string estimand = "abs-cont";
  std::string estimator = "onestep";
  int horizon = 0;

  // learners and nuisance settings
  std::vector<LearnerSpec> propensity_menu;
  std::vector<LearnerSpec> outcome_menu;
  std::vector<LearnerSpec> hazard_menu;
  std::vector<LearnerSpec> censoring_menu;
  int cross_fit = 0;
  double truncation = 0.01;
  double q_min = 1e-3;
  double censoring_floor = 0.01;
  int cv_folds = 5;
  std::optional<double> known_propensity;
  bool km_censoring = false;
  double var_tol = kDefaultVarTol;

  // inference
  double alpha = 0.05;
  double fdr_level = 0.05;
  double effect_threshold = 0.0;
  double null_threshold = 0.0;
  double tilt_tol = 1e-4;
  int max_tilt_iter = 20;

  // simulate
  std::vector<std::string> scenarios{"cont-obs"};
  std::vector<std::size_t> sample_sizes{125, 500, 2000};
  std::vector<std::string> estimators{"onestep", "tml"};
  std::size_t reps = 50;
  bool full_grid = false;  // 200 reps at n = 125, 250, 500, 1000, 2000
  int p = 0;
  std::size_t truth_draws = 200000;
  std::string tidy_output = "temvip_tidy.csv";
  std::string metrics_output = "temvip_metrics.csv";

  std::uint64_t seed = 20240611;
  int threads = 0;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);

  /// Checks role/estimand consistency; throws InvalidArgument.
  void check() const;

  EstimationConfig estimation() const;
  ReplicateConfig replicate() const;
  std::string manifest_path() const { return manifest.empty() ? output + ".manifest.json" : manifest; }
};

nlohmann::json learner_to_json(const LearnerSpec& s);
LearnerSpec learner_from_json(const nlohmann::json& j);

}  // namespace temvip

#endif  // TEMVIP_CONFIG_HPP
