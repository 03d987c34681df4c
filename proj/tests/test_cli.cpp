#include "helpers.hpp"

#include "temvip/cli.hpp"
#include "temvip/csv.hpp"
#include "temvip/sim.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace temvip;
using testutil::error_of;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& tag) {
    dir = fs::temp_directory_path() / ("temvip_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void dump(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  f << body;
}

void write_scenario(const std::string& path, SimScenario s) {
  std::ofstream f(path);
  write_dataset_csv(f, generate(s));
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "temvip");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

std::vector<std::vector<std::string>> table(const std::string& path) {
  std::ifstream f(path);
  CsvTable t = read_csv(f);
  return t.rows;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("parse_csv maps roles and reports bad cells") {
  std::istringstream ok("A,Y,W1,W2\n0,1.5,0.1,2\n1,2.5,0.2,3\n1,0.5,\"0.3\",4\n");
  const ObservedDataset d = parse_csv(ok, ColumnRoles{});
  CHECK(d.p() == 2);
  CHECK(d.n() == 3);
  CHECK(d.covariate_names == std::vector<std::string>{"W1", "W2"});
  CHECK(d.covariates(2, 0) == 0.3);

  std::string body = "A,Y,W1\n";
  for (int r = 1; r <= 9; ++r) body += r == 7 ? "1,2,\n" : "0,1," + std::to_string(r) + "\n";
  std::istringstream missing(body);
  try {
    parse_csv(missing, ColumnRoles{});
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("row 7") != std::string::npos);
    CHECK(std::string(e.what()).find("W1") != std::string::npos);
  }

  ColumnRoles surv;
  surv.time = "time";
  surv.censor = "status";
  surv.outcome_type = OutcomeType::Survival;
  surv.bin_width = 1.0;
  std::istringstream no_censor("A,time,W1\n0,1,0.3\n1,2,0.1\n");
  CHECK(error_of([&] { parse_csv(no_censor, surv); }) == ErrorCode::MissingColumn);
}

TEST_CASE("estimate runs end to end on a generated file") {
  Scratch s("e2e");
  SimScenario sc;
  sc.seed = 17;
  write_scenario(s / "cont.csv", sc);
  std::string out, err;
  const int code = cli({"estimate", "--data", s / "cont.csv", "-o", s / "res.csv", "--seed", "3"}, &out, &err);
  REQUIRE_MESSAGE(code == 0, err);
  const auto rows = table(s / "res.csv");
  CHECK(rows.size() == 500);
  for (const auto& r : rows) {
    CHECK(std::isfinite(std::stod(r[2])));
    CHECK(std::stod(r[2]) > 0.0);
  }
  const auto manifest = nlohmann::json::parse(slurp(s / "res.csv.manifest.json"));
  CHECK(manifest["n"] == 125);
  CHECK(manifest["p"] == 500);
  CHECK(manifest["config"]["seed"] == 3);
  CHECK(manifest["preprocessing"]["centers"].size() == 500);
}

TEST_CASE("survival TML manifest carries the tilting record") {
  Scratch s("surv");
  SimScenario sc;
  sc.kind = ScenarioKind::TteRct;
  sc.n = 300;
  sc.p = 10;
  write_scenario(s / "tte.csv", sc);
  std::string err;
  const int code = cli({"estimate", "--data", s / "tte.csv", "-o", s / "res.csv", "--time", "time", "--censor",
                        "censor", "--outcome-type", "survival", "--bin-width", "1", "--estimand", "abs-surv",
                        "--horizon", "9", "--estimator", "tml", "--known-propensity", "0.5"},
                       nullptr, &err);
  REQUIRE_MESSAGE(code == 0, err);
  const auto m = nlohmann::json::parse(slurp(s / "res.csv.manifest.json"));
  const auto& est = m["estimates"][0];
  CHECK(est["estimator"] == "tml");
  REQUIRE(est["tilts"].size() == 10);
  for (const auto& t : est["tilts"]) {
    CHECK(t["iterations"].get<int>() >= 0);
    CHECK(t.contains("converged"));
  }
}

TEST_CASE("validation failures exit with 2") {
  Scratch s("bad");
  dump(s / "zero.csv", "A,Y,W1\n0,0,0.1\n1,1,0.5\n0,2,0.9\n1,3,0.2\n");
  std::string err;
  CHECK(cli({"estimate", "--data", s / "zero.csv", "-o", s / "r.csv", "--estimand", "rel-cont"}, nullptr, &err) == 2);
  CHECK(err.find("PositiveOutcomeRequired") != std::string::npos);
  CHECK(cli({"simulate", "--scenario", "cont-obs-wide", "--tidy", s / "t.csv", "--metrics", s / "m.csv"}) == 2);
  CHECK(cli({"estimate", "--data", s / "absent.csv", "-o", s / "r.csv"}) == 2);
  CHECK(cli({"estimate", "--data", s / "zero.csv", "--cross-fit", "1"}) == 2);
  CHECK(cli({"frobnicate"}) == 2);
  std::string out;
  CHECK(cli({"--help"}, &out) == 0);
  CHECK(out.find("estimate") != std::string::npos);
}

TEST_CASE("simulate output is byte-identical across runs") {
  Scratch s("sim");
  const std::vector<std::string> base{"simulate", "--scenario", "bin-obs", "--n", "150", "--reps", "2", "--p", "10",
                                      "--truth-draws", "5000", "--seed", "8"};
  auto run = [&](const std::string& tag, const std::string& threads) {
    auto args = base;
    args.insert(args.end(), {"--threads", threads, "--tidy", s / (tag + "_t.csv"), "--metrics", s / (tag + "_m.csv")});
    std::string out;
    REQUIRE(cli(args, &out) == 0);
    return out + slurp(s / (tag + "_t.csv")) + slurp(s / (tag + "_m.csv"));
  };
  const std::string a = run("a", "1"), b = run("b", "2");
  CHECK(a == b);
  CHECK(a.find("bin-obs n=150 onestep: FDR=") != std::string::npos);
}

TEST_CASE("a manifest fed back as config reproduces the results") {
  Scratch s("trip");
  SimScenario sc;
  sc.kind = ScenarioKind::BinObs;
  sc.n = 200;
  sc.p = 15;
  write_scenario(s / "bin.csv", sc);
  REQUIRE(cli({"estimate", "--data", s / "bin.csv", "-o", s / "r1.csv", "--estimand", "rel-cont", "--estimator",
               "tml", "--seed", "11", "--cross-fit", "2", "--fdr", "0.1"}) == 0);
  REQUIRE(cli({"estimate", "--config", s / "r1.csv.manifest.json", "-o", s / "r2.csv"}) == 0);
  CHECK(slurp(s / "r1.csv") == slurp(s / "r2.csv"));
  const auto m1 = nlohmann::json::parse(slurp(s / "r1.csv.manifest.json"));
  const auto m2 = nlohmann::json::parse(slurp(s / "r2.csv.manifest.json"));
  CHECK(m2["config"]["fdr_level"] == 0.1);
  CHECK(m1["estimates"] == m2["estimates"]);
  // flags override the file
  REQUIRE(cli({"estimate", "--config", s / "r1.csv.manifest.json", "-o", s / "r3.csv", "--fdr", "0.2"}) == 0);
  CHECK(nlohmann::json::parse(slurp(s / "r3.csv.manifest.json"))["config"]["fdr_level"] == 0.2);
}

TEST_CASE("results do not depend on the column order of the input") {
  Scratch s("order");
  SimScenario sc;
  sc.n = 300;
  sc.p = 6;
  const ObservedDataset d = generate(sc);
  {
    std::ofstream f(s / "a.csv");
    write_dataset_csv(f, d);
  }
  ObservedDataset r = d;
  const std::vector<int> perm{4, 0, 5, 2, 1, 3};
  for (std::size_t k = 0; k < perm.size(); ++k) {
    r.covariates.col(static_cast<Eigen::Index>(k)) = d.covariates.col(perm[k]);
    r.covariate_names[k] = d.covariate_names[static_cast<std::size_t>(perm[k])];
  }
  {
    std::ofstream f(s / "b.csv");
    write_dataset_csv(f, r);
  }
  // unpenalized fits are order free; penalized coordinate descent is only so up to its tolerance
  RunConfig cfg;
  LearnerSpec ols;
  ols.interactions = true;
  cfg.outcome_menu = {ols};
  cfg.known_propensity = 0.5;
  dump(s / "cfg.json", cfg.to_json().dump());
  REQUIRE(cli({"estimate", "--config", s / "cfg.json", "--data", s / "a.csv", "-o", s / "ra.csv"}) == 0);
  REQUIRE(cli({"estimate", "--config", s / "cfg.json", "--data", s / "b.csv", "-o", s / "rb.csv"}) == 0);
  const auto ta = table(s / "ra.csv"), tb = table(s / "rb.csv");
  REQUIRE(ta.size() == 6);
  for (const auto& rb : tb)
    for (const auto& ra : ta)
      if (ra[0] == rb[0]) {
        CHECK(std::abs(std::stod(ra[1]) - std::stod(rb[1])) < 1e-10);
        CHECK(std::abs(std::stod(ra[2]) - std::stod(rb[2])) < 1e-10);
      }
}

TEST_CASE("run configs survive a JSON round trip") {
  RunConfig c;
  c.data = "x.csv";
  c.roles.time = "t";
  c.roles.censor = "c";
  c.roles.bin_width = 0.5;
  c.roles.include = {"W1", "W3"};
  c.estimand = "rel-surv";
  c.horizon = 4;
  c.known_propensity = 0.4;
  c.km_censoring = true;
  c.cross_fit = 3;
  c.sample_sizes = {10, 20};
  LearnerSpec l;
  l.penalty = {PenaltyKind::ElasticNet, 0.3, 0.25};
  l.relative_lambda = true;
  c.hazard_menu = {l};
  const RunConfig back = RunConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.known_propensity == 0.4);
  CHECK(back.hazard_menu[0].penalty.alpha == 0.25);
  nlohmann::json bad = c.to_json();
  bad["cross_fit"] = "many";
  CHECK(error_of([&] { RunConfig::from_json(bad); }) == ErrorCode::InvalidArgument);
}

}  // TEST_SUITE
