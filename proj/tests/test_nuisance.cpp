#include "helpers.hpp"

#include "temvip/nuisance.hpp"
#include "temvip/rng.hpp"
#include "temvip/sim.hpp"

#include <cmath>

using namespace temvip;
using testutil::error_of;
using testutil::vec;

namespace {

LearnerSpec unpenalized(Family f) {
  LearnerSpec s;
  s.family = f;
  s.tol = 1e-10;
  s.max_iter = 500;
  return s;
}

LearnerSpec intercept_only(Family f) {
  LearnerSpec s = unpenalized(f);
  s.intercept_only = true;
  return s;
}

ObservedDataset centered(ObservedDataset d) { return center_and_filter(validate(std::move(d))).first; }

// n rows, p standard normal covariates, A ~ Bern(expit(0.5 W1)).
ObservedDataset random_continuous(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  RandomStream rng({seed, 3});
  Matrix W(n, p);
  Vector a(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) W(i, j) = rng.normal();
    a[i] = rng.bernoulli(expit(0.5 * W(i, 0))) ? 1.0 : 0.0;
    y[i] = 2.0 + 3.0 * a[i] + rng.normal();
  }
  return centered(testutil::continuous(W, a, y));
}

ObservedDataset five_subjects() {
  Matrix W(5, 1);
  W << -2, -1, 0, 1, 2;
  auto d = testutil::continuous(W, vec({0, 0, 0, 0, 0}), vec({0, 0, 0, 0, 0}));
  d.outcome = SurvivalOutcome{{1, 2, 2, 3, 4}, {1, 0, 1, 0, 1}, 4};
  return d;
}

}  // namespace

TEST_SUITE("nuisance-learners") {

TEST_CASE("known propensity is returned as a constant") {
  const auto d = random_continuous(50, 3, 1);
  NuisanceSettings st;
  const PropensityFit g = fit_propensity(d, default_propensity_menu(), CrossFitPlan::off(), 0.5, st, nullptr);
  CHECK(g.provenance == "known");
  CHECK(g.values.minCoeff() == 0.5);
  CHECK(g.values.maxCoeff() == 0.5);
}

TEST_CASE("intercept-only propensity on balanced arms is one half") {
  auto d = random_continuous(40, 2, 2);
  for (Eigen::Index i = 0; i < 40; ++i) d.treatment[i] = i % 2;
  NuisanceSettings st;
  const std::vector<LearnerSpec> menu{intercept_only(Family::Logistic)};
  const PropensityFit g = fit_propensity(d, menu, CrossFitPlan::off(), std::nullopt, st, nullptr);
  CHECK(g.values.minCoeff() == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(g.values.maxCoeff() == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("propensity values are truncated into [delta, 1 - delta]") {
  const PropensityFit g = PropensityFit::from_values(vec({0.001, 0.5, 0.9999}), 0.01);
  CHECK(g.values[0] == 0.01);
  CHECK(g.values[1] == 0.5);
  CHECK(g.values[2] == 0.99);

  // A strongly confounded design: fitted values hit the bounds and are clipped.
  RandomStream rng({4});
  Matrix W(300, 1);
  Vector a(300);
  for (Eigen::Index i = 0; i < 300; ++i) {
    W(i, 0) = 3.0 * rng.normal();
    a[i] = rng.bernoulli(expit(3.0 * W(i, 0))) ? 1.0 : 0.0;
  }
  const auto d = centered(testutil::continuous(W, a, Vector::Zero(300)));
  NuisanceSettings st;
  st.truncation = 0.05;
  Diagnostics diag;
  const std::vector<LearnerSpec> menu{unpenalized(Family::Logistic)};
  const PropensityFit fit = fit_propensity(d, menu, CrossFitPlan::off(), std::nullopt, st, &diag);
  CHECK(fit.values.minCoeff() >= 0.05);
  CHECK(fit.values.maxCoeff() <= 0.95);
  CHECK(diag.has(WarningCode::TruncationApplied));
}

TEST_CASE("cross-fitted propensity rows come from the model that excluded their fold") {
  const auto d = random_continuous(200, 3, 5);
  NuisanceSettings st;
  const CrossFitPlan plan = CrossFitPlan::stratified(d.treatment, 4, 99);
  const std::vector<LearnerSpec> menu{unpenalized(Family::Logistic)};
  const PropensityFit g = fit_propensity(d, menu, plan, std::nullopt, st, nullptr);
  REQUIRE(g.models.size() == 4);
  for (int f = 0; f < 4; ++f) {
    std::vector<Eigen::Index> train, test;
    for (Eigen::Index i = 0; i < 200; ++i) (plan.fold[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
    // independent refit on the training rows only
    const Matrix Xtr = d.covariates(train, Eigen::all);
    const Vector ytr = d.treatment(train);
    const GlmFit ref = fit_logistic_penalized(Xtr, ytr, menu[0]);
    const auto& m = g.models[static_cast<std::size_t>(f)].fit;
    CHECK(m.intercept == doctest::Approx(ref.intercept).epsilon(1e-9));
    for (Eigen::Index j = 0; j < 3; ++j) CHECK(m.beta[j] == doctest::Approx(ref.beta[j]).epsilon(1e-9));
    const Vector pred = predict(ref, d.covariates(test, Eigen::all), Family::Logistic);
    for (std::size_t k = 0; k < test.size(); ++k)
      CHECK(g.values[test[k]] == doctest::Approx(std::clamp(pred[static_cast<Eigen::Index>(k)], 0.01, 0.99)).epsilon(1e-9));
  }
}

TEST_CASE("stratified cross-fitting folds hold both arms") {
  const auto d = random_continuous(60, 1, 6);
  const CrossFitPlan plan = CrossFitPlan::stratified(d.treatment, 5, 3);
  CHECK(plan.active());
  std::vector<std::array<int, 2>> seen(5, {0, 0});
  for (Eigen::Index i = 0; i < 60; ++i) ++seen[static_cast<std::size_t>(plan.fold[static_cast<std::size_t>(i)])][d.treatment[i] > 0.5];
  for (const auto& s : seen) {
    CHECK(s[0] > 0);
    CHECK(s[1] > 0);
  }
}

TEST_CASE("outcome regression recovers a constant treatment effect") {
  const auto d = random_continuous(10000, 2, 7);
  NuisanceSettings st;
  const std::vector<LearnerSpec> menu{unpenalized(Family::Linear)};
  const OutcomeRegressionFit q = fit_outcome_regression(d, menu, CrossFitPlan::off(), st, nullptr);
  CHECK((q.q1 - q.q0).mean() == doctest::Approx(3.0).epsilon(0.1 / 3.0));
  CHECK((q.q1 - q.q0).maxCoeff() - (q.q1 - q.q0).minCoeff() < 1e-9);
}

TEST_CASE("binary outcome regression on a constant outcome fails") {
  auto d = random_continuous(30, 2, 8);
  d.outcome = BinaryOutcome{Vector::Ones(30)};
  NuisanceSettings st;
  const std::vector<LearnerSpec> menu{unpenalized(Family::Logistic)};
  CHECK(error_of([&] { fit_outcome_regression(d, menu, CrossFitPlan::off(), st, nullptr); }) ==
        ErrorCode::OneClassOnly);
}

TEST_CASE("saturated unpenalized outcome design interpolates") {
  // 5 rows, columns intercept + A + 3 covariates
  Matrix W(5, 3);
  W << 0.3, -1.2, 0.8, 1.1, 0.4, -0.5, -0.7, 0.9, 0.2, 0.5, -0.6, -1.1, -1.2, 0.5, 0.6;
  auto d = centered(testutil::continuous(W, vec({0, 1, 0, 1, 1}), vec({1.5, -0.2, 3.1, 0.7, 2.2})));
  NuisanceSettings st;
  const std::vector<LearnerSpec> menu{unpenalized(Family::Linear)};
  const OutcomeRegressionFit q = fit_outcome_regression(d, menu, CrossFitPlan::off(), st, nullptr);
  CHECK((q.q_obs - d.y()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("outcome design lays out A, W and A x W") {
  Matrix W(2, 2);
  W << 1, 2, 3, 4;
  LearnerSpec s;
  s.interactions = true;
  const std::vector<std::size_t> rows{1, 0};
  const Design d = outcome_design(W, vec({1, 0}), s, rows);
  REQUIRE(d.X.cols() == 5);
  CHECK(d.X.row(0) == (Eigen::RowVectorXd(5) << 0, 3, 4, 0, 0).finished());
  CHECK(d.X.row(1) == (Eigen::RowVectorXd(5) << 1, 1, 2, 1, 2).finished());
}

TEST_CASE("constant hazard gives geometric survival") {
  const Matrix h = Matrix::Constant(3, 6, 0.2);
  const Matrix c = Matrix::Ones(3, 6);
  const auto fit = SurvivalNuisanceFit::from_hazards(h, h, c, c);
  for (int u = 1; u <= 6; ++u) CHECK(fit.survival[1](2, u - 1) == doctest::Approx(std::pow(0.8, u)).epsilon(1e-15));
  CHECK(fit.censoring_before(1, 0, 1) == 1.0);
}

TEST_CASE("Kaplan-Meier censoring survival matches the product-limit formula") {
  const auto d = five_subjects();
  const auto km = km_censoring(d.survival(), d.treatment, 4);
  // at risk for censoring / censored per bin: (5,1) (3,1) (1,0) (1,1); events leave first
  CHECK(km[0][0] == doctest::Approx(0.8));
  CHECK(km[0][1] == doctest::Approx(8.0 / 15.0));
  CHECK(km[0][2] == doctest::Approx(8.0 / 15.0));
  CHECK(km[0][3] == 0.0);
  CHECK(km[1] == Vector::Ones(4));  // empty arm
}

TEST_CASE("fitted censoring is floored at epsilon_c with a warning") {
  const auto d = centered(five_subjects());
  NuisanceSettings st;
  Diagnostics diag;
  const std::vector<LearnerSpec> menu{intercept_only(Family::Logistic)};
  const auto fit = fit_survival_nuisances(d, 4, menu, menu, CrossFitPlan::off(), true, st, &diag);
  CHECK(fit.censoring[0](0, 3) == 0.01);
  CHECK(fit.censoring[0](0, 0) == doctest::Approx(0.8));
  CHECK(diag.has(WarningCode::CensoringPositivityViolation));
}

TEST_CASE("no censored rows give c = 1") {
  SimScenario s;
  s.kind = ScenarioKind::TteRct;
  s.n = 300;
  s.p = 10;
  auto raw = generate(s);
  auto& so = std::get<SurvivalOutcome>(raw.outcome);
  for (auto& dl : so.delta) dl = 0;
  const auto d = centered(raw);
  NuisanceSettings st;
  const std::vector<LearnerSpec> menu{intercept_only(Family::Logistic)};
  const auto fit = fit_survival_nuisances(d, 5, menu, default_censoring_menu(), CrossFitPlan::off(), false, st, nullptr);
  CHECK(fit.censoring[0].minCoeff() == 1.0);
  CHECK(fit.censoring[1].minCoeff() == 1.0);
}

TEST_CASE("long format has one row per subject and time up to min(T, horizon)") {
  const SurvivalOutcome s{{1, 3, 2}, {0, 1, 0}, 3};
  const LongFormat lf = expand_long(s, 2);
  CHECK(lf.subject == std::vector<std::size_t>{0, 1, 1, 2, 2});
  CHECK(lf.time == std::vector<int>{1, 1, 2, 1, 2});
  CHECK(lf.event == vec({1, 0, 0, 0, 1}));
  CHECK(lf.censored == vec({0, 0, 0, 0, 0}));
}

TEST_CASE("fitted survival is monotone and reconstructs from the hazard") {
  SimScenario s;
  s.kind = ScenarioKind::TteRct;
  s.n = 400;
  s.p = 10;
  const auto d = centered(generate(s));
  NuisanceSettings st;
  const auto fit = fit_survival_nuisances(d, 9, default_hazard_menu(), default_censoring_menu(), CrossFitPlan::off(),
                                          false, st, nullptr);
  for (int a = 0; a < 2; ++a) {
    const auto& S = fit.survival[static_cast<std::size_t>(a)];
    const auto& H = fit.hazard[static_cast<std::size_t>(a)];
    CHECK(H.minCoeff() >= 0.0);
    CHECK(H.maxCoeff() < 1.0);
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
      double prod = 1.0;
      for (Eigen::Index u = 0; u < S.cols(); ++u) {
        prod *= 1.0 - H(i, u);
        CHECK(S(i, u) == prod);
        if (u > 0) CHECK(S(i, u) <= S(i, u - 1));
      }
    }
    CHECK(fit.censoring[static_cast<std::size_t>(a)].minCoeff() >= st.censoring_floor);
  }
}

TEST_CASE("survival fit without events before the horizon fails") {
  auto d = five_subjects();
  auto& so = std::get<SurvivalOutcome>(d.outcome);
  so.t_tilde = {3, 3, 4, 3, 4};
  const auto c = centered(d);
  NuisanceSettings st;
  const std::vector<LearnerSpec> menu{intercept_only(Family::Logistic)};
  CHECK(error_of([&] { fit_survival_nuisances(c, 2, menu, menu, CrossFitPlan::off(), true, st, nullptr); }) ==
        ErrorCode::NoEventsBeforeHorizon);
}

}  // TEST_SUITE
