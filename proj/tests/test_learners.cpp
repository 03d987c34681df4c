#include "helpers.hpp"

#include "temvip/learners.hpp"
#include "temvip/rng.hpp"

#include <cmath>
#include <numeric>
#include <set>

using namespace temvip;
using testutil::error_of;
using testutil::vec;

namespace {

LearnerSpec linear(PenaltyKind k, double lambda, double alpha = 1.0) {
  LearnerSpec s;
  s.family = Family::Linear;
  s.penalty = {k, lambda, alpha};
  s.tol = 1e-12;
  s.max_iter = 100000;
  return s;
}

LearnerSpec logistic(PenaltyKind k, double lambda) {
  LearnerSpec s = linear(k, lambda);
  s.family = Family::Logistic;
  s.tol = 1e-10;
  s.max_iter = 200;
  return s;
}

Matrix random_matrix(Eigen::Index n, Eigen::Index p, std::uint64_t seed) {
  RandomStream rng({seed, 11});
  Matrix X(n, p);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < n; ++i) X(i, j) = rng.normal();
  return X;
}

}  // namespace

TEST_SUITE("nuisance-learners") {

TEST_CASE("unpenalized linear fit matches the normal equations on a 5x2 instance") {
  Matrix X(5, 2);
  X << 1, 2, 2, 1, 3, 5, 4, 3, 5, 4;
  const Vector y = vec({1.0, 2.5, 2.0, 4.5, 4.0});
  const GlmFit f = fit_linear_penalized(X, y, linear(PenaltyKind::None, 0.0));
  CHECK(f.converged);
  // frozen: solve Z'Z b = Z'y with Z = [1 X]
  CHECK(f.intercept == doctest::Approx(0.925).epsilon(1e-9));
  CHECK(f.beta[0] == doctest::Approx(1.0625).epsilon(1e-9));
  CHECK(f.beta[1] == doctest::Approx(-0.4375).epsilon(1e-9));
}

TEST_CASE("lambda at or above lambda_max zeroes every slope") {
  Matrix X(5, 2);
  X << 1, 2, 2, 1, 3, 5, 4, 3, 5, 4;
  const Vector y = vec({1.0, 2.5, 2.0, 4.5, 4.0});
  const double lmax = lambda_max(X, y, Family::Linear, 1.0);
  CHECK(lmax == doctest::Approx(1.6));  // max_j |X_j'(y - ybar)| / n
  const GlmFit f = fit_linear_penalized(X, y, linear(PenaltyKind::L1, lmax));
  CHECK(f.beta[0] == 0.0);
  CHECK(f.beta[1] == 0.0);
  CHECK(f.intercept == doctest::Approx(y.mean()));
  const GlmFit g = fit_linear_penalized(X, y, linear(PenaltyKind::L1, 0.99 * lmax));
  CHECK(g.beta.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("pure ridge on the identity design") {
  // (1/2n)||y - b||^2 + lambda/2 ||b||^2 with n = 2 gives b = y / (1 + 2 lambda).
  const Matrix X = Matrix::Identity(2, 2);
  const Vector y = vec({2, 2});
  FitControls c;
  c.intercept = false;
  const GlmFit f = fit_linear_penalized(X, y, linear(PenaltyKind::L2, 0.5), c);
  CHECK(f.beta[0] == doctest::Approx(1.0));
  CHECK(f.beta[1] == doctest::Approx(1.0));
  const GlmFit g = fit_linear_penalized(X, y, linear(PenaltyKind::L2, 1.0), c);
  CHECK(g.beta[0] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("L1 fits satisfy the KKT conditions") {
  const Matrix X = random_matrix(120, 30, 5);
  RandomStream rng({9});
  Vector y(120);
  for (Eigen::Index i = 0; i < 120; ++i) y[i] = 1.0 + 2.0 * X(i, 0) - X(i, 3) + rng.normal();
  for (double lambda : {0.5, 0.1, 0.02}) {
    auto spec = linear(PenaltyKind::L1, lambda);
    spec.tol = 1e-10;
    const GlmFit f = fit_linear_penalized(X, y, spec);
    REQUIRE(f.converged);
    Vector r = y - X * f.beta;
    r.array() -= f.intercept;
    CHECK(std::abs(r.mean()) < 1e-8);
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      const double grad = X.col(j).dot(r) / 120.0;
      if (f.beta[j] == 0.0)
        CHECK(std::abs(grad) <= lambda + 1e-8);
      else
        CHECK(grad == doctest::Approx(lambda * (f.beta[j] > 0 ? 1.0 : -1.0)).epsilon(1e-6));
    }
  }
}

TEST_CASE("elastic net interpolates between ridge and lasso") {
  const Matrix X = random_matrix(80, 6, 21);
  Vector y = X.col(0) * 2.0 + X.col(1);
  const GlmFit f = fit_linear_penalized(X, y, linear(PenaltyKind::ElasticNet, 0.2, 0.5));
  Vector r = y - X * f.beta;
  r.array() -= f.intercept;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double grad = X.col(j).dot(r) / 80.0;
    if (f.beta[j] == 0.0)
      CHECK(std::abs(grad) <= 0.1 + 1e-8);
    else
      CHECK(grad == doctest::Approx(0.1 * (f.beta[j] > 0 ? 1.0 : -1.0) + 0.1 * f.beta[j]).epsilon(1e-6));
  }
}

TEST_CASE("logistic intercept-only fit is the Bernoulli MLE") {
  const Matrix X(8, 0);
  const Vector y = vec({1, 0, 0, 0, 1, 0, 0, 0});
  const GlmFit f = fit_logistic_penalized(X, y, logistic(PenaltyKind::None, 0.0));
  CHECK(f.intercept == doctest::Approx(std::log(0.25 / 0.75)).epsilon(1e-9));
}

TEST_CASE("logistic fit with a huge penalty keeps only the intercept") {
  const Matrix X = random_matrix(60, 4, 3);
  Vector y(60);
  for (Eigen::Index i = 0; i < 60; ++i) y[i] = X(i, 0) > 0.3 ? 1.0 : 0.0;
  const GlmFit f = fit_logistic_penalized(X, y, logistic(PenaltyKind::L1, 1e6));
  CHECK(f.beta.cwiseAbs().maxCoeff() == 0.0);
  CHECK(f.intercept == doctest::Approx(logit(y.mean())).epsilon(1e-9));
}

TEST_CASE("separable logistic data raise SeparationDetected and clip predictions") {
  Matrix X(4, 1);
  X << -1, -1, 1, 1;
  const Vector y = vec({0, 0, 1, 1});
  Diagnostics diag;
  const GlmFit f = fit_logistic_penalized(X, y, logistic(PenaltyKind::None, 0.0), {}, &diag);
  CHECK(f.separation);
  CHECK(diag.has(WarningCode::SeparationDetected));
  const Vector p = predict(f, X, Family::Logistic);
  CHECK(p.maxCoeff() <= expit(kSeparationBound));
  CHECK(p.minCoeff() >= expit(-kSeparationBound));
}

TEST_CASE("logistic fit on one class fails") {
  const Matrix X = random_matrix(10, 2, 1);
  CHECK(error_of([&] { fit_logistic_penalized(X, Vector::Ones(10), logistic(PenaltyKind::None, 0.0)); }) ==
        ErrorCode::OneClassOnly);
}

TEST_CASE("fractional logistic outcomes are accepted") {
  const Matrix X = random_matrix(50, 2, 4);
  Vector y(50);
  for (Eigen::Index i = 0; i < 50; ++i) y[i] = expit(0.5 * X(i, 0));
  const GlmFit f = fit_logistic_penalized(X, y, logistic(PenaltyKind::None, 0.0));
  CHECK(f.converged);
  CHECK(f.beta[0] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("relative lambda is a fraction of lambda_max") {
  const Matrix X = random_matrix(40, 3, 8);
  const Vector y = X.col(1) + Vector::Ones(40);
  auto spec = linear(PenaltyKind::L1, 1.0);
  spec.relative_lambda = true;
  const GlmFit f = fit_linear_penalized(X, y, spec);
  CHECK(f.lambda == doctest::Approx(lambda_max(X, y, Family::Linear, 1.0)));
  CHECK(f.beta.cwiseAbs().maxCoeff() < 1e-12);  // exactly at the kink, up to rounding
}

TEST_CASE("cv_select: singleton menu and ties") {
  CHECK(cv_select(1, 5, [](std::size_t, int) { return 3.0; }) == 0);
  CHECK(cv_select(3, 2, [](std::size_t s, int) { return s == 0 ? 2.0 : 1.0; }) == 1);
  CHECK(cv_select(2, 4, [](std::size_t, int f) { return f * 1.0; }) == 0);
  CHECK(error_of([] {
          cv_select(2, 2, [](std::size_t, int) { return std::numeric_limits<double>::infinity(); });
        }) == ErrorCode::AllLearnersFailed);
}

TEST_CASE("make_folds partitions rows and balances strata") {
  std::vector<double> strata(103);
  for (std::size_t i = 0; i < strata.size(); ++i) strata[i] = i % 3 == 0 ? 1.0 : 0.0;
  const auto folds = make_folds(strata.size(), 5, 42, strata);
  std::vector<int> size(5, 0), ones(5, 0);
  for (std::size_t i = 0; i < folds.size(); ++i) {
    REQUIRE(folds[i] >= 0);
    REQUIRE(folds[i] < 5);
    ++size[static_cast<std::size_t>(folds[i])];
    ones[static_cast<std::size_t>(folds[i])] += strata[i] == 1.0;
  }
  for (int f = 0; f < 5; ++f) {
    CHECK(size[static_cast<std::size_t>(f)] >= 20);
    CHECK(size[static_cast<std::size_t>(f)] <= 21);
    CHECK(ones[static_cast<std::size_t>(f)] >= 6);
  }
  CHECK(make_folds(strata.size(), 5, 42, strata) == folds);
  CHECK(make_folds(strata.size(), 5, 43, strata) != folds);
}

TEST_CASE("discrete selector picks the correct model on a linear DGP") {
  const Eigen::Index n = 2000;
  const Matrix X = random_matrix(n, 1, 77);
  RandomStream rng({78});
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = 1.0 + 0.5 * X(i, 0) + rng.normal();
  LearnerSpec correct = linear(PenaltyKind::None, 0.0);
  LearnerSpec intercept = correct;
  intercept.intercept_only = true;
  const std::vector<LearnerSpec> menu{intercept, correct};
  DesignBuilder design = [&](const LearnerSpec& s, std::span<const std::size_t> rows) {
    Design d;
    d.X.resize(static_cast<Eigen::Index>(rows.size()), s.intercept_only ? 0 : 1);
    if (!s.intercept_only)
      for (std::size_t k = 0; k < rows.size(); ++k) d.X(static_cast<Eigen::Index>(k), 0) = X(static_cast<Eigen::Index>(rows[k]), 0);
    return d;
  };
  std::vector<std::size_t> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto folds = make_folds(rows.size(), 5, 1);
  const SelectedFit sel = select_and_fit(design, y, rows, menu, folds, 5, nullptr);
  CHECK(sel.spec_index == 1);
  CHECK(sel.cv_risk[1] < sel.cv_risk[0]);
  CHECK(sel.fit.beta[0] == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("learner specs are validated") {
  LearnerSpec s;
  s.penalty = {PenaltyKind::L1, -1.0, 1.0};
  CHECK(error_of([&] { s.check(); }) == ErrorCode::InvalidArgument);
  s.penalty = {PenaltyKind::ElasticNet, 1.0, 1.5};
  CHECK(error_of([&] { s.check(); }) == ErrorCode::InvalidArgument);
}

}  // TEST_SUITE
