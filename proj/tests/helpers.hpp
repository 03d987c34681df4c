#pragma once

#include "temvip/data.hpp"
#include "temvip/error.hpp"

#include <doctest.h>

#include <functional>
#include <string>
#include <vector>

namespace testutil {

using temvip::Matrix;
using temvip::Vector;

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline std::vector<std::string> names(int p) {
  std::vector<std::string> out;
  for (int j = 1; j <= p; ++j) out.push_back("W" + std::to_string(j));
  return out;
}

inline temvip::ObservedDataset continuous(Matrix W, Vector a, Vector y) {
  temvip::ObservedDataset d;
  d.covariate_names = names(static_cast<int>(W.cols()));
  d.covariates = std::move(W);
  d.treatment = std::move(a);
  d.outcome = temvip::ContinuousOutcome{std::move(y)};
  return d;
}

// Runs f and returns the error code it throws; fails the test if nothing is thrown.
inline temvip::ErrorCode error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const temvip::Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return temvip::ErrorCode::InvalidArgument;
}

}  // namespace testutil
