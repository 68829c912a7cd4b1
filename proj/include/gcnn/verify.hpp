#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gcnn/model.hpp"

namespace gcnn::verify {

struct CheckResult {
  int criterion = 0;  // acceptance item this check belongs to
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "row name / array / index"
};

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Central finite differences (step h) of the mean cross-entropy against
/// backpropagated gradients, for every trainable parameter value.
GradientCheck gradient_check(Model& model, const Tensor& batch, std::span<const int> labels, double h = 1e-5);

std::vector<CheckResult> geometry_suite();
std::vector<CheckResult> gradient_suite();
std::vector<CheckResult> params_suite();
/// "geometry", "gradients", "params" or "all"; ConfigError otherwise.
std::vector<CheckResult> run_suite(const std::string& name);

/// Miniature models used by the gradient suite.
Model gradient_gcnn(std::uint64_t seed = 7);
Model gradient_pcnn(std::uint64_t seed = 7);

}  // namespace gcnn::verify
