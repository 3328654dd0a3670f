#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace cpcl {

inline constexpr double kGradCheckTolerance = 1e-4;

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// A flat tensor whose entries are perturbed, paired with its analytic gradient.
struct GradTarget {
  std::string name;
  double* data = nullptr;
  std::size_t size = 0;
  std::vector<double> analytic;
};

struct GradCheckReport {
  std::string op;
  int instances = 0;
  std::size_t entries = 0;
  double max_rel_error = 0.0;
  std::string worst;  // "<target>[index]" of the largest error
  bool passed = false;
};

/// Central differences of `objective` over every entry of every target; folds the largest
/// relative error into `report`.
void check_targets(const std::function<double()>& objective, std::vector<GradTarget>& targets,
                   double h, GradCheckReport& report);

/// Names of the registered differentiable operations.
std::vector<std::string> grad_check_ops();

/// Runs `instances` random 64-bit instances of a registered op. Throws InvalidArgument
/// for an unknown op name.
GradCheckReport grad_check(const std::string& op, int instances = 5, double h = 1e-5,
                           std::uint64_t seed = 20240601);

}  // namespace cpcl
