#pragma once

#include <functional>
#include <optional>
#include <string_view>
#include <string>
#include <vector>

#include "linkdist/nn.hpp"

namespace linkdist {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  size_t entries_checked = 0;
  std::string worst_param;
  bool passed = false;
};

struct GradCheckOptions {
  double tolerance = 1e-3;
  double step = 1e-5;
  // Denominator floor for the relative error, so entries whose true gradient
  // is ~0 are compared absolutely.
  double abs_floor = 1e-6;
  // Larger tensors are checked on an evenly strided subset.
  size_t max_entries_per_param = 96;
};

// `loss_fn(true)` evaluates the loss and accumulates analytic gradients into
// the params; `loss_fn(false)` only evaluates. Both run in 64-bit.
using LossClosure = std::function<double(bool accumulate_grads)>;

GradCheckReport grad_check(const LossClosure& loss_fn, const ParamList<double>& params,
                           const GradCheckOptions& options = {});

struct ComponentReport {
  std::string component;
  GradCheckReport report;
};

// Every layer and both loss composites on small random 64-bit instances.
// `fault` corrupts one backward pass for the duration of the suite.
std::vector<ComponentReport> run_gradcheck_suite(uint64_t seed = 7, FaultSite fault = FaultSite::kNone);

std::optional<FaultSite> parse_fault_site(std::string_view name);

}  // namespace linkdist
