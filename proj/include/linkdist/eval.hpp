#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "linkdist/graph.hpp"

namespace linkdist {

// Fraction of masked nodes whose prediction equals the label.
double accuracy(std::span<const int32_t> predictions, std::span<const int32_t> labels, std::span<const uint8_t> mask);
double accuracy(std::span<const int32_t> predictions, std::span<const int32_t> labels, const SplitMasks& masks, Role role);

struct Scores {
  double val = 0.0;
  double test = 0.0;
};

Scores score_predictions(const Graph& g, const SplitMasks& masks, std::span<const int32_t> predictions);

struct Selection {
  double best_val = 0.0;
  double selected_test = 0.0;
  size_t epoch = 0;  // 0-based index into the trace
};

// Test accuracy of the epoch with the highest validation accuracy; the
// earliest such epoch wins ties.
Selection select_run(std::span<const std::pair<double, double>> trace);

}  // namespace linkdist
