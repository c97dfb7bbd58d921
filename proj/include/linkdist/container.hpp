#pragma once

#include <filesystem>
#include <optional>

#include "linkdist/graph.hpp"

namespace linkdist {

// On-disk dataset directory:
//   meta.json     {"name", "num_nodes", "num_features", "num_classes",
//                  "num_edges", "has_labels", "has_predefined_split"}
//   features.f32  num_nodes x num_features, row-major
//   labels.u16    present iff has_labels
//   edges.u32     num_edges (u, v) pairs, u < v
//   split.u8      optional; 0 unused, 1 train, 2 val, 3 test
// All multi-byte values little-endian.
struct Dataset {
  Graph graph;
  std::optional<SplitMasks> predefined_split;
};

Dataset load_container(const std::filesystem::path& dir);
void save_container(const std::filesystem::path& dir, const Graph& g, const std::optional<SplitMasks>& split = std::nullopt);

}  // namespace linkdist
