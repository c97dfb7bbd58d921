#pragma once

#include <filesystem>
#include <optional>
#include <variant>

#include "linkdist/models.hpp"

namespace linkdist {

// Trained model plus what prediction needs besides the weights.
struct Snapshot {
  std::variant<ThreeLayerNet<float>, ForkedMLP<float>> model;
  std::string method;
  std::optional<double> alpha;  // forked models only
};

// Directory layout: snapshot.json (architecture, dims, block settings, tensor
// table) and weights.f32 holding every tensor back to back, little-endian.
void save_snapshot(const std::filesystem::path& dir, const Snapshot& snap);
Snapshot load_snapshot(const std::filesystem::path& dir);

}  // namespace linkdist
