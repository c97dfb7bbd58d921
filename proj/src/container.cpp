#include "linkdist/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include "json.hpp"

#include "binary_io.hpp"

namespace linkdist {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

template <typename J>
auto required(const J& meta, const char* key) {
  if (!meta.contains(key)) throw Error(ErrorCode::kFormat, std::string("meta.json: missing key '") + key + "'");
  return meta.at(key);
}

}  // namespace

Dataset load_container(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIo, "dataset directory not found: " + dir.string());
  ordered_json meta;
  try {
    meta = ordered_json::parse(read_text(dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, "meta.json: " + std::string(e.what()));
  }
  std::string name;
  size_t n = 0, f = 0, c = 0, m = 0;
  bool has_labels = false, has_split = false;
  try {
    name = required(meta, "name").get<std::string>();
    n = required(meta, "num_nodes").get<size_t>();
    f = required(meta, "num_features").get<size_t>();
    c = required(meta, "num_classes").get<size_t>();
    m = required(meta, "num_edges").get<size_t>();
    has_labels = required(meta, "has_labels").get<bool>();
    has_split = required(meta, "has_predefined_split").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, "meta.json: " + std::string(e.what()));
  }

  auto features = read_le_array<float>(dir / "features.f32", n * f);
  std::vector<int32_t> labels;
  if (has_labels) {
    const auto raw = read_le_array<uint16_t>(dir / "labels.u16", n);
    labels.assign(raw.begin(), raw.end());
  }
  const auto raw_edges = read_le_array<uint32_t>(dir / "edges.u32", 2 * m);
  std::vector<Edge> edges(m);
  for (size_t k = 0; k < m; ++k) {
    edges[k] = {raw_edges[2 * k], raw_edges[2 * k + 1]};
    if (edges[k].u > edges[k].v)
      throw Error(ErrorCode::kFormat, "edges.u32: pair " + std::to_string(k) + " is not ordered (first id must be < second)");
  }

  Dataset d{Graph(name, c, Tensor2(n, f, std::move(features)), std::move(labels), std::move(edges)), std::nullopt};
  if (has_split) {
    const auto raw = read_le_array<uint8_t>(dir / "split.u8", n);
    SplitMasks s;
    s.roles.resize(n);
    for (size_t i = 0; i < n; ++i) {
      if (raw[i] > 3) throw Error(ErrorCode::kFormat, "split.u8: invalid role " + std::to_string(raw[i]));
      s.roles[i] = static_cast<Role>(raw[i]);
    }
    d.predefined_split = std::move(s);
  }
  return d;
}

void save_container(const fs::path& dir, const Graph& g, const std::optional<SplitMasks>& split) {
  fs::create_directories(dir);
  ordered_json meta;
  meta["name"] = g.name();
  meta["num_nodes"] = g.num_nodes();
  meta["num_features"] = g.num_features();
  meta["num_classes"] = g.num_classes();
  meta["num_edges"] = g.num_edges();
  meta["has_labels"] = g.has_labels();
  meta["has_predefined_split"] = split.has_value();
  write_text(dir / "meta.json", meta.dump(2) + "\n");

  write_le_array<float>(dir / "features.f32", g.features().values());
  if (g.has_labels()) {
    std::vector<uint16_t> labels(g.labels().begin(), g.labels().end());
    write_le_array<uint16_t>(dir / "labels.u16", labels);
  } else {
    fs::remove(dir / "labels.u16");
  }
  std::vector<uint32_t> raw;
  raw.reserve(2 * g.num_edges());
  for (const Edge& e : g.edges()) {
    raw.push_back(std::min(e.u, e.v));
    raw.push_back(std::max(e.u, e.v));
  }
  write_le_array<uint32_t>(dir / "edges.u32", raw);
  if (split) {
    std::vector<uint8_t> roles(split->roles.size());
    for (size_t i = 0; i < roles.size(); ++i) roles[i] = static_cast<uint8_t>(split->roles[i]);
    write_le_array<uint8_t>(dir / "split.u8", roles);
  } else {
    fs::remove(dir / "split.u8");
  }
}

}  // namespace linkdist
