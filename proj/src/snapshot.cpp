#include "linkdist/snapshot.hpp"

#include "binary_io.hpp"
#include "json.hpp"

namespace linkdist {

namespace {

using json = nlohmann::ordered_json;

// Every persisted vector of a model in a fixed order: parameters, then batch
// norm running statistics.
struct TensorRef {
  std::string name;
  float* data;
  size_t size;
};

void add_block_stats(std::vector<TensorRef>& out, InterLayerBlock<float>& b, const std::string& name) {
  auto& s = b.batch_norm.stats;
  out.push_back({name + ".bn.running_mean", s.running_mean.data(), s.running_mean.size()});
  out.push_back({name + ".bn.running_var", s.running_var.data(), s.running_var.size()});
}

template <typename Model>
std::vector<TensorRef> tensors_of(Model& m) {
  std::vector<TensorRef> out;
  for (auto* p : m.params()) out.push_back({p->name, p->value.data(), p->value.size()});
  add_block_stats(out, m.block1, "block1");
  add_block_stats(out, m.block2, "block2");
  return out;
}

json settings_json(const BlockSettings& s) {
  return {{"dropout", s.dropout}, {"leaky_slope", s.leaky_slope}, {"bn_momentum", s.bn_momentum},
          {"bn_epsilon", s.bn_epsilon}, {"ln_epsilon", s.ln_epsilon}};
}

BlockSettings settings_from(const json& j) {
  BlockSettings s;
  s.dropout = j.at("dropout").get<double>();
  s.leaky_slope = j.at("leaky_slope").get<double>();
  s.bn_momentum = j.at("bn_momentum").get<double>();
  s.bn_epsilon = j.at("bn_epsilon").get<double>();
  s.ln_epsilon = j.at("ln_epsilon").get<double>();
  return s;
}

}  // namespace

void save_snapshot(const std::filesystem::path& dir, const Snapshot& snap) {
  std::filesystem::create_directories(dir);
  Snapshot copy = snap;
  json meta;
  meta["method"] = snap.method;
  std::vector<TensorRef> tensors;
  std::visit(
      [&](auto& m) {
        using M = std::decay_t<decltype(m)>;
        meta["architecture"] = std::is_same_v<M, ForkedMLP<float>> ? "forked_mlp" : "three_layer";
        meta["dims"] = {{"in", m.dims.in}, {"hidden", m.dims.hidden}, {"classes", m.dims.classes}};
        meta["blocks"] = settings_json(m.settings);
        tensors = tensors_of(m);
      },
      copy.model);
  if (snap.alpha) meta["alpha"] = *snap.alpha;
  json table = json::array();
  std::vector<float> blob;
  for (const auto& t : tensors) {
    table.push_back({{"name", t.name}, {"size", t.size}});
    blob.insert(blob.end(), t.data, t.data + t.size);
  }
  meta["tensors"] = table;
  write_text(dir / "snapshot.json", meta.dump(2) + "\n");
  write_le_array<float>(dir / "weights.f32", blob);
}

Snapshot load_snapshot(const std::filesystem::path& dir) {
  json meta;
  try {
    meta = json::parse(read_text(dir / "snapshot.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("snapshot.json: ") + e.what());
  }
  Snapshot snap;
  std::vector<TensorRef> tensors;
  try {
    snap.method = meta.at("method").get<std::string>();
    if (meta.contains("alpha")) snap.alpha = meta["alpha"].get<double>();
    const ModelDims dims{meta["dims"].at("in").get<size_t>(), meta["dims"].at("hidden").get<size_t>(),
                         meta["dims"].at("classes").get<size_t>()};
    const BlockSettings blocks = settings_from(meta.at("blocks"));
    const auto arch = meta.at("architecture").get<std::string>();
    if (arch == "forked_mlp") {
      snap.model = ForkedMLP<float>(dims, blocks);
    } else if (arch == "three_layer") {
      snap.model = ThreeLayerNet<float>(dims, blocks);
    } else {
      throw Error(ErrorCode::kFormat, "snapshot: unknown architecture '" + arch + "'");
    }
    std::visit([&](auto& m) { tensors = tensors_of(m); }, snap.model);
    const auto& table = meta.at("tensors");
    if (table.size() != tensors.size()) throw Error(ErrorCode::kFormat, "snapshot: tensor count mismatch");
    for (size_t k = 0; k < tensors.size(); ++k) {
      if (table[k].at("name").get<std::string>() != tensors[k].name || table[k].at("size").get<size_t>() != tensors[k].size)
        throw Error(ErrorCode::kFormat, "snapshot: tensor " + std::to_string(k) + " does not match the architecture");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("snapshot.json: ") + e.what());
  }
  size_t total = 0;
  for (const auto& t : tensors) total += t.size;
  const auto blob = read_le_array<float>(dir / "weights.f32", total);
  size_t off = 0;
  for (const auto& t : tensors) {
    std::copy(blob.begin() + static_cast<std::ptrdiff_t>(off), blob.begin() + static_cast<std::ptrdiff_t>(off + t.size), t.data);
    off += t.size;
  }
  return snap;
}

}  // namespace linkdist
