#include "linkdist/eval.hpp"

namespace linkdist {

double accuracy(std::span<const int32_t> predictions, std::span<const int32_t> labels, std::span<const uint8_t> mask) {
  if (predictions.size() != labels.size() || mask.size() != labels.size())
    throw Error(ErrorCode::kDimension, "accuracy: predictions, labels and mask lengths differ");
  size_t total = 0, correct = 0;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    ++total;
    correct += predictions[i] == labels[i];
  }
  if (total == 0) throw Error(ErrorCode::kValidation, "accuracy: empty mask");
  return static_cast<double>(correct) / static_cast<double>(total);
}

double accuracy(std::span<const int32_t> predictions, std::span<const int32_t> labels, const SplitMasks& masks, Role role) {
  std::vector<uint8_t> mask(masks.roles.size());
  for (size_t i = 0; i < mask.size(); ++i) mask[i] = masks.roles[i] == role;
  return accuracy(predictions, labels, mask);
}

Scores score_predictions(const Graph& g, const SplitMasks& masks, std::span<const int32_t> predictions) {
  return {accuracy(predictions, g.labels(), masks, Role::kVal), accuracy(predictions, g.labels(), masks, Role::kTest)};
}

Selection select_run(std::span<const std::pair<double, double>> trace) {
  if (trace.empty()) throw Error(ErrorCode::kValidation, "select_run: empty trace");
  Selection s{trace[0].first, trace[0].second, 0};
  for (size_t e = 1; e < trace.size(); ++e) {
    if (trace[e].first > s.best_val) s = {trace[e].first, trace[e].second, e};
  }
  return s;
}

}  // namespace linkdist
