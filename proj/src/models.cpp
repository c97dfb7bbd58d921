#include "linkdist/models.hpp"

#include <algorithm>
#include <numeric>

namespace linkdist {

namespace {

constexpr size_t kInferChunk = 4096;

template <typename Fn>
void for_each_chunk(size_t rows, Fn&& fn) {
  for (size_t start = 0; start < rows; start += kInferChunk) fn(start, std::min(rows, start + kInferChunk));
}

Tensor2 slice_rows(const Tensor2& x, size_t begin, size_t end) {
  std::vector<uint32_t> ids(end - begin);
  std::iota(ids.begin(), ids.end(), static_cast<uint32_t>(begin));
  return gather_rows(x, ids);
}

void copy_rows(const Tensor2& src, Tensor2& dst, size_t offset) {
  std::copy(src.values().begin(), src.values().end(), dst.values().begin() + static_cast<std::ptrdiff_t>(offset * dst.cols()));
}

}  // namespace

std::vector<int32_t> argmax_rows(const Tensor2& logits) {
  std::vector<int32_t> out(logits.rows());
  for (size_t i = 0; i < logits.rows(); ++i) {
    const auto r = logits.row(i);
    size_t best = 0;
    for (size_t c = 1; c < r.size(); ++c)
      if (r[c] > r[best]) best = c;
    out[i] = static_cast<int32_t>(best);
  }
  return out;
}

Tensor2 infer_logits(const MLPModel<float>& m, const Tensor2& x) {
  if (x.rows() <= kInferChunk) return m.forward(x, nullptr, Mode::kEval, nullptr, nullptr);
  Tensor2 out(x.rows(), m.dims.classes);
  for_each_chunk(x.rows(), [&](size_t b, size_t e) {
    copy_rows(m.forward(slice_rows(x, b, e), nullptr, Mode::kEval, nullptr, nullptr), out, b);
  });
  return out;
}

ForkedOutput<float> infer_forked(const ForkedMLP<float>& m, const Tensor2& x) {
  if (x.rows() <= kInferChunk) return m.infer(x);
  ForkedOutput<float> out{Tensor2(x.rows(), m.dims.classes), Tensor2(x.rows(), m.dims.classes)};
  for_each_chunk(x.rows(), [&](size_t b, size_t e) {
    auto part = m.infer(slice_rows(x, b, e));
    copy_rows(part.z, out.z, b);
    copy_rows(part.s, out.s, b);
  });
  return out;
}

std::vector<int32_t> predict_mlp_mode(const ForkedMLP<float>& m, const Tensor2& x) {
  return argmax_rows(infer_forked(m, x).z);
}

Tensor2 combine_mp(const ForkedOutput<float>& out, const Graph& g, double alpha) {
  if (out.z.rows() != g.num_nodes()) throw Error(ErrorCode::kDimension, "combine_mp: logits do not cover every node");
  Tensor2 y = out.z;
  const auto a = static_cast<float>(alpha);
  const size_t c = y.cols();
  std::vector<float> acc(c);
  for (uint32_t i = 0; i < g.num_nodes(); ++i) {
    std::fill(acc.begin(), acc.end(), 0.0f);
    for (uint32_t j : g.neighbors(i)) {
      const auto s = out.s.row(j);
      for (size_t k = 0; k < c; ++k) acc[k] += s[k];
    }
    auto yr = y.row(i);
    for (size_t k = 0; k < c; ++k) yr[k] += a * acc[k];
  }
  return y;
}

std::vector<int32_t> predict_mp_mode(const ForkedMLP<float>& m, const Graph& g, double alpha) {
  return argmax_rows(combine_mp(infer_forked(m, g.features()), g, alpha));
}

}  // namespace linkdist
