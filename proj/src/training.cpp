#include "linkdist/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "linkdist/eval.hpp"

namespace linkdist {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Nodes and edges a trainer may touch, re-indexed densely.
struct ViewGraph {
  std::vector<uint32_t> node_ids;  // local -> global, ascending
  std::vector<int64_t> local_of;   // global -> local, -1 when hidden
  SparseRows adjacency;
  Tensor2 features;
};

ViewGraph make_view_graph(const TrainView& view) {
  ViewGraph vg;
  vg.node_ids = view.visible_node_ids();
  vg.local_of.assign(view.graph().num_nodes(), -1);
  for (size_t k = 0; k < vg.node_ids.size(); ++k) vg.local_of[vg.node_ids[k]] = static_cast<int64_t>(k);
  std::vector<Edge> local_edges;
  local_edges.reserve(view.visible_edges().size());
  for (uint32_t idx : view.visible_edges()) {
    const Edge e = view.edge(idx);
    local_edges.push_back({static_cast<uint32_t>(vg.local_of[e.u]), static_cast<uint32_t>(vg.local_of[e.v])});
  }
  vg.adjacency = normalized_adjacency(vg.node_ids.size(), local_edges);
  vg.features = view.gather_features(vg.node_ids);
  return vg;
}

LabelledRows labelled_rows(const TrainView& view, std::span<const uint32_t> nodes) {
  LabelledRows out;
  for (size_t r = 0; r < nodes.size(); ++r) {
    if (!view.is_labelled(nodes[r])) continue;
    out.rows.push_back(static_cast<uint32_t>(r));
    out.labels.push_back(view.train_label(nodes[r]));
  }
  return out;
}

std::vector<uint32_t> iota_rows(size_t n) {
  std::vector<uint32_t> r(n);
  std::iota(r.begin(), r.end(), 0u);
  return r;
}

size_t node_epochs(const TrainConfig& cfg) { return cfg.epochs ? cfg.epochs : cfg.base_epochs; }

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::kMlp: return "mlp";
    case Method::kGcn: return "gcn";
    case Method::kGcn2Mlp: return "gcn2mlp";
    case Method::kLinkDist: return "linkdist";
    case Method::kCoLinkDist: return "colinkdist";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view s) {
  for (Method m : {Method::kMlp, Method::kGcn, Method::kGcn2Mlp, Method::kLinkDist, Method::kCoLinkDist})
    if (method_name(m) == s) return m;
  return std::nullopt;
}

std::vector<std::pair<size_t, size_t>> batch_ranges(size_t n, size_t batch_size) {
  if (batch_size == 0) throw Error(ErrorCode::kValidation, "batch size must be positive");
  std::vector<std::pair<size_t, size_t>> out;
  for (size_t b = 0; b < n; b += batch_size) out.emplace_back(b, std::min(n, b + batch_size));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = n;
    out.pop_back();
  }
  return out;
}

SupervisedResult train_supervised(Method arch, const TrainView& view, const TrainConfig& cfg, const EpochCallback& cb) {
  if (arch != Method::kMlp && arch != Method::kGcn)
    throw Error(ErrorCode::kUsage, "train_supervised handles mlp and gcn only");
  const Graph& g = view.graph();
  const SplitMasks& masks = view.masks();
  const std::vector<uint32_t> train_ids = masks.nodes(Role::kTrain);
  if (train_ids.empty()) throw Error(ErrorCode::kValidation, "empty train mask");
  std::vector<int32_t> train_labels;
  for (uint32_t i : train_ids) train_labels.push_back(view.train_label(i));

  RunRngs rng(cfg.seed);
  ThreeLayerNet<float> model({g.num_features(), cfg.hidden, g.num_classes()}, cfg.blocks);
  model.init(rng.init);
  const ParamList<float> params = model.params();
  const std::vector<float> unit(g.num_classes(), 1.0f);

  std::optional<ViewGraph> vg;
  std::vector<uint32_t> train_local;
  std::optional<SparseRows> full_adjacency;
  if (arch == Method::kGcn) {
    vg = make_view_graph(view);
    for (uint32_t i : train_ids) train_local.push_back(static_cast<uint32_t>(vg->local_of[i]));
    // Transductive views already cover the whole graph.
    full_adjacency = vg->node_ids.size() == g.num_nodes() && view.visible_edges().size() == g.num_edges()
                         ? vg->adjacency
                         : normalized_adjacency(g);
  }

  SupervisedResult result;
  double best_val = -1.0;
  std::vector<uint32_t> order = iota_rows(train_ids.size());
  const size_t epochs = node_epochs(cfg);
  for (size_t epoch = 1; epoch <= epochs; ++epoch) {
    const auto t0 = Clock::now();
    LossReport rep;
    if (arch == Method::kMlp) {
      rng.shuffle.shuffle(std::span<uint32_t>(order));
      const auto ranges = batch_ranges(order.size(), cfg.batch_size);
      for (const auto& [b, e] : ranges) {
        std::vector<uint32_t> ids;
        std::vector<int32_t> labels;
        for (size_t k = b; k < e; ++k) {
          ids.push_back(train_ids[order[k]]);
          labels.push_back(train_labels[order[k]]);
        }
        ThreeLayerNet<float>::Cache cache;
        const Tensor2 logits = model.forward(view.gather_features(ids), nullptr, Mode::kTrain, &rng.dropout, &cache);
        model.commit(cache);
        const auto ce = cross_entropy_rows<float>(logits, iota_rows(ids.size()), labels, unit);
        model.backward(cache, ce.grad);
        adam_step(params, cfg.lr);
        rep.ce_term += ce.loss;
      }
      rep.ce_term /= static_cast<double>(ranges.size());
    } else {
      ThreeLayerNet<float>::Cache cache;
      const Tensor2 logits = gcn_forward(model, vg->adjacency, vg->features, Mode::kTrain, &rng.dropout, &cache);
      model.commit(cache);
      const auto ce = cross_entropy_rows<float>(logits, train_local, train_labels, unit);
      model.backward(cache, ce.grad);
      adam_step(params, cfg.lr);
      rep.ce_term = ce.loss;
    }
    rep.total = rep.ce_term;

    const Tensor2 logits = arch == Method::kMlp
                               ? infer_logits(model, g.features())
                               : gcn_forward(model, *full_adjacency, g.features(), Mode::kEval, nullptr);
    const Scores sc = score_predictions(g, masks, argmax_rows(logits));
    EpochRecord rec{epoch, rep, sc.val, sc.test, std::nullopt, std::nullopt, ms_since(t0)};
    if (sc.val > best_val) {
      best_val = sc.val;
      result.best_model = model;
    }
    result.trace.push_back(rec);
    if (cb) cb(rec);
  }
  return result;
}

SupervisedResult gcn2mlp_distill(const ThreeLayerNet<float>& teacher, const TrainView& view, const TrainConfig& cfg,
                                 const EpochCallback& cb) {
  const Graph& g = view.graph();
  const SplitMasks& masks = view.masks();
  const ViewGraph vg = make_view_graph(view);
  const Tensor2 teacher_logits = gcn_forward(teacher, vg.adjacency, vg.features, Mode::kEval, nullptr);

  // Targets: every node outside val and test (local rows of the view graph).
  std::vector<uint32_t> target_local;
  for (size_t k = 0; k < vg.node_ids.size(); ++k)
    if (!masks.is_eval(vg.node_ids[k])) target_local.push_back(static_cast<uint32_t>(k));
  if (target_local.size() < 2) throw Error(ErrorCode::kValidation, "gcn2mlp: fewer than 2 distillation targets");

  RunRngs rng(cfg.seed ^ 0x5EED5EED5EEDULL);
  ThreeLayerNet<float> student({g.num_features(), cfg.hidden, g.num_classes()}, cfg.blocks);
  student.init(rng.init);
  const ParamList<float> params = student.params();

  SupervisedResult result;
  double best_val = -1.0;
  std::vector<uint32_t> order = iota_rows(target_local.size());
  const size_t epochs = node_epochs(cfg);
  for (size_t epoch = 1; epoch <= epochs; ++epoch) {
    const auto t0 = Clock::now();
    rng.shuffle.shuffle(std::span<uint32_t>(order));
    LossReport rep;
    const auto ranges = batch_ranges(order.size(), cfg.batch_size);
    for (const auto& [b, e] : ranges) {
      std::vector<uint32_t> local;
      for (size_t k = b; k < e; ++k) local.push_back(target_local[order[k]]);
      const Tensor2 x = gather_rows(vg.features, local);
      const Tensor2 target = gather_rows(teacher_logits, local);
      ThreeLayerNet<float>::Cache cache;
      const Tensor2 logits = student.forward(x, nullptr, Mode::kTrain, &rng.dropout, &cache);
      student.commit(cache);
      const auto loss = mse(logits, target);
      student.backward(cache, loss.grad_a);
      adam_step(params, cfg.lr);
      rep.mse_term += loss.loss;
    }
    rep.mse_term /= static_cast<double>(ranges.size());
    rep.total = rep.mse_term;

    const Scores sc = score_predictions(g, masks, argmax_rows(infer_logits(student, g.features())));
    EpochRecord rec{epoch, rep, sc.val, sc.test, std::nullopt, std::nullopt, ms_since(t0)};
    if (sc.val > best_val) {
      best_val = sc.val;
      result.best_model = student;
    }
    result.trace.push_back(rec);
    if (cb) cb(rec);
  }
  return result;
}

namespace {

struct SideForward {
  ForkedOutput<float> out;
  ForkedMLP<float>::Cache cache;
};

SideForward forward_side(ForkedMLP<float>& m, const TrainView& view, std::span<const uint32_t> nodes, RunRngs& rngs) {
  SideForward f;
  f.out = m.forward(view.gather_features(nodes), Mode::kTrain, &rngs.dropout, &f.cache);
  m.commit(f.cache);
  return f;
}

LossReport edge_epoch(ForkedMLP<float>& m, const TrainView& view, const LinkDistParams& p, RunRngs& rngs,
                      bool contrastive) {
  std::vector<uint32_t> edges = view.visible_edges();
  if (edges.empty()) throw Error(ErrorCode::kNoEdges, "linkdist: the training view has no visible edges");
  if (p.class_weights.size() != view.num_classes())
    throw Error(ErrorCode::kDimension, "linkdist: class weight count differs from the class count");
  rngs.shuffle.shuffle(std::span<uint32_t>(edges));
  const std::span<const float> w(p.class_weights);
  const auto alpha = static_cast<float>(p.alpha);
  const ParamList<float> params = m.params();

  LossReport epoch_rep;
  const auto ranges = batch_ranges(edges.size(), p.batch_size);
  for (const auto& [b, e] : ranges) {
    std::vector<uint32_t> ii, jj;
    for (size_t k = b; k < e; ++k) {
      const Edge ed = view.edge(edges[k]);
      ii.push_back(ed.u);
      jj.push_back(ed.v);
    }
    const LabelledRows li = labelled_rows(view, ii), lj = labelled_rows(view, jj);
    const SideForward fi = forward_side(m, view, ii, rngs);
    const SideForward fj = forward_side(m, view, jj, rngs);
    PairLoss<float> pl = linkdist_pair_loss<float>(fi.out.z, fi.out.s, fj.out.z, fj.out.s, li, lj, w, alpha);

    LossReport rep;
    rep.ce_term = pl.ce;
    rep.mse_term = pl.mse;
    if (contrastive) {
      const auto pairs = sample_negative_pairs(view, ii.size(), rngs.negatives);
      std::vector<uint32_t> aa, kk;
      for (const auto& [a, k] : pairs) {
        aa.push_back(a);
        kk.push_back(k);
      }
      const LabelledRows la = labelled_rows(view, aa), lk = labelled_rows(view, kk);
      const SideForward fa = forward_side(m, view, aa, rngs);
      const SideForward fk = forward_side(m, view, kk, rngs);
      const NegativeLoss<float> nl = colinkdist_negative_loss<float>(fa.out.z, fa.out.s, fk.out.z, fk.out.s, la, lk, alpha);
      rep.ce_term += nl.ce;
      rep.neg_ce_term = nl.neg_ce;
      rep.neg_mse_term = nl.neg_mse;
      m.backward(fa.cache, nl.a.dz, nl.a.ds);
      m.backward(fk.cache, nl.k.dz, nl.k.ds);
    }
    m.backward(fi.cache, pl.i.dz, pl.i.ds);
    m.backward(fj.cache, pl.j.dz, pl.j.ds);
    adam_step(params, p.lr);

    rep.total = rep.ce_term + p.alpha * rep.mse_term - rep.neg_ce_term - p.alpha * rep.neg_mse_term;
    epoch_rep.ce_term += rep.ce_term;
    epoch_rep.mse_term += rep.mse_term;
    epoch_rep.neg_ce_term += rep.neg_ce_term;
    epoch_rep.neg_mse_term += rep.neg_mse_term;
    epoch_rep.total += rep.total;
  }
  const auto nb = static_cast<double>(ranges.size());
  epoch_rep.ce_term /= nb;
  epoch_rep.mse_term /= nb;
  epoch_rep.neg_ce_term /= nb;
  epoch_rep.neg_mse_term /= nb;
  epoch_rep.total /= nb;
  return epoch_rep;
}

}  // namespace

LossReport linkdist_epoch(ForkedMLP<float>& m, const TrainView& view, const LinkDistParams& p, RunRngs& rngs) {
  return edge_epoch(m, view, p, rngs, false);
}

LossReport colinkdist_epoch(ForkedMLP<float>& m, const TrainView& view, const LinkDistParams& p, RunRngs& rngs) {
  return edge_epoch(m, view, p, rngs, true);
}

LinkDistResult train_linkdist(const TrainView& view, const TrainConfig& cfg, bool contrastive, const EpochCallback& cb) {
  const Graph& g = view.graph();
  const SplitMasks& masks = view.masks();
  LinkDistResult result;
  result.alpha = alpha_schedule(view);
  result.alpha_used = cfg.alpha.value_or(result.alpha.alpha);
  if (!(result.alpha_used >= 0.0 && result.alpha_used <= 1.0)) throw Error(ErrorCode::kValidation, "alpha must lie in [0,1]");
  result.weights = class_weights(view);

  LinkDistParams p;
  p.alpha = result.alpha_used;
  p.class_weights = cfg.class_weights.empty() ? result.weights.weights : cfg.class_weights;
  p.batch_size = cfg.batch_size;
  p.lr = cfg.lr;

  RunRngs rng(cfg.seed);
  ForkedMLP<float> model({g.num_features(), cfg.hidden, g.num_classes()}, cfg.blocks);
  model.init(rng.init);

  const size_t epochs = cfg.epochs ? cfg.epochs : epoch_budget(g, cfg.base_epochs);
  double best_val = -1.0;
  for (size_t epoch = 1; epoch <= epochs; ++epoch) {
    const auto t0 = Clock::now();
    const LossReport rep = edge_epoch(model, view, p, rng, contrastive);
    const ForkedOutput<float> out = infer_forked(model, g.features());
    const Scores mlp_mode = score_predictions(g, masks, argmax_rows(out.z));
    const Scores mp_mode = score_predictions(g, masks, argmax_rows(combine_mp(out, g, p.alpha)));
    EpochRecord rec{epoch, rep, mlp_mode.val, mlp_mode.test, mp_mode.val, mp_mode.test, ms_since(t0)};
    if (mlp_mode.val > best_val) {
      best_val = mlp_mode.val;
      result.best_model = model;
    }
    result.trace.push_back(rec);
    if (cb) cb(rec);
  }
  return result;
}

TrainOutcome run_training(Method method, const TrainView& view, const TrainConfig& cfg, const TrainCallbacks& cbs) {
  TrainOutcome out;
  out.method = method;
  switch (method) {
    case Method::kMlp:
    case Method::kGcn: {
      auto r = train_supervised(method, view, cfg, cbs.on_epoch);
      out.trace = std::move(r.trace);
      out.best_model = std::move(r.best_model);
      break;
    }
    case Method::kGcn2Mlp: {
      // Same seed and config as a plain GCN run, so the teacher is that run.
      auto teacher = train_supervised(Method::kGcn, view, cfg, cbs.on_teacher_epoch);
      auto student = gcn2mlp_distill(teacher.best_model, view, cfg, cbs.on_epoch);
      out.teacher_trace = std::move(teacher.trace);
      out.trace = std::move(student.trace);
      out.best_model = std::move(student.best_model);
      break;
    }
    case Method::kLinkDist:
    case Method::kCoLinkDist: {
      auto r = train_linkdist(view, cfg, method == Method::kCoLinkDist, cbs.on_epoch);
      out.trace = std::move(r.trace);
      out.best_model = std::move(r.best_model);
      out.alpha = r.alpha_used;
      break;
    }
  }
  return out;
}

TrainOutcome run_training(Method method, const Graph& g, const SplitMasks& masks, Setting setting, const TrainConfig& cfg,
                          const TrainCallbacks& cbs) {
  const TrainView view(g, masks, setting);
  return run_training(method, view, cfg, cbs);
}

}  // namespace linkdist
