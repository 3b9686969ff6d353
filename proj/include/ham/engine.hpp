#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ham/data.hpp"
#include "ham/graph.hpp"
#include "ham/model.hpp"
#include "ham/rng.hpp"
#include "ham/tensor.hpp"

namespace ham {

// Causal keeps the first cut timesteps of the horizon, anticausal the rest.
enum class MaskMode { Causal, Anticausal };

inline const char* mode_name(MaskMode m) { return m == MaskMode::Causal ? "causal" : "anticausal"; }

enum class NormKind { L2, L1, LInf };
enum class ReductionKind { LayerMean, Concat };

inline const char* norm_name(NormKind n) {
  switch (n) {
    case NormKind::L2: return "l2";
    case NormKind::L1: return "l1";
    case NormKind::LInf: return "linf";
  }
  return "?";
}
inline const char* reduction_name(ReductionKind r) {
  return r == ReductionKind::LayerMean ? "layer_mean" : "concat";
}

inline NormKind norm_from(const std::string& s) {
  if (s == "l2") return NormKind::L2;
  if (s == "l1") return NormKind::L1;
  if (s == "linf") return NormKind::LInf;
  throw std::invalid_argument("unknown norm kind '" + s + "'");
}
inline ReductionKind reduction_from(const std::string& s) {
  if (s == "layer_mean") return ReductionKind::LayerMean;
  if (s == "concat") return ReductionKind::Concat;
  throw std::invalid_argument("unknown reduction kind '" + s + "'");
}

// Binary loss mask over horizon timesteps h in [1, H] for a cut in [0, H].
//   causal      bits[h-1] = 1  iff  1 <= h <= cut
//   anticausal  bits[h-1] = 1  iff  cut < h <= H
// For a shared cut the two masks partition the horizon exactly.
struct HorizonMask {
  MaskMode mode;
  std::size_t cut = 0;
  std::size_t horizon = 0;
  std::vector<std::uint8_t> bits;
};

inline HorizonMask make_mask(MaskMode mode, std::size_t cut, std::size_t horizon) {
  if (cut > horizon)
    throw std::invalid_argument("make_mask: cut " + std::to_string(cut) + " outside [0," +
                                std::to_string(horizon) + "]");
  HorizonMask m{mode, cut, horizon, std::vector<std::uint8_t>(horizon, 0)};
  for (std::size_t h = 1; h <= horizon; ++h) {
    const bool keep = mode == MaskMode::Causal ? h <= cut : h > cut;
    m.bits[h - 1] = keep ? 1 : 0;
  }
  return m;
}

// Masked regression loss: sum over masked-in timesteps of the channel-mean
// squared error, divided by the full horizon length H (not by the number of
// masked-in steps).
inline double masked_loss(const Tensor& preds, const Tensor& targets, const HorizonMask& mask) {
  if (!preds.same_shape(targets) || preds.rows() != mask.horizon)
    throw std::invalid_argument("masked_loss: shape mismatch " + preds.shape_str() + " vs " +
                                targets.shape_str() + " with H=" + std::to_string(mask.horizon));
  const std::size_t H = preds.rows(), C = preds.cols();
  double total = 0.0;
  for (std::size_t h = 0; h < H; ++h) {
    if (!mask.bits[h]) continue;
    double l = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      const double d = preds.at(h, c) - targets.at(h, c);
      l += d * d;
    }
    total += l / double(C);
  }
  return total / double(H);
}

// Optional loss term that is never masked (weight penalties, auxiliary
// reconstruction losses). Receives the graph and the model's parameter nodes
// and returns a scalar node added to every masked loss.
using AuxLossBuilder = std::function<int(Graph&, const std::vector<int>&)>;

inline AuxLossBuilder l2_penalty_loss(double lambda) {
  return [lambda](Graph& g, const std::vector<int>& param_ids) {
    int total = -1;
    for (int pid : param_ids) {
      const std::size_t n = g.val(pid).numel();
      const int flat = g.reshape(pid, {n, 1});
      Tensor ones({1, n}, std::vector<double>(n, 1.0));
      const int ssq = g.matmul(g.input(ones, false), g.square(flat));  // 1x1
      total = total < 0 ? ssq : g.add(total, ssq);
    }
    return g.scale(total, lambda);
  };
}

struct HamOptions {
  std::size_t batch_size = 0;  // 0 means all windows in one batch
  NormKind norm = NormKind::L2;
  ReductionKind reduction = ReductionKind::LayerMean;
  bool dropout = true;         // replayed train-time dropout during the probe
  std::uint64_t seed = 0;      // dropout replay seed
  AuxLossBuilder aux;          // empty: regression loss only
};

struct HamMeta {
  std::string model_id;
  std::string split_id;
  std::string norm = "l2";
  std::string reduction = "layer_mean";
  std::size_t batch_size = 0;
  long long epoch = -1;
};

// The central result: gradient norm averages indexed by the mask cut 0..H,
// overall and per layer.
struct HamCurve {
  MaskMode mode = MaskMode::Causal;
  std::size_t horizon = 0;
  std::vector<double> overall;                                        // H+1 values
  std::vector<std::pair<std::string, std::vector<double>>> per_layer; // layer order
  HamMeta meta;
};

namespace detail {

inline double norm_of(std::span<const double> v, NormKind kind) {
  double acc = 0.0;
  switch (kind) {
    case NormKind::L2:
      for (double x : v) acc += x * x;
      return std::sqrt(acc);
    case NormKind::L1:
      for (double x : v) acc += std::abs(x);
      return acc;
    case NormKind::LInf:
      for (double x : v) acc = std::max(acc, std::abs(x));
      return acc;
  }
  return 0.0;
}

inline double reduce_layers(std::span<const double> layer_norms, NormKind norm, ReductionKind red) {
  if (layer_norms.empty()) return 0.0;
  if (red == ReductionKind::LayerMean) {
    double s = 0.0;
    for (double x : layer_norms) s += x;
    return s / double(layer_norms.size());
  }
  // Concat: the norm of the concatenated gradient, assembled from per-layer norms.
  switch (norm) {
    case NormKind::L2: {
      double s = 0.0;
      for (double x : layer_norms) s += x * x;
      return std::sqrt(s);
    }
    case NormKind::L1: {
      double s = 0.0;
      for (double x : layer_norms) s += x;
      return s;
    }
    case NormKind::LInf: {
      double s = 0.0;
      for (double x : layer_norms) s = std::max(s, x);
      return s;
    }
  }
  return 0.0;
}

// Shared per-batch forward: parameter nodes, one forward per window (dropout
// masks keyed by the window's dataset index so every cut and both modes see
// identical stochasticity), and the per-timestep loss vector
//   lvec[h] = (1/(B*H)) sum_w channel_mean((pred_w[h,:] - y_w[h,:])^2),
// so that a 0/1 mask row times lvec is exactly the batch-mean masked loss.
template <class M>
struct BatchGraph {
  Graph g;
  std::vector<int> param_ids;
  int lvec = -1;
  int aux = -1;

  BatchGraph(const M& model, std::span<const Window> batch, std::size_t first_index,
             const HamOptions& opt) {
    if (batch.empty()) throw std::invalid_argument("ham: empty batch");
    param_ids = model.add_params(g);
    int sum = -1;
    for (std::size_t w = 0; w < batch.size(); ++w) {
      ForwardOptions fo;
      fo.train_mode = opt.dropout;
      fo.step_index = static_cast<long long>(batch[w].start);
      fo.dropout_seed = rng::derive(opt.seed, 0xD80u, first_index + w);
      const int pred = model.build_forward(g, param_ids, batch[w].input, fo);
      const int tgt = g.input(batch[w].target, false);
      const int lw = g.mean_axis(g.square(g.sub(pred, tgt)), 1);  // H x 1
      sum = sum < 0 ? lw : g.add(sum, lw);
    }
    const std::size_t H = g.val(sum).rows();
    lvec = g.scale(sum, 1.0 / (double(batch.size()) * double(H)));
    if (opt.aux) aux = opt.aux(g, param_ids);
  }

  // Scalar node for one mask: bits-row times lvec (plus the aux term).
  int masked_loss_node(const HorizonMask& mask) {
    Tensor row({1, mask.horizon});
    for (std::size_t h = 0; h < mask.horizon; ++h) row.data[h] = mask.bits[h] ? 1.0 : 0.0;
    int loss = g.matmul(g.input(row, false), lvec);
    if (aux >= 0) loss = g.add(loss, aux);
    return loss;
  }

  // Flattened gradient of the last sweep, in parameter-group order.
  void harvest(std::vector<double>& flat) const {
    flat.clear();
    Tensor t;
    for (int pid : param_ids) {
      g.read_grad(pid, t);
      flat.insert(flat.end(), t.data.begin(), t.data.end());
    }
  }
};

inline std::vector<std::size_t> layer_offsets(const std::vector<ParamGroup>& groups) {
  std::vector<std::size_t> off{0};
  for (const auto& p : groups) off.push_back(off.back() + p.value.numel());
  return off;
}

inline std::size_t batch_count(std::size_t n, std::size_t batch_size) {
  const std::size_t b = batch_size == 0 ? n : batch_size;
  return (n + b - 1) / b;
}

}  // namespace detail

// Naive path: one masked backward pass per cut per batch. This is the oracle
// the fast path is checked against; parameters are never updated.
template <class M>
HamCurve ham_naive(const M& model, const std::vector<Window>& wins, MaskMode mode,
                   const HamOptions& opt, HamMeta meta = {}) {
  if (wins.empty()) throw std::invalid_argument("ham_naive: empty dataset");
  const std::size_t H = model.config.horizon;
  const std::size_t bsz = opt.batch_size == 0 ? wins.size() : opt.batch_size;
  const std::size_t nlayers = model.params.size();

  HamCurve curve;
  curve.mode = mode;
  curve.horizon = H;
  curve.overall.assign(H + 1, 0.0);
  for (const auto& p : model.params) curve.per_layer.emplace_back(p.name, std::vector<double>(H + 1, 0.0));
  meta.norm = norm_name(opt.norm);
  meta.reduction = reduction_name(opt.reduction);
  meta.batch_size = bsz;
  curve.meta = meta;

  const auto offsets = detail::layer_offsets(model.params);
  std::vector<double> flat, layer_norms(nlayers);

  for (std::size_t cut = 0; cut <= H; ++cut) {
    const HorizonMask mask = make_mask(mode, cut, H);
    for (std::size_t b0 = 0; b0 < wins.size(); b0 += bsz) {
      const std::size_t n = std::min(bsz, wins.size() - b0);
      detail::BatchGraph<M> bg(model, std::span<const Window>(&wins[b0], n), b0, opt);
      bg.g.backward(bg.masked_loss_node(mask));
      bg.harvest(flat);
      for (std::size_t l = 0; l < nlayers; ++l)
        layer_norms[l] = detail::norm_of(
            std::span<const double>(flat.data() + offsets[l], offsets[l + 1] - offsets[l]), opt.norm);
      const double w = double(n) / double(wins.size());
      curve.overall[cut] += w * detail::reduce_layers(layer_norms, opt.norm, opt.reduction);
      for (std::size_t l = 0; l < nlayers; ++l) curve.per_layer[l].second[cut] += w * layer_norms[l];
    }
  }
  return curve;
}

// Fast path: per batch, one recorded forward and H per-timestep reverse
// sweeps; causal values are norms of running prefix sums of the per-timestep
// gradients, anticausal of suffix sums. Matches ham_naive by linearity of
// differentiation in the mask.
template <class M>
std::pair<HamCurve, HamCurve> ham_fast(const M& model, const std::vector<Window>& wins,
                                       const HamOptions& opt, HamMeta meta = {}) {
  if (wins.empty()) throw std::invalid_argument("ham_fast: empty dataset");
  const std::size_t H = model.config.horizon;
  const std::size_t bsz = opt.batch_size == 0 ? wins.size() : opt.batch_size;
  const std::size_t nlayers = model.params.size();
  const auto offsets = detail::layer_offsets(model.params);
  const std::size_t P = offsets.back();

  auto fresh = [&](MaskMode m) {
    HamCurve c;
    c.mode = m;
    c.horizon = H;
    c.overall.assign(H + 1, 0.0);
    for (const auto& p : model.params) c.per_layer.emplace_back(p.name, std::vector<double>(H + 1, 0.0));
    HamMeta mm = meta;
    mm.norm = norm_name(opt.norm);
    mm.reduction = reduction_name(opt.reduction);
    mm.batch_size = bsz;
    c.meta = mm;
    return c;
  };
  HamCurve causal = fresh(MaskMode::Causal);
  HamCurve anticausal = fresh(MaskMode::Anticausal);

  std::vector<std::vector<double>> g_h(H);  // per-timestep flat gradients
  std::vector<double> g_aux, acc(P), layer_norms(nlayers);

  auto accumulate_point = [&](HamCurve& c, std::size_t cut, double w) {
    for (std::size_t l = 0; l < nlayers; ++l) {
      const std::size_t lo = offsets[l], hi = offsets[l + 1];
      double nrm;
      if (g_aux.empty()) {
        nrm = detail::norm_of(std::span<const double>(acc.data() + lo, hi - lo), opt.norm);
      } else {
        double a = 0.0;
        switch (opt.norm) {
          case NormKind::L2:
            for (std::size_t i = lo; i < hi; ++i) {
              const double v = acc[i] + g_aux[i];
              a += v * v;
            }
            a = std::sqrt(a);
            break;
          case NormKind::L1:
            for (std::size_t i = lo; i < hi; ++i) a += std::abs(acc[i] + g_aux[i]);
            break;
          case NormKind::LInf:
            for (std::size_t i = lo; i < hi; ++i) a = std::max(a, std::abs(acc[i] + g_aux[i]));
            break;
        }
        nrm = a;
      }
      layer_norms[l] = nrm;
      c.per_layer[l].second[cut] += w * nrm;
    }
    c.overall[cut] += w * detail::reduce_layers(layer_norms, opt.norm, opt.reduction);
  };

  for (std::size_t b0 = 0; b0 < wins.size(); b0 += bsz) {
    const std::size_t n = std::min(bsz, wins.size() - b0);
    detail::BatchGraph<M> bg(model, std::span<const Window>(&wins[b0], n), b0, opt);
    for (std::size_t h = 0; h < H; ++h) {
      bg.g.backward_component(bg.lvec, h);
      bg.harvest(g_h[h]);
    }
    g_aux.clear();
    if (bg.aux >= 0) {
      bg.g.backward(bg.aux);
      bg.harvest(g_aux);
    }
    const double w = double(n) / double(wins.size());

    std::fill(acc.begin(), acc.end(), 0.0);
    accumulate_point(causal, 0, w);
    for (std::size_t cut = 1; cut <= H; ++cut) {
      const auto& gh = g_h[cut - 1];
      for (std::size_t i = 0; i < P; ++i) acc[i] += gh[i];
      accumulate_point(causal, cut, w);
    }

    std::fill(acc.begin(), acc.end(), 0.0);
    accumulate_point(anticausal, H, w);
    for (std::size_t cut = H; cut-- > 0;) {
      const auto& gh = g_h[cut];
      for (std::size_t i = 0; i < P; ++i) acc[i] += gh[i];
      accumulate_point(anticausal, cut, w);
    }
  }
  return {std::move(causal), std::move(anticausal)};
}

struct DecompositionReport {
  bool ok = false;
  double max_rel_dev = 0.0;
};

// Checks grad(causal cut) + grad(anticausal cut) == grad(full) per layer.
// Pure linearity of differentiation; deviations are float noise only.
template <class M>
DecompositionReport decomposition_check(const M& model, std::span<const Window> batch,
                                        std::size_t cut, const HamOptions& opt,
                                        double tolerance = 1e-10) {
  const std::size_t H = model.config.horizon;
  HamOptions regression_only = opt;
  regression_only.aux = nullptr;  // the identity concerns the maskable loss
  detail::BatchGraph<M> bg(model, batch, 0, regression_only);
  const int loss_c = bg.masked_loss_node(make_mask(MaskMode::Causal, cut, H));
  const int loss_a = bg.masked_loss_node(make_mask(MaskMode::Anticausal, cut, H));
  const int loss_f = bg.masked_loss_node(make_mask(MaskMode::Causal, H, H));

  std::vector<double> gc, ga, gf;
  bg.g.backward(loss_c);
  bg.harvest(gc);
  bg.g.backward(loss_a);
  bg.harvest(ga);
  bg.g.backward(loss_f);
  bg.harvest(gf);

  const auto offsets = detail::layer_offsets(model.params);
  DecompositionReport rep;
  for (std::size_t l = 0; l + 1 < offsets.size(); ++l) {
    double dev = 0.0, ref = 0.0;
    for (std::size_t i = offsets[l]; i < offsets[l + 1]; ++i) {
      dev = std::max(dev, std::abs(gc[i] + ga[i] - gf[i]));
      ref = std::max(ref, std::abs(gf[i]));
    }
    rep.max_rel_dev = std::max(rep.max_rel_dev, dev / std::max(ref, 1e-30));
  }
  rep.ok = rep.max_rel_dev < tolerance;
  return rep;
}

}  // namespace ham
