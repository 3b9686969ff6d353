#pragma once
#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ham/graph.hpp"
#include "ham/rng.hpp"
#include "ham/tensor.hpp"

namespace ham {

enum class ModelKind { Linear, NLinear, Mlp, Cycle };

inline const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Linear: return "linear";
    case ModelKind::NLinear: return "nlinear";
    case ModelKind::Mlp: return "mlp";
    case ModelKind::Cycle: return "cycle";
  }
  return "?";
}

inline ModelKind model_kind_from(const std::string& s) {
  if (s == "linear") return ModelKind::Linear;
  if (s == "nlinear") return ModelKind::NLinear;
  if (s == "mlp") return ModelKind::Mlp;
  if (s == "cycle") return ModelKind::Cycle;
  throw std::invalid_argument("unknown model kind '" + s + "'");
}

struct ModelConfig {
  ModelKind kind = ModelKind::Linear;
  std::size_t lookback = 0;   // L
  std::size_t horizon = 0;    // H
  std::size_t channels = 1;   // C
  std::vector<std::size_t> hidden;  // mlp only
  double dropout = 0.0;             // mlp only, in [0,1)
  std::size_t cycle_len = 0;        // cycle only, |Q|
  bool normalize = true;            // nlinear ablation switch
  std::uint64_t seed = 0;

  void validate() const {
    if (lookback < 1 || horizon < 1 || channels < 1)
      throw std::invalid_argument("model config: lookback, horizon and channels must be >= 1");
    if (kind == ModelKind::Cycle && cycle_len < 1)
      throw std::invalid_argument("model config: cycle model needs cycle_len >= 1");
    if (kind == ModelKind::Mlp && hidden.empty())
      throw std::invalid_argument("model config: mlp needs at least one hidden size");
    for (std::size_t h : hidden)
      if (h < 1) throw std::invalid_argument("model config: hidden sizes must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0))
      throw std::invalid_argument("model config: dropout must be in [0,1)");
  }
};

// Per-forward options. dropout_seed should already identify the sample (the
// callers mix the window index in) so a mask can be replayed exactly.
struct ForwardOptions {
  bool train_mode = false;
  long long step_index = 0;
  std::uint64_t dropout_seed = 0;
};

// Desk-scale forecasting models over a shared primitive basis. All of them
// map an L x C window to an H x C forecast:
//   linear   pred = W win + b
//   nlinear  pred = W (win - win[L]) + b + win[L]          (normalize on)
//   mlp      channel-flattened MLP, relu + inverted dropout in train mode
//   cycle    pred = W (win - Q[phase..]) + b + Q[phase+L..], Q learnable
// Parameter groups are kept sorted by name; that order is the contract for
// flattening and for the trace format.
class ForecastModel {
 public:
  ModelConfig config;
  std::vector<ParamGroup> params;

  static ForecastModel init(const ModelConfig& cfg) {
    cfg.validate();
    ForecastModel m;
    m.config = cfg;
    const std::size_t L = cfg.lookback, H = cfg.horizon, C = cfg.channels;
    switch (cfg.kind) {
      case ModelKind::Linear:
      case ModelKind::NLinear:
        m.add_linear("linear", H, L);
        break;
      case ModelKind::Cycle:
        m.add_linear("cycle", H, L);
        m.params.emplace_back("cycle.queue", Tensor::zeros(cfg.cycle_len, C));
        break;
      case ModelKind::Mlp: {
        std::size_t in = L * C;
        for (std::size_t i = 0; i < cfg.hidden.size(); ++i) {
          m.add_linear("mlp." + std::to_string(i), cfg.hidden[i], in);
          in = cfg.hidden[i];
        }
        m.add_linear("mlp." + std::to_string(cfg.hidden.size()), H * C, in);
        break;
      }
    }
    std::sort(m.params.begin(), m.params.end(),
              [](const ParamGroup& a, const ParamGroup& b) { return a.name < b.name; });
    m.randomize(cfg.seed);
    return m;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& g : params) n += g.value.numel();
    return n;
  }

  std::vector<std::string> layer_names() const {
    std::vector<std::string> out;
    for (const auto& g : params) out.push_back(g.name);
    return out;
  }

  const ParamGroup& group(const std::string& name) const {
    for (const auto& g : params)
      if (g.name == name) return g;
    throw std::invalid_argument("no parameter group named '" + name + "'");
  }
  ParamGroup& group(const std::string& name) {
    return const_cast<ParamGroup&>(static_cast<const ForecastModel*>(this)->group(name));
  }

  // One input node per group, aligned with params. Several forwards on the
  // same graph (a batch) share these so gradients accumulate in one place.
  std::vector<int> add_params(Graph& g) const {
    std::vector<int> ids;
    ids.reserve(params.size());
    for (const auto& p : params) ids.push_back(g.input(p.value, true));
    return ids;
  }

  // Records one forward pass on g and returns the prediction node (H x C).
  int build_forward(Graph& g, const std::vector<int>& param_ids, const Tensor& window,
                    const ForwardOptions& opt) const {
    if (window.rank() != 2 || window.rows() != config.lookback || window.cols() != config.channels)
      throw std::invalid_argument("forecast: window shape " + window.shape_str() + " does not match config [" +
                                  std::to_string(config.lookback) + "x" + std::to_string(config.channels) + "]");
    if (opt.step_index < 0)
      throw std::invalid_argument("forecast: step_index must be nonnegative");
    if (param_ids.size() != params.size())
      throw std::invalid_argument("forecast: param_ids does not match parameter groups");

    const int win = g.input(window, false);
    const std::size_t L = config.lookback, H = config.horizon, C = config.channels;

    auto pid = [&](const std::string& name) {
      for (std::size_t i = 0; i < params.size(); ++i)
        if (params[i].name == name) return param_ids[i];
      throw std::logic_error("missing param group " + name);
    };
    // b (n x 1) broadcast over channels as b * ones(1 x C).
    auto bias_bcast = [&](const std::string& name) {
      Tensor ones({1, C}, std::vector<double>(C, 1.0));
      return g.matmul(pid(name), g.input(ones, false));
    };

    switch (config.kind) {
      case ModelKind::Linear:
      case ModelKind::NLinear: {
        if (config.kind == ModelKind::NLinear && config.normalize) {
          const int base = g.broadcast_sub_last(win);
          const int z = g.add(g.matmul(pid("linear.weight"), base), bias_bcast("linear.bias"));
          const int last = g.gather_cyclic(win, L - 1, 1);  // 1 x C
          Tensor onesH({H, 1}, std::vector<double>(H, 1.0));
          return g.add(z, g.matmul(g.input(onesH, false), last));
        }
        return g.add(g.matmul(pid("linear.weight"), win), bias_bcast("linear.bias"));
      }
      case ModelKind::Cycle: {
        const std::size_t Q = config.cycle_len;
        const std::size_t phase = std::size_t(opt.step_index) % Q;
        const int queue = pid("cycle.queue");
        const int qin = g.gather_cyclic(queue, phase, L);
        const int z = g.add(g.matmul(pid("cycle.weight"), g.sub(win, qin)), bias_bcast("cycle.bias"));
        return g.add(z, g.gather_cyclic(queue, (phase + L) % Q, H));
      }
      case ModelKind::Mlp: {
        int h = g.reshape(win, {L * C, 1});
        std::size_t width = L * C;
        for (std::size_t i = 0; i < config.hidden.size(); ++i) {
          const std::string base = "mlp." + std::to_string(i);
          h = g.relu(g.add(g.matmul(pid(base + ".weight"), h), pid(base + ".bias")));
          width = config.hidden[i];
          if (opt.train_mode && config.dropout > 0.0) {
            const double keep = 1.0 - config.dropout;
            Tensor mask({width, 1});
            for (std::size_t e = 0; e < width; ++e)
              mask.data[e] = rng::keep_element(opt.dropout_seed, i, e, keep) ? 1.0 : 0.0;
            h = g.dropout_masked(h, g.input(mask, false), keep);
          }
        }
        const std::string fin = "mlp." + std::to_string(config.hidden.size());
        const int out = g.add(g.matmul(pid(fin + ".weight"), h), pid(fin + ".bias"));
        return g.reshape(out, {H, C});
      }
    }
    throw std::logic_error("unreachable model kind");
  }

  Tensor forecast(const Tensor& window, const ForwardOptions& opt = {}) const {
    Graph g;
    return g.val(build_forward(g, add_params(g), window, opt));
  }

  void zero_grad() {
    for (auto& p : params) p.grad.fill(0.0);
  }

 private:
  void add_linear(const std::string& base, std::size_t out, std::size_t in) {
    params.emplace_back(base + ".weight", Tensor::zeros(out, in));
    params.emplace_back(base + ".bias", Tensor::zeros(out, 1));
  }

  // Weights small uniform in +-1/sqrt(fan_in), biases and queues zero. Each
  // group draws from a stream keyed by its name, so initialization does not
  // depend on group ordering.
  void randomize(std::uint64_t seed) {
    for (auto& p : params) {
      if (p.name.ends_with(".weight")) {
        std::uint64_t tag = 1469598103934665603ULL;  // FNV-1a over the name
        for (char c : p.name) tag = (tag ^ std::uint64_t(static_cast<unsigned char>(c))) * 1099511628211ULL;
        rng::Stream s(rng::derive(seed, tag));
        const double a = 1.0 / std::sqrt(double(p.value.cols()));
        for (double& v : p.value.data) v = s.uniform(-a, a);
      }
    }
  }
};

}  // namespace ham
