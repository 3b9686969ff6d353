#pragma once
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ham/data.hpp"
#include "ham/graph.hpp"
#include "ham/model.hpp"
#include "ham/rng.hpp"

namespace ham {

enum class OptKind { Sgd, Adam };

inline const char* opt_kind_name(OptKind k) { return k == OptKind::Sgd ? "sgd" : "adam"; }
inline OptKind opt_kind_from(const std::string& s) {
  if (s == "sgd") return OptKind::Sgd;
  if (s == "adam") return OptKind::Adam;
  throw std::invalid_argument("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
  OptKind kind = OptKind::Sgd;
  double lr = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lr_decay = 1.0;  // lr multiplier applied per epoch

  void validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("optimizer: learning rate must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw std::invalid_argument("optimizer: betas must be in [0,1)");
    if (!(lr_decay > 0.0)) throw std::invalid_argument("optimizer: lr decay must be > 0");
  }
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) { cfg.validate(); }

  const OptimizerConfig& config() const { return cfg_; }

  // One update from the gradients currently stored in the groups.
  void step(std::vector<ParamGroup>& params, double lr) {
    if (cfg_.kind == OptKind::Sgd) {
      for (auto& p : params)
        for (std::size_t i = 0; i < p.value.data.size(); ++i)
          p.value.data[i] -= lr * p.grad.data[i];
      return;
    }
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.value.shape);
        v_.emplace_back(p.value.shape);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t g = 0; g < params.size(); ++g) {
      auto& p = params[g];
      for (std::size_t i = 0; i < p.value.data.size(); ++i) {
        const double grad = p.grad.data[i];
        m_[g].data[i] = cfg_.beta1 * m_[g].data[i] + (1.0 - cfg_.beta1) * grad;
        v_[g].data[i] = cfg_.beta2 * v_[g].data[i] + (1.0 - cfg_.beta2) * grad * grad;
        const double mhat = m_[g].data[i] / bc1;
        const double vhat = v_[g].data[i] / bc2;
        p.value.data[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
  }

 private:
  OptimizerConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

namespace detail {

// Batch-mean MSE node over horizon and channels. Dropout masks are keyed by
// (seed, epoch, dataset window index) so runs replay exactly.
inline int build_batch_mse(Graph& g, const ForecastModel& model, const std::vector<int>& param_ids,
                           std::span<const Window> batch, std::span<const std::size_t> indices,
                           bool train_mode, std::uint64_t seed, std::size_t epoch) {
  int sum = -1;
  for (std::size_t w = 0; w < batch.size(); ++w) {
    ForwardOptions fo;
    fo.train_mode = train_mode;
    fo.step_index = static_cast<long long>(batch[w].start);
    fo.dropout_seed = rng::derive(seed, 0xDA0u + epoch, indices[w]);
    const int pred = model.build_forward(g, param_ids, batch[w].input, fo);
    const int tgt = g.input(batch[w].target, false);
    const int lw = g.mean_axis(g.square(g.sub(pred, tgt)), 1);  // H x 1
    sum = sum < 0 ? lw : g.add(sum, lw);
  }
  const std::size_t H = g.val(sum).rows();
  Tensor ones({1, H}, std::vector<double>(H, 1.0));
  return g.scale(g.matmul(g.input(ones, false), sum), 1.0 / (double(batch.size()) * double(H)));
}

}  // namespace detail

// One pass over the windows in seeded shuffled order. Returns the mean train
// loss (weighted by batch size, i.e. the plain mean over windows).
inline double train_epoch(ForecastModel& model, const std::vector<Window>& wins,
                          std::size_t batch_size, Optimizer& optimizer, double lr,
                          std::uint64_t seed, std::size_t epoch) {
  if (wins.empty()) throw std::invalid_argument("train_epoch: empty window set");
  if (batch_size < 1) throw std::invalid_argument("train_epoch: batch size must be >= 1");

  rng::Stream shuffle(rng::derive(seed, 0x5F0u, epoch));
  const std::vector<std::size_t> order = shuffle.permutation(wins.size());

  double loss_sum = 0.0;
  for (std::size_t b0 = 0; b0 < wins.size(); b0 += batch_size) {
    const std::size_t n = std::min(batch_size, wins.size() - b0);
    std::vector<Window> batch(n);
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
      batch[i] = wins[order[b0 + i]];
      idx[i] = order[b0 + i];
    }
    Graph g;
    const std::vector<int> pids = model.add_params(g);
    const int loss = detail::build_batch_mse(g, model, pids, batch, idx, true, seed, epoch);
    loss_sum += g.val(loss).data[0] * double(n);
    g.backward(loss);
    g.write_gradients(pids, model.params);
    optimizer.step(model.params, lr);
  }
  return loss_sum / double(wins.size());
}

struct EvalResult {
  double mse = 0.0;
  double mae = 0.0;
};

// Dropout disabled; deterministic.
inline EvalResult evaluate(const ForecastModel& model, const std::vector<Window>& wins) {
  EvalResult r;
  if (wins.empty()) return r;
  std::size_t count = 0;
  for (const auto& w : wins) {
    ForwardOptions fo;
    fo.step_index = static_cast<long long>(w.start);
    const Tensor pred = model.forecast(w.input, fo);
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
      const double d = pred.data[i] - w.target.data[i];
      r.mse += d * d;
      r.mae += std::abs(d);
      ++count;
    }
  }
  r.mse /= double(count);
  r.mae /= double(count);
  return r;
}

struct FitConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::size_t patience = 5;
  std::size_t past_stop_epochs = 0;  // keep training this many epochs after the stop
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;

  void validate() const {
    if (patience < 1) throw std::invalid_argument("fit: patience must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("fit: batch size must be >= 1");
    optimizer.validate();
  }
};

// Epoch-indexed record of a run. Checkpoint 0 is the randomly initialized
// model; train/val losses are evaluation losses at each checkpoint.
struct TrainRun {
  std::vector<ForecastModel> checkpoints;
  std::vector<double> train_loss, val_loss;
  long long best_epoch = -1;   // epoch with the lowest validation loss (>= 1)
  long long stop_epoch = -1;   // epoch at which patience ran out, -1 if never
  FitConfig config;
};

inline TrainRun fit(const ForecastModel& init, const std::vector<Window>& train_wins,
                    const std::vector<Window>& val_wins, const FitConfig& cfg) {
  cfg.validate();
  TrainRun run;
  run.config = cfg;
  ForecastModel model = init;
  Optimizer optimizer(cfg.optimizer);

  auto record = [&](const ForecastModel& m) {
    run.checkpoints.push_back(m);
    run.train_loss.push_back(evaluate(m, train_wins).mse);
    run.val_loss.push_back(evaluate(m, val_wins).mse);
  };
  record(model);

  double best_val = 0.0;
  std::size_t since_best = 0;
  double lr = cfg.optimizer.lr;
  std::size_t past_stop = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    train_epoch(model, train_wins, cfg.batch_size, optimizer, lr, cfg.seed, epoch);
    lr *= cfg.optimizer.lr_decay;
    record(model);

    const double v = run.val_loss.back();
    if (run.stop_epoch < 0) {
      if (run.best_epoch < 0 || v < best_val) {
        best_val = v;
        run.best_epoch = static_cast<long long>(epoch);
        since_best = 0;
      } else {
        ++since_best;
      }
      if (since_best >= cfg.patience) run.stop_epoch = static_cast<long long>(epoch);
    }
    if (run.stop_epoch >= 0) {
      if (epoch > std::size_t(run.stop_epoch)) ++past_stop;
      if (past_stop >= cfg.past_stop_epochs) break;
    }
  }
  return run;
}

}  // namespace ham
