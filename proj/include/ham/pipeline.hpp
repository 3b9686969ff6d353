#pragma once
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "ham/csvio.hpp"
#include "ham/data.hpp"
#include "ham/engine.hpp"
#include "ham/model.hpp"
#include "ham/serialize.hpp"
#include "ham/trace.hpp"
#include "ham/train.hpp"

// Experiment plumbing shared by the CLI and the acceptance suite: a run is a
// directory holding the full spec (config.json), per-epoch checkpoints, and a
// losses table, so any checkpoint can be probed later.

namespace ham {

struct DataSpec {
  std::string csv_path;  // empty: use the synthetic generator
  SynthConfig synth;
  SplitSpec split;
  bool standardize = true;
  bool forward_fill = false;  // fill empty CSV cells from the previous row
  std::string channel;        // nonempty: univariate selection
};

struct RunSpec {
  DataSpec data;
  WindowSpec window;
  ModelConfig model;
  FitConfig fit;
};

inline json to_json(const OptimizerConfig& c) {
  return json{{"kind", opt_kind_name(c.kind)}, {"lr", c.lr},      {"beta1", c.beta1},
              {"beta2", c.beta2},              {"epsilon", c.epsilon}, {"lr_decay", c.lr_decay}};
}
inline OptimizerConfig optimizer_config_from_json(const json& j) {
  OptimizerConfig c;
  c.kind = opt_kind_from(j.value("kind", std::string("sgd")));
  c.lr = j.value("lr", 0.05);
  c.beta1 = j.value("beta1", 0.9);
  c.beta2 = j.value("beta2", 0.999);
  c.epsilon = j.value("epsilon", 1e-8);
  c.lr_decay = j.value("lr_decay", 1.0);
  return c;
}

inline json to_json(const FitConfig& c) {
  return json{{"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"patience", c.patience},
              {"past_stop_epochs", c.past_stop_epochs},
              {"optimizer", to_json(c.optimizer)},
              {"seed", c.seed}};
}
inline FitConfig fit_config_from_json(const json& j) {
  FitConfig c;
  c.epochs = j.value("epochs", std::size_t(50));
  c.batch_size = j.value("batch_size", std::size_t(32));
  c.patience = j.value("patience", std::size_t(5));
  c.past_stop_epochs = j.value("past_stop_epochs", std::size_t(0));
  if (j.contains("optimizer")) c.optimizer = optimizer_config_from_json(j["optimizer"]);
  c.seed = j.value("seed", std::uint64_t(0));
  return c;
}

inline json to_json(const DataSpec& d) {
  return json{{"csv_path", d.csv_path},
              {"synth", to_json(d.synth)},
              {"split", {d.split.train, d.split.val, d.split.test}},
              {"standardize", d.standardize},
              {"forward_fill", d.forward_fill},
              {"channel", d.channel}};
}
inline DataSpec data_spec_from_json(const json& j) {
  DataSpec d;
  d.csv_path = j.value("csv_path", std::string());
  if (j.contains("synth") && !j["synth"].is_null()) d.synth = synth_config_from_json(j["synth"]);
  if (j.contains("split")) {
    d.split.train = j["split"][0].get<double>();
    d.split.val = j["split"][1].get<double>();
    d.split.test = j["split"][2].get<double>();
  }
  d.standardize = j.value("standardize", true);
  d.forward_fill = j.value("forward_fill", false);
  d.channel = j.value("channel", std::string());
  return d;
}

inline json to_json(const RunSpec& r) {
  json j;
  j["version"] = 1;
  j["kind"] = "train-run";
  j["data"] = to_json(r.data);
  j["window"] = {{"lookback", r.window.lookback}, {"horizon", r.window.horizon}, {"stride", r.window.stride}};
  j["model"] = to_json(r.model);
  j["fit"] = to_json(r.fit);
  return j;
}
inline RunSpec run_spec_from_json(const json& j) {
  RunSpec r;
  r.data = data_spec_from_json(j.at("data"));
  r.window.lookback = j.at("window").at("lookback").get<std::size_t>();
  r.window.horizon = j.at("window").at("horizon").get<std::size_t>();
  r.window.stride = j.at("window").value("stride", std::size_t(1));
  r.model = model_config_from_json(j.at("model"));
  r.fit = fit_config_from_json(j.at("fit"));
  return r;
}

struct PreparedData {
  Splits frames;  // standardized when enabled
  Scaler scaler;
  bool scaled = false;
  std::vector<Window> train, val, test;

  const std::vector<Window>& split_windows(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw std::invalid_argument("unknown split '" + name + "' (train, val, test)");
  }
};

// Deterministic data rebuild: generate/load, optional channel selection,
// chronological split, scaler fit on train only, windows per split.
inline PreparedData prepare(const DataSpec& spec, const WindowSpec& window) {
  SeriesFrame frame =
      spec.csv_path.empty() ? synth(spec.synth) : load_csv(spec.csv_path, spec.forward_fill);
  if (!spec.channel.empty()) frame = select_channel(frame, spec.channel);

  PreparedData out;
  out.frames = split(frame, spec.split);
  if (spec.standardize) {
    out.scaler = Scaler::fit(out.frames.train);
    out.scaled = true;
    out.frames.train = out.scaler.transform(out.frames.train);
    out.frames.val = out.scaler.transform(out.frames.val);
    out.frames.test = out.scaler.transform(out.frames.test);
  }
  out.train = windows(out.frames.train, window);
  out.val = windows(out.frames.val, window);
  out.test = windows(out.frames.test, window);
  return out;
}

// --- run directories ----------------------------------------------------
//   <dir>/config.json                  full RunSpec
//   <dir>/run.json                     summary: epochs, best/stop, scaler
//   <dir>/losses.csv                   epoch,train_mse,val_mse
//   <dir>/checkpoints/checkpoint_NNN.json

inline std::string checkpoint_path(const std::string& dir, std::size_t epoch) {
  char name[40];
  std::snprintf(name, sizeof name, "checkpoint_%03zu.json", epoch);
  return dir + "/checkpoints/" + name;
}

inline void save_run(const std::string& dir, const RunSpec& spec, const TrainRun& run,
                     const PreparedData& data) {
  namespace fs = std::filesystem;
  fs::create_directories(dir + "/checkpoints");
  write_text_file(dir + "/config.json", to_json(spec).dump(2) + "\n");

  json summary;
  summary["version"] = 1;
  summary["kind"] = "run-summary";
  summary["checkpoints"] = run.checkpoints.size();
  summary["best_epoch"] = run.best_epoch;
  summary["stop_epoch"] = run.stop_epoch;
  summary["scaler"] = data.scaled ? to_json(data.scaler) : json(nullptr);
  write_text_file(dir + "/run.json", summary.dump(2) + "\n");

  std::ostringstream losses;
  losses << "epoch,train_mse,val_mse\n";
  for (std::size_t e = 0; e < run.checkpoints.size(); ++e)
    losses << e << ',' << fmt_full(run.train_loss[e]) << ',' << fmt_full(run.val_loss[e]) << "\n";
  write_text_file(dir + "/losses.csv", losses.str());

  for (std::size_t e = 0; e < run.checkpoints.size(); ++e)
    save_checkpoint(run.checkpoints[e], checkpoint_path(dir, e));
}

struct RunSummary {
  std::size_t checkpoints = 0;
  long long best_epoch = -1;
  long long stop_epoch = -1;
  Scaler scaler;
  bool scaled = false;
};

inline RunSpec load_run_spec(const std::string& dir) {
  return run_spec_from_json(load_json_file(dir + "/config.json"));
}

inline RunSummary load_run_summary(const std::string& dir) {
  const json j = load_json_file(dir + "/run.json");
  RunSummary s;
  s.checkpoints = j.value("checkpoints", std::size_t(0));
  s.best_epoch = j.value("best_epoch", -1LL);
  s.stop_epoch = j.value("stop_epoch", -1LL);
  if (j.contains("scaler") && !j["scaler"].is_null()) {
    s.scaler = scaler_from_json(j["scaler"]);
    s.scaled = true;
  }
  return s;
}

// --- trace building -------------------------------------------------------

struct ProbeSpec {
  std::string split = "train";
  long long epoch = -1;  // -1: best checkpoint
  HamOptions options;
  bool naive = false;     // use the oracle path
  bool layerwise = true;  // keep per-layer curves in the trace
  bool both_modes = true;
  MaskMode single_mode = MaskMode::Causal;  // used when both_modes is false
};

inline TraceFile probe_checkpoint(const ForecastModel& model, const RunSpec& spec,
                                  const PreparedData& data, const ProbeSpec& probe,
                                  long long epoch) {
  HamMeta meta;
  meta.model_id = model_kind_name(model.config.kind);
  meta.split_id = probe.split;
  meta.epoch = epoch;

  const auto& wins = data.split_windows(probe.split);
  TraceFile trace;
  if (probe.naive && !probe.both_modes) {
    HamCurve c = ham_naive(model, wins, probe.single_mode, probe.options, meta);
    trace = make_trace(probe.single_mode == MaskMode::Causal ? &c : nullptr,
                       probe.single_mode == MaskMode::Anticausal ? &c : nullptr);
  } else if (probe.naive) {
    HamCurve c = ham_naive(model, wins, MaskMode::Causal, probe.options, meta);
    HamCurve a = ham_naive(model, wins, MaskMode::Anticausal, probe.options, meta);
    trace = make_trace(&c, &a);
  } else {
    auto [c, a] = ham_fast(model, wins, probe.options, meta);
    if (probe.both_modes)
      trace = make_trace(&c, &a);
    else
      trace = make_trace(probe.single_mode == MaskMode::Causal ? &c : nullptr,
                         probe.single_mode == MaskMode::Anticausal ? &a : nullptr);
  }
  if (!probe.layerwise) {
    if (trace.causal) trace.causal->per_layer.clear();
    if (trace.anticausal) trace.anticausal->per_layer.clear();
  }
  trace.model_kind = model_kind_name(model.config.kind);
  trace.config_digest = config_digest(model.config);
  trace.epoch = epoch;
  trace.split = probe.split;
  trace.lookback = spec.window.lookback;
  trace.horizon = model.config.horizon;
  trace.stride = spec.window.stride;
  trace.scaler_digest = data.scaled ? scaler_digest(data.scaler) : std::string();
  return trace;
}

// Trains one config at several batch sizes and emits per-epoch traces plus a
// summary of converged full-gradient norm averages (the causal value at H).
struct SweepResult {
  std::vector<std::pair<std::size_t, double>> norm_by_batch;  // batch size -> norm avg
};

inline SweepResult sweep_batch_sizes(const RunSpec& base, const std::vector<std::size_t>& batch_sizes,
                                     const std::string& outdir, const HamOptions& ham_opts) {
  namespace fs = std::filesystem;
  SweepResult result;
  const PreparedData data = prepare(base.data, base.window);
  for (const std::size_t bs : batch_sizes) {
    RunSpec spec = base;
    spec.fit.batch_size = bs;
    const ForecastModel init = ForecastModel::init(spec.model);
    const TrainRun run = fit(init, data.train, data.val, spec.fit);

    const std::string bdir = outdir + "/bs" + std::to_string(bs);
    fs::create_directories(bdir);
    ProbeSpec probe;
    probe.options = ham_opts;
    for (std::size_t e = 0; e < run.checkpoints.size(); ++e) {
      const TraceFile t = probe_checkpoint(run.checkpoints[e], spec, data, probe,
                                           static_cast<long long>(e));
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03zu.json", e);
      save_trace(t, bdir + "/" + name);
    }
    const std::size_t best = run.best_epoch > 0 ? std::size_t(run.best_epoch) : run.checkpoints.size() - 1;
    const TraceFile conv = probe_checkpoint(run.checkpoints[best], spec, data, probe,
                                            static_cast<long long>(best));
    result.norm_by_batch.emplace_back(bs, conv.causal->overall[conv.horizon]);
  }
  std::ostringstream csv;
  csv << "batch_size,full_norm_average\n";
  for (const auto& [bs, v] : result.norm_by_batch) csv << bs << ',' << fmt_full(v) << "\n";
  write_text_file(outdir + "/sweep.csv", csv.str());
  return result;
}

}  // namespace ham
