// Command line for the horizon activation mapping toolkit.
//
// Exit codes: 0 success, 1 usage error, 2 validation error, 3 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ham/csvio.hpp"
#include "ham/pipeline.hpp"
#include "ham/svg.hpp"
#include "ham/trace.hpp"

namespace {

using namespace ham;

struct ValidationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::istringstream in(s);
  std::string cell;
  while (std::getline(in, cell, ',')) out.push_back(std::stod(cell));
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  std::istringstream in(s);
  std::string cell;
  while (std::getline(in, cell, ',')) out.push_back(std::stoul(cell));
  return out;
}

std::string series_csv(const SeriesFrame& f) {
  std::ostringstream out;
  for (std::size_t c = 0; c < f.channels(); ++c) out << (c ? "," : "") << f.channel_names[c];
  out << "\n";
  for (std::size_t t = 0; t < f.length(); ++t) {
    for (std::size_t c = 0; c < f.channels(); ++c) out << (c ? "," : "") << fmt_full(f.values.at(t, c));
    out << "\n";
  }
  return out.str();
}

void check_trace_numerics(const TraceFile& t) {
  for (const auto* c : {t.causal ? &*t.causal : nullptr, t.anticausal ? &*t.anticausal : nullptr}) {
    if (!c) continue;
    for (double v : c->overall)
      if (!std::isfinite(v)) throw NumericFailure("curve contains a non-finite value");
    for (const auto& [name, values] : c->per_layer)
      for (double v : values)
        if (!std::isfinite(v)) throw NumericFailure("layer curve '" + name + "' contains a non-finite value");
  }
}

std::string interp_label(const TraceFile& t) {
  std::string l = t.model_kind.empty() ? "model" : t.model_kind;
  l += "-H" + std::to_string(t.horizon);
  return l;
}

// --- flag bundles --------------------------------------------------------

struct SynthFlags {
  std::string out, config_path;
  std::size_t length = 400, channels = 1;
  std::string periods = "24", amplitudes = "1", phases = "0";
  double trend = 0.0, noise_std = 0.0;
  std::uint64_t seed = 0;

  SynthConfig build() const {
    if (!config_path.empty()) return synth_config_from_json(load_json_file(config_path));
    SynthConfig cfg;
    cfg.length = length;
    cfg.noise_std = noise_std;
    cfg.seed = seed;
    const auto ps = parse_doubles(periods);
    const auto as = parse_doubles(amplitudes);
    const auto hs = parse_doubles(phases);
    if (ps.size() != as.size() || ps.size() != hs.size())
      throw ValidationFailure("periods, amplitudes and phases must have equal lengths");
    for (std::size_t c = 0; c < channels; ++c) {
      ChannelSpec ch;
      ch.name = "c" + std::to_string(c);
      ch.trend = trend;
      for (std::size_t k = 0; k < ps.size(); ++k) ch.components.push_back({ps[k], as[k], hs[k]});
      cfg.channels.push_back(std::move(ch));
    }
    return cfg;
  }
};

struct TrainFlags {
  std::string data_csv, synth_config, out;
  std::string model = "linear";
  std::size_t lookback = 24, horizon = 8;
  std::string hidden = "16";
  double dropout = 0.0;
  std::size_t cycle_length = 0;
  bool no_normalize = false;
  std::string channel;
  std::string split = "0.6,0.2,0.2";
  bool no_standardize = false;
  bool forward_fill = false;
  std::size_t stride = 1;
  std::size_t epochs = 30, batch_size = 32, patience = 5, past_stop = 0;
  std::string optimizer = "sgd";
  double lr = 0.05, lr_decay = 1.0;
  std::uint64_t seed = 0;

  RunSpec build() const {
    RunSpec spec;
    if (data_csv.empty() == synth_config.empty())
      throw ValidationFailure("exactly one of --data and --synth-config is required");
    spec.data.csv_path = data_csv;
    if (!synth_config.empty()) spec.data.synth = synth_config_from_json(load_json_file(synth_config));
    const auto ratios = parse_doubles(split);
    if (ratios.size() != 3) throw ValidationFailure("--split needs three ratios");
    spec.data.split = {ratios[0], ratios[1], ratios[2]};
    spec.data.standardize = !no_standardize;
    spec.data.forward_fill = forward_fill;
    spec.data.channel = channel;
    spec.window = {lookback, horizon, stride};
    spec.model.kind = model_kind_from(model);
    spec.model.lookback = lookback;
    spec.model.horizon = horizon;
    spec.model.channels = 1;  // fixed up after the data is prepared
    spec.model.hidden = parse_sizes(hidden);
    spec.model.dropout = dropout;
    spec.model.cycle_len = cycle_length;
    spec.model.normalize = !no_normalize;
    spec.model.seed = seed;
    spec.fit.epochs = epochs;
    spec.fit.batch_size = batch_size;
    spec.fit.patience = patience;
    spec.fit.past_stop_epochs = past_stop;
    spec.fit.optimizer.kind = opt_kind_from(optimizer);
    spec.fit.optimizer.lr = lr;
    spec.fit.optimizer.lr_decay = lr_decay;
    spec.fit.seed = seed;
    return spec;
  }
};

struct HamFlags {
  std::string run_dir, out;
  long long epoch = -1;
  std::string split = "train";
  std::string mode = "both";
  bool naive = false;
  bool layerwise = false;
  std::size_t batch_size = 0;
  std::string norm = "l2", reduction = "layer_mean";
  std::string dropout = "on";
  double aux_l2 = 0.0;
  std::uint64_t seed = 0;
};

int run_ham(const HamFlags& f) {
  const RunSpec spec = load_run_spec(f.run_dir);
  const RunSummary summary = load_run_summary(f.run_dir);
  if (summary.checkpoints == 0) throw ValidationFailure("run has no checkpoints");

  long long epoch = f.epoch;
  if (epoch < 0)
    epoch = summary.best_epoch >= 0 ? summary.best_epoch
                                    : static_cast<long long>(summary.checkpoints) - 1;
  if (std::size_t(epoch) >= summary.checkpoints)
    throw ValidationFailure("epoch " + std::to_string(epoch) + " out of range (run has " +
                            std::to_string(summary.checkpoints) + " checkpoints)");

  const ForecastModel model = load_checkpoint(checkpoint_path(f.run_dir, std::size_t(epoch)));
  const PreparedData data = prepare(spec.data, spec.window);

  ProbeSpec probe;
  probe.split = f.split;
  probe.epoch = epoch;
  probe.naive = f.naive;
  probe.layerwise = f.layerwise;
  probe.options.batch_size = f.batch_size;
  probe.options.norm = norm_from(f.norm);
  probe.options.reduction = reduction_from(f.reduction);
  if (f.dropout != "on" && f.dropout != "off")
    throw ValidationFailure("--dropout must be on or off");
  probe.options.dropout = f.dropout == "on";
  probe.options.seed = f.seed;
  if (f.aux_l2 > 0.0) probe.options.aux = l2_penalty_loss(f.aux_l2);
  if (f.mode == "both") {
    probe.both_modes = true;
  } else {
    probe.both_modes = false;
    probe.single_mode = f.mode == "causal" ? MaskMode::Causal
                       : f.mode == "anticausal"
                           ? MaskMode::Anticausal
                           : throw ValidationFailure("--mode must be both, causal or anticausal");
  }

  const TraceFile trace = probe_checkpoint(model, spec, data, probe, epoch);
  check_trace_numerics(trace);
  save_trace(trace, f.out);
  std::cout << "wrote " << f.out << " (H=" << trace.horizon << ", split=" << trace.split
            << ", epoch=" << epoch << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"horizon activation maps for small forecasting models"};
  app.require_subcommand(1);

  SynthFlags synth_flags;
  auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic series CSV");
  cmd_synth->add_option("--out", synth_flags.out)->required();
  cmd_synth->add_option("--config", synth_flags.config_path, "synth config JSON (overrides flags)");
  cmd_synth->add_option("--length", synth_flags.length);
  cmd_synth->add_option("--channels", synth_flags.channels);
  cmd_synth->add_option("--periods", synth_flags.periods, "comma list, shared by channels");
  cmd_synth->add_option("--amplitudes", synth_flags.amplitudes);
  cmd_synth->add_option("--phases", synth_flags.phases);
  cmd_synth->add_option("--trend", synth_flags.trend);
  cmd_synth->add_option("--noise-std", synth_flags.noise_std);
  cmd_synth->add_option("--seed", synth_flags.seed);

  TrainFlags train_flags;
  auto* cmd_train = app.add_subcommand("train", "train a model and record per-epoch checkpoints");
  cmd_train->add_option("--data", train_flags.data_csv, "input CSV");
  cmd_train->add_option("--synth-config", train_flags.synth_config, "synthetic data config JSON");
  cmd_train->add_option("--out", train_flags.out)->required();
  cmd_train->add_option("--model", train_flags.model, "linear|nlinear|mlp|cycle");
  cmd_train->add_option("--lookback", train_flags.lookback);
  cmd_train->add_option("--horizon", train_flags.horizon);
  cmd_train->add_option("--stride", train_flags.stride);
  cmd_train->add_option("--hidden", train_flags.hidden, "mlp hidden sizes, comma list");
  cmd_train->add_option("--dropout", train_flags.dropout);
  cmd_train->add_option("--cycle-length", train_flags.cycle_length);
  cmd_train->add_flag("--no-normalize", train_flags.no_normalize, "nlinear without normalization");
  cmd_train->add_option("--channel", train_flags.channel, "univariate channel selection");
  cmd_train->add_option("--split", train_flags.split, "train,val,test ratios");
  cmd_train->add_flag("--no-standardize", train_flags.no_standardize);
  cmd_train->add_flag("--forward-fill", train_flags.forward_fill, "fill empty CSV cells from the previous row");
  cmd_train->add_option("--epochs", train_flags.epochs);
  cmd_train->add_option("--batch-size", train_flags.batch_size);
  cmd_train->add_option("--patience", train_flags.patience);
  cmd_train->add_option("--past-stop", train_flags.past_stop, "extra epochs after early stop");
  cmd_train->add_option("--optimizer", train_flags.optimizer, "sgd|adam");
  cmd_train->add_option("--lr", train_flags.lr);
  cmd_train->add_option("--lr-decay", train_flags.lr_decay);
  cmd_train->add_option("--seed", train_flags.seed);

  HamFlags ham_flags;
  auto* cmd_ham = app.add_subcommand("ham", "compute horizon activation maps for a checkpoint");
  cmd_ham->add_option("--run", ham_flags.run_dir)->required();
  cmd_ham->add_option("--out", ham_flags.out)->required();
  cmd_ham->add_option("--epoch", ham_flags.epoch, "checkpoint epoch (default: best)");
  cmd_ham->add_option("--split", ham_flags.split, "train|val|test");
  cmd_ham->add_option("--mode", ham_flags.mode, "both|causal|anticausal");
  cmd_ham->add_flag("--naive", ham_flags.naive, "use the oracle path (one backward per cut)");
  cmd_ham->add_flag("--layerwise", ham_flags.layerwise, "keep per-layer curves in the trace");
  cmd_ham->add_option("--batch-size", ham_flags.batch_size, "probe batch size (0 = all windows)");
  cmd_ham->add_option("--norm", ham_flags.norm, "l2|l1|linf");
  cmd_ham->add_option("--reduction", ham_flags.reduction, "layer_mean|concat");
  cmd_ham->add_option("--dropout", ham_flags.dropout, "on|off (replayed train-time dropout)");
  cmd_ham->add_option("--aux-l2", ham_flags.aux_l2, "unmaskable L2 penalty coefficient");
  cmd_ham->add_option("--seed", ham_flags.seed, "dropout replay seed");

  std::string trace_in, trace_out, scope = "per-mode";
  auto* cmd_areas = app.add_subcommand("areas", "append signed area analytics to a trace");
  cmd_areas->add_option("--trace", trace_in)->required();
  cmd_areas->add_option("--out", trace_out)->required();
  cmd_areas->add_option("--scope", scope, "per-mode|global proportionality line scope");

  std::string diff_in, diff_out;
  auto* cmd_diff = app.add_subcommand("diff", "append the difference curve to a trace");
  cmd_diff->add_option("--trace", diff_in)->required();
  cmd_diff->add_option("--out", diff_out)->required();

  std::vector<std::string> interp_traces;
  std::string interp_out;
  std::size_t interp_grid = 101;
  auto* cmd_interp = app.add_subcommand("interp", "interpolated area plot data across traces");
  cmd_interp->add_option("--trace", interp_traces, "trace file (repeat, >= 2)");
  cmd_interp->add_option("--out", interp_out)->required();
  cmd_interp->add_option("--grid", interp_grid);

  std::vector<std::string> render_traces;
  std::string render_out, render_kind = "ham";
  auto* cmd_render = app.add_subcommand("render", "render traces as SVG");
  cmd_render->add_option("--trace", render_traces, "trace file (repeatable)");
  cmd_render->add_option("--out", render_out)->required();
  cmd_render->add_option("--kind", render_kind, "ham|areas|diff|interp|layerwise");

  std::string ingest_path;
  auto* cmd_ingest = app.add_subcommand("ingest", "validate an externally produced trace");
  cmd_ingest->add_option("--trace", ingest_path)->required();

  TrainFlags sweep_flags;
  std::string sweep_batches = "8,32,128";
  std::size_t sweep_ham_batch = 0;
  auto* cmd_sweep = app.add_subcommand("sweep", "train one config across batch sizes");
  cmd_sweep->add_option("--data", sweep_flags.data_csv);
  cmd_sweep->add_option("--synth-config", sweep_flags.synth_config);
  cmd_sweep->add_option("--out", sweep_flags.out)->required();
  cmd_sweep->add_option("--model", sweep_flags.model);
  cmd_sweep->add_option("--lookback", sweep_flags.lookback);
  cmd_sweep->add_option("--horizon", sweep_flags.horizon);
  cmd_sweep->add_option("--hidden", sweep_flags.hidden);
  cmd_sweep->add_option("--dropout", sweep_flags.dropout);
  cmd_sweep->add_option("--cycle-length", sweep_flags.cycle_length);
  cmd_sweep->add_option("--epochs", sweep_flags.epochs);
  cmd_sweep->add_option("--patience", sweep_flags.patience);
  cmd_sweep->add_option("--optimizer", sweep_flags.optimizer);
  cmd_sweep->add_option("--lr", sweep_flags.lr);
  cmd_sweep->add_option("--lr-decay", sweep_flags.lr_decay);
  cmd_sweep->add_option("--seed", sweep_flags.seed);
  cmd_sweep->add_option("--batch-sizes", sweep_batches, "training batch sizes, comma list");
  cmd_sweep->add_option("--ham-batch-size", sweep_ham_batch, "probe batch size (0 = all windows)");

  std::string export_in, export_out;
  auto* cmd_export = app.add_subcommand("export-csv", "export trace curves and analytics as CSV");
  cmd_export->add_option("--trace", export_in)->required();
  cmd_export->add_option("--out", export_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*cmd_synth) {
      const SeriesFrame f = synth(synth_flags.build());
      write_text_file(synth_flags.out, series_csv(f));
      std::cout << "wrote " << synth_flags.out << " (" << f.length() << "x" << f.channels() << ")\n";
      return 0;
    }
    if (*cmd_train) {
      RunSpec spec = train_flags.build();
      PreparedData data = prepare(spec.data, spec.window);
      spec.model.channels = data.frames.train.channels();
      const ForecastModel init = ForecastModel::init(spec.model);
      const TrainRun run = fit(init, data.train, data.val, spec.fit);
      save_run(train_flags.out, spec, run, data);
      std::cout << "trained " << run.checkpoints.size() - 1 << " epochs, best " << run.best_epoch
                << ", early stop "
                << (run.stop_epoch >= 0 ? std::to_string(run.stop_epoch) : std::string("none"))
                << ", final val mse " << run.val_loss.back() << "\n";
      return 0;
    }
    if (*cmd_ham) return run_ham(ham_flags);
    if (*cmd_areas) {
      TraceFile t = load_trace(trace_in);
      if (!t.causal || !t.anticausal)
        throw ValidationFailure("areas: trace must hold both modes");
      LineScope s = scope == "global" ? LineScope::Global
                    : scope == "per-mode"
                        ? LineScope::PerMode
                        : throw ValidationFailure("--scope must be per-mode or global");
      const auto lc = proportionality_line(*t.causal, s, &*t.anticausal);
      const auto la = proportionality_line(*t.anticausal, s, &*t.causal);
      attach_areas(t, s, signed_area(*t.causal, lc), signed_area(*t.anticausal, la));
      save_trace(t, trace_out);
      std::cout << "wrote " << trace_out << "\n";
      return 0;
    }
    if (*cmd_diff) {
      TraceFile t = load_trace(diff_in);
      if (!t.causal || !t.anticausal)
        throw ValidationFailure("diff: trace must hold both causal and anticausal modes");
      attach_difference(t, difference_curve(*t.causal, *t.anticausal));
      save_trace(t, diff_out);
      std::cout << "wrote " << diff_out << "\n";
      return 0;
    }
    if (*cmd_interp) {
      if (interp_traces.size() < 2) throw ValidationFailure("interp: need at least two traces");
      std::vector<ModelAreas> models;
      for (const auto& path : interp_traces) {
        const TraceFile t = load_trace(path);
        if (!t.causal || !t.anticausal)
          throw ValidationFailure("interp: trace '" + path + "' must hold both modes");
        const TraceAnalytics a = analyze_trace(t);
        models.push_back({interp_label(t), a.causal_area, a.anticausal_area});
      }
      const InterpolatedAreaPlot plot = interpolated_area_plot(models, interp_grid);
      json j;
      j["version"] = 1;
      j["kind"] = "ham-interp";
      j["grid"] = plot.grid;
      j["series"] = json::array();
      for (const auto& s : plot.series)
        j["series"].push_back({{"label", s.label},
                               {"mode", mode_name(s.mode)},
                               {"all_zero", s.all_zero},
                               {"y", s.y}});
      write_text_file(interp_out, j.dump(2) + "\n");
      std::cout << "wrote " << interp_out << "\n";
      return 0;
    }
    if (*cmd_render) {
      if (render_traces.empty()) throw ValidationFailure("render: need at least one trace");
      std::vector<TraceFile> traces;
      for (const auto& p : render_traces) traces.push_back(load_trace(p));
      std::string svg;
      if (render_kind == "ham") {
        svg = render_ham(traces);
      } else if (render_kind == "areas") {
        svg = render_areas(traces);
      } else if (render_kind == "diff") {
        for (const auto& t : traces)
          if (!t.causal || !t.anticausal)
            throw ValidationFailure("render diff: trace is missing a mode");
        svg = render_diff(traces);
      } else if (render_kind == "interp") {
        if (traces.size() < 2) throw ValidationFailure("render interp: need at least two traces");
        std::vector<ModelAreas> models;
        for (const auto& t : traces) {
          const TraceAnalytics a = analyze_trace(t);
          models.push_back({interp_label(t), a.causal_area, a.anticausal_area});
        }
        svg = render_interp(interpolated_area_plot(models));
      } else if (render_kind == "layerwise") {
        if (traces.size() != 1) throw ValidationFailure("render layerwise: exactly one trace");
        svg = render_layerwise(traces[0]);
      } else {
        throw ValidationFailure("unknown --kind '" + render_kind + "'");
      }
      write_text_file(render_out, svg);
      std::cout << "wrote " << render_out << "\n";
      return 0;
    }
    if (*cmd_ingest) {
      validate_trace_json(load_json_file(ingest_path));
      std::cout << ingest_path << ": ok\n";
      return 0;
    }
    if (*cmd_sweep) {
      RunSpec spec = sweep_flags.build();
      const PreparedData probe_data = prepare(spec.data, spec.window);
      spec.model.channels = probe_data.frames.train.channels();
      HamOptions opts;
      opts.batch_size = sweep_ham_batch;
      opts.seed = sweep_flags.seed;
      const SweepResult r = sweep_batch_sizes(spec, parse_sizes(sweep_batches), sweep_flags.out, opts);
      for (const auto& [bs, v] : r.norm_by_batch)
        std::cout << "batch " << bs << ": full-gradient norm average " << v << "\n";
      std::cout << "wrote " << sweep_flags.out << "/sweep.csv\n";
      return 0;
    }
    if (*cmd_export) {
      const TraceFile t = load_trace(export_in);
      write_text_file(export_out, export_csv(t));
      std::cout << "wrote " << export_out << "\n";
      return 0;
    }
  } catch (const TraceError& e) {
    std::cerr << "trace validation failed: " << e.what() << "\n";
    return 2;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const ValidationFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
