#pragma once
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ham/analytics.hpp"
#include "ham/engine.hpp"
#include "ham/serialize.hpp"

namespace ham {

// Validation failure with the JSON path of the offending field.
struct TraceError : std::runtime_error {
  std::string path;
  TraceError(std::string p, const std::string& what)
      : std::runtime_error(p + ": " + what), path(std::move(p)) {}
};

// Serialized bundle of HAM curves plus the metadata needed to interpret them.
// Self-describing: analytics and rendering run from a trace alone, which is
// how externally trained models enter the pipeline.
struct TraceFile {
  int version = 1;
  std::string model_kind;
  std::string config_digest;
  long long epoch = -1;
  std::string split = "train";
  std::size_t lookback = 0;
  std::size_t horizon = 0;
  std::size_t stride = 1;
  std::string scaler_digest;
  std::string norm = "l2";
  std::string reduction = "layer_mean";
  std::size_t batch_size = 0;
  std::optional<HamCurve> causal;
  std::optional<HamCurve> anticausal;
  json analytics;  // null until an analytics command appends results

  bool partial() const { return !(causal && anticausal); }
};

inline TraceFile make_trace(const HamCurve* causal, const HamCurve* anticausal) {
  if (!causal && !anticausal) throw std::invalid_argument("make_trace: no curves");
  const HamCurve& any = causal ? *causal : *anticausal;
  TraceFile t;
  t.model_kind = any.meta.model_id;
  t.epoch = any.meta.epoch;
  t.split = any.meta.split_id;
  t.horizon = any.horizon;
  t.norm = any.meta.norm;
  t.reduction = any.meta.reduction;
  t.batch_size = any.meta.batch_size;
  if (causal) t.causal = *causal;
  if (anticausal) t.anticausal = *anticausal;
  return t;
}

namespace detail {

inline json curve_to_json(const HamCurve& c) {
  json j;
  j["overall"] = c.overall;
  json pl = json::object();
  for (const auto& [name, values] : c.per_layer) pl[name] = values;
  j["per_layer"] = pl;
  return j;
}

inline HamCurve curve_from_json(const json& j, MaskMode mode, std::size_t horizon) {
  HamCurve c;
  c.mode = mode;
  c.horizon = horizon;
  c.overall = j.at("overall").get<std::vector<double>>();
  if (j.contains("per_layer"))
    for (const auto& [name, values] : j["per_layer"].items())
      c.per_layer.emplace_back(name, values.get<std::vector<double>>());
  return c;
}

inline void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw TraceError(path, what);
}

inline void validate_curve_json(const json& j, const std::string& path, std::size_t horizon) {
  require(j.is_object(), path, "expected an object");
  require(j.contains("overall") && j["overall"].is_array(), path + ".overall", "expected an array");
  auto check_values = [&](const json& arr, const std::string& p) {
    require(arr.size() == horizon + 1, p,
            "expected " + std::to_string(horizon + 1) + " values (H+1), got " + std::to_string(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) {
      require(arr[i].is_number(), p + "[" + std::to_string(i) + "]", "expected a number");
      const double v = arr[i].get<double>();
      require(std::isfinite(v), p + "[" + std::to_string(i) + "]", "value is not finite");
      require(v >= 0.0, p + "[" + std::to_string(i) + "]", "norm averages must be nonnegative");
    }
  };
  check_values(j["overall"], path + ".overall");
  if (j.contains("per_layer")) {
    require(j["per_layer"].is_object(), path + ".per_layer", "expected an object");
    for (const auto& [name, values] : j["per_layer"].items()) {
      require(values.is_array(), path + ".per_layer." + name, "expected an array");
      check_values(values, path + ".per_layer." + name);
    }
  }
}

}  // namespace detail

inline json trace_to_json(const TraceFile& t) {
  json j;
  j["version"] = t.version;
  j["kind"] = "ham-trace";
  j["model"] = {{"kind", t.model_kind}, {"config_digest", t.config_digest}, {"epoch", t.epoch},
                {"batch_size", t.batch_size}};
  j["dataset"] = {{"split", t.split}, {"lookback", t.lookback}, {"horizon", t.horizon},
                  {"stride", t.stride}, {"scaler_digest", t.scaler_digest}};
  j["norm"] = t.norm;
  j["reduction"] = t.reduction;
  j["partial"] = t.partial();
  json curves = json::object();
  if (t.causal) curves["causal"] = detail::curve_to_json(*t.causal);
  if (t.anticausal) curves["anticausal"] = detail::curve_to_json(*t.anticausal);
  j["curves"] = curves;
  if (!t.analytics.is_null()) j["analytics"] = t.analytics;
  return j;
}

// Schema and invariant checks; throws TraceError with a JSON path.
inline void validate_trace_json(const json& j) {
  using detail::require;
  require(j.is_object(), "$", "trace must be a JSON object");
  require(j.contains("version") && j["version"].is_number_integer(), "version", "expected an integer");
  require(j["version"].get<int>() == 1, "version", "unsupported version " + j["version"].dump());
  require(j.value("kind", std::string()) == "ham-trace", "kind", "expected \"ham-trace\"");
  require(j.contains("model") && j["model"].is_object(), "model", "expected an object");
  require(j["model"].contains("kind") && j["model"]["kind"].is_string(), "model.kind", "expected a string");
  require(j.contains("dataset") && j["dataset"].is_object(), "dataset", "expected an object");
  require(j["dataset"].contains("horizon") && j["dataset"]["horizon"].is_number_unsigned(),
          "dataset.horizon", "expected a nonnegative integer");
  const std::size_t horizon = j["dataset"]["horizon"].get<std::size_t>();
  require(horizon >= 1, "dataset.horizon", "horizon must be >= 1");
  require(j.contains("norm") && j["norm"].is_string(), "norm", "expected a string");
  norm_from(j["norm"].get<std::string>());
  require(j.contains("reduction") && j["reduction"].is_string(), "reduction", "expected a string");
  reduction_from(j["reduction"].get<std::string>());

  require(j.contains("curves") && j["curves"].is_object(), "curves", "expected an object");
  const bool has_c = j["curves"].contains("causal");
  const bool has_a = j["curves"].contains("anticausal");
  require(has_c || has_a, "curves", "at least one of causal/anticausal is required");
  if (has_c) detail::validate_curve_json(j["curves"]["causal"], "curves.causal", horizon);
  if (has_a) detail::validate_curve_json(j["curves"]["anticausal"], "curves.anticausal", horizon);
  if (!(has_c && has_a))
    require(j.value("partial", false) == true, "partial",
            "a single-mode trace must be flagged partial");

  if (has_c && has_a) {
    const double full_c = j["curves"]["causal"]["overall"][horizon].get<double>();
    const double full_a = j["curves"]["anticausal"]["overall"][0].get<double>();
    const double scale = std::max({std::abs(full_c), std::abs(full_a), 1e-30});
    require(std::abs(full_c - full_a) <= 1e-9 * scale, "curves",
            "causal[H] and anticausal[0] must agree (both are the full-loss norm average)");
  }
}

inline TraceFile trace_from_json(const json& j) {
  validate_trace_json(j);
  TraceFile t;
  t.version = j["version"].get<int>();
  t.model_kind = j["model"].value("kind", std::string());
  t.config_digest = j["model"].value("config_digest", std::string());
  t.epoch = j["model"].value("epoch", -1LL);
  t.batch_size = j["model"].value("batch_size", std::size_t(0));
  t.split = j["dataset"].value("split", std::string());
  t.lookback = j["dataset"].value("lookback", std::size_t(0));
  t.horizon = j["dataset"]["horizon"].get<std::size_t>();
  t.stride = j["dataset"].value("stride", std::size_t(1));
  t.scaler_digest = j["dataset"].value("scaler_digest", std::string());
  t.norm = j["norm"].get<std::string>();
  t.reduction = j["reduction"].get<std::string>();
  if (j["curves"].contains("causal"))
    t.causal = detail::curve_from_json(j["curves"]["causal"], MaskMode::Causal, t.horizon);
  if (j["curves"].contains("anticausal"))
    t.anticausal = detail::curve_from_json(j["curves"]["anticausal"], MaskMode::Anticausal, t.horizon);
  if (j.contains("analytics")) t.analytics = j["analytics"];
  return t;
}

inline void save_trace(const TraceFile& t, const std::string& path) {
  write_text_file(path, trace_to_json(t).dump(2) + "\n");
}

inline TraceFile load_trace(const std::string& path) { return trace_from_json(load_json_file(path)); }

// --- analytics attachments ---------------------------------------------

inline void attach_areas(TraceFile& t, LineScope scope, const AreaCurve& causal,
                         const AreaCurve& anticausal) {
  if (t.analytics.is_null()) t.analytics = json::object();
  t.analytics["areas"] = {
      {"scope", scope_name(scope)},
      {"causal", {{"g", causal.line.g}, {"values", causal.values}}},
      {"anticausal", {{"g", anticausal.line.g}, {"values", anticausal.values}}},
  };
}

inline void attach_difference(TraceFile& t, const DifferenceCurve& d) {
  if (t.analytics.is_null()) t.analytics = json::object();
  json eq = {{"found", d.equivariant.found},
             {"degenerate", d.equivariant.degenerate},
             {"t_star", d.equivariant.t_star},
             {"value", d.equivariant.value},
             {"crossings", d.equivariant.crossings}};
  t.analytics["difference"] = {{"denominator", "max_abs"},
                               {"normalizer", d.normalizer},
                               {"values", d.values},
                               {"equivariant", eq}};
}

// Computes (or restores) the default per-mode analytics for rendering.
struct TraceAnalytics {
  AreaCurve causal_area, anticausal_area;
  DifferenceCurve difference;
  bool has_areas = false, has_difference = false;
};

inline TraceAnalytics analyze_trace(const TraceFile& t) {
  TraceAnalytics a;
  if (t.causal && t.anticausal) {
    LineScope scope = LineScope::PerMode;
    if (!t.analytics.is_null() && t.analytics.contains("areas") &&
        t.analytics["areas"].value("scope", std::string()) == "global")
      scope = LineScope::Global;
    const auto lc = proportionality_line(*t.causal, scope, &*t.anticausal);
    const auto la = proportionality_line(*t.anticausal, scope, &*t.causal);
    a.causal_area = signed_area(*t.causal, lc);
    a.anticausal_area = signed_area(*t.anticausal, la);
    a.difference = difference_curve(*t.causal, *t.anticausal);
    a.has_areas = a.has_difference = true;
  } else if (t.causal || t.anticausal) {
    const HamCurve& c = t.causal ? *t.causal : *t.anticausal;
    const auto line = proportionality_line(c);
    (t.causal ? a.causal_area : a.anticausal_area) = signed_area(c, line);
    a.has_areas = true;
  }
  return a;
}

}  // namespace ham
