#pragma once
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ham/data.hpp"
#include "ham/model.hpp"
#include "ham/train.hpp"

// JSON forms of the config and checkpoint records. Field order is fixed by
// the writers (ordered_json) so emitted files are byte-stable.

namespace ham {

using json = nlohmann::ordered_json;

inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  static const char* hexd = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = hexd[h & 0xF];
    h >>= 4;
  }
  return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json load_json_file(const std::string& path) {
  json j = json::parse(read_text_file(path), nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("'" + path + "' is not valid JSON");
  return j;
}

// --- model config -----------------------------------------------------

inline json to_json(const ModelConfig& c) {
  json j;
  j["kind"] = model_kind_name(c.kind);
  j["lookback"] = c.lookback;
  j["horizon"] = c.horizon;
  j["channels"] = c.channels;
  j["hidden"] = c.hidden;
  j["dropout"] = c.dropout;
  j["cycle_len"] = c.cycle_len;
  j["normalize"] = c.normalize;
  j["seed"] = c.seed;
  return j;
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.kind = model_kind_from(j.at("kind").get<std::string>());
  c.lookback = j.at("lookback").get<std::size_t>();
  c.horizon = j.at("horizon").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.hidden = j.value("hidden", std::vector<std::size_t>{});
  c.dropout = j.value("dropout", 0.0);
  c.cycle_len = j.value("cycle_len", std::size_t(0));
  c.normalize = j.value("normalize", true);
  c.seed = j.value("seed", std::uint64_t(0));
  c.validate();
  return c;
}

inline std::string config_digest(const ModelConfig& c) { return fnv1a_hex(to_json(c).dump()); }

// --- synth config -----------------------------------------------------

inline json to_json(const SynthConfig& c) {
  json j;
  j["length"] = c.length;
  j["noise_std"] = c.noise_std;
  j["seed"] = c.seed;
  j["channels"] = json::array();
  for (const auto& ch : c.channels) {
    json jc;
    jc["name"] = ch.name;
    jc["trend"] = ch.trend;
    jc["components"] = json::array();
    for (const auto& s : ch.components)
      jc["components"].push_back({{"period", s.period}, {"amplitude", s.amplitude}, {"phase", s.phase}});
    j["channels"].push_back(jc);
  }
  return j;
}

inline SynthConfig synth_config_from_json(const json& j) {
  SynthConfig c;
  c.length = j.at("length").get<std::size_t>();
  c.noise_std = j.value("noise_std", 0.0);
  c.seed = j.value("seed", std::uint64_t(0));
  for (const auto& jc : j.at("channels")) {
    ChannelSpec ch;
    ch.name = jc.value("name", std::string());
    ch.trend = jc.value("trend", 0.0);
    if (jc.contains("components"))
      for (const auto& js : jc["components"])
        ch.components.push_back({js.at("period").get<double>(), js.at("amplitude").get<double>(),
                                 js.value("phase", 0.0)});
    c.channels.push_back(std::move(ch));
  }
  return c;
}

// --- scaler -----------------------------------------------------------

inline json to_json(const Scaler& s) { return json{{"mean", s.mean}, {"std", s.std}}; }

inline Scaler scaler_from_json(const json& j) {
  Scaler s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.std = j.at("std").get<std::vector<double>>();
  return s;
}

inline std::string scaler_digest(const Scaler& s) { return fnv1a_hex(to_json(s).dump()); }

// --- checkpoints --------------------------------------------------------
// {"version":1,"kind":"checkpoint","config":{...},"params":{name:{shape,data}}}

inline json checkpoint_to_json(const ForecastModel& m) {
  json j;
  j["version"] = 1;
  j["kind"] = "checkpoint";
  j["config"] = to_json(m.config);
  json params = json::object();
  for (const auto& p : m.params)
    params[p.name] = json{{"shape", p.value.shape}, {"data", p.value.data}};
  j["params"] = params;
  return j;
}

inline ForecastModel checkpoint_from_json(const json& j) {
  if (j.value("kind", std::string()) != "checkpoint")
    throw std::runtime_error("checkpoint: unexpected kind '" + j.value("kind", std::string()) + "'");
  ForecastModel m = ForecastModel::init(model_config_from_json(j.at("config")));
  for (auto& p : m.params) {
    if (!j.at("params").contains(p.name))
      throw std::runtime_error("checkpoint: missing parameter group '" + p.name + "'");
    const json& jp = j["params"][p.name];
    const auto shape = jp.at("shape").get<std::vector<std::size_t>>();
    auto data = jp.at("data").get<std::vector<double>>();
    if (shape != p.value.shape || data.size() != p.value.data.size())
      throw std::runtime_error("checkpoint: parameter group '" + p.name + "' has the wrong shape");
    p.value.data = std::move(data);
  }
  return m;
}

inline void save_checkpoint(const ForecastModel& m, const std::string& path) {
  write_text_file(path, checkpoint_to_json(m).dump(2) + "\n");
}

inline ForecastModel load_checkpoint(const std::string& path) {
  return checkpoint_from_json(load_json_file(path));
}

}  // namespace ham
