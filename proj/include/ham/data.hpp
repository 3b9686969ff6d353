#pragma once
#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ham/rng.hpp"
#include "ham/tensor.hpp"

namespace ham {

// T x C series of observations. origin is the absolute index of row 0 in the
// parent series, so windows cut from a split keep their dataset-level phase
// (the cycle model depends on it).
struct SeriesFrame {
  Tensor values;  // T x C
  std::vector<std::string> channel_names;
  std::vector<std::string> timestamps;  // empty or size T
  std::size_t origin = 0;

  std::size_t length() const { return values.rows(); }
  std::size_t channels() const { return values.cols(); }
};

struct SplitSpec {
  double train = 0.6, val = 0.2, test = 0.2;

  void validate() const {
    if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9)
      throw std::invalid_argument("split ratios must be nonnegative and sum to 1");
  }
};

struct WindowSpec {
  std::size_t lookback = 0;  // L
  std::size_t horizon = 0;   // H
  std::size_t stride = 1;

  void validate() const {
    if (lookback < 1 || horizon < 1 || stride < 1)
      throw std::invalid_argument("window spec: lookback, horizon and stride must be >= 1");
  }
};

// One training sample: input window, target horizon, and the absolute start
// index of the input in the original series.
struct Window {
  Tensor input;   // L x C
  Tensor target;  // H x C
  std::size_t start = 0;
};

struct SineComponent {
  double period = 0.0, amplitude = 0.0, phase = 0.0;
};

struct ChannelSpec {
  std::string name;
  std::vector<SineComponent> components;
  double trend = 0.0;
};

struct SynthConfig {
  std::size_t length = 0;
  std::vector<ChannelSpec> channels;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
};

// value(t) = sum_k amp * sin(2 pi t / period + phase) + trend * t + noise.
inline SeriesFrame synth(const SynthConfig& cfg) {
  if (cfg.length < 2) throw std::invalid_argument("synth: length must be >= 2");
  if (cfg.channels.empty()) throw std::invalid_argument("synth: need at least one channel");
  for (const auto& ch : cfg.channels)
    for (const auto& c : ch.components)
      if (c.period <= 0.0) throw std::invalid_argument("synth: sine period must be positive");

  SeriesFrame f;
  const std::size_t T = cfg.length, C = cfg.channels.size();
  f.values = Tensor::zeros(T, C);
  for (std::size_t c = 0; c < C; ++c) {
    const auto& ch = cfg.channels[c];
    f.channel_names.push_back(ch.name.empty() ? "c" + std::to_string(c) : ch.name);
    rng::Stream noise(rng::derive(cfg.seed, 0x5e, c));
    for (std::size_t t = 0; t < T; ++t) {
      double v = ch.trend * double(t);
      for (const auto& s : ch.components)
        v += s.amplitude * std::sin(2.0 * 3.141592653589793238462643383279502884 * double(t) / s.period + s.phase);
      if (cfg.noise_std > 0.0) v += cfg.noise_std * noise.normal();
      f.values.at(t, c) = v;
    }
  }
  return f;
}

// CSV with a header line; an optional leading date column (header "date", or
// a first data cell that does not parse as a number) becomes timestamps.
// Empty cells are rejected unless forward_fill is set, in which case they
// take the previous row's value (never the first row's).
inline SeriesFrame load_csv(const std::string& path, bool forward_fill = false) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open '" + path + "'");

  auto split_line = [](const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        cells.push_back(cur);
        cur.clear();
      } else if (ch != '\r') {
        cur += ch;
      }
    }
    cells.push_back(cur);
    return cells;
  };
  auto parse_num = [](const std::string& s, double& out) {
    try {
      std::size_t pos = 0;
      out = std::stod(s, &pos);
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
      return pos == s.size() && !s.empty();
    } catch (...) {
      return false;
    }
  };

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: '" + path + "' is empty");
  std::vector<std::string> header = split_line(line);
  if (header.empty()) throw std::runtime_error("load_csv: '" + path + "' has an empty header");

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(split_line(line));
  }
  if (rows.size() < 2) throw std::runtime_error("load_csv: '" + path + "' needs at least 2 data rows");

  bool date_col = false;
  std::string h0 = header[0];
  for (auto& c : h0) c = char(std::tolower(static_cast<unsigned char>(c)));
  double tmp;
  if (h0 == "date" || h0 == "timestamp" || (!rows[0][0].empty() && !parse_num(rows[0][0], tmp)))
    date_col = true;

  const std::size_t first = date_col ? 1 : 0;
  if (header.size() <= first) throw std::runtime_error("load_csv: no numeric columns in '" + path + "'");
  const std::size_t C = header.size() - first;

  SeriesFrame f;
  f.values = Tensor::zeros(rows.size(), C);
  for (std::size_t c = 0; c < C; ++c) f.channel_names.push_back(header[first + c]);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != header.size())
      throw std::runtime_error("load_csv: row " + std::to_string(r + 2) + " has " +
                               std::to_string(rows[r].size()) + " cells, expected " +
                               std::to_string(header.size()));
    if (date_col) f.timestamps.push_back(rows[r][0]);
    for (std::size_t c = 0; c < C; ++c) {
      const std::string& cell = rows[r][first + c];
      double v;
      if (cell.empty()) {
        if (!forward_fill || r == 0)
          throw std::runtime_error("load_csv: missing value at row " + std::to_string(r + 2) +
                                   ", column " + std::to_string(first + c + 1));
        v = f.values.at(r - 1, c);
      } else if (!parse_num(cell, v)) {
        throw std::runtime_error("load_csv: non-numeric cell '" + cell + "' at row " +
                                 std::to_string(r + 2) + ", column " + std::to_string(first + c + 1));
      }
      f.values.at(r, c) = v;
    }
  }
  return f;
}

struct Splits {
  SeriesFrame train, val, test;
};

// Chronological split at floor(T r1) and floor(T (r1+r2)); remainder rows go
// to the test split. Concatenating the three reproduces the input.
inline Splits split(const SeriesFrame& f, const SplitSpec& spec) {
  spec.validate();
  const std::size_t T = f.length();
  const std::size_t b1 = std::size_t(std::floor(double(T) * spec.train));
  const std::size_t b2 = std::size_t(std::floor(double(T) * (spec.train + spec.val)));
  if (b1 == 0 || b2 <= b1 || b2 >= T)
    throw std::invalid_argument("split: a split would be empty (T=" + std::to_string(T) + ")");

  auto slice = [&](std::size_t lo, std::size_t hi) {
    SeriesFrame s;
    s.channel_names = f.channel_names;
    s.origin = f.origin + lo;
    const std::size_t C = f.channels();
    s.values = Tensor::zeros(hi - lo, C);
    std::copy(f.values.data.begin() + lo * C, f.values.data.begin() + hi * C, s.values.data.begin());
    if (!f.timestamps.empty())
      s.timestamps.assign(f.timestamps.begin() + lo, f.timestamps.begin() + hi);
    return s;
  };
  return {slice(0, b1), slice(b1, b2), slice(b2, T)};
}

// Sliding windows; targets never overlap their own input, and windows never
// straddle split boundaries because they are cut per frame.
inline std::vector<Window> windows(const SeriesFrame& f, const WindowSpec& spec) {
  spec.validate();
  const std::size_t T = f.length(), L = spec.lookback, H = spec.horizon;
  if (T < L + H)
    throw std::invalid_argument("windows: series length " + std::to_string(T) +
                                " is shorter than lookback+horizon " + std::to_string(L + H));
  const std::size_t count = (T - L - H) / spec.stride + 1;
  std::vector<Window> out;
  out.reserve(count);
  const std::size_t C = f.channels();
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t s = w * spec.stride;
    Window win;
    win.start = f.origin + s;
    win.input = Tensor::zeros(L, C);
    win.target = Tensor::zeros(H, C);
    std::copy(f.values.data.begin() + s * C, f.values.data.begin() + (s + L) * C, win.input.data.begin());
    std::copy(f.values.data.begin() + (s + L) * C, f.values.data.begin() + (s + L + H) * C,
              win.target.data.begin());
    out.push_back(std::move(win));
  }
  return out;
}

// Per-channel standardization with population (denominator N) statistics,
// fit on the training split only.
struct Scaler {
  std::vector<double> mean, std;

  static Scaler fit(const SeriesFrame& train) {
    const std::size_t T = train.length(), C = train.channels();
    if (T == 0) throw std::invalid_argument("scaler: empty frame");
    Scaler s;
    s.mean.assign(C, 0.0);
    s.std.assign(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      double m = 0.0;
      for (std::size_t t = 0; t < T; ++t) m += train.values.at(t, c);
      m /= double(T);
      double v = 0.0;
      for (std::size_t t = 0; t < T; ++t) {
        const double d = train.values.at(t, c) - m;
        v += d * d;
      }
      v /= double(T);
      if (v <= 0.0)
        throw std::invalid_argument("scaler: channel '" + train.channel_names[c] +
                                    "' is constant, cannot standardize");
      s.mean[c] = m;
      s.std[c] = std::sqrt(v);
    }
    return s;
  }

  SeriesFrame transform(const SeriesFrame& f) const {
    check(f);
    SeriesFrame out = f;
    for (std::size_t t = 0; t < f.length(); ++t)
      for (std::size_t c = 0; c < f.channels(); ++c)
        out.values.at(t, c) = (f.values.at(t, c) - mean[c]) / std[c];
    return out;
  }

  SeriesFrame inverse(const SeriesFrame& f) const {
    check(f);
    SeriesFrame out = f;
    for (std::size_t t = 0; t < f.length(); ++t)
      for (std::size_t c = 0; c < f.channels(); ++c)
        out.values.at(t, c) = f.values.at(t, c) * std[c] + mean[c];
    return out;
  }

 private:
  void check(const SeriesFrame& f) const {
    if (f.channels() != mean.size())
      throw std::invalid_argument("scaler: channel count mismatch");
  }
};

inline SeriesFrame select_channel(const SeriesFrame& f, const std::string& name) {
  for (std::size_t c = 0; c < f.channels(); ++c) {
    if (f.channel_names[c] != name) continue;
    SeriesFrame out;
    out.channel_names = {name};
    out.timestamps = f.timestamps;
    out.origin = f.origin;
    out.values = Tensor::zeros(f.length(), 1);
    for (std::size_t t = 0; t < f.length(); ++t) out.values.at(t, 0) = f.values.at(t, c);
    return out;
  }
  std::string avail;
  for (const auto& n : f.channel_names) avail += (avail.empty() ? "" : ", ") + n;
  throw std::invalid_argument("select_channel: no channel '" + name + "' (available: " + avail + ")");
}

}  // namespace ham
