#include <doctest.h>

#include "ham/model.hpp"
#include "helpers.hpp"

using namespace ham;
using testutil::random_tensor;

namespace {

ModelConfig base_config(ModelKind kind) {
  ModelConfig c;
  c.kind = kind;
  c.lookback = 4;
  c.horizon = 2;
  c.channels = 1;
  c.seed = 42;
  if (kind == ModelKind::Mlp) c.hidden = {8};
  if (kind == ModelKind::Cycle) c.cycle_len = 5;
  return c;
}

}  // namespace

TEST_CASE("same seed gives bit-identical parameters") {
  const auto a = ForecastModel::init(base_config(ModelKind::Mlp));
  const auto b = ForecastModel::init(base_config(ModelKind::Mlp));
  REQUIRE(a.params.size() == b.params.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(a.params[i].value.data == b.params[i].value.data);
  auto cfg = base_config(ModelKind::Mlp);
  cfg.seed = 43;
  const auto c = ForecastModel::init(cfg);
  CHECK(c.group("mlp.0.weight").value.data != a.group("mlp.0.weight").value.data);
}

TEST_CASE("linear model has one 2x4 weight matrix and a bias of length 2") {
  const auto m = ForecastModel::init(base_config(ModelKind::Linear));
  REQUIRE(m.params.size() == 2);
  CHECK(m.group("linear.weight").value.shape == std::vector<std::size_t>{2, 4});
  CHECK(m.group("linear.bias").value.shape == std::vector<std::size_t>{2, 1});
  CHECK(m.param_count() == 10);
}

TEST_CASE("mlp parameter count is 4*8+8 + 8*2+2 = 58") {
  const auto m = ForecastModel::init(base_config(ModelKind::Mlp));
  CHECK(m.param_count() == 4 * 8 + 8 + 8 * 2 + 2);
  CHECK(m.param_count() == 58);
}

TEST_CASE("parameter count is a pure function of the config") {
  auto cfg = base_config(ModelKind::Mlp);
  cfg.seed = 7;
  CHECK(ForecastModel::init(cfg).param_count() == ForecastModel::init(base_config(ModelKind::Mlp)).param_count());
}

TEST_CASE("layer naming is stable and sorted") {
  CHECK(ForecastModel::init(base_config(ModelKind::NLinear)).layer_names() ==
        std::vector<std::string>{"linear.bias", "linear.weight"});
  CHECK(ForecastModel::init(base_config(ModelKind::Cycle)).layer_names() ==
        std::vector<std::string>{"cycle.bias", "cycle.queue", "cycle.weight"});
  auto cfg = base_config(ModelKind::Mlp);
  cfg.hidden = {8, 8};
  const auto names = ForecastModel::init(cfg).layer_names();
  REQUIRE(names.size() == 6);  // 3 weight + 3 bias groups
  CHECK(names == std::vector<std::string>{"mlp.0.bias", "mlp.0.weight", "mlp.1.bias", "mlp.1.weight",
                                          "mlp.2.bias", "mlp.2.weight"});
}

TEST_CASE("nlinear with zero weights repeats the last timestep") {
  auto m = ForecastModel::init(base_config(ModelKind::NLinear));
  m.group("linear.weight").value.fill(0.0);
  m.group("linear.bias").value.fill(0.0);
  const Tensor window({4, 1}, {1.0, -2.0, 0.5, 7.25});
  const Tensor pred = m.forecast(window);
  CHECK(pred.data == std::vector<double>{7.25, 7.25});

  SUBCASE("without normalization the zero-weight forecast is zero") {
    m.config.normalize = false;
    const Tensor p2 = m.forecast(window);
    CHECK(p2.data == std::vector<double>{0.0, 0.0});
  }
}

TEST_CASE("nlinear normalization makes forecasts shift-equivariant") {
  auto cfg = base_config(ModelKind::NLinear);
  cfg.channels = 2;
  auto m = ForecastModel::init(cfg);
  rng::Stream s(3);
  const Tensor window = random_tensor(4, 2, s);
  Tensor shifted = window;
  const double c = 3.7;
  for (double& v : shifted.data) v += c;

  const Tensor p0 = m.forecast(window);
  const Tensor p1 = m.forecast(shifted);
  for (std::size_t i = 0; i < p0.data.size(); ++i)
    CHECK(std::abs(p1.data[i] - (p0.data[i] + c)) < 1e-9);

  SUBCASE("the ablation without normalization breaks the invariance") {
    m.config.normalize = false;
    const Tensor q0 = m.forecast(window);
    const Tensor q1 = m.forecast(shifted);
    double max_dev = 0.0;
    for (std::size_t i = 0; i < q0.data.size(); ++i)
      max_dev = std::max(max_dev, std::abs(q1.data[i] - (q0.data[i] + c)));
    CHECK(max_dev > 1e-3);
  }
}

TEST_CASE("dropout off makes the forecast deterministic and seed independent") {
  auto cfg = base_config(ModelKind::Mlp);
  cfg.dropout = 0.4;
  const auto m = ForecastModel::init(cfg);
  rng::Stream s(5);
  const Tensor window = random_tensor(4, 1, s);

  ForwardOptions eval_a, eval_b;
  eval_a.dropout_seed = 1;
  eval_b.dropout_seed = 999;
  CHECK(m.forecast(window, eval_a).data == m.forecast(window, eval_b).data);

  ForwardOptions train_a, train_b;
  train_a.train_mode = train_b.train_mode = true;
  train_a.dropout_seed = 1;
  train_b.dropout_seed = 999;
  CHECK(m.forecast(window, train_a).data != m.forecast(window, train_b).data);
  CHECK(m.forecast(window, train_a).data == m.forecast(window, train_a).data);
}

TEST_CASE("cycle model with zero linear head forecasts the phase-aligned queue") {
  auto cfg = base_config(ModelKind::Cycle);
  cfg.lookback = 3;
  cfg.horizon = 4;
  auto m = ForecastModel::init(cfg);
  m.group("cycle.weight").value.fill(0.0);
  m.group("cycle.bias").value.fill(0.0);
  m.group("cycle.queue").value.data = {10.0, 11.0, 12.0, 13.0, 14.0};

  const Tensor window({3, 1}, {0.0, 0.0, 0.0});
  ForwardOptions fo;
  fo.step_index = 7;  // phase 2; forecast starts at phase (2+3) % 5 = 0
  CHECK(m.forecast(window, fo).data == std::vector<double>{10.0, 11.0, 12.0, 13.0});
  fo.step_index = 9;  // phase 4; forecast at (4+3) % 5 = 2 wrapping to 0
  CHECK(m.forecast(window, fo).data == std::vector<double>{12.0, 13.0, 14.0, 10.0});
}

TEST_CASE("queue equal to per-phase means forecasts a noiseless periodic series exactly") {
  // Closed-form least squares with a zero linear head: each queue entry is
  // the mean of the series values at its phase.
  const std::size_t Q = 5, T = 40, L = 3, H = 4;
  std::vector<double> series(T);
  const std::vector<double> profile{0.3, -1.2, 2.0, 0.0, 0.7};
  for (std::size_t t = 0; t < T; ++t) series[t] = profile[t % Q];

  ModelConfig cfg;
  cfg.kind = ModelKind::Cycle;
  cfg.lookback = L;
  cfg.horizon = H;
  cfg.channels = 1;
  cfg.cycle_len = Q;
  auto m = ForecastModel::init(cfg);
  m.group("cycle.weight").value.fill(0.0);
  m.group("cycle.bias").value.fill(0.0);
  std::vector<double> phase_sum(Q, 0.0), phase_count(Q, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    phase_sum[t % Q] += series[t];
    phase_count[t % Q] += 1.0;
  }
  for (std::size_t q = 0; q < Q; ++q) m.group("cycle.queue").value.data[q] = phase_sum[q] / phase_count[q];

  for (std::size_t start = 0; start + L + H <= T; start += 3) {
    Tensor window = Tensor::zeros(L, 1);
    for (std::size_t i = 0; i < L; ++i) window.data[i] = series[start + i];
    ForwardOptions fo;
    fo.step_index = static_cast<long long>(start);
    const Tensor pred = m.forecast(window, fo);
    for (std::size_t h = 0; h < H; ++h)
      CHECK(pred.data[h] == doctest::Approx(series[start + L + h]).epsilon(1e-12));
  }
}

TEST_CASE("model forwards pass finite-difference checks") {
  rng::Stream s(17);
  for (ModelKind kind : {ModelKind::Linear, ModelKind::NLinear, ModelKind::Mlp, ModelKind::Cycle}) {
    auto cfg = base_config(kind);
    cfg.channels = 2;
    if (kind == ModelKind::Mlp) cfg.dropout = 0.3;
    const auto m = ForecastModel::init(cfg);
    const Tensor window = random_tensor(cfg.lookback, cfg.channels, s);
    ForwardOptions fo;
    fo.step_index = 11;
    fo.train_mode = true;  // exercises the dropout path for the mlp
    fo.dropout_seed = 77;
    const auto rep = testutil::fd_check_model(m, window, fo, 1234 + int(kind));
    INFO("kind ", model_kind_name(kind));
    CHECK(rep.max_rel < 1e-4);
    CHECK(rep.checked == m.param_count());
  }
}

TEST_CASE("invalid configs are rejected") {
  auto cfg = base_config(ModelKind::Linear);
  cfg.lookback = 0;
  CHECK_THROWS_AS(ForecastModel::init(cfg), std::invalid_argument);
  cfg = base_config(ModelKind::Cycle);
  cfg.cycle_len = 0;
  CHECK_THROWS_AS(ForecastModel::init(cfg), std::invalid_argument);
  cfg = base_config(ModelKind::Mlp);
  cfg.dropout = 1.0;
  CHECK_THROWS_AS(ForecastModel::init(cfg), std::invalid_argument);
  cfg = base_config(ModelKind::Mlp);
  cfg.hidden = {};
  CHECK_THROWS_AS(ForecastModel::init(cfg), std::invalid_argument);
}

TEST_CASE("window shape and step index are validated") {
  const auto m = ForecastModel::init(base_config(ModelKind::Linear));
  CHECK_THROWS_AS(m.forecast(Tensor::zeros(3, 1)), std::invalid_argument);
  ForwardOptions fo;
  fo.step_index = -1;
  CHECK_THROWS_AS(m.forecast(Tensor::zeros(4, 1), fo), std::invalid_argument);
}
