#include <doctest.h>

#include <cmath>

#include "ham/data.hpp"
#include "ham/engine.hpp"
#include "ham/model.hpp"
#include "helpers.hpp"

using namespace ham;
using testutil::random_tensor;

namespace {

// One learnable scalar w, prediction [w, w]: the per-timestep gradients are
// known in closed form, making the whole pipeline hand-checkable.
struct ToyModel {
  struct Config {
    std::size_t horizon = 2;
  } config;
  std::vector<ParamGroup> params;

  explicit ToyModel(double w) {
    params.emplace_back("w", Tensor::scalar(w));
  }
  std::vector<int> add_params(Graph& g) const { return {g.input(params[0].value, true)}; }
  int build_forward(Graph& g, const std::vector<int>& ids, const Tensor&, const ForwardOptions&) const {
    Tensor onesH({config.horizon, 1}, std::vector<double>(config.horizon, 1.0));
    return g.matmul(g.input(onesH), ids[0]);
  }
};

std::vector<Window> toy_window(double t1, double t2) {
  Window w;
  w.input = Tensor({1, 1}, {0.0});
  w.target = Tensor({2, 1}, {t1, t2});
  return {w};
}

ForecastModel make_mlp(std::size_t L, std::size_t H, std::size_t C, double dropout,
                       std::uint64_t seed) {
  ModelConfig cfg;
  cfg.kind = ModelKind::Mlp;
  cfg.lookback = L;
  cfg.horizon = H;
  cfg.channels = C;
  cfg.hidden = {10};
  cfg.dropout = dropout;
  cfg.seed = seed;
  return ForecastModel::init(cfg);
}

std::vector<Window> random_windows(std::size_t n, std::size_t L, std::size_t H, std::size_t C,
                                   std::uint64_t seed) {
  rng::Stream s(seed);
  std::vector<Window> out;
  for (std::size_t i = 0; i < n; ++i) {
    Window w;
    w.input = random_tensor(L, C, s);
    w.target = random_tensor(H, C, s);
    w.start = i;
    out.push_back(std::move(w));
  }
  return out;
}

double rel_dev(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-30});
}

}  // namespace

TEST_CASE("mask bits follow the causal and anticausal definitions") {
  CHECK(make_mask(MaskMode::Causal, 3, 5).bits == std::vector<std::uint8_t>{1, 1, 1, 0, 0});
  CHECK(make_mask(MaskMode::Anticausal, 3, 5).bits == std::vector<std::uint8_t>{0, 0, 0, 1, 1});
  CHECK(make_mask(MaskMode::Causal, 0, 5).bits == std::vector<std::uint8_t>{0, 0, 0, 0, 0});
  CHECK(make_mask(MaskMode::Anticausal, 0, 5).bits == std::vector<std::uint8_t>{1, 1, 1, 1, 1});
  CHECK(make_mask(MaskMode::Causal, 5, 5).bits == std::vector<std::uint8_t>{1, 1, 1, 1, 1});
  CHECK_THROWS_AS(make_mask(MaskMode::Causal, 6, 5), std::invalid_argument);

  // for every cut the two masks partition the horizon
  for (std::size_t cut = 0; cut <= 5; ++cut) {
    const auto c = make_mask(MaskMode::Causal, cut, 5);
    const auto a = make_mask(MaskMode::Anticausal, cut, 5);
    for (std::size_t h = 0; h < 5; ++h) CHECK(c.bits[h] + a.bits[h] == 1);
  }
}

TEST_CASE("masked loss sums masked timesteps and divides by the full horizon") {
  const Tensor preds({2, 1}, {2.0, 1.0 + std::sqrt(2.0)});
  const Tensor targets({2, 1}, {0.0, 1.0});  // per-timestep losses 4 and 2
  CHECK(masked_loss(preds, targets, make_mask(MaskMode::Causal, 1, 2)) == doctest::Approx(2.0));
  CHECK(masked_loss(preds, targets, make_mask(MaskMode::Causal, 2, 2)) == doctest::Approx(3.0));
  CHECK(masked_loss(preds, targets, make_mask(MaskMode::Causal, 0, 2)) == 0.0);
  CHECK(masked_loss(preds, targets, make_mask(MaskMode::Anticausal, 2, 2)) == 0.0);

  // all-ones mask is the ordinary MSE over the horizon
  const auto full = make_mask(MaskMode::Causal, 2, 2);
  CHECK(masked_loss(preds, targets, full) == doctest::Approx((4.0 + 2.0) / 2.0));
  CHECK_THROWS_AS(masked_loss(preds, Tensor::zeros(3, 1), full), std::invalid_argument);
}

TEST_CASE("naive curve matches the hand-computed one-parameter closed form") {
  const double w = 1.7, t1 = 0.4, t2 = -0.9;
  ToyModel model(w);
  const auto wins = toy_window(t1, t2);
  HamOptions opt;

  const HamCurve causal = ham_naive(model, wins, MaskMode::Causal, opt);
  const HamCurve anticausal = ham_naive(model, wins, MaskMode::Anticausal, opt);

  // gradient of masked loss: sum over kept h of 2(w - t_h) / H
  CHECK(causal.overall[0] == 0.0);
  CHECK(causal.overall[1] == doctest::Approx(std::abs(2.0 * (w - t1)) / 2.0).epsilon(1e-12));
  CHECK(causal.overall[2] ==
        doctest::Approx(std::abs((w - t1) + (w - t2))).epsilon(1e-12));
  CHECK(anticausal.overall[2] == 0.0);
  CHECK(anticausal.overall[1] == doctest::Approx(std::abs(2.0 * (w - t2)) / 2.0).epsilon(1e-12));
  CHECK(anticausal.overall[0] == causal.overall[2]);
}

TEST_CASE("endpoint identities hold for real models") {
  const auto model = make_mlp(5, 6, 2, 0.0, 3);
  const auto wins = random_windows(7, 5, 6, 2, 10);
  HamOptions opt;
  opt.batch_size = 3;
  const auto [causal, anticausal] = ham_fast(model, wins, opt);
  CHECK(causal.overall[0] == 0.0);
  CHECK(anticausal.overall[6] == 0.0);
  CHECK(rel_dev(causal.overall[6], anticausal.overall[0]) < 1e-9);
  for (const auto& [name, values] : causal.per_layer) CHECK(values[0] == 0.0);
  for (double v : causal.overall) CHECK(v >= 0.0);
  for (double v : anticausal.overall) CHECK(v >= 0.0);
}

TEST_CASE("fast path matches the naive oracle within 1e-8") {
  for (const std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const auto model = make_mlp(4, 8, 2, 0.0, seed);
    const auto wins = random_windows(13, 4, 8, 2, 100 + seed);  // batches 5,5,3
    HamOptions opt;
    opt.batch_size = 5;
    const auto [fc, fa] = ham_fast(model, wins, opt);
    const HamCurve nc = ham_naive(model, wins, MaskMode::Causal, opt);
    const HamCurve na = ham_naive(model, wins, MaskMode::Anticausal, opt);
    double worst = 0.0;
    for (std::size_t cut = 0; cut <= 8; ++cut) {
      worst = std::max(worst, std::abs(fc.overall[cut] - nc.overall[cut]));
      worst = std::max(worst, std::abs(fa.overall[cut] - na.overall[cut]));
      for (std::size_t l = 0; l < fc.per_layer.size(); ++l) {
        worst = std::max(worst, std::abs(fc.per_layer[l].second[cut] - nc.per_layer[l].second[cut]));
        worst = std::max(worst, std::abs(fa.per_layer[l].second[cut] - na.per_layer[l].second[cut]));
      }
    }
    const double scale = std::max(nc.overall[8], 1e-30);
    CHECK(worst / scale < 1e-8);
  }
}

TEST_CASE("fast path matches naive with replayed dropout") {
  const auto model = make_mlp(4, 6, 1, 0.3, 5);
  const auto wins = random_windows(9, 4, 6, 1, 55);
  HamOptions opt;
  opt.batch_size = 4;
  opt.dropout = true;
  opt.seed = 777;
  const auto [fc, fa] = ham_fast(model, wins, opt);
  const HamCurve nc = ham_naive(model, wins, MaskMode::Causal, opt);
  const HamCurve na = ham_naive(model, wins, MaskMode::Anticausal, opt);
  for (std::size_t cut = 0; cut <= 6; ++cut) {
    CHECK(std::abs(fc.overall[cut] - nc.overall[cut]) <= 1e-8 * std::max(1.0, nc.overall[cut]));
    CHECK(std::abs(fa.overall[cut] - na.overall[cut]) <= 1e-8 * std::max(1.0, na.overall[cut]));
  }
}

TEST_CASE("single-timestep horizon: causal[1] equals anticausal[0] equals the full norm") {
  const auto model = make_mlp(3, 1, 1, 0.0, 8);
  const auto wins = random_windows(4, 3, 1, 1, 70);
  HamOptions opt;
  const auto [c, a] = ham_fast(model, wins, opt);
  REQUIRE(c.overall.size() == 2);
  CHECK(c.overall[0] == 0.0);
  CHECK(a.overall[1] == 0.0);
  CHECK(rel_dev(c.overall[1], a.overall[0]) < 1e-12);
  const HamCurve n = ham_naive(model, wins, MaskMode::Causal, opt);
  CHECK(rel_dev(c.overall[1], n.overall[1]) < 1e-10);
}

TEST_CASE("prefix sum at H and suffix sum at 0 agree per layer") {
  const auto model = make_mlp(4, 7, 2, 0.0, 11);
  const auto wins = random_windows(6, 4, 7, 2, 80);
  HamOptions opt;
  const auto [c, a] = ham_fast(model, wins, opt);
  for (std::size_t l = 0; l < c.per_layer.size(); ++l)
    CHECK(rel_dev(c.per_layer[l].second[7], a.per_layer[l].second[0]) < 1e-12);
}

TEST_CASE("unmaskable auxiliary losses shift the cut-zero values") {
  const auto model = make_mlp(3, 4, 1, 0.0, 6);
  const auto wins = random_windows(6, 3, 4, 1, 60);
  const double lambda = 0.05;

  HamOptions plain;
  const auto [pc, pa] = ham_fast(model, wins, plain);

  SUBCASE("a zero auxiliary term changes nothing") {
    HamOptions zero;
    zero.aux = l2_penalty_loss(0.0);
    const auto [zc, za] = ham_fast(model, wins, zero);
    for (std::size_t cut = 0; cut <= 4; ++cut) {
      CHECK(zc.overall[cut] == doctest::Approx(pc.overall[cut]).epsilon(1e-12));
      CHECK(za.overall[cut] == doctest::Approx(pa.overall[cut]).epsilon(1e-12));
    }
  }

  SUBCASE("an L2 penalty makes causal[0] the norm of 2*lambda*theta") {
    HamOptions aux;
    aux.aux = l2_penalty_loss(lambda);
    const auto [ac, aa] = ham_fast(model, wins, aux);
    CHECK(pc.overall[0] == 0.0);
    CHECK(ac.overall[0] > 0.0);
    for (std::size_t l = 0; l < model.params.size(); ++l) {
      double ssq = 0.0;
      for (double v : model.params[l].value.data) ssq += (2.0 * lambda * v) * (2.0 * lambda * v);
      CHECK(rel_dev(ac.per_layer[l].second[0], std::sqrt(ssq)) < 1e-10);
    }
    // the naive path agrees on the composite loss
    const HamCurve nc = ham_naive(model, wins, MaskMode::Causal, aux);
    for (std::size_t cut = 0; cut <= 4; ++cut)
      CHECK(rel_dev(ac.overall[cut], nc.overall[cut]) < 1e-8);
  }
}

TEST_CASE("gradient decomposition: causal + anticausal equals the full gradient") {
  rng::Stream s(14);
  for (int trial = 0; trial < 6; ++trial) {
    const auto model = make_mlp(3 + trial % 3, 4 + trial, 1 + trial % 2, 0.0, 20 + trial);
    const auto wins = random_windows(5, model.config.lookback, model.config.horizon,
                                     model.config.channels, 90 + trial);
    HamOptions opt;
    const std::size_t cut = s.next_bits() % (model.config.horizon + 1);
    const auto rep = decomposition_check(model, std::span<const Window>(wins.data(), wins.size()),
                                         cut, opt);
    CHECK(rep.ok);
    CHECK(rep.max_rel_dev < 1e-10);
  }
}

TEST_CASE("triangle inequality: causal + anticausal norms bound the full norm") {
  const auto model = make_mlp(4, 9, 2, 0.0, 31);
  const auto wins = random_windows(8, 4, 9, 2, 41);
  HamOptions opt;
  const auto [c, a] = ham_fast(model, wins, opt);
  const double full = c.overall[9];
  for (std::size_t cut = 0; cut <= 9; ++cut)
    CHECK(c.overall[cut] + a.overall[cut] >= full * (1.0 - 1e-12));
}

TEST_CASE("curves are bit-stable across runs with fixed seeds") {
  auto run = [] {
    const auto model = make_mlp(4, 5, 2, 0.25, 9);
    const auto wins = random_windows(7, 4, 5, 2, 33);
    HamOptions opt;
    opt.batch_size = 3;
    opt.seed = 123;
    return ham_fast(model, wins, opt);
  };
  const auto [c1, a1] = run();
  const auto [c2, a2] = run();
  CHECK(c1.overall == c2.overall);
  CHECK(a1.overall == a2.overall);
  for (std::size_t l = 0; l < c1.per_layer.size(); ++l)
    CHECK(c1.per_layer[l].second == c2.per_layer[l].second);
}

TEST_CASE("concat reduction is the norm of the concatenated gradient") {
  const auto model = make_mlp(4, 5, 1, 0.0, 2);
  const auto wins = random_windows(5, 4, 5, 1, 21);
  HamOptions layer_mean;
  HamOptions concat;
  concat.reduction = ReductionKind::Concat;
  const auto [cm, am] = ham_fast(model, wins, layer_mean);
  const auto [cc, ac] = ham_fast(model, wins, concat);
  for (std::size_t cut = 0; cut <= 5; ++cut) {
    double mean = 0.0, ssq = 0.0;
    for (std::size_t l = 0; l < cm.per_layer.size(); ++l) {
      mean += cm.per_layer[l].second[cut];
      ssq += cm.per_layer[l].second[cut] * cm.per_layer[l].second[cut];
    }
    mean /= double(cm.per_layer.size());
    CHECK(rel_dev(cm.overall[cut] + 1e-300, mean + 1e-300) < 1e-12);
    CHECK(rel_dev(cc.overall[cut] + 1e-300, std::sqrt(ssq) + 1e-300) < 1e-12);
  }
}

TEST_CASE("empty window sets are rejected") {
  const auto model = make_mlp(3, 4, 1, 0.0, 1);
  std::vector<Window> none;
  HamOptions opt;
  CHECK_THROWS_AS(ham_naive(model, none, MaskMode::Causal, opt), std::invalid_argument);
  CHECK_THROWS_AS(ham_fast(model, none, opt), std::invalid_argument);
}
