#include <doctest.h>

#include "ham/graph.hpp"
#include "helpers.hpp"

using namespace ham;
using testutil::fd_check;
using testutil::random_tensor;

TEST_CASE("relu forward") {
  Graph g;
  const int x = g.input(Tensor::col({-1.0, 0.0, 2.0}));
  const Tensor& y = g.val(g.relu(x));
  CHECK(y.data == std::vector<double>{0.0, 0.0, 2.0});
}

TEST_CASE("dropout with full-keep mask applies inverted scaling") {
  Graph g;
  const int x = g.input(Tensor::col({1.0, -2.0, 3.0}));
  const int mask = g.input(Tensor::col({1.0, 1.0, 1.0}));
  const Tensor& y = g.val(g.dropout_masked(x, mask, 0.8));  // drop probability 0.2
  CHECK(y.data[0] == doctest::Approx(1.0 / 0.8).epsilon(1e-12));
  CHECK(y.data[1] == doctest::Approx(-2.0 / 0.8).epsilon(1e-12));
  CHECK(y.data[2] == doctest::Approx(3.0 / 0.8).epsilon(1e-12));
}

TEST_CASE("dropout mask zeroes and rescales") {
  Graph g;
  const int x = g.input(Tensor::col({2.0, 4.0}));
  const int mask = g.input(Tensor::col({1.0, 0.0}));
  const Tensor& y = g.val(g.dropout_masked(x, mask, 0.5));
  CHECK(y.data == std::vector<double>{4.0, 0.0});
}

TEST_CASE("matmul backward against finite differences on 3x4 * 4x2") {
  rng::Stream s(7);
  std::vector<ParamGroup> params;
  params.emplace_back("a", random_tensor(3, 4, s));
  params.emplace_back("b", random_tensor(4, 2, s));
  const Tensor proj = random_tensor(1, 3, s);
  const Tensor proj2 = random_tensor(2, 1, s);
  auto rep = fd_check(params, [&](Graph& g, const std::vector<int>& ids) {
    return g.matmul(g.matmul(g.input(proj), g.matmul(ids[0], ids[1])), g.input(proj2));
  });
  CHECK(rep.checked == 20);
  CHECK(rep.max_rel < 1e-5);
}

TEST_CASE("every primitive passes central finite differences on random shapes") {
  rng::Stream shapes(99);
  double worst = 0.0;
  std::string worst_prim;
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 1 + shapes.next_bits() % 8;
    const std::size_t k = 1 + shapes.next_bits() % 8;
    const std::size_t c = 1 + shapes.next_bits() % 8;
    rng::Stream s(1000 + trial);

    // Fixed random projection to a scalar, drawn once per check so every FD
    // evaluation sees the same loss function.
    auto run = [&](const char* prim, std::size_t out_r, std::size_t out_c,
                   const std::function<int(Graph&, const std::vector<int>&)>& make_node,
                   std::vector<ParamGroup> params) {
      const Tensor lrow = random_tensor(1, out_r, s);
      const Tensor rcol = random_tensor(out_c, 1, s);
      auto rep = fd_check(params, [&](Graph& g, const std::vector<int>& ids) {
        return g.matmul(g.matmul(g.input(lrow), make_node(g, ids)), g.input(rcol));
      });
      if (rep.max_rel > worst) {
        worst = rep.max_rel;
        worst_prim = prim;
      }
    };

    {
      std::vector<ParamGroup> p;
      p.emplace_back("a", random_tensor(m, k, s));
      p.emplace_back("b", random_tensor(k, c, s));
      run("matmul", m, c, [](Graph& g, const std::vector<int>& ids) {
        return g.matmul(ids[0], ids[1]);
      }, std::move(p));
    }
    {
      std::vector<ParamGroup> p;
      p.emplace_back("a", random_tensor(m, c, s));
      p.emplace_back("b", random_tensor(m, c, s));
      run("add", m, c, [](Graph& g, const std::vector<int>& ids) {
        return g.add(ids[0], ids[1]);
      }, p);
      run("sub", m, c, [](Graph& g, const std::vector<int>& ids) {
        return g.sub(ids[0], ids[1]);
      }, p);
    }
    {
      std::vector<ParamGroup> p;
      p.emplace_back("x", random_tensor(m, c, s));
      run("broadcast_sub_last", m, c, [](Graph& g, const std::vector<int>& ids) {
        return g.broadcast_sub_last(ids[0]);
      }, p);
      run("square", m, c, [](Graph& g, const std::vector<int>& ids) {
        return g.square(ids[0]);
      }, p);
      run("mean_axis_rows", 1, c, [](Graph& g, const std::vector<int>& ids) {
        return g.mean_axis(ids[0], 0);
      }, p);
      run("mean_axis_cols", m, 1, [](Graph& g, const std::vector<int>& ids) {
        return g.mean_axis(ids[0], 1);
      }, p);
      run("gather_cyclic", m + 3, c, [&](Graph& g, const std::vector<int>& ids) {
        return g.gather_cyclic(ids[0], std::size_t(trial), m + 3);
      }, p);
      run("reshape", c * m, 1, [&](Graph& g, const std::vector<int>& ids) {
        return g.reshape(ids[0], {c * m, std::size_t(1)});
      }, p);
      run("scale", m, c, [](Graph& g, const std::vector<int>& ids) {
        return g.scale(ids[0], -1.7);
      }, p);
    }
    {
      // relu: keep inputs away from the kink at zero
      Tensor x = random_tensor(m, c, s);
      for (double& v : x.data) v += v >= 0.0 ? 0.01 : -0.01;
      std::vector<ParamGroup> p;
      p.emplace_back("x", std::move(x));
      run("relu", m, c, [](Graph& g, const std::vector<int>& ids) {
        return g.relu(ids[0]);
      }, p);
    }
    {
      std::vector<ParamGroup> p;
      p.emplace_back("x", random_tensor(m, c, s));
      Tensor mask = Tensor::zeros(m, c);
      for (double& v : mask.data) v = s.u01() < 0.7 ? 1.0 : 0.0;
      run("dropout_masked", m, c, [&](Graph& g, const std::vector<int>& ids) {
        return g.dropout_masked(ids[0], g.input(mask), 0.7);
      }, p);
    }
  }
  INFO("worst primitive: ", worst_prim);
  CHECK(worst < 1e-4);
}

TEST_CASE("backward of w^2 at w=3 gives 6") {
  std::vector<ParamGroup> params;
  params.emplace_back("w", Tensor::scalar(3.0));
  Graph g;
  const int w = g.input(params[0].value, true);
  g.backward(g.square(w));
  g.write_gradients({w}, params);
  CHECK(params[0].grad.data[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("backward of mean(w) gives 1/4 per entry") {
  std::vector<ParamGroup> params;
  params.emplace_back("w", Tensor::col({1.0, 2.0, 3.0, 4.0}));
  Graph g;
  const int w = g.input(params[0].value, true);
  g.backward(g.mean_axis(w, 0));
  g.write_gradients({w}, params);
  for (double v : params[0].grad.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("two-layer mlp gradient matches finite differences") {
  rng::Stream s(21);
  std::vector<ParamGroup> params;
  params.emplace_back("w1", random_tensor(6, 5, s));
  params.emplace_back("b1", random_tensor(6, 1, s));
  params.emplace_back("w2", random_tensor(1, 6, s));
  const Tensor x = random_tensor(5, 1, s);
  auto rep = fd_check(params, [&](Graph& g, const std::vector<int>& ids) {
    const int h = g.relu(g.add(g.matmul(ids[0], g.input(x)), ids[1]));
    return g.matmul(ids[2], h);
  });
  CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("differentiation is linear in the loss") {
  rng::Stream s(5);
  const Tensor w0 = random_tensor(4, 3, s);
  const Tensor x = random_tensor(3, 1, s);
  const Tensor r = random_tensor(1, 4, s);
  const double a = 1.7, b = -0.4;

  auto grads_of = [&](double ca, double cb) {
    Graph g;
    const int w = g.input(w0, true);
    const int u = g.matmul(g.input(r), g.matmul(w, g.input(x)));  // 1x1
    const int v = g.matmul(g.input(r), g.square(g.matmul(w, g.input(x))));
    g.backward(g.add(g.scale(u, ca), g.scale(v, cb)));
    Tensor t;
    g.read_grad(w, t);
    return t.data;
  };
  const auto gu = grads_of(1.0, 0.0);
  const auto gv = grads_of(0.0, 1.0);
  const auto gc = grads_of(a, b);
  for (std::size_t i = 0; i < gc.size(); ++i) {
    const double want = a * gu[i] + b * gv[i];
    CHECK(std::abs(gc[i] - want) <= 1e-12 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("gradients overwrite by default and accumulate on request") {
  std::vector<ParamGroup> params;
  params.emplace_back("w", Tensor::scalar(3.0));
  Graph g;
  const int w = g.input(params[0].value, true);
  const int loss = g.square(w);
  g.backward(loss);
  g.write_gradients({w}, params);
  g.backward(loss);
  g.write_gradients({w}, params);
  CHECK(params[0].grad.data[0] == doctest::Approx(6.0));
  g.backward(loss);
  g.write_gradients({w}, params, true);
  CHECK(params[0].grad.data[0] == doctest::Approx(12.0));
}

TEST_CASE("grad_vector concatenates in order with offsets") {
  std::vector<ParamGroup> params;
  params.emplace_back("a", Tensor::col({0.0, 0.0, 0.0}));
  params.emplace_back("b", Tensor::col({0.0, 0.0}));
  SUBCASE("fresh state is the zero vector") {
    const FlatVector v = grad_vector(params);
    CHECK(v.offsets == std::vector<std::size_t>{0, 3, 5});
    CHECK(v.values == std::vector<double>(5, 0.0));
  }
  SUBCASE("slicing by offsets recovers per-group gradients") {
    params[0].grad.data = {1.0, 2.0, 3.0};
    params[1].grad.data = {4.0, 5.0};
    const FlatVector v = grad_vector(params);
    REQUIRE(v.values.size() == 5);
    for (std::size_t gidx = 0; gidx < params.size(); ++gidx) {
      const auto lo = v.offsets[gidx], hi = v.offsets[gidx + 1];
      std::vector<double> slice(v.values.begin() + lo, v.values.begin() + hi);
      CHECK(slice == params[gidx].grad.data);
    }
  }
}

TEST_CASE("unreachable parameters receive exact zero gradients") {
  std::vector<ParamGroup> params;
  params.emplace_back("used", Tensor::scalar(2.0));
  params.emplace_back("unused", Tensor::col({1.0, 1.0}));
  Graph g;
  const int a = g.input(params[0].value, true);
  const int b = g.input(params[1].value, true);
  g.backward(g.square(a));
  g.write_gradients({a, b}, params);
  CHECK(params[0].grad.data[0] == doctest::Approx(4.0));
  CHECK(params[1].grad.data == std::vector<double>{0.0, 0.0});
}

TEST_CASE("non-scalar loss is rejected") {
  Graph g;
  const int x = g.input(Tensor::col({1.0, 2.0}), true);
  CHECK_THROWS_AS(g.backward(x), std::invalid_argument);
}

TEST_CASE("shape mismatches name the primitive and shapes") {
  Graph g;
  const int a = g.input(Tensor::zeros(3, 4));
  const int b = g.input(Tensor::zeros(5, 2));
  try {
    g.matmul(a, b);
    FAIL("expected a throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[3x4]") != std::string::npos);
    CHECK(msg.find("[5x2]") != std::string::npos);
  }
  CHECK_THROWS_AS(g.add(a, b), std::invalid_argument);
  CHECK_THROWS_AS(g.dropout_masked(a, b, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(g.dropout_masked(a, a, 0.0), std::invalid_argument);
}

TEST_CASE("backward is deterministic across identical runs") {
  auto run = [] {
    rng::Stream s(33);
    Graph g;
    const int w = g.input(random_tensor(5, 5, s), true);
    const int x = g.input(random_tensor(5, 1, s));
    const int r = g.input(random_tensor(1, 5, s));
    g.backward(g.matmul(r, g.relu(g.matmul(w, x))));
    Tensor t;
    g.read_grad(w, t);
    return t.data;
  };
  CHECK(run() == run());
}

TEST_CASE("forward and backward keep finite values on finite inputs") {
  rng::Stream s(11);
  for (int trial = 0; trial < 10; ++trial) {
    Graph g;
    const int w = g.input(random_tensor(6, 6, s), true);
    const int x = g.input(random_tensor(6, 2, s));
    const int h = g.relu(g.matmul(w, x));
    const int y = g.mean_axis(g.square(g.broadcast_sub_last(h)), 1);
    const int loss = g.mean_axis(y, 0);
    CHECK(g.val(loss).finite());
    g.backward(loss);
    Tensor t;
    g.read_grad(w, t);
    CHECK(t.finite());
  }
}
