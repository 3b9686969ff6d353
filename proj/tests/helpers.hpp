#pragma once
#include <functional>
#include <vector>

#include "ham/graph.hpp"
#include "ham/model.hpp"
#include "ham/rng.hpp"
#include "ham/tensor.hpp"

// Shared test utilities: random tensors and the central finite-difference
// oracle every gradient path is checked against. The oracle only evaluates
// forward passes, so it stays independent of the reverse sweep it verifies.

namespace testutil {

inline ham::Tensor random_tensor(std::size_t r, std::size_t c, ham::rng::Stream& s,
                                 double lo = -1.0, double hi = 1.0) {
  ham::Tensor t = ham::Tensor::zeros(r, c);
  for (double& v : t.data) v = s.uniform(lo, hi);
  return t;
}

// Builds a scalar loss from parameter input nodes; the harness owns the
// parameter values so it can perturb them between evaluations.
using LossBuilder = std::function<int(ham::Graph&, const std::vector<int>&)>;

struct FdReport {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

inline FdReport fd_check(std::vector<ham::ParamGroup>& params, const LossBuilder& build,
                         double eps = 1e-6) {
  auto eval = [&]() {
    ham::Graph g;
    std::vector<int> ids;
    for (auto& p : params) ids.push_back(g.input(p.value, true));
    return g.val(build(g, ids)).data[0];
  };

  // analytic gradients
  std::vector<std::vector<double>> analytic;
  {
    ham::Graph g;
    std::vector<int> ids;
    for (auto& p : params) ids.push_back(g.input(p.value, true));
    g.backward(build(g, ids));
    ham::Tensor t;
    for (int id : ids) {
      g.read_grad(id, t);
      analytic.push_back(t.data);
    }
  }

  FdReport rep;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t k = 0; k < params[i].value.data.size(); ++k) {
      double& slot = params[i].value.data[k];
      const double keep = slot;
      slot = keep + eps;
      const double lp = eval();
      slot = keep - eps;
      const double lm = eval();
      slot = keep;
      const double fd = (lp - lm) / (2.0 * eps);
      const double an = analytic[i][k];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
      rep.max_rel = std::max(rep.max_rel, std::abs(fd - an) / denom);
      ++rep.checked;
    }
  }
  return rep;
}

// Finite-difference check through a full model forecast using a fixed random
// projection of the prediction as the scalar loss.
inline FdReport fd_check_model(ham::ForecastModel model, const ham::Tensor& window,
                               const ham::ForwardOptions& opt, std::uint64_t proj_seed,
                               double eps = 1e-6) {
  ham::rng::Stream s(proj_seed);
  const ham::Tensor rrow = random_tensor(1, model.config.horizon, s);
  const ham::Tensor rcol = random_tensor(model.config.channels, 1, s);

  auto eval = [&]() {
    ham::Graph g;
    const int pred = model.build_forward(g, model.add_params(g), window, opt);
    return g.val(g.matmul(g.matmul(g.input(rrow), pred), g.input(rcol))).data[0];
  };

  std::vector<std::vector<double>> analytic;
  {
    ham::Graph g;
    const std::vector<int> ids = model.add_params(g);
    const int pred = model.build_forward(g, ids, window, opt);
    g.backward(g.matmul(g.matmul(g.input(rrow), pred), g.input(rcol)));
    ham::Tensor t;
    for (int id : ids) {
      g.read_grad(id, t);
      analytic.push_back(t.data);
    }
  }

  FdReport rep;
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    for (std::size_t k = 0; k < model.params[i].value.data.size(); ++k) {
      double& slot = model.params[i].value.data[k];
      const double keep = slot;
      slot = keep + eps;
      const double lp = eval();
      slot = keep - eps;
      const double lm = eval();
      slot = keep;
      const double fd = (lp - lm) / (2.0 * eps);
      const double an = analytic[i][k];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
      rep.max_rel = std::max(rep.max_rel, std::abs(fd - an) / denom);
      ++rep.checked;
    }
  }
  return rep;
}

}  // namespace testutil
