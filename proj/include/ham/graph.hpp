#pragma once
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ham/tensor.hpp"

namespace ham {

// Reverse-mode tape over small dense tensors. One Graph records one forward
// pass in topological order; backward() runs a single reverse sweep. A Graph
// and its tensors are confined to one thread.
//
// Primitive basis: matmul, add, sub, broadcast_sub_last, relu, dropout_masked,
// mean_axis, square, gather_cyclic, plus the structural ops reshape and scale
// (constant factor). Broadcasting beyond this basis is expressed with constant
// ones tensors and matmul so every backward rule stays individually testable.
enum class OpKind {
  Input,
  Matmul,
  Add,
  Sub,
  BroadcastSubLast,
  Relu,
  DropoutMasked,
  MeanAxis,
  Square,
  GatherCyclic,
  Reshape,
  Scale,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Input: return "input";
    case OpKind::Matmul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::BroadcastSubLast: return "broadcast_sub_last";
    case OpKind::Relu: return "relu";
    case OpKind::DropoutMasked: return "dropout_masked";
    case OpKind::MeanAxis: return "mean_axis";
    case OpKind::Square: return "square";
    case OpKind::GatherCyclic: return "gather_cyclic";
    case OpKind::Reshape: return "reshape";
    case OpKind::Scale: return "scale";
  }
  return "?";
}

class Graph {
 public:
  struct Node {
    OpKind kind;
    int a = -1;
    int b = -1;
    Tensor value;
    // op parameters
    double factor = 1.0;       // Scale
    double keep_prob = 1.0;    // DropoutMasked
    std::size_t axis = 0;      // MeanAxis
    std::size_t gather_start = 0, gather_count = 0;  // GatherCyclic
    bool needs_grad = false;
    // reverse-sweep state
    std::vector<double> bar;
    std::uint64_t bar_stamp = 0;
  };

  // Leaf tensor. requires_grad marks trainable parameters; constants (data,
  // targets, masks, ones) leave it false so the sweep skips them.
  int input(Tensor t, bool requires_grad = false) {
    Node n;
    n.kind = OpKind::Input;
    n.value = std::move(t);
    n.needs_grad = requires_grad;
    return push(std::move(n));
  }

  int matmul(int a, int b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows())
      fail("matmul", A, &B);
    Node n = binary(OpKind::Matmul, a, b);
    n.value = Tensor::zeros(A.rows(), B.cols());
    const std::size_t m = A.rows(), k = A.cols(), c = B.cols();
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = &A.data[i * k];
      double* crow = &n.value.data[i * c];
      for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p];
        if (av == 0.0) continue;
        const double* brow = &B.data[p * c];
        for (std::size_t j = 0; j < c; ++j) crow[j] += av * brow[j];
      }
    }
    return push(std::move(n));
  }

  int add(int a, int b) { return elementwise_pair(OpKind::Add, a, b); }
  int sub(int a, int b) { return elementwise_pair(OpKind::Sub, a, b); }

  // out[i,:] = x[i,:] - x[last,:]; the last row of the output is zero.
  int broadcast_sub_last(int x) {
    const Tensor& X = val(x);
    if (X.rank() != 2 || X.rows() == 0) fail("broadcast_sub_last", X);
    Node n = unary(OpKind::BroadcastSubLast, x);
    n.value = X;
    const std::size_t c = X.cols(), last = (X.rows() - 1) * c;
    for (std::size_t i = 0; i < X.rows(); ++i)
      for (std::size_t j = 0; j < c; ++j) n.value.data[i * c + j] -= X.data[last + j];
    return push(std::move(n));
  }

  int relu(int x) {
    Node n = unary(OpKind::Relu, x);
    n.value = val(x);
    for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(n));
  }

  // Inverted dropout with an externally supplied 0/1 mask: out = x * mask / p.
  // Evaluation mode is simply "no dropout node", making it the identity.
  int dropout_masked(int x, int mask, double keep_prob) {
    const Tensor& X = val(x);
    const Tensor& M = val(mask);
    if (!X.same_shape(M)) fail("dropout_masked", X, &M);
    if (!(keep_prob > 0.0 && keep_prob <= 1.0))
      throw std::invalid_argument("dropout_masked: keep probability must be in (0,1], got " +
                                  std::to_string(keep_prob));
    Node n = binary(OpKind::DropoutMasked, x, mask);
    n.keep_prob = keep_prob;
    n.needs_grad = node(x).needs_grad;  // mask is a constant
    n.value = X;
    for (std::size_t i = 0; i < n.value.data.size(); ++i)
      n.value.data[i] = X.data[i] * M.data[i] / keep_prob;
    return push(std::move(n));
  }

  // axis 0: column means (1 x n); axis 1: row means (m x 1).
  int mean_axis(int x, std::size_t axis) {
    const Tensor& X = val(x);
    if (X.rank() != 2 || axis > 1) fail("mean_axis", X);
    Node n = unary(OpKind::MeanAxis, x);
    n.axis = axis;
    const std::size_t m = X.rows(), c = X.cols();
    if (axis == 0) {
      n.value = Tensor::zeros(1, c);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) n.value.data[j] += X.at(i, j) / double(m);
    } else {
      n.value = Tensor::zeros(m, 1);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) n.value.data[i] += X.at(i, j) / double(c);
    }
    return push(std::move(n));
  }

  int square(int x) {
    Node n = unary(OpKind::Square, x);
    n.value = val(x);
    for (double& v : n.value.data) v *= v;
    return push(std::move(n));
  }

  // Rows (start+i) mod rows(x), for i in [0, count). Used for the cycle
  // queue's phase alignment and for last-row extraction (count == 1).
  int gather_cyclic(int x, std::size_t start, std::size_t count) {
    const Tensor& X = val(x);
    if (X.rank() != 2 || X.rows() == 0 || count == 0) fail("gather_cyclic", X);
    Node n = unary(OpKind::GatherCyclic, x);
    n.gather_start = start;
    n.gather_count = count;
    const std::size_t c = X.cols(), r = X.rows();
    n.value = Tensor::zeros(count, c);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t src = (start + i) % r;
      for (std::size_t j = 0; j < c; ++j) n.value.data[i * c + j] = X.data[src * c + j];
    }
    return push(std::move(n));
  }

  int reshape(int x, std::vector<std::size_t> shape) {
    const Tensor& X = val(x);
    if (Tensor::numel_of(shape) != X.numel()) fail("reshape", X);
    Node n = unary(OpKind::Reshape, x);
    n.value = Tensor(std::move(shape), X.data);
    return push(std::move(n));
  }

  int scale(int x, double factor) {
    Node n = unary(OpKind::Scale, x);
    n.factor = factor;
    n.value = val(x);
    for (double& v : n.value.data) v *= factor;
    return push(std::move(n));
  }

  const Tensor& val(int id) const { return nodes_[check(id)].value; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar loss. Bars from earlier sweeps on this graph
  // are discarded (stamp bump), so gradients never leak across sweeps.
  void backward(int loss) {
    const Tensor& L = val(loss);
    if (L.numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar, got shape " + L.shape_str());
    sweep(loss, 0);
  }

  // Reverse sweep seeded at one flat component of an arbitrary node; used by
  // the per-timestep path where the loss vector holds one entry per timestep.
  void backward_component(int node_id, std::size_t flat_index) {
    if (flat_index >= val(node_id).numel())
      throw std::invalid_argument("backward_component: index out of range");
    sweep(node_id, flat_index);
  }

  // Gradient of the last sweep w.r.t. an input node (zero if unreachable).
  void read_grad(int id, Tensor& out) const {
    const Node& n = nodes_[check(id)];
    out.shape = n.value.shape;
    if (n.bar_stamp == stamp_ && !n.bar.empty())
      out.data = n.bar;
    else
      out.data.assign(n.value.numel(), 0.0);
  }

  // Write (or accumulate) gradients of the last sweep into parameter groups.
  // Overwrite is the default so one subseries can never contaminate the next.
  void write_gradients(const std::vector<int>& param_ids, std::vector<ParamGroup>& groups,
                       bool accumulate = false) const {
    if (param_ids.size() != groups.size())
      throw std::invalid_argument("write_gradients: id/group count mismatch");
    Tensor g;
    for (std::size_t i = 0; i < groups.size(); ++i) {
      read_grad(param_ids[i], g);
      if (accumulate) {
        for (std::size_t j = 0; j < g.data.size(); ++j) groups[i].grad.data[j] += g.data[j];
      } else {
        groups[i].grad = std::move(g);
        g = Tensor();
      }
    }
  }

 private:
  std::vector<Node> nodes_;
  std::uint64_t stamp_ = 0;

  int check(int id) const {
    if (id < 0 || std::size_t(id) >= nodes_.size())
      throw std::invalid_argument("graph: bad node id " + std::to_string(id));
    return id;
  }
  Node& node(int id) { return nodes_[check(id)]; }

  Node unary(OpKind k, int a) {
    Node n;
    n.kind = k;
    n.a = check(a);
    n.needs_grad = nodes_[a].needs_grad;
    return n;
  }
  Node binary(OpKind k, int a, int b) {
    Node n;
    n.kind = k;
    n.a = check(a);
    n.b = check(b);
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    return n;
  }
  Node elementwise_pair_node(OpKind k, int a, int b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (!A.same_shape(B)) fail(op_name(k), A, &B);
    return binary(k, a, b);
  }
  int elementwise_pair(OpKind k, int a, int b) {
    Node n = elementwise_pair_node(k, a, b);
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    n.value = A;
    if (k == OpKind::Add)
      for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] += B.data[i];
    else
      for (std::size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] -= B.data[i];
    return push(std::move(n));
  }

  int push(Node n) {
    nodes_.push_back(std::move(n));
    return int(nodes_.size()) - 1;
  }

  [[noreturn]] static void fail(const std::string& prim, const Tensor& a, const Tensor* b = nullptr) {
    std::string msg = prim + ": shape mismatch " + a.shape_str();
    if (b) msg += " vs " + b->shape_str();
    throw std::invalid_argument(msg);
  }

  // --- reverse sweep ----------------------------------------------------

  std::vector<double>& bar_of(int id) {
    Node& n = nodes_[id];
    if (n.bar_stamp != stamp_) {
      n.bar.assign(n.value.numel(), 0.0);
      n.bar_stamp = stamp_;
    }
    return n.bar;
  }
  bool bar_live(int id) const {
    const Node& n = nodes_[id];
    return n.bar_stamp == stamp_;
  }

  void sweep(int seed_node, std::size_t seed_index) {
    ++stamp_;
    bar_of(seed_node)[seed_index] = 1.0;
    for (int i = seed_node; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.bar_stamp != stamp_ || !n.needs_grad) continue;
      backprop_node(i, n);
    }
  }

  void backprop_node(int id, Node& n) {
    switch (n.kind) {
      case OpKind::Input:
        break;
      case OpKind::Matmul: {
        // C = A(mxk) B(kxc); rows of bar_C that are all zero are skipped,
        // which makes single-timestep sweeps cheap on wide output layers.
        const Node& A = nodes_[n.a];
        const Node& B = nodes_[n.b];
        const std::size_t m = A.value.rows(), k = A.value.cols(), c = B.value.cols();
        const std::vector<double>& bc = n.bar;
        const bool ga = A.needs_grad, gb = B.needs_grad;
        std::vector<double>* ba = ga ? &bar_of(n.a) : nullptr;
        std::vector<double>* bb = gb ? &bar_of(n.b) : nullptr;
        for (std::size_t i = 0; i < m; ++i) {
          const double* brow = &bc[i * c];
          bool live = false;
          for (std::size_t j = 0; j < c; ++j)
            if (brow[j] != 0.0) {
              live = true;
              break;
            }
          if (!live) continue;
          const double* arow = &A.value.data[i * k];
          for (std::size_t p = 0; p < k; ++p) {
            const double* bsrc = &B.value.data[p * c];
            if (ga) {
              double acc = 0.0;
              for (std::size_t j = 0; j < c; ++j) acc += brow[j] * bsrc[j];
              (*ba)[i * k + p] += acc;
            }
            if (gb) {
              const double av = arow[p];
              if (av != 0.0) {
                double* bdst = &(*bb)[p * c];
                for (std::size_t j = 0; j < c; ++j) bdst[j] += av * brow[j];
              }
            }
          }
        }
        break;
      }
      case OpKind::Add: {
        if (nodes_[n.a].needs_grad) {
          auto& ba = bar_of(n.a);
          for (std::size_t i = 0; i < n.bar.size(); ++i) ba[i] += n.bar[i];
        }
        if (nodes_[n.b].needs_grad) {
          auto& bb = bar_of(n.b);
          for (std::size_t i = 0; i < n.bar.size(); ++i) bb[i] += n.bar[i];
        }
        break;
      }
      case OpKind::Sub: {
        if (nodes_[n.a].needs_grad) {
          auto& ba = bar_of(n.a);
          for (std::size_t i = 0; i < n.bar.size(); ++i) ba[i] += n.bar[i];
        }
        if (nodes_[n.b].needs_grad) {
          auto& bb = bar_of(n.b);
          for (std::size_t i = 0; i < n.bar.size(); ++i) bb[i] -= n.bar[i];
        }
        break;
      }
      case OpKind::BroadcastSubLast: {
        if (!nodes_[n.a].needs_grad) break;
        auto& ba = bar_of(n.a);
        const std::size_t c = n.value.cols(), rows = n.value.rows();
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < c; ++j) ba[i * c + j] += n.bar[i * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          double colsum = 0.0;
          for (std::size_t i = 0; i < rows; ++i) colsum += n.bar[i * c + j];
          ba[(rows - 1) * c + j] -= colsum;
        }
        break;
      }
      case OpKind::Relu: {
        if (!nodes_[n.a].needs_grad) break;
        auto& ba = bar_of(n.a);
        const Tensor& X = nodes_[n.a].value;
        for (std::size_t i = 0; i < n.bar.size(); ++i)
          if (X.data[i] > 0.0) ba[i] += n.bar[i];
        break;
      }
      case OpKind::DropoutMasked: {
        if (!nodes_[n.a].needs_grad) break;
        auto& ba = bar_of(n.a);
        const Tensor& M = nodes_[n.b].value;
        for (std::size_t i = 0; i < n.bar.size(); ++i)
          ba[i] += n.bar[i] * M.data[i] / n.keep_prob;
        break;
      }
      case OpKind::MeanAxis: {
        if (!nodes_[n.a].needs_grad) break;
        auto& ba = bar_of(n.a);
        const Tensor& X = nodes_[n.a].value;
        const std::size_t m = X.rows(), c = X.cols();
        if (n.axis == 0) {
          for (std::size_t j = 0; j < c; ++j) {
            const double v = n.bar[j] / double(m);
            if (v == 0.0) continue;
            for (std::size_t i = 0; i < m; ++i) ba[i * c + j] += v;
          }
        } else {
          for (std::size_t i = 0; i < m; ++i) {
            const double v = n.bar[i] / double(c);
            if (v == 0.0) continue;
            for (std::size_t j = 0; j < c; ++j) ba[i * c + j] += v;
          }
        }
        break;
      }
      case OpKind::Square: {
        if (!nodes_[n.a].needs_grad) break;
        auto& ba = bar_of(n.a);
        const Tensor& X = nodes_[n.a].value;
        for (std::size_t i = 0; i < n.bar.size(); ++i) ba[i] += 2.0 * X.data[i] * n.bar[i];
        break;
      }
      case OpKind::GatherCyclic: {
        if (!nodes_[n.a].needs_grad) break;
        auto& ba = bar_of(n.a);
        const std::size_t r = nodes_[n.a].value.rows(), c = n.value.cols();
        for (std::size_t i = 0; i < n.gather_count; ++i) {
          const std::size_t src = (n.gather_start + i) % r;
          for (std::size_t j = 0; j < c; ++j) ba[src * c + j] += n.bar[i * c + j];
        }
        break;
      }
      case OpKind::Reshape: {
        if (!nodes_[n.a].needs_grad) break;
        auto& ba = bar_of(n.a);
        for (std::size_t i = 0; i < n.bar.size(); ++i) ba[i] += n.bar[i];
        break;
      }
      case OpKind::Scale: {
        if (!nodes_[n.a].needs_grad) break;
        auto& ba = bar_of(n.a);
        for (std::size_t i = 0; i < n.bar.size(); ++i) ba[i] += n.factor * n.bar[i];
        break;
      }
    }
    (void)id;
  }
};

}  // namespace ham
