#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "aurum/tensor.hpp"

namespace aurum::nn {

/// Trainable weights. `grad` has the value's shape and is accumulated into by
/// Graph::backward; callers zero it between steps.
template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = true;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}
  void zero_grad() noexcept { grad.fill(T(0)); }
};

template <class T>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while its graph lives.
template <class T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  bool requires_grad() const;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node
/// vector is already a topological order and backward simply walks it in
/// reverse. Ops whose inputs do not require gradients record no backward
/// closure, which makes frozen inference a tape of plain values.
template <class T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> input(Tensor<T> value, bool requires_grad = false);
  /// Leaf bound to a parameter; backward adds into `param.grad`.
  Var<T> param(Parameter<T>& param);

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient of the last backward pass w.r.t. node `id` (zeros if unreached).
  Tensor<T> grad(std::size_t id) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
  /// Throws ContractError unless `loss` is 1 x 1.
  void backward(Var<T> loss);

  // Used by op implementations.
  Var<T> record(Tensor<T> value, std::initializer_list<std::size_t> parents, BackwardFn fn);
  Var<T> record(Tensor<T> value, const std::vector<std::size_t>& parents, BackwardFn fn);
  /// Gradient buffer of `id`, zero-allocated on first use.
  Tensor<T>& grad_buffer(std::size_t id);
  bool has_grad(std::size_t id) const noexcept { return !nodes_[id].grad.empty(); }
  /// Visit count of the last backward pass; each reached node counts once.
  std::size_t visited() const noexcept { return visited_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  std::size_t visited_ = 0;
};

template <class T>
const Tensor<T>& Var<T>::value() const {
  return graph->value(id);
}
template <class T>
bool Var<T>::requires_grad() const {
  return graph->requires_grad(id);
}

// --- forward ops -----------------------------------------------------------
// Each throws ShapeError naming both shapes on incompatible inputs.

/// alpha * A * B
template <class T>
Var<T> matmul(Var<T> a, Var<T> b, T alpha = T(1));
/// alpha * A * B^T
template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> b, T alpha = T(1));
template <class T>
Var<T> add(Var<T> a, Var<T> b);
/// a + bias, bias 1 x cols broadcast over rows.
template <class T>
Var<T> add_row(Var<T> a, Var<T> bias);
template <class T>
Var<T> sub(Var<T> a, Var<T> b);
template <class T>
Var<T> mul(Var<T> a, Var<T> b);
template <class T>
Var<T> scale(Var<T> a, T factor);
/// Per-row standardization followed by gamma * x + beta (both 1 x cols).
template <class T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps = 1e-5);
template <class T>
Var<T> softmax(Var<T> x);
/// Exact GELU, x * Phi(x).
template <class T>
Var<T> gelu(Var<T> x);
template <class T>
Var<T> slice_cols(Var<T> x, std::size_t begin, std::size_t count);
template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts);
template <class T>
Var<T> slice_rows(Var<T> x, std::size_t begin, std::size_t count);
template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts);
/// out[i] = x[index[i]]; backward scatter-adds.
template <class T>
Var<T> gather_rows(Var<T> x, std::span<const std::size_t> index);
/// Repeats a 1 x n row `count` times.
template <class T>
Var<T> repeat_row(Var<T> x, std::size_t count);
/// Mean of all elements as 1 x 1, accumulated in double.
template <class T>
Var<T> mean(Var<T> x);
template <class T>
Var<T> sum(Var<T> x);
/// mean((a - b)^2) as 1 x 1.
template <class T>
Var<T> mse(Var<T> a, Var<T> b);

}  // namespace aurum::nn
