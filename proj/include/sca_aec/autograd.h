#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <unordered_map>

#include "sca_aec/tensor.h"

namespace sca_aec {

class Graph;

// Handle to a value recorded on a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::uint32_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

// Gradients keyed by parameter; lets concurrent graphs over one shared model
// write into private buffers.
using GradientMap = std::unordered_map<const Parameter*, Tensor>;

// Tape of executed operations. Nodes are appended in execution order, so the
// reverse sweep is the reverse of the append order. A recording graph can be
// swept exactly once.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& grad_out)>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var Constant(Tensor value);
  // Leaf for a parameter; repeated calls reuse it while the value is unchanged.
  Var Param(Parameter& p);

  // Appends an op result. `backward` is kept only when recording and at
  // least one input needs a gradient.
  Var Emit(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var Emit(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  // Gradient buffer for `v`, allocated on first use. Returns nullptr when `v`
  // does not participate in differentiation.
  Tensor* GradSink(Var v);

  void Backward(Var loss);
  void Backward(Var loss, GradientMap& out);
  bool consumed() const { return consumed_; }

  // Smallest |pre-activation| seen at a non-differentiable point (relu, abs,
  // hypot origin). Gradient checks use it to reject inputs near kinks.
  void NoteKink(double distance) {
    if (distance < min_kink_) min_kink_ = distance;
  }
  double min_kink() const { return min_kink_; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  void Sweep(Var loss);
  template <typename Range>
  Var EmitImpl(Tensor value, const Range& inputs, BackwardFn backward);

  bool record_;
  bool consumed_ = false;
  double min_kink_ = std::numeric_limits<double>::infinity();
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, Var> param_vars_;
};

inline const Tensor& Var::value() const { return graph_->value(*this); }
inline bool Var::requires_grad() const { return graph_->requires_grad(*this); }

}  // namespace sca_aec
