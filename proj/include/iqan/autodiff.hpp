#pragma once

// Define-by-run reverse-mode differentiation.
//
// A Tape records every operation in creation order; backward() walks it in
// exact reverse order, so creation order is the topological order. Values
// are Matrix (vectors are n x 1 columns, scalars 1 x 1). Trainable state
// lives in Parameter objects outside the tape: Tape::param() makes one leaf
// per Parameter, every use site accumulates into that leaf, and backward()
// adds the leaf gradient into Parameter::grad. Sharing a parameter between
// two sub-networks is therefore just using the same ParamPtr twice.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "iqan/linalg.hpp"

namespace iqan {

struct Parameter {
  Parameter(std::string name, Matrix value);

  std::string name;
  Matrix value;
  Matrix grad;
};

using ParamPtr = std::shared_ptr<Parameter>;

ParamPtr make_param(std::string name, Matrix value);

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid as long as the tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  double scalar() const;
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Called with the gradient of the node's output; accumulates into parents
  /// through Tape::accumulate.
  using BackwardRule = std::function<void(Tape&, const Matrix& out_grad)>;

  /// With record_gradients false, parameters enter as plain values and no
  /// backward rules are kept (inference).
  explicit Tape(bool record_gradients = true) : record_gradients_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var param(const ParamPtr& p);
  Var record(Matrix value, std::initializer_list<Var> parents, BackwardRule rule);
  Var record(Matrix value, std::span<const Var> parents, BackwardRule rule);

  /// Reverse pass from a 1x1 node. Intermediate gradients are recomputed from
  /// scratch each call; parameter gradients accumulate until zero_grads().
  void backward(Var loss, double seed = 1.0);
  /// Resets node accumulators and the gradients of every parameter on the tape.
  void zero_grads();

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  const Matrix& grad(Var v) const { return nodes_[v.id()].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  void accumulate(Var v, const Matrix& g);
  /// Direct access to a node's accumulator for rules that scatter into it.
  Matrix* grad_buffer(Var v);

  std::size_t size() const noexcept { return nodes_.size(); }
  std::vector<ParamPtr> params() const;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    BackwardRule rule;
    ParamPtr param;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool record_gradients_ = true;
};

// Differentiable primitives.
Var matmul(Var a, Var b);     // a b
Var matmul_tn(Var a, Var b);  // a^T b
Var matmul_nt(Var a, Var b);  // a b^T
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
Var scale_by(Var s, Var a);  // 1x1 s times a
Var tanh(Var a);
Var sigmoid(Var a);
Var row(Var table, std::size_t index);  // row as a column vector
Var softmax(Var column);
Var sum(Var a);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);

void zero_grads(Tape& tape);
void zero_grads(std::span<const ParamPtr> params);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Compares backward() against central differences of `loss` for every
/// coordinate of `params`. Error per coordinate is
/// |analytic - numeric| / max(1, |analytic|). Parameter values are restored.
GradCheckResult finite_difference_check(const std::function<Var(Tape&)>& loss,
                                        std::span<const ParamPtr> params, double step = 1e-5);

}  // namespace iqan
