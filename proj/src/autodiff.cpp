#include "iqan/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "iqan/errors.hpp"

namespace iqan {

Parameter::Parameter(std::string n, Matrix v)
    : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

ParamPtr make_param(std::string name, Matrix value) {
  return std::make_shared<Parameter>(std::move(name), std::move(value));
}

const Matrix& Var::value() const { return tape_->value(*this); }

double Var::scalar() const {
  const Matrix& m = value();
  if (m.size() != 1) throw ContractError("scalar(): node is not 1x1");
  return m[0];
}

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return {this, nodes_.size() - 1};
}

Var Tape::param(const ParamPtr& p) {
  if (auto it = param_nodes_.find(p.get()); it != param_nodes_.end()) return {this, it->second};
  nodes_.push_back(Node{p->value, {}, {}, p, record_gradients_});
  param_nodes_.emplace(p.get(), nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Tape::record(Matrix value, std::initializer_list<Var> parents, BackwardRule rule) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(rule));
}

Var Tape::record(Matrix value, std::span<const Var> parents, BackwardRule rule) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape() != this) throw ContractError("operation mixes nodes from different tapes");
    needs = needs || nodes_[p.id()].requires_grad;
  }
  Node node{std::move(value), {}, {}, nullptr, needs};
  if (needs) node.rule = std::move(rule);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    if (!g.same_shape(n.value)) throw ShapeError("gradient shape does not match node value");
    n.grad = g;
  } else {
    n.grad += g;
  }
}

Matrix* Tape::grad_buffer(Var v) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return nullptr;
  if (n.grad.size() == 0) n.grad = Matrix(n.value.rows(), n.value.cols());
  return &n.grad;
}

void Tape::backward(Var loss, double seed) {
  if (loss.tape() != this || loss.id() >= nodes_.size()) throw ContractError("loss node is not on this tape");
  if (nodes_[loss.id()].value.size() != 1) {
    throw ContractError("backward requires a scalar loss, got " + std::to_string(nodes_[loss.id()].value.rows()) +
                        "x" + std::to_string(nodes_[loss.id()].value.cols()));
  }
  for (Node& n : nodes_) n.grad = Matrix();
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Matrix(1, 1, seed);

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0) continue;
    if (n.rule) n.rule(*this, n.grad);
    if (n.param) n.param->grad += n.grad;
  }
}

void Tape::zero_grads() {
  for (Node& n : nodes_) {
    n.grad = Matrix();
    if (n.param) n.param->grad.fill(0.0);
  }
}

std::vector<ParamPtr> Tape::params() const {
  std::vector<ParamPtr> out;
  for (const Node& n : nodes_)
    if (n.param) out.push_back(n.param);
  return out;
}

void zero_grads(Tape& tape) { tape.zero_grads(); }

void zero_grads(std::span<const ParamPtr> params) {
  for (const auto& p : params) p->grad.fill(0.0);
}

namespace {

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw ContractError("operation mixes nodes from different tapes");
  return *a.tape();
}

Matrix transpose_times(const Matrix& a, const Matrix& b) {  // a^T b
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row counts differ");
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k)
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double x = a(k, i);
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += x * b(k, j);
    }
  return c;
}

Matrix times_transpose(const Matrix& a, const Matrix& b) {  // a b^T
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column counts differ");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
      c(i, j) = acc;
    }
  return c;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(iqan::matmul(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, times_transpose(g, t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, transpose_times(t.value(a), g));
  });
}

Var matmul_tn(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(transpose_times(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    // y = a^T b: dA = b g^T, dB = a g
    if (t.requires_grad(a)) t.accumulate(a, times_transpose(t.value(b), g));
    if (t.requires_grad(b)) t.accumulate(b, iqan::matmul(t.value(a), g));
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(times_transpose(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    // y = a b^T: dA = g b, dB = g^T a
    if (t.requires_grad(a)) t.accumulate(a, iqan::matmul(g, t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, transpose_times(g, t.value(a)));
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, -1.0 * g);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  return t.record(elementwise_product(a.value(), b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, elementwise_product(g, t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, elementwise_product(g, t.value(a)));
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  return t.record(s * a.value(), {a}, [a, s](Tape& t, const Matrix& g) { t.accumulate(a, s * g); });
}

Var scale_by(Var s, Var a) {
  Tape& t = tape_of(s, a);
  if (s.value().size() != 1) throw ShapeError("scale_by: scale must be 1x1");
  return t.record(s.value()[0] * a.value(), {s, a}, [s, a](Tape& t, const Matrix& g) {
    if (t.requires_grad(s)) {
      double acc = 0.0;
      const Matrix& av = t.value(a);
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
      t.accumulate(s, Matrix(1, 1, acc));
    }
    if (t.requires_grad(a)) t.accumulate(a, t.value(s)[0] * g);
  });
}

Var tanh(Var a) {
  Tape& t = *a.tape();
  Matrix y = a.value();
  for (double& x : y.values()) x = std::tanh(x);
  const std::size_t out = t.size();
  return t.record(std::move(y), {a}, [a, out](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(Var(&t, out));
    Matrix d(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * (1.0 - y[i] * y[i]);
    t.accumulate(a, d);
  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape();
  Matrix y = a.value();
  for (double& x : y.values()) x = 1.0 / (1.0 + std::exp(-x));
  const std::size_t out = t.size();
  return t.record(std::move(y), {a}, [a, out](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(Var(&t, out));
    Matrix d(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * y[i] * (1.0 - y[i]);
    t.accumulate(a, d);
  });
}

Var row(Var table, std::size_t index) {
  Tape& t = *table.tape();
  const Matrix& m = table.value();
  if (index >= m.rows()) {
    throw ContractError("row index " + std::to_string(index) + " out of range for " + std::to_string(m.rows()) +
                        " rows");
  }
  const auto r = m.row(index);
  return t.record(Matrix(m.cols(), 1, std::vector<double>(r.begin(), r.end())), {table},
                  [table, index](Tape& t, const Matrix& g) {
                    Matrix* buf = t.grad_buffer(table);
                    if (!buf) return;
                    for (std::size_t c = 0; c < g.size(); ++c) (*buf)(index, c) += g[c];
                  });
}

Var softmax(Var column) {
  Tape& t = *column.tape();
  const Matrix& x = column.value();
  if (x.cols() != 1) throw ShapeError("softmax expects a column vector");
  Matrix y(x.rows(), 1);
  const double mx = *std::max_element(x.values().begin(), x.values().end());
  double z = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) z += (y[i] = std::exp(x[i] - mx));
  for (double& v : y.values()) v /= z;
  const std::size_t out = t.size();
  return t.record(std::move(y), {column}, [column, out](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(Var(&t, out));
    double inner = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) inner += g[i] * y[i];
    Matrix d(y.rows(), 1);
    for (std::size_t i = 0; i < y.size(); ++i) d[i] = y[i] * (g[i] - inner);
    t.accumulate(column, d);
  });
}

Var sum(Var a) {
  Tape& t = *a.tape();
  double acc = 0.0;
  for (double x : a.value().values()) acc += x;
  return t.record(Matrix(1, 1, acc), {a}, [a](Tape& t, const Matrix& g) {
    const Matrix& v = t.value(a);
    t.accumulate(a, Matrix(v.rows(), v.cols(), g[0]));
  });
}

Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }

GradCheckResult finite_difference_check(const std::function<Var(Tape&)>& loss, std::span<const ParamPtr> params,
                                        double step) {
  if (!(step > 0.0)) throw ContractError("finite_difference_check: step must be positive");
  zero_grads(params);
  {
    Tape tape;
    Var l = loss(tape);
    if (!std::isfinite(l.scalar())) throw NumericError("finite_difference_check: loss is not finite");
    tape.backward(l);
  }
  auto evaluate = [&]() {
    Tape tape(false);
    const double v = loss(tape).scalar();
    if (!std::isfinite(v)) throw NumericError("finite_difference_check: perturbed loss is not finite");
    return v;
  };

  GradCheckResult result;
  for (const auto& p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double original = p->value[i];
      double up = 0.0, down = 0.0;
      try {
        p->value[i] = original + step;
        up = evaluate();
        p->value[i] = original - step;
        down = evaluate();
      } catch (...) {
        p->value[i] = original;
        throw;
      }
      p->value[i] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad[i];
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
      ++result.coordinates;
      if (err >= result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = p->name;
        result.worst_index = i;
      }
    }
  }
  zero_grads(params);
  return result;
}

}  // namespace iqan
