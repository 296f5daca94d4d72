#include "iqan/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "iqan/errors.hpp"

namespace iqan {
namespace {

double log_sum_exp(std::span<const double> xs) {
  const double mx = *std::max_element(xs.begin(), xs.end());
  double z = 0.0;
  for (double x : xs) z += std::exp(x - mx);
  return mx + std::log(z);
}

void check_target(std::size_t n, int target) {
  if (target < 0 || static_cast<std::size_t>(target) >= n) {
    throw ContractError("target " + std::to_string(target) + " out of range for " + std::to_string(n) + " classes");
  }
}

}  // namespace

double smooth_l1(const Vector& x) {
  if (x.size() == 0) return 0.0;
  double acc = 0.0;
  for (double v : x.values()) {
    const double a = std::abs(v);
    acc += a < 1.0 ? 0.5 * v * v : a - 0.5;
  }
  return acc / static_cast<double>(x.size());
}

double vqa_classification_loss(const Vector& scores, int target) {
  check_target(scores.size(), target);
  return log_sum_exp(scores.values()) - scores[static_cast<std::size_t>(target)];
}

double vqg_sequence_loss(std::span<const Vector> step_scores, std::span<const int> targets) {
  if (step_scores.size() != targets.size()) {
    throw ContractError("vqg_sequence_loss: " + std::to_string(step_scores.size()) + " steps for " +
                        std::to_string(targets.size()) + " targets");
  }
  if (targets.empty()) throw ContractError("vqg_sequence_loss: empty target");
  double acc = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) acc += vqa_classification_loss(step_scores[i], targets[i]);
  return acc / static_cast<double>(targets.size());
}

Var smooth_l1(Var x) {
  Tape& t = *x.tape();
  const Matrix& v = x.value();
  double acc = 0.0;
  for (double e : v.values()) {
    const double a = std::abs(e);
    acc += a < 1.0 ? 0.5 * e * e : a - 0.5;
  }
  const double n = static_cast<double>(std::max<std::size_t>(v.size(), 1));
  return t.record(Matrix(1, 1, acc / n), {x}, [x, n](Tape& t, const Matrix& g) {
    const Matrix& v = t.value(x);
    Matrix d(v.rows(), v.cols());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double e = v[i];
      const double slope = std::abs(e) < 1.0 ? e : (e > 0.0 ? 1.0 : -1.0);
      d[i] = g[0] * slope / n;
    }
    t.accumulate(x, d);
  });
}

Var softmax_cross_entropy(Var scores, int target) {
  Tape& t = *scores.tape();
  const Matrix& s = scores.value();
  if (s.cols() != 1) throw ShapeError("softmax_cross_entropy expects a column of scores");
  check_target(s.rows(), target);
  const double lse = log_sum_exp(s.values());
  const auto k = static_cast<std::size_t>(target);
  return t.record(Matrix(1, 1, lse - s[k]), {scores}, [scores, k, lse](Tape& t, const Matrix& g) {
    const Matrix& s = t.value(scores);
    Matrix d(s.rows(), 1);
    for (std::size_t i = 0; i < s.rows(); ++i) d[i] = g[0] * std::exp(s[i] - lse);
    d[k] -= g[0];
    t.accumulate(scores, d);
  });
}

Var sequence_nll(std::span<const Var> step_scores, std::span<const int> targets) {
  if (step_scores.size() != targets.size()) {
    throw ContractError("sequence_nll: " + std::to_string(step_scores.size()) + " steps for " +
                        std::to_string(targets.size()) + " targets");
  }
  if (targets.empty()) throw ContractError("sequence_nll: empty target");
  Var acc = softmax_cross_entropy(step_scores[0], targets[0]);
  for (std::size_t i = 1; i < targets.size(); ++i) acc = add(acc, softmax_cross_entropy(step_scores[i], targets[i]));
  return scale(acc, 1.0 / static_cast<double>(targets.size()));
}

LossBreakdown total_loss(const LossTerms& terms, const LossWeights& weights) {
  LossBreakdown out{terms, weights, 0.0};
  out.total = weights.vqa * terms.vqa_loss + weights.vqg * terms.vqg_loss + weights.q_duality * terms.q_duality +
              weights.a_duality * terms.a_duality;
  return out;
}

}  // namespace iqan
