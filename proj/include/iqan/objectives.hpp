#pragma once

#include <span>
#include <vector>

#include "iqan/autodiff.hpp"
#include "iqan/linalg.hpp"

namespace iqan {

/// Mean over coordinates of 0.5 x^2 (|x| < 1) or |x| - 0.5.
double smooth_l1(const Vector& x);
/// -log softmax(scores)[target]
double vqa_classification_loss(const Vector& scores, int target);
/// Mean per-token negative log-likelihood; one score vector per target token.
double vqg_sequence_loss(std::span<const Vector> step_scores, std::span<const int> targets);

Var smooth_l1(Var x);
Var softmax_cross_entropy(Var scores, int target);
Var sequence_nll(std::span<const Var> step_scores, std::span<const int> targets);

struct LossWeights {
  double vqa = 1.0;
  double vqg = 1.0;
  double q_duality = 1.0;
  double a_duality = 1.0;
};

struct LossTerms {
  double vqa_loss = 0.0;
  double vqg_loss = 0.0;
  double q_duality = 0.0;
  double a_duality = 0.0;
};

struct LossBreakdown {
  LossTerms terms;
  LossWeights weights;
  double total = 0.0;
};

LossBreakdown total_loss(const LossTerms& terms, const LossWeights& weights);

}  // namespace iqan
