#pragma once

#include <span>
#include <string>
#include <vector>

#include "iqan/linalg.hpp"

namespace iqan {

/// 1 if `truth` is among the k highest scores, else 0. Equal scores rank the
/// lower class id first.
int acc_at_k(const Vector& scores, int truth, std::size_t k);

/// Sentence BLEU (n = 1..max_n, uniform weights, single reference) with
/// Chen & Cherry smoothing method 4 as implemented by NLTK: the j-th order
/// with no matches gets numerator 1 / (2^j * 5 / ln(hyp_len)) when
/// hyp_len > 1. Returns 0 when no unigram matches; orders that stay at zero
/// precision are left out of the geometric mean.
double sentence_bleu(std::span<const int> hypothesis, std::span<const int> reference, std::size_t max_n = 4);
double sentence_bleu(const std::vector<std::string>& hypothesis, const std::vector<std::string>& reference,
                     std::size_t max_n = 4);

inline constexpr double kBleuSmoothingK = 5.0;

struct EvalReport {
  double acc_at_1 = 0.0;
  double acc_at_5 = 0.0;
  double bleu = 0.0;  // unweighted mean of sentence BLEU
  std::size_t n_examples = 0;

  /// "key=value" lines: acc_at_1, acc_at_5, bleu, n_examples.
  std::string to_text() const;
  std::string to_json() const;
};

}  // namespace iqan
