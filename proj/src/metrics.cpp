#include "iqan/metrics.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "iqan/errors.hpp"

namespace iqan {

int acc_at_k(const Vector& scores, int truth, std::size_t k) {
  if (truth < 0 || static_cast<std::size_t>(truth) >= scores.size()) {
    throw ContractError("acc_at_k: truth id " + std::to_string(truth) + " out of range");
  }
  if (k < 1 || k > scores.size()) throw ContractError("acc_at_k: k must be in [1, " + std::to_string(scores.size()) + "]");
  const double s = scores[static_cast<std::size_t>(truth)];
  std::size_t ahead = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (scores[c] > s || (scores[c] == s && c < static_cast<std::size_t>(truth))) ++ahead;
  }
  return ahead < k ? 1 : 0;
}

namespace {

template <class T>
double bleu_impl(std::span<const T> hyp, std::span<const T> ref, std::size_t max_n) {
  if (ref.empty()) throw ContractError("sentence_bleu: empty reference");
  if (max_n == 0) throw ContractError("sentence_bleu: max_n must be >= 1");

  std::vector<double> numerators(max_n), denominators(max_n);
  for (std::size_t n = 1; n <= max_n; ++n) {
    std::map<std::vector<T>, int> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[std::vector<T>(ref.begin() + i, ref.begin() + i + n)];
    std::map<std::vector<T>, int> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[std::vector<T>(hyp.begin() + i, hyp.begin() + i + n)];
    int clipped = 0, total = 0;
    for (const auto& [gram, count] : hyp_counts) {
      total += count;
      if (auto it = ref_counts.find(gram); it != ref_counts.end()) clipped += std::min(count, it->second);
    }
    numerators[n - 1] = clipped;
    denominators[n - 1] = std::max(1, total);
  }
  if (numerators[0] == 0) return 0.0;

  const double hyp_len = static_cast<double>(hyp.size());
  const double ref_len = static_cast<double>(ref.size());
  std::vector<double> precisions(max_n);
  int zero_orders = 0;
  for (std::size_t i = 0; i < max_n; ++i) {
    if (numerators[i] == 0 && hyp.size() > 1) {
      ++zero_orders;
      const double smoothed = 1.0 / (std::pow(2.0, zero_orders) * kBleuSmoothingK / std::log(hyp_len));
      precisions[i] = smoothed / denominators[i];
    } else {
      precisions[i] = numerators[i] / denominators[i];
    }
  }

  const double bp = hyp_len > ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  const double weight = 1.0 / static_cast<double>(max_n);
  double log_sum = 0.0;
  for (double p : precisions)
    if (p > 0.0) log_sum += weight * std::log(p);
  return bp * std::exp(log_sum);
}

}  // namespace

double sentence_bleu(std::span<const int> hypothesis, std::span<const int> reference, std::size_t max_n) {
  return bleu_impl<int>(hypothesis, reference, max_n);
}

double sentence_bleu(const std::vector<std::string>& hypothesis, const std::vector<std::string>& reference,
                     std::size_t max_n) {
  return bleu_impl<std::string>(hypothesis, reference, max_n);
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out.precision(17);
  out << "acc_at_1=" << acc_at_1 << "\nacc_at_5=" << acc_at_5 << "\nbleu=" << bleu << "\nn_examples=" << n_examples
      << "\n";
  return out.str();
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["acc1"] = acc_at_1;
  j["acc5"] = acc_at_5;
  j["bleu"] = bleu;
  j["n_examples"] = n_examples;
  return j.dump();
}

}  // namespace iqan
