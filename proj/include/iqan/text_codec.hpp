#pragma once

// Question and answer encoding/decoding.
//
// Answers: one table E_a (|A| x d_a). embed_answer reads a row of it and
// classify_answer multiplies by it, so a model that shares the codec holds a
// single Parameter viewed two ways.
//
// Questions: a single-layer gated recurrent cell (update/reset gates, tanh
// candidate). The encoder runs it from a zero state over the question; the
// decoder runs the same cell from an initial state derived from the fused
// question feature and reads words out through W_out.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "iqan/autodiff.hpp"
#include "iqan/fusion.hpp"
#include "iqan/linalg.hpp"

namespace iqan {

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kStart = 1;
  static constexpr int kEnd = 2;
  static constexpr int kUnk = 3;

  /// Reserved tokens only: <pad>, <start>, <end>, <unk> in that order.
  Vocabulary();
  explicit Vocabulary(std::span<const std::string> tokens);

  int add(const std::string& token);
  std::optional<int> find(std::string_view token) const;
  int id(std::string_view token) const;  // kUnk when absent
  const std::string& token(int id) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  std::vector<int> encode(std::string_view sentence) const;
  std::string decode(std::span<const int> ids) const;

  /// One token per line, line number == id.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

std::vector<std::string> split_tokens(std::string_view sentence);

struct AnswerTable {
  ParamPtr E_a;  // |A| x d_a
  std::size_t num_answers() const { return E_a->value.rows(); }
};

Vector embed_answer(int answer_id, const AnswerTable& table);
Vector classify_answer(const Vector& answer_feature, const AnswerTable& table);
Var embed_answer(Tape& tape, int answer_id, const AnswerTable& table);
Var classify_answer(Tape& tape, Var answer_feature, const AnswerTable& table);

struct GruCell {
  ParamPtr W_z, U_z, b_z;
  ParamPtr W_r, U_r, b_r;
  ParamPtr W_h, U_h, b_h;

  std::vector<ParamPtr> parameters() const;
  std::size_t hidden() const { return U_z->value.rows(); }
};

struct RecurrentParams {
  ParamPtr word_embedding;  // |W| x d_w
  GruCell cell;             // hidden size d_q
  ParamPtr W_out;           // |W| x d_q, decoder only
  ParamPtr b_out;           // |W| x 1, decoder only

  std::vector<ParamPtr> parameters() const;
};

GruCell make_gru_cell(std::size_t input, std::size_t hidden, const std::string& prefix, Rng& rng);
RecurrentParams make_recurrent_params(std::size_t vocab, std::size_t d_w, std::size_t d_q,
                                      const std::string& prefix, Rng& rng, bool with_output);

Var gru_step(Tape& tape, const GruCell& cell, Var input, Var hidden);
Var encode_question(Tape& tape, std::span<const int> tokens, const RecurrentParams& params);
Vector encode_question(std::span<const int> tokens, const RecurrentParams& params);

/// One decoder step: consumes `input_token` from `hidden`, returns the new
/// hidden state and the word scores (pre-softmax) for the next position.
std::pair<Var, Var> decoder_step(Tape& tape, const RecurrentParams& params, Var hidden, int input_token);

/// Teacher forcing: inputs <start>, w_1..w_n; one score vector per target
/// w_1..w_n, <end>.
std::vector<Var> teacher_forced_scores(Tape& tape, const RecurrentParams& params, Var initial_hidden,
                                       std::span<const int> question);

Vector log_softmax(std::span<const double> scores);

struct DecodeOptions {
  int start_token = Vocabulary::kStart;
  int end_token = Vocabulary::kEnd;
  std::size_t max_len = 16;
  std::size_t beam_width = 1;
  bool length_normalize = false;
};

struct DecodeResult {
  std::vector<int> tokens;  // without <end>
  double log_prob = 0.0;
  std::size_t steps = 0;  // decoder steps taken, including the one emitting <end>
};

/// step(state, input_token) -> (next state, log-probabilities of the next token).
template <class State>
using StepFunction = std::function<std::pair<State, Vector>(const State&, int)>;

template <class State>
DecodeResult decode_greedy(const State& initial, const StepFunction<State>& step, const DecodeOptions& options) {
  DecodeResult out;
  State state = initial;
  int input = options.start_token;
  for (std::size_t i = 0; i < options.max_len; ++i) {
    auto [next, logp] = step(state, input);
    // argmax, lowest id on ties
    int best = 0;
    for (std::size_t k = 1; k < logp.size(); ++k)
      if (logp[k] > logp[best]) best = static_cast<int>(k);
    out.log_prob += logp[best];
    out.steps = i + 1;
    if (best == options.end_token) return out;
    out.tokens.push_back(best);
    state = std::move(next);
    input = best;
  }
  return out;
}

namespace detail {

inline double ranking_score(double log_prob, std::size_t length, bool normalize) {
  return normalize ? log_prob / static_cast<double>(std::max<std::size_t>(length, 1)) : log_prob;
}

// Higher score first; ties by earlier completion, then lexicographic tokens.
inline bool better_finished(const DecodeResult& a, const DecodeResult& b, bool normalize) {
  const double sa = ranking_score(a.log_prob, a.steps, normalize);
  const double sb = ranking_score(b.log_prob, b.steps, normalize);
  if (sa != sb) return sa > sb;
  if (a.steps != b.steps) return a.steps < b.steps;
  return a.tokens < b.tokens;
}

}  // namespace detail

/// Beam search over cumulative log-probability. Each step keeps the best
/// `beam_width` one-token extensions of the live hypotheses; extensions ending
/// in <end> (or reaching max_len) are moved to the finished pool. The greedy
/// hypothesis always competes in the final selection, so the result never
/// scores below greedy decoding.
template <class State>
DecodeResult decode_beam(const State& initial, const StepFunction<State>& step, const DecodeOptions& options) {
  const std::size_t width = std::max<std::size_t>(options.beam_width, 1);
  struct Live {
    std::vector<int> tokens;
    double log_prob;
    State state;
    int input;
  };
  struct Candidate {
    std::size_t parent;
    int token;
    double log_prob;
  };

  std::vector<DecodeResult> finished;
  finished.push_back(decode_greedy(initial, step, options));
  if (width == 1) return finished.front();

  std::vector<Live> live{Live{{}, 0.0, initial, options.start_token}};
  for (std::size_t depth = 1; depth <= options.max_len && !live.empty(); ++depth) {
    std::vector<State> next_states;
    std::vector<Candidate> candidates;
    for (std::size_t b = 0; b < live.size(); ++b) {
      auto [next, logp] = step(live[b].state, live[b].input);
      next_states.push_back(std::move(next));
      for (std::size_t k = 0; k < logp.size(); ++k)
        candidates.push_back({b, static_cast<int>(k), live[b].log_prob + logp[k]});
    }
    auto before = [&](const Candidate& x, const Candidate& y) {
      const double sx = detail::ranking_score(x.log_prob, depth, options.length_normalize);
      const double sy = detail::ranking_score(y.log_prob, depth, options.length_normalize);
      if (sx != sy) return sx > sy;
      const auto& tx = live[x.parent].tokens;
      const auto& ty = live[y.parent].tokens;
      if (tx != ty) return tx < ty;
      return x.token < y.token;
    };
    const std::size_t keep = std::min(width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      before);

    std::vector<Live> next_live;
    for (std::size_t c = 0; c < keep; ++c) {
      const Candidate& cand = candidates[c];
      std::vector<int> tokens = live[cand.parent].tokens;
      if (cand.token == options.end_token) {
        finished.push_back({std::move(tokens), cand.log_prob, depth});
        continue;
      }
      tokens.push_back(cand.token);
      if (depth == options.max_len) {
        finished.push_back({std::move(tokens), cand.log_prob, depth});
        continue;
      }
      next_live.push_back({std::move(tokens), cand.log_prob, next_states[cand.parent], cand.token});
    }
    live = std::move(next_live);

    if (!options.length_normalize && !live.empty()) {
      // Log-probabilities only decrease, so a finished hypothesis that already
      // beats every live one cannot be overtaken.
      double best_live = live.front().log_prob;
      for (const auto& l : live) best_live = std::max(best_live, l.log_prob);
      bool done = false;
      for (const auto& f : finished) done = done || f.log_prob > best_live;
      if (done) break;
    }
  }

  return *std::min_element(finished.begin(), finished.end(), [&](const DecodeResult& a, const DecodeResult& b) {
    return detail::better_finished(a, b, options.length_normalize);
  });
}

/// Decoding with the recurrent decoder from an initial hidden state.
DecodeResult decode_question_greedy(const Vector& initial_hidden, const RecurrentParams& params,
                                    std::size_t max_len);
DecodeResult decode_question_beam(const Vector& initial_hidden, const RecurrentParams& params,
                                  std::size_t beam_width, std::size_t max_len, bool length_normalize = false);

}  // namespace iqan
