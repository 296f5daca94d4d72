#pragma once

// The joint VQA/VQG network.
//
//   VQA:  q = enc(question); v_q = attend(grid, q); a~* = fuse(W_q q, W_v v_q)
//         scores = E_a (W_a^T a~*)
//   VQG:  a = E_a[answer];  v_a = attend(grid, a); q~* = fuse(W_a a, W_v v_a)
//         decoder starts from W_q^T q~* and is trained with teacher forcing
//
// The sharing flags decide which of these parameters are one object:
// dual_mutan (one fusion set for both directions), share_codec (one answer
// table for embedding and classification, one recurrent cell and word table
// for encoding and decoding) and share_attention. With every flag off the two
// directions are independent models trained side by side.
//
// The duality terms compare the features inferred by one direction with the
// encoded features of the other. With skip_projection on they are compared in
// the projected space (q~* vs W_q q, a~* vs W_a a); off, after lifting back
// (W_q^T q~* vs q, W_a^T a~* vs a).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "iqan/attention.hpp"
#include "iqan/autodiff.hpp"
#include "iqan/fusion.hpp"
#include "iqan/objectives.hpp"
#include "iqan/text_codec.hpp"

namespace iqan {

struct ModelConfig {
  FusionConfig fusion;
  std::size_t d_w = 16;             // word embedding width
  std::size_t attention_dim = 16;   // projected width on both sides of the attention score
  std::size_t attention_rank = 8;
  std::size_t num_answers = 15;
  std::size_t vocab_size = 28;
  bool dual_mutan = true;
  bool duality_regularizer = true;
  bool share_codec = true;
  bool share_attention = true;
  bool skip_projection = true;
  LossWeights weights;

  void validate() const;
  /// Weights actually applied: duality weights are zero with the regularizer off.
  LossWeights effective_weights() const;
};

class IqanModel {
 public:
  IqanModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }

  /// Every distinct Parameter once, in creation order.
  const std::vector<ParamPtr>& parameters() const noexcept { return params_; }
  ParamPtr find(const std::string& name) const;
  std::size_t fusion_sets() const { return vqa_fusion.W_q == vqg_fusion.W_q ? 1 : 2; }

  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

  FusionParams vqa_fusion;
  FusionParams vqg_fusion;
  AttentionParams vqa_attention;
  AttentionParams vqg_attention;
  AnswerTable classifier;        // VQA output side
  AnswerTable answer_embedding;  // VQG input side
  RecurrentParams encoder;
  RecurrentParams decoder;

 private:
  ModelConfig config_;
  std::vector<ParamPtr> params_;
};

struct ForwardResult {
  Var answer_scores;
  Var vqa_loss;
  Var vqg_loss;
  Var q_duality;
  Var a_duality;
  Var total;
};

/// Builds both directions and the weighted loss on `tape` for one example.
ForwardResult forward(Tape& tape, const IqanModel& model, const Matrix& cells, std::span<const int> question,
                      int answer);

/// Only the VQA direction, for examples without a question target.
Var answer_scores(Tape& tape, const IqanModel& model, const Matrix& cells, std::span<const int> question);
Vector answer_scores(const IqanModel& model, const Matrix& cells, std::span<const int> question);

/// Initial decoder state for an answer, W_q^T q~*.
Vector question_seed(const IqanModel& model, const Matrix& cells, int answer);
DecodeResult generate_question(const IqanModel& model, const Matrix& cells, int answer, std::size_t beam_width,
                               std::size_t max_len);

}  // namespace iqan
