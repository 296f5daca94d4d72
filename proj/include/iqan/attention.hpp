#pragma once

// Single-glimpse soft attention over a feature grid. Each cell is scored by a
// rank-R bilinear form between the projected guide and the projected cell,
// i.e. a MUTAN fusion whose answer side has width one:
//
//   score_i = sum_r (g~^T m_r) (c~_i^T n_r),  g~ = W_g guide,  c~_i = W_c cell_i
//
// and the pooled vector is the softmax-weighted sum of the raw cells.

#include <string>
#include <vector>

#include "iqan/autodiff.hpp"
#include "iqan/fusion.hpp"
#include "iqan/linalg.hpp"

namespace iqan {

struct FeatureGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  Matrix cells;  // (height * width) x d_v, row-major over the grid

  std::size_t dim() const { return cells.cols(); }
  std::size_t count() const { return cells.rows(); }
  Vector cell(std::size_t r, std::size_t c) const;
};

struct AttentionConfig {
  std::size_t d_guide = 24;
  std::size_t d_v = 16;
  std::size_t t = 16;
  std::size_t t_v = 16;
  std::size_t rank = 8;
};

struct AttentionParams {
  AttentionConfig config;
  ParamPtr W_g;             // t x d_guide
  ParamPtr W_c;             // t_v x d_v
  std::vector<ParamPtr> m;  // R of t x 1
  std::vector<ParamPtr> n;  // R of t_v x 1

  std::vector<ParamPtr> parameters() const;
};

AttentionParams make_attention_params(const AttentionConfig& config, const std::string& prefix, Rng& rng);

struct AttentionResult {
  Vector scores;
  Vector weights;
  Vector pooled;
};

AttentionResult attend(const FeatureGrid& grid, const Vector& guide, const AttentionParams& params);
/// Pools softmax(scores) over the grid; exposed so the pooling can be checked
/// independently of the scoring.
AttentionResult pool_with_scores(const FeatureGrid& grid, const Vector& scores);

Var attend(Tape& tape, Var cells, Var guide, const AttentionParams& params);

}  // namespace iqan
