#pragma once

// MUTAN fusion: a Tucker-factored bilinear map from (question, visual)
// features to an answer feature. The trained form is the rank-R slice sum
//
//   a~ = sum_r (q~^T M_r) .* (v~^T N_r),   q~ = W_q q,  v~ = W_v v,
//
// and the dense core / full-tensor forms below exist to check it.
//
// Core axis order is (question, visual, answer): T_c[i, j, k] =
// sum_r M_r[i, k] N_r[j, k]. With that convention fuse_via_core and
// lowrank_fuse are the same function, and compose_full_tensor contracted
// against raw (q, v) equals W_a^T lowrank_fuse(project(q, v)).

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "iqan/autodiff.hpp"
#include "iqan/linalg.hpp"

namespace iqan {

enum class FusionBackend { mutan, mlb };

struct FusionConfig {
  std::size_t d_q = 24;
  std::size_t d_v = 16;
  std::size_t d_a = 24;
  std::size_t t = 20;    // shared projected dim for questions and answers
  std::size_t t_v = 24;  // projected visual dim
  std::size_t rank = 3;
  FusionBackend backend = FusionBackend::mutan;
  // tanh on q~ and v~ before fusion, as in some upstream MUTAN code. Off by default.
  bool tanh_inputs = false;

  void validate() const;
  /// Entries in the R slice pairs: R * t * (t + t_v).
  std::size_t slice_parameter_count() const { return rank * t * (t + t_v); }
};

struct FusionParams {
  FusionConfig config;
  ParamPtr W_q;             // t x d_q
  ParamPtr W_v;             // t_v x d_v
  ParamPtr W_a;             // t x d_a
  std::vector<ParamPtr> M;  // R of t x t     (empty for mlb)
  std::vector<ParamPtr> N;  // R of t_v x t   (empty for mlb)

  std::vector<ParamPtr> parameters() const;
};

using Rng = std::mt19937_64;

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
Matrix uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng);

FusionParams make_fusion_params(const FusionConfig& config, const std::string& prefix, Rng& rng);

// Value-level kernels.
std::pair<Vector, Vector> project(const Vector& q, const Vector& v, const FusionParams& params);
Vector lowrank_fuse(const Vector& q_proj, const Vector& v_proj, const FusionParams& params);
Tensor3 compose_core(const FusionParams& params);
Vector fuse_via_core(const Tensor3& core, const Vector& q_proj, const Vector& v_proj);
Tensor3 compose_full_tensor(const FusionParams& params);

// Differentiable counterparts used by the trained model.
Var project_question(Tape& tape, Var q, const FusionParams& params);
Var project_answer(Tape& tape, Var a, const FusionParams& params);
Var project_visual(Tape& tape, Var v, const FusionParams& params);
Var lowrank_fuse(Tape& tape, Var q_proj, Var v_proj, const FusionParams& params);

}  // namespace iqan
