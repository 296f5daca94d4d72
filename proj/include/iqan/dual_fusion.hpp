#pragma once

// Dual MUTAN: one FusionParams serving both directions. The answer feature is
// inferred from (q~, v~) and the question feature from (a~, v~) by swapping
// the mode-1 input of the same kernel; nothing else differs.

#include "iqan/fusion.hpp"

namespace iqan {

enum class DualMode {
  lowrank_shared,   // shared M_r, N_r with swapped mode-1 input (what is trained)
  dense_symmetric,  // dense core with every visual slice symmetrised; test oracle only
};

struct DualFusion {
  FusionParams params;
  DualMode mode = DualMode::lowrank_shared;
};

Vector infer_answer_feature(const Vector& q_proj, const Vector& v_proj, const DualFusion& fusion);
Vector infer_question_feature(const Vector& a_proj, const Vector& v_proj, const DualFusion& fusion);

/// Replaces every T[:, i, :] by (S + S^T) / 2. Needs dims (t, t_v, t).
Tensor3 symmetrize_core(const Tensor3& core);

/// With skip set the tilde feature is passed through unchanged; otherwise it is
/// lifted back by the shared projection, feature^T W (W is t x d).
Vector skip_final_projection(const Vector& feature, const Matrix& projection, bool skip);
Var skip_final_projection(Tape& tape, Var feature, const ParamPtr& projection, bool skip);

}  // namespace iqan
