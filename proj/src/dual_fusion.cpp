#include "iqan/dual_fusion.hpp"

#include "iqan/errors.hpp"

namespace iqan {
namespace {

// Both directions go through here; only the mode-1 argument differs.
Vector infer_feature(const Vector& mode1_input, const Vector& v_proj, const DualFusion& fusion) {
  if (fusion.mode == DualMode::dense_symmetric) {
    return fuse_via_core(symmetrize_core(compose_core(fusion.params)), mode1_input, v_proj);
  }
  return lowrank_fuse(mode1_input, v_proj, fusion.params);
}

}  // namespace

Vector infer_answer_feature(const Vector& q_proj, const Vector& v_proj, const DualFusion& fusion) {
  return infer_feature(q_proj, v_proj, fusion);
}

Vector infer_question_feature(const Vector& a_proj, const Vector& v_proj, const DualFusion& fusion) {
  return infer_feature(a_proj, v_proj, fusion);
}

Tensor3 symmetrize_core(const Tensor3& core) {
  const auto [t1, tv, t3] = core.dims();
  if (t1 != t3) {
    throw ShapeError("symmetrize_core: slices are " + std::to_string(t1) + "x" + std::to_string(t3) +
                     ", not square");
  }
  Tensor3 out(core.dims());
  for (std::size_t j = 0; j < tv; ++j)
    for (std::size_t i = 0; i < t1; ++i)
      for (std::size_t k = 0; k < t3; ++k) out(i, j, k) = 0.5 * (core(i, j, k) + core(k, j, i));
  return out;
}

Vector skip_final_projection(const Vector& feature, const Matrix& projection, bool skip) {
  if (skip) return feature;
  return matvec_transposed(projection, feature);
}

Var skip_final_projection(Tape& tape, Var feature, const ParamPtr& projection, bool skip) {
  if (skip) return feature;
  return matmul_tn(tape.param(projection), feature);
}

}  // namespace iqan
