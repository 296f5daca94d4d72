#include "iqan/fusion.hpp"

#include <cmath>

#include "iqan/errors.hpp"

namespace iqan {

void FusionConfig::validate() const {
  if (d_q == 0 || d_v == 0 || d_a == 0 || t == 0 || t_v == 0) throw ConfigError("fusion dims must be >= 1");
  if (rank == 0) throw ConfigError("fusion rank must be >= 1");
  if (backend == FusionBackend::mlb && t != t_v) {
    throw ConfigError("mlb backend needs t == t_v (identity core), got t=" + std::to_string(t) +
                      " t_v=" + std::to_string(t_v));
  }
}

std::vector<ParamPtr> FusionParams::parameters() const {
  std::vector<ParamPtr> out{W_q, W_v, W_a};
  for (std::size_t r = 0; r < M.size(); ++r) {
    out.push_back(M[r]);
    out.push_back(N[r]);
  }
  return out;
}

Matrix uniform_init(std::size_t rows, std::size_t cols, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (double& x : m.values()) x = dist(rng);
  return m;
}

FusionParams make_fusion_params(const FusionConfig& config, const std::string& prefix, Rng& rng) {
  config.validate();
  FusionParams p;
  p.config = config;
  p.W_q = make_param(prefix + ".W_q", uniform_init(config.t, config.d_q, config.d_q, rng));
  p.W_v = make_param(prefix + ".W_v", uniform_init(config.t_v, config.d_v, config.d_v, rng));
  p.W_a = make_param(prefix + ".W_a", uniform_init(config.t, config.d_a, config.d_a, rng));
  if (config.backend == FusionBackend::mutan) {
    for (std::size_t r = 0; r < config.rank; ++r) {
      p.M.push_back(make_param(prefix + ".M." + std::to_string(r), uniform_init(config.t, config.t, config.t, rng)));
      p.N.push_back(
          make_param(prefix + ".N." + std::to_string(r), uniform_init(config.t_v, config.t, config.t_v, rng)));
    }
  }
  return p;
}

namespace {

Vector maybe_tanh(Vector x, bool on) {
  if (on)
    for (double& v : x.values()) v = std::tanh(v);
  return x;
}

Var maybe_tanh(Var x, bool on) { return on ? tanh(x) : x; }

}  // namespace

std::pair<Vector, Vector> project(const Vector& q, const Vector& v, const FusionParams& params) {
  const bool th = params.config.tanh_inputs;
  return {maybe_tanh(matvec(params.W_q->value, q), th), maybe_tanh(matvec(params.W_v->value, v), th)};
}

Vector lowrank_fuse(const Vector& q_proj, const Vector& v_proj, const FusionParams& params) {
  const FusionConfig& c = params.config;
  if (q_proj.size() != c.t || v_proj.size() != c.t_v) {
    throw ShapeError("lowrank_fuse: expected inputs of length " + std::to_string(c.t) + " and " +
                     std::to_string(c.t_v) + ", got " + std::to_string(q_proj.size()) + " and " +
                     std::to_string(v_proj.size()));
  }
  if (c.backend == FusionBackend::mlb) return elementwise_product(q_proj, v_proj);
  Vector out(c.t);
  for (std::size_t r = 0; r < params.M.size(); ++r) {
    out = out + elementwise_product(matvec_transposed(params.M[r]->value, q_proj),
                                    matvec_transposed(params.N[r]->value, v_proj));
  }
  return out;
}

Tensor3 compose_core(const FusionParams& params) {
  const FusionConfig& c = params.config;
  Tensor3 core({c.t, c.t_v, c.t});
  if (c.backend == FusionBackend::mlb) {
    for (std::size_t i = 0; i < c.t; ++i) core(i, i, i) = 1.0;
    return core;
  }
  if (params.M.empty()) throw ContractError("compose_core: no slices");
  for (std::size_t r = 0; r < params.M.size(); ++r) {
    const Matrix& m = params.M[r]->value;
    const Matrix& n = params.N[r]->value;
    for (std::size_t i = 0; i < c.t; ++i)
      for (std::size_t j = 0; j < c.t_v; ++j)
        for (std::size_t k = 0; k < c.t; ++k) core(i, j, k) += m(i, k) * n(j, k);
  }
  return core;
}

Vector fuse_via_core(const Tensor3& core, const Vector& q_proj, const Vector& v_proj) {
  const auto& d = core.dims();
  if (q_proj.size() != d[0] || v_proj.size() != d[1]) throw ShapeError("fuse_via_core: input lengths do not match core");
  // (T_c x_1 q~) x_2 v~ with the vectors taken as single-column factors.
  const Tensor3 reduced = mode_product(mode_product(core, Matrix::column(q_proj), 1), Matrix::column(v_proj), 2);
  Vector out(d[2]);
  for (std::size_t k = 0; k < d[2]; ++k) out[k] = reduced(0, 0, k);
  return out;
}

Tensor3 compose_full_tensor(const FusionParams& params) {
  if (params.config.tanh_inputs) throw ContractError("compose_full_tensor: undefined with tanh_inputs (not bilinear)");
  const Tensor3 core = compose_core(params);
  return mode_product(mode_product(mode_product(core, params.W_q->value, 1), params.W_v->value, 2), params.W_a->value,
                      3);
}

Var project_question(Tape& tape, Var q, const FusionParams& params) {
  return maybe_tanh(matmul(tape.param(params.W_q), q), params.config.tanh_inputs);
}

Var project_answer(Tape& tape, Var a, const FusionParams& params) {
  return maybe_tanh(matmul(tape.param(params.W_a), a), params.config.tanh_inputs);
}

Var project_visual(Tape& tape, Var v, const FusionParams& params) {
  return maybe_tanh(matmul(tape.param(params.W_v), v), params.config.tanh_inputs);
}

Var lowrank_fuse(Tape& tape, Var q_proj, Var v_proj, const FusionParams& params) {
  const FusionConfig& c = params.config;
  if (q_proj.rows() != c.t || v_proj.rows() != c.t_v) throw ShapeError("lowrank_fuse: input lengths do not match");
  if (c.backend == FusionBackend::mlb) return mul(q_proj, v_proj);
  Var out;
  for (std::size_t r = 0; r < params.M.size(); ++r) {
    Var term = mul(matmul_tn(tape.param(params.M[r]), q_proj), matmul_tn(tape.param(params.N[r]), v_proj));
    out = r == 0 ? term : add(out, term);
  }
  return out;
}

}  // namespace iqan
