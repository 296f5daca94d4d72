#include "iqan/gradcheck.hpp"

#include <random>

#include "iqan/attention.hpp"
#include "iqan/dual_fusion.hpp"
#include "iqan/fusion.hpp"
#include "iqan/objectives.hpp"
#include "iqan/text_codec.hpp"

namespace iqan {
namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (double& x : m.values()) x = u(rng);
  return m;
}

// Reduces any node to a scalar with fixed random weights so every output
// coordinate gets a distinct upstream gradient.
Var probe(Tape& tape, Var out, const Matrix& weights) { return sum(mul(out, tape.constant(weights))); }

GradCheckCase finish(std::string name, const GradCheckResult& r) {
  return {std::move(name), r.max_rel_error, r.worst_param, r.coordinates, r.max_rel_error < kGradTolerance};
}

}  // namespace

ModelConfig gradcheck_model_config() {
  ModelConfig c;
  c.fusion.d_q = 4;
  c.fusion.d_a = 4;
  c.fusion.d_v = 16;
  c.fusion.t = 3;
  c.fusion.t_v = 3;
  c.fusion.rank = 2;
  c.d_w = 3;
  c.attention_dim = 3;
  c.attention_rank = 2;
  return c;
}

const std::vector<AblationRow>& ablation_rows() {
  static const std::vector<AblationRow> rows = {
      {"row1_separate", false, false, false},
      {"row2_dual_mutan", true, false, false},
      {"row3_dual_mutan_sharing", true, false, true},
      {"row4_dual_mutan_regularizer", true, true, false},
      {"row5_full", true, true, true},
  };
  return rows;
}

ModelConfig apply_row(ModelConfig c, const AblationRow& row) {
  c.dual_mutan = row.dual_mutan;
  c.duality_regularizer = row.duality_regularizer;
  c.share_codec = row.share_codec;
  c.share_attention = row.dual_mutan;
  return c;
}

std::vector<GradCheckCase> check_primitives(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), 0x9c4u};
  Rng rng(seq);
  std::vector<GradCheckCase> out;

  auto a = make_param("a", random_matrix(3, 4, rng));
  auto b = make_param("b", random_matrix(4, 2, rng));
  auto c = make_param("c", random_matrix(3, 2, rng));
  auto d = make_param("d", random_matrix(3, 2, rng));
  auto s = make_param("s", random_matrix(1, 1, rng));
  auto col = make_param("col", random_matrix(5, 1, rng));
  const Matrix w32 = random_matrix(3, 2, rng);
  const Matrix w42 = random_matrix(4, 2, rng);
  const Matrix w33 = random_matrix(3, 3, rng);
  const Matrix w41 = random_matrix(4, 1, rng);
  const Matrix w51 = random_matrix(5, 1, rng);

  auto run = [&](const std::string& name, std::vector<ParamPtr> ps, std::function<Var(Tape&)> f) {
    out.push_back(finish(name, finite_difference_check(f, ps)));
  };

  run("matmul", {a, b}, [&](Tape& t) { return probe(t, matmul(t.param(a), t.param(b)), w32); });
  run("matmul_tn", {a, c}, [&](Tape& t) { return probe(t, matmul_tn(t.param(a), t.param(c)), w42); });
  run("matmul_nt", {c, d}, [&](Tape& t) { return probe(t, matmul_nt(t.param(c), t.param(d)), w33); });
  run("add", {c, d}, [&](Tape& t) { return probe(t, add(t.param(c), t.param(d)), w32); });
  run("sub", {c, d}, [&](Tape& t) { return probe(t, sub(t.param(c), t.param(d)), w32); });
  run("mul", {c, d}, [&](Tape& t) { return probe(t, mul(t.param(c), t.param(d)), w32); });
  run("scale", {c}, [&](Tape& t) { return probe(t, scale(t.param(c), -1.7), w32); });
  run("scale_by", {s, c}, [&](Tape& t) { return probe(t, scale_by(t.param(s), t.param(c)), w32); });
  run("tanh", {c}, [&](Tape& t) { return probe(t, tanh(t.param(c)), w32); });
  run("sigmoid", {c}, [&](Tape& t) { return probe(t, sigmoid(t.param(c)), w32); });
  run("row", {a}, [&](Tape& t) { return probe(t, row(t.param(a), 1), w41); });
  run("softmax", {col}, [&](Tape& t) { return probe(t, softmax(t.param(col)), w51); });
  run("sum", {a}, [&](Tape& t) { return scale(sum(t.param(a)), 0.3); });
  run("shared_use", {c}, [&](Tape& t) { return probe(t, mul(t.param(c), t.param(c)), w32); });

  // Away from the |x| = 1 knots by construction.
  auto knots = make_param("x", Matrix(6, 1, std::vector<double>{-2.5, -0.7, -0.2, 0.3, 0.8, 1.9}));
  run("smooth_l1", {knots}, [&](Tape& t) { return smooth_l1(t.param(knots)); });
  run("softmax_cross_entropy", {col}, [&](Tape& t) { return softmax_cross_entropy(t.param(col), 2); });
  auto steps = make_param("steps", random_matrix(3, 5, rng, -2.0, 2.0));  // one row of scores per step
  run("sequence_nll", {steps}, [&](Tape& t) {
    std::vector<Var> per_step;
    for (std::size_t i = 0; i < 3; ++i) per_step.push_back(row(t.param(steps), i));
    const std::vector<int> targets{4, 0, 2};
    return sequence_nll(per_step, targets);
  });

  GruCell cell = make_gru_cell(3, 4, "gru", rng);
  auto x = make_param("x", random_matrix(3, 1, rng));
  auto h = make_param("h", random_matrix(4, 1, rng));
  std::vector<ParamPtr> gru_params = cell.parameters();
  gru_params.push_back(x);
  gru_params.push_back(h);
  run("gru_step", gru_params, [&](Tape& t) { return probe(t, gru_step(t, cell, t.param(x), t.param(h)), w41); });

  FusionConfig fc{4, 5, 3, 3, 2, 2, FusionBackend::mutan, false};
  FusionParams fp = make_fusion_params(fc, "fusion", rng);
  auto q = make_param("q", random_matrix(4, 1, rng));
  auto v = make_param("v", random_matrix(5, 1, rng));
  auto av = make_param("a", random_matrix(3, 1, rng));
  std::vector<ParamPtr> fusion_params = fp.parameters();
  fusion_params.insert(fusion_params.end(), {q, v});
  const Matrix w31 = random_matrix(3, 1, rng);
  run("lowrank_fuse", fusion_params, [&](Tape& t) {
    return probe(t, lowrank_fuse(t, project_question(t, t.param(q), fp), project_visual(t, t.param(v), fp), fp), w31);
  });
  fusion_params.push_back(av);
  run("dual_direction", fusion_params, [&](Tape& t) {
    Var vp = project_visual(t, t.param(v), fp);
    Var fwd = lowrank_fuse(t, project_question(t, t.param(q), fp), vp, fp);
    Var back = lowrank_fuse(t, project_answer(t, t.param(av), fp), vp, fp);
    return add(probe(t, fwd, w31), probe(t, back, w31));
  });
  FusionConfig tanh_cfg = fc;
  tanh_cfg.tanh_inputs = true;
  FusionParams tp = make_fusion_params(tanh_cfg, "tanh_fusion", rng);
  std::vector<ParamPtr> tanh_params = tp.parameters();
  tanh_params.insert(tanh_params.end(), {q, v});
  run("lowrank_fuse_tanh", tanh_params, [&](Tape& t) {
    return probe(t, lowrank_fuse(t, project_question(t, t.param(q), tp), project_visual(t, t.param(v), tp), tp), w31);
  });
  FusionConfig mlb_cfg{4, 5, 3, 3, 3, 1, FusionBackend::mlb, false};
  FusionParams mp = make_fusion_params(mlb_cfg, "mlb", rng);
  std::vector<ParamPtr> mlb_params = mp.parameters();
  mlb_params.insert(mlb_params.end(), {q, v});
  run("lowrank_fuse_mlb", mlb_params, [&](Tape& t) {
    return probe(t, lowrank_fuse(t, project_question(t, t.param(q), mp), project_visual(t, t.param(v), mp), mp), w31);
  });
  auto lift = make_param("W", random_matrix(3, 4, rng));
  auto feat = make_param("f", random_matrix(3, 1, rng));
  run("skip_final_projection", {lift, feat},
      [&](Tape& t) { return probe(t, skip_final_projection(t, t.param(feat), lift, false), w41); });

  AttentionParams ap = make_attention_params({4, 5, 3, 3, 2}, "attention", rng);
  auto grid = make_param("grid", random_matrix(6, 5, rng));
  std::vector<ParamPtr> att_params = ap.parameters();
  att_params.insert(att_params.end(), {grid, q});
  run("attend", att_params, [&](Tape& t) { return probe(t, attend(t, t.param(grid), t.param(q), ap), w51); });

  RecurrentParams rp = make_recurrent_params(7, 3, 4, "codec", rng, true);
  const std::vector<int> tokens{4, 6, 5};
  run("encode_question", rp.parameters(), [&](Tape& t) { return probe(t, encode_question(t, tokens, rp), w41); });
  auto h0 = make_param("h0", random_matrix(4, 1, rng));
  std::vector<ParamPtr> dec_params = rp.parameters();
  dec_params.push_back(h0);
  run("teacher_forced_decoder", dec_params, [&](Tape& t) {
    const auto scores = teacher_forced_scores(t, rp, t.param(h0), tokens);
    const std::vector<int> targets{4, 6, 5, Vocabulary::kEnd};
    return sequence_nll(scores, targets);
  });

  return out;
}

GradCheckCase check_model(const ModelConfig& config, const std::string& name, std::uint64_t seed) {
  IqanModel model(config, seed);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), 0xe2eu};
  Rng rng(seq);
  const Matrix cells = random_matrix(16, config.fusion.d_v, rng, 0.0, 1.0);
  const std::vector<int> question{4, 8, 5, 6, 13, 15};
  const int answer = 3;
  const GradCheckResult r = finite_difference_check(
      [&](Tape& t) { return forward(t, model, cells, question, answer).total; }, model.parameters());
  return finish(name, r);
}

std::vector<GradCheckCase> run_gradient_suite(std::uint64_t seed) {
  std::vector<GradCheckCase> out = check_primitives(seed);
  const ModelConfig base = gradcheck_model_config();
  for (const auto& row : ablation_rows()) out.push_back(check_model(apply_row(base, row), "loss_" + row.name, seed));
  ModelConfig no_skip = apply_row(base, ablation_rows().back());
  no_skip.skip_projection = false;
  out.push_back(check_model(no_skip, "loss_full_without_skip", seed));
  ModelConfig mlb = apply_row(base, ablation_rows().back());
  mlb.fusion.backend = FusionBackend::mlb;
  mlb.fusion.t_v = mlb.fusion.t;
  out.push_back(check_model(mlb, "loss_full_mlb", seed));
  return out;
}

}  // namespace iqan
