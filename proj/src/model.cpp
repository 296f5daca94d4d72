#include "iqan/model.hpp"

#include <random>
#include <unordered_set>

#include "iqan/dual_fusion.hpp"
#include "iqan/errors.hpp"

namespace iqan {

void ModelConfig::validate() const {
  fusion.validate();
  if (d_w == 0 || attention_dim == 0 || attention_rank == 0) throw ConfigError("model dims must be >= 1");
  if (num_answers < 1) throw ConfigError("need at least one answer class");
  if (vocab_size <= static_cast<std::size_t>(Vocabulary::kUnk)) throw ConfigError("vocabulary has no words");
  if (share_attention && fusion.d_q != fusion.d_a) {
    throw ConfigError("share_attention needs d_q == d_a (got " + std::to_string(fusion.d_q) + " and " +
                      std::to_string(fusion.d_a) + ")");
  }
  for (double w : {weights.vqa, weights.vqg, weights.q_duality, weights.a_duality}) {
    if (!(w >= 0.0)) throw ConfigError("loss weights must be >= 0");
  }
}

LossWeights ModelConfig::effective_weights() const {
  LossWeights w = weights;
  if (!duality_regularizer) w.q_duality = w.a_duality = 0.0;
  return w;
}

IqanModel::IqanModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x1a9u};
  Rng rng(seq);
  const auto& f = config_.fusion;

  encoder = make_recurrent_params(config_.vocab_size, config_.d_w, f.d_q, config_.share_codec ? "codec" : "vqa.codec",
                                  rng, false);
  if (config_.share_codec) {
    decoder = encoder;
    decoder.W_out = make_param("codec.W_out", uniform_init(config_.vocab_size, f.d_q, f.d_q, rng));
    decoder.b_out = make_param("codec.b_out", uniform_init(config_.vocab_size, 1, f.d_q, rng));
    classifier.E_a = make_param("answers.E_a", uniform_init(config_.num_answers, f.d_a, f.d_a, rng));
    answer_embedding = classifier;
  } else {
    decoder = make_recurrent_params(config_.vocab_size, config_.d_w, f.d_q, "vqg.codec", rng, true);
    classifier.E_a = make_param("vqa.classifier", uniform_init(config_.num_answers, f.d_a, f.d_a, rng));
    answer_embedding.E_a = make_param("vqg.answer_embedding", uniform_init(config_.num_answers, f.d_a, f.d_a, rng));
  }

  if (config_.dual_mutan) {
    vqa_fusion = make_fusion_params(f, "fusion", rng);
    vqg_fusion = vqa_fusion;
  } else {
    vqa_fusion = make_fusion_params(f, "vqa.fusion", rng);
    vqg_fusion = make_fusion_params(f, "vqg.fusion", rng);
  }

  AttentionConfig q_att{f.d_q, f.d_v, config_.attention_dim, config_.attention_dim, config_.attention_rank};
  AttentionConfig a_att{f.d_a, f.d_v, config_.attention_dim, config_.attention_dim, config_.attention_rank};
  if (config_.share_attention) {
    vqa_attention = make_attention_params(q_att, "attention", rng);
    vqg_attention = vqa_attention;
  } else {
    vqa_attention = make_attention_params(q_att, "vqa.attention", rng);
    vqg_attention = make_attention_params(a_att, "vqg.attention", rng);
  }

  std::unordered_set<const Parameter*> seen;
  auto collect = [&](const std::vector<ParamPtr>& ps) {
    for (const auto& p : ps)
      if (seen.insert(p.get()).second) params_.push_back(p);
  };
  collect(encoder.parameters());
  collect(decoder.parameters());
  collect({classifier.E_a, answer_embedding.E_a});
  collect(vqa_fusion.parameters());
  collect(vqg_fusion.parameters());
  collect(vqa_attention.parameters());
  collect(vqg_attention.parameters());

  std::unordered_set<std::string> names;
  for (const auto& p : params_)
    if (!names.insert(p->name).second) throw ContractError("duplicate parameter name " + p->name);
}

ParamPtr IqanModel::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p;
  return nullptr;
}

std::vector<Matrix> IqanModel::snapshot() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value);
  return out;
}

void IqanModel::restore(const std::vector<Matrix>& values) {
  if (values.size() != params_.size()) throw ContractError("snapshot has the wrong number of arrays");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i].same_shape(params_[i]->value)) throw ShapeError("snapshot shape mismatch for " + params_[i]->name);
    params_[i]->value = values[i];
  }
}

namespace {

struct VqaPath {
  Var q;       // encoded question
  Var a_star;  // inferred answer feature, projected space
  Var scores;
};

VqaPath run_vqa(Tape& tape, const IqanModel& m, Var cells, std::span<const int> question) {
  VqaPath out;
  out.q = encode_question(tape, question, m.encoder);
  Var v_q = attend(tape, cells, out.q, m.vqa_attention);
  Var q_proj = project_question(tape, out.q, m.vqa_fusion);
  Var v_proj = project_visual(tape, v_q, m.vqa_fusion);
  out.a_star = lowrank_fuse(tape, q_proj, v_proj, m.vqa_fusion);
  Var a_hat = skip_final_projection(tape, out.a_star, m.vqa_fusion.W_a, false);
  out.scores = classify_answer(tape, a_hat, m.classifier);
  return out;
}

struct VqgPath {
  Var a;       // answer embedding
  Var q_star;  // inferred question feature, projected space
  Var h0;      // decoder initial state
};

VqgPath run_vqg(Tape& tape, const IqanModel& m, Var cells, int answer) {
  VqgPath out;
  out.a = embed_answer(tape, answer, m.answer_embedding);
  Var v_a = attend(tape, cells, out.a, m.vqg_attention);
  Var a_proj = project_answer(tape, out.a, m.vqg_fusion);
  Var v_proj = project_visual(tape, v_a, m.vqg_fusion);
  out.q_star = lowrank_fuse(tape, a_proj, v_proj, m.vqg_fusion);
  out.h0 = skip_final_projection(tape, out.q_star, m.vqg_fusion.W_q, false);
  return out;
}

}  // namespace

ForwardResult forward(Tape& tape, const IqanModel& m, const Matrix& cells_value, std::span<const int> question,
                      int answer) {
  Var cells = tape.constant(cells_value);
  ForwardResult r;
  const VqaPath vqa = run_vqa(tape, m, cells, question);
  const VqgPath vqg = run_vqg(tape, m, cells, answer);
  r.answer_scores = vqa.scores;
  r.vqa_loss = softmax_cross_entropy(vqa.scores, answer);

  std::vector<int> targets(question.begin(), question.end());
  targets.push_back(Vocabulary::kEnd);
  const auto step_scores = teacher_forced_scores(tape, m.decoder, vqg.h0, question);
  r.vqg_loss = sequence_nll(step_scores, targets);

  if (m.config().skip_projection) {
    r.q_duality = smooth_l1(sub(vqg.q_star, project_question(tape, vqa.q, m.vqg_fusion)));
    r.a_duality = smooth_l1(sub(vqa.a_star, project_answer(tape, vqg.a, m.vqa_fusion)));
  } else {
    r.q_duality = smooth_l1(sub(vqg.h0, vqa.q));
    r.a_duality = smooth_l1(sub(skip_final_projection(tape, vqa.a_star, m.vqa_fusion.W_a, false), vqg.a));
  }

  const LossWeights w = m.config().effective_weights();
  r.total = add(add(scale(r.vqa_loss, w.vqa), scale(r.vqg_loss, w.vqg)),
                add(scale(r.q_duality, w.q_duality), scale(r.a_duality, w.a_duality)));
  return r;
}

Var answer_scores(Tape& tape, const IqanModel& model, const Matrix& cells, std::span<const int> question) {
  return run_vqa(tape, model, tape.constant(cells), question).scores;
}

Vector answer_scores(const IqanModel& model, const Matrix& cells, std::span<const int> question) {
  Tape tape(false);
  return answer_scores(tape, model, cells, question).value().to_vector();
}

Vector question_seed(const IqanModel& model, const Matrix& cells, int answer) {
  Tape tape(false);
  return run_vqg(tape, model, tape.constant(cells), answer).h0.value().to_vector();
}

DecodeResult generate_question(const IqanModel& model, const Matrix& cells, int answer, std::size_t beam_width,
                               std::size_t max_len) {
  return decode_question_beam(question_seed(model, cells, answer), model.decoder, beam_width, max_len);
}

}  // namespace iqan
