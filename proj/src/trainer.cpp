#include "iqan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "iqan/errors.hpp"

namespace iqan {

AdamState make_adam_state(std::span<const ParamPtr> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p->value.rows(), p->value.cols());
    s.v.emplace_back(p->value.rows(), p->value.cols());
  }
  return s;
}

void adam_step(std::span<const ParamPtr> params, AdamState& s, double lr) {
  if (s.m.size() != params.size() || s.v.size() != params.size()) {
    throw ShapeError("adam state holds " + std::to_string(s.m.size()) + " moments for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (!p.grad.same_shape(p.value) || !s.m[i].same_shape(p.value)) throw ShapeError("adam: shape mismatch for " + p.name);
    for (std::size_t k = 0; k < p.grad.size(); ++k) {
      if (!std::isfinite(p.grad[k])) {
        throw NumericError("non-finite gradient in " + p.name + " at index " + std::to_string(k));
      }
    }
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Matrix& m = s.m[i];
    Matrix& v = s.v[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = s.beta1 * m[k] + (1.0 - s.beta1) * g;
      v[k] = s.beta2 * v[k] + (1.0 - s.beta2) * g * g;
      p.value[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + s.eps);
    }
  }
}

Vocabulary question_vocabulary() { return Vocabulary(question_words()); }

std::vector<PreparedExample> prepare_examples(const std::vector<QAExample>& examples, const MicroworldConfig& world,
                                              std::uint64_t data_seed, const Vocabulary& vocab) {
  std::vector<PreparedExample> out;
  out.reserve(examples.size());
  for (const auto& e : examples) {
    PreparedExample p;
    p.image_id = e.image_id;
    p.cells = render_grid(e.scene, e.image_id, world, data_seed).cells;
    if (e.question)
      for (const auto& w : *e.question) p.question.push_back(vocab.id(w));
    p.answer = answer_id(e.answer);
    p.qtype = e.qtype;
    out.push_back(std::move(p));
  }
  return out;
}

std::string metrics_json_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["phase"] = r.phase;
  j["split"] = r.split;
  j["acc1"] = r.report.acc_at_1;
  j["acc5"] = r.report.acc_at_5;
  j["bleu"] = r.has_bleu ? nlohmann::ordered_json(r.report.bleu) : nlohmann::ordered_json(nullptr);
  j["vqa_loss"] = r.losses.vqa_loss;
  j["vqg_loss"] = r.losses.vqg_loss;
  j["q_duality"] = r.losses.q_duality;
  j["a_duality"] = r.losses.a_duality;
  j["total"] = r.total;
  return j.dump();
}

namespace {

struct ExampleScore {
  double acc1 = 0, acc5 = 0, bleu = 0;
  LossTerms losses;
  double total = 0;
};

void add_terms(LossTerms& acc, const LossTerms& x) {
  acc.vqa_loss += x.vqa_loss;
  acc.vqg_loss += x.vqg_loss;
  acc.q_duality += x.q_duality;
  acc.a_duality += x.a_duality;
}

LossTerms terms_of(const ForwardResult& r) {
  return {r.vqa_loss.scalar(), r.vqg_loss.scalar(), r.q_duality.scalar(), r.a_duality.scalar()};
}

void require_question(const PreparedExample& e) {
  if (e.question.empty()) throw ContractError("example " + e.image_id + " has no question");
}

}  // namespace

EvalOutcome evaluate(const IqanModel& model, const std::vector<PreparedExample>& examples, const EvalOptions& options) {
  if (examples.empty()) throw ContractError("evaluate: empty example set");
  for (const auto& e : examples) require_question(e);
  std::vector<ExampleScore> scores(examples.size());
  const std::size_t k5 = std::min<std::size_t>(5, model.config().num_answers);

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& e = examples[i];
      Tape tape(false);
      const ForwardResult r = forward(tape, model, e.cells, e.question, e.answer);
      const Vector s = r.answer_scores.value().to_vector();
      ExampleScore& out = scores[i];
      out.acc1 = acc_at_k(s, e.answer, 1);
      out.acc5 = acc_at_k(s, e.answer, k5);
      out.losses = terms_of(r);
      out.total = r.total.scalar();
      if (options.with_bleu) {
        const DecodeResult d = generate_question(model, e.cells, e.answer, options.beam_width, options.max_len);
        out.bleu = sentence_bleu(std::span<const int>(d.tokens), std::span<const int>(e.question));
      }
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(options.threads, 1, examples.size());
  if (threads == 1) {
    work(0, examples.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (examples.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(examples.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }

  // Summed in example order so the result does not depend on the thread count.
  EvalOutcome out;
  for (const auto& s : scores) {
    out.report.acc_at_1 += s.acc1;
    out.report.acc_at_5 += s.acc5;
    out.report.bleu += s.bleu;
    add_terms(out.losses, s.losses);
    out.total += s.total;
  }
  const double n = static_cast<double>(examples.size());
  out.report.acc_at_1 /= n;
  out.report.acc_at_5 /= n;
  out.report.bleu /= n;
  out.report.n_examples = examples.size();
  out.losses = {out.losses.vqa_loss / n, out.losses.vqg_loss / n, out.losses.q_duality / n, out.losses.a_duality / n};
  out.total /= n;
  return out;
}

TrainingState make_training_state(const IqanModel& model, std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream, 0x7a1u};
  return TrainingState{make_adam_state(model.parameters()), Rng(seq), 0};
}

TrainOutcome train(IqanModel& model, TrainingState& state, const TrainConfig& config,
                   const std::vector<PreparedExample>& train_set, const std::vector<PreparedExample>& val_set,
                   std::size_t epochs, const std::string& phase, const MetricsSink& sink) {
  if (train_set.empty()) throw ContractError("train: empty training set");
  if (val_set.empty()) throw ContractError("train: empty validation set");
  for (const auto& e : train_set) require_question(e);
  const auto& params = model.parameters();
  const EvalOptions eval_options{config.beam_width, config.max_question_len, config.eval_threads, true};
  const std::size_t k5 = std::min<std::size_t>(5, model.config().num_answers);

  TrainOutcome out;
  auto emit = [&](const EpochRecord& r) {
    out.history.push_back(r);
    if (sink) sink(r);
  };
  auto validate = [&]() {
    const EvalOutcome v = evaluate(model, val_set, eval_options);
    emit({state.epoch, phase, "val", v.report, true, v.losses, v.total});
    return v.report;
  };

  out.best = validate();
  out.best_epoch = state.epoch;
  std::vector<Matrix> best_params = model.snapshot();

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), state.rng);
    ++state.epoch;

    EpochRecord rec{state.epoch, phase, "train", {}, false, {}, 0.0};
    for (std::size_t start = 0, batch = 0; start < order.size(); start += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      zero_grads(params);
      for (std::size_t i = start; i < end; ++i) {
        const PreparedExample& ex = train_set[order[i]];
        Tape tape;
        const ForwardResult r = forward(tape, model, ex.cells, ex.question, ex.answer);
        if (!std::isfinite(r.total.scalar())) {
          throw NumericError("non-finite loss in epoch " + std::to_string(state.epoch) + " batch " +
                             std::to_string(batch) + " (example " + ex.image_id + ")");
        }
        tape.backward(r.total, 1.0 / static_cast<double>(end - start));
        add_terms(rec.losses, terms_of(r));
        rec.total += r.total.scalar();
        const Vector s = r.answer_scores.value().to_vector();
        rec.report.acc_at_1 += acc_at_k(s, ex.answer, 1);
        rec.report.acc_at_5 += acc_at_k(s, ex.answer, k5);
      }
      adam_step(params, state.adam, config.lr);
    }
    const double n = static_cast<double>(train_set.size());
    rec.losses = {rec.losses.vqa_loss / n, rec.losses.vqg_loss / n, rec.losses.q_duality / n, rec.losses.a_duality / n};
    rec.total /= n;
    rec.report.acc_at_1 /= n;
    rec.report.acc_at_5 /= n;
    rec.report.n_examples = train_set.size();
    emit(rec);

    const EvalReport v = validate();
    if (v.acc_at_1 > out.best.acc_at_1) {
      out.best = v;
      out.best_epoch = state.epoch;
      best_params = model.snapshot();
    }
  }
  model.restore(best_params);
  return out;
}

AugmentOutcome augment_with_vqg(const IqanModel& generator, const std::vector<QAExample>& set2,
                                const std::vector<PreparedExample>& set2_prepared, const Vocabulary& vocab,
                                std::size_t beam_width, std::size_t max_len) {
  if (set2.size() != set2_prepared.size()) throw ContractError("augment: record and prepared counts differ");
  AugmentOutcome out;
  for (std::size_t i = 0; i < set2.size(); ++i) {
    const DecodeResult d =
        generate_question(generator, set2_prepared[i].cells, set2_prepared[i].answer, beam_width, max_len);
    if (d.tokens.empty()) {
      ++out.dropped;
      continue;
    }
    QAExample e = set2[i];
    std::vector<std::string> words;
    for (int t : d.tokens) words.push_back(vocab.token(t));
    e.question = std::move(words);
    e.synthetic = true;
    out.examples.push_back(std::move(e));
  }
  return out;
}

namespace {

constexpr std::uint32_t kMainStream = 0;
constexpr std::uint32_t kPretrainStream = 1;
constexpr std::uint32_t kFinetuneStream = 2;

}  // namespace

RegimeOutcome run_regime(const TrainConfig& config, const RegimeData& data, const MetricsSink& sink) {
  config.validate();
  const Vocabulary vocab = question_vocabulary();
  const AugmentationSplit split = split_for_augmentation(data.train, {config.set1_fraction, config.seed});
  if (split.set1.empty()) throw ConfigError("set1 is empty; raise set1_fraction or n_train");
  const auto set1 = prepare_examples(split.set1, data.world, data.data_seed, vocab);
  const auto val = prepare_examples(data.val, data.world, data.data_seed, vocab);

  RegimeOutcome out;
  out.set1_size = set1.size();
  auto finish = [&](std::unique_ptr<IqanModel> model, TrainingState state, const TrainOutcome& t) {
    out.report = t.best;
    out.best_epoch = t.best_epoch;
    out.model = std::move(model);
    out.state = std::move(state);
  };
  auto keep = [&](const TrainOutcome& t) {
    out.history.insert(out.history.end(), t.history.begin(), t.history.end());
  };

  const ModelConfig dual = regime_model(config.model, Regime::dt);
  if (config.regime == Regime::baseline || config.regime == Regime::dt) {
    auto model = std::make_unique<IqanModel>(regime_model(config.model, config.regime), config.seed);
    TrainingState state = make_training_state(*model, config.seed, kMainStream);
    const TrainOutcome t = train(*model, state, config, set1, val, config.epochs, "main", sink);
    keep(t);
    finish(std::move(model), std::move(state), t);
    return out;
  }

  // The question generator is a dual-trained model on Set 1, the same run as
  // the dt regime.
  std::vector<QAExample> union_set = split.set1;
  if (!split.set2.empty()) {
    IqanModel generator(dual, config.seed);
    TrainingState gstate = make_training_state(generator, config.seed, kMainStream);
    keep(train(generator, gstate, config, set1, val, config.epochs, "generator", sink));
    const auto set2 = prepare_examples(split.set2, data.world, data.data_seed, vocab);
    AugmentOutcome aug =
        augment_with_vqg(generator, split.set2, set2, vocab, config.beam_width, config.max_question_len);
    out.synthetic = aug.examples.size();
    out.dropped = aug.dropped;
    union_set.insert(union_set.end(), aug.examples.begin(), aug.examples.end());
  }
  const auto union_prepared = prepare_examples(union_set, data.world, data.data_seed, vocab);

  auto model = std::make_unique<IqanModel>(regime_model(config.model, config.regime), config.seed);
  // With nothing to augment the pretrain run is exactly the dt run.
  TrainingState state =
      make_training_state(*model, config.seed, split.set2.empty() ? kMainStream : kPretrainStream);
  TrainOutcome t = train(*model, state, config, union_prepared, val, config.epochs, "pretrain", sink);
  keep(t);
  if (config.regime == Regime::vqg_dt_ft && config.finetune_fraction > 0.0) {
    const auto ft_epochs = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(config.finetune_fraction * static_cast<double>(config.epochs))));
    state = make_training_state(*model, config.seed, kFinetuneStream);
    t = train(*model, state, config, set1, val, ft_epochs, "finetune", sink);
    keep(t);
  }
  finish(std::move(model), std::move(state), t);
  return out;
}

}  // namespace iqan
