#pragma once

// Adam, the epoch loop with per-epoch validation and best-epoch selection,
// VQG-driven augmentation, and the five experiment regimes.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "iqan/config.hpp"
#include "iqan/metrics.hpp"
#include "iqan/microworld.hpp"
#include "iqan/model.hpp"

namespace iqan {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

AdamState make_adam_state(std::span<const ParamPtr> params);
/// Bias-corrected Adam on Parameter::grad, in place. Throws NumericError
/// naming the parameter if any gradient entry is not finite.
void adam_step(std::span<const ParamPtr> params, AdamState& state, double lr);

/// An example ready for the model: grid rendered, words mapped to ids.
struct PreparedExample {
  std::string image_id;
  Matrix cells;
  std::vector<int> question;  // empty for answer-only records
  int answer = 0;
  QType qtype = QType::color;
};

Vocabulary question_vocabulary();
std::vector<PreparedExample> prepare_examples(const std::vector<QAExample>& examples, const MicroworldConfig& world,
                                              std::uint64_t data_seed, const Vocabulary& vocab);

struct EpochRecord {
  std::size_t epoch = 0;
  std::string phase;  // which model of the regime this row belongs to
  std::string split;  // "train" or "val"
  EvalReport report;
  bool has_bleu = true;
  LossTerms losses;
  double total = 0.0;
};

/// One JSON object per line: epoch, phase, split, acc1, acc5, bleu (null when
/// not measured), vqa_loss, vqg_loss, q_duality, a_duality, total.
std::string metrics_json_line(const EpochRecord& record);

using MetricsSink = std::function<void(const EpochRecord&)>;

struct EvalOutcome {
  EvalReport report;
  LossTerms losses;
  double total = 0.0;
};

struct EvalOptions {
  std::size_t beam_width = 3;
  std::size_t max_len = 16;
  std::size_t threads = 1;
  bool with_bleu = true;
};

EvalOutcome evaluate(const IqanModel& model, const std::vector<PreparedExample>& examples, const EvalOptions& options);

struct TrainingState {
  AdamState adam;
  Rng rng;
  std::size_t epoch = 0;
};

/// Fresh optimizer moments and a shuffle generator drawn from (seed, stream).
TrainingState make_training_state(const IqanModel& model, std::uint64_t seed, std::uint32_t stream);

struct TrainOutcome {
  std::size_t best_epoch = 0;
  EvalReport best;
  std::vector<EpochRecord> history;
};

/// Runs `epochs` epochs from the current state. Epoch 0 (before any update)
/// is evaluated too. The model is left holding the parameters of the epoch
/// with the best validation Acc@1, earliest on ties.
TrainOutcome train(IqanModel& model, TrainingState& state, const TrainConfig& config,
                   const std::vector<PreparedExample>& train_set, const std::vector<PreparedExample>& val_set,
                   std::size_t epochs, const std::string& phase, const MetricsSink& sink = {});

struct AugmentOutcome {
  std::vector<QAExample> examples;  // marked synthetic
  std::size_t dropped = 0;          // empty decodes
};

AugmentOutcome augment_with_vqg(const IqanModel& generator, const std::vector<QAExample>& set2,
                                const std::vector<PreparedExample>& set2_prepared, const Vocabulary& vocab,
                                std::size_t beam_width, std::size_t max_len);

struct RegimeData {
  std::vector<QAExample> train;
  std::vector<QAExample> val;
  MicroworldConfig world;
  std::uint64_t data_seed = 0;
};

struct RegimeOutcome {
  EvalReport report;  // best validation report of the final model
  std::size_t best_epoch = 0;
  std::unique_ptr<IqanModel> model;
  std::optional<TrainingState> state;
  std::vector<EpochRecord> history;
  std::size_t set1_size = 0;
  std::size_t synthetic = 0;
  std::size_t dropped = 0;
};

RegimeOutcome run_regime(const TrainConfig& config, const RegimeData& data, const MetricsSink& sink = {});

}  // namespace iqan
