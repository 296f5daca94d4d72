#pragma once

// Experiment configuration and its text form: flat key=value lines grouped
// under [fusion], [model], [train] and [data] headers. '#' starts a comment.
// Unknown sections or keys are errors.

#include <cstdint>
#include <string>

#include "iqan/microworld.hpp"
#include "iqan/model.hpp"

namespace iqan {

enum class Regime { baseline, dt, vqg_baseline, vqg_dt, vqg_dt_ft };

std::string regime_name(Regime regime);
Regime parse_regime(const std::string& name);

struct TrainConfig {
  ModelConfig model;
  MicroworldConfig world;
  std::size_t n_train = 2000;
  std::size_t n_val = 500;

  double lr = 0.01;
  std::size_t batch_size = 32;  // 512 at full scale
  std::size_t epochs = 40;
  std::uint64_t seed = 1;
  Regime regime = Regime::dt;
  double set1_fraction = 1.0;
  std::size_t beam_width = 3;
  std::size_t max_question_len = 16;
  std::size_t eval_threads = 1;
  double finetune_fraction = 0.2;

  void validate() const;
};

/// Flags the regime imposes: baseline variants train two independent models
/// without the duality terms; dual variants keep the configured flags.
ModelConfig regime_model(const ModelConfig& model, Regime regime);

/// Sets one value by its "section.key" name.
void set_config_value(TrainConfig& config, const std::string& dotted_key, const std::string& value);
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::string& path);
/// Every key with its effective value; parse_config(to_text(c)) == c.
std::string config_to_text(const TrainConfig& config);

}  // namespace iqan
