#pragma once

// Checkpoint file layout:
//
//   iqan-checkpoint 1\n
//   manifest <byte count>\n
//   <manifest text>
//   <payload: raw little-endian doubles>
//
// The manifest is the config text ([fusion] ... [data]) followed by a
// [state] section (epoch, adam_step, rng) and an [arrays] section with one
// "name rows cols offset" line per array. Offsets are in bytes from the start
// of the payload. Arrays are the model parameters followed by the Adam
// moments, named adam.m/<param> and adam.v/<param>.

#include <filesystem>
#include <memory>

#include "iqan/config.hpp"
#include "iqan/model.hpp"
#include "iqan/trainer.hpp"

namespace iqan {

inline constexpr int kCheckpointVersion = 1;

/// The config is stored with its model section replaced by model.config().
void save_checkpoint(const std::filesystem::path& path, const TrainConfig& config, const IqanModel& model,
                     const TrainingState& state);

struct LoadedCheckpoint {
  TrainConfig config;
  std::unique_ptr<IqanModel> model;
  TrainingState state;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace iqan
