#pragma once

// Finite-difference checks for every differentiable primitive and for the
// full training loss under each sharing/regularizer combination.

#include <cstdint>
#include <string>
#include <vector>

#include "iqan/model.hpp"

namespace iqan {

inline constexpr double kGradTolerance = 1e-5;

struct GradCheckCase {
  std::string name;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t coordinates = 0;
  bool passed = false;
};

/// Small model used for end-to-end checks: t = 3, R = 2.
ModelConfig gradcheck_model_config();

struct AblationRow {
  std::string name;
  bool dual_mutan;
  bool duality_regularizer;
  bool share_codec;
};

/// The five rows of the component ablation, baseline first.
const std::vector<AblationRow>& ablation_rows();
ModelConfig apply_row(ModelConfig config, const AblationRow& row);

std::vector<GradCheckCase> check_primitives(std::uint64_t seed);
GradCheckCase check_model(const ModelConfig& config, const std::string& name, std::uint64_t seed);
std::vector<GradCheckCase> run_gradient_suite(std::uint64_t seed);

}  // namespace iqan
