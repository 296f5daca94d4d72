#pragma once

// Synthetic scenes of coloured objects on a small grid, templated "what"
// questions about one attribute of one object, and the JSONL record format.
//
// A cell vector is 16 wide: one-hots for size (2), material (2), shape (3)
// and color (8), followed by an occupancy bit. Occupied cells get uniform
// noise in [-sigma, sigma] on every coordinate, seeded by (seed, image_id,
// cell). Empty cells are zero.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "iqan/attention.hpp"
#include "iqan/fusion.hpp"

namespace iqan {

enum class QType { size, material, shape, color };

inline constexpr std::array<QType, 4> kQTypes{QType::size, QType::material, QType::shape, QType::color};
inline constexpr std::size_t kCellDim = 16;

const std::vector<std::string>& attribute_values(QType type);
std::string qtype_name(QType type);
QType parse_qtype(const std::string& name);

/// The 15 answer tokens in class-id order: sizes, materials, shapes, colors.
const std::vector<std::string>& answer_tokens();
int answer_id(const std::string& answer);
QType answer_category(int answer_id);

/// <pad> <start> <end> <unk>, the template words, then every attribute value.
const std::vector<std::string>& question_words();

struct SceneObject {
  int row = 0;
  int col = 0;
  int size = 0;
  int material = 0;
  int shape = 0;
  int color = 0;

  int attribute(QType type) const;
  bool operator==(const SceneObject&) const = default;
};

struct SceneSpec {
  std::vector<SceneObject> objects;
  bool operator==(const SceneSpec&) const = default;
};

struct QAExample {
  std::string image_id;
  SceneSpec scene;
  std::optional<std::vector<std::string>> question;  // absent for answer-only records
  std::string answer;
  QType qtype = QType::color;
  bool synthetic = false;
};

struct MicroworldConfig {
  std::size_t grid_height = 4;
  std::size_t grid_width = 4;
  std::size_t min_objects = 3;
  std::size_t max_objects = 6;
  double sigma = 0.1;

  void validate() const;
};

struct Dataset {
  std::vector<QAExample> train;
  std::vector<QAExample> val;
};

/// Deterministic in (config, seed). Question types cycle through a shuffled
/// block of four; scenes whose target is not uniquely described are redrawn;
/// no val scene equals a train scene.
Dataset generate_dataset(std::size_t n_train, std::size_t n_val, const MicroworldConfig& config, std::uint64_t seed);

FeatureGrid render_grid(const SceneSpec& scene, const std::string& image_id, const MicroworldConfig& config,
                        std::uint64_t seed);

/// Answers by exact attribute lookup; nullopt if the question does not parse
/// or does not pick out exactly one object.
std::optional<std::string> symbolic_answer(const SceneSpec& scene, const std::vector<std::string>& question);
/// The attribute a question asks about, read from its wording.
std::optional<QType> question_qtype(const std::vector<std::string>& question);

struct FilterRules {
  std::vector<std::string> prefixes;  // first token must be one of these; empty disables
  std::optional<std::size_t> top_k_answers;
};

/// Order-preserving. Top-K keeps the K most frequent answers (ties by the
/// answer string).
std::vector<QAExample> filter_examples(const std::vector<QAExample>& examples, const FilterRules& rules);

struct SplitSpec {
  double fraction_pairs = 1.0;
  std::uint64_t seed = 0;
};

struct AugmentationSplit {
  std::vector<QAExample> set1;  // question and answer
  std::vector<QAExample> set2;  // answer and scene only
};

/// |set1| = round(fraction * |train|); membership drawn from the seed, both
/// halves keep the input order.
AugmentationSplit split_for_augmentation(const std::vector<QAExample>& train, const SplitSpec& spec);

void write_jsonl(const std::filesystem::path& path, const std::vector<QAExample>& examples);
std::vector<QAExample> read_jsonl(const std::filesystem::path& path);
std::string to_json_line(const QAExample& example);
QAExample from_json_line(const std::string& line);

struct GenerationManifest {
  std::uint64_t seed = 0;
  MicroworldConfig config;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
};

std::vector<std::string> template_list();
void write_manifest(const std::filesystem::path& path, const GenerationManifest& manifest);
GenerationManifest read_manifest(const std::filesystem::path& path);

}  // namespace iqan
