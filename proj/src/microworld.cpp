#include "iqan/microworld.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "iqan/errors.hpp"
#include "iqan/text_codec.hpp"

namespace iqan {

using nlohmann::json;

namespace {

const std::vector<std::string> kSizes{"small", "large"};
const std::vector<std::string> kMaterials{"rubber", "metal"};
const std::vector<std::string> kShapes{"cube", "sphere", "cylinder"};
const std::vector<std::string> kColors{"gray", "red", "blue", "green", "brown", "purple", "cyan", "yellow"};

// Offsets of each one-hot block inside a cell vector.
constexpr std::size_t kSizeOffset = 0;
constexpr std::size_t kMaterialOffset = 2;
constexpr std::size_t kShapeOffset = 4;
constexpr std::size_t kColorOffset = 7;
constexpr std::size_t kOccupancy = 15;

int index_of(const std::vector<std::string>& values, const std::string& v) {
  auto it = std::find(values.begin(), values.end(), v);
  return it == values.end() ? -1 : static_cast<int>(it - values.begin());
}

// The attributes that describe the target of a question about `asked`, in
// the order they are spoken. Shape is a noun and always comes last.
std::vector<QType> described_attributes(QType asked) {
  switch (asked) {
    case QType::color: return {QType::size, QType::material, QType::shape};
    case QType::size: return {QType::color, QType::material, QType::shape};
    case QType::material: return {QType::size, QType::color, QType::shape};
    case QType::shape: return {QType::size, QType::color, QType::material};
  }
  return {};
}

std::vector<std::string> make_question(const SceneObject& target, QType asked, int form) {
  std::vector<std::string> q;
  const std::string name = qtype_name(asked);
  if (form == 0) {
    q = {"what", name, "is", "the"};
  } else {
    q = {"what", "is", "the", name, "of", "the"};
  }
  for (QType d : described_attributes(asked)) q.push_back(attribute_values(d)[static_cast<std::size_t>(target.attribute(d))]);
  if (asked == QType::shape) q.push_back("object");
  return q;
}

std::string scene_key(const SceneSpec& scene) {
  std::vector<std::array<int, 6>> objs;
  for (const auto& o : scene.objects) objs.push_back({o.row, o.col, o.size, o.material, o.shape, o.color});
  std::sort(objs.begin(), objs.end());
  std::string key;
  for (const auto& o : objs)
    for (int v : o) key += std::to_string(v) + ",";
  return key;
}

bool uniquely_described(const SceneSpec& scene, std::size_t target, QType asked) {
  const auto attrs = described_attributes(asked);
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (i == target) continue;
    bool same = true;
    for (QType a : attrs) same = same && scene.objects[i].attribute(a) == scene.objects[target].attribute(a);
    if (same) return false;
  }
  return true;
}

}  // namespace

const std::vector<std::string>& attribute_values(QType type) {
  switch (type) {
    case QType::size: return kSizes;
    case QType::material: return kMaterials;
    case QType::shape: return kShapes;
    case QType::color: return kColors;
  }
  throw ContractError("unknown qtype");
}

std::string qtype_name(QType type) {
  switch (type) {
    case QType::size: return "size";
    case QType::material: return "material";
    case QType::shape: return "shape";
    case QType::color: return "color";
  }
  throw ContractError("unknown qtype");
}

QType parse_qtype(const std::string& name) {
  for (QType t : kQTypes)
    if (qtype_name(t) == name) return t;
  throw FormatError("unknown qtype '" + name + "'");
}

const std::vector<std::string>& answer_tokens() {
  static const std::vector<std::string> tokens = [] {
    std::vector<std::string> out;
    for (QType t : kQTypes) out.insert(out.end(), attribute_values(t).begin(), attribute_values(t).end());
    return out;
  }();
  return tokens;
}

int answer_id(const std::string& answer) {
  const int id = index_of(answer_tokens(), answer);
  if (id < 0) throw FormatError("unknown answer '" + answer + "'");
  return id;
}

QType answer_category(int id) {
  int base = 0;
  for (QType t : kQTypes) {
    const int n = static_cast<int>(attribute_values(t).size());
    if (id >= base && id < base + n) return t;
    base += n;
  }
  throw ContractError("answer id " + std::to_string(id) + " out of range");
}

const std::vector<std::string>& question_words() {
  static const std::vector<std::string> words = [] {
    std::vector<std::string> out{"<pad>", "<start>", "<end>", "<unk>", "what", "is",       "the",   "of",
                                 "color", "size",    "shape", "material", "object"};
    out.insert(out.end(), answer_tokens().begin(), answer_tokens().end());
    return out;
  }();
  return words;
}

int SceneObject::attribute(QType type) const {
  switch (type) {
    case QType::size: return size;
    case QType::material: return material;
    case QType::shape: return shape;
    case QType::color: return color;
  }
  return -1;
}

void MicroworldConfig::validate() const {
  if (grid_height == 0 || grid_width == 0) throw ConfigError("grid must be at least 1x1");
  if (min_objects == 0 || min_objects > max_objects) throw ConfigError("need 1 <= min_objects <= max_objects");
  if (max_objects > grid_height * grid_width) {
    throw ConfigError("max_objects " + std::to_string(max_objects) + " exceeds grid cells");
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be finite and >= 0");
}

Dataset generate_dataset(std::size_t n_train, std::size_t n_val, const MicroworldConfig& config, std::uint64_t seed) {
  config.validate();
  if (n_train == 0) throw ContractError("n_train must be >= 1");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5ce7e5u};
  Rng rng(seq);
  const std::size_t cells = config.grid_height * config.grid_width;
  std::set<std::string> seen;

  auto draw = [&](const std::string& prefix, std::size_t n) {
    std::vector<QAExample> out;
    std::array<QType, 4> block = kQTypes;
    for (std::size_t i = 0; i < n; ++i) {
      if (i % 4 == 0) std::shuffle(block.begin(), block.end(), rng);
      const QType asked = block[i % 4];
      QAExample ex;
      char id[32];
      std::snprintf(id, sizeof id, "%s-%06zu", prefix.c_str(), i);
      ex.image_id = id;
      ex.qtype = asked;
      for (;;) {
        std::uniform_int_distribution<std::size_t> count(config.min_objects, config.max_objects);
        std::vector<int> slots(cells);
        for (std::size_t c = 0; c < cells; ++c) slots[c] = static_cast<int>(c);
        std::shuffle(slots.begin(), slots.end(), rng);
        SceneSpec scene;
        const std::size_t k = count(rng);
        for (std::size_t o = 0; o < k; ++o) {
          SceneObject obj;
          obj.row = slots[o] / static_cast<int>(config.grid_width);
          obj.col = slots[o] % static_cast<int>(config.grid_width);
          obj.size = std::uniform_int_distribution<int>(0, 1)(rng);
          obj.material = std::uniform_int_distribution<int>(0, 1)(rng);
          obj.shape = std::uniform_int_distribution<int>(0, 2)(rng);
          obj.color = std::uniform_int_distribution<int>(0, 7)(rng);
          scene.objects.push_back(obj);
        }
        const std::size_t target = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
        const int form = std::uniform_int_distribution<int>(0, 1)(rng);
        if (!uniquely_described(scene, target, asked)) continue;
        if (!seen.insert(scene_key(scene)).second) continue;
        const SceneObject& obj = scene.objects[target];
        ex.question = make_question(obj, asked, form);
        ex.answer = attribute_values(asked)[static_cast<std::size_t>(obj.attribute(asked))];
        ex.scene = std::move(scene);
        break;
      }
      out.push_back(std::move(ex));
    }
    return out;
  };

  Dataset d;
  d.train = draw("train", n_train);
  d.val = draw("val", n_val);
  return d;
}

FeatureGrid render_grid(const SceneSpec& scene, const std::string& image_id, const MicroworldConfig& config,
                        std::uint64_t seed) {
  FeatureGrid grid;
  grid.height = config.grid_height;
  grid.width = config.grid_width;
  grid.cells = Matrix(grid.height * grid.width, kCellDim);
  for (const auto& o : scene.objects) {
    if (o.row < 0 || o.col < 0 || static_cast<std::size_t>(o.row) >= grid.height ||
        static_cast<std::size_t>(o.col) >= grid.width) {
      throw ContractError("object at (" + std::to_string(o.row) + "," + std::to_string(o.col) + ") outside the grid");
    }
    const std::size_t cell = static_cast<std::size_t>(o.row) * grid.width + static_cast<std::size_t>(o.col);
    if (grid.cells(cell, kOccupancy) != 0.0) throw ContractError("two objects in one cell of " + image_id);
    grid.cells(cell, kSizeOffset + static_cast<std::size_t>(o.size)) = 1.0;
    grid.cells(cell, kMaterialOffset + static_cast<std::size_t>(o.material)) = 1.0;
    grid.cells(cell, kShapeOffset + static_cast<std::size_t>(o.shape)) = 1.0;
    grid.cells(cell, kColorOffset + static_cast<std::size_t>(o.color)) = 1.0;
    grid.cells(cell, kOccupancy) = 1.0;
    if (config.sigma > 0.0) {
      std::vector<std::uint32_t> key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                                     static_cast<std::uint32_t>(cell)};
      for (unsigned char ch : image_id) key.push_back(ch);
      std::seed_seq seq(key.begin(), key.end());
      Rng noise(seq);
      std::uniform_real_distribution<double> u(-config.sigma, config.sigma);
      for (std::size_t d = 0; d < kCellDim; ++d) grid.cells(cell, d) += u(noise);
    }
  }
  return grid;
}

std::optional<QType> question_qtype(const std::vector<std::string>& q) {
  auto as_type = [](const std::string& w) -> std::optional<QType> {
    for (QType t : kQTypes)
      if (qtype_name(t) == w) return t;
    return std::nullopt;
  };
  if (q.size() >= 4 && q[0] == "what" && q[2] == "is" && q[3] == "the") return as_type(q[1]);
  if (q.size() >= 6 && q[0] == "what" && q[1] == "is" && q[2] == "the" && q[4] == "of" && q[5] == "the") {
    return as_type(q[3]);
  }
  return std::nullopt;
}

std::optional<std::string> symbolic_answer(const SceneSpec& scene, const std::vector<std::string>& q) {
  const auto asked = question_qtype(q);
  if (!asked) return std::nullopt;
  const std::size_t start = q[1] == "is" ? 6 : 4;
  std::map<QType, int> constraints;
  for (std::size_t i = start; i < q.size(); ++i) {
    if (q[i] == "object") continue;
    bool matched = false;
    for (QType t : kQTypes) {
      const int v = index_of(attribute_values(t), q[i]);
      if (v < 0) continue;
      auto [it, fresh] = constraints.emplace(t, v);
      if (!fresh && it->second != v) return std::nullopt;
      matched = true;
    }
    if (!matched) return std::nullopt;
  }
  const SceneObject* found = nullptr;
  for (const auto& o : scene.objects) {
    bool ok = true;
    for (const auto& [t, v] : constraints) ok = ok && o.attribute(t) == v;
    if (!ok) continue;
    if (found) return std::nullopt;
    found = &o;
  }
  if (!found) return std::nullopt;
  return attribute_values(*asked)[static_cast<std::size_t>(found->attribute(*asked))];
}

std::vector<QAExample> filter_examples(const std::vector<QAExample>& examples, const FilterRules& rules) {
  std::set<std::string> allowed;
  if (rules.top_k_answers) {
    std::map<std::string, std::size_t> freq;
    for (const auto& e : examples) ++freq[e.answer];
    std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (std::size_t i = 0; i < ranked.size() && i < *rules.top_k_answers; ++i) allowed.insert(ranked[i].first);
  }
  std::vector<QAExample> out;
  for (const auto& e : examples) {
    if (!rules.prefixes.empty()) {
      if (!e.question || e.question->empty()) continue;
      if (std::find(rules.prefixes.begin(), rules.prefixes.end(), e.question->front()) == rules.prefixes.end()) continue;
    }
    if (rules.top_k_answers && !allowed.count(e.answer)) continue;
    out.push_back(e);
  }
  return out;
}

AugmentationSplit split_for_augmentation(const std::vector<QAExample>& train, const SplitSpec& spec) {
  if (!(spec.fraction_pairs > 0.0 && spec.fraction_pairs <= 1.0)) {
    throw ConfigError("set1 fraction must be in (0, 1], got " + std::to_string(spec.fraction_pairs));
  }
  const auto n1 = static_cast<std::size_t>(std::llround(spec.fraction_pairs * static_cast<double>(train.size())));
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32), 0x5e71u};
  Rng rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> in_set1(train.size(), false);
  for (std::size_t i = 0; i < n1; ++i) in_set1[order[i]] = true;

  AugmentationSplit out;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (in_set1[i]) {
      out.set1.push_back(train[i]);
    } else {
      QAExample e = train[i];
      e.question.reset();
      out.set2.push_back(std::move(e));
    }
  }
  return out;
}

std::string to_json_line(const QAExample& e) {
  json j;
  j["image_id"] = e.image_id;
  json scene = json::array();
  for (const auto& o : e.scene.objects) {
    scene.push_back({{"row", o.row},
                     {"col", o.col},
                     {"size", kSizes[static_cast<std::size_t>(o.size)]},
                     {"material", kMaterials[static_cast<std::size_t>(o.material)]},
                     {"shape", kShapes[static_cast<std::size_t>(o.shape)]},
                     {"color", kColors[static_cast<std::size_t>(o.color)]}});
  }
  j["scene"] = std::move(scene);
  if (e.question) {
    std::string q;
    for (const auto& w : *e.question) q += (q.empty() ? "" : " ") + w;
    j["question"] = q;
  }
  j["answer"] = e.answer;
  j["qtype"] = qtype_name(e.qtype);
  if (e.synthetic) j["synthetic"] = true;
  return j.dump();
}

QAExample from_json_line(const std::string& line) {
  const json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw FormatError("not a JSON object");
  auto need = [&](const char* key) -> const json& {
    if (!j.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
    return j.at(key);
  };
  QAExample e;
  try {
    e.image_id = need("image_id").get<std::string>();
    for (const auto& o : need("scene")) {
      SceneObject obj;
      obj.row = o.at("row").get<int>();
      obj.col = o.at("col").get<int>();
      auto attr = [&](const char* key, const std::vector<std::string>& values) {
        const int v = index_of(values, o.at(key).get<std::string>());
        if (v < 0) throw FormatError(std::string("bad ") + key + " value");
        return v;
      };
      obj.size = attr("size", kSizes);
      obj.material = attr("material", kMaterials);
      obj.shape = attr("shape", kShapes);
      obj.color = attr("color", kColors);
      e.scene.objects.push_back(obj);
    }
    if (j.contains("question")) {
      auto words = split_tokens(j.at("question").get<std::string>());
      e.question = std::move(words);
    }
    e.answer = need("answer").get<std::string>();
    answer_id(e.answer);
    e.qtype = parse_qtype(need("qtype").get<std::string>());
    e.synthetic = j.value("synthetic", false);
  } catch (const json::exception& ex) {
    throw FormatError(ex.what());
  }
  if (e.scene.objects.empty()) throw FormatError("scene has no objects");
  return e;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<QAExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& e : examples) out << to_json_line(e) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<QAExample> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<QAExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(from_json_line(line));
    } catch (const Error& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::string> template_list() {
  std::vector<std::string> out;
  for (QType t : kQTypes) {
    std::string desc;
    for (QType d : described_attributes(t)) desc += " {" + qtype_name(d) + "}";
    if (t == QType::shape) desc += " object";
    out.push_back("what " + qtype_name(t) + " is the" + desc);
    out.push_back("what is the " + qtype_name(t) + " of the" + desc);
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const GenerationManifest& m) {
  json j;
  j["seed"] = m.seed;
  j["sigma"] = m.config.sigma;
  j["grid_height"] = m.config.grid_height;
  j["grid_width"] = m.config.grid_width;
  j["min_objects"] = m.config.min_objects;
  j["max_objects"] = m.config.max_objects;
  j["n_train"] = m.n_train;
  j["n_val"] = m.n_val;
  j["templates"] = template_list();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

GenerationManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw FormatError(path.string() + ": malformed manifest");
  GenerationManifest m;
  try {
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config.sigma = j.at("sigma").get<double>();
    m.config.grid_height = j.at("grid_height").get<std::size_t>();
    m.config.grid_width = j.at("grid_width").get<std::size_t>();
    m.config.min_objects = j.at("min_objects").get<std::size_t>();
    m.config.max_objects = j.at("max_objects").get<std::size_t>();
    m.n_train = j.at("n_train").get<std::size_t>();
    m.n_val = j.at("n_val").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return m;
}

}  // namespace iqan
