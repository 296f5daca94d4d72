#include "iqan/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "iqan/errors.hpp"

namespace iqan {

std::string regime_name(Regime regime) {
  switch (regime) {
    case Regime::baseline: return "baseline";
    case Regime::dt: return "dt";
    case Regime::vqg_baseline: return "vqg_baseline";
    case Regime::vqg_dt: return "vqg_dt";
    case Regime::vqg_dt_ft: return "vqg_dt_ft";
  }
  return "?";
}

Regime parse_regime(const std::string& name) {
  for (Regime r : {Regime::baseline, Regime::dt, Regime::vqg_baseline, Regime::vqg_dt, Regime::vqg_dt_ft})
    if (regime_name(r) == name) return r;
  throw ConfigError("unknown regime '" + name + "'");
}

void TrainConfig::validate() const {
  model.validate();
  world.validate();
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(set1_fraction > 0.0 && set1_fraction <= 1.0)) throw ConfigError("set1_fraction must be in (0, 1]");
  if (beam_width == 0) throw ConfigError("beam_width must be >= 1");
  if (max_question_len == 0) throw ConfigError("max_question_len must be >= 1");
  if (eval_threads == 0) throw ConfigError("eval_threads must be >= 1");
  if (!(finetune_fraction >= 0.0)) throw ConfigError("finetune_fraction must be >= 0");
}

ModelConfig regime_model(const ModelConfig& model, Regime regime) {
  ModelConfig m = model;
  if (regime == Regime::baseline || regime == Regime::vqg_baseline) {
    m.dual_mutan = false;
    m.duality_regularizer = false;
    m.share_codec = false;
    m.share_attention = false;
  }
  return m;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(std::uint64_t v, int) { return std::to_string(v); }

template <class T>
T parse_number(const std::string& key, const std::string& s) {
  T out{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": cannot parse '" + s + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define SIZE_FIELD(name, member)                                                                    \
  {name,                                                                                            \
   {[](TrainConfig& c, const std::string& k, const std::string& v) {                                \
      c.member = parse_number<std::size_t>(k, v);                                                   \
    },                                                                                              \
    [](const TrainConfig& c) { return fmt(static_cast<std::size_t>(c.member)); }}}
#define REAL_FIELD(name, member)                                                                                 \
  {name,                                                                                                         \
   {[](TrainConfig& c, const std::string& k, const std::string& v) { c.member = parse_number<double>(k, v); }, \
    [](const TrainConfig& c) { return fmt(static_cast<double>(c.member)); }}}
#define BOOL_FIELD(name, member)                                                                \
  {name,                                                                                        \
   {[](TrainConfig& c, const std::string& k, const std::string& v) { c.member = parse_bool(k, v); }, \
    [](const TrainConfig& c) { return fmt(static_cast<bool>(c.member)); }}}

// Ordered so that config_to_text groups keys by section.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      SIZE_FIELD("fusion.d_q", model.fusion.d_q),
      SIZE_FIELD("fusion.d_v", model.fusion.d_v),
      SIZE_FIELD("fusion.d_a", model.fusion.d_a),
      SIZE_FIELD("fusion.t", model.fusion.t),
      SIZE_FIELD("fusion.t_v", model.fusion.t_v),
      SIZE_FIELD("fusion.rank", model.fusion.rank),
      {"fusion.backend",
       {[](TrainConfig& c, const std::string& k, const std::string& v) {
          if (v == "mutan") c.model.fusion.backend = FusionBackend::mutan;
          else if (v == "mlb") c.model.fusion.backend = FusionBackend::mlb;
          else throw ConfigError(k + ": expected mutan or mlb, got '" + v + "'");
        },
        [](const TrainConfig& c) {
          return std::string(c.model.fusion.backend == FusionBackend::mlb ? "mlb" : "mutan");
        }}},
      BOOL_FIELD("fusion.tanh_inputs", model.fusion.tanh_inputs),
      SIZE_FIELD("model.d_w", model.d_w),
      SIZE_FIELD("model.attention_dim", model.attention_dim),
      SIZE_FIELD("model.attention_rank", model.attention_rank),
      SIZE_FIELD("model.num_answers", model.num_answers),
      SIZE_FIELD("model.vocab_size", model.vocab_size),
      BOOL_FIELD("model.dual_mutan", model.dual_mutan),
      BOOL_FIELD("model.duality_regularizer", model.duality_regularizer),
      BOOL_FIELD("model.share_codec", model.share_codec),
      BOOL_FIELD("model.share_attention", model.share_attention),
      BOOL_FIELD("model.skip_projection", model.skip_projection),
      REAL_FIELD("model.w_vqa", model.weights.vqa),
      REAL_FIELD("model.w_vqg", model.weights.vqg),
      REAL_FIELD("model.w_q_duality", model.weights.q_duality),
      REAL_FIELD("model.w_a_duality", model.weights.a_duality),
      REAL_FIELD("train.lr", lr),
      SIZE_FIELD("train.batch_size", batch_size),
      SIZE_FIELD("train.epochs", epochs),
      {"train.seed",
       {[](TrainConfig& c, const std::string& k, const std::string& v) { c.seed = parse_number<std::uint64_t>(k, v); },
        [](const TrainConfig& c) { return fmt(c.seed, 0); }}},
      {"train.regime",
       {[](TrainConfig& c, const std::string&, const std::string& v) { c.regime = parse_regime(v); },
        [](const TrainConfig& c) { return regime_name(c.regime); }}},
      REAL_FIELD("train.set1_fraction", set1_fraction),
      SIZE_FIELD("train.beam_width", beam_width),
      SIZE_FIELD("train.max_question_len", max_question_len),
      SIZE_FIELD("train.eval_threads", eval_threads),
      REAL_FIELD("train.finetune_fraction", finetune_fraction),
      SIZE_FIELD("data.n_train", n_train),
      SIZE_FIELD("data.n_val", n_val),
      SIZE_FIELD("data.grid_height", world.grid_height),
      SIZE_FIELD("data.grid_width", world.grid_width),
      SIZE_FIELD("data.min_objects", world.min_objects),
      SIZE_FIELD("data.max_objects", world.max_objects),
      REAL_FIELD("data.sigma", world.sigma),
  };
  return table;
}

#undef SIZE_FIELD
#undef REAL_FIELD
#undef BOOL_FIELD

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void set_config_value(TrainConfig& config, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(config, key, value);
      return;
    }
  }
  throw ConfigError("unknown key '" + key + "'");
}

TrainConfig parse_config(const std::string& text, TrainConfig config) {
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("expected key=value");
      if (section.empty()) throw ConfigError("key outside of a section");
      set_config_value(config, section + "." + trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return config;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path);
  std::ostringstream s;
  s << in.rdbuf();
  try {
    return parse_config(s.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string config_to_text(const TrainConfig& config) {
  std::string out, section;
  for (const auto& [name, field] : fields()) {
    const auto dot = name.find('.');
    const std::string sec = name.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + ("[" + sec + "]\n");
      section = sec;
    }
    out += name.substr(dot + 1) + "=" + field.get(config) + "\n";
  }
  return out;
}

}  // namespace iqan
