#include "iqan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "iqan/errors.hpp"

namespace iqan {
namespace {

constexpr const char* kMagic = "iqan-checkpoint";

void put_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

struct ArrayEntry {
  std::size_t rows = 0, cols = 0, offset = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const TrainConfig& config, const IqanModel& model,
                     const TrainingState& state) {
  TrainConfig c = config;
  c.model = model.config();
  const auto& params = model.parameters();
  if (state.adam.m.size() != params.size()) throw ContractError("optimizer state does not match the model");

  std::vector<std::pair<std::string, const Matrix*>> arrays;
  for (const auto& p : params) arrays.emplace_back(p->name, &p->value);
  for (std::size_t i = 0; i < params.size(); ++i) arrays.emplace_back("adam.m/" + params[i]->name, &state.adam.m[i]);
  for (std::size_t i = 0; i < params.size(); ++i) arrays.emplace_back("adam.v/" + params[i]->name, &state.adam.v[i]);

  std::ostringstream manifest;
  manifest << config_to_text(c) << "\n[state]\n";
  manifest << "epoch=" << state.epoch << "\nadam_step=" << state.adam.step << "\nrng=" << state.rng << "\n";
  manifest << "\n[arrays]\n";
  std::string payload;
  for (const auto& [name, m] : arrays) {
    manifest << name << " " << m->rows() << " " << m->cols() << " " << payload.size() << "\n";
    for (double v : m->values()) put_le(payload, v);
  }
  const std::string text = manifest.str();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << kMagic << " " << kCheckpointVersion << "\nmanifest " << text.size() << "\n" << text << payload;
  if (!out) throw IoError("write failed for " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  const auto where = [&](const std::string& msg) { return FormatError(path.string() + ": " + msg); };

  std::string magic, word;
  int version = 0;
  std::size_t manifest_bytes = 0;
  in >> magic >> version;
  if (magic != kMagic) throw where("not a checkpoint");
  if (version != kCheckpointVersion) throw where("unsupported version " + std::to_string(version));
  in >> word >> manifest_bytes;
  if (word != "manifest" || in.get() != '\n') throw where("bad manifest header");
  std::string text(manifest_bytes, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(manifest_bytes))) throw where("truncated manifest");
  const std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::string config_text, section, line, rng_text;
  std::map<std::string, ArrayEntry> arrays;
  std::size_t epoch = 0;
  std::uint64_t adam_step = 0;
  std::istringstream lines(text);
  while (std::getline(lines, line)) {
    if (!line.empty() && line.front() == '[') section = line;
    if (section == "[state]") {
      if (line.rfind("epoch=", 0) == 0) epoch = std::stoull(line.substr(6));
      else if (line.rfind("adam_step=", 0) == 0) adam_step = std::stoull(line.substr(10));
      else if (line.rfind("rng=", 0) == 0) rng_text = line.substr(4);
    } else if (section == "[arrays]") {
      if (line.empty() || line.front() == '[') continue;
      std::istringstream f(line);
      std::string name;
      ArrayEntry e;
      if (!(f >> name >> e.rows >> e.cols >> e.offset)) throw where("bad array line '" + line + "'");
      if (e.offset + e.rows * e.cols * 8 > payload.size()) throw where("array " + name + " runs past the payload");
      arrays[name] = e;
    } else {
      config_text += line + "\n";
    }
  }

  LoadedCheckpoint out;
  try {
    out.config = parse_config(config_text);
  } catch (const ConfigError& e) {
    throw where(std::string("config: ") + e.what());
  }
  out.model = std::make_unique<IqanModel>(out.config.model, out.config.seed);

  auto read = [&](const std::string& name, Matrix& target) {
    auto it = arrays.find(name);
    if (it == arrays.end()) throw where("missing array " + name);
    const ArrayEntry& e = it->second;
    if (e.rows != target.rows() || e.cols != target.cols()) {
      throw where("array " + name + " is " + std::to_string(e.rows) + "x" + std::to_string(e.cols) + ", model expects " +
                  std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
    }
    for (std::size_t k = 0; k < target.size(); ++k) target[k] = get_le(payload.data() + e.offset + 8 * k);
  };

  const auto& params = out.model->parameters();
  out.state.adam = make_adam_state(params);
  out.state.adam.step = adam_step;
  out.state.epoch = epoch;
  for (std::size_t i = 0; i < params.size(); ++i) {
    read(params[i]->name, params[i]->value);
    read("adam.m/" + params[i]->name, out.state.adam.m[i]);
    read("adam.v/" + params[i]->name, out.state.adam.v[i]);
  }
  if (arrays.size() != 3 * params.size()) throw where("unexpected arrays in checkpoint");
  std::istringstream rs(rng_text);
  if (!(rs >> out.state.rng)) throw where("bad rng state");
  return out;
}

}  // namespace iqan
