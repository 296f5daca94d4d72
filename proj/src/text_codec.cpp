#include "iqan/text_codec.hpp"

#include <fstream>
#include <sstream>

#include "iqan/errors.hpp"

namespace iqan {

Vocabulary::Vocabulary() {
  for (const char* t : {"<pad>", "<start>", "<end>", "<unk>"}) add(t);
}

Vocabulary::Vocabulary(std::span<const std::string> tokens) : Vocabulary() {
  for (const auto& t : tokens) add(t);
}

int Vocabulary::add(const std::string& token) {
  if (auto it = ids_.find(token); it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  if (auto it = ids_.find(std::string(token)); it != ids_.end()) return it->second;
  return std::nullopt;
}

int Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnk); }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw ContractError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> split_tokens(std::string_view sentence) {
  std::vector<std::string> out;
  std::istringstream in{std::string(sentence)};
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::vector<int> Vocabulary::encode(std::string_view sentence) const {
  std::vector<int> ids;
  for (const auto& w : split_tokens(sentence)) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  const Vocabulary reserved;
  if (lines.size() < reserved.size() ||
      !std::equal(reserved.tokens().begin(), reserved.tokens().end(), lines.begin())) {
    throw FormatError(path.string() + ": vocabulary must start with <pad>, <start>, <end>, <unk>");
  }
  Vocabulary v;
  for (std::size_t i = reserved.size(); i < lines.size(); ++i) {
    if (v.find(lines[i])) throw FormatError(path.string() + ": duplicate token '" + lines[i] + "'");
    v.add(lines[i]);
  }
  return v;
}

Vector embed_answer(int answer_id, const AnswerTable& table) {
  const Matrix& e = table.E_a->value;
  if (answer_id < 0 || static_cast<std::size_t>(answer_id) >= e.rows()) {
    throw ContractError("answer id " + std::to_string(answer_id) + " out of range");
  }
  const auto r = e.row(static_cast<std::size_t>(answer_id));
  return Vector(std::vector<double>(r.begin(), r.end()));
}

Vector classify_answer(const Vector& answer_feature, const AnswerTable& table) {
  return matvec(table.E_a->value, answer_feature);
}

Var embed_answer(Tape& tape, int answer_id, const AnswerTable& table) {
  if (answer_id < 0) throw ContractError("negative answer id");
  return row(tape.param(table.E_a), static_cast<std::size_t>(answer_id));
}

Var classify_answer(Tape& tape, Var answer_feature, const AnswerTable& table) {
  return matmul(tape.param(table.E_a), answer_feature);
}

std::vector<ParamPtr> GruCell::parameters() const { return {W_z, U_z, b_z, W_r, U_r, b_r, W_h, U_h, b_h}; }

std::vector<ParamPtr> RecurrentParams::parameters() const {
  std::vector<ParamPtr> out{word_embedding};
  for (auto& p : cell.parameters()) out.push_back(p);
  if (W_out) {
    out.push_back(W_out);
    out.push_back(b_out);
  }
  return out;
}

GruCell make_gru_cell(std::size_t input, std::size_t hidden, const std::string& prefix, Rng& rng) {
  GruCell c;
  auto gate = [&](const char* name, ParamPtr& W, ParamPtr& U, ParamPtr& b) {
    W = make_param(prefix + ".W_" + name, uniform_init(hidden, input, input, rng));
    U = make_param(prefix + ".U_" + name, uniform_init(hidden, hidden, hidden, rng));
    b = make_param(prefix + ".b_" + name, uniform_init(hidden, 1, hidden, rng));
  };
  gate("z", c.W_z, c.U_z, c.b_z);
  gate("r", c.W_r, c.U_r, c.b_r);
  gate("h", c.W_h, c.U_h, c.b_h);
  return c;
}

RecurrentParams make_recurrent_params(std::size_t vocab, std::size_t d_w, std::size_t d_q,
                                      const std::string& prefix, Rng& rng, bool with_output) {
  RecurrentParams p;
  p.word_embedding = make_param(prefix + ".embedding", uniform_init(vocab, d_w, d_w, rng));
  p.cell = make_gru_cell(d_w, d_q, prefix + ".cell", rng);
  if (with_output) {
    p.W_out = make_param(prefix + ".W_out", uniform_init(vocab, d_q, d_q, rng));
    p.b_out = make_param(prefix + ".b_out", uniform_init(vocab, 1, d_q, rng));
  }
  return p;
}

Var gru_step(Tape& tape, const GruCell& c, Var x, Var h) {
  auto affine = [&](const ParamPtr& W, const ParamPtr& U, const ParamPtr& b, Var hidden_in) {
    return add(add(matmul(tape.param(W), x), matmul(tape.param(U), hidden_in)), tape.param(b));
  };
  Var z = sigmoid(affine(c.W_z, c.U_z, c.b_z, h));
  Var r = sigmoid(affine(c.W_r, c.U_r, c.b_r, h));
  Var candidate = tanh(affine(c.W_h, c.U_h, c.b_h, mul(r, h)));
  // h' = (1 - z) h + z candidate
  return add(h, mul(z, sub(candidate, h)));
}

namespace {

void check_token(const RecurrentParams& params, int token) {
  if (token < 0 || static_cast<std::size_t>(token) >= params.word_embedding->value.rows()) {
    throw ContractError("token id " + std::to_string(token) + " out of range");
  }
}

}  // namespace

Var encode_question(Tape& tape, std::span<const int> tokens, const RecurrentParams& params) {
  if (tokens.empty()) throw ContractError("encode_question: empty question");
  Var h = tape.constant(Matrix(params.cell.hidden(), 1));
  Var table = tape.param(params.word_embedding);
  for (int tok : tokens) {
    check_token(params, tok);
    h = gru_step(tape, params.cell, row(table, static_cast<std::size_t>(tok)), h);
  }
  return h;
}

Vector encode_question(std::span<const int> tokens, const RecurrentParams& params) {
  Tape tape(false);
  return encode_question(tape, tokens, params).value().to_vector();
}

std::pair<Var, Var> decoder_step(Tape& tape, const RecurrentParams& params, Var hidden, int input_token) {
  if (!params.W_out) throw ContractError("decoder_step: parameters have no output projection");
  check_token(params, input_token);
  Var x = row(tape.param(params.word_embedding), static_cast<std::size_t>(input_token));
  Var next = gru_step(tape, params.cell, x, hidden);
  Var scores = add(matmul(tape.param(params.W_out), next), tape.param(params.b_out));
  return {next, scores};
}

std::vector<Var> teacher_forced_scores(Tape& tape, const RecurrentParams& params, Var initial_hidden,
                                       std::span<const int> question) {
  std::vector<Var> out;
  out.reserve(question.size() + 1);
  Var h = initial_hidden;
  int input = Vocabulary::kStart;
  for (std::size_t i = 0; i <= question.size(); ++i) {
    auto [next, scores] = decoder_step(tape, params, h, input);
    out.push_back(scores);
    h = next;
    if (i < question.size()) input = question[i];
  }
  return out;
}

Vector log_softmax(std::span<const double> scores) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  const double lz = mx + std::log(z);
  Vector out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] - lz;
  return out;
}

namespace {

DecodeResult decode_with(const Vector& initial_hidden, const RecurrentParams& params, const DecodeOptions& options) {
  if (initial_hidden.size() != params.cell.hidden()) throw ShapeError("decoder initial state has wrong length");
  Tape tape(false);
  const StepFunction<Var> step = [&](const Var& h, int input) {
    auto [next, scores] = decoder_step(tape, params, h, input);
    return std::pair<Var, Vector>{next, log_softmax(scores.value().values())};
  };
  Var h0 = tape.constant(Matrix::column(initial_hidden));
  return options.beam_width <= 1 ? decode_greedy(h0, step, options) : decode_beam(h0, step, options);
}

}  // namespace

DecodeResult decode_question_greedy(const Vector& initial_hidden, const RecurrentParams& params,
                                    std::size_t max_len) {
  if (max_len == 0) throw ContractError("decode: max_len must be >= 1");
  DecodeOptions options;
  options.max_len = max_len;
  return decode_with(initial_hidden, params, options);
}

DecodeResult decode_question_beam(const Vector& initial_hidden, const RecurrentParams& params,
                                  std::size_t beam_width, std::size_t max_len, bool length_normalize) {
  if (beam_width == 0) throw ContractError("decode: beam width must be >= 1");
  if (max_len == 0) throw ContractError("decode: max_len must be >= 1");
  DecodeOptions options;
  options.max_len = max_len;
  options.beam_width = beam_width;
  options.length_normalize = length_normalize;
  return decode_with(initial_hidden, params, options);
}

}  // namespace iqan
