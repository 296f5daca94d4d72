#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>

#include "helpers.hpp"
#include "iqan/errors.hpp"
#include "iqan/text_codec.hpp"

using namespace iqan;
using iqan::test::random_matrix;
using iqan::test::random_vector;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// A decoder defined by a table of next-token log-probabilities per prefix.
using Prefix = std::vector<int>;
using Table = std::function<Vector(const Prefix&)>;

StepFunction<Prefix> table_step(Table table, int start) {
  return [table, start](const Prefix& state, int input) {
    Prefix next = state;
    if (input != start) next.push_back(input);
    return std::pair<Prefix, Vector>{next, table(next)};
  };
}

// Best-scoring finished sequence by brute force over every continuation.
void enumerate(const Table& table, Prefix prefix, double logp, std::size_t max_len, int end, double& best,
               Prefix& best_tokens) {
  const Vector lp = table(prefix);
  for (std::size_t k = 0; k < lp.size(); ++k) {
    const double s = logp + lp[k];
    const int tok = static_cast<int>(k);
    if (tok == end || prefix.size() + 1 == max_len) {
      Prefix done = prefix;
      if (tok != end) done.push_back(tok);
      if (s > best) {
        best = s;
        best_tokens = done;
      }
      continue;
    }
    Prefix longer = prefix;
    longer.push_back(tok);
    enumerate(table, longer, s, max_len, end, best, best_tokens);
  }
}

Vector spread(std::size_t vocab, std::map<int, double> fixed) {
  double mass = 0.0;
  for (auto [tok, lp] : fixed) mass += std::exp(lp);
  const double rest = std::log((1.0 - mass) / static_cast<double>(vocab - fixed.size()));
  Vector out(vocab, rest);
  for (auto [tok, lp] : fixed) out[static_cast<std::size_t>(tok)] = lp;
  return out;
}

}  // namespace

TEST_SUITE("text_codec") {
  TEST_CASE("vocabulary reserved ids, encode/decode and file round trip") {
    Vocabulary v;
    CHECK(v.size() == 4);
    CHECK(v.token(Vocabulary::kPad) == "<pad>");
    CHECK(v.token(Vocabulary::kStart) == "<start>");
    CHECK(v.token(Vocabulary::kEnd) == "<end>");
    CHECK(v.token(Vocabulary::kUnk) == "<unk>");
    CHECK(v.add("what") == 4);
    CHECK(v.add("color") == 5);
    CHECK(v.add("what") == 4);
    CHECK(v.encode("what  color zebra") == std::vector<int>{4, 5, Vocabulary::kUnk});
    const std::vector<int> ids{4, 5};
    CHECK(v.decode(ids) == "what color");
    CHECK_THROWS_AS(v.token(99), ContractError);

    const auto path = std::filesystem::temp_directory_path() / "iqan_vocab_test.txt";
    v.save(path);
    CHECK(Vocabulary::load(path) == v);
    std::ofstream(path) << "what\n";
    CHECK_THROWS_AS(Vocabulary::load(path), FormatError);
    std::filesystem::remove(path);
  }

  TEST_CASE("answer table: one array, two views") {
    std::mt19937_64 rng(30);
    AnswerTable t{make_param("E_a", random_matrix(5, 3, rng))};
    const Vector r2 = embed_answer(2, t);
    for (std::size_t j = 0; j < 3; ++j) CHECK(r2[j] == t.E_a->value(2, j));
    const Vector scores = classify_answer(r2, t);
    double sq = 0.0;
    for (double x : r2.values()) sq += x * x;
    CHECK(scores[2] == doctest::Approx(sq).epsilon(1e-14));
    const Matrix gram = matmul(t.E_a->value, t.E_a->value.transposed());
    for (std::size_t c = 0; c < 5; ++c) CHECK(scores[c] == doctest::Approx(gram(2, c)).epsilon(1e-14));

    AnswerTable eye{make_param("I", Matrix::identity(4))};
    CHECK(classify_answer(embed_answer(1, eye), eye) == Vector{0, 1, 0, 0});
    eye.E_a->value(3, 3) = 0.0;
    CHECK(embed_answer(3, eye) == Vector(4));
    CHECK_THROWS_AS(embed_answer(4, eye), ContractError);
  }

  TEST_CASE("encoder: zero weights, single hand-stepped token, order sensitivity") {
    std::mt19937_64 rng(31);
    RecurrentParams p = make_recurrent_params(6, 3, 4, "enc", rng, false);
    const std::vector<int> one{5};
    const Vector h = encode_question(one, p);

    const auto x = p.word_embedding->value.row(5);
    const GruCell& c = p.cell;
    for (std::size_t i = 0; i < 4; ++i) {
      double az = c.b_z->value[i], ah = c.b_h->value[i];
      for (std::size_t j = 0; j < 3; ++j) {
        az += c.W_z->value(i, j) * x[j];
        ah += c.W_h->value(i, j) * x[j];
      }
      CHECK(h[i] == doctest::Approx(sigmoid(az) * std::tanh(ah)).epsilon(1e-14));
    }

    const std::vector<int> ab{4, 5}, ba{5, 4};
    CHECK(max_abs_diff(encode_question(ab, p).values(), encode_question(ba, p).values()) > 1e-6);

    for (const auto& param : p.parameters()) param->value.fill(0.0);
    CHECK(encode_question(ab, p) == Vector(4));
    CHECK_THROWS_AS(encode_question(std::vector<int>{}, p), ContractError);
  }

  TEST_CASE("decoder shares the encoder cell when built from one parameter set") {
    std::mt19937_64 rng(32);
    RecurrentParams p = make_recurrent_params(6, 3, 4, "codec", rng, true);
    Tape tape;
    auto [h1, s1] = decoder_step(tape, p, tape.constant(Matrix(4, 1)), 4);
    const std::vector<int> one{4};
    CHECK(max_abs_diff(h1.value().values(), encode_question(one, p).values()) == 0.0);
    CHECK(s1.rows() == 6);
  }

  TEST_CASE("greedy decoding edge cases") {
    std::mt19937_64 rng(33);
    RecurrentParams p = make_recurrent_params(6, 3, 4, "dec", rng, true);
    p.W_out->value.fill(0.0);
    p.b_out->value.fill(0.0);
    p.b_out->value[Vocabulary::kEnd] = 10.0;
    CHECK(decode_question_greedy(random_vector(4, rng), p, 5).tokens.empty());

    p.b_out->value[Vocabulary::kEnd] = 0.0;
    p.b_out->value[4] = 10.0;
    const DecodeResult one = decode_question_greedy(random_vector(4, rng), p, 1);
    CHECK(one.tokens == std::vector<int>{4});
    CHECK(one.steps == 1);
  }

  TEST_CASE("greedy on a rigged two-token vocabulary follows the enumerated argmax path") {
    // tokens 0 and 1, <end> = 2; start token 3 is never emitted
    const Table table = [](const Prefix& p) -> Vector {
      if (p.empty()) return Vector{std::log(0.3), std::log(0.6), std::log(0.1)};
      if (p.size() == 1) return Vector{std::log(0.5), std::log(0.2), std::log(0.3)};
      return Vector{std::log(0.1), std::log(0.1), std::log(0.8)};
    };
    DecodeOptions o;
    o.start_token = 3;
    o.end_token = 2;
    o.max_len = 4;
    const DecodeResult r = decode_greedy<Prefix>(Prefix{}, table_step(table, 3), o);
    CHECK(r.tokens == std::vector<int>{1, 0});
    CHECK(r.log_prob == doctest::Approx(std::log(0.6 * 0.5 * 0.8)).epsilon(1e-14));
  }

  TEST_CASE("beam finds the better non-greedy sequence") {
    // Greedy: A (-0.5) then <end> (-2.5) = -3.0. Beam 2: B (-1.0) then <end> (-1.5) = -2.5.
    constexpr int A = 0, B = 1, END = 2, START = 3;
    constexpr std::size_t V = 24;
    const Table table = [&](const Prefix& p) -> Vector {
      if (p.empty()) return spread(V, {{A, -0.5}, {B, -1.0}});
      if (p == Prefix{A}) return spread(V, {{END, -2.5}});
      if (p == Prefix{B}) return spread(V, {{END, -1.5}});
      return spread(V, {{END, -0.1}});
    };
    DecodeOptions o;
    o.start_token = START;
    o.end_token = END;
    o.max_len = 3;
    const auto step = table_step(table, START);

    const DecodeResult greedy = decode_greedy<Prefix>(Prefix{}, step, o);
    CHECK(greedy.tokens == Prefix{A});
    CHECK(greedy.log_prob == doctest::Approx(-3.0).epsilon(1e-12));

    o.beam_width = 2;
    const DecodeResult beam = decode_beam<Prefix>(Prefix{}, step, o);
    CHECK(beam.tokens == Prefix{B});
    CHECK(beam.log_prob == doctest::Approx(-2.5).epsilon(1e-12));

    double best = -1e300;
    Prefix best_tokens;
    enumerate(table, {}, 0.0, 3, END, best, best_tokens);
    CHECK(best_tokens == beam.tokens);
    CHECK(best == doctest::Approx(beam.log_prob).epsilon(1e-12));
  }

  TEST_CASE("uniform model: ties go to the shortest, then lexicographically smallest") {
    const Table uniform = [](const Prefix&) { return Vector(4, std::log(0.25)); };
    DecodeOptions o;
    o.start_token = 1;
    o.end_token = 2;
    o.max_len = 1;
    o.beam_width = 3;
    const DecodeResult r = decode_beam<Prefix>(Prefix{}, table_step(uniform, 1), o);
    CHECK(r.tokens.empty());

    o.end_token = 3;
    o.beam_width = 4;
    // every finished hypothesis has the same score and length; [] sorts first
    CHECK(decode_beam<Prefix>(Prefix{}, table_step(uniform, 1), o).tokens.empty());
  }

  TEST_CASE("beam width 1 equals greedy on rigged recurrent models") {
    std::mt19937_64 rng(34);
    for (int model = 0; model < 100; ++model) {
      RecurrentParams p = make_recurrent_params(8, 3, 4, "dec", rng, true);
      // sharpen the output so decodes have varied lengths
      for (double& x : p.W_out->value.values()) x *= 4.0;
      const Vector h0 = random_vector(4, rng);
      const DecodeResult g = decode_question_greedy(h0, p, 6);
      const DecodeResult b1 = decode_question_beam(h0, p, 1, 6);
      CHECK(g.tokens == b1.tokens);
      CHECK(g.log_prob == b1.log_prob);
      CHECK(decode_question_beam(h0, p, 3, 6).log_prob >= g.log_prob);
    }
  }

  TEST_CASE("decode argument checks") {
    std::mt19937_64 rng(35);
    RecurrentParams p = make_recurrent_params(6, 3, 4, "dec", rng, true);
    CHECK_THROWS_AS(decode_question_beam(Vector(4), p, 0, 3), ContractError);
    CHECK_THROWS_AS(decode_question_greedy(Vector(4), p, 0), ContractError);
    CHECK_THROWS_AS(decode_question_greedy(Vector(3), p, 3), ShapeError);
  }
}
