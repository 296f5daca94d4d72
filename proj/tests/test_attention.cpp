#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "iqan/attention.hpp"
#include "iqan/errors.hpp"

using namespace iqan;
using iqan::test::random_matrix;
using iqan::test::random_vector;

namespace {

FeatureGrid random_grid(std::size_t h, std::size_t w, std::size_t d, std::mt19937_64& rng) {
  return {h, w, random_matrix(h * w, d, rng)};
}

AttentionParams random_attention(std::size_t d_guide, std::size_t d_v, std::mt19937_64& rng) {
  return make_attention_params({d_guide, d_v, 3, 4, 2}, "att", rng);
}

}  // namespace

TEST_SUITE("attention") {
  TEST_CASE("equal scores pool to the mean cell") {
    std::mt19937_64 rng(40);
    const FeatureGrid g = random_grid(2, 3, 4, rng);
    AttentionParams p = random_attention(5, 4, rng);
    for (const auto& param : p.parameters()) param->value.fill(0.0);
    const AttentionResult r = attend(g, random_vector(5, rng), p);
    for (std::size_t j = 0; j < 4; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < 6; ++i) mean += g.cells(i, j) / 6.0;
      CHECK(r.pooled[j] == doctest::Approx(mean).epsilon(1e-14));
    }
  }

  TEST_CASE("a saturated score selects its cell") {
    std::mt19937_64 rng(41);
    const FeatureGrid g = random_grid(2, 2, 3, rng);
    Vector scores(4);
    scores[2] = 1000.0;
    const AttentionResult r = pool_with_scores(g, scores);
    CHECK(max_abs_diff(r.pooled.values(), g.cell(1, 0).values()) < 1e-9);
  }

  TEST_CASE("2x2 grid against a hand softmax") {
    std::mt19937_64 rng(42);
    const FeatureGrid g = random_grid(2, 2, 3, rng);
    AttentionParams p = random_attention(5, 3, rng);
    const Vector guide = random_vector(5, rng);
    const AttentionResult r = attend(g, guide, p);

    const Vector gp = matvec(p.W_g->value, guide);
    double scores[4], z = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      const Vector c = matvec(p.W_c->value, Vector(std::vector<double>(g.cells.row(i).begin(), g.cells.row(i).end())));
      scores[i] = 0.0;
      for (std::size_t k = 0; k < 2; ++k) scores[i] += dot(gp, p.m[k]->value.to_vector()) * dot(c, p.n[k]->value.to_vector());
      z += std::exp(scores[i]);
    }
    for (std::size_t j = 0; j < 3; ++j) {
      double expect = 0.0;
      for (std::size_t i = 0; i < 4; ++i) expect += std::exp(scores[i]) / z * g.cells(i, j);
      CHECK(r.pooled[j] == doctest::Approx(expect).epsilon(1e-13));
    }
  }

  TEST_CASE("weights form a distribution and pooling stays in the hull") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 30; ++trial) {
      const FeatureGrid g = random_grid(3, 3, 4, rng);
      AttentionParams p = random_attention(5, 4, rng);
      const AttentionResult r = attend(g, 3.0 * random_vector(5, rng), p);
      double total = 0.0;
      for (double w : r.weights.values()) {
        CHECK(w >= 0.0);
        total += w;
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
      for (std::size_t j = 0; j < 4; ++j) {
        double lo = 1e300, hi = -1e300;
        for (std::size_t i = 0; i < 9; ++i) {
          lo = std::min(lo, g.cells(i, j));
          hi = std::max(hi, g.cells(i, j));
        }
        CHECK(r.pooled[j] >= lo - 1e-12);
        CHECK(r.pooled[j] <= hi + 1e-12);
      }
      Vector shifted = r.scores;
      for (double& s : shifted.values()) s += 7.5;
      CHECK(max_abs_diff(pool_with_scores(g, shifted).pooled.values(), r.pooled.values()) < 1e-10);
    }
  }

  TEST_CASE("tape version matches the value version") {
    std::mt19937_64 rng(44);
    const FeatureGrid g = random_grid(2, 3, 4, rng);
    AttentionParams p = random_attention(5, 4, rng);
    const Vector guide = random_vector(5, rng);
    Tape tape(false);
    Var pooled = attend(tape, tape.constant(g.cells), tape.constant(Matrix::column(guide)), p);
    CHECK(max_abs_diff(pooled.value().values(), attend(g, guide, p).pooled.values()) < 1e-13);
  }

  TEST_CASE("shape and emptiness errors") {
    std::mt19937_64 rng(45);
    AttentionParams p = random_attention(5, 4, rng);
    CHECK_THROWS_AS(attend(random_grid(2, 2, 3, rng), random_vector(5, rng), p), ShapeError);
    CHECK_THROWS_AS(attend(random_grid(2, 2, 4, rng), random_vector(4, rng), p), ShapeError);
    CHECK_THROWS_AS(attend(FeatureGrid{0, 0, Matrix(0, 4)}, random_vector(5, rng), p), ContractError);
  }
}
