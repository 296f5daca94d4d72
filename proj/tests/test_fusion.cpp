#include <doctest.h>

#include "helpers.hpp"
#include "iqan/dual_fusion.hpp"
#include "iqan/errors.hpp"
#include "iqan/fusion.hpp"

using namespace iqan;
using iqan::test::random_matrix;
using iqan::test::random_vector;

namespace {

FusionParams random_params(FusionConfig c, std::mt19937_64& rng) { return make_fusion_params(c, "f", rng); }

Vector lift(const Vector& feature, const FusionParams& p) { return matvec_transposed(p.W_a->value, feature); }

}  // namespace

TEST_SUITE("fusion") {
  TEST_CASE("project with identity and zero factors") {
    FusionConfig c{3, 3, 3, 3, 3, 1, FusionBackend::mutan, false};
    std::mt19937_64 rng(10);
    FusionParams p = random_params(c, rng);
    p.W_q->value = Matrix::identity(3);
    p.W_v->value = Matrix::identity(3);
    const Vector q{1, -2, 3}, v{0.5, 0, -1};
    auto [qp, vp] = project(q, v, p);
    CHECK(qp == q);
    CHECK(vp == v);
    p.W_q->value.fill(0.0);
    CHECK(project(q, v, p).first == Vector(3));

    FusionParams r = random_params({4, 5, 4, 3, 2, 2, FusionBackend::mutan, false}, rng);
    const Vector q4 = random_vector(4, rng), v5 = random_vector(5, rng);
    CHECK(project(q4, v5, r).first == matvec(r.W_q->value, q4));
    CHECK(project(q4, v5, r).second == matvec(r.W_v->value, v5));
  }

  TEST_CASE("low-rank fuse scalar case and zero visual input") {
    FusionConfig c{1, 1, 1, 1, 1, 1, FusionBackend::mutan, false};
    std::mt19937_64 rng(11);
    FusionParams p = random_params(c, rng);
    p.M[0]->value = Matrix{{4.0}};
    p.N[0]->value = Matrix{{5.0}};
    CHECK(lowrank_fuse(Vector{2}, Vector{3}, p)[0] == 120.0);

    FusionParams r = random_params({3, 2, 3, 3, 2, 2, FusionBackend::mutan, false}, rng);
    CHECK(lowrank_fuse(random_vector(3, rng), Vector(2), r) == Vector(3));
    CHECK_THROWS_AS(lowrank_fuse(Vector(2), Vector(2), r), ShapeError);
  }

  TEST_CASE("core path equals the slice sum") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
      FusionParams p = random_params({3, 2, 3, 3, 2, 2, FusionBackend::mutan, false}, rng);
      const Vector q = random_vector(3, rng), v = random_vector(2, rng);
      const Vector direct = lowrank_fuse(q, v, p);
      const Vector via = fuse_via_core(compose_core(p), q, v);
      CHECK(max_abs_diff(direct.values(), via.values()) < 1e-12);
    }
  }

  TEST_CASE("compose core special cases") {
    std::mt19937_64 rng(13);
    FusionParams p = random_params({2, 2, 2, 2, 3, 1, FusionBackend::mutan, false}, rng);
    p.M[0]->value = Matrix(2, 2, 0.0);
    p.M[0]->value(1, 0) = 1.0;
    p.N[0]->value = Matrix(3, 2, 0.0);
    p.N[0]->value(2, 0) = 1.0;
    const Tensor3 core = compose_core(p);
    int nonzero = 0;
    for (double x : core.values()) nonzero += x != 0.0;
    CHECK(nonzero == 1);
    CHECK(core(1, 2, 0) == 1.0);

    p.M[0]->value.fill(0.0);
    const Tensor3 zero_core = compose_core(p), zero_full = compose_full_tensor(p);
    for (double x : zero_core.values()) CHECK(x == 0.0);
    for (double x : zero_full.values()) CHECK(x == 0.0);
  }

  TEST_CASE("fuse via core against a brute-force contraction") {
    CHECK(fuse_via_core(Tensor3({1, 1, 1}, std::vector<double>{2}), Vector{3}, Vector{4})[0] == 24.0);
    CHECK(fuse_via_core(Tensor3({2, 2, 2}), Vector{1, 1}, Vector{1, 1}) == Vector(2));
    std::mt19937_64 rng(14);
    const Tensor3 core = test::random_tensor({3, 4, 3}, rng);
    const Vector q = random_vector(3, rng), v = random_vector(4, rng);
    Vector expect(3);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < 3; ++k) expect[k] += core(i, j, k) * q[i] * v[j];
    CHECK(max_abs_diff(fuse_via_core(core, q, v).values(), expect.values()) < 1e-14);
  }

  TEST_CASE("full tensor with identity factors is the core") {
    std::mt19937_64 rng(15);
    FusionParams p = random_params({3, 2, 3, 3, 2, 2, FusionBackend::mutan, false}, rng);
    p.W_q->value = Matrix::identity(3);
    p.W_v->value = Matrix::identity(2);
    p.W_a->value = Matrix::identity(3);
    CHECK(max_abs_diff(compose_full_tensor(p).values(), compose_core(p).values()) < 1e-15);
  }

  TEST_CASE("full tensor, core and slice paths agree") {
    std::mt19937_64 rng(16);
    for (int trial = 0; trial < 25; ++trial) {
      FusionParams p = random_params({4, 5, 3, 3, 2, 3, FusionBackend::mutan, false}, rng);
      const Vector q = random_vector(4, rng), v = random_vector(5, rng);
      const Vector full = full_bilinear(compose_full_tensor(p), q, v);
      auto [qp, vp] = project(q, v, p);
      const Vector core = lift(fuse_via_core(compose_core(p), qp, vp), p);
      const Vector slices = lift(lowrank_fuse(qp, vp, p), p);
      CHECK(max_abs_diff(full.values(), core.values()) < 1e-12);
      CHECK(max_abs_diff(full.values(), slices.values()) < 1e-12);
    }
  }

  TEST_CASE("mlb backend is the identity core") {
    std::mt19937_64 rng(17);
    FusionParams p = random_params({3, 3, 3, 3, 3, 1, FusionBackend::mlb, false}, rng);
    CHECK(p.M.empty());
    const Vector q = random_vector(3, rng), v = random_vector(3, rng);
    CHECK(lowrank_fuse(q, v, p) == elementwise_product(q, v));
    CHECK(max_abs_diff(fuse_via_core(compose_core(p), q, v).values(), elementwise_product(q, v).values()) < 1e-15);
    CHECK_THROWS_AS(FusionConfig({3, 3, 3, 3, 2, 1, FusionBackend::mlb, false}).validate(), ConfigError);
  }

  TEST_CASE("tanh inputs bound the projected features") {
    std::mt19937_64 rng(18);
    FusionParams p = random_params({3, 3, 3, 4, 4, 2, FusionBackend::mutan, true}, rng);
    auto [qp, vp] = project(Vector{50, -50, 50}, Vector{-50, 50, 50}, p);
    for (double x : qp.values()) CHECK(std::abs(x) <= 1.0);
    for (double x : vp.values()) CHECK(std::abs(x) <= 1.0);
    CHECK_THROWS_AS(compose_full_tensor(p), ContractError);
  }

  TEST_CASE("parameter count of the slice pairs") {
    FusionConfig c;
    CHECK(c.slice_parameter_count() == c.rank * c.t * (c.t + c.t_v));
    std::mt19937_64 rng(19);
    FusionParams p = random_params(c, rng);
    std::size_t n = 0;
    for (std::size_t r = 0; r < c.rank; ++r) n += p.M[r]->value.size() + p.N[r]->value.size();
    CHECK(n == c.slice_parameter_count());
  }
}

TEST_SUITE("fusion") {
  TEST_CASE("dual: both directions share one kernel") {
    std::mt19937_64 rng(20);
    DualFusion f{random_params({3, 2, 3, 3, 2, 2, FusionBackend::mutan, false}, rng)};
    const Vector x = random_vector(3, rng), v = random_vector(2, rng);
    CHECK(infer_answer_feature(Vector(3), v, f) == Vector(3));
    CHECK(infer_question_feature(Vector(3), v, f) == Vector(3));
    CHECK(infer_answer_feature(x, v, f) == lowrank_fuse(x, v, f.params));
    CHECK(infer_question_feature(x, v, f) == infer_answer_feature(x, v, f));
  }

  TEST_CASE("dual: dense symmetric mode matches the transposed-slice contraction") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
      DualFusion f{random_params({3, 4, 3, 3, 2, 2, FusionBackend::mutan, false}, rng), DualMode::dense_symmetric};
      const Vector a = random_vector(3, rng), v = random_vector(2, rng);
      const Tensor3 sym = symmetrize_core(compose_core(f.params));
      Vector expect(3);
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j)
          for (std::size_t k = 0; k < 3; ++k) expect[k] += sym(k, j, i) * a[i] * v[j];
      CHECK(max_abs_diff(infer_question_feature(a, v, f).values(), expect.values()) < 1e-12);
      CHECK(max_abs_diff(infer_answer_feature(a, v, f).values(), expect.values()) < 1e-12);
    }
  }

  TEST_CASE("dual: symmetrize core") {
    std::mt19937_64 rng(22);
    const Tensor3 t = test::random_tensor({3, 2, 3}, rng);
    const Tensor3 s = symmetrize_core(t);
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t k = 0; k < 3; ++k) {
          CHECK(s(i, j, k) == s(k, j, i));
          CHECK(s(i, j, k) == doctest::Approx(0.5 * (t(i, j, k) + t(k, j, i))).epsilon(1e-15));
        }
    CHECK(symmetrize_core(s) == s);

    Tensor3 anti({2, 1, 2});
    anti(0, 0, 1) = 1.5;
    anti(1, 0, 0) = -1.5;
    const Tensor3 cancelled = symmetrize_core(anti);
    for (double x : cancelled.values()) CHECK(x == 0.0);
    CHECK_THROWS_AS(symmetrize_core(Tensor3({2, 2, 3})), ShapeError);
  }

  TEST_CASE("dual: skip final projection") {
    std::mt19937_64 rng(23);
    const Vector f = random_vector(3, rng);
    const Matrix w = random_matrix(3, 4, rng);
    CHECK(skip_final_projection(f, w, true) == f);
    CHECK(skip_final_projection(f, Matrix::identity(3), false) == f);
    CHECK(skip_final_projection(f, w, false) == matvec(w.transposed(), f));
  }
}
