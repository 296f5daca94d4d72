#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "iqan/config.hpp"
#include "iqan/errors.hpp"
#include "iqan/gradcheck.hpp"
#include "iqan/model.hpp"
#include "iqan/trainer.hpp"

using namespace iqan;

namespace {

Matrix some_cells(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return test::random_matrix(16, kCellDim, rng);
}

const std::vector<int> kQuestion{4, 8, 5, 6, 13, 15};

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("shared codec is one answer array and one recurrent cell") {
    ModelConfig c;
    IqanModel m(c, 3);
    CHECK(m.classifier.E_a == m.answer_embedding.E_a);
    CHECK(m.encoder.cell.W_z == m.decoder.cell.W_z);
    CHECK(m.encoder.word_embedding == m.decoder.word_embedding);
    CHECK(m.find("answers.E_a") != nullptr);

    // Updating through one view is visible through the other.
    m.classifier.E_a->value(2, 1) += 0.75;
    CHECK(m.answer_embedding.E_a->value == m.classifier.E_a->value);
    const Matrix cells = some_cells(1);
    Tape tape(false);
    const Matrix via_table = embed_answer(tape, 2, m.answer_embedding).value();
    const Matrix via_classifier = row(tape.param(m.classifier.E_a), 2).value();
    CHECK(via_table == via_classifier);
  }

  TEST_CASE("separate codec keeps independent arrays") {
    ModelConfig c;
    c.share_codec = false;
    IqanModel m(c, 3);
    CHECK(m.classifier.E_a != m.answer_embedding.E_a);
    CHECK(m.encoder.cell.W_z != m.decoder.cell.W_z);
    CHECK(m.find("vqa.classifier") != nullptr);
    CHECK(m.find("vqg.answer_embedding") != nullptr);
  }

  TEST_CASE("dual mutan keeps exactly one fusion set") {
    ModelConfig c;
    CHECK(IqanModel(c, 1).fusion_sets() == 1);
    c.dual_mutan = false;
    CHECK(IqanModel(c, 1).fusion_sets() == 2);
    CHECK(IqanModel(regime_model(ModelConfig{}, Regime::baseline), 1).fusion_sets() == 2);
  }

  TEST_CASE("parameters are listed once each") {
    for (const auto& row : ablation_rows()) {
      IqanModel m(apply_row(ModelConfig{}, row), 2);
      std::set<const Parameter*> ptrs;
      std::set<std::string> names;
      for (const auto& p : m.parameters()) {
        CHECK(ptrs.insert(p.get()).second);
        CHECK(names.insert(p->name).second);
      }
    }
    const std::size_t full = IqanModel(ModelConfig{}, 1).parameters().size();
    const std::size_t separate = IqanModel(regime_model(ModelConfig{}, Regime::baseline), 1).parameters().size();
    CHECK(separate > full);
  }

  TEST_CASE("baseline regimes clear every sharing flag") {
    for (Regime r : {Regime::baseline, Regime::vqg_baseline}) {
      const ModelConfig m = regime_model(ModelConfig{}, r);
      CHECK_FALSE(m.dual_mutan);
      CHECK_FALSE(m.duality_regularizer);
      CHECK_FALSE(m.share_codec);
      CHECK_FALSE(m.share_attention);
    }
    const ModelConfig d = regime_model(ModelConfig{}, Regime::vqg_dt);
    CHECK(d.dual_mutan);
    CHECK(d.share_codec);
  }

  TEST_CASE("total loss is the weighted sum of its terms") {
    ModelConfig c;
    c.weights = {0.7, 1.3, 0.4, 2.1};
    for (bool reg : {true, false}) {
      c.duality_regularizer = reg;
      IqanModel m(c, 4);
      Tape tape(false);
      const ForwardResult r = forward(tape, m, some_cells(2), kQuestion, 9);
      const LossWeights w = c.effective_weights();
      const double expect = w.vqa * r.vqa_loss.scalar() + w.vqg * r.vqg_loss.scalar() +
                            w.q_duality * r.q_duality.scalar() + w.a_duality * r.a_duality.scalar();
      CHECK(std::abs(r.total.scalar() - expect) < 1e-12);
      CHECK(r.q_duality.scalar() > 0.0);
      CHECK(r.a_duality.scalar() > 0.0);
      if (!reg) CHECK(w.q_duality == 0.0);
    }
  }

  TEST_CASE("answer scores agree between forward and the VQA-only path") {
    IqanModel m(ModelConfig{}, 5);
    const Matrix cells = some_cells(3);
    Tape tape(false);
    const ForwardResult r = forward(tape, m, cells, kQuestion, 0);
    CHECK(r.answer_scores.value().to_vector() == answer_scores(m, cells, kQuestion));
    CHECK(r.answer_scores.rows() == 15);
    CHECK(question_seed(m, cells, 2).size() == m.config().fusion.d_q);
  }

  TEST_CASE("snapshot and restore") {
    IqanModel m(ModelConfig{}, 6);
    const auto snap = m.snapshot();
    for (const auto& p : m.parameters()) p->value.fill(0.5);
    m.restore(snap);
    for (std::size_t i = 0; i < snap.size(); ++i) CHECK(m.parameters()[i]->value == snap[i]);
    auto bad = snap;
    bad.pop_back();
    CHECK_THROWS_AS(m.restore(bad), ContractError);
  }

  TEST_CASE("config validation") {
    ModelConfig c;
    c.fusion.d_a = 20;
    CHECK_THROWS_AS(IqanModel(c, 1), ConfigError);
    c.share_attention = false;
    CHECK_NOTHROW(IqanModel(c, 1));
    c.weights.vqa = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("same seed, same initial weights") {
    const auto a = IqanModel(ModelConfig{}, 9).snapshot();
    const auto b = IqanModel(ModelConfig{}, 9).snapshot();
    const auto c = IqanModel(ModelConfig{}, 10).snapshot();
    CHECK(a == b);
    CHECK_FALSE(a == c);
  }
}
