#include "iqan/attention.hpp"

#include <algorithm>
#include <cmath>

#include "iqan/errors.hpp"

namespace iqan {

Vector FeatureGrid::cell(std::size_t r, std::size_t c) const {
  const auto row = cells.row(r * width + c);
  return Vector(std::vector<double>(row.begin(), row.end()));
}

std::vector<ParamPtr> AttentionParams::parameters() const {
  std::vector<ParamPtr> out{W_g, W_c};
  for (std::size_t r = 0; r < m.size(); ++r) {
    out.push_back(m[r]);
    out.push_back(n[r]);
  }
  return out;
}

AttentionParams make_attention_params(const AttentionConfig& config, const std::string& prefix, Rng& rng) {
  if (config.rank == 0 || config.t == 0 || config.t_v == 0) throw ConfigError("attention dims must be >= 1");
  AttentionParams p;
  p.config = config;
  p.W_g = make_param(prefix + ".W_g", uniform_init(config.t, config.d_guide, config.d_guide, rng));
  p.W_c = make_param(prefix + ".W_c", uniform_init(config.t_v, config.d_v, config.d_v, rng));
  for (std::size_t r = 0; r < config.rank; ++r) {
    p.m.push_back(make_param(prefix + ".m." + std::to_string(r), uniform_init(config.t, 1, config.t, rng)));
    p.n.push_back(make_param(prefix + ".n." + std::to_string(r), uniform_init(config.t_v, 1, config.t_v, rng)));
  }
  return p;
}

namespace {

void check_inputs(std::size_t cells, std::size_t cell_dim, std::size_t guide_dim, const AttentionConfig& c) {
  if (cells == 0) throw ContractError("attend: empty grid");
  if (cell_dim != c.d_v) throw ShapeError("attend: cell dim " + std::to_string(cell_dim) + " != " + std::to_string(c.d_v));
  if (guide_dim != c.d_guide) {
    throw ShapeError("attend: guide dim " + std::to_string(guide_dim) + " != " + std::to_string(c.d_guide));
  }
}

}  // namespace

AttentionResult pool_with_scores(const FeatureGrid& grid, const Vector& scores) {
  if (grid.count() == 0) throw ContractError("attend: empty grid");
  if (scores.size() != grid.count()) throw ShapeError("pool_with_scores: one score per cell required");
  AttentionResult out;
  out.scores = scores;
  out.weights = Vector(scores.size());
  const double mx = *std::max_element(scores.values().begin(), scores.values().end());
  double z = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) z += (out.weights[i] = std::exp(scores[i] - mx));
  for (double& w : out.weights.values()) w /= z;
  out.pooled = matvec_transposed(grid.cells, out.weights);
  return out;
}

AttentionResult attend(const FeatureGrid& grid, const Vector& guide, const AttentionParams& params) {
  check_inputs(grid.count(), grid.dim(), guide.size(), params.config);
  const Vector g = matvec(params.W_g->value, guide);
  Vector scores(grid.count());
  for (std::size_t i = 0; i < grid.count(); ++i) {
    const auto row = grid.cells.row(i);
    const Vector c = matvec(params.W_c->value, Vector(std::vector<double>(row.begin(), row.end())));
    double s = 0.0;
    for (std::size_t r = 0; r < params.m.size(); ++r) {
      s += dot(g, params.m[r]->value.to_vector()) * dot(c, params.n[r]->value.to_vector());
    }
    scores[i] = s;
  }
  return pool_with_scores(grid, scores);
}

Var attend(Tape& tape, Var cells, Var guide, const AttentionParams& params) {
  check_inputs(cells.rows(), cells.cols(), guide.rows(), params.config);
  Var g = matmul(tape.param(params.W_g), guide);    // t x 1
  Var projected = matmul_nt(cells, tape.param(params.W_c));  // cells x t_v
  Var scores;
  for (std::size_t r = 0; r < params.m.size(); ++r) {
    Var term = scale_by(matmul_tn(tape.param(params.m[r]), g), matmul(projected, tape.param(params.n[r])));
    scores = r == 0 ? term : add(scores, term);
  }
  return matmul_tn(cells, softmax(scores));
}

}  // namespace iqan
