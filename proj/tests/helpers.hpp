#pragma once

#include <random>

#include "iqan/linalg.hpp"

namespace iqan::test {

inline Vector random_vector(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector v(n);
  for (double& x : v.values()) x = u(rng);
  return v;
}

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (double& x : m.values()) x = u(rng);
  return m;
}

inline Tensor3 random_tensor(Tensor3::Dims dims, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor3 t(dims);
  for (double& x : t.values()) x = u(rng);
  return t;
}

}  // namespace iqan::test
