#pragma once

#include <random>

namespace critkit {

template <class Rng>
VertexFunction random_function(const GraphForm& form, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VertexFunction f = VertexFunction::Zero(form.size());
  for (Index v : form.free_vertices()) f[v] = normal(rng);
  return f;
}

}  // namespace critkit
