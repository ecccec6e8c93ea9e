#pragma once

// Shared fixtures and brute-force oracles for the unit and acceptance suites.
// Oracles here never call into the assembled energy matrix.

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "critkit/error.hpp"
#include "critkit/form.hpp"

namespace critkit::testing {

inline std::string vid(int i, int width = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "v%0*d", width, i);
  return buf;
}

struct RandomFormOptions {
  int n = 20;
  int extra_edges = 0;
  double potential_lo = 0.0;
  double potential_hi = 0.0;
  bool random_measure = true;
  int dirichlet = 0;  // number of boundary vertices (never vertex 0)
};

/// Random tree (plus optional extra edges) with positive weights.
inline GraphSpec random_spec(std::mt19937_64& rng, const RandomFormOptions& opt) {
  std::uniform_real_distribution<double> weight(0.5, 2.0);
  std::uniform_real_distribution<double> pot(opt.potential_lo, opt.potential_hi);
  GraphSpec s;
  for (int i = 0; i < opt.n; ++i) s.vertices.push_back(vid(i));
  for (int i = 1; i < opt.n; ++i) {
    std::uniform_int_distribution<int> parent(0, i - 1);
    s.edges.push_back({vid(parent(rng)), vid(i), weight(rng)});
  }
  std::map<std::pair<int, int>, bool> used;
  for (const auto& e : s.edges) used[{std::stoi(e.u.substr(1)), std::stoi(e.v.substr(1))}] = true;
  std::uniform_int_distribution<int> any(0, opt.n - 1);
  for (int k = 0, tries = 0; k < opt.extra_edges && tries < 100 * opt.extra_edges; ++tries) {
    int a = any(rng), b = any(rng);
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (used[{a, b}] || used[{b, a}]) continue;
    used[{a, b}] = true;
    s.edges.push_back({vid(a), vid(b), weight(rng)});
    ++k;
  }
  for (int i = 0; i < opt.n; ++i) {
    if (opt.random_measure) s.mu[vid(i)] = weight(rng);
    if (opt.potential_hi > opt.potential_lo) s.potential[vid(i)] = pot(rng);
  }
  for (int i = 0; i < opt.dirichlet && i + 1 < opt.n; ++i) s.dirichlet.push_back(vid(opt.n - 1 - i));
  return s;
}

inline GraphForm random_form(std::mt19937_64& rng, const RandomFormOptions& opt) {
  return build_form(random_spec(rng, opt));
}

/// Path v0 - v1 - ... - v(n-1) with unit weights and measure.
inline GraphSpec path_spec(int n, int width = 3) {
  GraphSpec s;
  for (int i = 0; i < n; ++i) s.vertices.push_back(vid(i, width));
  for (int i = 0; i + 1 < n; ++i) s.edges.push_back({vid(i, width), vid(i + 1, width), 1.0});
  return s;
}

/// Dirichlet path: vertices 0..N with the boundary at 0.
inline GraphForm dirichlet_path(int N) {
  GraphSpec s = path_spec(N + 1);
  s.dirichlet = {vid(0)};
  return build_form(s);
}

inline GraphForm single_vertex(double c, double mu = 1.0) {
  GraphSpec s;
  s.vertices = {"x"};
  s.mu["x"] = mu;
  s.potential["x"] = c;
  return build_form(s);
}

inline GraphForm two_path(double b = 1.0) {
  GraphSpec s;
  s.vertices = {"a", "b"};
  s.edges = {{"a", "b", b}};
  return build_form(s);
}

/// Builds a vertex function from an id -> value map (other entries zero).
inline VertexFunction fn(const GraphForm& form, const std::map<std::string, double>& values) {
  VertexFunction f = form.zeros();
  for (const auto& [id, v] : values) f[form.require_index(id)] = v;
  return f;
}

/// Double loop over the spec's edges and vertices: the defining sum of q.
inline double brute_force_q(const GraphSpec& spec, const std::map<std::string, double>& f) {
  auto value = [&](const std::string& id) {
    for (const auto& d : spec.dirichlet)
      if (d == id) return 0.0;
    auto it = f.find(id);
    return it == f.end() ? 0.0 : it->second;
  };
  double q = 0.0;
  for (const auto& e : spec.edges) {
    const double d = value(e.u) - value(e.v);
    q += e.weight * d * d;
  }
  for (const auto& id : spec.vertices) {
    const double mu = spec.mu.count(id) ? spec.mu.at(id) : 1.0;
    const double c = spec.potential.count(id) ? spec.potential.at(id) : 0.0;
    const double x = value(id);
    q += c * x * x * mu;
  }
  return q;
}

/// Code of the critkit::Error thrown by f, or nullopt when nothing is thrown.
template <class F>
std::optional<ErrorCode> thrown_code(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

#define CHECK_THROWS_AS_CODE(expr, code_value) \
  CHECK(::critkit::testing::thrown_code([&] { (void)(expr); }) == std::optional<::critkit::ErrorCode>(code_value))

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace critkit::testing
