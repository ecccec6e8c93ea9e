#include <cmath>
#include <random>

#include "critkit/error.hpp"
#include "critkit/resolvent.hpp"
#include "critkit/weak_ineq.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace critkit;
using namespace critkit::testing;

namespace {

GraphForm positive_potential_form(std::mt19937_64& rng, int n) {
  RandomFormOptions opt;
  opt.n = n;
  opt.extra_edges = n / 4;
  opt.potential_lo = 0.05;
  opt.potential_hi = 1.0;
  return random_form(rng, opt);
}

VertexFunction positive_weight(const GraphForm& form, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 2.0);
  VertexFunction w = form.zeros();
  for (Index v : form.free_vertices()) w[v] = u(rng);
  return w;
}

double sup_ratio(const GraphForm& form, const VertexFunction& f, const VertexFunction& h) {
  double s = 0.0;
  for (Index v : form.free_vertices()) s = std::max(s, std::abs(f[v] / h[v]));
  return s;
}

double weighted_mass(const GraphForm& form, const VertexFunction& f, const VertexFunction& w) {
  double s = 0.0;
  for (Index v : form.free_vertices()) s += f[v] * f[v] * w[v] * form.measure()[v];
  return s;
}

// Brute-force check of the weak inequality on a mix of random, sign-pattern
// and clamped test functions.
void check_certificate(const GraphForm& form, const AlphaProfile& p, std::mt19937_64& rng, int trials) {
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> kind(0, 2);
  for (int k = 0; k < trials; ++k) {
    VertexFunction f = random_function(form, rng);
    const int variant = kind(rng);
    if (variant == 1) f = f.cwiseSign().cwiseProduct(p.h);
    if (variant == 2) f = f.cwiseMin(p.h).cwiseMax(-p.h);
    if (p.mode == ProfileMode::Poincare) f = poincare_project(form, f, p.h, p.w).f_proj;
    const double lhs = weighted_mass(form, f, p.w);
    const double q = evaluate(form, f);
    const double phi = sup_ratio(form, f, p.h);
    for (std::size_t i = 0; i < p.r_grid.size(); ++i) {
      const double rhs = p.alpha_cert[i] * q + p.r_grid[i] * phi * phi;
      REQUIRE(lhs <= rhs + 1e-9 * std::max(1.0, lhs));
    }
  }
}

}  // namespace

TEST_CASE("alpha_profile: scalar closed form") {
  const GraphForm one = single_vertex(1.0);
  const std::vector<double> grid{0.01, 0.1, 0.5, 0.9, 1.0, 2.0};
  const AlphaProfile p = alpha_profile(one, one.ones(), one.ones(), grid, ProfileMode::Hardy, 1);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double exact = std::max(1.0 - grid[i], 0.0);
    CHECK(p.alpha_cert[i] == doctest::Approx(exact).epsilon(1e-12));
    CHECK(p.alpha_lb[i] == doctest::Approx(exact).epsilon(1e-12));
  }
  CHECK(p.weight_mass == doctest::Approx(1.0));
  CHECK(p.alpha_max == doctest::Approx(1.0));
}

TEST_CASE("alpha_profile: Poincare mode on the two-vertex path") {
  const GraphForm form = two_path();
  const std::vector<double> grid{1e-6, 0.1, 1.0, 1.5, 2.0, 3.0};
  const AlphaProfile p = alpha_profile(form, form.ones(), form.ones(), grid, ProfileMode::Poincare, 3);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double exact = std::max((2.0 - grid[i]) / 4.0, 0.0);
    CHECK(std::abs(p.alpha_cert[i] - exact) < 1e-9);
    CHECK(std::abs(p.alpha_lb[i] - exact) < 1e-9);
  }
}

TEST_CASE("alpha_profile: certificates hold and sandwich the lower bound") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 6; ++trial) {
    const GraphForm form = positive_potential_form(rng, 12 + 3 * trial);
    const VertexFunction w = positive_weight(form, rng);
    const VertexFunction h = resolvent_apply(form, 1.0, form.ones());
    const AlphaProfile p = alpha_profile(form, w, h, default_r_grid(1.0, 1e-6, 2), ProfileMode::Hardy, trial,
                                         ProfileBudget{10, 100});
    for (std::size_t i = 0; i < p.r_grid.size(); ++i) {
      CHECK(p.alpha_lb[i] <= p.alpha_cert[i] + 1e-10);
      CHECK(p.alpha_cert[i] <= p.alpha_max * (1 + 1e-9));
      if (i > 0) CHECK(p.alpha_cert[i] <= p.alpha_cert[i - 1]);
    }
    check_certificate(form, p, rng, 1000);
  }
}

TEST_CASE("alpha_profile: Poincare certificates on critical forms") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    RandomFormOptions opt;
    opt.n = 10 + 4 * trial;
    opt.extra_edges = 3;
    const GraphForm form = random_form(rng, opt);
    const VertexFunction w = positive_weight(form, rng);
    const AlphaProfile p = alpha_profile(form, w, form.ones(), default_r_grid(w.dot(form.measure()), 1e-6, 2),
                                         ProfileMode::Poincare, trial, ProfileBudget{10, 100});
    CHECK(std::isfinite(p.alpha_max));
    for (std::size_t i = 0; i < p.r_grid.size(); ++i) CHECK(p.alpha_lb[i] <= p.alpha_cert[i] + 1e-10);
    check_certificate(form, p, rng, 1000);
  }
}

TEST_CASE("alpha_profile: r beyond the weight mass gives zero") {
  std::mt19937_64 rng(5);
  const GraphForm form = positive_potential_form(rng, 15);
  const VertexFunction w = positive_weight(form, rng);
  const VertexFunction h = resolvent_apply(form, 1.0, form.ones());
  AlphaProfile p = alpha_profile(form, w, h, {0.5}, ProfileMode::Hardy, 0, ProfileBudget{2, 10});
  const double mass = p.weight_mass;
  p = alpha_profile(form, w, h, {mass, 2 * mass}, ProfileMode::Hardy, 0, ProfileBudget{4, 20});
  CHECK(p.alpha_cert[0] == 0.0);
  CHECK(p.alpha_cert[1] == 0.0);
  CHECK(p.alpha_lb[1] == 0.0);
}

TEST_CASE("alpha_profile: critical form in Hardy mode has an infinite pencil maximum") {
  const GraphForm form = two_path();
  const AlphaProfile p = alpha_profile(form, form.ones(), form.ones(), {0.5, 1.0, 2.0}, ProfileMode::Hardy, 0);
  CHECK(std::isinf(p.alpha_max));
  CHECK(std::isinf(p.alpha_cert[0]));
  CHECK(std::isinf(p.alpha_lb[0]));
  CHECK(p.alpha_cert[2] == 0.0);
}

TEST_CASE("alpha_profile: deterministic for a fixed seed") {
  std::mt19937_64 rng(8);
  const GraphForm form = positive_potential_form(rng, 20);
  const VertexFunction h = resolvent_apply(form, 1.0, form.ones());
  const auto grid = default_r_grid(1.0, 1e-4, 1);
  const AlphaProfile a = alpha_profile(form, form.ones(), h, grid, ProfileMode::Hardy, 42, {8, 50});
  const AlphaProfile b = alpha_profile(form, form.ones(), h, grid, ProfileMode::Hardy, 42, {8, 50}, {}, 1);
  CHECK(a.alpha_cert == b.alpha_cert);
  CHECK(a.alpha_lb == b.alpha_lb);
}

TEST_CASE("alpha_profile: errors") {
  std::mt19937_64 rng(9);
  const GraphForm form = positive_potential_form(rng, 8);
  CHECK_THROWS_AS_CODE(alpha_profile(form, form.ones(), form.ones(), {0.1}, ProfileMode::Poincare, 0),
                       ErrorCode::KernelMismatch);
  CHECK_THROWS_AS_CODE(alpha_profile(form, form.ones(), form.ones(), {0.2, 0.1}, ProfileMode::Hardy, 0),
                       ErrorCode::BadParams);
  CHECK_THROWS_AS_CODE(alpha_profile(form, form.ones(), form.zeros(), {0.1}, ProfileMode::Hardy, 0),
                       ErrorCode::NonPositiveH);
  CHECK_THROWS_AS_CODE(alpha_profile(form, -form.ones(), form.ones(), {0.1}, ProfileMode::Hardy, 0),
                       ErrorCode::NonPositiveInput);
}

TEST_CASE("decay_rate: constant profile inverts in closed form") {
  for (double a : {0.3, 1.0, 4.0}) {
    AlphaProfile p;
    p.r_grid = default_r_grid(10.0, 1e-40, 4);
    p.alpha_cert.assign(p.r_grid.size(), a);
    p.alpha_max = a;
    p.weight_mass = 10.0;
    const DecayCurve xi = decay_rate(p, {0.05, 0.1, 1.0, 3.0, 10.0});
    for (const auto& [t, x] : xi) CHECK(std::abs(x - std::exp(-2 * t / a)) <= 1e-9 * std::exp(-2 * t / a));
  }
}

TEST_CASE("decay_rate: degenerate and coarse grids") {
  AlphaProfile zero;
  zero.r_grid = {1e-3, 1.0};
  zero.alpha_cert = {0.0, 0.0};
  zero.weight_mass = 1.0;
  for (const auto& [t, x] : decay_rate(zero, {0.1, 1.0})) CHECK(x == 0.0);

  AlphaProfile coarse;
  coarse.r_grid = {0.5, 1.0};
  coarse.alpha_cert = {1.0, 0.0};
  coarse.alpha_max = std::numeric_limits<double>::infinity();
  coarse.weight_mass = 1.0;
  CHECK_THROWS_AS_CODE(decay_rate(coarse, {10.0}), ErrorCode::GridTooCoarse);
  coarse.alpha_max = 1.0;
  const DecayCurve xi = decay_rate(coarse, {10.0});
  CHECK(std::abs(xi[0].second - std::exp(-20.0)) <= 1e-9 * std::exp(-20.0));
  CHECK_THROWS_AS_CODE(decay_rate(coarse, {0.0}), ErrorCode::BadParams);
}

TEST_CASE("decay_rate: nonincreasing and below the scalar semigroup bound") {
  const GraphForm one = single_vertex(1.0);
  const AlphaProfile p =
      alpha_profile(one, one.ones(), one.ones(), default_r_grid(1.0, 1e-12, 8), ProfileMode::Hardy, 0);
  const std::vector<double> ts{0.1, 0.5, 1.0, 2.0, 5.0};
  const DecayCurve xi = decay_rate(p, ts);
  for (std::size_t k = 0; k < xi.size(); ++k) {
    if (k > 0) CHECK(xi[k].second <= xi[k - 1].second);
    CHECK(2 * xi[k].second >= std::exp(-2 * ts[k]));
  }
  const DecayReport rep = verify_decay(one, one.ones(), xi, 20, 1);
  CHECK(rep.worst_margin >= 0.0);
  CHECK(rep.samples == 20 * ts.size());
}

TEST_CASE("verify_decay: random subcritical forms with h = G_1 1") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 15; ++trial) {
    const GraphForm form = positive_potential_form(rng, 10 + trial);
    const VertexFunction h = resolvent_apply(form, 1.0, form.ones());
    const AlphaProfile p =
        alpha_profile(form, form.ones(), h, default_r_grid(1.0, 1e-12, 2), ProfileMode::Hardy, trial, {6, 60});
    const DecayCurve xi = decay_rate(p, {0.1, 1.0, 10.0});
    const DecayReport rep = verify_decay(form, h, xi, 40, trial);
    CHECK(rep.worst_margin >= -1e-8);
  }
}

TEST_CASE("verify_decay: errors") {
  const GraphForm path = build_form(path_spec(3));
  // Strict interior minimum at a zero-potential vertex.
  const VertexFunction dip = fn(path, {{vid(0), 2.0}, {vid(1), 1.0}, {vid(2), 2.0}});
  CHECK_THROWS_AS_CODE(verify_decay(path, dip, {{1.0, 0.5}}, 5, 0), ErrorCode::ExcessivityFailure);
  const GraphForm one = single_vertex(1.0);
  CHECK_THROWS_AS_CODE(verify_decay(one, one.ones(), {{0.01, 1e-6}}, 5, 0), ErrorCode::ViolationFound);
}

TEST_CASE("truncation_map") {
  std::mt19937_64 rng(3);
  const GraphForm form = positive_potential_form(rng, 12);
  const VertexFunction h = resolvent_apply(form, 1.0, form.ones());
  const VertexFunction small = 0.5 * h;
  CHECK(truncation_map(small, h) == small);
  CHECK((truncation_map(3.0 * h, h) - h).cwiseAbs().maxCoeff() == 0.0);
  for (int k = 0; k < 50; ++k) {
    const VertexFunction f = random_function(form, rng);
    const VertexFunction t = truncation_map(f, h);
    CHECK(t.cwiseAbs() == f.cwiseAbs().cwiseMin(h));
    CHECK(truncation_map(t, h) == t);
    CHECK(evaluate(form, t) <= evaluate(form, f) + 1e-12);
  }
  CHECK_THROWS_AS_CODE(truncation_map(h, -h), ErrorCode::NonPositiveH);
}

TEST_CASE("poincare_project") {
  std::mt19937_64 rng(4);
  const GraphForm form = positive_potential_form(rng, 14);
  const VertexFunction h = resolvent_apply(form, 1.0, form.ones());
  const VertexFunction w = positive_weight(form, rng);
  auto pair_w = [&](const VertexFunction& a) {
    double s = 0.0;
    for (Index v : form.free_vertices()) s += a[v] * h[v] * w[v] * form.measure()[v];
    return s;
  };

  const Projection self = poincare_project(form, h, h, w);
  CHECK(self.c == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(self.f_proj.cwiseAbs().maxCoeff() < 1e-14);

  for (int k = 0; k < 30; ++k) {
    const VertexFunction f = random_function(form, rng);
    const Projection p = poincare_project(form, f, h, w);
    CHECK(std::abs(pair_w(p.f_proj)) <= 1e-12 * f.norm() * h.norm());
    CHECK(std::abs(poincare_project(form, p.f_proj, h, w).c) < 1e-12);

    const Projection t = poincare_project(form, f, h, w, true);
    CHECK(std::abs(pair_w(t.f_proj)) <= 1e-12 * std::max(1.0, f.norm() * h.norm()));
    CHECK((t.f_proj.cwiseAbs() - h).maxCoeff() <= 0.0);
  }
  CHECK_THROWS_AS_CODE(poincare_project(form, h, h, form.zeros()), ErrorCode::BadParams);
}
