#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "critkit/error.hpp"
#include "critkit/resolvent.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace critkit;
using namespace critkit::testing;

namespace {

GraphForm random_positive_form(std::mt19937_64& rng, int n, double c_lo = 0.05) {
  RandomFormOptions opt;
  opt.n = n;
  opt.extra_edges = n / 3;
  opt.potential_lo = c_lo;
  opt.potential_hi = 1.0;
  return random_form(rng, opt);
}

GraphForm with_shifted_potential(const GraphForm& form, double shift) {
  GraphSpec s = form.spec();
  for (auto& [id, c] : s.potential) c += shift;
  return build_form(s);
}

}  // namespace

TEST_CASE("resolvent: scalar and kernel examples") {
  const GraphForm one = single_vertex(1.0);
  CHECK(resolvent_apply(one, 1.0, one.ones())[0] == doctest::Approx(0.5));
  const GraphForm two = two_path();
  const VertexFunction u = resolvent_apply(two, 1.0, two.ones());
  CHECK(u[0] == doctest::Approx(1.0));
  CHECK(u[1] == doctest::Approx(1.0));
  CHECK_THROWS_AS(resolvent_apply(two, 0.0, two.ones()), Error);
}

TEST_CASE("resolvent: defining identity q(u,g) + alpha<u,g> = <f,g>") {
  std::mt19937_64 rng(31);
  const GraphForm form = random_positive_form(rng, 30);
  const VertexFunction f = random_function(form, rng);
  const double alpha = 0.37;
  const VertexFunction u = resolvent_apply(form, alpha, f);
  for (int k = 0; k < 20; ++k) {
    const VertexFunction g = random_function(form, rng);
    const double lhs = evaluate_bilinear(form, u, g) + alpha * inner(form, u, g);
    const double rhs = inner(form, f, g);
    CHECK(std::abs(lhs - rhs) < 1e-9 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("resolvent: positivity, monotonicity in alpha and the resolvent identity") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 10; ++trial) {
    const GraphForm form = random_positive_form(rng, 15 + trial, 0.0);
    const VertexFunction f = random_function(form, rng).cwiseAbs();
    VertexFunction prev = form.zeros();
    for (double alpha : {4.0, 1.0, 0.25, 0.0625}) {
      const VertexFunction u = resolvent_apply(form, alpha, f);
      CHECK(u.minCoeff() >= -1e-14);
      CHECK((u - prev).minCoeff() >= -1e-12 * u.maxCoeff());
      prev = u;
    }
    const double a = 0.3, b = 1.7;
    const VertexFunction g = random_function(form, rng);
    const VertexFunction lhs = resolvent_apply(form, a, g) - resolvent_apply(form, b, g);
    const VertexFunction rhs = (b - a) * resolvent_apply(form, a, resolvent_apply(form, b, g));
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9 * std::max(1.0, lhs.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("semigroup: scalar, conservative and composition examples") {
  const GraphForm one = single_vertex(1.0);
  CHECK(semigroup_apply(one, 1.0, one.ones())[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

  std::mt19937_64 rng(41);
  RandomFormOptions opt;
  opt.n = 20;
  opt.extra_edges = 5;
  const GraphForm conservative = random_form(rng, opt);
  for (double t : {0.1, 1.0, 10.0}) {
    const VertexFunction u = semigroup_apply(conservative, t, conservative.ones());
    CHECK((u - conservative.ones()).cwiseAbs().maxCoeff() < 1e-10);
  }

  const GraphForm form = random_positive_form(rng, 25);
  const VertexFunction f = random_function(form, rng);
  const VertexFunction st = semigroup_apply(form, 0.4, semigroup_apply(form, 1.1, f));
  const VertexFunction direct = semigroup_apply(form, 1.5, f);
  CHECK((st - direct).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(norm_sq(form, direct) <= norm_sq(form, f) + 1e-12);
  const VertexFunction pos = semigroup_apply(form, 0.7, f.cwiseAbs());
  CHECK(pos.minCoeff() >= -1e-12);
}

TEST_CASE("semigroup: Krylov action above the dense cutoff matches a dense oracle") {
  std::mt19937_64 rng(42);
  const GraphForm form = random_positive_form(rng, 620, 0.0);
  REQUIRE(form.free_count() > kSemigroupDenseCutoff);
  const VertexFunction f = random_function(form, rng);
  const double t = 2.5;
  const VertexFunction krylov = semigroup_apply(form, t, f);
  // Oracle: eigendecomposition of the symmetrized operator, computed here.
  const Vector s = form.free_measure().cwiseSqrt();
  Matrix S = s.cwiseInverse().asDiagonal() * Matrix(form.energy_matrix()) * s.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
  const Vector y = s.cwiseProduct(form.restrict_free(f));
  const Vector z = eig.eigenvectors() *
                   (eig.eigenvectors().transpose() * y).cwiseProduct((-t * eig.eigenvalues().array()).exp().matrix());
  const Vector oracle = z.cwiseQuotient(s);
  CHECK((form.restrict_free(krylov) - oracle).cwiseAbs().maxCoeff() < 1e-9 * oracle.cwiseAbs().maxCoeff());
}

TEST_CASE("green: invertible scalar and kernel direction") {
  const GraphForm one = single_vertex(1.0);
  const GreenResult g1 = green_apply(one, one.ones());
  REQUIRE(g1.status == GreenStatus::Finite);
  CHECK((*g1.value)[0] == doctest::Approx(1.0).epsilon(1e-10));

  const GraphForm two = two_path();
  const GreenResult g2 = green_apply(two, two.ones());
  CHECK(g2.status == GreenStatus::Diverges);
  CHECK(g2.loglog_slope == doctest::Approx(-1.0).epsilon(1e-6));
  // The trace is nondecreasing as alpha decreases.
  for (std::size_t i = 1; i < g2.alpha_trace.size(); ++i)
    CHECK(g2.alpha_trace[i].second >= g2.alpha_trace[i - 1].second);
}

TEST_CASE("green: Dirichlet path Green function is min(n, m)") {
  const int N = 30;
  const GraphForm form = dirichlet_path(N);
  for (int m : {1, 7, 30}) {
    const GreenResult r = green_apply(form, fn(form, {{vid(m), 1.0}}));
    REQUIRE(r.status == GreenStatus::Finite);
    for (int n = 1; n <= N; ++n) {
      CHECK((*r.value)[form.require_index(vid(n))] == doctest::Approx(std::min(n, m)).epsilon(1e-9));
    }
  }
}

TEST_CASE("green: agrees with a direct solve of the invertible form") {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 10; ++trial) {
    const GraphForm form = random_positive_form(rng, 20 + trial, 0.01);
    const VertexFunction f = random_function(form, rng).cwiseAbs();
    const GreenResult r = green_apply(form, f);
    REQUIRE(r.status == GreenStatus::Finite);
    const Matrix K = Matrix(form.energy_matrix());
    const Vector direct = K.ldlt().solve(form.free_measure().cwiseProduct(form.restrict_free(f)));
    const Vector got = form.restrict_free(*r.value);
    CHECK((got - direct).cwiseAbs().maxCoeff() <= 1e-8 * direct.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("green: rejects signed input") {
  const GraphForm one = single_vertex(1.0);
  CHECK_THROWS_AS(green_apply(one, -one.ones()), Error);
}

TEST_CASE("excessive functions") {
  std::mt19937_64 rng(61);
  RandomFormOptions opt;
  opt.n = 12;
  opt.extra_edges = 4;
  const GraphForm conservative = random_form(rng, opt);
  const auto grid = default_excessive_grid(conservative);
  const ExcessiveReport ones = is_excessive(conservative, conservative.ones(), grid);
  CHECK(ones.excessive);
  CHECK(ones.grid_agrees);

  // G_alpha g is q_beta-excessive for beta >= alpha.
  const GraphForm form = random_positive_form(rng, 14, 0.0);
  const VertexFunction g = random_function(form, rng).cwiseAbs();
  const double alpha = 0.5;
  const VertexFunction h = resolvent_apply(form, alpha, g);
  for (double beta : {0.5, 1.0, 3.0}) {
    const GraphForm shifted = with_shifted_potential(form, beta);
    const ExcessiveReport rep = is_excessive(shifted, h, default_excessive_grid(shifted));
    CHECK(rep.excessive);
    CHECK(rep.grid_agrees);
  }

  // Strict interior minimum at a zero-potential vertex of a path.
  const GraphForm path = build_form(path_spec(5));
  const VertexFunction dip = fn(path, {{vid(0), 1.0}, {vid(1), 1.0}, {vid(2), 0.5}, {vid(3), 1.0}, {vid(4), 1.0}});
  const VertexFunction l_dip = apply_generator(path, dip);
  CHECK(l_dip[path.require_index(vid(2))] == doctest::Approx(-1.0));
  const ExcessiveReport bad = is_excessive(path, dip, default_excessive_grid(path));
  CHECK_FALSE(bad.excessive);
  CHECK(bad.grid_agrees);
}

TEST_CASE("excessive h is a supersolution for the semigroup") {
  std::mt19937_64 rng(62);
  const GraphForm form = random_positive_form(rng, 16, 0.1);
  // With c >= 0 the constant 1 is excessive, so G_1 1 <= 1 and L G_1 1 = 1 - G_1 1 >= 0.
  const VertexFunction h = resolvent_apply(form, 1.0, form.ones());
  REQUIRE(is_excessive(form, h, default_excessive_grid(form)).excessive);
  for (double t : {0.01, 0.5, 5.0}) {
    CHECK((semigroup_apply(form, t, h) - h).maxCoeff() <= 1e-12 * h.maxCoeff());
  }
}

TEST_CASE("resolvent contraction bounds") {
  const GraphForm two = two_path();
  const auto kernel = check_resolvent_contraction(two, two.ones(), 0.7);
  CHECK(kernel.q_scaled == doctest::Approx(kernel.q_f).epsilon(1e-12));
  CHECK(kernel.holds);

  // Eigenvector of the 2-path: f = (1, -1), L f = 2 f.
  const VertexFunction f = fn(two, {{"a", 1.0}, {"b", -1.0}});
  const double alpha = 0.5, lambda = 2.0;
  const auto eig = check_resolvent_contraction(two, f, alpha);
  const double expected = lambda * alpha * alpha / ((lambda + alpha) * (lambda + alpha)) * norm_sq(two, f);
  CHECK(eig.q_scaled == doctest::Approx(expected).epsilon(1e-12));
  CHECK(eig.q_f == doctest::Approx(lambda * norm_sq(two, f)));

  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 20; ++trial) {
    const GraphForm form = random_positive_form(rng, 10 + trial, 0.0);
    const auto rep = check_resolvent_contraction(form, random_function(form, rng), 0.1 + trial);
    CHECK(rep.holds);
  }
}
