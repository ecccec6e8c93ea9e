#include <random>

#include <Eigen/Eigenvalues>

#include "critkit/error.hpp"
#include "critkit/form.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace critkit;
using namespace critkit::testing;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("build_form: two vertices with zero potential have the constants as kernel") {
  const GraphForm form = two_path();
  CHECK(form.size() == 2);
  CHECK(evaluate(form, form.ones()) == doctest::Approx(0.0));
  CHECK(smallest_form_eigenvalue(form) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("build_form: validation errors") {
  GraphSpec neg;
  neg.vertices = {"x"};
  neg.potential["x"] = -1.0;
  CHECK(code_of([&] { build_form(neg); }) == ErrorCode::FormNotNonnegative);

  GraphSpec asym;
  asym.vertices = {"a", "b"};
  asym.edges = {{"a", "b", 1.0}, {"b", "a", 2.0}};
  CHECK(code_of([&] { build_form(asym); }) == ErrorCode::NonSymmetricWeights);

  GraphSpec mu;
  mu.vertices = {"a"};
  mu.mu["a"] = 0.0;
  CHECK(code_of([&] { build_form(mu); }) == ErrorCode::NonPositiveMeasure);

  GraphSpec bd;
  bd.vertices = {"a"};
  bd.dirichlet = {"zz"};
  CHECK(code_of([&] { build_form(bd); }) == ErrorCode::DisconnectedDirichletSpec);

  GraphSpec w;
  w.vertices = {"a", "b"};
  w.edges = {{"a", "b", -1.0}};
  CHECK(code_of([&] { build_form(w); }) == ErrorCode::NonPositiveWeight);
}

TEST_CASE("build_form: signed potential accepted when the form stays nonnegative") {
  // Path a-b with b=1 and c(a) = -0.2: the form matrix [[0.8,-1],[-1,1+c_b]].
  GraphSpec s;
  s.vertices = {"a", "b"};
  s.edges = {{"a", "b", 1.0}};
  s.potential = {{"a", -0.2}, {"b", 2.0}};
  const GraphForm form = build_form(s);
  CHECK(smallest_form_eigenvalue(form) > 0.0);
  CHECK_NOTHROW(check_first_bd(form, 200, 3));
}

TEST_CASE("energy matrix matches the brute-force double sum on random trees") {
  std::mt19937_64 rng(11);
  RandomFormOptions opt;
  opt.n = 20;
  opt.potential_hi = 1.0;
  const GraphSpec spec = random_spec(rng, opt);
  const GraphForm form = build_form(spec);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 100; ++trial) {
    std::map<std::string, double> values;
    for (const auto& id : spec.vertices) values[id] = normal(rng);
    const double oracle = brute_force_q(spec, values);
    CHECK(rel_diff(evaluate(form, fn(form, values)), oracle) < 1e-12);
  }
}

TEST_CASE("energy matrix matches the brute-force sum with a Dirichlet boundary") {
  std::mt19937_64 rng(12);
  RandomFormOptions opt;
  opt.n = 15;
  opt.extra_edges = 6;
  opt.potential_hi = 0.5;
  opt.dirichlet = 3;
  const GraphSpec spec = random_spec(rng, opt);
  const GraphForm form = build_form(spec);
  CHECK(form.free_count() == 12);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 20; ++trial) {
    std::map<std::string, double> values;
    for (const auto& id : spec.vertices) {
      bool boundary = false;
      for (const auto& d : spec.dirichlet) boundary |= d == id;
      if (!boundary) values[id] = normal(rng);
    }
    CHECK(rel_diff(evaluate(form, fn(form, values)), brute_force_q(spec, values)) < 1e-12);
  }
}

TEST_CASE("evaluate: trivial values and domain errors") {
  const GraphForm form = two_path();
  CHECK(evaluate(form, fn(form, {{"a", 1.0}})) == doctest::Approx(1.0));
  CHECK(evaluate(form, form.zeros()) == 0.0);
  CHECK(code_of([&] { evaluate(form, VertexFunction::Ones(3)); }) == ErrorCode::DomainMismatch);

  const GraphForm dp = dirichlet_path(3);
  CHECK(code_of([&] { evaluate(dp, fn(dp, {{vid(0), 1.0}})); }) == ErrorCode::DomainMismatch);
}

TEST_CASE("polarization identity on random triples") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    RandomFormOptions opt;
    opt.n = 12;
    opt.extra_edges = 5;
    opt.potential_hi = 1.0;
    const GraphForm form = random_form(rng, opt);
    const VertexFunction f = random_function(form, rng);
    const VertexFunction g = random_function(form, rng);
    const double lhs = evaluate(form, f + g);
    const double rhs = evaluate(form, f) + 2.0 * evaluate_bilinear(form, f, g) + evaluate(form, g);
    CHECK(rel_diff(lhs, rhs) < 1e-12);
  }
}

TEST_CASE("first Beurling-Deny criterion") {
  const GraphForm form = two_path();
  const VertexFunction f = fn(form, {{"a", 1.0}, {"b", -1.0}});
  CHECK(evaluate(form, f) == doctest::Approx(4.0));
  CHECK(evaluate(form, f.cwiseAbs()) == doctest::Approx(0.0));
  const VertexFunction pos = fn(form, {{"a", 0.3}, {"b", 2.0}});
  CHECK(evaluate(form, pos.cwiseAbs()) == evaluate(form, pos));

  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    RandomFormOptions opt;
    opt.n = 10 + trial;
    opt.extra_edges = 4;
    opt.potential_hi = 1.0;
    const GraphForm rf = random_form(rng, opt);
    const auto report = check_first_bd(rf, 100, 1000 + trial);
    CHECK(report.samples == 100);
    CHECK(report.max_violation <= 1e-10);
  }
}

TEST_CASE("lattice inequality") {
  std::mt19937_64 rng(8);
  RandomFormOptions opt;
  opt.n = 16;
  opt.extra_edges = 8;
  opt.potential_hi = 1.0;
  const GraphForm form = random_form(rng, opt);
  const VertexFunction f = random_function(form, rng);
  CHECK(check_lattice_inequality(form, f, f) == doctest::Approx(0.0).epsilon(1e-12));
  const VertexFunction above = f + f.cwiseAbs() + form.ones();
  CHECK(std::abs(check_lattice_inequality(form, f, above)) < 1e-10);
  for (int trial = 0; trial < 200; ++trial) {
    VertexFunction a = random_function(form, rng);
    VertexFunction b = random_function(form, rng);
    const double scale = std::max(norm_sq(form, a), norm_sq(form, b));
    CHECK(check_lattice_inequality(form, a, b) / scale >= -1e-12);
  }
}

TEST_CASE("invariant sets: components, empty set, whole space") {
  GraphSpec s;
  s.vertices = {"a", "b", "c", "d"};
  s.edges = {{"a", "b", 1.0}, {"c", "d", 2.0}};
  const GraphForm form = build_form(s);
  const std::vector<std::string> comp = {"a", "b"};
  CHECK(is_invariant_set(form, comp, 100, 1).is_invariant);
  CHECK(is_invariant_set(form, std::vector<std::string>{}, 100, 1).is_invariant);
  CHECK(is_invariant_set(form, form.vertices(), 100, 1).is_invariant);
  CHECK(irreducible_components(form).size() == 2);
  CHECK_FALSE(is_irreducible(form));
}

TEST_CASE("invariant sets: a single vertex of the 2-path is not invariant") {
  const GraphForm form = two_path();
  const std::vector<std::string> a = {"a"};
  const auto report = is_invariant_set(form, a, 50, 2);
  CHECK_FALSE(report.is_invariant);
  REQUIRE(report.witness.has_value());
  // The witness is the constant function: q(1_A 1) = 1 > 0 = q(1).
  CHECK((*report.witness)[0] == doctest::Approx((*report.witness)[1]));
  CHECK(report.witness_violation > 1e-10);
}

TEST_CASE("invariant sets agree with the edge-cut criterion on random subsets") {
  std::mt19937_64 rng(99);
  int agree = 0, total = 0;
  for (int trial = 0; trial < 50; ++trial) {
    RandomFormOptions opt;
    opt.n = 8;
    opt.potential_hi = 0.5;
    GraphSpec spec = random_spec(rng, opt);
    // Cut some edges so that invariant subsets occur.
    spec.edges.resize(spec.edges.size() / 2);
    const GraphForm form = build_form(spec);
    std::bernoulli_distribution coin(0.5);
    std::vector<std::string> set;
    for (const auto& id : form.vertices())
      if (coin(rng)) set.push_back(id);
    const auto comps = irreducible_components(form);
    // Edge-cut oracle: A is a union of components.
    bool union_of_components = true;
    for (const auto& comp : comps) {
      int in = 0;
      for (const auto& id : comp) in += std::find(set.begin(), set.end(), id) != set.end();
      union_of_components &= (in == 0 || in == static_cast<int>(comp.size()));
    }
    const auto report = is_invariant_set(form, set, 30, trial);
    agree += report.is_invariant == union_of_components;
    if (!report.is_invariant) CHECK(report.witness_violation > 1e-10);
    ++total;
  }
  CHECK(agree == total);
}

TEST_CASE("irreducible zero-potential form has a one-dimensional positive kernel") {
  std::mt19937_64 rng(4);
  RandomFormOptions opt;
  opt.n = 25;
  opt.extra_edges = 10;
  const GraphForm form = random_form(rng, opt);
  REQUIRE(is_irreducible(form));
  const Matrix K = Matrix(form.energy_matrix());
  const Vector mu = form.free_measure();
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> eig(K, Matrix(mu.asDiagonal()));
  const Vector ev = eig.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  int kernel_dim = 0;
  for (Index i = 0; i < ev.size(); ++i) kernel_dim += std::abs(ev[i]) < 1e-10 * scale;
  CHECK(kernel_dim == 1);
  Vector v = eig.eigenvectors().col(0);
  if (v[0] < 0) v = -v;
  CHECK(v.minCoeff() > 0.0);
  CHECK((v / v[0] - Vector::Ones(v.size())).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("canonical spec round trip preserves the form") {
  std::mt19937_64 rng(17);
  RandomFormOptions opt;
  opt.n = 10;
  opt.potential_hi = 1.0;
  opt.dirichlet = 2;
  const GraphForm form = random_form(rng, opt);
  const GraphForm again = build_form(form.spec());
  CHECK(again.vertices() == form.vertices());
  CHECK((Matrix(again.energy_matrix()) - Matrix(form.energy_matrix())).norm() == 0.0);
}
