#include <cmath>
#include <random>

#include <Eigen/SVD>

#include "critkit/error.hpp"
#include "critkit/excessive_harnack.hpp"
#include "critkit/families.hpp"
#include "critkit/resolvent.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace critkit;
using namespace critkit::testing;

namespace {

KernelOperator random_kernel(std::mt19937_64& rng, Index rows, Index cols, double p) {
  std::uniform_real_distribution<double> entry(0.05, 2.0), measure(0.3, 3.0);
  KernelOperator op;
  op.kernel.resize(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) op.kernel(i, j) = entry(rng);
  op.nu.resize(rows);
  op.mu.resize(cols);
  for (Index i = 0; i < rows; ++i) op.nu[i] = measure(rng);
  for (Index j = 0; j < cols; ++j) op.mu[j] = measure(rng);
  op.p = p;
  return op;
}

KernelOperator ones_kernel(Index n) {
  KernelOperator op;
  op.kernel = Matrix::Ones(n, n);
  op.nu = Vector::Ones(n);
  op.mu = Vector::Ones(n);
  return op;
}

double lp_ratio(const KernelOperator& op, const Vector& f) {
  const Vector tf = op.apply(f);
  return tf.array().pow(op.p).matrix().dot(op.nu) / f.array().pow(op.p).matrix().dot(op.mu);
}

}  // namespace

TEST_CASE("lambda_of: hand examples") {
  KernelOperator one;
  one.kernel = Matrix::Ones(1, 1);
  one.nu = one.mu = Vector::Ones(1);
  const LambdaResult a = lambda_of(one);
  CHECK(a.lambda == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(a.witness[0] == 1.0);

  const LambdaResult b = lambda_of(ones_kernel(2));
  CHECK(b.lambda == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(b.witness.isApprox(Vector::Ones(2), 1e-14));
}

TEST_CASE("lambda_of: p = 2 agrees with the singular value oracle") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> size(1, 12);
  for (int trial = 0; trial < 100; ++trial) {
    const KernelOperator op = random_kernel(rng, size(rng), size(rng), 2.0);
    const Matrix scaled = op.nu.cwiseSqrt().asDiagonal() * op.kernel * op.mu.cwiseSqrt().asDiagonal();
    const double sigma = Eigen::JacobiSVD<Matrix>(scaled).singularValues()[0];
    const LambdaResult r = lambda_of(op);
    CHECK(std::abs(r.lambda - sigma * sigma) <= 1e-8 * sigma * sigma);
    CHECK((r.witness.array() > 0.0).all());
    CHECK(check_super_eigen(op, r.lambda, r.witness) <= 1e-12 * r.lambda);
  }
}

TEST_CASE("lambda_of: general p fixed point") {
  std::mt19937_64 rng(2);
  for (double p : {1.5, 3.0, 4.0}) {
    for (int trial = 0; trial < 10; ++trial) {
      const KernelOperator op = random_kernel(rng, 6, 5, p);
      const LambdaResult r = lambda_of(op);
      CHECK(r.lower <= r.lambda);
      CHECK(r.lambda <= r.lower * (1 + 1e-11));
      CHECK(check_super_eigen(op, r.lambda, r.witness) <= 1e-10 * r.lambda);
      // The witness attains the norm, and no sampled f beats it.
      CHECK(lp_ratio(op, r.witness) == doctest::Approx(r.lambda).epsilon(1e-9));
      std::uniform_real_distribution<double> unif(0.01, 1.0);
      for (int k = 0; k < 50; ++k) {
        Vector f(op.mu.size());
        for (Index i = 0; i < f.size(); ++i) f[i] = unif(rng);
        CHECK(lp_ratio(op, f) <= r.lambda * (1 + 1e-10));
      }
    }
  }
}

TEST_CASE("check_super_eigen: inflated and deflated levels") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const KernelOperator op = random_kernel(rng, 7, 7, trial % 2 ? 2.0 : 3.0);
    const LambdaResult r = lambda_of(op);
    const Vector excess_up = op.nonlinear(r.witness) - 1.1 * r.lambda * r.witness.array().pow(op.p - 1).matrix();
    CHECK(excess_up.maxCoeff() < 0.0);
    CHECK(check_super_eigen(op, 0.9 * r.lambda, r.witness) > 0.0);
  }
  CHECK_THROWS_AS_CODE(check_super_eigen(ones_kernel(2), 1.0, Vector::Zero(2)), ErrorCode::NonPositiveInput);
}

TEST_CASE("ktilde") {
  CHECK(ktilde(ones_kernel(2)).isApprox(Matrix::Constant(2, 2, 2.0)));
  KernelOperator one;
  one.kernel = Matrix::Constant(1, 1, 3.0);
  one.nu = Vector::Constant(1, 0.5);
  one.mu = Vector::Ones(1);
  CHECK(ktilde(one)(0, 0) == doctest::Approx(4.5));

  KernelOperator diag = ones_kernel(4);
  diag.kernel += Matrix::Identity(4, 4);
  const Matrix kt = ktilde(diag);
  CHECK(kt == kt.transpose());
  std::mt19937_64 rng(4);
  const Matrix r = ktilde(random_kernel(rng, 5, 8, 2.0));
  CHECK(r == r.transpose());
  CHECK((r.array() > 0.0).all());
}

TEST_CASE("harnack_sets: closed forms") {
  const HarnackCertificate two = harnack_sets(ones_kernel(2), 1.0, 4.0);
  CHECK(two.set == std::vector<Index>{0, 1});
  CHECK(two.c == doctest::Approx(2.0));
  CHECK(two.D == doctest::Approx(2.0));

  KernelOperator one;
  one.kernel = Matrix::Constant(1, 1, 2.0);
  one.nu = Vector::Constant(1, 0.25);
  one.mu = Vector::Ones(1);
  const HarnackCertificate single = harnack_sets(one, 0.5, 3.0);
  CHECK(single.set.size() == 1);
  CHECK(single.c == doctest::Approx(1.0));
  CHECK(single.D == doctest::Approx(3.0));

  CHECK_THROWS_AS_CODE(harnack_sets(one, 0.0, 1.0), ErrorCode::BadParams);
  CHECK_THROWS_AS_CODE(harnack_sets(one, 0.5, -1.0), ErrorCode::BadParams);
}

TEST_CASE("harnack_sets: certificates hold for sampled super-eigen functions") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  for (double p : {2.0, 1.5, 3.0}) {
    for (int trial = 0; trial < 10; ++trial) {
      const KernelOperator op = random_kernel(rng, 9, 9, p);
      for (double mass : {0.2, 0.5, 1.0}) {
        for (int k = 0; k < 10; ++k) {
          Vector f(op.mu.size());
          for (Index i = 0; i < f.size(); ++i) f[i] = unif(rng);
          // Every positive f is super-eigen at the level of its largest ratio.
          const double level = op.nonlinear(f).cwiseQuotient(f.array().pow(p - 1).matrix()).maxCoeff();
          const HarnackCertificate cert = harnack_sets(op, mass, level);
          CHECK(cert.mass >= mass * op.mu.sum() * (1 - 1e-12));
          CHECK(harnack_gap(op, cert, f) <= 1e-12 * f.sum());
        }
      }
      const LambdaResult r = lambda_of(op);
      const HarnackCertificate cert = harnack_sets(op, 0.5, r.lambda);
      CHECK(harnack_gap(op, cert, r.witness) <= 1e-12);
      if (p == 2.0) {
        const Matrix kt = ktilde(op);
        for (Index a : cert.set)
          for (Index b : cert.set) CHECK(kt(a, b) >= cert.c);
      }
    }
  }
}

TEST_CASE("ergodicity_check") {
  const ErgodicityReport two = ergodicity_check(ones_kernel(2), {0}, 1, 0);
  CHECK(two.point == 1);
  CHECK(two.rhs == 0.0);
  CHECK(two.lhs > 0.0);

  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> size(2, 8);
  int found = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const Index n = size(rng);
    const KernelOperator op = random_kernel(rng, size(rng), n, trial % 3 ? 2.0 : 2.5);
    std::vector<Index> set;
    std::bernoulli_distribution pick(0.5);
    for (Index i = 0; i < n; ++i)
      if (pick(rng)) set.push_back(i);
    if (set.empty()) set.push_back(0);
    if (static_cast<Index>(set.size()) == n) set.pop_back();
    const ErgodicityReport rep = ergodicity_check(op, set, 10, trial);
    found += rep.point >= 0;
  }
  CHECK(found == 500);
  CHECK_THROWS_AS_CODE(ergodicity_check(ones_kernel(2), {0, 1}, 5, 0), ErrorCode::BadParams);
  CHECK_THROWS_AS_CODE(ergodicity_check(ones_kernel(2), {}, 5, 0), ErrorCode::BadParams);
}

TEST_CASE("construct_excessive: constant examples") {
  const GraphForm path = build_form(path_spec(6));
  const ExcessiveConstruction c = construct_excessive(path, path.ones(), {vid(2)});
  CHECK((c.h - path.ones()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(c.residual < 1e-12);

  const GraphForm one = single_vertex(1.0);
  const ExcessiveConstruction s = construct_excessive(one, one.ones(), {"x"});
  CHECK(s.h[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(apply_generator(one, s.h)[0] == doctest::Approx(1.0));
}

TEST_CASE("construct_excessive: random irreducible forms") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> pos(0.1, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    RandomFormOptions opt;
    opt.n = 8 + trial;
    opt.extra_edges = trial % 5;
    if (trial % 2) opt.potential_hi = 0.3;
    opt.dirichlet = trial % 3;
    const GraphForm form = random_form(rng, opt);
    VertexFunction g = form.zeros();
    for (Index v : form.free_vertices()) g[v] = pos(rng);
    const std::vector<std::string> ref = trial % 4 ? std::vector<std::string>{vid(0)} : std::vector<std::string>{};
    const ExcessiveConstruction c = construct_excessive(form, g, ref);
    double low = 1e300;
    for (const auto& id : c.reference) low = std::min(low, c.h[form.require_index(id)]);
    CHECK(low == doctest::Approx(1.0).epsilon(1e-14));
    const ExcessiveReport ex = is_excessive(form, c.h, default_excessive_grid(form));
    INFO("trial ", trial, " viol ", ex.max_violation, " grid ", ex.grid_max_violation, " agree ", ex.grid_agrees, " res ", c.residual);
    CHECK(ex.excessive);
    CHECK(c.residual <= 1e-8);
    for (double t : {0.1, 1.0, 10.0}) {
      const VertexFunction th = semigroup_apply(form, t, c.h);
      CHECK((th - c.h).maxCoeff() <= 1e-8 * c.h.maxCoeff());
    }
  }
}

TEST_CASE("construct_excessive: 3D lattice exhaustion with a point source") {
  const Exhaustion ex = lattice_family(3, {2, 4, 6, 8});
  auto delta = [&](const GraphForm& form) {
    VertexFunction g = form.zeros();
    g[form.require_index(ex.root)] = 1.0;
    return g;
  };
  const ExhaustionExcessive out = construct_excessive(ex, delta);
  CHECK(out.levels.size() == 4);
  for (const auto& level : out.levels) CHECK(level.residual <= 1e-6);
  CHECK(out.residual_monotone);
  CHECK((out.h.values.array() > 0.0).all());
  CHECK(out.h.at(ex.root) == doctest::Approx(1.0));

  const GraphForm last = ex.level(8);
  const GreenResult green = green_apply(last, delta(last));
  const double scale = (*green.value)[last.require_index(ex.root)];
  for (std::size_t i = 0; i < out.h.ids.size(); ++i) {
    const double expected = (*green.value)[last.require_index(out.h.ids[i])] / scale;
    CHECK(std::abs(out.h.values[static_cast<Index>(i)] - expected) <= 1e-7 * expected + 1e-12);
  }
}

TEST_CASE("construct_excessive: errors") {
  GraphSpec split;
  split.vertices = {"a", "b", "c"};
  split.edges = {{"a", "b", 1.0}};
  const GraphForm disconnected = build_form(split);
  CHECK_THROWS_AS_CODE(construct_excessive(disconnected, disconnected.ones(), {"a"}), ErrorCode::NotIrreducible);

  std::mt19937_64 rng(8);
  RandomFormOptions opt;
  opt.n = 15;
  const GraphForm form = random_form(rng, opt);
  VertexFunction g = form.zeros();
  g[0] = 1.0;
  ExcessiveOptions shortened;
  shortened.alpha_schedule = {1.0, 0.5, 0.25};
  CHECK_THROWS_AS_CODE(construct_excessive(form, g, {vid(1)}, shortened), ErrorCode::ScheduleTooShort);
  shortened.alpha_schedule = {1.0, 0.5};
  CHECK_THROWS_AS_CODE(construct_excessive(form, g, {vid(1)}, shortened), ErrorCode::ScheduleTooShort);
  CHECK_THROWS_AS_CODE(construct_excessive(form, -g, {vid(1)}), ErrorCode::NonPositiveInput);
  CHECK_THROWS_AS_CODE(construct_excessive(form, form.zeros(), {vid(1)}), ErrorCode::NonPositiveInput);
}
