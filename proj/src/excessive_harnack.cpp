#include "critkit/excessive_harnack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "critkit/error.hpp"
#include "critkit/resolvent.hpp"

namespace critkit {

void KernelOperator::validate() const {
  if (kernel.rows() == 0 || kernel.cols() == 0) throw Error(ErrorCode::DomainMismatch, "empty kernel");
  if (nu.size() != kernel.rows() || mu.size() != kernel.cols()) {
    throw Error(ErrorCode::DomainMismatch, "measure lengths do not match the kernel shape");
  }
  if (!(p > 1.0) || !std::isfinite(p)) throw Error(ErrorCode::BadParams, "p must lie in (1, inf)");
  if (!(kernel.array() > 0.0).all() || !kernel.allFinite()) {
    throw Error(ErrorCode::NonPositiveInput, "kernel entries must be strictly positive and finite");
  }
  if (!(nu.array() > 0.0).all() || !(mu.array() > 0.0).all()) {
    throw Error(ErrorCode::NonPositiveInput, "measures must be strictly positive");
  }
}

Vector KernelOperator::apply(const Vector& f) const { return kernel * f.cwiseProduct(mu); }

Vector KernelOperator::apply_adjoint(const Vector& g) const {
  return kernel.transpose() * g.cwiseProduct(nu);
}

Vector KernelOperator::nonlinear(const Vector& f) const {
  const Vector tf = apply(f);
  if (p == 2.0) return apply_adjoint(tf);
  return apply_adjoint(tf.array().max(0.0).pow(p - 1.0).matrix());
}

namespace {

Vector power(const Vector& f, double e) { return e == 1.0 ? f : Vector(f.array().pow(e)); }

}  // namespace

LambdaResult lambda_of(const KernelOperator& op, double tol, int max_iterations) {
  op.validate();
  LambdaResult out;
  const double q = op.p - 1.0;
  auto bracket = [&](const Vector& f) {
    const Vector ratio = op.nonlinear(f).cwiseQuotient(power(f, q));
    return std::pair{ratio.minCoeff(), ratio.maxCoeff()};
  };

  if (op.p == 2.0) {
    // T*T is self-adjoint in L^2(mu); symmetrize with mu^{1/2}.
    const Vector s = op.mu.cwiseSqrt();
    const Matrix sym = s.asDiagonal() * ktilde(op) * s.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
    const Index n = sym.rows();
    Vector f = eig.eigenvectors().col(n - 1).cwiseQuotient(s).cwiseAbs();
    f /= f.maxCoeff();
    out.lambda = eig.eigenvalues()[n - 1];
    out.lower = bracket(f).first;
    out.witness = f;
    out.iterations = 1;
    return out;
  }

  Vector f = Vector::Ones(op.mu.size());
  double best_upper = std::numeric_limits<double>::infinity();
  double best_lower = 0.0;
  Vector best_f = f;
  for (int it = 1; it <= max_iterations; ++it) {
    const Vector y = op.nonlinear(f);
    const Vector ratio = y.cwiseQuotient(power(f, q));
    const double lo = ratio.minCoeff(), hi = ratio.maxCoeff();
    best_lower = std::max(best_lower, lo);
    if (hi < best_upper) {
      best_upper = hi;
      best_f = f;
    }
    out.iterations = it;
    if (hi <= lo * (1.0 + tol)) break;
    // Damped step in log coordinates: f <- sqrt(f * F(f)).
    Vector next = (0.5 * (f.array().log() + y.array().log() / q)).exp();
    next /= next.maxCoeff();
    f = std::move(next);
  }
  if (!(best_upper <= best_lower * (1.0 + tol))) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "lambda fixed point did not converge; bracket [" << best_lower << ", " << best_upper << "]";
    throw Error(ErrorCode::NoConvergence, msg.str());
  }
  out.lambda = best_upper;
  out.lower = best_lower;
  out.witness = best_f;
  return out;
}

double check_super_eigen(const KernelOperator& op, double lambda, const Vector& f) {
  op.validate();
  if (f.size() != op.mu.size()) throw Error(ErrorCode::DomainMismatch, "witness length differs from the source space");
  if (!(f.array() > 0.0).all()) throw Error(ErrorCode::NonPositiveInput, "super-eigen witness must be positive");
  return (op.nonlinear(f) - lambda * power(f, op.p - 1.0)).maxCoeff();
}

Matrix ktilde(const KernelOperator& op) {
  const Matrix kt = op.kernel.transpose() * op.nu.asDiagonal() * op.kernel;
  return 0.5 * (kt + kt.transpose());
}

HarnackCertificate harnack_sets(const KernelOperator& op, double target_mass, double lambda) {
  op.validate();
  if (!(target_mass > 0.0 && target_mass <= 1.0)) throw Error(ErrorCode::BadParams, "target_mass must lie in (0, 1]");
  if (!(lambda > 0.0)) throw Error(ErrorCode::BadParams, "lambda must be positive");
  const Matrix kt = ktilde(op);
  const Index n = kt.rows();
  const double need = target_mass * op.mu.sum() * (1.0 - 1e-12);
  std::vector<char> active(static_cast<std::size_t>(n), 1);
  double mass = op.mu.sum();
  if (mass < need) throw Error(ErrorCode::EmptySelection, "target mass exceeds the total mass");

  // Row minima over the active set, with their arguments.
  Vector rowmin(n);
  std::vector<Index> argmin(static_cast<std::size_t>(n));
  auto refresh = [&](Index x) {
    rowmin[x] = std::numeric_limits<double>::infinity();
    for (Index y = 0; y < n; ++y)
      if (active[static_cast<std::size_t>(y)] && kt(x, y) < rowmin[x]) {
        rowmin[x] = kt(x, y);
        argmin[static_cast<std::size_t>(x)] = y;
      }
  };
  for (Index x = 0; x < n; ++x) refresh(x);
  auto coupling = [&](Index x) {
    double s = 0.0;
    for (Index y = 0; y < n; ++y)
      if (active[static_cast<std::size_t>(y)]) s += kt(x, y) * op.mu[y];
    return s;
  };

  for (;;) {
    Index x = -1;
    for (Index v = 0; v < n; ++v)
      if (active[static_cast<std::size_t>(v)] && (x < 0 || rowmin[v] < rowmin[x])) x = v;
    const Index y = argmin[static_cast<std::size_t>(x)];
    // Drop the less coupled endpoint of the weakest pair if the mass allows.
    std::vector<Index> order{x};
    if (y != x) {
      order.push_back(y);
      if (coupling(y) < coupling(x)) std::swap(order[0], order[1]);
    }
    Index drop = -1;
    for (Index c : order)
      if (mass - op.mu[c] >= need) {
        drop = c;
        break;
      }
    if (drop < 0) break;
    active[static_cast<std::size_t>(drop)] = 0;
    mass -= op.mu[drop];
    for (Index v = 0; v < n; ++v)
      if (active[static_cast<std::size_t>(v)] && argmin[static_cast<std::size_t>(v)] == drop) refresh(v);
  }

  HarnackCertificate cert;
  for (Index v = 0; v < n; ++v)
    if (active[static_cast<std::size_t>(v)]) cert.set.push_back(v);
  if (cert.set.empty()) throw Error(ErrorCode::EmptySelection, "greedy selection emptied the set");
  cert.mass = mass;
  cert.lambda = lambda;
  if (op.p == 2.0) {
    cert.c = std::numeric_limits<double>::infinity();
    for (Index a : cert.set)
      for (Index b : cert.set) cert.c = std::min(cert.c, kt(a, b));
    cert.D = lambda / cert.c;
  } else {
    Vector mz = Vector::Constant(op.kernel.rows(), std::numeric_limits<double>::infinity());
    for (Index z = 0; z < op.kernel.rows(); ++z)
      for (Index b : cert.set) mz[z] = std::min(mz[z], op.kernel(z, b));
    const Vector weight = op.nu.cwiseProduct(power(mz, op.p - 1.0));
    cert.c = std::numeric_limits<double>::infinity();
    for (Index a : cert.set) cert.c = std::min(cert.c, op.kernel.col(a).dot(weight));
    cert.D = std::pow(lambda / cert.c, 1.0 / (op.p - 1.0));
  }
  return cert;
}

double harnack_gap(const KernelOperator& op, const HarnackCertificate& cert, const Vector& f) {
  if (f.size() != op.mu.size()) throw Error(ErrorCode::DomainMismatch, "function length differs from the source space");
  double sum = 0.0, low = std::numeric_limits<double>::infinity();
  for (Index a : cert.set) {
    sum += f[a] * op.mu[a];
    low = std::min(low, f[a]);
  }
  return sum - cert.D * low;
}

ErgodicityReport ergodicity_check(const KernelOperator& op, const std::vector<Index>& set, std::size_t n_samples,
                                  std::uint64_t seed) {
  op.validate();
  const Index n = op.mu.size();
  Vector indicator = Vector::Zero(n);
  for (Index a : set) {
    if (a < 0 || a >= n) throw Error(ErrorCode::BadParams, "set index out of range");
    indicator[a] = 1.0;
  }
  const auto members = static_cast<Index>(indicator.sum());
  if (members == 0 || members == n) throw Error(ErrorCode::BadParams, "the set must be nonempty and proper");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  ErgodicityReport rep;
  for (std::size_t s = 0; s < std::max<std::size_t>(n_samples, 1); ++s) {
    Vector f = Vector::Ones(n);
    if (s > 0)
      for (Index i = 0; i < n; ++i) f[i] = unif(rng);
    ++rep.samples_tried;
    const Vector lhs = op.nonlinear(indicator.cwiseProduct(f));
    const Vector rhs = indicator.cwiseProduct(op.nonlinear(f));
    Index best = -1;
    double excess = 0.0;
    for (Index x = 0; x < n; ++x) {
      const double e = lhs[x] - rhs[x] * (1.0 + 1e-12);
      if (e > excess) {
        excess = e;
        best = x;
      }
    }
    if (best >= 0) {
      rep.f = f;
      rep.point = best;
      rep.lhs = lhs[best];
      rep.rhs = rhs[best];
      return rep;
    }
  }
  throw Error(ErrorCode::NoViolationFound,
              "no violation of the ergodicity inequality found; the kernel is numerically degenerate");
}

KernelOperator resolvent_kernel(const GraphForm& form) {
  if (!is_irreducible(form)) throw Error(ErrorCode::NotIrreducible, "the form is not irreducible");
  if (form.free_count() > 2000) throw Error(ErrorCode::BadParams, "resolvent kernel is limited to 2000 free vertices");
  const Matrix shifted = Matrix(form.energy_matrix()) + Matrix(form.free_measure().asDiagonal());
  Eigen::LLT<Matrix> llt(shifted);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::SolverFailure, "K + M is not positive definite");
  KernelOperator op;
  op.kernel = llt.solve(Matrix::Identity(shifted.rows(), shifted.cols()));
  op.kernel = 0.5 * (op.kernel + op.kernel.transpose());
  op.nu = form.free_measure();
  op.mu = form.free_measure();
  op.p = 2.0;
  return op;
}

ExcessiveConstruction construct_excessive(const GraphForm& form, const VertexFunction& g,
                                          const std::vector<std::string>& reference,
                                          const ExcessiveOptions& options, const Tolerances& tol) {
  if (!is_irreducible(form)) throw Error(ErrorCode::NotIrreducible, "the form is not irreducible");
  form.check_domain(g);
  if ((g.array() < 0.0).any() || !(g.maxCoeff() > 0.0)) {
    throw Error(ErrorCode::NonPositiveInput, "g must be nonnegative and nonzero");
  }
  const std::vector<double> schedule =
      options.alpha_schedule.empty() ? geometric_schedule(1.0, 1e-12, 0.5) : options.alpha_schedule;
  if (schedule.size() < 3) throw Error(ErrorCode::ScheduleTooShort, "the schedule needs at least three points");
  for (std::size_t i = 1; i < schedule.size(); ++i) {
    if (!(schedule[i] < schedule[i - 1]) || !(schedule[i] > 0.0)) {
      throw Error(ErrorCode::BadParams, "alpha schedule must be positive and decreasing");
    }
  }

  ExcessiveConstruction out;
  out.reference = reference;
  if (out.reference.empty()) {
    const KernelOperator op = resolvent_kernel(form);
    const HarnackCertificate cert = harnack_sets(op, options.harnack_mass, lambda_of(op).lambda);
    for (Index a : cert.set) {
      out.reference.push_back(form.vertices()[static_cast<std::size_t>(form.free_vertices()[static_cast<std::size_t>(a)])]);
    }
  }
  std::vector<Index> ref;
  for (const std::string& id : out.reference) {
    const Index v = form.require_index(id);
    if (form.is_boundary(v)) throw Error(ErrorCode::BadParams, "reference vertex " + id + " is on the boundary");
    ref.push_back(v);
  }

  std::vector<VertexFunction> tail;
  for (double alpha : schedule) {
    VertexFunction u = resolvent_apply(form, alpha, g, tol);
    double low = std::numeric_limits<double>::infinity();
    for (Index v : ref) low = std::min(low, u[v]);
    if (!(low > 0.0)) throw Error(ErrorCode::SolverFailure, "resolvent is not positive on the reference set");
    u /= low;
    tail.push_back(std::move(u));
    if (tail.size() > 3) tail.erase(tail.begin());
  }
  out.alpha_last = schedule.back();
  const VertexFunction& last = tail.back();
  const double scale = last.cwiseAbs().maxCoeff();
  for (const auto& u : tail) out.tail_change = std::max(out.tail_change, (u - last).cwiseAbs().maxCoeff() / scale);
  if (out.tail_change > options.stabilization) {
    std::ostringstream msg;
    msg << "normalized potentials still change by " << out.tail_change << " (relative) at alpha = " << out.alpha_last;
    throw Error(ErrorCode::ScheduleTooShort, msg.str());
  }
  out.h = tail[0];
  for (const auto& u : tail) out.h = out.h.cwiseMin(u);
  const VertexFunction lh = apply_generator(form, out.h);
  out.residual = std::max(0.0, (-lh).maxCoeff()) / out.h.cwiseAbs().maxCoeff();
  return out;
}

ExhaustionExcessive construct_excessive(const Exhaustion& exhaustion,
                                        const std::function<VertexFunction(const GraphForm&)>& g,
                                        std::vector<std::string> reference, const ExcessiveOptions& options,
                                        const Tolerances& tol) {
  if (exhaustion.radii.empty()) throw Error(ErrorCode::BadParams, "exhaustion has no radii");
  if (reference.empty()) reference = {exhaustion.root};
  ExhaustionExcessive out;
  for (int radius : exhaustion.radii) {
    const GraphForm form = exhaustion.level(radius);
    const ExcessiveConstruction c = construct_excessive(form, g(form), reference, options, tol);
    if (!out.levels.empty() && c.residual > 2.0 * out.levels.back().residual + 1e-15) out.residual_monotone = false;
    out.levels.push_back({radius, c.residual, c.tail_change});
    if (radius == exhaustion.radii.back()) {
      out.h.ids.clear();
      std::vector<double> vals;
      for (Index v : form.free_vertices()) {
        out.h.ids.push_back(form.vertices()[static_cast<std::size_t>(v)]);
        vals.push_back(c.h[v]);
      }
      out.h.values = Eigen::Map<const Vector>(vals.data(), static_cast<Index>(vals.size()));
    }
  }
  return out;
}

}  // namespace critkit
