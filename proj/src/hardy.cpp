#include "critkit/hardy.hpp"

#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "critkit/error.hpp"
#include "linear_solver.hpp"

namespace critkit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_size(const GraphForm& form, const VertexFunction& f, const char* what) {
  if (f.size() != form.size()) {
    throw Error(ErrorCode::DomainMismatch, std::string(what) + " has the wrong length");
  }
}

/// Sum f^2 w mu over the free vertices.
double weighted_mass(const GraphForm& form, const Vector& w_free, const Vector& f_free) {
  return (f_free.array().square() * w_free.array() * form.free_measure().array()).sum();
}

double ratio(double num, double q) {
  if (num <= 0.0) return 0.0;
  if (q <= 1e-300) return kInf;
  return num / q;
}

double ratio_of(const GraphForm& form, const Vector& w_free, const Vector& f_free) {
  const double q = f_free.dot(form.energy_matrix() * f_free);
  return ratio(weighted_mass(form, w_free, f_free), q);
}

GraphForm shift_potential(const GraphForm& form, double alpha) {
  GraphSpec s = form.spec();
  for (auto& [id, c] : s.potential) c += alpha;
  return build_form(s);
}

/// Power iteration on K^{-1} W, used as the adversarial direction when the
/// dense pencil is too large.
std::optional<Vector> power_direction(const GraphForm& form, const Vector& w_free, std::uint64_t seed) {
  const auto solver = detail::shifted_solver(form, 0.0);
  if (!solver->positive_definite()) return std::nullopt;
  const Vector wm = w_free.cwiseProduct(form.free_measure());
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  Vector f(form.free_count());
  for (Index i = 0; i < f.size(); ++i) f[i] = unif(rng);
  for (int it = 0; it < 50; ++it) {
    Vector next = solver->solve(wm.cwiseProduct(f));
    const double n = next.norm();
    if (!(n > 0.0)) return std::nullopt;
    f = next / n;
  }
  return f;
}

}  // namespace

PencilMax pencil_max(const GraphForm& form, const VertexFunction& w) {
  check_size(form, w, "weight");
  const Index n = form.free_count();
  const Vector w_free = form.restrict_free(w);
  PencilMax out;
  out.maximizer = form.zeros();
  if (n == 0 || w_free.cwiseAbs().maxCoeff() == 0.0) return out;

  const Matrix K = Matrix(form.energy_matrix());
  const Vector sqrt_wm = w_free.cwiseMax(0.0).cwiseProduct(form.free_measure()).cwiseSqrt();

  Eigen::LLT<Matrix> llt(K);
  bool definite = llt.info() == Eigen::Success;
  if (definite) {
    const double dmin = Matrix(llt.matrixL()).diagonal().minCoeff();
    const double dmax = Matrix(llt.matrixL()).diagonal().maxCoeff();
    definite = dmin > 1e-7 * dmax;
  }
  if (definite) {
    // W x = lambda K x  <=>  C y = lambda y with C = L^{-1} W^{1/2} (L^{-1} W^{1/2})^T.
    const Matrix X = llt.matrixL().solve(Matrix(sqrt_wm.asDiagonal()));
    const Matrix C = X * X.transpose();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(C);
    const Index top = n - 1;
    out.value = std::max(0.0, eig.eigenvalues()[top]);
    Vector f = llt.matrixU().solve(Vector(eig.eigenvectors().col(top)));
    if (f.sum() < 0.0) f = -f;
    out.maximizer = form.extend(f);
    return out;
  }

  // Singular K: work on its range and check whether w charges the kernel.
  Eigen::SelfAdjointEigenSolver<Matrix> keig(K);
  const Vector lam = keig.eigenvalues();
  const double cut = 1e-10 * std::max(lam.cwiseAbs().maxCoeff(), 1e-300);
  std::vector<Index> range, kernel;
  for (Index i = 0; i < n; ++i) (lam[i] > cut ? range : kernel).push_back(i);
  double best_mass = 0.0;
  Index best = -1;
  for (Index i : kernel) {
    const double mass = sqrt_wm.cwiseProduct(keig.eigenvectors().col(i)).squaredNorm();
    if (mass > best_mass) {
      best_mass = mass;
      best = i;
    }
  }
  if (best >= 0 && best_mass > 1e-12 * sqrt_wm.squaredNorm()) {
    out.value = kInf;
    Vector f = keig.eigenvectors().col(best);
    if (f.sum() < 0.0) f = -f;
    out.maximizer = form.extend(f);
    return out;
  }
  const Index r = static_cast<Index>(range.size());
  Matrix U(n, r);
  Vector inv_sqrt(r);
  for (Index j = 0; j < r; ++j) {
    U.col(j) = keig.eigenvectors().col(range[static_cast<std::size_t>(j)]);
    inv_sqrt[j] = 1.0 / std::sqrt(lam[range[static_cast<std::size_t>(j)]]);
  }
  const Matrix B = inv_sqrt.asDiagonal() * U.transpose() * sqrt_wm.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(B * B.transpose());
  out.value = std::max(0.0, eig.eigenvalues()[r - 1]);
  Vector f = U * inv_sqrt.asDiagonal() * eig.eigenvectors().col(r - 1);
  if (f.sum() < 0.0) f = -f;
  out.maximizer = form.extend(f);
  return out;
}

HardyVerification verify_hardy(const GraphForm& form, const VertexFunction& w, std::size_t n_samples,
                               std::uint64_t seed, const Tolerances& tol) {
  check_size(form, w, "weight");
  const Vector w_free = form.restrict_free(w);
  HardyVerification rep;
  std::mt19937_64 rng(seed);
  auto consider = [&](const Vector& f_free) {
    rep.rho_sampled = std::max(rep.rho_sampled, ratio_of(form, w_free, f_free));
    ++rep.samples;
  };
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Vector f = form.restrict_free(random_function(form, rng));
    consider(f);
    consider(f.cwiseAbs());
  }
  if (form.free_count() > 0) consider(Vector::Ones(form.free_count()));

  if (form.free_count() <= kDensePencilLimit) {
    const PencilMax pm = pencil_max(form, w);
    rep.pencil_max = pm.value;
    consider(form.restrict_free(pm.maximizer));
  } else if (auto dir = power_direction(form, w_free, seed)) {
    consider(*dir);
  }
  rep.passed = rep.rho_sampled <= 1.0 + tol.ineq &&
               (!rep.pencil_max || *rep.pencil_max <= 1.0 + tol.eig);
  return rep;
}

HardyWeight hardy_weight(const GraphForm& form, const VertexFunction& g, const HardyOptions& options,
                         const Tolerances& tol) {
  form.check_domain(g);
  const Vector g_free = form.restrict_free(g);
  if (g_free.size() == 0 || (g_free.array() < 0.0).any() || g_free.maxCoeff() <= 0.0) {
    throw Error(ErrorCode::NonPositiveInput, "hardy_weight requires g >= 0 and g != 0");
  }

  HardyWeight out;
  out.source_g = g;
  Vector denom;
  bool finite = false;
  try {
    const GreenResult green = green_apply(form, g, options.green, tol);
    finite = green.status == GreenStatus::Finite;
    if (finite) denom = form.restrict_free(*green.value);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Inconclusive || !options.allow_perturbed) throw;
  }

  if (!finite) {
    if (!options.allow_perturbed) {
      throw Error(ErrorCode::GreenDiverges, "Gg diverges: the form admits no Hardy weight of the form g/Gg");
    }
    double alpha = options.fallback_alpha;
    if (!(alpha > 0.0)) alpha = options.green.alpha_schedule.back();
    out.alpha_used = alpha;
    denom = form.restrict_free(resolvent_apply(form, alpha, g, tol));
  }

  Vector w_free(g_free.size());
  for (Index i = 0; i < g_free.size(); ++i) {
    if (!(denom[i] > 0.0)) {
      throw Error(ErrorCode::ValidationFailure,
                  "G g vanishes at vertex " + form.vertices()[static_cast<std::size_t>(form.free_vertices()[i])] +
                      " (reducible form?)");
    }
    w_free[i] = g_free[i] / denom[i];
  }
  out.weight = form.extend(w_free);

  const GraphForm& target = out.alpha_used > 0.0 ? shift_potential(form, out.alpha_used) : form;
  out.verification = verify_hardy(target, out.weight, options.n_samples, options.seed, tol);
  if (!out.verification.passed) {
    throw Error(ErrorCode::ValidationFailure,
                "constructed weight failed verification (rho = " + std::to_string(out.verification.rho_sampled) + ")");
  }
  return out;
}

double abstract_hardy_gap(const GraphForm& form, const VertexFunction& h, const VertexFunction& f) {
  form.check_domain(h);
  check_size(form, f, "f");
  if ((h.array() < 0.0).any()) throw Error(ErrorCode::NonPositiveH, "abstract_hardy_gap requires h >= 0");
  const VertexFunction hf = h.cwiseProduct(f);
  const VertexFunction hf2 = hf.cwiseProduct(f);
  return evaluate(form, hf) - evaluate_bilinear(form, hf2, h);
}

PerturbedBound perturbed_hardy_bound(const GraphForm& form, const VertexFunction& g, double alpha,
                                     const VertexFunction& f, const Tolerances& tol) {
  form.check_domain(g);
  form.check_domain(f);
  if (!(alpha > 0.0)) throw Error(ErrorCode::BadParams, "perturbed_hardy_bound requires alpha > 0");
  const Vector g_free = form.restrict_free(g);
  if ((g_free.array() <= 0.0).any()) {
    throw Error(ErrorCode::NonPositiveInput, "perturbed_hardy_bound requires g > 0");
  }
  const Vector ga = form.restrict_free(resolvent_apply(form, alpha, g, tol));
  const Vector f_free = form.restrict_free(f);
  PerturbedBound b;
  b.lhs = evaluate(form, f) + alpha * norm_sq(form, f);
  b.rhs = (f_free.array().square() * g_free.array() / ga.array() * form.free_measure().array()).sum();
  return b;
}

GraphForm ground_state_transform(const GraphForm& form, const VertexFunction& h, double alpha,
                                 const Tolerances& tol) {
  check_size(form, h, "h");
  if (!(alpha >= 0.0)) throw Error(ErrorCode::BadParams, "ground_state_transform requires alpha >= 0");
  for (Index v : form.free_vertices()) {
    if (!(h[v] > 0.0) || !std::isfinite(h[v])) {
      throw Error(ErrorCode::NonPositiveH, "h must be strictly positive on " + form.vertices()[static_cast<std::size_t>(v)]);
    }
  }

  const auto& ids = form.vertices();
  const Vector& mu = form.measure();
  const SparseMatrix& K = form.energy_matrix();
  GraphSpec s;
  s.vertices = ids;
  Vector offdiag = Vector::Zero(form.size());
  for (const Edge& e : form.edges()) {
    if (form.is_boundary(e.u) || form.is_boundary(e.v)) continue;
    const double b = e.weight * h[e.u] * h[e.v];
    s.edges.push_back({ids[static_cast<std::size_t>(e.u)], ids[static_cast<std::size_t>(e.v)], b});
    offdiag[e.u] += b;
    offdiag[e.v] += b;
  }
  for (Index v = 0; v < form.size(); ++v) {
    const auto& id = ids[static_cast<std::size_t>(v)];
    if (form.is_boundary(v)) {
      s.mu[id] = mu[v];
      s.dirichlet.push_back(id);
      continue;
    }
    const Index p = form.free_position(v);
    const double hv = h[v];
    const double mu_new = hv * hv * mu[v];
    const double diag = hv * hv * (K.coeff(p, p) + alpha * mu[v]);
    s.mu[id] = mu_new;
    s.potential[id] = (diag - offdiag[v]) / mu_new;
  }
  GraphForm out = build_form(s, tol);

  std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
  for (int k = 0; k < 16; ++k) {
    const VertexFunction f = random_function(out, rng);
    const VertexFunction hf = h.cwiseProduct(f);
    const double expected = evaluate(form, hf) + alpha * norm_sq(form, hf);
    const double got = evaluate(out, f);
    const double scale = std::max({std::abs(expected), std::abs(got), 1e-300});
    // Relative to the positive and negative parts of q, not to q itself,
    // which can cancel to near zero for a critical transform.
    const Vector hf_free = form.restrict_free(hf);
    const double magnitude = hf_free.cwiseAbs().dot(K.cwiseAbs() * hf_free.cwiseAbs()) + alpha * norm_sq(form, hf);
    if (std::abs(got - expected) > 1e-11 * std::max(scale, magnitude)) {
      throw Error(ErrorCode::ValidationFailure, "transformed form does not reproduce q(hf)");
    }
  }
  return out;
}

}  // namespace critkit
