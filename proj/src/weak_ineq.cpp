#include "critkit/weak_ineq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "critkit/error.hpp"
#include "critkit/hardy.hpp"
#include "critkit/resolvent.hpp"
#include "parallel.hpp"

namespace critkit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double top_eigenvalue(const Matrix& m) {
  if (m.rows() == 0) return -kInf;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues()[m.rows() - 1];
}

/// The problem in g = f/h coordinates, restricted to the admissible subspace
/// spanned by the orthonormal columns of Z.
class Reduced {
 public:
  Reduced(const GraphForm& form, const Vector& w_free, const Vector& h_free, ProfileMode mode)
      : n_(form.free_count()), mode_(mode) {
    wd_ = h_free.array().square() * w_free.array() * form.free_measure().array();
    qh_ = h_free.asDiagonal() * form.energy_matrix() * h_free.asDiagonal();
    const Matrix Qd = Matrix(qh_);
    if (mode == ProfileMode::Poincare) {
      u_ = wd_;
      const Matrix um = u_;
      Eigen::HouseholderQR<Matrix> qr(um);
      const Matrix Q = qr.householderQ() * Matrix::Identity(n_, n_);
      z_ = Q.rightCols(n_ - 1);
    } else {
      z_ = Matrix::Identity(n_, n_);
    }
    pw_ = z_.transpose() * wd_.asDiagonal() * z_;
    pq_ = z_.transpose() * Qd * z_;
    pq_ = 0.5 * (pq_ + pq_.transpose());
    Matrix off = Qd;
    off.diagonal().setZero();
    sigma_ = std::max(0.0, top_eigenvalue(-(z_.transpose() * off * z_)));
    beta_ = Qd.diagonal().array() - sigma_;
    // Rounding in sigma must not turn an exactly degenerate direction into a
    // huge finite certificate.
    const double beta_floor = 1e-12 * std::max(Qd.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    for (Index i = 0; i < n_; ++i)
      if (beta_[i] <= beta_floor) beta_[i] = std::min(beta_[i], 0.0);

    const Index m = z_.cols();
    if (m > 0) {
      Eigen::LLT<Matrix> llt(pq_);
      const Vector ld = Matrix(llt.matrixL()).diagonal();
      if (llt.info() == Eigen::Success && ld.minCoeff() > 1e-7 * ld.maxCoeff()) {
        const Matrix Linv = llt.matrixL().solve(Matrix::Identity(m, m));
        c_ = Linv * pw_ * Linv.transpose();
        e_ = Linv * Linv.transpose();
        linv_ = Linv;
        definite_ = true;
      }
    }
  }

  [[nodiscard]] Index dim() const { return z_.cols(); }

  /// Smallest alpha >= 0 with n lambda_max(Z^T A Z)^+ <= r.
  [[nodiscard]] double alpha_uniform(double r) const {
    if (dim() == 0) return 0.0;
    const double level = r / static_cast<double>(n_);
    if (definite_) return std::max(0.0, top_eigenvalue(c_ - level * e_));
    auto ok = [&](double a) { return top_eigenvalue(pw_ - a * pq_) <= level; };
    if (ok(0.0)) return 0.0;
    double hi = 1.0;
    while (!ok(hi)) {
      hi *= 2.0;
      if (hi > 1e15) return kInf;
    }
    double lo = hi / 2.0 > 0.5 ? hi / 2.0 : 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (ok(mid) ? hi : lo) = mid;
    }
    return hi;
  }

  /// Smallest alpha >= 0 with sum_i (W_i - alpha beta_i)^+ <= r, where D =
  /// diag(A) + alpha sigma I. The left side is convex piecewise linear.
  [[nodiscard]] double alpha_diagonal(double r) const {
    auto b = [&](double a) {
      double s = 0.0;
      for (Index i = 0; i < n_; ++i) s += std::max(0.0, wd_[i] - a * beta_[i]);
      return s;
    };
    if (b(0.0) <= r) return 0.0;
    std::vector<double> knots;
    for (Index i = 0; i < n_; ++i)
      if (beta_[i] > 0.0) knots.push_back(wd_[i] / beta_[i]);
    std::sort(knots.begin(), knots.end());
    double prev = 0.0, b_prev = b(0.0);
    for (double k : knots) {
      if (k <= prev) continue;
      const double bk = b(k);
      if (bk <= r) return prev + (b_prev - r) / (b_prev - bk) * (k - prev);
      prev = k;
      b_prev = bk;
    }
    return kInf;
  }

  /// lambda_max of the pencil (P_W, P_Q); infinite if P_W charges ker P_Q.
  [[nodiscard]] double pencil_top() const {
    if (dim() == 0) return 0.0;
    if (definite_) return std::max(0.0, top_eigenvalue(c_));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(pq_);
    const Vector lam = eig.eigenvalues();
    const double cut = 1e-10 * std::max(lam.cwiseAbs().maxCoeff(), 1e-300);
    std::vector<Index> range;
    for (Index i = 0; i < lam.size(); ++i) {
      const Vector v = eig.eigenvectors().col(i);
      if (lam[i] > cut) {
        range.push_back(i);
      } else if (v.dot(pw_ * v) > 1e-12 * pw_.trace()) {
        return kInf;
      }
    }
    Matrix B(static_cast<Index>(range.size()), static_cast<Index>(range.size()));
    for (std::size_t a = 0; a < range.size(); ++a)
      for (std::size_t c = 0; c < range.size(); ++c) {
        const Vector va = eig.eigenvectors().col(range[a]), vc = eig.eigenvectors().col(range[c]);
        B(static_cast<Index>(a), static_cast<Index>(c)) = va.dot(pw_ * vc) / std::sqrt(lam[range[a]] * lam[range[c]]);
      }
    return std::max(0.0, top_eigenvalue(B));
  }

  /// Leading pencil directions in g coordinates (when P_Q is definite).
  [[nodiscard]] std::vector<Vector> pencil_directions(int count) const {
    std::vector<Vector> out;
    if (!definite_ || dim() == 0) return out;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(c_);
    for (int k = 0; k < count && k < dim(); ++k) {
      const Vector y = linv_.transpose() * eig.eigenvectors().col(dim() - 1 - k);
      out.push_back(z_ * y);
    }
    return out;
  }

  /// Projects onto the admissible set and rescales to ||g||_inf = 1.
  [[nodiscard]] bool normalize(Vector& g) const {
    if (mode_ == ProfileMode::Poincare) g -= (g.dot(u_) / u_.dot(u_)) * u_;
    const double s = g.cwiseAbs().maxCoeff();
    if (!(s > 0.0) || !std::isfinite(s)) return false;
    g /= s;
    return true;
  }

  [[nodiscard]] double mass(const Vector& g) const { return g.cwiseProduct(wd_).dot(g); }
  [[nodiscard]] double energy(const Vector& g) const { return g.dot(qh_ * g); }
  [[nodiscard]] const Vector& weights() const { return wd_; }
  [[nodiscard]] const SparseMatrix& qh() const { return qh_; }
  [[nodiscard]] Index n() const { return n_; }
  [[nodiscard]] ProfileMode mode() const { return mode_; }

 private:
  Index n_;
  ProfileMode mode_;
  Vector wd_;
  SparseMatrix qh_;
  Vector u_;
  Matrix z_, pw_, pq_, c_, e_, linv_;
  Vector beta_;
  double sigma_ = 0.0;
  bool definite_ = false;
};

double lb_value(const Reduced& red, const Vector& g, double r) {
  const double num = red.mass(g) - r;
  const double q = red.energy(g);
  if (q <= 1e-300 * std::max(1.0, red.mass(g))) return num > 0.0 ? kInf : -kInf;
  return num / q;
}

struct AscentResult {
  double value = -kInf;
  bool exhausted = false;
};

/// Projected gradient ascent of (g^T W g - r) / g^T Q g on the admissible
/// part of the sup-norm sphere, with a backtracking step.
AscentResult ascend(const Reduced& red, Vector g, double r, std::size_t iterations) {
  AscentResult out;
  if (!red.normalize(g)) return out;
  double val = lb_value(red, g, r);
  double eta = 0.5;
  std::size_t it = 0;
  for (; it < iterations && std::isfinite(val) && eta > 1e-10; ++it) {
    const double q = red.energy(g);
    const Vector grad = 2.0 * (red.weights().cwiseProduct(g) - val * (red.qh() * g)) / q;
    const double gn = grad.cwiseAbs().maxCoeff();
    if (!(gn > 0.0)) break;
    bool improved = false;
    while (eta > 1e-10) {
      Vector trial = g + (eta / gn) * grad;
      if (red.normalize(trial)) {
        const double tv = lb_value(red, trial, r);
        if (tv > val) {
          g = std::move(trial);
          val = tv;
          improved = true;
          eta = std::min(1.0, 2.0 * eta);
          break;
        }
      }
      eta *= 0.5;
    }
    if (!improved) break;
  }
  out.value = val;
  out.exhausted = it >= iterations && eta > 1e-10 && std::isfinite(val);
  return out;
}

}  // namespace

const char* to_string(ProfileMode m) { return m == ProfileMode::Hardy ? "Hardy" : "Poincare"; }

std::vector<double> default_r_grid(double weight_mass, double lo, int per_decade) {
  if (!(weight_mass > 0.0) || !(lo > 0.0) || per_decade < 1) {
    throw Error(ErrorCode::BadParams, "r grid needs positive bounds and density");
  }
  std::vector<double> grid;
  const double step = std::pow(10.0, 1.0 / per_decade);
  for (double r = lo; r < weight_mass * (1.0 - 1e-12); r *= step) grid.push_back(r);
  grid.push_back(weight_mass);
  return grid;
}

AlphaProfile alpha_profile(const GraphForm& form, const VertexFunction& w, const VertexFunction& h,
                           const std::vector<double>& r_grid, ProfileMode mode, std::uint64_t seed,
                           const ProfileBudget& budget, const Tolerances& tol, unsigned threads) {
  if (w.size() != form.size() || h.size() != form.size()) {
    throw Error(ErrorCode::DomainMismatch, "w and h must be vertex functions of the form");
  }
  if (form.free_count() > kDensePencilLimit) {
    throw Error(ErrorCode::BadParams, "alpha_profile is limited to " + std::to_string(kDensePencilLimit) +
                                          " free vertices");
  }
  if (r_grid.empty()) throw Error(ErrorCode::BadParams, "empty r grid");
  for (std::size_t i = 0; i < r_grid.size(); ++i) {
    if (!(r_grid[i] > 0.0) || (i > 0 && !(r_grid[i] > r_grid[i - 1]))) {
      throw Error(ErrorCode::BadParams, "r grid must be positive and increasing");
    }
  }
  const Vector w_free = form.restrict_free(w);
  const Vector h_free = form.restrict_free(h);
  if ((w_free.array() < 0.0).any()) throw Error(ErrorCode::NonPositiveInput, "w must be nonnegative");
  if (!(h_free.array() > 0.0).all()) throw Error(ErrorCode::NonPositiveH, "h must be strictly positive");
  if (mode == ProfileMode::Poincare) {
    const Vector Lh = form.restrict_free(apply_generator(form, h));
    const double scale = form.operator_norm_bound() * h_free.cwiseAbs().maxCoeff();
    if (Lh.cwiseAbs().maxCoeff() > tol.eig * std::max(scale, 1e-300)) {
      throw Error(ErrorCode::KernelMismatch, "Poincare mode needs h in the kernel (||Lh|| too large)");
    }
  }

  const Reduced red(form, w_free, h_free, mode);
  AlphaProfile prof;
  prof.mode = mode;
  prof.r_grid = r_grid;
  prof.w = w;
  prof.h = h;
  prof.weight_mass = red.weights().sum();
  prof.alpha_max = red.pencil_top();

  // Deterministic seeds shared by every r.
  std::vector<Vector> seeds;
  for (const Vector& d : red.pencil_directions(3)) {
    seeds.push_back(d);
    seeds.push_back(d.array().sign().matrix());
  }
  if (mode == ProfileMode::Hardy) seeds.push_back(Vector::Ones(red.n()));

  const std::size_t nr = r_grid.size();
  std::vector<double> cert(nr), lb(nr);
  std::vector<char> exhausted(nr, 0);
  detail::parallel_for(nr, threads, [&](std::size_t k) {
    const double r = r_grid[k];
    cert[k] = std::min(red.alpha_uniform(r), red.alpha_diagonal(r));
    std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ULL * (k + 1));
    std::normal_distribution<double> normal;
    double best = 0.0;
    for (std::size_t s = 0; s < budget.starts; ++s) {
      Vector g;
      if (s < seeds.size()) {
        g = seeds[s];
      } else {
        g.resize(red.n());
        for (Index i = 0; i < g.size(); ++i) g[i] = normal(rng);
      }
      const AscentResult res = ascend(red, g, r, budget.iterations);
      best = std::max(best, res.value);
      exhausted[k] |= res.exhausted;
    }
    lb[k] = best;
  });

  double running = kInf;
  for (std::size_t k = 0; k < nr; ++k) {
    running = std::min(running, cert[k]);
    prof.alpha_cert.push_back(running);
    prof.alpha_lb.push_back(lb[k]);
    if (lb[k] > running + 1e-8 * std::max(1.0, running)) {
      throw Error(ErrorCode::ValidationFailure, "lower bound exceeds the certificate at r = " + std::to_string(r_grid[k]));
    }
    prof.budget_exhausted |= exhausted[k] != 0;
  }
  if (prof.budget_exhausted) {
    prof.warnings.push_back("some ascent runs used the full iteration budget; alpha_lb may be loose");
  }
  return prof;
}

double interpolate_alpha(const AlphaProfile& p, double r) {
  const auto& g = p.r_grid;
  if (g.empty()) return kInf;
  if (r >= g.back()) return p.alpha_cert.back();
  if (r < g.front()) {
    // alpha_max bounds the optimal alpha at every r, so the chord from
    // (0, alpha_max) stays above the convex optimal profile.
    const double a0 = std::max(p.alpha_max, p.alpha_cert.front());
    if (std::isinf(a0)) return a0;
    return a0 + (r / g.front()) * (p.alpha_cert.front() - a0);
  }
  const auto it = std::upper_bound(g.begin(), g.end(), r);
  const std::size_t j = static_cast<std::size_t>(it - g.begin());
  const double r0 = g[j - 1], r1 = g[j];
  const double a0 = p.alpha_cert[j - 1], a1 = p.alpha_cert[j];
  if (std::isinf(a0)) return a0;
  return a0 + (r - r0) / (r1 - r0) * (a1 - a0);
}

DecayCurve decay_rate(const AlphaProfile& p, const std::vector<double>& t_grid) {
  if (p.r_grid.empty() || p.alpha_cert.size() != p.r_grid.size()) {
    throw Error(ErrorCode::BadParams, "profile has no certificate grid");
  }
  auto holds = [&](double r, double t) {
    if (r >= 1.0) return true;
    const double a = interpolate_alpha(p, r);
    return std::isfinite(a) && -0.5 * a * std::log(r) <= t;
  };
  // Bisection in log r on a bracket where the condition fails at lo and
  // holds at hi; the condition is monotone in r.
  auto invert = [&](double lo, double hi, double t) {
    while (hi - lo > 1e-13 * std::max(1.0, std::abs(hi))) {
      const double mid = 0.5 * (lo + hi);
      (holds(std::exp(mid), t) ? hi : lo) = mid;
    }
    return std::exp(hi);
  };
  DecayCurve out;
  const double a_below = std::max(p.alpha_max, p.alpha_cert.front());
  for (double t : t_grid) {
    if (!(t > 0.0)) throw Error(ErrorCode::BadParams, "decay times must be positive");
    if (p.weight_mass == 0.0 || a_below == 0.0) {
      out.emplace_back(t, 0.0);
      continue;
    }
    double xi;
    if (holds(p.r_grid.front(), t)) {
      if (!std::isfinite(a_below)) {
        throw Error(ErrorCode::GridTooCoarse,
                    "the decay condition already holds at the smallest r and alpha_max is infinite; "
                    "extend the r grid downwards");
      }
      // Below the grid alpha <= a_below, so the crossing is above exp(-2t/a_below).
      const double floor = std::min(p.r_grid.front(), std::exp(-2.0 * t / a_below)) * 0.5;
      xi = floor > 0.0 ? invert(std::log(floor), std::log(p.r_grid.front()), t) : 0.0;
    } else {
      std::size_t j = 1;
      while (j < p.r_grid.size() && !holds(p.r_grid[j], t)) ++j;
      if (j < p.r_grid.size()) {
        xi = invert(std::log(p.r_grid[j - 1]), std::log(p.r_grid[j]), t);
      } else {
        const double a = p.alpha_cert.back();
        xi = std::isfinite(a) && a > 0.0 ? std::min(1.0, std::exp(-2.0 * t / a)) : 1.0;
      }
    }
    out.emplace_back(t, xi);
  }
  for (std::size_t k = 1; k < out.size(); ++k) {
    if (out[k].first > out[k - 1].first) out[k].second = std::min(out[k].second, out[k - 1].second);
  }
  return out;
}

DecayReport verify_decay(const GraphForm& form, const VertexFunction& h, const DecayCurve& xi,
                         std::size_t n_samples, std::uint64_t seed, const Tolerances& tol) {
  form.check_domain(h);
  const Vector h_free = form.restrict_free(h);
  if (!(h_free.array() > 0.0).all()) throw Error(ErrorCode::NonPositiveH, "h must be strictly positive");
  const ExcessiveReport ex = is_excessive(form, h, default_excessive_grid(form), tol);
  if (!ex.excessive) throw Error(ErrorCode::ExcessivityFailure, "h is not excessive for the form");

  std::mt19937_64 rng(seed);
  std::vector<VertexFunction> fs;
  for (std::size_t s = 0; s < n_samples; ++s) fs.push_back(random_function(form, rng));

  DecayReport rep;
  for (const auto& [t, x] : xi) {
    double worst = 1.0;
    for (const VertexFunction& f : fs) {
      const double lhs = norm_sq(form, semigroup_apply(form, t, f, tol));
      const double phi = form.restrict_free(f).cwiseQuotient(h_free).cwiseAbs().maxCoeff();
      const double rhs = x * (norm_sq(form, f) + phi * phi);
      ++rep.samples;
      if (rhs <= 0.0) continue;
      const double margin = (rhs - lhs) / rhs;
      if (margin < -1e-8) {
        throw Error(ErrorCode::ViolationFound,
                    "decay bound violated at t = " + std::to_string(t) + " (lhs " + std::to_string(lhs) +
                        " > rhs " + std::to_string(rhs) + ")");
      }
      rep.tight += margin < 1e-3;
      worst = std::min(worst, margin);
    }
    rep.worst_by_t.emplace_back(t, worst);
    rep.worst_margin = std::min(rep.worst_margin, worst);
  }
  return rep;
}

VertexFunction truncation_map(const VertexFunction& f, const VertexFunction& h) {
  if (f.size() != h.size()) throw Error(ErrorCode::DomainMismatch, "f and h differ in length");
  if ((h.array() < 0.0).any()) throw Error(ErrorCode::NonPositiveH, "truncation needs h >= 0");
  return f.cwiseMin(h).cwiseMax(-h);
}

Projection poincare_project(const GraphForm& form, const VertexFunction& f, const VertexFunction& h,
                            const VertexFunction& w, bool truncated) {
  form.check_domain(f);
  if (h.size() != form.size() || w.size() != form.size()) {
    throw Error(ErrorCode::DomainMismatch, "h and w must be vertex functions of the form");
  }
  const Vector hf = form.restrict_free(h);
  const Vector wm = form.restrict_free(w).cwiseProduct(form.free_measure());
  if (!(hf.array() > 0.0).all()) throw Error(ErrorCode::NonPositiveH, "h must be strictly positive");
  if ((wm.array() < 0.0).any()) throw Error(ErrorCode::NonPositiveInput, "w must be nonnegative");
  const double hh = hf.cwiseProduct(hf).dot(wm);
  if (!(hh > 0.0)) throw Error(ErrorCode::BadParams, "sum h^2 w mu must be positive");
  const Vector ff = form.restrict_free(f);

  Projection out;
  if (!truncated) {
    out.c = ff.cwiseProduct(hf).dot(wm) / hh;
    out.f_proj = form.extend(ff - out.c * hf);
    return out;
  }
  auto psi = [&](double c) { return (ff - c * hf).cwiseMin(hf).cwiseMax(-hf).cwiseProduct(hf).dot(wm); };
  const double bound = ff.cwiseQuotient(hf).cwiseAbs().maxCoeff() + 1.0;
  double lo = -bound, hi = bound;
  double plo = psi(lo), phi = psi(hi);
  if (!(plo >= 0.0 && phi <= 0.0)) throw Error(ErrorCode::BisectionFailure, "no sign change in the projection bracket");
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double pm = psi(mid);
    if (pm > 0.0) {
      lo = mid;
      plo = pm;
    } else {
      hi = mid;
      phi = pm;
    }
  }
  // psi is piecewise linear; finish with the secant through the bracket.
  out.c = plo != phi ? lo + plo * (hi - lo) / (plo - phi) : 0.5 * (lo + hi);
  out.f_proj = form.extend((ff - out.c * hf).cwiseMin(hf).cwiseMax(-hf));
  return out;
}

}  // namespace critkit
