#include "critkit/resolvent.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "critkit/error.hpp"
#include "linear_solver.hpp"

namespace critkit {

namespace {

double sup_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

/// exp(-t S) y for S = D^{-1/2} K D^{-1/2} by restarted Lanczos with
/// adaptive substeps.
Vector krylov_exp_action(const SparseMatrix& K, const Vector& inv_sqrt_mu, double t,
                         const Vector& y, double tol) {
  const Index n = y.size();
  const double beta0 = y.norm();
  if (beta0 == 0.0) return y;
  auto apply = [&](const Vector& x) -> Vector {
    return inv_sqrt_mu.cwiseProduct(K * inv_sqrt_mu.cwiseProduct(x));
  };
  const Index m_max = std::min<Index>(n, 40);
  Vector w = y;
  double remaining = t;
  double step = t;
  int guard = 0;
  while (remaining > 0.0) {
    if (++guard > 100000) throw Error(ErrorCode::SolverFailure, "Krylov exponential stalled");
    step = std::min(step, remaining);
    const double beta = w.norm();
    if (beta == 0.0) break;
    Matrix V(n, m_max + 1);
    Vector alpha = Vector::Zero(m_max);
    Vector off = Vector::Zero(m_max);
    V.col(0) = w / beta;
    Index m = m_max;
    double h_next = 0.0;
    for (Index j = 0; j < m_max; ++j) {
      Vector z = apply(V.col(j));
      alpha[j] = V.col(j).dot(z);
      z -= alpha[j] * V.col(j);
      if (j > 0) z -= off[j - 1] * V.col(j - 1);
      // Full reorthogonalization; m_max is small.
      for (Index i = 0; i <= j; ++i) z -= V.col(i).dot(z) * V.col(i);
      const double nz = z.norm();
      if (j + 1 < m_max) off[j] = nz;
      h_next = nz;
      if (nz <= 1e-14 * beta0) {
        m = j + 1;
        h_next = 0.0;
        break;
      }
      V.col(j + 1) = z / nz;
    }
    Matrix T = Matrix::Zero(m, m);
    for (Index j = 0; j < m; ++j) {
      T(j, j) = alpha[j];
      if (j + 1 < m) T(j, j + 1) = T(j + 1, j) = off[j];
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(T);
    for (;;) {
      const Vector expo = (-step * eig.eigenvalues().array()).exp().matrix();
      const Vector coeffs = eig.eigenvectors() * expo.cwiseProduct(eig.eigenvectors().row(0).transpose());
      const double err = beta * h_next * std::abs(coeffs[m - 1]);
      if (err <= tol * beta0 * step / t || step < 1e-12 * t) {
        w = beta * (V.leftCols(m) * coeffs);
        remaining -= step;
        if (err < 0.1 * tol * beta0 * step / t) step *= 2.0;
        break;
      }
      step *= 0.5;
    }
  }
  return w;
}

/// Lagrange extrapolation to x = 0 through the points (xs[i], ys[i]).
Vector extrapolate_to_zero(const std::vector<double>& xs, const std::vector<const Vector*>& ys) {
  Vector out = Vector::Zero(ys.front()->size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double weight = 1.0;
    for (std::size_t j = 0; j < xs.size(); ++j) {
      if (j != i) weight *= -xs[j] / (xs[i] - xs[j]);
    }
    out += weight * *ys[i];
  }
  return out;
}

double tail_slope(const std::vector<std::pair<double, double>>& trace, std::size_t window) {
  const std::size_t k = std::min(window, trace.size());
  if (k < 2) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = trace.size() - k; i < trace.size(); ++i) {
    const double x = std::log(trace[i].first);
    const double y = std::log(std::max(trace[i].second, 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = static_cast<double>(k) * sxx - sx * sx;
  return denom == 0.0 ? 0.0 : (static_cast<double>(k) * sxy - sx * sy) / denom;
}

}  // namespace

VertexFunction apply_generator(const GraphForm& form, const VertexFunction& f) {
  form.check_domain(f);
  const Vector kf = form.energy_matrix() * form.restrict_free(f);
  return form.extend(kf.cwiseQuotient(form.free_measure()));
}

VertexFunction resolvent_apply(const GraphForm& form, double alpha, const VertexFunction& f,
                               const Tolerances& tol) {
  if (!(alpha > 0.0)) throw Error(ErrorCode::BadParams, "resolvent requires alpha > 0");
  form.check_domain(f);
  const Vector rhs = form.free_measure().cwiseProduct(form.restrict_free(f));
  auto solver = detail::shifted_solver(form, alpha, tol.solve);
  const Vector u = solver->solve(rhs);
  const Vector residual =
      form.energy_matrix() * u + alpha * form.free_measure().cwiseProduct(u) - rhs;
  const double scale = std::max(rhs.norm(), 1e-300);
  if (residual.norm() > 1e-8 * scale * std::max(1.0, form.operator_norm_bound() / alpha)) {
    throw Error(ErrorCode::SolverFailure,
                "resolvent residual " + std::to_string(residual.norm() / scale) + " too large");
  }
  return form.extend(u);
}

VertexFunction semigroup_apply(const GraphForm& form, double t, const VertexFunction& f,
                               const Tolerances& tol) {
  if (!(t > 0.0)) throw Error(ErrorCode::BadParams, "semigroup requires t > 0");
  form.check_domain(f);
  if (form.free_count() == 0) return form.zeros();
  const Vector sqrt_mu = form.free_measure().cwiseSqrt();
  const Vector y = sqrt_mu.cwiseProduct(form.restrict_free(f));
  Vector z;
  if (form.free_count() <= kSemigroupDenseCutoff) {
    auto dec = detail::spectral(form);
    const Vector coeffs = dec->eigenvectors.transpose() * y;
    const Vector decay = (-t * dec->eigenvalues.array()).exp().matrix();
    z = dec->eigenvectors * coeffs.cwiseProduct(decay);
  } else {
    z = krylov_exp_action(form.energy_matrix(), sqrt_mu.cwiseInverse(), t, y,
                          std::max(tol.solve, 1e-13));
  }
  return form.extend(z.cwiseQuotient(sqrt_mu));
}

std::vector<double> geometric_schedule(double start, double stop, double ratio) {
  if (!(start > 0.0) || !(stop > 0.0) || !(ratio > 0.0 && ratio < 1.0) || stop > start) {
    throw Error(ErrorCode::BadParams, "geometric schedule needs start >= stop > 0, 0 < ratio < 1");
  }
  std::vector<double> out;
  for (double a = start; a >= stop * (1.0 - 1e-12); a *= ratio) out.push_back(a);
  return out;
}

std::vector<double> default_alpha_schedule() { return geometric_schedule(1.0, 1e-8, 0.5); }

GreenResult green_apply(const GraphForm& form, const VertexFunction& f,
                        const GreenOptions& options, const Tolerances& tol) {
  form.check_domain(f);
  if ((f.array() < 0.0).any()) {
    throw Error(ErrorCode::NonPositiveInput, "green_apply requires f >= 0");
  }
  const auto& schedule = options.alpha_schedule;
  if (schedule.empty()) throw Error(ErrorCode::BadParams, "empty alpha schedule");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i] > 0.0) || (i > 0 && !(schedule[i] < schedule[i - 1]))) {
      throw Error(ErrorCode::BadParams, "alpha schedule must be positive and strictly decreasing");
    }
  }
  GreenResult result;
  const double fmax = sup_norm(f);
  if (fmax == 0.0) {
    result.value = form.zeros();
    return result;
  }
  if (const auto exact = detail::shifted_solver(form, 0.0, tol.solve); exact->positive_definite()) {
    result.value = form.extend(exact->solve(form.free_measure().cwiseProduct(form.restrict_free(f))));
    result.direct = true;
    return result;
  }
  const double threshold =
      options.divergence_threshold > 0.0 ? options.divergence_threshold : tol.divergence_factor * fmax;

  std::vector<Vector> values;
  std::vector<Vector> extrapolated;
  constexpr std::size_t kExtrapolationPoints = 4;
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    const double alpha = schedule[k];
    values.push_back(form.restrict_free(resolvent_apply(form, alpha, f, tol)));
    const double size = sup_norm(values.back());
    result.alpha_trace.emplace_back(alpha, size);
    if (size > threshold) {
      result.status = GreenStatus::Diverges;
      result.loglog_slope = tail_slope(result.alpha_trace, 5);
      return result;
    }
    const std::size_t npts = std::min(k + 1, kExtrapolationPoints);
    std::vector<double> xs;
    std::vector<const Vector*> ys;
    for (std::size_t i = k + 1 - npts; i <= k; ++i) {
      xs.push_back(schedule[i]);
      ys.push_back(&values[i]);
    }
    extrapolated.push_back(extrapolate_to_zero(xs, ys));
    if (k >= kExtrapolationPoints) {
      const Vector& cur = extrapolated[k];
      const Vector& prev = extrapolated[k - 1];
      const double change = sup_norm(cur - prev) / std::max(sup_norm(cur), 1e-300);
      if (change < tol.green) {
        result.status = GreenStatus::Finite;
        result.value = form.extend(cur);
        result.loglog_slope = tail_slope(result.alpha_trace, 5);
        return result;
      }
    }
  }
  result.loglog_slope = tail_slope(result.alpha_trace, 5);
  if (result.loglog_slope <= -1.0 + 0.1) {
    result.status = GreenStatus::Diverges;
    return result;
  }
  std::ostringstream msg;
  msg << "Green limit neither stabilized nor diverged; trace:";
  for (const auto& [a, v] : result.alpha_trace) msg << " (" << a << ", " << v << ")";
  throw Error(ErrorCode::Inconclusive, msg.str());
}

std::vector<double> default_excessive_grid(const GraphForm& form) {
  const double scale = std::max(form.operator_norm_bound(), 1e-12);
  std::vector<double> grid;
  for (int e = -3; e <= 12; ++e) grid.push_back(scale * std::pow(10.0, e));
  return grid;
}

ExcessiveReport is_excessive(const GraphForm& form, const VertexFunction& h,
                             const std::vector<double>& alpha_grid, const Tolerances& tol) {
  form.check_domain(h);
  if ((h.array() < 0.0).any()) {
    throw Error(ErrorCode::NonPositiveInput, "is_excessive requires h >= 0");
  }
  ExcessiveReport report;
  const double hmax = sup_norm(h);
  if (hmax == 0.0) {
    report.excessive = true;
    return report;
  }
  const VertexFunction lh = apply_generator(form, h);
  report.max_violation = std::max(0.0, (-lh).maxCoeff()) / hmax;
  report.excessive = report.max_violation <= tol.ineq;

  // alpha G_alpha h - h equals -G_alpha L h; solving for the right-hand side
  // avoids the cancellation that hides violations of size tol at large alpha.
  // The factor alpha puts the grid value in the units of L h, and it tends to
  // the algebraic violation as alpha grows.
  double grid_violation = 0.0;
  for (double alpha : alpha_grid) {
    const VertexFunction defect = -alpha * resolvent_apply(form, alpha, lh, tol);
    grid_violation = std::max(grid_violation, defect.maxCoeff() / hmax);
  }
  report.grid_max_violation = grid_violation;
  report.grid_agrees = (grid_violation <= tol.ineq) == report.excessive;
  return report;
}

ContractionReport check_resolvent_contraction(const GraphForm& form, const VertexFunction& f,
                                              double alpha, const Tolerances& tol) {
  ContractionReport report;
  const VertexFunction u = alpha * resolvent_apply(form, alpha, f, tol);
  report.q_scaled = evaluate(form, u);
  report.q_f = evaluate(form, f);
  report.defect_energy = alpha * norm_sq(form, f - u);
  const double scale = std::max(norm_sq(form, f), 1e-300);
  report.holds = (report.q_scaled - report.q_f) / scale <= tol.ineq &&
                 (report.defect_energy - report.q_f) / scale <= tol.ineq;
  return report;
}

}  // namespace critkit
