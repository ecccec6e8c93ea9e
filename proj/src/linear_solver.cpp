#include "linear_solver.hpp"

#include <Eigen/Eigenvalues>

#include "critkit/error.hpp"

namespace critkit::detail {

ShiftedSolver::ShiftedSolver(const SparseMatrix& K, const Vector& mu, double alpha,
                             double tol_solve)
    : alpha_(alpha), tol_solve_(tol_solve) {
  shifted_ = K;
  if (alpha != 0.0) {
    for (Index i = 0; i < shifted_.rows(); ++i) shifted_.coeffRef(i, i) += alpha * mu[i];
  }
  shifted_.makeCompressed();
  if (shifted_.rows() == 0) return;
  if (shifted_.rows() < kDirectSolverLimit) {
    direct_ = std::make_unique<Direct>(shifted_);
    if (direct_->info() != Eigen::Success) {
      positive_definite_ = false;
      return;
    }
    const Vector d = direct_->vectorD();
    // A zero pivot relative to the diagonal scale means a kernel.
    const double scale = shifted_.diagonal().cwiseAbs().maxCoeff();
    for (Index i = 0; i < d.size(); ++i) {
      if (!(d[i] > 1e-13 * scale)) {
        positive_definite_ = false;
        break;
      }
    }
  } else {
    iterative_ = std::make_unique<Iterative>();
    iterative_->setTolerance(tol_solve_);
    iterative_->setMaxIterations(20 * shifted_.rows());
    iterative_->compute(shifted_);
  }
}

Vector ShiftedSolver::solve(const Vector& rhs) const {
  if (shifted_.rows() == 0) return Vector(0);
  if (!positive_definite_) {
    throw Error(ErrorCode::SolverFailure,
                "operator K + alpha M is not positive definite (alpha = " +
                    std::to_string(alpha_) + ")");
  }
  if (direct_) {
    Vector x = direct_->solve(rhs);
    if (direct_->info() != Eigen::Success) {
      throw Error(ErrorCode::SolverFailure, "sparse LDLT solve failed");
    }
    return x;
  }
  Vector x = iterative_->solve(rhs);
  if (iterative_->info() != Eigen::Success) {
    throw Error(ErrorCode::SolverFailure,
                "conjugate gradient did not converge (error " +
                    std::to_string(iterative_->error()) + ")");
  }
  return x;
}

std::shared_ptr<const ShiftedSolver> shifted_solver(const GraphForm& form, double alpha,
                                                    double tol_solve) {
  auto& cache = form.cache();
  {
    std::lock_guard lock(cache.mutex);
    if (auto it = cache.shifted.find(alpha); it != cache.shifted.end()) return it->second;
  }
  auto solver = std::make_shared<const ShiftedSolver>(form.energy_matrix(), form.free_measure(),
                                                      alpha, tol_solve);
  if (alpha > 0.0 && !solver->positive_definite()) {
    throw Error(ErrorCode::SolverFailure, "factorization of K + alpha M failed");
  }
  std::lock_guard lock(cache.mutex);
  if (cache.shifted.size() >= 64) cache.shifted.clear();
  cache.shifted.emplace(alpha, solver);
  return solver;
}

std::shared_ptr<const SpectralDecomposition> spectral(const GraphForm& form) {
  auto& cache = form.cache();
  {
    std::lock_guard lock(cache.mutex);
    if (cache.spectral) return cache.spectral;
  }
  auto dec = std::make_shared<SpectralDecomposition>();
  dec->sqrt_mu = form.free_measure().cwiseSqrt();
  const Vector inv_sqrt = dec->sqrt_mu.cwiseInverse();
  Matrix S = Matrix(form.energy_matrix());
  S = inv_sqrt.asDiagonal() * S * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> solver(S);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::SolverFailure, "dense eigendecomposition failed");
  }
  dec->eigenvalues = solver.eigenvalues();
  dec->eigenvectors = solver.eigenvectors();
  std::lock_guard lock(cache.mutex);
  if (!cache.spectral) cache.spectral = std::move(dec);
  return cache.spectral;
}

}  // namespace critkit::detail
