#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <variant>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

#include "critkit/form.hpp"

namespace critkit::detail {

/// Vertex count at or above which (K + alpha M) is solved iteratively.
inline constexpr Index kDirectSolverLimit = 50000;

/// Solver for (K + alpha M) x = b. Sparse LDLT below kDirectSolverLimit,
/// diagonally preconditioned CG above.
class ShiftedSolver {
 public:
  ShiftedSolver(const SparseMatrix& K, const Vector& mu, double alpha, double tol_solve);

  [[nodiscard]] Vector solve(const Vector& rhs) const;
  /// False when the LDLT pivots show (K + alpha M) is singular or indefinite.
  [[nodiscard]] bool positive_definite() const { return positive_definite_; }
  [[nodiscard]] double alpha() const { return alpha_; }

 private:
  using Direct = Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;
  using Iterative = Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper,
                                             Eigen::DiagonalPreconditioner<double>>;
  SparseMatrix shifted_;
  std::unique_ptr<Direct> direct_;
  std::unique_ptr<Iterative> iterative_;
  double alpha_;
  double tol_solve_;
  bool positive_definite_ = true;
};

/// Eigen-decomposition of S = M^{-1/2} K M^{-1/2}; L = M^{-1/2} S M^{1/2}.
struct SpectralDecomposition {
  Vector eigenvalues;   // ascending
  Matrix eigenvectors;  // orthonormal columns in the Euclidean inner product
  Vector sqrt_mu;
};

struct FormCache {
  std::mutex mutex;
  std::map<double, std::shared_ptr<const ShiftedSolver>> shifted;
  std::shared_ptr<const SpectralDecomposition> spectral;
};

/// Cached factorization of K + alpha M. Throws SolverFailure if alpha > 0
/// and the factorization fails.
std::shared_ptr<const ShiftedSolver> shifted_solver(const GraphForm& form, double alpha,
                                                    double tol_solve = 1e-12);

/// Cached dense decomposition (computed on first use).
std::shared_ptr<const SpectralDecomposition> spectral(const GraphForm& form);

}  // namespace critkit::detail
