#pragma once

// Kronecker-structured linear algebra. Products act on vectors in the
// row-major grid ordering of grid_data.hpp: factor 0 acts on the slowest axis.

#include <cstddef>
#include <span>
#include <vector>

#include "gridgp/grid_data.hpp"

namespace gridgp {

/// A (x) B (x) ... with rectangular factors G_l of shape m_l x q_l.
class RectKroneckerOperator {
public:
  RectKroneckerOperator() = default;
  explicit RectKroneckerOperator(std::vector<Matrix> factors);

  const std::vector<Matrix>& factors() const { return factors_; }
  std::size_t dims() const { return factors_.size(); }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::vector<std::size_t> row_shape() const;
  std::vector<std::size_t> col_shape() const;

  /// Explicit rows() x cols() matrix. Test oracles and tiny problems only.
  Matrix dense() const;

private:
  std::vector<Matrix> factors_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
};

/// K = K_0 (x) ... (x) K_{d-1} with square symmetric factors.
class KroneckerOperator {
public:
  KroneckerOperator() = default;
  /// Throws std::invalid_argument for non-square, non-finite or non-symmetric
  /// (beyond 1e-12 relative) factors.
  explicit KroneckerOperator(std::vector<Matrix> factors);

  const std::vector<Matrix>& factors() const { return rect_.factors(); }
  std::size_t dims() const { return rect_.dims(); }
  std::size_t size() const { return rect_.rows(); }
  std::vector<std::size_t> shape() const { return rect_.row_shape(); }
  const RectKroneckerOperator& as_rect() const { return rect_; }
  Matrix dense() const { return rect_.dense(); }

private:
  RectKroneckerOperator rect_;
};

/// (G_0 (x) ... (x) G_{d-1}) x without forming the product. Each factor is
/// applied along its tensor mode in turn, so the work is
/// sum_l (prod of current extents) * m_l and no M x M storage is used.
Vector kron_mvm(std::span<const Matrix> factors, const Vector& x);
/// Same with every factor transposed.
Vector kron_mvm_transposed(std::span<const Matrix> factors, const Vector& x);

Vector kron_mvm(const KroneckerOperator& op, const Vector& x);
Vector kron_mvm(const RectKroneckerOperator& op, const Vector& x);
Vector kron_mvm_transposed(const RectKroneckerOperator& op, const Vector& x);

/// Per-axis eigendecomposition K_l = Q_l diag(t_l) Q_l^T; the full-grid
/// eigenvector with linear index j is the Kronecker product of the per-axis
/// columns picked out by unflatten_index(j, shape()).
struct KroneckerEigen {
  std::vector<Matrix> q_factors;
  std::vector<Vector> eigvals;

  std::size_t size() const;
  std::vector<std::size_t> shape() const;
};

KroneckerEigen kron_eig(const KroneckerOperator& op);

/// All M full-grid eigenvalues, entry j being the product of per-axis
/// eigenvalues at unflatten_index(j).
Vector full_eigenvalues(const KroneckerEigen& eig);

/// Indices of the p largest values, descending; ties by ascending index.
IndexList top_p(const Vector& values, std::size_t p);
/// Indices of the p smallest values, ascending; ties by ascending index.
IndexList bottom_p(const Vector& values, std::size_t p);

/// Full-grid eigenvalues with round-off negatives clamped to zero. Values below
/// -1e-12 * max|lambda| are rejected with std::domain_error.
Vector clamped_eigenvalues(const KroneckerEigen& eig);

/// Column j of Q = (x) Q_l.
Vector eig_column(const KroneckerEigen& eig, std::size_t j);

/// Solves (K + sigma2 I) x = y as Q (T + sigma2 I)^{-1} Q^T y.
/// Throws std::domain_error if a shifted eigenvalue is not positive.
Vector eig_solve(const KroneckerEigen& eig, double sigma2, const Vector& y);

/// Variant reusing precomputed clamped eigenvalues.
Vector eig_solve(const KroneckerEigen& eig, const Vector& clamped_eigs, double sigma2,
                 const Vector& y);

} // namespace gridgp
