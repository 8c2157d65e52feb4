#include "gridgp/kron_linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace gridgp {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <bool Transposed>
Vector apply_factors(std::span<const Matrix> factors, const Vector& x) {
  if (factors.empty()) throw std::invalid_argument("kron_mvm: no factors");
  std::vector<std::size_t> extents(factors.size());
  std::size_t in_size = 1;
  for (std::size_t l = 0; l < factors.size(); ++l) {
    extents[l] = static_cast<std::size_t>(Transposed ? factors[l].rows() : factors[l].cols());
    in_size *= extents[l];
  }
  if (static_cast<std::size_t>(x.size()) != in_size)
    throw std::invalid_argument("kron_mvm: vector length " + std::to_string(x.size()) +
                                " does not match operator column size " + std::to_string(in_size));

  Vector cur = x;
  Vector next;
  for (std::size_t l = 0; l < factors.size(); ++l) {
    const auto& a = factors[l];
    const auto n = extents[l];
    const auto m = static_cast<std::size_t>(Transposed ? a.cols() : a.rows());
    std::size_t outer = 1;
    for (std::size_t k = 0; k < l; ++k) outer *= extents[k];
    std::size_t inner = 1;
    for (std::size_t k = l + 1; k < extents.size(); ++k) inner *= extents[k];

    next.resize(static_cast<Eigen::Index>(outer * m * inner));
    const auto ni = static_cast<Eigen::Index>(n), mi = static_cast<Eigen::Index>(m),
               si = static_cast<Eigen::Index>(inner);
    for (std::size_t p = 0; p < outer; ++p) {
      Eigen::Map<const RowMajorMatrix> in_block(cur.data() + p * n * inner, ni, si);
      Eigen::Map<RowMajorMatrix> out_block(next.data() + p * m * inner, mi, si);
      if constexpr (Transposed)
        out_block.noalias() = a.transpose() * in_block;
      else
        out_block.noalias() = a * in_block;
    }
    extents[l] = m;
    cur.swap(next);
  }
  return cur;
}

} // namespace

RectKroneckerOperator::RectKroneckerOperator(std::vector<Matrix> factors)
    : factors_(std::move(factors)) {
  if (factors_.empty()) throw std::invalid_argument("RectKroneckerOperator: no factors");
  rows_ = 1;
  cols_ = 1;
  for (const auto& f : factors_) {
    if (f.rows() == 0 || f.cols() == 0) throw std::invalid_argument("RectKroneckerOperator: empty factor");
    if (!f.allFinite()) throw std::invalid_argument("RectKroneckerOperator: non-finite factor entry");
    rows_ *= static_cast<std::size_t>(f.rows());
    cols_ *= static_cast<std::size_t>(f.cols());
  }
}

std::vector<std::size_t> RectKroneckerOperator::row_shape() const {
  std::vector<std::size_t> s;
  for (const auto& f : factors_) s.push_back(static_cast<std::size_t>(f.rows()));
  return s;
}

std::vector<std::size_t> RectKroneckerOperator::col_shape() const {
  std::vector<std::size_t> s;
  for (const auto& f : factors_) s.push_back(static_cast<std::size_t>(f.cols()));
  return s;
}

Matrix RectKroneckerOperator::dense() const {
  Matrix out = factors_.front();
  for (std::size_t l = 1; l < factors_.size(); ++l) {
    const auto& f = factors_[l];
    Matrix next(out.rows() * f.rows(), out.cols() * f.cols());
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      for (Eigen::Index j = 0; j < out.cols(); ++j)
        next.block(i * f.rows(), j * f.cols(), f.rows(), f.cols()) = out(i, j) * f;
    out.swap(next);
  }
  return out;
}

KroneckerOperator::KroneckerOperator(std::vector<Matrix> factors) {
  for (std::size_t l = 0; l < factors.size(); ++l) {
    const auto& f = factors[l];
    if (f.rows() != f.cols())
      throw std::invalid_argument("KroneckerOperator: factor " + std::to_string(l) + " is not square");
    const double scale = std::max(1.0, f.cwiseAbs().maxCoeff());
    if ((f - f.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
      throw std::invalid_argument("KroneckerOperator: factor " + std::to_string(l) + " is not symmetric");
  }
  rect_ = RectKroneckerOperator(std::move(factors));
}

Vector kron_mvm(std::span<const Matrix> factors, const Vector& x) {
  return apply_factors<false>(factors, x);
}

Vector kron_mvm_transposed(std::span<const Matrix> factors, const Vector& x) {
  return apply_factors<true>(factors, x);
}

Vector kron_mvm(const KroneckerOperator& op, const Vector& x) { return kron_mvm(op.factors(), x); }

Vector kron_mvm(const RectKroneckerOperator& op, const Vector& x) {
  return kron_mvm(op.factors(), x);
}

Vector kron_mvm_transposed(const RectKroneckerOperator& op, const Vector& x) {
  return kron_mvm_transposed(op.factors(), x);
}

std::size_t KroneckerEigen::size() const {
  std::size_t n = 1;
  for (const auto& t : eigvals) n *= static_cast<std::size_t>(t.size());
  return n;
}

std::vector<std::size_t> KroneckerEigen::shape() const {
  std::vector<std::size_t> s;
  for (const auto& t : eigvals) s.push_back(static_cast<std::size_t>(t.size()));
  return s;
}

KroneckerEigen kron_eig(const KroneckerOperator& op) {
  KroneckerEigen eig;
  for (std::size_t l = 0; l < op.dims(); ++l) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(op.factors()[l]);
    if (solver.info() != Eigen::Success)
      throw std::runtime_error("kron_eig: eigensolver did not converge on factor " + std::to_string(l));
    eig.q_factors.push_back(solver.eigenvectors());
    eig.eigvals.push_back(solver.eigenvalues());
  }
  return eig;
}

Vector full_eigenvalues(const KroneckerEigen& eig) {
  Vector out = Vector::Ones(1);
  for (const auto& t : eig.eigvals) {
    Vector next(out.size() * t.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) next.segment(i * t.size(), t.size()) = out[i] * t;
    out.swap(next);
  }
  return out;
}

IndexList top_p(const Vector& values, std::size_t p) {
  const auto n = static_cast<std::size_t>(values.size());
  if (p > n) throw std::invalid_argument("top_p: p exceeds number of eigenvalues");
  IndexList idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(p), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double va = values[static_cast<Eigen::Index>(a)];
                      const double vb = values[static_cast<Eigen::Index>(b)];
                      return va > vb || (va == vb && a < b);
                    });
  idx.resize(p);
  return idx;
}

IndexList bottom_p(const Vector& values, std::size_t p) {
  const auto n = static_cast<std::size_t>(values.size());
  if (p > n) throw std::invalid_argument("bottom_p: p exceeds number of eigenvalues");
  IndexList idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(p), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double va = values[static_cast<Eigen::Index>(a)];
                      const double vb = values[static_cast<Eigen::Index>(b)];
                      return va < vb || (va == vb && a < b);
                    });
  idx.resize(p);
  return idx;
}

Vector clamped_eigenvalues(const KroneckerEigen& eig) {
  Vector lambda = full_eigenvalues(eig);
  const double floor = -1e-12 * lambda.cwiseAbs().maxCoeff();
  for (auto& v : lambda) {
    if (v < 0.0) {
      if (v < floor)
        throw std::domain_error("kernel eigenvalue " + std::to_string(v) +
                                " is negative beyond round-off; matrix is not PSD");
      v = 0.0;
    }
  }
  return lambda;
}

Vector eig_column(const KroneckerEigen& eig, std::size_t j) {
  const auto shape = eig.shape();
  if (j >= shape_product(shape)) throw std::out_of_range("eig_column: index out of range");
  const auto multi = unflatten_index(j, shape);
  Vector out = Vector::Ones(1);
  for (std::size_t l = 0; l < shape.size(); ++l) {
    const auto col = eig.q_factors[l].col(static_cast<Eigen::Index>(multi[l]));
    Vector next(out.size() * col.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) next.segment(i * col.size(), col.size()) = out[i] * col;
    out.swap(next);
  }
  return out;
}

Vector eig_solve(const KroneckerEigen& eig, const Vector& clamped_eigs, double sigma2,
                 const Vector& y) {
  if (clamped_eigs.size() != y.size())
    throw std::invalid_argument("eig_solve: vector length does not match grid size");
  Vector shifted = clamped_eigs.array() + sigma2;
  if ((shifted.array() <= 0.0).any())
    throw std::domain_error("eig_solve: K + sigma2 I is singular (non-positive shifted eigenvalue)");
  Vector t = kron_mvm_transposed(eig.q_factors, y);
  t.array() /= shifted.array();
  return kron_mvm(eig.q_factors, t);
}

Vector eig_solve(const KroneckerEigen& eig, double sigma2, const Vector& y) {
  if (sigma2 < 0.0) throw std::invalid_argument("eig_solve: sigma2 must be non-negative");
  return eig_solve(eig, clamped_eigenvalues(eig), sigma2, y);
}

} // namespace gridgp
