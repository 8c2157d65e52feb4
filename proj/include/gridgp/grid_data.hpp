#pragma once

// Gappy grid datasets: grid geometry, observed/gap index sets and the
// gather/scatter actions of the selection matrices W (observed) and V (gaps).
//
// Linear indices are row-major with axis 0 slowest and the last axis fastest,
// which is the ordering under which K_0 (x) K_1 (x) ... (x) K_{d-1} acts.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace gridgp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexList = std::vector<std::size_t>;

std::size_t flatten_index(std::span<const std::size_t> multi,
                          std::span<const std::size_t> shape);
IndexList unflatten_index(std::size_t linear, std::span<const std::size_t> shape);
std::size_t shape_product(std::span<const std::size_t> shape);

class GridSpec {
public:
  GridSpec() = default;
  /// Throws std::invalid_argument unless every axis is non-empty, finite and
  /// strictly increasing.
  explicit GridSpec(std::vector<std::vector<double>> axes);

  /// Evenly spaced axis of n points on [lo, hi]; n == 1 gives {lo}.
  static std::vector<double> linspace(double lo, double hi, std::size_t n);

  std::size_t dims() const { return axes_.size(); }
  std::size_t size() const { return size_; }
  std::size_t extent(std::size_t axis) const { return axes_.at(axis).size(); }
  const std::vector<double>& axis(std::size_t l) const { return axes_.at(l); }
  const std::vector<std::vector<double>>& axes() const { return axes_; }
  const std::vector<std::size_t>& shape() const { return shape_; }

  /// Coordinates of the grid point with the given linear index.
  std::vector<double> point(std::size_t linear) const;

  bool operator==(const GridSpec&) const = default;

private:
  std::vector<std::vector<double>> axes_;
  std::vector<std::size_t> shape_;
  std::size_t size_ = 0;
};

std::size_t flatten_index(std::span<const std::size_t> multi, const GridSpec& grid);
IndexList unflatten_index(std::size_t linear, const GridSpec& grid);

/// Partition of {0, ..., M-1} into observed indices X and gap indices Z, both
/// sorted ascending.
class IndexSets {
public:
  IndexSets() = default;
  static IndexSets all_observed(std::size_t grid_size);
  static IndexSets from_mask(std::span<const std::uint8_t> observed_mask);
  static IndexSets from_gaps(IndexList gaps, std::size_t grid_size);

  const IndexList& observed() const { return x_; }
  const IndexList& gaps() const { return z_; }
  std::size_t grid_size() const { return m_; }
  std::size_t num_observed() const { return x_.size(); }
  std::size_t num_gaps() const { return z_.size(); }
  double gappiness() const {
    return m_ == 0 ? 0.0 : static_cast<double>(z_.size()) / static_cast<double>(m_);
  }

  /// One byte per grid cell, 1 = observed, 0 = gap.
  std::vector<std::uint8_t> mask() const;

  bool operator==(const IndexSets&) const = default;

private:
  IndexList x_;
  IndexList z_;
  std::size_t m_ = 0;
};

/// out[i] = v[idx[i]]
Vector select(const Vector& v, std::span<const std::size_t> idx);
/// out[idx[i]] = s[i], zero elsewhere. Duplicate indices are rejected.
Vector scatter(const Vector& s, std::span<const std::size_t> idx, std::size_t m);

struct GappyDataset {
  GridSpec grid;
  IndexSets idx;
  Vector y_obs;                        // responses at idx.observed(), grid order
  std::optional<Vector> y_full_oracle; // ground truth on the full grid, harness only

  /// Throws std::invalid_argument on inconsistent sizes or non-finite y_obs.
  void validate() const;

  /// Observed responses on the full grid with `fill` at the gaps.
  Vector y_on_grid(double fill = 0.0) const;
};

/// Builds a fully observed dataset from responses in grid order.
GappyDataset make_full_dataset(GridSpec grid, Vector y);

} // namespace gridgp
