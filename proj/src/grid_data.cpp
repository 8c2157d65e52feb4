#include "gridgp/grid_data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gridgp {

std::size_t shape_product(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (auto m : shape) n *= m;
  return n;
}

std::size_t flatten_index(std::span<const std::size_t> multi,
                          std::span<const std::size_t> shape) {
  if (multi.size() != shape.size())
    throw std::invalid_argument("flatten_index: expected " + std::to_string(shape.size()) +
                                " components, got " + std::to_string(multi.size()));
  std::size_t linear = 0;
  for (std::size_t l = 0; l < shape.size(); ++l) {
    if (multi[l] >= shape[l])
      throw std::out_of_range("flatten_index: component " + std::to_string(l) + " = " +
                              std::to_string(multi[l]) + " out of range [0, " +
                              std::to_string(shape[l]) + ")");
    linear = linear * shape[l] + multi[l];
  }
  return linear;
}

IndexList unflatten_index(std::size_t linear, std::span<const std::size_t> shape) {
  if (linear >= shape_product(shape))
    throw std::out_of_range("unflatten_index: linear index " + std::to_string(linear) +
                            " out of range");
  IndexList multi(shape.size());
  for (std::size_t l = shape.size(); l-- > 0;) {
    multi[l] = linear % shape[l];
    linear /= shape[l];
  }
  return multi;
}

GridSpec::GridSpec(std::vector<std::vector<double>> axes) : axes_(std::move(axes)) {
  if (axes_.empty()) throw std::invalid_argument("GridSpec: at least one axis required");
  size_ = 1;
  for (std::size_t l = 0; l < axes_.size(); ++l) {
    const auto& a = axes_[l];
    if (a.empty()) throw std::invalid_argument("GridSpec: axis " + std::to_string(l) + " is empty");
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!std::isfinite(a[i]))
        throw std::invalid_argument("GridSpec: non-finite coordinate on axis " + std::to_string(l));
      if (i > 0 && !(a[i] > a[i - 1]))
        throw std::invalid_argument("GridSpec: axis " + std::to_string(l) +
                                    " is not strictly increasing");
    }
    shape_.push_back(a.size());
    size_ *= a.size();
  }
}

std::vector<double> GridSpec::linspace(double lo, double hi, std::size_t n) {
  if (n == 0) throw std::invalid_argument("linspace: n must be positive");
  std::vector<double> out(n, lo);
  if (n == 1) return out;
  const double h = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + h * static_cast<double>(i);
  out.back() = hi;
  return out;
}

std::vector<double> GridSpec::point(std::size_t linear) const {
  const auto multi = unflatten_index(linear, shape_);
  std::vector<double> x(dims());
  for (std::size_t l = 0; l < dims(); ++l) x[l] = axes_[l][multi[l]];
  return x;
}

std::size_t flatten_index(std::span<const std::size_t> multi, const GridSpec& grid) {
  return flatten_index(multi, grid.shape());
}

IndexList unflatten_index(std::size_t linear, const GridSpec& grid) {
  return unflatten_index(linear, grid.shape());
}

IndexSets IndexSets::all_observed(std::size_t grid_size) {
  IndexSets s;
  s.m_ = grid_size;
  s.x_.resize(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) s.x_[i] = i;
  return s;
}

IndexSets IndexSets::from_mask(std::span<const std::uint8_t> observed_mask) {
  IndexSets s;
  s.m_ = observed_mask.size();
  for (std::size_t i = 0; i < observed_mask.size(); ++i) {
    if (observed_mask[i] > 1)
      throw std::invalid_argument("IndexSets: mask bytes must be 0 or 1");
    (observed_mask[i] ? s.x_ : s.z_).push_back(i);
  }
  return s;
}

IndexSets IndexSets::from_gaps(IndexList gaps, std::size_t grid_size) {
  std::sort(gaps.begin(), gaps.end());
  if (std::adjacent_find(gaps.begin(), gaps.end()) != gaps.end())
    throw std::invalid_argument("IndexSets: duplicate gap index");
  if (!gaps.empty() && gaps.back() >= grid_size)
    throw std::out_of_range("IndexSets: gap index out of range");
  IndexSets s;
  s.m_ = grid_size;
  s.z_ = std::move(gaps);
  s.x_.reserve(grid_size - s.z_.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < grid_size; ++i) {
    if (k < s.z_.size() && s.z_[k] == i) {
      ++k;
      continue;
    }
    s.x_.push_back(i);
  }
  return s;
}

std::vector<std::uint8_t> IndexSets::mask() const {
  std::vector<std::uint8_t> out(m_, 0);
  for (auto i : x_) out[i] = 1;
  return out;
}

Vector select(const Vector& v, std::span<const std::size_t> idx) {
  const auto n = static_cast<std::size_t>(v.size());
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= n)
      throw std::out_of_range("select: index " + std::to_string(idx[i]) + " out of range " +
                              std::to_string(n));
    out[static_cast<Eigen::Index>(i)] = v[static_cast<Eigen::Index>(idx[i])];
  }
  return out;
}

Vector scatter(const Vector& s, std::span<const std::size_t> idx, std::size_t m) {
  if (static_cast<std::size_t>(s.size()) != idx.size())
    throw std::invalid_argument("scatter: value/index length mismatch");
  Vector out = Vector::Zero(static_cast<Eigen::Index>(m));
  std::vector<bool> seen(m, false);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= m) throw std::out_of_range("scatter: index out of range");
    if (seen[idx[i]])
      throw std::invalid_argument("scatter: duplicate index " + std::to_string(idx[i]));
    seen[idx[i]] = true;
    out[static_cast<Eigen::Index>(idx[i])] = s[static_cast<Eigen::Index>(i)];
  }
  return out;
}

void GappyDataset::validate() const {
  if (idx.grid_size() != grid.size())
    throw std::invalid_argument("GappyDataset: index sets cover " +
                                std::to_string(idx.grid_size()) + " cells, grid has " +
                                std::to_string(grid.size()));
  if (static_cast<std::size_t>(y_obs.size()) != idx.num_observed())
    throw std::invalid_argument("GappyDataset: y_obs length does not match observed count");
  if (!y_obs.allFinite()) throw std::invalid_argument("GappyDataset: y_obs must be finite");
  if (y_full_oracle && static_cast<std::size_t>(y_full_oracle->size()) != grid.size())
    throw std::invalid_argument("GappyDataset: oracle responses must cover the full grid");
}

Vector GappyDataset::y_on_grid(double fill) const {
  Vector y = Vector::Constant(static_cast<Eigen::Index>(grid.size()), fill);
  const auto& x = idx.observed();
  for (std::size_t i = 0; i < x.size(); ++i)
    y[static_cast<Eigen::Index>(x[i])] = y_obs[static_cast<Eigen::Index>(i)];
  return y;
}

GappyDataset make_full_dataset(GridSpec grid, Vector y) {
  if (static_cast<std::size_t>(y.size()) != grid.size())
    throw std::invalid_argument("make_full_dataset: response length must equal grid size");
  GappyDataset data;
  data.idx = IndexSets::all_observed(grid.size());
  data.y_obs = y;
  data.y_full_oracle = std::move(y);
  data.grid = std::move(grid);
  data.validate();
  return data;
}

} // namespace gridgp
