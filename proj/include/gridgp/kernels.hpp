#pragma once

// One-dimensional kernels, their product over grid axes, and the Kronecker
// covariance / cross-covariance operators they induce.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "gridgp/grid_data.hpp"
#include "gridgp/kron_linalg.hpp"

namespace gridgp {

/// k(x, z) = exp(-(x - z)^2 / lengthscale^2)
struct SquaredExponential {
  double lengthscale = 1.0;
};

/// Squared exponential on the warped input u(x) = (sin 2 pi x / P, cos 2 pi x / P),
/// i.e. k(x, z) = exp(-4 sin^2(pi (x - z) / P) / lengthscale^2).
struct Periodic {
  double lengthscale = 1.0;
  double period = 1.0;
};

/// Free-form PSD covariance B = L L^T over integer labels {0, ..., n-1}.
/// `chol` is lower triangular with a positive diagonal.
struct DiscretePSD {
  Matrix chol;
  Matrix covariance() const { return chol * chol.transpose(); }
};

class Kernel1D {
public:
  using Variant = std::variant<SquaredExponential, Periodic, DiscretePSD>;

  Kernel1D(SquaredExponential k) : k_(k) {}
  Kernel1D(Periodic k) : k_(k) {}
  Kernel1D(DiscretePSD k) : k_(std::move(k)) {}

  static Kernel1D se(double lengthscale) { return SquaredExponential{lengthscale}; }
  static Kernel1D periodic(double lengthscale, double period) { return Periodic{lengthscale, period}; }
  static Kernel1D discrete(Matrix chol) { return DiscretePSD{std::move(chol)}; }

  const Variant& variant() const { return k_; }
  Variant& variant() { return k_; }

  bool has_lengthscale() const { return !std::holds_alternative<DiscretePSD>(k_); }
  double lengthscale() const;
  void set_lengthscale(double v);

  /// Throws std::invalid_argument on non-positive lengthscale / period or a bad
  /// Cholesky factor.
  void validate() const;

  double operator()(double x, double z) const;

private:
  Variant k_;
};

/// Dense |a| x |b| matrix of k(a_i, b_j).
Matrix eval_factor(const Kernel1D& kern, std::span<const double> a, std::span<const double> b);

/// k(x, z) = amplitude * prod_l k_l(x_l, z_l). The amplitude is folded into the
/// first factor so the Kronecker form is preserved.
class ProductKernel {
public:
  ProductKernel() = default;
  explicit ProductKernel(std::vector<Kernel1D> axes, double amplitude = 1.0,
                         std::vector<std::string> axis_names = {});

  /// Same SE lengthscale on every one of d axes.
  static ProductKernel se(std::size_t d, double lengthscale, double amplitude = 1.0);

  std::size_t dims() const { return axes_.size(); }
  const std::vector<Kernel1D>& axes() const { return axes_; }
  std::vector<Kernel1D>& axes() { return axes_; }
  const std::vector<std::string>& axis_names() const { return names_; }
  double amplitude() const { return amplitude_; }
  void set_amplitude(double a);

  void validate() const;
  double operator()(std::span<const double> x, std::span<const double> z) const;
  /// Prior variance k(x, x).
  double prior_variance(std::span<const double> x) const { return (*this)(x, x); }

private:
  std::vector<Kernel1D> axes_;
  std::vector<std::string> names_;
  double amplitude_ = 1.0;
};

KroneckerOperator grid_covariance(const ProductKernel& kern, const GridSpec& grid);

/// g with g[i] = k(x_i, x_star) over the training grid, materialized.
Vector cross_covariance_point(const ProductKernel& kern, const GridSpec& grid,
                              std::span<const double> x_star);
/// The same vector in factored form (factors are m_l x 1).
RectKroneckerOperator cross_covariance_point_factored(const ProductKernel& kern, const GridSpec& grid,
                                                      std::span<const double> x_star);

/// G = (x) G_l with G_l = eval_factor(grid axis l, test axis l); M x Q.
RectKroneckerOperator cross_covariance_grid(const ProductKernel& kern, const GridSpec& grid,
                                            const GridSpec& test_grid);

/// Kernel plus observation noise.
///
/// Packed (log-space) layout used by the optimizer and serialization:
///   [log lengthscale for each axis that has one, in axis order,
///    log amplitude, log noise_variance,
///    for each DiscretePSD axis in axis order: its lower triangle row by row,
///    diagonal entries as logs]
struct Hyperparams {
  ProductKernel kernel;
  double noise_variance = 1e-2;

  std::vector<double> pack() const;
  /// Returns a copy of *this with values taken from `packed`.
  Hyperparams unpack(std::span<const double> packed) const;
  std::size_t packed_size() const;
  /// Packed index of log noise_variance.
  std::size_t noise_slot() const;
  /// Packed index of log amplitude.
  std::size_t amplitude_slot() const;
  /// Human-readable names for each packed slot.
  std::vector<std::string> packed_names() const;

  void validate() const;
};

/// {"amplitude", "noise_variance", "axis_order": [...], "axes": {name: {...}}}
nlohmann::json hyperparams_to_json(const Hyperparams& h);
Hyperparams hyperparams_from_json(const nlohmann::json& j);

} // namespace gridgp
