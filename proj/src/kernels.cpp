#include "gridgp/kernels.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace gridgp {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t discrete_label(double x, Eigen::Index n) {
  const double r = std::round(x);
  if (r != x || r < 0.0 || r >= static_cast<double>(n))
    throw std::invalid_argument("DiscretePSD: coordinate " + std::to_string(x) +
                                " is not an integer label in [0, " + std::to_string(n) + ")");
  return static_cast<std::size_t>(r);
}

void validate_chol(const Matrix& chol) {
  if (chol.rows() == 0 || chol.rows() != chol.cols())
    throw std::invalid_argument("DiscretePSD: factor must be square and non-empty");
  if (!chol.allFinite()) throw std::invalid_argument("DiscretePSD: non-finite factor entry");
  for (Eigen::Index i = 0; i < chol.rows(); ++i) {
    if (!(chol(i, i) > 0.0)) throw std::invalid_argument("DiscretePSD: factor diagonal must be positive");
    for (Eigen::Index j = i + 1; j < chol.cols(); ++j)
      if (chol(i, j) != 0.0) throw std::invalid_argument("DiscretePSD: factor must be lower triangular");
  }
}

} // namespace

double Kernel1D::lengthscale() const {
  return std::visit(Overloaded{[](const SquaredExponential& k) { return k.lengthscale; },
                               [](const Periodic& k) { return k.lengthscale; },
                               [](const DiscretePSD&) -> double {
                                 throw std::logic_error("DiscretePSD kernel has no lengthscale");
                               }},
                    k_);
}

void Kernel1D::set_lengthscale(double v) {
  std::visit(Overloaded{[v](SquaredExponential& k) { k.lengthscale = v; },
                        [v](Periodic& k) { k.lengthscale = v; },
                        [](DiscretePSD&) { throw std::logic_error("DiscretePSD kernel has no lengthscale"); }},
             k_);
}

void Kernel1D::validate() const {
  std::visit(Overloaded{[](const SquaredExponential& k) {
                          if (!(k.lengthscale > 0.0) || !std::isfinite(k.lengthscale))
                            throw std::invalid_argument("SE lengthscale must be positive");
                        },
                        [](const Periodic& k) {
                          if (!(k.lengthscale > 0.0) || !std::isfinite(k.lengthscale))
                            throw std::invalid_argument("periodic lengthscale must be positive");
                          if (!(k.period > 0.0) || !std::isfinite(k.period))
                            throw std::invalid_argument("period must be positive");
                        },
                        [](const DiscretePSD& k) { validate_chol(k.chol); }},
             k_);
}

double Kernel1D::operator()(double x, double z) const {
  return std::visit(
      Overloaded{[&](const SquaredExponential& k) {
                   const double r = (x - z) / k.lengthscale;
                   return std::exp(-r * r);
                 },
                 [&](const Periodic& k) {
                   const double s = std::sin(std::numbers::pi * (x - z) / k.period);
                   return std::exp(-4.0 * s * s / (k.lengthscale * k.lengthscale));
                 },
                 [&](const DiscretePSD& k) {
                   const auto n = k.chol.rows();
                   const auto i = static_cast<Eigen::Index>(discrete_label(x, n));
                   const auto j = static_cast<Eigen::Index>(discrete_label(z, n));
                   return k.chol.row(i).dot(k.chol.row(j));
                 }},
      k_);
}

Matrix eval_factor(const Kernel1D& kern, std::span<const double> a, std::span<const double> b) {
  kern.validate();
  for (double v : a)
    if (!std::isfinite(v)) throw std::invalid_argument("eval_factor: non-finite coordinate");
  for (double v : b)
    if (!std::isfinite(v)) throw std::invalid_argument("eval_factor: non-finite coordinate");
  Matrix out(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kern(a[i], b[j]);
  return out;
}

ProductKernel::ProductKernel(std::vector<Kernel1D> axes, double amplitude,
                             std::vector<std::string> axis_names)
    : axes_(std::move(axes)), names_(std::move(axis_names)), amplitude_(amplitude) {
  if (names_.empty())
    for (std::size_t l = 0; l < axes_.size(); ++l) names_.push_back("x" + std::to_string(l));
  validate();
}

ProductKernel ProductKernel::se(std::size_t d, double lengthscale, double amplitude) {
  return ProductKernel(std::vector<Kernel1D>(d, Kernel1D::se(lengthscale)), amplitude);
}

void ProductKernel::set_amplitude(double a) {
  if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("amplitude must be positive");
  amplitude_ = a;
}

void ProductKernel::validate() const {
  if (axes_.empty()) throw std::invalid_argument("ProductKernel: at least one axis required");
  if (names_.size() != axes_.size())
    throw std::invalid_argument("ProductKernel: one name per axis required");
  if (!(amplitude_ > 0.0) || !std::isfinite(amplitude_))
    throw std::invalid_argument("ProductKernel: amplitude must be positive");
  for (const auto& k : axes_) k.validate();
}

double ProductKernel::operator()(std::span<const double> x, std::span<const double> z) const {
  if (x.size() != dims() || z.size() != dims())
    throw std::invalid_argument("ProductKernel: point dimension mismatch");
  double v = amplitude_;
  for (std::size_t l = 0; l < dims(); ++l) v *= axes_[l](x[l], z[l]);
  return v;
}

KroneckerOperator grid_covariance(const ProductKernel& kern, const GridSpec& grid) {
  if (kern.dims() != grid.dims())
    throw std::invalid_argument("grid_covariance: kernel has " + std::to_string(kern.dims()) +
                                " axes, grid has " + std::to_string(grid.dims()));
  std::vector<Matrix> factors;
  for (std::size_t l = 0; l < grid.dims(); ++l) {
    Matrix f = eval_factor(kern.axes()[l], grid.axis(l), grid.axis(l));
    // Exact symmetry regardless of evaluation round-off.
    f = 0.5 * (f + f.transpose()).eval();
    if (l == 0) f *= kern.amplitude();
    factors.push_back(std::move(f));
  }
  return KroneckerOperator(std::move(factors));
}

RectKroneckerOperator cross_covariance_point_factored(const ProductKernel& kern, const GridSpec& grid,
                                                      std::span<const double> x_star) {
  if (kern.dims() != grid.dims() || x_star.size() != grid.dims())
    throw std::invalid_argument("cross_covariance_point: dimension mismatch");
  std::vector<Matrix> factors;
  for (std::size_t l = 0; l < grid.dims(); ++l) {
    Matrix f = eval_factor(kern.axes()[l], grid.axis(l), x_star.subspan(l, 1));
    if (l == 0) f *= kern.amplitude();
    factors.push_back(std::move(f));
  }
  return RectKroneckerOperator(std::move(factors));
}

Vector cross_covariance_point(const ProductKernel& kern, const GridSpec& grid,
                              std::span<const double> x_star) {
  const auto g = cross_covariance_point_factored(kern, grid, x_star);
  Vector out = Vector::Ones(1);
  for (const auto& f : g.factors()) {
    Vector next(out.size() * f.rows());
    for (Eigen::Index i = 0; i < out.size(); ++i) next.segment(i * f.rows(), f.rows()) = out[i] * f.col(0);
    out.swap(next);
  }
  return out;
}

RectKroneckerOperator cross_covariance_grid(const ProductKernel& kern, const GridSpec& grid,
                                            const GridSpec& test_grid) {
  if (kern.dims() != grid.dims() || test_grid.dims() != grid.dims())
    throw std::invalid_argument("cross_covariance_grid: axis count mismatch");
  std::vector<Matrix> factors;
  for (std::size_t l = 0; l < grid.dims(); ++l) {
    Matrix f = eval_factor(kern.axes()[l], grid.axis(l), test_grid.axis(l));
    if (l == 0) f *= kern.amplitude();
    factors.push_back(std::move(f));
  }
  return RectKroneckerOperator(std::move(factors));
}

std::vector<double> Hyperparams::pack() const {
  std::vector<double> out;
  for (const auto& k : kernel.axes())
    if (k.has_lengthscale()) out.push_back(std::log(k.lengthscale()));
  out.push_back(std::log(kernel.amplitude()));
  out.push_back(std::log(noise_variance));
  for (const auto& k : kernel.axes()) {
    if (const auto* d = std::get_if<DiscretePSD>(&k.variant())) {
      for (Eigen::Index i = 0; i < d->chol.rows(); ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
          out.push_back(i == j ? std::log(d->chol(i, j)) : d->chol(i, j));
    }
  }
  return out;
}

std::size_t Hyperparams::packed_size() const { return pack().size(); }

std::size_t Hyperparams::amplitude_slot() const {
  std::size_t n = 0;
  for (const auto& k : kernel.axes()) n += k.has_lengthscale() ? 1 : 0;
  return n;
}

std::size_t Hyperparams::noise_slot() const { return amplitude_slot() + 1; }

std::vector<std::string> Hyperparams::packed_names() const {
  std::vector<std::string> out;
  const auto& names = kernel.axis_names();
  for (std::size_t l = 0; l < kernel.dims(); ++l)
    if (kernel.axes()[l].has_lengthscale()) out.push_back("log_lengthscale." + names[l]);
  out.emplace_back("log_amplitude");
  out.emplace_back("log_noise_variance");
  for (std::size_t l = 0; l < kernel.dims(); ++l) {
    if (const auto* d = std::get_if<DiscretePSD>(&kernel.axes()[l].variant())) {
      for (Eigen::Index i = 0; i < d->chol.rows(); ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
          out.push_back((i == j ? "log_chol." : "chol.") + names[l] + "[" + std::to_string(i) + "," +
                        std::to_string(j) + "]");
    }
  }
  return out;
}

Hyperparams Hyperparams::unpack(std::span<const double> packed) const {
  if (packed.size() != packed_size())
    throw std::invalid_argument("Hyperparams::unpack: expected " + std::to_string(packed_size()) +
                                " values, got " + std::to_string(packed.size()));
  Hyperparams out = *this;
  std::size_t s = 0;
  for (auto& k : out.kernel.axes())
    if (k.has_lengthscale()) k.set_lengthscale(std::exp(packed[s++]));
  out.kernel.set_amplitude(std::exp(packed[s++]));
  out.noise_variance = std::exp(packed[s++]);
  for (auto& k : out.kernel.axes()) {
    if (auto* d = std::get_if<DiscretePSD>(&k.variant())) {
      for (Eigen::Index i = 0; i < d->chol.rows(); ++i)
        for (Eigen::Index j = 0; j <= i; ++j) {
          const double v = packed[s++];
          d->chol(i, j) = i == j ? std::exp(v) : v;
        }
    }
  }
  out.validate();
  return out;
}

void Hyperparams::validate() const {
  kernel.validate();
  if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance))
    throw std::invalid_argument("noise variance must be non-negative");
}

nlohmann::json hyperparams_to_json(const Hyperparams& h) {
  nlohmann::json axes = nlohmann::json::object();
  const auto& names = h.kernel.axis_names();
  for (std::size_t l = 0; l < h.kernel.dims(); ++l) {
    std::visit(Overloaded{[&](const SquaredExponential& k) {
                            axes[names[l]] = {{"type", "se"}, {"lengthscale", k.lengthscale}};
                          },
                          [&](const Periodic& k) {
                            axes[names[l]] = {{"type", "periodic"},
                                              {"lengthscale", k.lengthscale},
                                              {"period", k.period}};
                          },
                          [&](const DiscretePSD& k) {
                            std::vector<std::vector<double>> rows;
                            for (Eigen::Index i = 0; i < k.chol.rows(); ++i) {
                              rows.emplace_back();
                              for (Eigen::Index j = 0; j <= i; ++j) rows.back().push_back(k.chol(i, j));
                            }
                            axes[names[l]] = {{"type", "discrete"}, {"chol_lower", rows}};
                          }},
               h.kernel.axes()[l].variant());
  }
  return {{"amplitude", h.kernel.amplitude()},
          {"noise_variance", h.noise_variance},
          {"axis_order", names},
          {"axes", axes}};
}

Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  const auto names = j.at("axis_order").get<std::vector<std::string>>();
  std::vector<Kernel1D> axes;
  for (const auto& name : names) {
    const auto& a = j.at("axes").at(name);
    const auto type = a.at("type").get<std::string>();
    if (type == "se") {
      axes.push_back(Kernel1D::se(a.at("lengthscale").get<double>()));
    } else if (type == "periodic") {
      axes.push_back(Kernel1D::periodic(a.at("lengthscale").get<double>(), a.at("period").get<double>()));
    } else if (type == "discrete") {
      const auto rows = a.at("chol_lower").get<std::vector<std::vector<double>>>();
      const auto n = static_cast<Eigen::Index>(rows.size());
      Matrix chol = Matrix::Zero(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (rows[static_cast<std::size_t>(i)].size() != static_cast<std::size_t>(i + 1))
          throw std::invalid_argument("chol_lower row " + std::to_string(i) + " has wrong length");
        for (Eigen::Index c = 0; c <= i; ++c)
          chol(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
      }
      axes.push_back(Kernel1D::discrete(std::move(chol)));
    } else {
      throw std::invalid_argument("unknown kernel type '" + type + "' for axis " + name);
    }
  }
  Hyperparams h{ProductKernel(std::move(axes), j.value("amplitude", 1.0), names),
                j.at("noise_variance").get<double>()};
  h.validate();
  return h;
}

} // namespace gridgp
