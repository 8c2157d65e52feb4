#include "gridgp/harness.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "gridgp/rng.hpp"

namespace gridgp {

double rastrigin(std::span<const double> x) {
  double y = 10.0 * static_cast<double>(x.size());
  for (double v : x) y += v * v - 10.0 * std::cos(2.0 * std::numbers::pi * v);
  return y;
}

GridSpec rastrigin_grid(std::size_t nx, std::size_t ny) {
  return GridSpec({GridSpec::linspace(kRastriginLo, kRastriginHi, nx),
                   GridSpec::linspace(kRastriginLo, kRastriginHi, ny)});
}

GappyDataset gen_rastrigin(const GridSpec& grid) {
  if (grid.dims() != 2)
    throw std::invalid_argument("gen_rastrigin: grid must be two-dimensional, got d = " +
                                std::to_string(grid.dims()));
  Vector y(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) y[static_cast<Eigen::Index>(i)] = rastrigin(grid.point(i));
  return make_full_dataset(grid, std::move(y));
}

namespace {

double grid_spacing(Eigen::Index n) { return 1.0 / static_cast<double>(n - 1); }

// Five-point Laplacian on the interior; boundary rows/cols stay zero.
Matrix laplacian(const Matrix& u) {
  const auto nx = u.rows(), ny = u.cols();
  const double hx2 = 1.0 / (grid_spacing(nx) * grid_spacing(nx));
  const double hy2 = 1.0 / (grid_spacing(ny) * grid_spacing(ny));
  Matrix out = Matrix::Zero(nx, ny);
  for (Eigen::Index i = 1; i + 1 < nx; ++i)
    for (Eigen::Index j = 1; j + 1 < ny; ++j)
      out(i, j) = (u(i + 1, j) - 2.0 * u(i, j) + u(i - 1, j)) * hx2 +
                  (u(i, j + 1) - 2.0 * u(i, j) + u(i, j - 1)) * hy2;
  return out;
}

void zero_boundary(Matrix& u) {
  u.row(0).setZero();
  u.row(u.rows() - 1).setZero();
  u.col(0).setZero();
  u.col(u.cols() - 1).setZero();
}

} // namespace

std::vector<Matrix> simulate_wave(const Matrix& initial, std::size_t nt, double wave_speed, double dt) {
  if (initial.rows() < 3 || initial.cols() < 3)
    throw std::invalid_argument("simulate_wave: need at least 3 points per spatial axis");
  if (nt == 0) throw std::invalid_argument("simulate_wave: need at least one frame");
  const double h = std::min(grid_spacing(initial.rows()), grid_spacing(initial.cols()));
  if (wave_speed * dt / h > 1.0 / std::sqrt(2.0) + 1e-15)
    throw std::invalid_argument("simulate_wave: CFL condition c dt / dx <= 1/sqrt(2) violated (" +
                                std::to_string(wave_speed * dt / h) + ")");
  const double c2dt2 = wave_speed * wave_speed * dt * dt;
  std::vector<Matrix> frames;
  frames.reserve(nt);
  Matrix u0 = initial;
  zero_boundary(u0);
  frames.push_back(u0);
  if (nt == 1) return frames;
  Matrix u1 = u0 + 0.5 * c2dt2 * laplacian(u0);
  zero_boundary(u1);
  frames.push_back(u1);
  for (std::size_t n = 2; n < nt; ++n) {
    const Matrix& cur = frames[n - 1];
    Matrix next = 2.0 * cur - frames[n - 2] + c2dt2 * laplacian(cur);
    zero_boundary(next);
    frames.push_back(std::move(next));
  }
  return frames;
}

double wave_energy(const Matrix& u_now, const Matrix& u_next, double wave_speed, double dt) {
  const double cell = grid_spacing(u_now.rows()) * grid_spacing(u_now.cols());
  const double kinetic = 0.5 * ((u_next - u_now) / dt).squaredNorm();
  const double potential = -0.5 * wave_speed * wave_speed * u_next.cwiseProduct(laplacian(u_now)).sum();
  return (kinetic + potential) * cell;
}

double wave_time_step(const WaveConfig& cfg) {
  if (cfg.nx < 3 || cfg.ny < 3) throw std::invalid_argument("wave: need at least 3 points per spatial axis");
  if (!(cfg.wave_speed > 0.0)) throw std::invalid_argument("wave: wave speed must be positive");
  if (!(cfg.courant > 0.0) || cfg.courant > 1.0 / std::sqrt(2.0))
    throw std::invalid_argument("wave: Courant number must be in (0, 1/sqrt(2)] for stability");
  const double h = std::min(grid_spacing(static_cast<Eigen::Index>(cfg.nx)),
                            grid_spacing(static_cast<Eigen::Index>(cfg.ny)));
  return cfg.courant * h / cfg.wave_speed;
}

Matrix random_membrane(const WaveConfig& cfg) {
  Rng rng(cfg.seed);
  const auto nx = static_cast<Eigen::Index>(cfg.nx), ny = static_cast<Eigen::Index>(cfg.ny);
  Matrix u(nx, ny);
  for (Eigen::Index i = 0; i < nx; ++i)
    for (Eigen::Index j = 0; j < ny; ++j) u(i, j) = rng.normal();
  zero_boundary(u);
  for (std::size_t pass = 0; pass < cfg.smoothing_passes; ++pass) {
    Matrix next = Matrix::Zero(nx, ny);
    for (Eigen::Index i = 1; i + 1 < nx; ++i)
      for (Eigen::Index j = 1; j + 1 < ny; ++j)
        next(i, j) = (u(i, j) + u(i + 1, j) + u(i - 1, j) + u(i, j + 1) + u(i, j - 1)) / 5.0;
    u.swap(next);
  }
  const double peak = u.cwiseAbs().maxCoeff();
  if (peak > 0.0) u /= peak;
  return u;
}

GappyDataset gen_wave_membrane(const WaveConfig& cfg) {
  if (cfg.nt == 0) throw std::invalid_argument("wave: nt must be positive");
  const double dt = wave_time_step(cfg);
  const auto frames = simulate_wave(random_membrane(cfg), cfg.nt, cfg.wave_speed, dt);
  std::vector<double> t(cfg.nt);
  for (std::size_t k = 0; k < cfg.nt; ++k) t[k] = dt * static_cast<double>(k);
  GridSpec grid({GridSpec::linspace(0.0, 1.0, cfg.nx), GridSpec::linspace(0.0, 1.0, cfg.ny), t});
  Vector y(static_cast<Eigen::Index>(grid.size()));
  Eigen::Index s = 0;
  for (std::size_t i = 0; i < cfg.nx; ++i)
    for (std::size_t j = 0; j < cfg.ny; ++j)
      for (std::size_t k = 0; k < cfg.nt; ++k)
        y[s++] = frames[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return make_full_dataset(std::move(grid), std::move(y));
}

GappyDataset gen_wave_membrane(std::size_t nx, std::size_t ny, std::size_t nt, double wave_speed,
                               std::uint64_t seed) {
  WaveConfig cfg;
  cfg.nx = nx;
  cfg.ny = ny;
  cfg.nt = nt;
  cfg.wave_speed = wave_speed;
  cfg.seed = seed;
  return gen_wave_membrane(cfg);
}

GappyDataset gen_normal(std::span<const std::size_t> shape, std::uint64_t seed) {
  std::vector<std::vector<double>> axes;
  for (auto m : shape) axes.push_back(GridSpec::linspace(0.0, 1.0, m));
  GridSpec grid(std::move(axes));
  Rng rng(seed);
  Vector y = rng.normal_vector(grid.size());
  return make_full_dataset(std::move(grid), std::move(y));
}

GappyDataset apply_gaps(const GappyDataset& data, double gappiness, std::uint64_t seed) {
  if (!(gappiness >= 0.0 && gappiness < 1.0))
    throw std::invalid_argument("apply_gaps: gappiness must lie in [0, 1)");
  Vector full;
  if (data.y_full_oracle) {
    full = *data.y_full_oracle;
  } else if (data.idx.num_gaps() == 0) {
    full = data.y_on_grid();
  } else {
    throw std::invalid_argument("apply_gaps: dataset already has gaps and no ground truth");
  }
  const auto m = data.grid.size();
  const auto l = static_cast<std::size_t>(std::llround(gappiness * static_cast<double>(m)));
  if (l >= m) throw std::invalid_argument("apply_gaps: gappiness leaves no observed points");
  Rng rng(seed);
  GappyDataset out;
  out.grid = data.grid;
  out.idx = IndexSets::from_gaps(rng.sample_without_replacement(m, l), m);
  out.y_obs = select(full, out.idx.observed());
  out.y_full_oracle = std::move(full);
  out.validate();
  return out;
}

DenseOracle::DenseOracle(const GappyDataset& data, const Hyperparams& hyper, std::size_t cap)
    : data_(data), hyper_(hyper) {
  data_.validate();
  hyper_.validate();
  const auto m = data_.grid.size();
  if (m > cap)
    throw std::length_error("dense oracle refused: grid size " + std::to_string(m) + " exceeds cap " +
                            std::to_string(cap));
  std::vector<std::vector<double>> pts(m);
  for (std::size_t i = 0; i < m; ++i) pts[i] = data_.grid.point(i);
  const auto mi = static_cast<Eigen::Index>(m);
  k_.resize(mi, mi);
  for (Eigen::Index i = 0; i < mi; ++i)
    for (Eigen::Index j = 0; j <= i; ++j)
      k_(i, j) = k_(j, i) = hyper_.kernel(pts[static_cast<std::size_t>(i)], pts[static_cast<std::size_t>(j)]);
  Matrix a = k_xx();
  a.diagonal().array() += hyper_.noise_variance;
  llt_.compute(a);
  if (llt_.info() != Eigen::Success) throw std::runtime_error("dense oracle: K_XX + sigma2 I is not positive definite");
  alpha_x_ = llt_.solve(data_.y_obs);
}

Matrix DenseOracle::k_xx() const {
  const auto& x = data_.idx.observed();
  const auto n = static_cast<Eigen::Index>(x.size());
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      out(i, j) = k_(static_cast<Eigen::Index>(x[static_cast<std::size_t>(i)]),
                     static_cast<Eigen::Index>(x[static_cast<std::size_t>(j)]));
  return out;
}

Matrix DenseOracle::k_zx() const {
  const auto& x = data_.idx.observed();
  const auto& z = data_.idx.gaps();
  Matrix out(static_cast<Eigen::Index>(z.size()), static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < z.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          k_(static_cast<Eigen::Index>(z[i]), static_cast<Eigen::Index>(x[j]));
  return out;
}

Vector DenseOracle::y_z_expected() const { return k_zx() * alpha_x_; }

double DenseOracle::log_det() const {
  return 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double DenseOracle::log_marginal_likelihood() const {
  const auto n = static_cast<double>(data_.idx.num_observed());
  return -0.5 * log_det() - 0.5 * data_.y_obs.dot(alpha_x_) - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

Vector DenseOracle::cross_covariance(std::span<const double> x_star) const {
  const auto m = data_.grid.size();
  Vector g(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) g[static_cast<Eigen::Index>(i)] = hyper_.kernel(data_.grid.point(i), x_star);
  return g;
}

double DenseOracle::mean(std::span<const double> x_star) const {
  return select(cross_covariance(x_star), data_.idx.observed()).dot(alpha_x_);
}

double DenseOracle::variance(std::span<const double> x_star) const {
  const Vector gx = select(cross_covariance(x_star), data_.idx.observed());
  return hyper_.kernel.prior_variance(x_star) - gx.dot(llt_.solve(gx));
}

Vector DenseOracle::solve_xx(const Vector& v) const { return llt_.solve(v); }

DenseOracleResult dense_oracle_solve(const GappyDataset& data, const Hyperparams& hyper, std::size_t cap) {
  DenseOracle oracle(data, hyper, cap);
  return {oracle.alpha_x(), oracle.y_z_expected(), oracle.log_det()};
}

double relative_error(const Vector& a, const Vector& b) {
  const double denom = b.norm();
  const double diff = (a - b).norm();
  return denom > 0.0 ? diff / denom : diff;
}

} // namespace gridgp
