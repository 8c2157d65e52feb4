#pragma once

// Synthetic workloads, random gap masks, dense brute-force oracles and the
// gappiness / preconditioner experiment runners.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gridgp/grid_data.hpp"
#include "gridgp/kernels.hpp"
#include "gridgp/solvers.hpp"

namespace gridgp {

// --- workloads --------------------------------------------------------------

inline constexpr double kRastriginLo = -2.0;
inline constexpr double kRastriginHi = 2.0;

/// 20 + sum_i (x_i^2 - 10 cos 2 pi x_i)
double rastrigin(std::span<const double> x);
/// nx x ny grid on [-2, 2]^2.
GridSpec rastrigin_grid(std::size_t nx, std::size_t ny);
/// Fully observed Rastrigin responses on a 2-d grid.
GappyDataset gen_rastrigin(const GridSpec& grid);

struct WaveConfig {
  std::size_t nx = 16;
  std::size_t ny = 16;
  std::size_t nt = 16;
  double wave_speed = 1.0;
  double courant = 0.5;            // c dt / min(dx, dy); must be <= 1/sqrt(2)
  std::uint64_t seed = 0;
  std::size_t smoothing_passes = 4;
};

/// Leapfrog frames of u_tt = c^2 (u_xx + u_yy) on [0,1]^2 with zero Dirichlet
/// boundary and zero initial velocity, starting from `initial` (nx x ny,
/// boundary entries are forced to 0).
std::vector<Matrix> simulate_wave(const Matrix& initial, std::size_t nt, double wave_speed, double dt);
/// Conserved discrete energy between frames n and n+1.
double wave_energy(const Matrix& u_now, const Matrix& u_next, double wave_speed, double dt);
double wave_time_step(const WaveConfig& cfg);
/// Seeded smooth random initial displacement (Gaussian field + Jacobi passes).
Matrix random_membrane(const WaveConfig& cfg);
/// Grid axes (x, y, t) and the simulated video as a fully observed dataset.
GappyDataset gen_wave_membrane(const WaveConfig& cfg);
GappyDataset gen_wave_membrane(std::size_t nx, std::size_t ny, std::size_t nt, double wave_speed,
                               std::uint64_t seed);

/// y ~ N(0, I) on the evenly spaced grid [0,1]^d of the given shape.
GappyDataset gen_normal(std::span<const std::size_t> shape, std::uint64_t seed);

/// Hides round(gappiness * M) cells chosen uniformly without replacement from
/// the full grid. The input must be fully observed (or carry oracle truth).
GappyDataset apply_gaps(const GappyDataset& data, double gappiness, std::uint64_t seed);

// --- dense oracle -----------------------------------------------------------

inline constexpr std::size_t kDefaultOracleCap = 4096;

/// Direct O(M^2) / O(N^3) evaluation of the GP equations with pairwise kernel
/// evaluation and dense Cholesky factorizations.
class DenseOracle {
public:
  DenseOracle(const GappyDataset& data, const Hyperparams& hyper, std::size_t cap = kDefaultOracleCap);

  const Matrix& k_full() const { return k_; }
  Matrix k_xx() const;
  Matrix k_zx() const;

  const Vector& alpha_x() const { return alpha_x_; }
  /// K_ZX (K_XX + sigma2 I)^{-1} y_X
  Vector y_z_expected() const;
  /// log|K_XX + sigma2 I|
  double log_det() const;
  double log_marginal_likelihood() const;

  Vector cross_covariance(std::span<const double> x_star) const;
  double mean(std::span<const double> x_star) const;
  double variance(std::span<const double> x_star) const;

  /// (K_XX + sigma2 I)^{-1} v
  Vector solve_xx(const Vector& v) const;

private:
  GappyDataset data_;
  Hyperparams hyper_;
  Matrix k_;
  Eigen::LLT<Matrix> llt_;
  Vector alpha_x_;
};

struct DenseOracleResult {
  Vector alpha_x;
  Vector y_z_expected;
  double log_det = 0.0;
};

DenseOracleResult dense_oracle_solve(const GappyDataset& data, const Hyperparams& hyper,
                                     std::size_t cap = kDefaultOracleCap);

/// ||a - b||_2 / ||b||_2 (absolute when b = 0).
double relative_error(const Vector& a, const Vector& b);

// --- experiment runners -----------------------------------------------------

struct MethodSpec {
  GapMethod method = GapMethod::fill;
  std::size_t rank = 0;
};

struct SweepConfig {
  std::string workload = "rastrigin";               // rastrigin | wave | normal
  std::vector<std::vector<std::size_t>> grid_sizes = {{100, 100}};
  std::vector<double> gappiness = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<MethodSpec> methods = {{GapMethod::fill, 0}, {GapMethod::ignore, 0}, {GapMethod::penalize, 0}};
  std::vector<double> lengthscales = {0.5};         // one value shared by all axes per run
  double amplitude = 1.0;
  double sigma2 = 1e-4;
  std::optional<double> gamma;                       // PG; default 1e8 (lambda_max + sigma2)
  bool tune_hyperparameters = false;                 // fit on the full grid before gapping
  double wave_speed = 1.0;
  double cg_tolerance = 1e-6;
  std::optional<std::size_t> cg_max_iters;
  std::uint64_t seed = 0;
  std::size_t repetitions = 1;
  std::size_t oracle_cap = kDefaultOracleCap;
  std::size_t jobs = 1;
};

nlohmann::json to_json(const SweepConfig& c);
/// Missing keys keep the values already in `base`.
SweepConfig sweep_config_from_json(const nlohmann::json& j, SweepConfig base = {});
/// Defaults for the preconditioner study: 100 x 100 on [0,1]^2, 50% gaps,
/// y ~ N(0, I), sigma2 = 1e-6, IG and FG over a range of ranks.
SweepConfig default_precon_study_config();

struct ReportRow {
  std::string run_id;
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t l = 0;
  double gappiness = 0.0;
  std::string method;
  std::size_t rank_p = 0;
  std::optional<double> gamma;
  std::string theta;
  double sigma2 = 0.0;
  std::uint64_t seed = 0;
  std::size_t rep = 0;
  double setup_seconds = 0.0;
  double solve_seconds = 0.0;
  std::size_t cg_iters = 0;
  double rel_residual = 0.0;
  std::optional<double> alpha_err_vs_oracle;
  std::string status = "ok";
};

inline constexpr const char* kReportHeader =
    "run_id,M,N,L,gappiness,method,rank_p,gamma,theta,sigma2,seed,rep,setup_seconds,solve_seconds,"
    "cg_iters,rel_residual,alpha_err_vs_oracle,status";

/// CSV with 17 significant digits. `include_timing = false` blanks the two
/// timing columns (used for reproducibility comparisons).
std::string to_csv(const std::vector<ReportRow>& rows, bool include_timing = true);

std::vector<ReportRow> run_gappiness_sweep(const SweepConfig& cfg);

struct PreconSummaryRow {
  std::string method;
  std::string theta;
  std::size_t rank_p = 0;
  std::size_t samples = 0;
  double mean_iters = 0.0;
  double mean_setup_seconds = 0.0;
  double mean_solve_seconds = 0.0;
  double rel_solve_time = 0.0;  // vs rank 0, excluding setup
  double rel_total_time = 0.0;  // vs rank 0, including setup
};

struct PreconStudyResult {
  std::vector<ReportRow> rows;
  std::vector<PreconSummaryRow> summary;
};

PreconStudyResult run_precon_study(const SweepConfig& cfg);
std::string to_csv(const std::vector<PreconSummaryRow>& rows, bool include_timing = true);

} // namespace gridgp
