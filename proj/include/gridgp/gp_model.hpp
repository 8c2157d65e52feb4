#pragma once

// Gaussian-process regression on a gappy grid: marginal likelihood, training,
// and posterior mean / variance at test points.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "gridgp/grid_data.hpp"
#include "gridgp/kernels.hpp"
#include "gridgp/kron_linalg.hpp"
#include "gridgp/solvers.hpp"

namespace gridgp {

struct ModelCache {
  std::shared_ptr<const KroneckerEigen> eig;
  Vector clamped_eigs;
  Vector alpha;               // length M, exact zeros on the gaps
  std::optional<Vector> y_z;  // filled gap responses (FG)
  SolveReport report;
  SolverConfig solver;
};

class GPModel {
public:
  GPModel(Hyperparams hyper, GappyDataset data);

  const Hyperparams& hyper() const { return hyper_; }
  const GappyDataset& data() const { return data_; }
  const KroneckerOperator& covariance() const { return k_; }

  /// Replaces the hyperparameters and drops the cache.
  void set_hyper(Hyperparams h);
  void set_data(GappyDataset d);

  /// Eigendecomposition of K for the current hyperparameters (computed once).
  const std::shared_ptr<const KroneckerEigen>& eig() const;
  const Vector& clamped_eigs() const;

  /// Solves for alpha with the given method and stores it in the cache.
  const ModelCache& fit(const SolverConfig& cfg);
  bool fitted() const { return cache_.has_value(); }
  /// Throws std::logic_error if fit() has not been called since the last change.
  const ModelCache& cache() const;

  /// Restores a cache from stored weights (e.g. a model file).
  void restore_weights(Vector alpha, SolverConfig cfg);

private:
  Hyperparams hyper_;
  GappyDataset data_;
  KroneckerOperator k_;
  mutable std::shared_ptr<const KroneckerEigen> eig_;
  mutable Vector clamped_;
  std::optional<ModelCache> cache_;
};

struct LikelihoodResult {
  double value = 0.0;
  double log_det = 0.0;    // Nystrom estimate of log|K_XX + sigma2 I|
  double quadratic = 0.0;  // y_X^T alpha_X
  SolveReport report;
  bool reliable = true;    // false when the linear solve did not converge
};

/// sum_{i <= N} log((N/M) lambda_i + sigma2) over the N largest eigenvalues of K.
double nystrom_log_det(const Vector& clamped_eigs, std::size_t n_observed, double sigma2);

/// -1/2 logdet - 1/2 y_X^T alpha_X - N/2 log 2 pi with the Nystrom log-det.
/// Fits the model (alpha is cached) as a side effect.
LikelihoodResult log_marginal_likelihood(GPModel& model, const SolverConfig& cfg);

struct TrainConfig {
  SolverConfig solver;
  /// Packed hyperparameter slots to optimize (see Hyperparams); empty = all.
  std::optional<std::vector<std::size_t>> free_slots;
  std::size_t max_evaluations = 200;   // per start
  std::size_t starts = 3;
  double initial_step = 0.5;           // simplex size in log space
  double tolerance = 1e-6;             // simplex size at convergence
  std::uint64_t seed = 0;
};

struct TrainReport {
  Hyperparams best;
  double initial_likelihood = 0.0;
  double best_likelihood = 0.0;
  std::size_t evaluations = 0;
  bool budget_exhausted = false;
  bool unreliable_evaluations = false;
};

nlohmann::json to_json(const TrainReport& r);

/// Maximizes the (Nystrom) log marginal likelihood with multi-start
/// Nelder-Mead in log space. Leaves `model` fitted at the optimum.
TrainReport train(GPModel& model, const TrainConfig& cfg);

// --- inference --------------------------------------------------------------

double predict_mean_point(const GPModel& model, std::span<const double> x_star);
/// Posterior means on a test grid via G^T alpha, G = (x) G_l (Q values in
/// test-grid order).
Vector predict_mean_grid(const GPModel& model, const GridSpec& test_grid);

struct VarianceResult {
  double value = 0.0;
  bool clamped = false;  // raw value was negative and has been set to 0
  double raw = 0.0;
  SolveReport report;
};

/// Exact posterior (latent) variance k(x*, x*) - g_X^T (K_XX + sigma2 I)^{-1} g_X.
/// Build once per model and reuse across test points so the solver setup and
/// preconditioner are amortized.
class ExactVariance {
public:
  ExactVariance(const GPModel& model, SolverConfig cfg);
  VarianceResult operator()(std::span<const double> x_star) const;

private:
  const GPModel* model_;
  GapSolver solver_;
};

VarianceResult predict_var_point_exact(const GPModel& model, std::span<const double> x_star,
                                       const SolverConfig& cfg);

/// Approximate variance with K_XX replaced by its rank-p eigen approximation,
/// inverted by the inversion lemma. p = 0 degenerates to
/// k(x*, x*) - ||g_X||^2 / sigma2 (clamped at 0).
class NystromVariance {
public:
  NystromVariance(const GPModel& model, std::size_t p, PreconMode mode = PreconMode::explicit_basis);
  VarianceResult operator()(std::span<const double> x_star) const;

private:
  const GPModel* model_;
  Preconditioner inverse_;
};

VarianceResult predict_var_point_nystrom(const GPModel& model, std::span<const double> x_star, std::size_t p);

} // namespace gridgp
