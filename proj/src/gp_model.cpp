#include "gridgp/gp_model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "gridgp/rng.hpp"

namespace gridgp {

GPModel::GPModel(Hyperparams hyper, GappyDataset data) : hyper_(std::move(hyper)), data_(std::move(data)) {
  hyper_.validate();
  data_.validate();
  if (hyper_.kernel.dims() != data_.grid.dims())
    throw std::invalid_argument("GPModel: kernel has " + std::to_string(hyper_.kernel.dims()) +
                                " axes but the grid has " + std::to_string(data_.grid.dims()));
  if (data_.idx.num_observed() == 0) throw std::invalid_argument("GPModel: dataset has no observations");
  k_ = grid_covariance(hyper_.kernel, data_.grid);
}

void GPModel::set_hyper(Hyperparams h) {
  h.validate();
  if (h.kernel.dims() != data_.grid.dims()) throw std::invalid_argument("GPModel: axis count mismatch");
  hyper_ = std::move(h);
  k_ = grid_covariance(hyper_.kernel, data_.grid);
  eig_.reset();
  clamped_ = Vector();
  cache_.reset();
}

void GPModel::set_data(GappyDataset d) {
  d.validate();
  if (!(d.grid == data_.grid)) {
    data_ = std::move(d);
    k_ = grid_covariance(hyper_.kernel, data_.grid);
    eig_.reset();
    clamped_ = Vector();
  } else {
    data_ = std::move(d);
  }
  cache_.reset();
}

const std::shared_ptr<const KroneckerEigen>& GPModel::eig() const {
  if (!eig_) {
    eig_ = std::make_shared<const KroneckerEigen>(kron_eig(k_));
    clamped_ = clamped_eigenvalues(*eig_);
  }
  return eig_;
}

const Vector& GPModel::clamped_eigs() const {
  eig();
  return clamped_;
}

const ModelCache& GPModel::fit(const SolverConfig& cfg) {
  const bool needs_eig = cfg.method == GapMethod::fill || cfg.rank > 0 ||
                         (cfg.method == GapMethod::penalize && !cfg.gamma);
  GapSolver solver(k_, data_.idx, hyper_.noise_variance, cfg, needs_eig ? eig() : nullptr);
  auto sol = solver.solve(data_.y_obs);
  ModelCache c;
  c.eig = eig_;
  c.clamped_eigs = clamped_;
  c.alpha = sol.alpha_grid(data_.idx);
  c.y_z = std::move(sol.y_z);
  c.report = sol.report;
  c.solver = cfg;
  cache_ = std::move(c);
  return *cache_;
}

const ModelCache& GPModel::cache() const {
  if (!cache_) throw std::logic_error("GPModel: no fitted weights for the current hyperparameters/data");
  return *cache_;
}

void GPModel::restore_weights(Vector alpha, SolverConfig cfg) {
  if (static_cast<std::size_t>(alpha.size()) != data_.grid.size())
    throw std::invalid_argument("GPModel::restore_weights: alpha must have one entry per grid cell");
  ModelCache c;
  c.alpha = std::move(alpha);
  for (auto z : data_.idx.gaps()) c.alpha[static_cast<Eigen::Index>(z)] = 0.0;
  c.solver = std::move(cfg);
  cache_ = std::move(c);
}

double nystrom_log_det(const Vector& clamped_eigs, std::size_t n_observed, double sigma2) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("nystrom_log_det: sigma2 must be positive");
  const auto m = static_cast<double>(clamped_eigs.size());
  const double ratio = static_cast<double>(n_observed) / m;
  double sum = 0.0;
  for (auto i : top_p(clamped_eigs, n_observed))
    sum += std::log(ratio * clamped_eigs[static_cast<Eigen::Index>(i)] + sigma2);
  return sum;
}

LikelihoodResult log_marginal_likelihood(GPModel& model, const SolverConfig& cfg) {
  const double sigma2 = model.hyper().noise_variance;
  if (!(sigma2 > 0.0)) throw std::invalid_argument("log_marginal_likelihood: sigma2 must be positive");
  const auto& c = model.fit(cfg);
  const auto& data = model.data();
  const auto n = data.idx.num_observed();
  LikelihoodResult r;
  r.log_det = nystrom_log_det(model.clamped_eigs(), n, sigma2);
  r.quadratic = data.y_obs.dot(select(c.alpha, data.idx.observed()));
  r.value = -0.5 * r.log_det - 0.5 * r.quadratic -
            0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  r.report = c.report;
  r.reliable = c.report.converged();
  return r;
}

nlohmann::json to_json(const TrainReport& r) {
  return {{"hyperparameters", hyperparams_to_json(r.best)},
          {"initial_log_likelihood", r.initial_likelihood},
          {"best_log_likelihood", r.best_likelihood},
          {"evaluations", r.evaluations},
          {"budget_exhausted", r.budget_exhausted},
          {"unreliable_evaluations", r.unreliable_evaluations}};
}

namespace {

struct Objective {
  GPModel* model;
  const TrainConfig* cfg;
  Hyperparams base;
  std::vector<double> packed;
  std::vector<std::size_t> free;
  std::size_t evaluations = 0;
  bool unreliable = false;
  double best_value = -std::numeric_limits<double>::infinity();
  std::vector<double> best_packed;

  // Returns the log likelihood, or -inf when the point is invalid.
  double eval(const std::vector<double>& full) {
    ++evaluations;
    double value = -std::numeric_limits<double>::infinity();
    try {
      model->set_hyper(base.unpack(full));
      const auto r = log_marginal_likelihood(*model, cfg->solver);
      if (!r.reliable) unreliable = true;
      if (std::isfinite(r.value)) value = r.value;
    } catch (const std::exception&) {
    }
    if (value > best_value) {
      best_value = value;
      best_packed = full;
    }
    return value;
  }

  std::vector<double> expand(const gsl_vector* x) const {
    auto full = packed;
    for (std::size_t i = 0; i < free.size(); ++i) full[free[i]] = gsl_vector_get(x, i);
    return full;
  }
};

double gsl_objective(const gsl_vector* x, void* params) {
  auto* obj = static_cast<Objective*>(params);
  const double v = obj->eval(obj->expand(x));
  return std::isfinite(v) ? -v : 1e300;
}

} // namespace

TrainReport train(GPModel& model, const TrainConfig& cfg) {
  Objective obj{&model, &cfg, model.hyper(), model.hyper().pack(), {}, 0, false, -std::numeric_limits<double>::infinity(), {}};
  if (cfg.free_slots) {
    obj.free = *cfg.free_slots;
    for (auto s : obj.free)
      if (s >= obj.packed.size()) throw std::invalid_argument("train: free slot out of range");
  } else {
    for (std::size_t i = 0; i < obj.packed.size(); ++i) obj.free.push_back(i);
  }

  TrainReport report;
  report.initial_likelihood = obj.eval(obj.packed);
  if (!std::isfinite(report.initial_likelihood))
    throw std::runtime_error("train: likelihood is not finite at the initial hyperparameters");

  if (!obj.free.empty()) {
    const auto n = obj.free.size();
    gsl_set_error_handler_off();
    gsl_multimin_function fn{&gsl_objective, n, &obj};
    gsl_vector* x = gsl_vector_alloc(n);
    gsl_vector* step = gsl_vector_alloc(n);
    gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
    Rng rng(cfg.seed);
    for (std::size_t start = 0; start < std::max<std::size_t>(cfg.starts, 1); ++start) {
      for (std::size_t i = 0; i < n; ++i) {
        double v = obj.packed[obj.free[i]];
        if (start > 0) v += cfg.initial_step * rng.normal();
        gsl_vector_set(x, i, v);
        gsl_vector_set(step, i, cfg.initial_step);
      }
      const auto evals_at_start = obj.evaluations;
      gsl_multimin_fminimizer_set(s, &fn, x, step);
      bool converged = false;
      while (obj.evaluations - evals_at_start < cfg.max_evaluations) {
        if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
        if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), cfg.tolerance) == GSL_SUCCESS) {
          converged = true;
          break;
        }
      }
      if (!converged) report.budget_exhausted = true;
    }
    gsl_multimin_fminimizer_free(s);
    gsl_vector_free(step);
    gsl_vector_free(x);
  }

  report.best = model.hyper().unpack(obj.best_packed);
  report.best_likelihood = obj.best_value;
  report.unreliable_evaluations = obj.unreliable;
  model.set_hyper(report.best);
  model.fit(cfg.solver);
  report.evaluations = obj.evaluations;
  return report;
}

double predict_mean_point(const GPModel& model, std::span<const double> x_star) {
  const auto& c = model.cache();
  return cross_covariance_point(model.hyper().kernel, model.data().grid, x_star).dot(c.alpha);
}

Vector predict_mean_grid(const GPModel& model, const GridSpec& test_grid) {
  const auto& c = model.cache();
  const auto g = cross_covariance_grid(model.hyper().kernel, model.data().grid, test_grid);
  return kron_mvm_transposed(g, c.alpha);
}

namespace {

std::shared_ptr<const KroneckerEigen> eig_if_needed(const GPModel& model, const SolverConfig& cfg) {
  const bool needs = cfg.method == GapMethod::fill || cfg.rank > 0 ||
                     (cfg.method == GapMethod::penalize && !cfg.gamma);
  return needs ? model.eig() : nullptr;
}

VarianceResult finish_variance(double prior, double quad) {
  VarianceResult r;
  r.raw = prior - quad;
  r.value = r.raw;
  if (r.raw < 0.0) {
    r.value = 0.0;
    r.clamped = true;
  }
  return r;
}

} // namespace

ExactVariance::ExactVariance(const GPModel& model, SolverConfig cfg)
    : model_(&model),
      solver_(model.covariance(), model.data().idx, model.hyper().noise_variance, cfg, eig_if_needed(model, cfg)) {
  if (!(model.hyper().noise_variance > 0.0))
    throw std::invalid_argument("posterior variance requires sigma2 > 0");
}

VarianceResult ExactVariance::operator()(std::span<const double> x_star) const {
  const auto& data = model_->data();
  const Vector gx = select(cross_covariance_point(model_->hyper().kernel, data.grid, x_star), data.idx.observed());
  const auto sol = solver_.solve(gx);
  auto r = finish_variance(model_->hyper().kernel.prior_variance(x_star), gx.dot(sol.alpha_x));
  r.report = sol.report;
  return r;
}

VarianceResult predict_var_point_exact(const GPModel& model, std::span<const double> x_star,
                                       const SolverConfig& cfg) {
  return ExactVariance(model, cfg)(x_star);
}

NystromVariance::NystromVariance(const GPModel& model, std::size_t p, PreconMode mode)
    : model_(&model),
      inverse_(ig_preconditioner(*model.eig(), model.data().idx, p, model.hyper().noise_variance, mode)) {}

VarianceResult NystromVariance::operator()(std::span<const double> x_star) const {
  const auto& data = model_->data();
  const Vector gx = select(cross_covariance_point(model_->hyper().kernel, data.grid, x_star), data.idx.observed());
  auto r = finish_variance(model_->hyper().kernel.prior_variance(x_star), gx.dot(inverse_.op(gx)));
  r.report.setup_seconds = inverse_.setup_seconds;
  return r;
}

VarianceResult predict_var_point_nystrom(const GPModel& model, std::span<const double> x_star, std::size_t p) {
  return NystromVariance(model, p)(x_star);
}

} // namespace gridgp
