#include "gridgp/solvers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gridgp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Maps between a subset of grid rows and a subset of eigen-directions of
// Q = (x) Q_l, i.e. the matrix U = P_rows Q S_cols^T.
class EigenBasis {
public:
  EigenBasis(std::shared_ptr<const KroneckerEigen> eig, IndexList rows, IndexList cols, PreconMode mode)
      : eig_(std::move(eig)), rows_(std::move(rows)), cols_(std::move(cols)), m_(eig_->size()), mode_(mode) {
    if (mode_ == PreconMode::explicit_basis) {
      u_.resize(static_cast<Eigen::Index>(rows_.size()), static_cast<Eigen::Index>(cols_.size()));
      for (std::size_t c = 0; c < cols_.size(); ++c)
        u_.col(static_cast<Eigen::Index>(c)) = select(eig_column(*eig_, cols_[c]), rows_);
    }
  }

  std::size_t rank() const { return cols_.size(); }

  Vector apply_transposed(const Vector& r) const {
    if (mode_ == PreconMode::explicit_basis) return u_.transpose() * r;
    return select(kron_mvm_transposed(eig_->q_factors, scatter(r, rows_, m_)), cols_);
  }

  Vector apply(const Vector& v) const {
    if (mode_ == PreconMode::explicit_basis) return u_ * v;
    return select(kron_mvm(eig_->q_factors, scatter(v, cols_, m_)), rows_);
  }

  Matrix gram() const {
    const auto p = static_cast<Eigen::Index>(rank());
    Matrix g = Matrix::Zero(p, p);
    if (mode_ == PreconMode::explicit_basis) {
      g.selfadjointView<Eigen::Lower>().rankUpdate(u_.transpose());
      g = g.selfadjointView<Eigen::Lower>();
      return g;
    }
    for (Eigen::Index j = 0; j < p; ++j) g.col(j) = apply_transposed(apply(Vector::Unit(p, j)));
    return 0.5 * (g + g.transpose());
  }

private:
  std::shared_ptr<const KroneckerEigen> eig_;
  IndexList rows_;
  IndexList cols_;
  std::size_t m_;
  PreconMode mode_;
  Matrix u_;
};

// c^{-1} [r - U (c I + T U^T U)^{-1} T U^T r] with T = diag(t) >= 0, evaluated
// through the symmetric form D (c I + D U^T U D)^{-1} D, D = T^{1/2}.
LinearOperator inversion_lemma_operator(std::shared_ptr<const EigenBasis> basis, const Vector& t, double c,
                                        std::size_t n) {
  const Vector d = t.cwiseMax(0.0).cwiseSqrt();
  Matrix s = d.asDiagonal() * basis->gram() * d.asDiagonal();
  s.diagonal().array() += c;
  auto llt = std::make_shared<const Eigen::LLT<Matrix>>(s);
  if (llt->info() != Eigen::Success)
    throw std::runtime_error("low-rank preconditioner: p x p factorization failed");
  return LinearOperator(n, [basis, d, c, llt](const Vector& r) -> Vector {
    const Vector w = d.asDiagonal() * basis->apply_transposed(r);
    const Vector sol = llt->solve(w);
    return (r - basis->apply(d.asDiagonal() * sol)) / c;
  });
}

} // namespace

LinearOperator LinearOperator::identity(std::size_t n) {
  return LinearOperator(n, [](const Vector& x) { return x; });
}

LinearOperator LinearOperator::diagonal(Vector d) {
  const auto n = static_cast<std::size_t>(d.size());
  return LinearOperator(n, [d = std::move(d)](const Vector& x) -> Vector { return d.cwiseProduct(x); });
}

LinearOperator LinearOperator::dense(Matrix a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("LinearOperator::dense: matrix must be square");
  const auto n = static_cast<std::size_t>(a.rows());
  return LinearOperator(n, [a = std::move(a)](const Vector& x) -> Vector { return a * x; });
}

Vector LinearOperator::apply(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != n_)
    throw std::invalid_argument("LinearOperator: vector length " + std::to_string(x.size()) +
                                " does not match operator size " + std::to_string(n_));
  return fn_(x);
}

std::string to_string(SolveStatus s) {
  switch (s) {
  case SolveStatus::ok: return "ok";
  case SolveStatus::max_iters: return "max_iters";
  case SolveStatus::breakdown: return "breakdown";
  }
  return "unknown";
}

nlohmann::json to_json(const SolveReport& r) {
  nlohmann::json j = {{"iterations", r.iterations},
                      {"relative_residual", r.relative_residual},
                      {"solve_seconds", r.solve_seconds},
                      {"setup_seconds", r.setup_seconds},
                      {"status", to_string(r.status)}};
  if (!r.history.empty()) j["residual_history"] = r.history;
  return j;
}

CGResult cg_solve(const LinearOperator& a, const Vector& b, const LinearOperator* precon, const CGConfig& cfg) {
  const auto t0 = Clock::now();
  const auto n = a.size();
  if (static_cast<std::size_t>(b.size()) != n) throw std::invalid_argument("cg_solve: rhs length mismatch");
  if (precon && *precon && precon->size() != n)
    throw std::invalid_argument("cg_solve: preconditioner size mismatch");
  if (!(cfg.tolerance > 0.0)) throw std::invalid_argument("cg_solve: tolerance must be positive");
  const bool use_precon = precon && static_cast<bool>(*precon);
  const std::size_t max_iters = cfg.max_iters.value_or(10 * std::max<std::size_t>(n, 1));

  CGResult out;
  out.x = Vector::Zero(b.size());
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    out.report.solve_seconds = seconds_since(t0);
    return out;
  }

  auto precondition = [&](const Vector& r) -> Vector { return use_precon ? precon->apply(r) : r; };

  Vector& x = out.x;
  Vector r = b;
  Vector z = precondition(r);
  Vector p = z;
  double rz = r.dot(z);
  Vector best_x = x;
  double best_res = 1.0;
  std::size_t since_restart = 0;
  SolveStatus status = SolveStatus::max_iters;

  auto restart = [&]() {
    r = b - a.apply(x);
    z = precondition(r);
    p = z;
    rz = r.dot(z);
    since_restart = 0;
  };

  std::size_t it = 0;
  while (it < max_iters) {
    const Vector q = a.apply(p);
    const double pq = p.dot(q);
    if (!(pq > 0.0) || !std::isfinite(pq) || !std::isfinite(rz)) {
      status = SolveStatus::breakdown;
      break;
    }
    const double step = rz / pq;
    x.noalias() += step * p;
    r.noalias() -= step * q;
    ++it;
    ++since_restart;
    const double res = r.norm() / bnorm;
    if (cfg.record_history) out.report.history.push_back(res);
    if (!std::isfinite(res)) {
      status = SolveStatus::breakdown;
      break;
    }
    if (res < best_res) {
      best_res = res;
      best_x = x;
    }
    if (res <= cfg.tolerance) {
      // Confirm against the true residual; recurrence drift triggers a restart.
      const double true_res = (b - a.apply(x)).norm() / bnorm;
      if (true_res <= cfg.tolerance) {
        status = SolveStatus::ok;
        break;
      }
      restart();
      continue;
    }
    if (since_restart >= cfg.restart_every) {
      restart();
      continue;
    }
    z = precondition(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }

  if (status != SolveStatus::ok) x = best_x;
  out.report.iterations = it;
  out.report.relative_residual = (b - a.apply(x)).norm() / bnorm;
  out.report.status = status;
  out.report.solve_seconds = seconds_since(t0);
  return out;
}

LinearOperator pg_operator(const KroneckerOperator& k, const IndexSets& idx, double gamma, double sigma2) {
  if (!(gamma > 0.0)) throw std::invalid_argument("pg_operator: gamma must be positive");
  if (idx.grid_size() != k.size()) throw std::invalid_argument("pg_operator: index sets do not match grid");
  auto kp = std::make_shared<const KroneckerOperator>(k);
  Vector diag = Vector::Constant(static_cast<Eigen::Index>(k.size()), sigma2);
  for (auto i : idx.gaps()) diag[static_cast<Eigen::Index>(i)] += gamma;
  return LinearOperator(k.size(), [kp, diag = std::move(diag)](const Vector& x) -> Vector {
    Vector y = kron_mvm(*kp, x);
    y.array() += diag.array() * x.array();
    return y;
  });
}

Vector pg_preconditioner_diagonal(const IndexSets& idx, double gamma, double sigma2) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("pg_preconditioner: sigma2 must be positive");
  if (!(gamma > 0.0)) throw std::invalid_argument("pg_preconditioner: gamma must be positive");
  Vector d = Vector::Constant(static_cast<Eigen::Index>(idx.grid_size()), 1.0 / std::sqrt(sigma2));
  const double gap_entry = 1.0 / std::sqrt(gamma + sigma2);
  for (auto i : idx.gaps()) d[static_cast<Eigen::Index>(i)] = gap_entry;
  return d;
}

LinearOperator pg_preconditioner(const IndexSets& idx, double gamma, double sigma2) {
  return LinearOperator::diagonal(pg_preconditioner_diagonal(idx, gamma, sigma2).array().square());
}

double default_pg_gamma(const Vector& clamped_eigs, double sigma2) {
  return 1e8 * (clamped_eigs.maxCoeff() + sigma2);
}

LinearOperator ig_operator(const KroneckerOperator& k, const IndexSets& idx, double sigma2) {
  if (idx.grid_size() != k.size()) throw std::invalid_argument("ig_operator: index sets do not match grid");
  auto kp = std::make_shared<const KroneckerOperator>(k);
  auto x_idx = std::make_shared<const IndexList>(idx.observed());
  const auto m = k.size();
  return LinearOperator(x_idx->size(), [kp, x_idx, m, sigma2](const Vector& v) -> Vector {
    Vector y = select(kron_mvm(*kp, scatter(v, *x_idx, m)), *x_idx);
    y.noalias() += sigma2 * v;
    return y;
  });
}

FillGapsSystem fg_operator(const KroneckerEigen& eig, const IndexSets& idx, double sigma2) {
  if (idx.grid_size() != eig.size()) throw std::invalid_argument("fg_operator: index sets do not match grid");
  if (idx.num_gaps() == 0) throw std::invalid_argument("fg_operator: no gaps to fill");
  auto ep = std::make_shared<const KroneckerEigen>(eig);
  auto lambda = std::make_shared<const Vector>(clamped_eigenvalues(eig));
  if ((lambda->array() + sigma2 <= 0.0).any())
    throw std::domain_error("fg_operator: K + sigma2 I is singular");
  auto x_idx = std::make_shared<const IndexList>(idx.observed());
  auto z_idx = std::make_shared<const IndexList>(idx.gaps());
  const auto m = idx.grid_size();
  FillGapsSystem sys;
  sys.op = LinearOperator(z_idx->size(), [=](const Vector& u) -> Vector {
    return select(eig_solve(*ep, *lambda, sigma2, scatter(u, *z_idx, m)), *z_idx);
  });
  sys.rhs = [=](const Vector& y_x) -> Vector {
    return -select(eig_solve(*ep, *lambda, sigma2, scatter(y_x, *x_idx, m)), *z_idx);
  };
  return sys;
}

Vector fg_recover_alpha(const KroneckerEigen& eig, const IndexSets& idx, double sigma2, const Vector& y_x,
                        const Vector& y_z) {
  const auto m = idx.grid_size();
  const Vector y = scatter(y_x, idx.observed(), m) + scatter(y_z, idx.gaps(), m);
  return eig_solve(eig, sigma2, y);
}

Preconditioner ig_preconditioner(const KroneckerEigen& eig, const IndexSets& idx, std::size_t p, double sigma2,
                                 PreconMode mode) {
  const auto t0 = Clock::now();
  if (!(sigma2 > 0.0)) throw std::invalid_argument("ig_preconditioner: sigma2 must be positive");
  if (p > eig.size()) throw std::invalid_argument("ig_preconditioner: rank exceeds grid size");
  if (idx.grid_size() != eig.size()) throw std::invalid_argument("ig_preconditioner: index sets do not match grid");
  Preconditioner out;
  out.rank = p;
  out.shift = sigma2;
  const auto n = idx.num_observed();
  if (p == 0) {
    out.op = LinearOperator(n, [sigma2](const Vector& r) -> Vector { return r / sigma2; });
  } else {
    const Vector lambda = clamped_eigenvalues(eig);
    const auto top = top_p(lambda, p);
    auto basis = std::make_shared<const EigenBasis>(std::make_shared<const KroneckerEigen>(eig), idx.observed(),
                                                    top, mode);
    out.op = inversion_lemma_operator(basis, select(lambda, top), sigma2, n);
  }
  out.setup_seconds = seconds_since(t0);
  return out;
}

double fg_zeta_upper_bound(const Vector& clamped_eigs, std::size_t p, double sigma2) {
  if (p == 0 || p > static_cast<std::size_t>(clamped_eigs.size()))
    throw std::invalid_argument("fg_zeta_upper_bound: rank must be in [1, M]");
  const auto smallest = bottom_p(clamped_eigs, p);
  return 1.0 / (clamped_eigs[static_cast<Eigen::Index>(smallest.back())] + sigma2);
}

Preconditioner fg_preconditioner(const KroneckerEigen& eig, const IndexSets& idx, std::size_t p, double sigma2,
                                 std::optional<double> zeta, PreconMode mode) {
  const auto t0 = Clock::now();
  if (p > eig.size()) throw std::invalid_argument("fg_preconditioner: rank exceeds grid size");
  if (idx.grid_size() != eig.size()) throw std::invalid_argument("fg_preconditioner: index sets do not match grid");
  Preconditioner out;
  out.rank = p;
  const auto l = idx.num_gaps();
  if (p == 0) {
    out.op = LinearOperator::identity(l);
    out.setup_seconds = seconds_since(t0);
    return out;
  }
  const Vector lambda = clamped_eigenvalues(eig);
  const double bound = fg_zeta_upper_bound(lambda, p, sigma2);
  const double shift = zeta.value_or(0.5 * bound);
  if (!(shift > 0.0 && shift < bound))
    throw std::invalid_argument("fg_preconditioner: zeta = " + std::to_string(shift) +
                                " outside the open interval (0, " + std::to_string(bound) + ")");
  out.shift = shift;
  const auto smallest = bottom_p(lambda, p);
  Vector tbar(static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < p; ++i)
    tbar[static_cast<Eigen::Index>(i)] = 1.0 / (lambda[static_cast<Eigen::Index>(smallest[i])] + sigma2) - shift;
  auto basis = std::make_shared<const EigenBasis>(std::make_shared<const KroneckerEigen>(eig), idx.gaps(),
                                                  smallest, mode);
  out.op = inversion_lemma_operator(basis, tbar, shift, l);
  out.setup_seconds = seconds_since(t0);
  return out;
}

std::string to_string(GapMethod m) {
  switch (m) {
  case GapMethod::penalize: return "pg";
  case GapMethod::ignore: return "ig";
  case GapMethod::fill: return "fg";
  }
  return "unknown";
}

GapMethod gap_method_from_string(const std::string& s) {
  if (s == "pg" || s == "PG" || s == "penalize") return GapMethod::penalize;
  if (s == "ig" || s == "IG" || s == "ignore") return GapMethod::ignore;
  if (s == "fg" || s == "FG" || s == "fill") return GapMethod::fill;
  throw std::invalid_argument("unknown gap method '" + s + "' (expected pg, ig or fg)");
}

nlohmann::json to_json(const SolverConfig& c) {
  nlohmann::json j = {{"method", to_string(c.method)},
                      {"rank", c.rank},
                      {"pg_diagonal_precon", c.pg_diagonal_precon},
                      {"precon_mode", c.precon_mode == PreconMode::explicit_basis ? "explicit" : "implicit"},
                      {"cg_tolerance", c.cg.tolerance},
                      {"cg_restart_every", c.cg.restart_every}};
  j["gamma"] = c.gamma ? nlohmann::json(*c.gamma) : nlohmann::json(nullptr);
  j["zeta"] = c.zeta ? nlohmann::json(*c.zeta) : nlohmann::json(nullptr);
  j["cg_max_iters"] = c.cg.max_iters ? nlohmann::json(*c.cg.max_iters) : nlohmann::json(nullptr);
  return j;
}

SolverConfig solver_config_from_json(const nlohmann::json& j, SolverConfig c) {
  if (j.contains("method")) c.method = gap_method_from_string(j["method"].get<std::string>());
  if (j.contains("rank")) c.rank = j["rank"].get<std::size_t>();
  if (j.contains("pg_diagonal_precon")) c.pg_diagonal_precon = j["pg_diagonal_precon"].get<bool>();
  if (j.contains("precon_mode")) {
    const auto m = j["precon_mode"].get<std::string>();
    if (m == "explicit") c.precon_mode = PreconMode::explicit_basis;
    else if (m == "implicit") c.precon_mode = PreconMode::implicit_basis;
    else throw std::invalid_argument("unknown precon_mode '" + m + "' (expected explicit or implicit)");
  }
  if (j.contains("cg_tolerance")) c.cg.tolerance = j["cg_tolerance"].get<double>();
  if (j.contains("cg_restart_every")) c.cg.restart_every = j["cg_restart_every"].get<std::size_t>();
  auto opt_double = [&](const char* key, std::optional<double>& out) {
    if (j.contains(key)) out = j[key].is_null() ? std::nullopt : std::optional<double>(j[key].get<double>());
  };
  opt_double("gamma", c.gamma);
  opt_double("zeta", c.zeta);
  if (j.contains("cg_max_iters"))
    c.cg.max_iters = j["cg_max_iters"].is_null() ? std::nullopt
                                                 : std::optional<std::size_t>(j["cg_max_iters"].get<std::size_t>());
  return c;
}

GapSolver::GapSolver(const KroneckerOperator& k, IndexSets idx, double sigma2, SolverConfig cfg,
                     std::shared_ptr<const KroneckerEigen> eig)
    : k_(std::make_shared<const KroneckerOperator>(k)), idx_(std::move(idx)), sigma2_(sigma2),
      cfg_(std::move(cfg)), eig_(std::move(eig)) {
  const auto t0 = Clock::now();
  if (idx_.grid_size() != k_->size()) throw std::invalid_argument("GapSolver: index sets do not match grid");
  if (idx_.num_observed() == 0) throw std::invalid_argument("GapSolver: no observed points");
  if (!(sigma2_ >= 0.0)) throw std::invalid_argument("GapSolver: sigma2 must be non-negative");

  const bool needs_eig = cfg_.method == GapMethod::fill || cfg_.rank > 0 ||
                         (cfg_.method == GapMethod::penalize && !cfg_.gamma);
  if (needs_eig && !eig_) eig_ = std::make_shared<const KroneckerEigen>(kron_eig(*k_));
  if (eig_) clamped_ = clamped_eigenvalues(*eig_);

  switch (cfg_.method) {
  case GapMethod::penalize:
    gamma_ = cfg_.gamma.value_or(eig_ ? default_pg_gamma(clamped_, sigma2_) : 0.0);
    op_ = pg_operator(*k_, idx_, gamma_, sigma2_);
    if (cfg_.pg_diagonal_precon) precon_ = pg_preconditioner(idx_, gamma_, sigma2_);
    break;
  case GapMethod::ignore:
    op_ = ig_operator(*k_, idx_, sigma2_);
    if (cfg_.rank > 0) precon_ = ig_preconditioner(*eig_, idx_, cfg_.rank, sigma2_, cfg_.precon_mode).op;
    break;
  case GapMethod::fill:
    if (idx_.num_gaps() > 0) {
      fg_ = fg_operator(*eig_, idx_, sigma2_);
      if (cfg_.rank > 0)
        precon_ = fg_preconditioner(*eig_, idx_, cfg_.rank, sigma2_, cfg_.zeta, cfg_.precon_mode).op;
    }
    break;
  }
  setup_seconds_ = seconds_since(t0);
}

Vector GapSolver::fg_alpha(const Vector& y_x, const Vector& y_z) const {
  const auto m = idx_.grid_size();
  return eig_solve(*eig_, clamped_, sigma2_, scatter(y_x, idx_.observed(), m) + scatter(y_z, idx_.gaps(), m));
}

double GapSolver::observed_residual(const Vector& alpha, const Vector& y_x, double y_norm) const {
  const Vector ax = select(alpha, idx_.observed());
  const Vector kx = select(kron_mvm(*k_, scatter(ax, idx_.observed(), idx_.grid_size())), idx_.observed());
  const double r = (kx + sigma2_ * ax - y_x).norm();
  return y_norm > 0.0 ? r / y_norm : r;
}

GapSolution GapSolver::solve(const Vector& rhs_x) const {
  const auto t0 = Clock::now();
  if (static_cast<std::size_t>(rhs_x.size()) != idx_.num_observed())
    throw std::invalid_argument("GapSolver::solve: rhs length does not match observed count");
  const auto m = idx_.grid_size();
  const LinearOperator* pre = precon_ ? &precon_ : nullptr;
  GapSolution sol;

  switch (cfg_.method) {
  case GapMethod::penalize: {
    auto res = cg_solve(op_, scatter(rhs_x, idx_.observed(), m), pre, cfg_.cg);
    sol.alpha_raw = std::move(res.x);
    sol.alpha_x = select(sol.alpha_raw, idx_.observed());
    sol.report = res.report;
    break;
  }
  case GapMethod::ignore: {
    auto res = cg_solve(op_, rhs_x, pre, cfg_.cg);
    sol.alpha_x = std::move(res.x);
    sol.alpha_raw = scatter(sol.alpha_x, idx_.observed(), m);
    sol.report = res.report;
    break;
  }
  case GapMethod::fill: {
    if (!fg_) {
      sol.alpha_raw = eig_solve(*eig_, clamped_, sigma2_, scatter(rhs_x, idx_.observed(), m));
      sol.y_z = Vector();
    } else {
      const Vector b = fg_->rhs(rhs_x);
      auto res = cg_solve(fg_->op, b, pre, cfg_.cg);
      sol.report = res.report;
      Vector y_z = std::move(res.x);
      sol.alpha_raw = fg_alpha(rhs_x, y_z);
      // The gap-system residual only bounds the observed-system residual up to a
      // coupling factor, so refine y_Z until the observed system itself meets tol.
      const double tol = cfg_.cg.tolerance, y_norm = rhs_x.norm(), b_norm = b.norm();
      double rho = observed_residual(sol.alpha_raw, rhs_x, y_norm);
      for (int round = 0; round < kFgRefinements && rho > tol && sol.report.converged(); ++round) {
        const Vector r = b - fg_->op(y_z);
        const double r_norm = r.norm();
        if (r_norm == 0.0) break;
        CGConfig c = cfg_.cg;
        c.tolerance = std::clamp(0.5 * tol / rho, 1e-15, 0.5);
        auto corr = cg_solve(fg_->op, r, pre, c);
        y_z += corr.x;
        sol.report.iterations += corr.report.iterations;
        sol.report.status = corr.report.status;
        const double scale = b_norm > 0.0 ? r_norm / b_norm : 1.0;
        for (double h : corr.report.history) sol.report.history.push_back(h * scale);
        sol.alpha_raw = fg_alpha(rhs_x, y_z);
        rho = observed_residual(sol.alpha_raw, rhs_x, y_norm);
      }
      sol.y_z = std::move(y_z);
      sol.report.relative_residual = rho;
      if (rho > tol && sol.report.converged()) sol.report.status = SolveStatus::max_iters;
    }
    sol.alpha_x = select(sol.alpha_raw, idx_.observed());
    break;
  }
  }
  sol.report.setup_seconds = setup_seconds_;
  sol.report.solve_seconds = seconds_since(t0);
  return sol;
}

} // namespace gridgp
