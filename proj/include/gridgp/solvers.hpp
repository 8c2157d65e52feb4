#pragma once

// Preconditioned conjugate gradients and the three gap-handling linear
// systems for (K_XX + sigma2 I) alpha_X = y_X on a partial grid:
//
//   penalize-gaps (PG)  (K + gamma R + sigma2 I) alpha = y         size M
//   ignore-gaps   (IG)  W (K + sigma2 I) W^T alpha_X = y_X          size N
//   fill-gaps     (FG)  V C V^T y_Z = -V C W^T y_X,
//                       C = Q (T + sigma2 I)^{-1} Q^T              size L
//
// plus the rank-p inversion-lemma preconditioners for IG and FG.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "gridgp/grid_data.hpp"
#include "gridgp/kron_linalg.hpp"

namespace gridgp {

class LinearOperator {
public:
  using ApplyFn = std::function<Vector(const Vector&)>;

  LinearOperator() = default;
  LinearOperator(std::size_t n, ApplyFn fn) : n_(n), fn_(std::move(fn)) {}

  static LinearOperator identity(std::size_t n);
  static LinearOperator diagonal(Vector d);
  static LinearOperator dense(Matrix a);

  std::size_t size() const { return n_; }
  Vector apply(const Vector& x) const;
  Vector operator()(const Vector& x) const { return apply(x); }
  explicit operator bool() const { return static_cast<bool>(fn_); }

private:
  std::size_t n_ = 0;
  ApplyFn fn_;
};

struct CGConfig {
  double tolerance = 1e-6;             // on ||b - A x||_2 / ||b||_2
  std::optional<std::size_t> max_iters; // default 10 n
  bool record_history = false;
  std::size_t restart_every = 5000;
};

enum class SolveStatus { ok, max_iters, breakdown };
std::string to_string(SolveStatus s);

struct SolveReport {
  std::size_t iterations = 0;
  double relative_residual = 0.0;
  std::vector<double> history;
  double solve_seconds = 0.0;
  double setup_seconds = 0.0;
  SolveStatus status = SolveStatus::ok;

  bool converged() const { return status == SolveStatus::ok; }
};

nlohmann::json to_json(const SolveReport& r);

struct CGResult {
  Vector x;
  SolveReport report;
};

/// Hestenes-Stiefel PCG from x0 = 0. `precon` (may be null) is applied in
/// approximate-inverse form z = P r. On failure returns the iterate with the
/// smallest recurrence residual and a non-ok status.
CGResult cg_solve(const LinearOperator& a, const Vector& b, const LinearOperator* precon = nullptr,
                  const CGConfig& cfg = {});

// --- penalize gaps ----------------------------------------------------------

/// K + gamma R + sigma2 I with R the identity on the gap block.
LinearOperator pg_operator(const KroneckerOperator& k, const IndexSets& idx, double gamma, double sigma2);
/// Entries of (gamma R + sigma2 I)^{-1/2}: 1/sigma on X, (gamma + sigma2)^{-1/2} on Z.
Vector pg_preconditioner_diagonal(const IndexSets& idx, double gamma, double sigma2);
/// Approximate-inverse form (gamma R + sigma2 I)^{-1}, i.e. the split
/// preconditioner above applied on both sides.
LinearOperator pg_preconditioner(const IndexSets& idx, double gamma, double sigma2);
double default_pg_gamma(const Vector& clamped_eigs, double sigma2);

// --- ignore gaps ------------------------------------------------------------

LinearOperator ig_operator(const KroneckerOperator& k, const IndexSets& idx, double sigma2);

// --- fill gaps --------------------------------------------------------------

struct FillGapsSystem {
  LinearOperator op;                          // V C V^T, size L
  std::function<Vector(const Vector&)> rhs;   // y_X -> -V C W^T y_X
};

FillGapsSystem fg_operator(const KroneckerEigen& eig, const IndexSets& idx, double sigma2);
/// alpha = C [y_X; y_Z] assembled in grid order.
Vector fg_recover_alpha(const KroneckerEigen& eig, const IndexSets& idx, double sigma2,
                        const Vector& y_x, const Vector& y_z);

// --- rank-p preconditioners -------------------------------------------------

enum class PreconMode {
  explicit_basis, // store U (rows x p); apply costs O(rows p + p^2)
  implicit_basis  // apply U via two Kronecker products; O(p^2) extra storage
};

struct Preconditioner {
  LinearOperator op;
  double setup_seconds = 0.0;
  std::size_t rank = 0;
  double shift = 0.0; // sigma2 for IG, zeta for FG
};

/// (K~_XX + sigma2 I)^{-1} by the matrix inversion lemma, K~ built from the p
/// largest eigenpairs of K. p = 0 gives I / sigma2.
Preconditioner ig_preconditioner(const KroneckerEigen& eig, const IndexSets& idx, std::size_t p,
                                 double sigma2, PreconMode mode = PreconMode::explicit_basis);

/// Largest admissible spectral shift (lambda_p + sigma2)^{-1}, lambda_p the
/// p-th smallest eigenvalue of K (p >= 1).
double fg_zeta_upper_bound(const Vector& clamped_eigs, std::size_t p, double sigma2);

/// (J~ + zeta I)^{-1} for the fill-gaps matrix, J~ built from the p smallest
/// eigenpairs of K. zeta must lie in the open interval (0, upper bound);
/// defaults to the midpoint. p = 0 gives the identity.
Preconditioner fg_preconditioner(const KroneckerEigen& eig, const IndexSets& idx, std::size_t p,
                                 double sigma2, std::optional<double> zeta = std::nullopt,
                                 PreconMode mode = PreconMode::explicit_basis);

// --- solver facade ----------------------------------------------------------

enum class GapMethod { penalize, ignore, fill };
std::string to_string(GapMethod m);
GapMethod gap_method_from_string(const std::string& s);

struct SolverConfig {
  GapMethod method = GapMethod::fill;
  std::size_t rank = 0;                  // IG / FG preconditioner rank
  std::optional<double> gamma;           // PG penalty, default 1e8 (lambda_max + sigma2)
  bool pg_diagonal_precon = true;        // PG only
  std::optional<double> zeta;            // FG preconditioner shift
  PreconMode precon_mode = PreconMode::explicit_basis;
  CGConfig cg;
};

nlohmann::json to_json(const SolverConfig& c);
/// Missing keys keep the values already in `base`.
SolverConfig solver_config_from_json(const nlohmann::json& j, SolverConfig base = {});

struct GapSolution {
  Vector alpha_x;                 // length N
  Vector alpha_raw;               // length M as produced by the method (alpha_Z ~ 0)
  std::optional<Vector> y_z;      // FG only: filled gap responses
  SolveReport report;

  /// Length-M weights with exact zeros on the gaps.
  Vector alpha_grid(const IndexSets& idx) const { return scatter(alpha_x, idx.observed(), idx.grid_size()); }
};

/// Solves (K_XX + sigma2 I) alpha_X = rhs_X by the configured method. Setup
/// work (eigendecomposition, preconditioner) is done once in the constructor
/// and reused across solve() calls.
class GapSolver {
public:
  GapSolver(const KroneckerOperator& k, IndexSets idx, double sigma2, SolverConfig cfg,
            std::shared_ptr<const KroneckerEigen> eig = nullptr);

  GapSolution solve(const Vector& rhs_x) const;

  const SolverConfig& config() const { return cfg_; }
  double setup_seconds() const { return setup_seconds_; }
  double gamma() const { return gamma_; }
  const std::shared_ptr<const KroneckerEigen>& eig() const { return eig_; }

private:
  static constexpr int kFgRefinements = 8;
  Vector fg_alpha(const Vector& y_x, const Vector& y_z) const;
  double observed_residual(const Vector& alpha, const Vector& y_x, double y_norm) const;

  std::shared_ptr<const KroneckerOperator> k_;
  IndexSets idx_;
  double sigma2_;
  SolverConfig cfg_;
  std::shared_ptr<const KroneckerEigen> eig_;
  Vector clamped_;
  double gamma_ = 0.0;
  LinearOperator op_;
  std::optional<FillGapsSystem> fg_;
  LinearOperator precon_;
  double setup_seconds_ = 0.0;
};

} // namespace gridgp
