#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"

#include "gridgp/harness.hpp"
#include "gridgp/kron_linalg.hpp"
#include "oracle.hpp"

using namespace gridgp;

namespace {

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

SweepConfig small_sweep() {
  SweepConfig c;
  c.workload = "normal";
  c.grid_sizes = {{10, 10}};
  c.gappiness = {0.0, 0.3};
  c.lengthscales = {0.3};
  c.sigma2 = 1e-2;
  c.cg_tolerance = 1e-10;
  c.seed = 5;
  c.repetitions = 2;
  return c;
}

} // namespace

TEST_CASE("rastrigin values") {
  const std::vector<double> origin{0.0, 0.0}, unit{1.0, 0.0};
  CHECK(rastrigin(origin) == 0.0);
  CHECK(rastrigin(unit) == doctest::Approx(1.0).epsilon(1e-12));

  const auto grid = rastrigin_grid(11, 11);
  CHECK(grid.axis(0).front() == kRastriginLo);
  CHECK(grid.axis(1).back() == kRastriginHi);
  const auto data = gen_rastrigin(grid);
  CHECK(data.idx.num_gaps() == 0);
  for (std::size_t i = 0; i < 11; ++i)
    for (std::size_t j = 0; j < 11; ++j) {
      const auto a = static_cast<Eigen::Index>(i * 11 + j), b = static_cast<Eigen::Index>((10 - i) * 11 + (10 - j));
      CHECK(data.y_obs[a] == doctest::Approx(data.y_obs[b]).epsilon(1e-12));
    }
  CHECK_THROWS_AS(gen_rastrigin(GridSpec({{0.0, 1.0}})), std::invalid_argument);
}

TEST_CASE("wave membrane boundary and trivial solution") {
  const auto data = gen_wave_membrane(9, 7, 12, 1.0, 3);
  CHECK(data.grid.dims() == 3);
  CHECK(data.grid.size() == 9 * 7 * 12);
  CHECK(data.y_obs.cwiseAbs().maxCoeff() > 0.0);
  for (std::size_t i = 0; i < data.grid.size(); ++i) {
    const auto mi = unflatten_index(i, data.grid.shape());
    if (mi[0] == 0 || mi[0] == 8 || mi[1] == 0 || mi[1] == 6) CHECK(data.y_obs[static_cast<Eigen::Index>(i)] == 0.0);
  }
  const auto again = gen_wave_membrane(9, 7, 12, 1.0, 3);
  CHECK(again.y_obs == data.y_obs);

  for (const auto& f : simulate_wave(Matrix::Zero(6, 6), 10, 1.0, 0.05)) CHECK(f.isZero(0.0));
}

TEST_CASE("wave standing mode follows cos(omega t)") {
  const Eigen::Index n = 41;
  const double h = 1.0 / static_cast<double>(n - 1), c = 1.0, dt = 0.5 * h / c;
  Matrix u0(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      u0(i, j) = std::sin(std::numbers::pi * static_cast<double>(i) * h) * std::sin(std::numbers::pi * static_cast<double>(j) * h);
  const double omega = std::numbers::pi * std::sqrt(2.0) * c;
  const auto steps = static_cast<std::size_t>(std::ceil(2.0 * std::numbers::pi / omega / dt)) + 1;
  const auto frames = simulate_wave(u0, steps, c, dt);
  double worst = 0.0;
  for (std::size_t k = 0; k < frames.size(); ++k)
    worst = std::max(worst, std::abs(frames[k](n / 2, n / 2) - std::cos(omega * dt * static_cast<double>(k))));
  CHECK(worst <= 0.02);
}

TEST_CASE("wave energy is conserved and CFL is enforced") {
  WaveConfig cfg;
  cfg.nx = 20;
  cfg.ny = 20;
  cfg.nt = 200;
  cfg.seed = 9;
  const double dt = wave_time_step(cfg);
  const auto frames = simulate_wave(random_membrane(cfg), cfg.nt, cfg.wave_speed, dt);
  const double e0 = wave_energy(frames[1], frames[2], cfg.wave_speed, dt);
  CHECK(e0 > 0.0);
  for (std::size_t k = 2; k + 1 < frames.size(); ++k)
    CHECK(std::abs(wave_energy(frames[k], frames[k + 1], cfg.wave_speed, dt) - e0) <= 0.01 * e0);

  cfg.courant = 0.8;
  CHECK_THROWS_AS(wave_time_step(cfg), std::invalid_argument);
  CHECK_THROWS_AS(simulate_wave(Matrix::Ones(5, 5), 3, 1.0, 0.5), std::invalid_argument);
}

TEST_CASE("apply_gaps counts and determinism") {
  const std::size_t shape[] = {10, 10};
  const auto full = gen_normal(shape, 1);
  const auto none = apply_gaps(full, 0.0, 2);
  CHECK(none.idx.num_gaps() == 0);
  CHECK(none.idx.num_observed() == 100);

  const auto half = apply_gaps(full, 0.5, 2);
  CHECK(half.idx.num_gaps() == 50);
  CHECK(half.idx.num_observed() == 50);
  CHECK(half.y_obs == oracle::sub(full.y_obs, half.idx.observed()));
  CHECK(apply_gaps(full, 0.5, 2).idx == half.idx);
  CHECK_FALSE(apply_gaps(full, 0.5, 3).idx == half.idx);

  // Gapping a gapped dataset draws from the retained ground truth.
  const auto twice = apply_gaps(half, 0.2, 4);
  CHECK(twice.idx.num_gaps() == 20);
  CHECK(twice.y_obs == oracle::sub(full.y_obs, twice.idx.observed()));

  CHECK_THROWS_AS(apply_gaps(full, 1.0, 2), std::invalid_argument);
  CHECK_THROWS_AS(apply_gaps(full, -0.1, 2), std::invalid_argument);
  CHECK(gen_normal(shape, 1).y_obs == full.y_obs);
}

TEST_CASE("dense oracle agrees with the eigendecomposition route") {
  const std::size_t shape[] = {7, 6};
  const auto data = gen_normal(shape, 3);
  const Hyperparams h{ProductKernel::se(2, 0.4), 0.05};
  const DenseOracle o(data, h);
  const auto k = grid_covariance(h.kernel, data.grid);
  const auto eig = kron_eig(k);
  CHECK(relative_error(o.alpha_x(), eig_solve(eig, 0.05, data.y_obs)) <= 1e-9);
  CHECK(o.y_z_expected().size() == 0);
  Vector lam = full_eigenvalues(eig);
  CHECK(std::abs(o.log_det() - (lam.array() + 0.05).log().sum()) <= 1e-9 * std::abs(o.log_det()));
}

TEST_CASE("dense oracle single observation") {
  GappyDataset d;
  d.grid = GridSpec({{0.0, 0.5, 1.0}});
  d.idx = IndexSets::from_gaps({0, 2}, 3);
  d.y_obs = Vector::Constant(1, 3.0);
  const Hyperparams h{ProductKernel::se(1, 0.7, 2.0), 0.5};
  const auto r = dense_oracle_solve(d, h);
  REQUIRE(r.alpha_x.size() == 1);
  CHECK(r.alpha_x[0] == doctest::Approx(3.0 / 2.5).epsilon(1e-14));
  const double kzx = 2.0 * std::exp(-0.25 / 0.49);
  CHECK(r.y_z_expected[0] == doctest::Approx(kzx * 1.2).epsilon(1e-14));
  CHECK(r.y_z_expected[1] == doctest::Approx(kzx * 1.2).epsilon(1e-14));
}

TEST_CASE("dense oracle noise-free fill matches the inverse partition") {
  std::mt19937_64 gen(4);
  const GridSpec grid({GridSpec::linspace(0, 1, 4), GridSpec::linspace(0, 1, 4)});
  const auto pts = oracle::grid_points(grid.axes());
  const Matrix k = oracle::pairwise(pts, pts, {0.6, 0.6});
  oracle::Index x, z;
  oracle::random_split(16, 6, gen, x, z);
  GappyDataset d;
  d.grid = grid;
  d.idx = IndexSets::from_gaps(z, 16);
  d.y_obs = oracle::random_vector(x.size(), gen);
  const auto r = dense_oracle_solve(d, Hyperparams{ProductKernel::se(2, 0.6), 0.0});

  const Matrix c = k.inverse();
  const Vector expected = -oracle::solve(oracle::sub(c, z, z), oracle::sub(c, z, x) * d.y_obs);
  CHECK(relative_error(r.y_z_expected, expected) <= 1e-8);
}

TEST_CASE("dense oracle refuses large grids") {
  const std::size_t shape[] = {65, 64};
  const auto data = gen_normal(shape, 1);
  CHECK_THROWS_AS(DenseOracle(data, Hyperparams{ProductKernel::se(2, 0.3), 0.1}), std::length_error);
  CHECK_THROWS_AS(DenseOracle(data, Hyperparams{ProductKernel::se(2, 0.3), 0.1}, 100), std::length_error);
}

TEST_CASE("dense oracle posterior matches the brute-force reference") {
  const std::size_t shape[] = {6, 5};
  const auto data = apply_gaps(gen_normal(shape, 6), 0.3, 7);
  const Hyperparams h{ProductKernel::se(2, 0.35), 0.02};
  const DenseOracle o(data, h);
  const auto pts = oracle::grid_points(data.grid.axes());
  oracle::GappyGP gp{oracle::pairwise(pts, pts, {0.35, 0.35}), data.idx.observed(), data.idx.gaps(), 0.02, data.y_obs};
  CHECK(relative_error(o.alpha_x(), gp.alpha_x()) <= 1e-10);
  CHECK(relative_error(o.y_z_expected(), gp.y_z()) <= 1e-10);
  CHECK(o.log_det() == doctest::Approx(gp.log_det_xx()).epsilon(1e-10));
  const std::vector<double> xs{0.33, 0.71};
  const Vector g = oracle::pairwise(pts, {xs}, {0.35, 0.35}).col(0);
  CHECK(o.mean(xs) == doctest::Approx(gp.mean(g)).epsilon(1e-10));
  CHECK(o.variance(xs) == doctest::Approx(gp.variance(1.0, g)).epsilon(1e-10));
}

TEST_CASE("gappiness sweep rows") {
  auto cfg = small_sweep();
  const auto rows = run_gappiness_sweep(cfg);
  CHECK(rows.size() == 2 * 3 * 2);
  for (const auto& r : rows) {
    CHECK(r.status == "ok");
    CHECK(r.m == 100);
    CHECK(r.n + r.l == 100);
    REQUIRE(r.alpha_err_vs_oracle.has_value());
    CHECK(*r.alpha_err_vs_oracle <= 1e-4);
    if (r.method == "fg" && r.gappiness == 0.0) CHECK(r.cg_iters == 0);
  }

  const auto csv = to_csv(rows, false);
  const auto ls = lines(csv);
  CHECK(ls.front() == kReportHeader);
  CHECK(ls.size() == rows.size() + 1);
  CHECK(to_csv(run_gappiness_sweep(cfg), false) == csv);

  cfg.jobs = 3;
  CHECK(to_csv(run_gappiness_sweep(cfg), false) == csv);

  // Repetitions with the same seed give identical iteration counts.
  auto one = small_sweep();
  one.repetitions = 1;
  const auto a = run_gappiness_sweep(one), b = run_gappiness_sweep(one);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].cg_iters == b[i].cg_iters);

  one.gappiness.clear();
  const auto empty = run_gappiness_sweep(one);
  CHECK(empty.empty());
  CHECK(to_csv(empty) == std::string(kReportHeader) + "\n");
}

TEST_CASE("sweep config JSON") {
  auto cfg = small_sweep();
  cfg.methods = {{GapMethod::ignore, 10}, {GapMethod::fill, 0}};
  cfg.gamma = 1e6;
  const auto back = sweep_config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK_THROWS(sweep_config_from_json(nlohmann::json{{"no_such_key", 1}}));
  const auto partial = sweep_config_from_json(nlohmann::json{{"methods", {"ig", {{"method", "fg"}, {"rank", 4}}}}});
  REQUIRE(partial.methods.size() == 2);
  CHECK(partial.methods[1].rank == 4);
}

TEST_CASE("preconditioner study") {
  auto cfg = default_precon_study_config();
  CHECK(cfg.sigma2 == 1e-6);
  CHECK(cfg.gappiness == std::vector<double>{0.5});
  cfg.grid_sizes = {{20, 20}};
  cfg.lengthscales = {0.2};
  cfg.methods = {{GapMethod::ignore, 0}, {GapMethod::ignore, 50}, {GapMethod::ignore, 150}};
  cfg.repetitions = 2;
  cfg.cg_tolerance = 1e-6;
  const auto res = run_precon_study(cfg);
  CHECK(res.rows.size() == 6);
  REQUIRE(res.summary.size() == 3);
  CHECK(res.summary[0].rank_p == 0);
  CHECK(res.summary[0].samples == 2);
  CHECK(res.summary[0].rel_total_time == doctest::Approx(1.0));
  CHECK(res.summary[2].mean_iters < res.summary[0].mean_iters);
  const auto ls = lines(to_csv(res.summary, false));
  CHECK(ls.size() == 4);
}
