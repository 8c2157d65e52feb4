#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "doctest.h"

#include "gridgp/dataset_io.hpp"
#include "gridgp/gp_model.hpp"
#include "gridgp/model_io.hpp"
#include "oracle.hpp"

using namespace gridgp;

namespace {

struct Fixture {
  GPModel model;
  oracle::GappyGP gp;
  std::vector<std::vector<double>> pts;
  double theta;
};

GappyDataset dataset_from(const GridSpec& grid, const oracle::Index& z, const Vector& y_x) {
  GappyDataset d;
  d.grid = grid;
  d.idx = IndexSets::from_gaps(z, grid.size());
  d.y_obs = y_x;
  return d;
}

// SE model on a [0,1]^d linspace grid with random responses at a random
// observed subset; `gp` is the dense reference for the same problem.
Fixture make_fixture(std::vector<std::size_t> shape, double gappiness, double theta, double sigma2,
                     std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<std::vector<double>> axes;
  for (auto n : shape) axes.push_back(GridSpec::linspace(0.0, 1.0, n));
  GridSpec grid(axes);
  const auto m = grid.size();
  oracle::Index x, z;
  oracle::random_split(m, static_cast<std::size_t>(std::llround(gappiness * static_cast<double>(m))), gen, x, z);
  const auto pts = oracle::grid_points(axes);
  const Vector y = oracle::random_vector(x.size(), gen);
  oracle::GappyGP gp{oracle::pairwise(pts, pts, std::vector<double>(shape.size(), theta)), x, z, sigma2, y};
  return {GPModel(Hyperparams{ProductKernel::se(shape.size(), theta), sigma2}, dataset_from(grid, z, y)), gp, pts,
          theta};
}

SolverConfig solver(GapMethod m, double tol = 1e-10) {
  SolverConfig c;
  c.method = m;
  c.cg.tolerance = tol;
  return c;
}

const GapMethod kMethods[] = {GapMethod::penalize, GapMethod::ignore, GapMethod::fill};

std::vector<std::vector<double>> random_points(std::size_t n, std::size_t d, std::mt19937_64& gen, double lo = 0.0,
                                               double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<std::vector<double>> out(n, std::vector<double>(d));
  for (auto& p : out)
    for (auto& v : p) v = u(gen);
  return out;
}

Vector cross_full(const Fixture& f, const std::vector<double>& x) {
  const Matrix c = oracle::pairwise(f.pts, {x}, std::vector<double>(x.size(), f.theta));
  return c.col(0);
}

double dense_log_likelihood(const Matrix& k, double sigma2, const Vector& y) {
  const Matrix a = oracle::shifted(k, sigma2);
  return -0.5 * oracle::log_det(a) - 0.5 * y.dot(oracle::solve(a, y)) -
         0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

// One draw from N(0, K + sigma2 I) over the whole grid.
Vector sample_gp(const Matrix& k, double sigma2, std::mt19937_64& gen) {
  const Matrix l = oracle::shifted(k, sigma2).llt().matrixL();
  return l * oracle::random_vector(static_cast<std::size_t>(k.rows()), gen);
}

} // namespace

TEST_CASE("log marginal likelihood of the scalar case") {
  GPModel m(Hyperparams{ProductKernel::se(1, 1.0), 1.0}, dataset_from(GridSpec(std::vector<std::vector<double>>{{0.0}}), {}, Vector::Constant(1, 2.0)));
  const auto r = log_marginal_likelihood(m, solver(GapMethod::ignore));
  CHECK(r.value == doctest::Approx(-0.5 * std::log(2.0) - 1.0 - 0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
  CHECK(r.reliable);
  CHECK(m.fitted());
}

TEST_CASE("likelihood without gaps matches the dense formula") {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto f = make_fixture({6, 6}, 0.0, 0.3, 0.1, seed);
    const auto r = log_marginal_likelihood(f.model, solver(GapMethod::fill));
    const double ref = dense_log_likelihood(f.gp.k, 0.1, f.gp.y_x);
    CHECK(std::abs(r.value - ref) <= 1e-8 * std::abs(ref));
    CHECK(std::abs(r.log_det - f.gp.log_det_xx()) <= 1e-8 * std::abs(f.gp.log_det_xx()));
  }
  auto f = make_fixture({4, 3, 5}, 0.0, 0.5, 0.05, 4);
  const auto r = log_marginal_likelihood(f.model, solver(GapMethod::ignore, 1e-13));
  const double ref = dense_log_likelihood(f.gp.k, 0.05, f.gp.y_x);
  CHECK(std::abs(r.value - ref) <= 1e-8 * std::abs(ref));
}

TEST_CASE("likelihood quadratic term agrees with the dense oracle for every method") {
  auto f = make_fixture({15, 15}, 0.4, 0.3, 0.01, 5);
  const double quad_ref = f.gp.y_x.dot(f.gp.alpha_x());
  for (auto m : kMethods) {
    const auto r = log_marginal_likelihood(f.model, solver(m, 1e-8));
    CHECK(r.reliable);
    CHECK(std::abs(r.quadratic - quad_ref) <= 1e-4 * std::abs(quad_ref));
    MESSAGE(to_string(m) << ": nystrom log-det " << r.log_det << " vs dense " << f.gp.log_det_xx());
  }
}

TEST_CASE("nystrom log-det rejects non-positive noise") {
  CHECK_THROWS_AS(nystrom_log_det(Vector::Ones(3), 2, 0.0), std::invalid_argument);
  CHECK(nystrom_log_det(Vector::Ones(1), 1, 1.0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("training with no free parameters evaluates once") {
  auto f = make_fixture({5, 5}, 0.2, 0.4, 0.1, 6);
  const auto before = f.model.hyper().pack();
  TrainConfig cfg;
  cfg.solver = solver(GapMethod::fill);
  cfg.free_slots = std::vector<std::size_t>{};
  const auto rep = train(f.model, cfg);
  CHECK(rep.evaluations == 1);
  CHECK(rep.best.pack() == before);
  CHECK(f.model.hyper().pack() == before);
  CHECK(rep.best_likelihood == rep.initial_likelihood);
  CHECK(f.model.fitted());
}

TEST_CASE("training recovers the noise variance") {
  std::mt19937_64 gen(7);
  const GridSpec grid({GridSpec::linspace(0, 1, 10), GridSpec::linspace(0, 1, 10)});
  const auto pts = oracle::grid_points(grid.axes());
  const Matrix k = oracle::pairwise(pts, pts, {0.3, 0.3});
  const Vector y = sample_gp(k, 0.1, gen);

  GPModel model(Hyperparams{ProductKernel::se(2, 0.3), 1.0}, make_full_dataset(grid, y));
  TrainConfig cfg;
  cfg.solver = solver(GapMethod::fill);
  cfg.free_slots = std::vector<std::size_t>{model.hyper().noise_slot()};
  const auto rep = train(model, cfg);
  const double s2 = rep.best.noise_variance;
  CHECK(s2 >= 0.05);
  CHECK(s2 <= 0.2);
  CHECK(rep.best_likelihood >= rep.initial_likelihood);
  // Without gaps the training objective is the exact likelihood.
  CHECK(dense_log_likelihood(k, s2, y) >= dense_log_likelihood(k, 0.1, y) - 1e-6);
  CHECK(model.fitted());
  CHECK(model.hyper().noise_variance == s2);

  GPModel again(Hyperparams{ProductKernel::se(2, 0.3), 1.0}, make_full_dataset(grid, y));
  CHECK(train(again, cfg).best.pack() == rep.best.pack());
}

TEST_CASE("training the lengthscale reaches at least the likelihood of the truth") {
  std::mt19937_64 gen(8);
  const GridSpec grid({GridSpec::linspace(0, 1, 15), GridSpec::linspace(0, 1, 15)});
  const auto pts = oracle::grid_points(grid.axes());
  const Vector y = sample_gp(oracle::pairwise(pts, pts, {0.3, 0.3}), 0.01, gen);
  oracle::Index x, z;
  oracle::random_split(225, 68, gen, x, z);
  const auto data = dataset_from(grid, z, oracle::sub(y, x));

  TrainConfig cfg;
  cfg.solver = solver(GapMethod::fill, 1e-8);
  cfg.free_slots = std::vector<std::size_t>{0, 1};
  cfg.starts = 2;
  GPModel model(Hyperparams{ProductKernel::se(2, 0.6), 0.01}, data);
  const auto rep = train(model, cfg);

  GPModel truth(Hyperparams{ProductKernel::se(2, 0.3), 0.01}, data);
  const double at_truth = log_marginal_likelihood(truth, cfg.solver).value;
  CHECK(rep.best_likelihood >= at_truth - 1e-3);
  CHECK(rep.best_likelihood >= rep.initial_likelihood);
  CHECK(to_json(rep).contains("best_log_likelihood"));
}

TEST_CASE("posterior mean interpolates noise-free data") {
  const GridSpec grid({GridSpec::linspace(0, 1, 8), GridSpec::linspace(0, 1, 8)});
  Vector y(64);
  for (std::size_t i = 0; i < 64; ++i) {
    const auto p = grid.point(i);
    y[static_cast<Eigen::Index>(i)] = std::sin(3.0 * p[0]) * std::cos(2.0 * p[1]);
  }
  GPModel model(Hyperparams{ProductKernel::se(2, 0.2), 1e-10}, make_full_dataset(grid, y));
  model.fit(solver(GapMethod::fill));
  double worst = 0.0;
  for (std::size_t i = 0; i < 64; ++i)
    worst = std::max(worst, std::abs(predict_mean_point(model, grid.point(i)) - y[static_cast<Eigen::Index>(i)]));
  CHECK(worst <= 1e-4);
  CHECK((predict_mean_grid(model, grid) - y).cwiseAbs().maxCoeff() <= 1e-4);
}

TEST_CASE("posterior mean of zero data is zero") {
  auto f = make_fixture({5, 5}, 0.3, 0.4, 0.1, 9);
  auto d = f.model.data();
  d.y_obs.setZero();
  f.model.set_data(d);
  f.model.fit(solver(GapMethod::ignore));
  const std::vector<double> x{0.37, 0.81};
  CHECK(predict_mean_point(f.model, x) == 0.0);
}

TEST_CASE("posterior mean matches the dense oracle for every method") {
  auto f = make_fixture({15, 15}, 0.4, 0.3, 0.01, 10);
  std::mt19937_64 gen(11);
  const auto tests = random_points(20, 2, gen);
  Vector ref(20);
  for (std::size_t q = 0; q < 20; ++q) ref[static_cast<Eigen::Index>(q)] = f.gp.mean(cross_full(f, tests[q]));
  for (auto m : kMethods) {
    f.model.fit(solver(m, 1e-8));
    Vector got(20);
    for (std::size_t q = 0; q < 20; ++q) got[static_cast<Eigen::Index>(q)] = predict_mean_point(f.model, tests[q]);
    CHECK(oracle::rel_err(got, ref) <= 1e-5);
  }
}

TEST_CASE("grid prediction equals the pointwise loop") {
  auto f = make_fixture({12, 9}, 0.3, 0.25, 0.05, 12);
  f.model.fit(solver(GapMethod::fill, 1e-8));
  std::mt19937_64 gen(13);
  std::vector<std::vector<double>> axes;
  for (int l = 0; l < 2; ++l) {
    auto a = random_points(7, 1, gen, -0.2, 1.2);
    std::vector<double> v;
    for (auto& p : a) v.push_back(p[0]);
    std::sort(v.begin(), v.end());
    axes.push_back(v);
  }
  const GridSpec test(axes);
  const Vector grid_mean = predict_mean_grid(f.model, test);
  REQUIRE(grid_mean.size() == 49);
  double worst = 0.0;
  for (std::size_t q = 0; q < 49; ++q)
    worst = std::max(worst, std::abs(grid_mean[static_cast<Eigen::Index>(q)] - predict_mean_point(f.model, test.point(q))));
  CHECK(worst <= 1e-10);

  const GridSpec single({{0.42}, {0.13}});
  CHECK(std::abs(predict_mean_grid(f.model, single)[0] - predict_mean_point(f.model, single.point(0))) <= 1e-12);
  CHECK_THROWS_AS(predict_mean_grid(f.model, GridSpec({{0.1, 0.2}})), std::invalid_argument);
}

TEST_CASE("exact variance limits") {
  auto f = make_fixture({8, 8}, 0.2, 0.3, 1e-4, 14);
  for (auto m : {GapMethod::ignore, GapMethod::fill}) {
    ExactVariance var(f.model, solver(m, 1e-12));
    const std::vector<double> far{50.0, -40.0};
    CHECK(std::abs(var(far).value - 1.0) <= 1e-6);
    const auto observed = f.model.data().grid.point(f.gp.x[5]);
    const auto v = var(observed);
    CHECK(v.value <= 1e-4 * (1.0 + 1e-3));
    CHECK(v.value >= 0.0);
  }
}

TEST_CASE("exact variance matches the dense oracle for every method") {
  auto f = make_fixture({15, 15}, 0.4, 0.3, 0.01, 15);
  f.model.fit(solver(GapMethod::fill));
  std::mt19937_64 gen(16);
  const auto tests = random_points(12, 2, gen, -0.1, 1.1);
  Vector ref(12);
  for (std::size_t q = 0; q < 12; ++q) ref[static_cast<Eigen::Index>(q)] = f.gp.variance(1.0, cross_full(f, tests[q]));
  for (auto m : kMethods) {
    ExactVariance var(f.model, solver(m, 1e-10));
    Vector got(12);
    for (std::size_t q = 0; q < 12; ++q) {
      const auto r = var(tests[q]);
      CHECK(r.report.converged());
      CHECK(r.value >= 0.0);
      CHECK(r.value <= 1.0 + 1e-8);
      got[static_cast<Eigen::Index>(q)] = r.value;
    }
    CHECK(oracle::rel_err(got, ref) <= 1e-4);
  }
  CHECK(predict_var_point_exact(f.model, tests[0], solver(GapMethod::ignore)).value ==
        doctest::Approx(ref[0]).epsilon(1e-4));
}

TEST_CASE("nystrom variance") {
  auto f = make_fixture({8, 8}, 0.25, 0.3, 0.01, 17);
  std::mt19937_64 gen(18);
  const auto tests = random_points(20, 2, gen);
  ExactVariance exact(f.model, solver(GapMethod::ignore, 1e-12));

  NystromVariance full(f.model, 64);
  for (const auto& x : tests) CHECK(std::abs(full(x).value - exact(x).value) <= 1e-6);

  NystromVariance none(f.model, 0);
  for (const auto& x : tests) {
    const Vector gx = oracle::sub(cross_full(f, x), f.gp.x);
    const double raw = 1.0 - gx.squaredNorm() / 0.01;
    const auto r = none(x);
    CHECK(r.value == doctest::Approx(std::max(raw, 0.0)).epsilon(1e-12));
    CHECK(r.clamped == (raw < 0.0));
  }
  CHECK(predict_var_point_nystrom(f.model, tests[0], 64).value == doctest::Approx(exact(tests[0]).value).epsilon(1e-6));
  CHECK_THROWS_AS(NystromVariance(f.model, 65), std::invalid_argument);
}

TEST_CASE("nystrom variance improves with rank on average") {
  auto f = make_fixture({15, 15}, 0.4, 0.3, 0.01, 19);
  std::mt19937_64 gen(20);
  const auto tests = random_points(20, 2, gen);
  ExactVariance exact(f.model, solver(GapMethod::ignore, 1e-10));
  std::vector<double> ex;
  for (const auto& x : tests) ex.push_back(exact(x).value);
  const std::size_t n = f.gp.x.size();
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t p : {n / 8, n / 4, n / 2, std::size_t{225}}) {
    NystromVariance ny(f.model, p);
    double err = 0.0;
    for (std::size_t q = 0; q < tests.size(); ++q) err += std::abs(ny(tests[q]).value - ex[q]);
    err /= static_cast<double>(tests.size());
    MESSAGE("rank " << p << ": mean abs variance error " << err);
    CHECK(err <= prev + 1e-12);
    prev = err;
  }
}

TEST_CASE("cache is invalidated by hyperparameter and data changes") {
  auto f = make_fixture({5, 5}, 0.2, 0.4, 0.1, 21);
  CHECK_THROWS_AS(f.model.cache(), std::logic_error);
  f.model.fit(solver(GapMethod::fill));
  CHECK(f.model.cache().alpha.size() == 25);
  for (auto z : f.gp.z) CHECK(f.model.cache().alpha[static_cast<Eigen::Index>(z)] == 0.0);
  const std::vector<double> x{0.5, 0.5};
  CHECK_NOTHROW(predict_mean_point(f.model, x));

  auto h = f.model.hyper();
  h.noise_variance = 0.2;
  f.model.set_hyper(h);
  CHECK_FALSE(f.model.fitted());
  CHECK_THROWS_AS(predict_mean_point(f.model, x), std::logic_error);

  f.model.fit(solver(GapMethod::ignore));
  f.model.set_data(f.model.data());
  CHECK_THROWS_AS(f.model.cache(), std::logic_error);

  // Cached alpha satisfies the residual bound.
  const auto& c = f.model.fit(solver(GapMethod::penalize, 1e-8));
  const Matrix kxx = oracle::shifted(oracle::sub(f.gp.k, f.gp.x, f.gp.x), 0.2);
  const Vector ax = oracle::sub(c.alpha, f.gp.x);
  CHECK((kxx * ax - f.gp.y_x).norm() <= 1e-7 * f.gp.y_x.norm());
}

TEST_CASE("model files round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "gridgp_test_model";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  auto f = make_fixture({6, 7}, 0.3, 0.35, 0.02, 22);
  f.model.fit(solver(GapMethod::fill, 1e-9));
  save_model(f.model, dir / "model.json");
  const auto back = load_model(dir / "model.json");
  CHECK(back.cache().alpha == f.model.cache().alpha);
  CHECK(back.hyper().pack() == f.model.hyper().pack());
  CHECK(back.data().idx == f.model.data().idx);
  const std::vector<double> x{0.21, 0.66};
  CHECK(predict_mean_point(back, x) == predict_mean_point(f.model, x));

  save_dataset(f.model.data(), dir / "plain.json");
  CHECK_THROWS_AS(load_model(dir / "plain.json"), IoError);
}
