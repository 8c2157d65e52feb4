// Experiment runners for the gappiness sweep and the preconditioner study,
// plus their CSV / JSON serialization.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "gridgp/gp_model.hpp"
#include "gridgp/harness.hpp"
#include "gridgp/rng.hpp"

namespace gridgp {

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(std::string s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string theta_label(const Hyperparams& h) {
  std::string out;
  for (const auto& k : h.kernel.axes()) {
    if (!k.has_lengthscale()) continue;
    if (!out.empty()) out += ";";
    out += fmt17(k.lengthscale());
  }
  return out;
}

std::string method_label(const MethodSpec& m) { return to_string(m.method); }

GappyDataset make_workload(const SweepConfig& cfg, const std::vector<std::size_t>& shape, std::uint64_t seed) {
  if (cfg.workload == "rastrigin") {
    if (shape.size() != 2) throw std::invalid_argument("rastrigin workload needs a 2-d grid size");
    return gen_rastrigin(rastrigin_grid(shape[0], shape[1]));
  }
  if (cfg.workload == "wave") {
    if (shape.size() != 3) throw std::invalid_argument("wave workload needs a 3-d grid size (nx, ny, nt)");
    WaveConfig w;
    w.nx = shape[0];
    w.ny = shape[1];
    w.nt = shape[2];
    w.wave_speed = cfg.wave_speed;
    w.seed = seed;
    return gen_wave_membrane(w);
  }
  if (cfg.workload == "normal") return gen_normal(shape, seed);
  throw std::invalid_argument("unknown workload '" + cfg.workload + "' (expected rastrigin, wave or normal)");
}

Hyperparams base_hyper(const SweepConfig& cfg, std::size_t dims, double lengthscale) {
  return Hyperparams{ProductKernel::se(dims, lengthscale, cfg.amplitude), cfg.sigma2};
}

struct Cell {
  std::size_t size_idx, theta_idx, rep, gap_idx;
};

// Runs every configured method on one (size, theta, rep, gappiness) cell.
std::vector<ReportRow> run_cell(const SweepConfig& cfg, const Cell& cell, const std::string& prefix) {
  const auto& shape = cfg.grid_sizes[cell.size_idx];
  const double gappiness = cfg.gappiness[cell.gap_idx];
  const auto data_seed = derive_seed(cfg.seed, 1000003 * cell.size_idx + cell.rep);
  const auto gap_seed = derive_seed(data_seed, 7919 * (cell.gap_idx + 1));

  std::vector<ReportRow> rows;
  const auto id_base = prefix + "-s" + std::to_string(cell.size_idx) + "-t" + std::to_string(cell.theta_idx) +
                       "-g" + std::to_string(cell.gap_idx);
  auto make_row = [&](const MethodSpec& m) {
    ReportRow r;
    r.run_id = id_base + "-" + method_label(m) + std::to_string(m.rank) + "-r" + std::to_string(cell.rep);
    r.gappiness = gappiness;
    r.method = method_label(m);
    r.rank_p = m.rank;
    r.sigma2 = cfg.sigma2;
    r.seed = cfg.seed;
    r.rep = cell.rep;
    r.theta = fmt17(cfg.lengthscales[cell.theta_idx]);
    return r;
  };

  GappyDataset gappy;
  Hyperparams hyper;
  try {
    const auto full = make_workload(cfg, shape, data_seed);
    hyper = base_hyper(cfg, shape.size(), cfg.lengthscales[cell.theta_idx]);
    if (cfg.tune_hyperparameters) {
      GPModel tuning(hyper, full);
      TrainConfig tc;
      tc.solver.method = GapMethod::fill;
      tc.starts = 1;
      tc.max_evaluations = 150;
      tc.seed = cfg.seed;
      hyper = train(tuning, tc).best;
    }
    gappy = apply_gaps(full, gappiness, gap_seed);
  } catch (const std::exception& e) {
    for (const auto& m : cfg.methods) {
      auto r = make_row(m);
      r.status = std::string("error: ") + e.what();
      rows.push_back(std::move(r));
    }
    return rows;
  }

  std::optional<Vector> oracle_alpha;
  if (gappy.grid.size() <= cfg.oracle_cap) {
    try {
      oracle_alpha = DenseOracle(gappy, hyper, cfg.oracle_cap).alpha_x();
    } catch (const std::exception&) {
    }
  }

  const auto k = grid_covariance(hyper.kernel, gappy.grid);
  for (const auto& m : cfg.methods) {
    auto r = make_row(m);
    r.m = gappy.grid.size();
    r.n = gappy.idx.num_observed();
    r.l = gappy.idx.num_gaps();
    r.sigma2 = hyper.noise_variance;
    r.theta = theta_label(hyper);
    try {
      SolverConfig sc;
      sc.method = m.method;
      sc.rank = m.rank;
      sc.gamma = cfg.gamma;
      sc.cg.tolerance = cfg.cg_tolerance;
      sc.cg.max_iters = cfg.cg_max_iters;
      GapSolver solver(k, gappy.idx, hyper.noise_variance, sc);
      const auto sol = solver.solve(gappy.y_obs);
      if (m.method == GapMethod::penalize) r.gamma = solver.gamma();
      r.setup_seconds = solver.setup_seconds();
      r.solve_seconds = sol.report.solve_seconds;
      r.cg_iters = sol.report.iterations;
      r.rel_residual = sol.report.relative_residual;
      r.status = to_string(sol.report.status);
      if (oracle_alpha) r.alpha_err_vs_oracle = relative_error(sol.alpha_x, *oracle_alpha);
    } catch (const std::exception& e) {
      r.status = std::string("error: ") + e.what();
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ReportRow> run_cells(const SweepConfig& cfg, const std::string& prefix) {
  if (cfg.lengthscales.empty()) throw std::invalid_argument("sweep: at least one lengthscale required");
  for (double g : cfg.gappiness)
    if (!(g >= 0.0 && g < 1.0)) throw std::invalid_argument("sweep: gappiness must lie in [0, 1)");
  std::vector<Cell> cells;
  for (std::size_t s = 0; s < cfg.grid_sizes.size(); ++s)
    for (std::size_t t = 0; t < cfg.lengthscales.size(); ++t)
      for (std::size_t g = 0; g < cfg.gappiness.size(); ++g)
        for (std::size_t r = 0; r < cfg.repetitions; ++r) cells.push_back({s, t, r, g});

  std::vector<std::vector<ReportRow>> results(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < cells.size(); i = next++) results[i] = run_cell(cfg, cells[i], prefix);
  };
  const auto jobs = std::max<std::size_t>(1, std::min(cfg.jobs, cells.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  std::vector<ReportRow> rows;
  for (auto& r : results) rows.insert(rows.end(), std::make_move_iterator(r.begin()), std::make_move_iterator(r.end()));
  return rows;
}

} // namespace

std::string to_csv(const std::vector<ReportRow>& rows, bool include_timing) {
  std::ostringstream out;
  out << kReportHeader << "\n";
  for (const auto& r : rows) {
    out << csv_field(r.run_id) << ',' << r.m << ',' << r.n << ',' << r.l << ',' << fmt17(r.gappiness) << ','
        << r.method << ',' << r.rank_p << ',' << (r.gamma ? fmt17(*r.gamma) : "") << ',' << csv_field(r.theta) << ','
        << fmt17(r.sigma2) << ',' << r.seed << ',' << r.rep << ','
        << (include_timing ? fmt17(r.setup_seconds) : "") << ',' << (include_timing ? fmt17(r.solve_seconds) : "")
        << ',' << r.cg_iters << ',' << fmt17(r.rel_residual) << ','
        << (r.alpha_err_vs_oracle ? fmt17(*r.alpha_err_vs_oracle) : "") << ',' << csv_field(r.status) << "\n";
  }
  return out.str();
}

std::string to_csv(const std::vector<PreconSummaryRow>& rows, bool include_timing) {
  std::ostringstream out;
  out << "method,theta,rank_p,samples,mean_iters,mean_setup_seconds,mean_solve_seconds,rel_solve_time,"
         "rel_total_time\n";
  for (const auto& r : rows) {
    out << r.method << ',' << csv_field(r.theta) << ',' << r.rank_p << ',' << r.samples << ','
        << fmt17(r.mean_iters) << ',';
    if (include_timing)
      out << fmt17(r.mean_setup_seconds) << ',' << fmt17(r.mean_solve_seconds) << ',' << fmt17(r.rel_solve_time)
          << ',' << fmt17(r.rel_total_time);
    else
      out << ",,,";
    out << "\n";
  }
  return out.str();
}

std::vector<ReportRow> run_gappiness_sweep(const SweepConfig& cfg) { return run_cells(cfg, "sweep"); }

SweepConfig default_precon_study_config() {
  SweepConfig c;
  c.workload = "normal";
  c.grid_sizes = {{100, 100}};
  c.gappiness = {0.5};
  c.sigma2 = 1e-6;
  c.lengthscales = {0.1, 0.2, 0.5};
  c.methods = {{GapMethod::ignore, 0},   {GapMethod::ignore, 100}, {GapMethod::ignore, 500},
               {GapMethod::ignore, 1000}, {GapMethod::fill, 0},     {GapMethod::fill, 100},
               {GapMethod::fill, 500},    {GapMethod::fill, 1000}};
  c.repetitions = 5;
  c.oracle_cap = 0;
  return c;
}

PreconStudyResult run_precon_study(const SweepConfig& cfg) {
  PreconStudyResult out;
  out.rows = run_cells(cfg, "precon");

  // key: (method, theta, rank) in first-seen order
  std::vector<std::tuple<std::string, std::string, std::size_t>> order;
  std::map<std::tuple<std::string, std::string, std::size_t>, PreconSummaryRow> acc;
  for (const auto& r : out.rows) {
    if (r.status.rfind("error", 0) == 0) continue;
    const auto key = std::make_tuple(r.method, r.theta, r.rank_p);
    auto [it, inserted] = acc.try_emplace(key);
    if (inserted) {
      order.push_back(key);
      it->second.method = r.method;
      it->second.theta = r.theta;
      it->second.rank_p = r.rank_p;
    }
    auto& s = it->second;
    ++s.samples;
    s.mean_iters += static_cast<double>(r.cg_iters);
    s.mean_setup_seconds += r.setup_seconds;
    s.mean_solve_seconds += r.solve_seconds;
  }
  for (auto& [key, s] : acc) {
    const auto n = static_cast<double>(s.samples);
    s.mean_iters /= n;
    s.mean_setup_seconds /= n;
    s.mean_solve_seconds /= n;
  }
  for (const auto& key : order) {
    auto s = acc.at(key);
    const auto base_it = acc.find(std::make_tuple(s.method, s.theta, std::size_t{0}));
    if (base_it != acc.end()) {
      const auto& b = base_it->second;
      s.rel_solve_time = b.mean_solve_seconds > 0.0 ? s.mean_solve_seconds / b.mean_solve_seconds : 0.0;
      const double base_total = b.mean_setup_seconds + b.mean_solve_seconds;
      s.rel_total_time = base_total > 0.0 ? (s.mean_setup_seconds + s.mean_solve_seconds) / base_total : 0.0;
    }
    out.summary.push_back(s);
  }
  return out;
}

nlohmann::json to_json(const SweepConfig& c) {
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : c.methods) methods.push_back({{"method", to_string(m.method)}, {"rank", m.rank}});
  nlohmann::json j = {{"workload", c.workload},
                      {"grid_sizes", c.grid_sizes},
                      {"gappiness", c.gappiness},
                      {"methods", methods},
                      {"lengthscales", c.lengthscales},
                      {"amplitude", c.amplitude},
                      {"sigma2", c.sigma2},
                      {"tune_hyperparameters", c.tune_hyperparameters},
                      {"wave_speed", c.wave_speed},
                      {"cg_tolerance", c.cg_tolerance},
                      {"seed", c.seed},
                      {"repetitions", c.repetitions},
                      {"oracle_cap", c.oracle_cap},
                      {"jobs", c.jobs}};
  j["gamma"] = c.gamma ? nlohmann::json(*c.gamma) : nlohmann::json(nullptr);
  j["cg_max_iters"] = c.cg_max_iters ? nlohmann::json(*c.cg_max_iters) : nlohmann::json(nullptr);
  return j;
}

SweepConfig sweep_config_from_json(const nlohmann::json& j, SweepConfig c) {
  static const std::vector<std::string> known = {
      "workload", "grid_sizes", "gappiness", "methods", "lengthscales", "amplitude", "sigma2", "gamma",
      "tune_hyperparameters", "wave_speed", "cg_tolerance", "cg_max_iters", "seed", "repetitions", "oracle_cap",
      "jobs"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::invalid_argument("unknown sweep config key '" + key + "'");
  if (j.contains("workload")) c.workload = j["workload"].get<std::string>();
  if (j.contains("grid_sizes")) c.grid_sizes = j["grid_sizes"].get<std::vector<std::vector<std::size_t>>>();
  if (j.contains("gappiness")) c.gappiness = j["gappiness"].get<std::vector<double>>();
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : j["methods"]) {
      if (m.is_string()) {
        c.methods.push_back({gap_method_from_string(m.get<std::string>()), 0});
      } else {
        c.methods.push_back({gap_method_from_string(m.at("method").get<std::string>()), m.value("rank", std::size_t{0})});
      }
    }
  }
  if (j.contains("lengthscales")) c.lengthscales = j["lengthscales"].get<std::vector<double>>();
  if (j.contains("amplitude")) c.amplitude = j["amplitude"].get<double>();
  if (j.contains("sigma2")) c.sigma2 = j["sigma2"].get<double>();
  if (j.contains("gamma")) c.gamma = j["gamma"].is_null() ? std::nullopt : std::optional<double>(j["gamma"].get<double>());
  if (j.contains("tune_hyperparameters")) c.tune_hyperparameters = j["tune_hyperparameters"].get<bool>();
  if (j.contains("wave_speed")) c.wave_speed = j["wave_speed"].get<double>();
  if (j.contains("cg_tolerance")) c.cg_tolerance = j["cg_tolerance"].get<double>();
  if (j.contains("cg_max_iters"))
    c.cg_max_iters = j["cg_max_iters"].is_null() ? std::nullopt
                                                 : std::optional<std::size_t>(j["cg_max_iters"].get<std::size_t>());
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("repetitions")) c.repetitions = j["repetitions"].get<std::size_t>();
  if (j.contains("oracle_cap")) c.oracle_cap = j["oracle_cap"].get<std::size_t>();
  if (j.contains("jobs")) c.jobs = j["jobs"].get<std::size_t>();
  return c;
}

} // namespace gridgp
