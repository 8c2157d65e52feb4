#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gridgp/dataset_io.hpp"
#include "gridgp/gp_model.hpp"
#include "gridgp/harness.hpp"
#include "gridgp/model_io.hpp"
#include "gridgp/rng.hpp"

namespace gridgp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::size_t default_jobs() {
  if (const char* env = std::getenv(kJobsEnv)) {
    char* end = nullptr;
    const auto v = std::strtoull(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return 1;
}

// --- config files -------------------------------------------------------------

bool flag_given(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

std::optional<std::string> find_config(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file path");
      return args[i + 1];
    }
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

// A flat JSON object of {"flag_name": value} becomes "--flag-name=value"
// arguments (one per array element), skipping flags given explicitly on the
// command line. They go after the explicit arguments so multi-value options
// cannot swallow a positional.
std::vector<std::string> config_to_args(const json& cfg, const std::vector<std::string>& given) {
  if (!cfg.is_object()) throw UsageError("config file must hold a JSON object");
  std::vector<std::string> out;
  for (const auto& [key, value] : cfg.items()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    if (flag == "--config" || flag_given(given, flag)) continue;
    auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back(flag);
    } else if (value.is_null()) {
    } else if (value.is_array()) {
      for (const auto& v : value) out.push_back(flag + "=" + scalar(v));
    } else {
      out.push_back(flag + "=" + scalar(value));
    }
  }
  return out;
}

// --- shared kernel / solver flags ------------------------------------------------

struct KernelFlags {
  std::string hyper_file;
  double lengthscale = 0.5;
  double amplitude = 1.0;
  double sigma2 = 1e-4;

  void add(CLI::App* app) {
    app->add_option("--hyper", hyper_file, "Hyperparameter JSON (overrides the SE flags)");
    app->add_option("--lengthscale", lengthscale, "SE lengthscale shared by all axes")->capture_default_str();
    app->add_option("--amplitude", amplitude, "Kernel amplitude")->capture_default_str();
    app->add_option("--sigma2", sigma2, "Noise variance")->capture_default_str();
  }

  Hyperparams resolve(std::size_t dims) const {
    if (!hyper_file.empty()) return hyperparams_from_json(read_json_file(hyper_file));
    return Hyperparams{ProductKernel::se(dims, lengthscale, amplitude), sigma2};
  }
};

struct SolverFlags {
  std::string method = "fg";
  std::size_t rank = 0;
  std::optional<double> gamma;
  std::optional<double> zeta;
  double tol = 1e-6;
  std::optional<std::size_t> max_iters;
  std::string precon_mode = "explicit";

  void add(CLI::App* app) {
    app->add_option("--method", method, "Gap formulation: pg, ig or fg")
        ->check(CLI::IsMember({"pg", "ig", "fg"}))
        ->capture_default_str();
    app->add_option("--rank", rank, "Preconditioner rank p (0 = none)")->capture_default_str();
    app->add_option("--gamma", gamma, "PG penalty (default 1e8 (lambda_max + sigma2))");
    app->add_option("--zeta", zeta, "FG preconditioner shift");
    app->add_option("--tol", tol, "CG relative residual tolerance")->capture_default_str();
    app->add_option("--max-iters", max_iters, "CG iteration cap (default 10 n)");
    app->add_option("--precon-mode", precon_mode, "Low-rank basis storage")
        ->check(CLI::IsMember({"explicit", "implicit"}))
        ->capture_default_str();
  }

  SolverConfig resolve() const {
    SolverConfig c;
    c.method = gap_method_from_string(method);
    c.rank = rank;
    c.gamma = gamma;
    c.zeta = zeta;
    c.cg.tolerance = tol;
    c.cg.max_iters = max_iters;
    c.precon_mode = precon_mode == "implicit" ? PreconMode::implicit_basis : PreconMode::explicit_basis;
    return c;
  }
};

GappyDataset maybe_gap(GappyDataset data, double gappiness, std::uint64_t seed) {
  if (gappiness == 0.0) return data;
  return apply_gaps(data, gappiness, seed);
}

// --- generate -------------------------------------------------------------------

struct GenerateCmd {
  std::string kind;
  std::optional<std::size_t> nx, ny;
  std::size_t nt = 16;
  std::vector<std::size_t> shape;
  double wave_speed = 1.0;
  double courant = 0.5;
  std::size_t smoothing = 4;
  std::uint64_t seed = 0;
  double gappiness = 0.0;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("kind", kind, "rastrigin, wave or normal")
        ->required()
        ->check(CLI::IsMember({"rastrigin", "wave", "normal"}));
    app->add_option("--nx", nx, "Cells along x (default 100 rastrigin, 16 wave)");
    app->add_option("--ny", ny, "Cells along y");
    app->add_option("--nt", nt, "Wave frames")->capture_default_str();
    app->add_option("--shape", shape, "Grid shape for the normal workload");
    app->add_option("--wave-speed", wave_speed)->capture_default_str();
    app->add_option("--courant", courant, "c dt / min(dx, dy)")->capture_default_str();
    app->add_option("--smoothing", smoothing, "Jacobi passes on the initial membrane")->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--gappiness", gappiness, "Hide this fraction of cells (truth is kept)")->capture_default_str();
    app->add_option("--out", out, "Output manifest path")->required();
  }

  int run(std::ostream& os) const {
    GappyDataset data;
    json gen = {{"kind", kind}, {"seed", seed}, {"gappiness", gappiness}};
    if (kind == "rastrigin") {
      const auto x = nx.value_or(100), y = ny.value_or(100);
      data = gen_rastrigin(rastrigin_grid(x, y));
      gen["nx"] = x;
      gen["ny"] = y;
      gen["domain"] = {kRastriginLo, kRastriginHi};
    } else if (kind == "wave") {
      WaveConfig w;
      w.nx = nx.value_or(16);
      w.ny = ny.value_or(16);
      w.nt = nt;
      w.wave_speed = wave_speed;
      w.courant = courant;
      w.seed = seed;
      w.smoothing_passes = smoothing;
      data = gen_wave_membrane(w);
      gen.update({{"nx", w.nx}, {"ny", w.ny}, {"nt", w.nt}, {"wave_speed", wave_speed}, {"courant", courant},
                  {"dt", wave_time_step(w)}, {"smoothing", smoothing}});
    } else {
      if (shape.empty()) throw UsageError("generate normal needs --shape");
      data = gen_normal(shape, seed);
      gen["shape"] = shape;
    }
    data = maybe_gap(std::move(data), gappiness, derive_seed(seed, 1));
    auto manifest = save_dataset(data, out);
    manifest["generator"] = gen;
    write_text_atomic(out, manifest.dump(2) + "\n");
    os << "wrote " << out << " (M=" << data.grid.size() << ", N=" << data.idx.num_observed() << ")\n";
    return kExitOk;
  }
};

// --- reconstruct ----------------------------------------------------------------

struct ReconstructCmd {
  std::string data_path;
  std::string out;
  double gappiness = 0.0;
  std::uint64_t seed = 0;
  bool train_flag = false;
  std::size_t train_evals = 200;
  std::size_t train_starts = 3;
  KernelFlags kernel;
  SolverFlags solver;

  void add(CLI::App* app) {
    app->add_option("--data", data_path, "Dataset manifest")->required();
    app->add_option("--out", out, "Output directory")->required();
    app->add_option("--gappiness", gappiness, "Hide this fraction of a fully observed dataset")
        ->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_flag("--train", train_flag, "Maximize the marginal likelihood before solving");
    app->add_option("--train-evals", train_evals, "Likelihood evaluations per start")->capture_default_str();
    app->add_option("--train-starts", train_starts)->capture_default_str();
    kernel.add(app);
    solver.add(app);
  }

  int run(std::ostream& os) const {
    const auto t0 = std::chrono::steady_clock::now();
    auto data = maybe_gap(load_dataset(data_path), gappiness, seed);
    const auto scfg = solver.resolve();
    GPModel model(kernel.resolve(data.grid.dims()), data);

    json report;
    if (train_flag) {
      TrainConfig tc;
      tc.solver = scfg;
      tc.max_evaluations = train_evals;
      tc.starts = train_starts;
      tc.seed = seed;
      report["training"] = to_json(train(model, tc));
    }
    const auto& cache = model.fit(scfg);
    const double total = seconds_since(t0);

    fs::create_directories(out);
    save_model(model, fs::path(out) / "model.json");
    write_vector_file(fs::path(out) / "alpha.bin", cache.alpha);
    if (cache.y_z) write_vector_file(fs::path(out) / "y_z.bin", *cache.y_z);

    const auto& idx = model.data().idx;
    report["config"] = {{"data", data_path},
                        {"gappiness", gappiness},
                        {"seed", seed},
                        {"train", train_flag},
                        {"solver", to_json(scfg)},
                        {"hyperparameters", hyperparams_to_json(model.hyper())}};
    report["M"] = idx.grid_size();
    report["N"] = idx.num_observed();
    report["L"] = idx.num_gaps();
    report["solve"] = to_json(cache.report);
    report["total_seconds"] = total;
    write_text_atomic(fs::path(out) / "report.json", report.dump(2) + "\n");

    os << to_string(scfg.method) << ": M=" << idx.grid_size() << " N=" << idx.num_observed()
       << " cg_iters=" << cache.report.iterations << " rel_residual=" << fmt17(cache.report.relative_residual)
       << " status=" << to_string(cache.report.status) << "\n";
    return cache.report.converged() ? kExitOk : kExitNumerical;
  }
};

// --- sweep / precon-study -------------------------------------------------------

struct SweepCmd {
  bool precon = false;
  std::string config;
  std::string out;
  std::optional<std::size_t> jobs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> repetitions;
  std::optional<std::vector<double>> gappiness;
  std::optional<double> tol;
  bool no_timing = false;

  void add(CLI::App* app) {
    app->add_option("--config", config, "Sweep configuration JSON");
    app->add_option("--out", out, "Output directory")->required();
    app->add_option("--jobs", jobs, std::string("Parallel cells (default $") + kJobsEnv + " or 1)");
    app->add_option("--seed", seed);
    app->add_option("--repetitions", repetitions);
    app->add_option("--gappiness", gappiness, "Gappiness levels (empty list allowed via config)");
    app->add_option("--tol", tol, "CG tolerance");
    app->add_flag("--no-timing", no_timing, "Leave timing columns blank");
  }

  SweepConfig resolve() const {
    SweepConfig c = precon ? default_precon_study_config() : SweepConfig{};
    c.jobs = default_jobs();
    if (!config.empty()) c = sweep_config_from_json(read_json_file(config), c);
    if (jobs) c.jobs = *jobs;
    if (seed) c.seed = *seed;
    if (repetitions) c.repetitions = *repetitions;
    if (gappiness) c.gappiness = *gappiness;
    if (tol) c.cg_tolerance = *tol;
    return c;
  }

  int run(std::ostream& os) const {
    const auto cfg = resolve();
    fs::create_directories(out);
    std::vector<ReportRow> rows;
    json manifest = {{"command", precon ? "precon-study" : "sweep"}, {"config", to_json(cfg)}};
    if (precon) {
      auto res = run_precon_study(cfg);
      write_text_atomic(fs::path(out) / "precon_summary.csv", to_csv(res.summary, !no_timing));
      rows = std::move(res.rows);
      manifest["outputs"] = {"precon_rows.csv", "precon_summary.csv"};
      write_text_atomic(fs::path(out) / "precon_rows.csv", to_csv(rows, !no_timing));
    } else {
      rows = run_gappiness_sweep(cfg);
      manifest["outputs"] = {"sweep.csv"};
      write_text_atomic(fs::path(out) / "sweep.csv", to_csv(rows, !no_timing));
    }
    const auto failed = std::count_if(rows.begin(), rows.end(), [](const ReportRow& r) { return r.status != "ok"; });
    manifest["rows"] = rows.size();
    manifest["failed_rows"] = failed;
    write_text_atomic(fs::path(out) / "manifest.json", manifest.dump(2) + "\n");
    os << rows.size() << " rows, " << failed << " not ok\n";
    return failed == 0 ? kExitOk : kExitNumerical;
  }
};

// --- prediction helpers ----------------------------------------------------------

std::vector<std::vector<double>> read_points(const fs::path& path, std::size_t dims) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open points file " + path.string());
  std::vector<std::vector<double>> pts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    std::vector<double> p;
    std::string tok;
    while (ss >> tok) {
      try {
        std::size_t used = 0;
        p.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw IoError(path.string() + ":" + std::to_string(lineno) + ": not a number '" + tok + "'");
      }
    }
    if (p.empty()) continue;
    if (p.size() != dims)
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(dims) +
                    " coordinates");
    pts.push_back(std::move(p));
  }
  return pts;
}

GridSpec parse_axes(const std::vector<std::string>& specs, std::size_t dims) {
  if (specs.size() != dims)
    throw UsageError("--axis given " + std::to_string(specs.size()) + " times, model has " + std::to_string(dims) +
                     " axes");
  std::vector<std::vector<double>> axes;
  for (const auto& s : specs) {
    double lo = 0, hi = 0;
    unsigned long n = 0;
    char tail = 0;
    if (std::sscanf(s.c_str(), "%lf:%lf:%lu%c", &lo, &hi, &n, &tail) != 3 || n == 0)
      throw UsageError("--axis expects lo:hi:n, got '" + s + "'");
    axes.push_back(n == 1 ? std::vector<double>{lo} : GridSpec::linspace(lo, hi, n));
  }
  return GridSpec(std::move(axes));
}

std::string points_header(std::size_t dims) {
  std::string h;
  for (std::size_t l = 0; l < dims; ++l) h += "x" + std::to_string(l) + ",";
  return h;
}

// --- predict ----------------------------------------------------------------------

struct PredictCmd {
  std::string model_path;
  std::vector<std::string> axes;
  std::string points;
  std::string variance = "none";
  std::optional<std::size_t> rank;
  std::optional<std::string> method;
  double tol = 1e-6;
  std::string out;

  void add(CLI::App* app) {
    app->add_option("--model", model_path, "Model manifest (or the reconstruct output directory)")->required();
    auto* ax = app->add_option("--axis", axes, "Test-grid axis lo:hi:n, once per dimension");
    auto* pt = app->add_option("--points", points, "Test points file, one point per line");
    ax->excludes(pt);
    app->add_option("--variance", variance, "none, exact or nystrom")
        ->check(CLI::IsMember({"none", "exact", "nystrom"}))
        ->capture_default_str();
    app->add_option("--rank", rank, "Nystrom rank (default min(N, 100))");
    app->add_option("--method", method, "Solve route for exact variance (default: the model's)")
        ->check(CLI::IsMember({"pg", "ig", "fg"}));
    app->add_option("--tol", tol, "CG tolerance for exact variance")->capture_default_str();
    app->add_option("--out", out, "Output CSV")->required();
  }

  int run(std::ostream& os) const {
    if (axes.empty() == points.empty()) throw UsageError("predict needs exactly one of --axis or --points");
    fs::path mp = model_path;
    if (fs::is_directory(mp)) mp /= "model.json";
    const auto model = load_model(mp);
    const auto dims = model.data().grid.dims();

    std::vector<std::vector<double>> pts;
    Vector means;
    if (!axes.empty()) {
      const auto test_grid = parse_axes(axes, dims);
      means = predict_mean_grid(model, test_grid);
      pts.reserve(test_grid.size());
      for (std::size_t q = 0; q < test_grid.size(); ++q) pts.push_back(test_grid.point(q));
    } else {
      pts = read_points(points, dims);
      means.resize(static_cast<Eigen::Index>(pts.size()));
      for (std::size_t q = 0; q < pts.size(); ++q) means[static_cast<Eigen::Index>(q)] = predict_mean_point(model, pts[q]);
    }

    std::ostringstream csv;
    csv << points_header(dims) << "mean" << (variance == "none" ? "" : ",variance,clamped") << "\n";
    std::optional<ExactVariance> exact;
    std::optional<NystromVariance> nystrom;
    SolverConfig scfg = model.cache().solver;
    if (method) scfg.method = gap_method_from_string(*method);
    scfg.cg.tolerance = tol;
    if (variance == "exact") exact.emplace(model, scfg);
    if (variance == "nystrom") nystrom.emplace(model, rank.value_or(std::min<std::size_t>(model.data().idx.num_observed(), 100)));

    bool all_converged = true;
    std::size_t clamped = 0;
    for (std::size_t q = 0; q < pts.size(); ++q) {
      for (double x : pts[q]) csv << fmt17(x) << ',';
      csv << fmt17(means[static_cast<Eigen::Index>(q)]);
      if (exact || nystrom) {
        const auto v = exact ? (*exact)(pts[q]) : (*nystrom)(pts[q]);
        if (exact && !v.report.converged()) all_converged = false;
        if (v.clamped) ++clamped;
        csv << ',' << fmt17(v.value) << ',' << (v.clamped ? 1 : 0);
      }
      csv << "\n";
    }
    write_text_atomic(out, csv.str());
    json manifest = {{"command", "predict"},
                     {"model", mp.string()},
                     {"mode", axes.empty() ? "points" : "grid"},
                     {"variance", variance},
                     {"points", pts.size()},
                     {"clamped_variances", clamped}};
    if (!axes.empty()) manifest["axes"] = axes;
    else manifest["points_file"] = points;
    if (exact) manifest["solver"] = to_json(scfg);
    if (nystrom) manifest["rank"] = rank.value_or(std::min<std::size_t>(model.data().idx.num_observed(), 100));
    write_text_atomic(out + ".json", manifest.dump(2) + "\n");
    os << "wrote " << pts.size() << " predictions to " << out << "\n";
    return all_converged ? kExitOk : kExitNumerical;
  }
};

// --- oracle-check -----------------------------------------------------------------

inline constexpr double kOracleTolerance = 1e-4;

struct OracleCheckCmd {
  std::string data_path;
  double gappiness = 0.0;
  std::uint64_t seed = 0;
  std::size_t cap = kDefaultOracleCap;
  double tol = 1e-6;
  std::string points;
  std::string out;
  KernelFlags kernel;

  void add(CLI::App* app) {
    app->add_option("--data", data_path, "Dataset manifest")->required();
    app->add_option("--gappiness", gappiness, "Hide this fraction of a fully observed dataset")
        ->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--cap", cap, "Largest grid the dense oracle accepts")->capture_default_str();
    app->add_option("--tol", tol, "CG tolerance for the checked solves")->capture_default_str();
    app->add_option("--points", points, "Also check posterior mean/variance at these points");
    app->add_option("--out", out, "Write oracle mean/variance at --points to this CSV");
    kernel.add(app);
  }

  int run(std::ostream& os) const {
    const auto data = maybe_gap(load_dataset(data_path), gappiness, seed);
    const auto m = data.grid.size();
    if (m > cap) {
      os << "refused: grid size " << m << " exceeds the dense oracle cap " << cap << "\n";
      return kExitUsage;
    }
    const auto hyper = kernel.resolve(data.grid.dims());
    const DenseOracle oracle(data, hyper, cap);
    GPModel model(hyper, data);

    bool pass = true;
    auto check = [&](const std::string& what, double err) {
      const bool ok = err <= kOracleTolerance;
      pass = pass && ok;
      os << (ok ? "PASS " : "FAIL ") << what << " rel_err=" << fmt17(err) << " (tol " << kOracleTolerance << ")\n";
    };

    std::vector<std::vector<double>> pts;
    if (!points.empty()) pts = read_points(points, data.grid.dims());

    for (auto method : {GapMethod::penalize, GapMethod::ignore, GapMethod::fill}) {
      SolverConfig scfg;
      scfg.method = method;
      scfg.cg.tolerance = tol;
      const auto& c = model.fit(scfg);
      const auto name = to_string(method);
      if (!c.report.converged()) {
        pass = false;
        os << "FAIL " << name << " solve status=" << to_string(c.report.status) << "\n";
      }
      check(name + " alpha_X", relative_error(select(c.alpha, data.idx.observed()), oracle.alpha_x()));
      if (method == GapMethod::fill) {
        if (data.idx.num_gaps() == 0) {
          os << "note fg: no gaps, short-circuit eigen-solve (" << c.report.iterations << " CG iterations)\n";
        } else if (c.y_z) {
          check("fg y_Z", relative_error(*c.y_z, oracle.y_z_expected()));
        }
      }
      if (!pts.empty()) {
        Vector mu(static_cast<Eigen::Index>(pts.size())), mu_ref = mu, var = mu, var_ref = mu;
        const ExactVariance ev(model, scfg);
        for (std::size_t q = 0; q < pts.size(); ++q) {
          const auto i = static_cast<Eigen::Index>(q);
          mu[i] = predict_mean_point(model, pts[q]);
          mu_ref[i] = oracle.mean(pts[q]);
          var[i] = ev(pts[q]).value;
          var_ref[i] = oracle.variance(pts[q]);
        }
        check(name + " mean", relative_error(mu, mu_ref));
        check(name + " variance", relative_error(var, var_ref));
      }
    }

    if (!out.empty()) {
      if (pts.empty()) throw UsageError("--out needs --points");
      std::ostringstream csv;
      csv << points_header(data.grid.dims()) << "mean,variance\n";
      for (const auto& p : pts) {
        for (double x : p) csv << fmt17(x) << ',';
        csv << fmt17(oracle.mean(p)) << ',' << fmt17(oracle.variance(p)) << "\n";
      }
      write_text_atomic(out, csv.str());
      json manifest = {{"command", "oracle-check"},
                       {"data", data_path},
                       {"gappiness", gappiness},
                       {"seed", seed},
                       {"cap", cap},
                       {"tol", tol},
                       {"hyperparameters", hyperparams_to_json(hyper)},
                       {"pass", pass}};
      write_text_atomic(out + ".json", manifest.dump(2) + "\n");
    }
    os << (pass ? "oracle-check: pass" : "oracle-check: FAIL") << " (M=" << m << ", N=" << data.idx.num_observed()
       << ", L=" << data.idx.num_gaps() << ")\n";
    return pass ? kExitOk : kExitNumerical;
  }
};

} // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exact Gaussian-process regression on gappy Kronecker grids", "gridgp"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  GenerateCmd gen;
  ReconstructCmd rec;
  SweepCmd sweep;
  SweepCmd precon;
  precon.precon = true;
  PredictCmd pred;
  OracleCheckCmd oracle;

  auto* gen_app = app.add_subcommand("generate", "Write a synthetic dataset");
  gen.add(gen_app);
  auto* rec_app = app.add_subcommand("reconstruct", "Fill gaps and compute the weight vector");
  rec.add(rec_app);
  auto* sweep_app = app.add_subcommand("sweep", "Gappiness sweep to CSV");
  sweep.add(sweep_app);
  auto* precon_app = app.add_subcommand("precon-study", "Preconditioner rank study to CSV");
  precon.add(precon_app);
  auto* pred_app = app.add_subcommand("predict", "Posterior mean (and variance) from a reconstructed model");
  pred.add(pred_app);
  auto* oracle_app = app.add_subcommand("oracle-check", "Compare every method against dense linear algebra");
  oracle.add(oracle_app);
  // Flag-style config files for the non-sweep commands.
  for (auto* sub : {gen_app, rec_app, pred_app, oracle_app})
    sub->add_option("--config", "JSON object of flag values; explicit flags win");
  pred_app->get_option("--axis")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  for (auto* sub : {sweep_app, precon_app})
    sub->get_option("--gappiness")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  gen_app->get_option("--shape")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);

  try {
    std::vector<std::string> args = raw_args;
    const bool sweep_like = !args.empty() && (args[0] == "sweep" || args[0] == "precon-study");
    if (!sweep_like && !args.empty()) {
      if (const auto cfg = find_config(args)) {
        const auto extra = config_to_args(read_json_file(*cfg), args);
        args.insert(args.end(), extra.begin(), extra.end());
      }
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gen_app->parsed()) return gen.run(out);
    if (rec_app->parsed()) return rec.run(out);
    if (sweep_app->parsed()) return sweep.run(out);
    if (precon_app->parsed()) return precon.run(out);
    if (pred_app->parsed()) return pred.run(out);
    if (oracle_app->parsed()) return oracle.run(out);
  } catch (const std::domain_error& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::logic_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const json::exception& e) {
    err << "error: bad configuration: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}

} // namespace gridgp::cli
