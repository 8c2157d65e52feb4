#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "cli.hpp"
#include "gridgp/dataset_io.hpp"
#include "gridgp/harness.hpp"

using namespace gridgp;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("gridgp_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

// Parses a CSV body (header skipped) into rows of numbers.
std::vector<std::vector<double>> csv_numbers(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<double> r;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) r.push_back(std::stod(cell));
    rows.push_back(r);
  }
  return rows;
}

std::string normal_dataset(const fs::path& dir, const std::string& shape0, const std::string& shape1) {
  const auto path = (dir / "data.json").string();
  REQUIRE(invoke({"generate", "normal", "--shape", shape0, shape1, "--seed", "3", "--out", path}).code == 0);
  return path;
}

} // namespace

TEST_CASE("generate writes the expected grids") {
  const auto dir = scratch("generate");
  const auto r = invoke({"generate", "rastrigin", "--nx", "100", "--ny", "100", "--out", (dir / "r.json").string()});
  CHECK(r.code == 0);
  const auto rast = load_dataset(dir / "r.json");
  CHECK(rast.grid.size() == 10000);
  CHECK(rast.idx.num_gaps() == 0);
  CHECK(read_json(dir / "r.json")["generator"]["kind"] == "rastrigin");

  CHECK(invoke({"generate", "wave", "--nx", "16", "--ny", "16", "--nt", "16", "--out", (dir / "w.json").string()}).code == 0);
  CHECK(load_dataset(dir / "w.json").grid.size() == 4096);

  CHECK(invoke({"generate", "wave", "--seed", "4", "--out", (dir / "a.json").string()}).code == 0);
  CHECK(invoke({"generate", "wave", "--seed", "4", "--out", (dir / "b.json").string()}).code == 0);
  CHECK(slurp(dir / "a.y.bin") == slurp(dir / "b.y.bin"));
  CHECK(slurp(dir / "a.mask.bin") == slurp(dir / "b.mask.bin"));
  CHECK(invoke({"generate", "wave", "--seed", "5", "--out", (dir / "c.json").string()}).code == 0);
  CHECK(slurp(dir / "a.y.bin") != slurp(dir / "c.y.bin"));

  CHECK(invoke({"generate", "normal", "--shape", "6", "6", "--gappiness", "0.25", "--out", (dir / "g.json").string()}).code == 0);
  const auto gapped = load_dataset(dir / "g.json");
  CHECK(gapped.idx.num_gaps() == 9);
  CHECK(gapped.y_full_oracle.has_value());
}

TEST_CASE("generate usage errors") {
  const auto dir = scratch("generate_usage");
  CHECK(invoke({"generate", "normal", "--out", (dir / "x.json").string()}).code == 2);
  CHECK(invoke({"generate", "spiral", "--out", (dir / "x.json").string()}).code == 2);
  CHECK(invoke({"generate", "wave", "--courant", "0.9", "--out", (dir / "x.json").string()}).code == 2);
  CHECK(invoke({"no-such-command"}).code == 2);
  CHECK(invoke({}).code == 2);
  CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("reconstruct") {
  const auto dir = scratch("reconstruct");
  const auto data = normal_dataset(dir, "15", "15");

  const auto r = invoke({"reconstruct", "--data", data, "--out", (dir / "fg").string(), "--method", "fg", "--lengthscale",
                      "0.3", "--sigma2", "0.01"});
  CHECK(r.code == 0);
  const auto rep = read_json(dir / "fg" / "report.json");
  CHECK(rep["solve"]["iterations"] == 0);
  CHECK(rep["L"] == 0);
  CHECK(fs::exists(dir / "fg" / "model.json"));
  CHECK(read_vector_file(dir / "fg" / "alpha.bin").size() == 225);

  const std::vector<std::string> common{"--data", data, "--gappiness", "0.4", "--seed", "8", "--lengthscale", "0.3",
                                        "--sigma2", "0.01"};
  auto ig = common, pg = common;
  ig.insert(ig.begin(), "reconstruct");
  ig.insert(ig.end(), {"--out", (dir / "ig").string(), "--method", "ig", "--rank", "0"});
  pg.insert(pg.begin(), "reconstruct");
  pg.insert(pg.end(), {"--out", (dir / "pg").string(), "--method", "pg", "--gamma", "1e8"});
  CHECK(invoke(ig).code == 0);
  CHECK(invoke(pg).code == 0);
  const Vector a_ig = read_vector_file(dir / "ig" / "alpha.bin"), a_pg = read_vector_file(dir / "pg" / "alpha.bin");
  CHECK(relative_error(a_pg, a_ig) <= 1e-4);
  const auto ig_rep = read_json(dir / "ig" / "report.json");
  CHECK(ig_rep["L"] == 90);
  CHECK(ig_rep["config"]["solver"]["cg_tolerance"] == 1e-6);
  CHECK(ig_rep["solve"]["relative_residual"].get<double>() <= 1e-6);

  // Capped iterations make the solve fail numerically.
  auto capped = ig;
  capped.insert(capped.end(), {"--max-iters", "1", "--out", (dir / "capped").string()});
  CHECK(invoke(capped).code == 1);

  CHECK(invoke({"reconstruct", "--data", (dir / "missing.json").string(), "--out", (dir / "x").string()}).code == 2);
  CHECK(invoke({"reconstruct", "--data", data, "--out", (dir / "x").string(), "--method", "zz"}).code == 2);
}

TEST_CASE("sweep and precon-study") {
  const auto dir = scratch("sweep");
  write_text(dir / "empty.json", R"({"workload": "normal", "grid_sizes": [[8, 8]], "gappiness": []})");
  const auto e = invoke({"sweep", "--config", (dir / "empty.json").string(), "--out", (dir / "e").string()});
  CHECK(e.code == 0);
  CHECK(slurp(dir / "e" / "sweep.csv") == std::string(kReportHeader) + "\n");

  write_text(dir / "small.json", R"({"workload": "normal", "grid_sizes": [[8, 8]], "gappiness": [0.0, 0.3],
                                     "lengthscales": [0.3], "sigma2": 0.01, "seed": 2})");
  CHECK(invoke({"sweep", "--config", (dir / "small.json").string(), "--out", (dir / "a").string(), "--no-timing"}).code == 0);
  CHECK(invoke({"sweep", "--config", (dir / "small.json").string(), "--out", (dir / "b").string(), "--no-timing", "--jobs",
             "2"}).code == 0);
  CHECK(slurp(dir / "a" / "sweep.csv") == slurp(dir / "b" / "sweep.csv"));
  CHECK(fs::exists(dir / "a" / "manifest.json"));

  write_text(dir / "precon.json", R"({"grid_sizes": [[12, 12]], "lengthscales": [0.2], "repetitions": 1,
                                      "methods": [{"method": "ig", "rank": 0}, {"method": "ig", "rank": 30}]})");
  CHECK(invoke({"precon-study", "--config", (dir / "precon.json").string(), "--out", (dir / "p").string()}).code == 0);
  CHECK(fs::exists(dir / "p" / "precon_summary.csv"));
  CHECK(fs::exists(dir / "p" / "precon_rows.csv"));

  write_text(dir / "bad.json", R"({"gappiness": [0.1], "bogus": 1})");
  CHECK(invoke({"sweep", "--config", (dir / "bad.json").string(), "--out", (dir / "x").string()}).code == 2);
}

TEST_CASE("predict") {
  const auto dir = scratch("predict");
  const auto data = normal_dataset(dir, "15", "15");
  REQUIRE(invoke({"reconstruct", "--data", data, "--out", (dir / "m").string(), "--gappiness", "0.4", "--seed", "5",
               "--lengthscale", "0.3", "--sigma2", "0.01", "--tol", "1e-10"}).code == 0);

  CHECK(invoke({"predict", "--model", (dir / "m").string(), "--axis", "0.3:0.3:1", "--axis", "0.6:0.6:1", "--out",
             (dir / "grid.csv").string()}).code == 0);
  write_text(dir / "pts.txt", "0.3 0.6\n");
  CHECK(invoke({"predict", "--model", (dir / "m").string(), "--points", (dir / "pts.txt").string(), "--out",
             (dir / "pts.csv").string()}).code == 0);
  const auto g1 = csv_numbers(slurp(dir / "grid.csv")), p1 = csv_numbers(slurp(dir / "pts.csv"));
  REQUIRE(g1.size() == 1);
  REQUIRE(p1.size() == 1);
  CHECK(g1[0][0] == p1[0][0]);
  CHECK(g1[0][1] == p1[0][1]);
  CHECK(std::abs(g1[0][2] - p1[0][2]) <= 1e-12);
  CHECK(read_json(dir / "grid.csv.json")["mode"] == "grid");

  write_text(dir / "many.txt", "# test points\n0.1 0.2\n0.55,0.45\n0.9 0.05\n-0.1 1.05\n40 40\n");
  CHECK(invoke({"predict", "--model", (dir / "m").string(), "--points", (dir / "many.txt").string(), "--variance", "exact",
             "--tol", "1e-10", "--out", (dir / "var.csv").string()}).code == 0);
  CHECK(invoke({"oracle-check", "--data", data, "--gappiness", "0.4", "--seed", "5", "--lengthscale", "0.3", "--sigma2",
             "0.01", "--points", (dir / "many.txt").string(), "--out", (dir / "oracle.csv").string()}).code == 0);
  const auto got = csv_numbers(slurp(dir / "var.csv")), ref = csv_numbers(slurp(dir / "oracle.csv"));
  REQUIRE(got.size() == 5);
  REQUIRE(ref.size() == 5);
  for (std::size_t q = 0; q < 5; ++q) {
    CHECK(std::abs(got[q][2] - ref[q][2]) <= 1e-4 * std::max(1.0, std::abs(ref[q][2])));
    CHECK(std::abs(got[q][3] - ref[q][3]) <= 1e-4 * std::max(1e-2, std::abs(ref[q][3])));
  }
  CHECK(got[4][3] == doctest::Approx(1.0).epsilon(1e-6));

  CHECK(invoke({"predict", "--model", (dir / "m").string(), "--points", (dir / "many.txt").string(), "--variance",
             "nystrom", "--rank", "50", "--out", (dir / "ny.csv").string()}).code == 0);
  CHECK(read_json(dir / "ny.csv.json")["rank"] == 50);

  CHECK(invoke({"predict", "--model", (dir / "m").string(), "--out", (dir / "x.csv").string()}).code == 2);
  CHECK(invoke({"predict", "--model", (dir / "m").string(), "--axis", "0:1:3", "--out", (dir / "x.csv").string()}).code == 2);
  CHECK(invoke({"predict", "--model", data, "--axis", "0:1:3", "--axis", "0:1:3", "--out", (dir / "x.csv").string()}).code == 2);
}

TEST_CASE("oracle-check") {
  const auto dir = scratch("oracle");
  const auto data = normal_dataset(dir, "15", "15");
  const auto pass = invoke({"oracle-check", "--data", data, "--gappiness", "0.4", "--lengthscale", "0.3", "--sigma2", "0.01"});
  CHECK(pass.code == 0);
  CHECK(pass.out.find("oracle-check: pass") != std::string::npos);
  CHECK(pass.out.find("PASS fg y_Z") != std::string::npos);

  const auto none = invoke({"oracle-check", "--data", data, "--lengthscale", "0.3", "--sigma2", "0.01"});
  CHECK(none.code == 0);
  CHECK(none.out.find("short-circuit") != std::string::npos);

  const auto big = (dir / "big.json").string();
  REQUIRE(invoke({"generate", "normal", "--shape", "4097", "--out", big}).code == 0);
  const auto refused = invoke({"oracle-check", "--data", big});
  CHECK(refused.code == 2);
  CHECK(refused.out.find("refused") != std::string::npos);
  CHECK(invoke({"oracle-check", "--data", data, "--cap", "100"}).code == 2);
}

TEST_CASE("config files supply flags and explicit flags win") {
  const auto dir = scratch("config");
  const auto out = (dir / "d.json").string();
  write_text(dir / "gen.json", nlohmann::json{{"shape", {4, 5}}, {"seed", 1}, {"out", out}}.dump());
  CHECK(invoke({"generate", "normal", "--config", (dir / "gen.json").string(), "--seed", "9"}).code == 0);
  const auto j = read_json(out);
  CHECK(j["generator"]["seed"] == 9);
  CHECK(j["generator"]["shape"] == nlohmann::json{4, 5});

  write_text(dir / "bad.json", "[1, 2]");
  CHECK(invoke({"generate", "normal", "--config", (dir / "bad.json").string()}).code == 2);
  CHECK(invoke({"generate", "normal", "--config", (dir / "nope.json").string()}).code == 2);
}
