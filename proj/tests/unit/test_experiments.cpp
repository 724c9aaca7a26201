#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <json.hpp>

#include "dbmt/error.hpp"
#include "dbmt/experiments.hpp"

using namespace dbmt;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::string header(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

/// Every artifact except timing.json must match byte for byte.
void check_identical(const fs::path& a, const fs::path& b) {
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    const auto name = e.path().filename();
    if (name == "timing.json") continue;
    REQUIRE(fs::exists(b / name));
    CAPTURE(name.string());
    CHECK(slurp(e.path()) == slurp(b / name));
    ++compared;
  }
  CHECK(compared > 1);
}

void run_twice(void (*cmd)(const Config&, const RunOptions&), const std::string& text, const fs::path& root) {
  for (const char* sub : {"a", "b"}) {
    RunOptions o;
    o.out_dir = root / sub;
    o.threads = sub[0] == 'a' ? 1 : 3;
    cmd(Config::parse(text), o);
  }
  check_identical(root / "a", root / "b");
}

const char* kToy =
    "[sampler]\nT = 64\npaths = 300\nseed = 4\n"
    "[toy]\ngrid_times = 9\ngrid_points = 801\ngrid_x_min = -5\ngrid_x_max = 5\n";

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("builtin datasets") {
  const Dataset toy = toy_dataset();
  CHECK(toy.size() == 3);
  CHECK(toy.samples()(0, 0) == -2.0);
  CHECK(toy.samples()(2, 0) == 2.0);
  const Dataset rings = rings_dataset(2, 8);
  CHECK(rings.size() == 16);
  CHECK(rings.dim() == 2);
  for (Eigen::Index i = 0; i < 16; ++i) CHECK(rings.samples().row(i).norm() == doctest::Approx(i < 8 ? 1.0 : 2.0));
  CHECK_THROWS_AS(builtin_dataset("cifar"), ConfigError);
}

TEST_CASE("toy run: determinism, schema and marginal grid") {
  TempDir tmp("dbmt_exp_toy");
  run_twice(cmd_toy, kToy, tmp.path);
  const fs::path a = tmp.path / "a";
  const auto tm = read_json(a / "transition_matrix.json");
  CHECK(tm["schema_version"] == kSchemaVersion);
  REQUIRE(tm["couplings"].size() == 2);
  for (const auto& c : tm["couplings"]) {
    CHECK(c["joint"].size() == 3);
    CHECK(c["assigned"].get<int>() + c["unassigned"].get<int>() == 300);
  }
  CHECK(read_json(a / "timing.json")["schema_version"] == kSchemaVersion);
  CHECK(header(a / "sample_paths.csv") == "coupling,path,t,x");
  CHECK(header(a / "marginal_density_grid.csv") == "coupling,t,x,density");
  CHECK(fs::exists(a / "resolved_config.ini"));

  // Trapezoid rule over each (coupling, t) slice.
  std::ifstream in(a / "marginal_density_grid.csv");
  std::string line;
  std::getline(in, line);
  std::map<std::pair<std::string, std::string>, std::vector<std::pair<double, double>>> slices;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string c, t, x, p;
    std::getline(ss, c, ',');
    std::getline(ss, t, ',');
    std::getline(ss, x, ',');
    std::getline(ss, p, ',');
    slices[{c, t}].emplace_back(std::stod(x), std::stod(p));
  }
  CHECK(slices.size() == 18);
  for (const auto& [key, pts] : slices) {
    double mass = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      mass += 0.5 * (pts[i].second + pts[i - 1].second) * (pts[i].first - pts[i - 1].first);
    CAPTURE(key.first);
    CAPTURE(key.second);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("inspect-weights run") {
  TempDir tmp("dbmt_exp_weights");
  run_twice(cmd_inspect_weights,
            "[sampler]\nsweep = 200,50\npaths = 20\nrecord_paths = 2\n[dataset]\npoints_per_ring = 6\n", tmp.path);
  const fs::path a = tmp.path / "a";
  const auto s = read_json(a / "weights_summary.json");
  CHECK(s["schema_version"] == kSchemaVersion);
  REQUIRE(s["runs"].size() == 2);
  for (const auto& r : s["runs"]) CHECK(r["max_weight_sum_error"].get<double>() < 1e-12);
  CHECK(header(a / "weights.csv").rfind("T,path,step,t,w_1,", 0) == 0);
  CHECK(header(a / "denoised.csv").rfind("T,path,step,t,e_1", 0) == 0);
  CHECK(header(a / "states.csv").rfind("T,path,step,t,x_1", 0) == 0);
}

TEST_CASE("train then sample with the learned drift") {
  TempDir tmp("dbmt_exp_train");
  const std::string train_cfg =
      "[training]\nsteps = 50\nbatch_size = 16\nhidden = 8\n[coupling]\nkind = delta\nx0 = 0\n";
  run_twice(cmd_train, train_cfg, tmp.path);
  const fs::path a = tmp.path / "a";
  const auto ts = read_json(a / "train_summary.json");
  CHECK(ts["schema_version"] == kSchemaVersion);
  CHECK(ts["steps"] == 50);
  CHECK(header(a / "loss_curve.csv") == "step,loss");

  const std::string sample_cfg = train_cfg + "[sampler]\ndrift = learned\nT = 32\npaths = 40\ncheckpoint = " +
                                 (a / "model.bin").string() + "\n";
  TempDir s("dbmt_exp_sample");
  run_twice(cmd_sample, sample_cfg, s.path);
  const auto ss = read_json(s.path / "a" / "sample_summary.json");
  CHECK(ss["schema_version"] == kSchemaVersion);
  CHECK(ss["atom_frequencies"].size() == 3);
  CHECK(header(s.path / "a" / "terminal.csv") == "path,x0_1,x_1,e_1");
  CHECK(header(s.path / "a" / "paths.csv") == "path,t,x_1");

  RunOptions o;
  o.out_dir = s.path / "bad";
  CHECK_THROWS_AS(cmd_sample(Config::parse(train_cfg + "[sampler]\ndrift = magic\n"), o), ConfigError);
  CHECK_THROWS_AS(cmd_sample(Config::parse(train_cfg + "[sampler]\ndirection = dtrt\ndrift = learned\ncheckpoint = " +
                                           (a / "model.bin").string() + "\n"),
                             o),
                  ConfigError);
}

TEST_CASE("gp and variogram runs") {
  TempDir tmp("dbmt_exp_gp");
  run_twice(cmd_gp, "[gp]\nheight = 8\nwidth = 8\nsizes = 8,16\ntiming_samples = 2\n", tmp.path);
  const fs::path a = tmp.path / "a";
  const auto g = read_json(a / "gp_summary.json");
  CHECK(g["schema_version"] == kSchemaVersion);
  for (const char* f : {"white", "plane", "torus"}) {
    CHECK(fs::file_size(a / (std::string("gp_") + f + ".bin")) == 64 * 8);
    CHECK(fs::exists(a / (std::string("gp_") + f + ".csv")));
  }
  const auto t = read_json(a / "timing.json");
  CHECK(t["schema_version"] == kSchemaVersion);

  TempDir v("dbmt_exp_vario");
  run_twice(cmd_variogram, "[variogram]\nsynthetic_count = 3\nheight = 16\nwidth = 16\n", v.path);
  const auto vj = read_json(v.path / "a" / "variogram.json");
  CHECK(vj["schema_version"] == kSchemaVersion);
  CHECK(vj.contains("median_length_scale"));
  CHECK(vj.contains("fraction_exponential_better"));
}

}  // TEST_SUITE
