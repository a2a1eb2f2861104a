#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "doctest.h"
#include "vmv/config.hpp"
#include "vmv/csv.hpp"
#include "vmv/experiment.hpp"

using namespace vmv;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case, removed on scope exit.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& tag) {
    dir = fs::temp_directory_path() / ("vmv-test-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name, std::ios::binary) << text;
    return dir / name;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + std::string(VMV_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> config_errors(const std::string& text) {
  try {
    validate_config(text);
  } catch (const ConfigError& e) {
    return e.messages();
  }
  return {};
}

bool any_contains(const std::vector<std::string>& v, const std::string& needle) {
  for (const auto& s : v)
    if (s.find(needle) != std::string::npos) return true;
  return false;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

const char* kSimulate = R"(
[experiment]
kind = "simulate"

[grid]
T = 1
n_steps = 20

[model]
A = [[1]]
B = [[0.5]]
sigma0 = [[1]]

[kernels]
K1 = {family = "constant", c = 1}
K2 = {family = "fbm", H = 0.7}

[run]
N = 64
seed = 18446744073709551615
eps = [0.1, 0.01]
p = [2, 4]
)";

}  // namespace

TEST_CASE("minimal config echoes defaults") {
  const auto cfg = validate_config("[experiment]\nkind = \"simulate\"\n");
  CHECK(cfg.kind == "simulate");
  CHECK(cfg.n_steps == 100);
  CHECK(cfg.horizon == 1.0);
  CHECK(cfg.n_particles == 1000);
  CHECK(cfg.eps == std::vector<double>{0.1});
  CHECK(cfg.k1.family == "constant");
  CHECK_FALSE(cfg.kc.has_value());
}

TEST_CASE("validation reports field-precise errors all at once") {
  const auto errs = config_errors(R"(
[experiment]
kind = "simulate"
[run]
eps = [1.5]
N = 0
[kernels]
K1 = {family = "foo"}
)");
  CHECK(errs.size() >= 3);
  CHECK(any_contains(errs, "run.eps[0] must lie in (0,1]"));
  CHECK(any_contains(errs, "run.N"));
  CHECK(any_contains(errs, "kernels.K1.family"));
  CHECK(any_contains(errs, "constant, power, fbm, tabulated"));
}

TEST_CASE("syntax errors carry line and column") {
  const auto errs = config_errors("[experiment]\nkind = \"simulate\n[grid]\nT = = 2\n");
  REQUIRE_FALSE(errs.empty());
  CHECK(any_contains(errs, "line 2"));
  CHECK(any_contains(errs, "line 4"));
}

TEST_CASE("unknown sections and keys are rejected") {
  const auto errs = config_errors("[experiment]\nkind = \"limit\"\n[grid]\nTT = 1\n[bogus]\nx = 1\n");
  CHECK(any_contains(errs, "grid.TT"));
  CHECK(any_contains(errs, "bogus"));
}

TEST_CASE("render and validate round-trip") {
  const auto cfg = validate_config(kSimulate);
  CHECK(cfg.seed == 18446744073709551615ULL);
  const std::string text = render_config(cfg);
  const auto again = validate_config(text);
  CHECK(render_config(again) == text);
  CHECK(again.seed == cfg.seed);
  CHECK(again.eps == cfg.eps);
  CHECK(again.k2.family == "fbm");
  CHECK(again.k2.hurst == 0.7);
  CHECK(config_hash(cfg) == config_hash(again));

  auto moved = cfg;
  moved.output = "elsewhere";
  moved.workers = 3;
  CHECK(config_hash(moved) == config_hash(cfg));
  moved.seed = 1;
  CHECK(config_hash(moved) != config_hash(cfg));
}

TEST_CASE("subcommand kind must agree with the document") {
  CHECK_NOTHROW(validate_config_for("[experiment]\nkind = \"limit\"\n", "limit"));
  CHECK_NOTHROW(validate_config_for("[grid]\nT = 2\n", "limit"));
  CHECK_THROWS_AS(validate_config_for("[experiment]\nkind = \"limit\"\n", "clt"), ConfigError);
}

TEST_CASE("number formatting and hashing") {
  CHECK(format_number(0.1) == "0.10000000000000001");
  CHECK(format_number(2.0) == "2");
  CHECK(format_number(std::nan("")) == "nan");
  CHECK(format_number(-INFINITY) == "-inf");
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  std::ostringstream out;
  CsvWriter w(out);
  w.header({"a", "b"});
  w.field(1.5).field(std::uint64_t{7});
  w.end_row();
  CHECK(out.str() == "a,b\n1.5,7\n");
}

TEST_CASE("resolvent experiment reproduces e at (1, 0)") {
  Scratch s("resolvent");
  auto cfg = validate_config(R"(
[experiment]
kind = "resolvent"
[grid]
T = 1
n_steps = 1000
[kernels]
K1 = {family = "constant", c = 1}
[resolvent]
stride = 50
)");
  cfg.output = (s.dir / "out").string();
  const auto res = run_experiment(cfg);
  CHECK(fs::exists(s.dir / "out" / "manifest"));
  bool found = false;
  for (const auto& row : read_csv(s.dir / "out" / "resolvent.csv")) {
    if (row.size() == 3 && row[0] == "1" && row[1] == "0") {
      found = true;
      CHECK(std::abs(std::stod(row[2]) - std::exp(1.0)) / std::exp(1.0) <= 0.02);
    }
  }
  CHECK(found);
  CHECK_FALSE(res.files.empty());
}

TEST_CASE("clt experiment writes one row per eps") {
  Scratch s("clt");
  auto cfg = validate_config(R"(
[experiment]
kind = "clt"
[grid]
n_steps = 20
[model]
A = [[1]]
B = [[0.5]]
sigma0 = [[1]]
sigma1 = [[[0.5]]]
[run]
N = 200
eps = [0.1, 0.01, 0.001, 0.0001]
p = [2, 4]
)");
  cfg.output = (s.dir / "out").string();
  run_experiment(cfg);
  const auto rows = read_csv(s.dir / "out" / "clt.csv");
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == std::vector<std::string>{"eps", "gap_p2", "gap_p4", "stderr_p2", "stderr_p4"});
  CHECK(fs::exists(s.dir / "out" / "clt_regression.txt"));
}

TEST_CASE("every experiment kind runs from a small config") {
  Scratch s("kinds");
  const std::string base = R"(
[grid]
n_steps = 20
[model]
A = [[0.5]]
B = [[0.2]]
sigma0 = [[1]]
[kernels]
K1 = {family = "constant", c = 1}
K2 = {family = "power", H = 0.7}
[run]
N = 100
eps = [0.5, 0.25]
[rate]
event = {normal = [1], level = 3}
max_iter = 50
)";
  for (const auto& kind : experiment_kinds()) {
    auto cfg = validate_config("[experiment]\nkind = \"" + kind + "\"\n" + base);
    cfg.output = (s.dir / kind).string();
    CAPTURE(kind);
    const auto res = run_experiment(cfg);
    CHECK(fs::exists(s.dir / kind / "manifest"));
    for (const auto& f : res.files) CHECK(fs::exists(s.dir / kind / f));
  }
}

TEST_CASE("CLI exit codes") {
  Scratch s("cli");
  const auto good = s.write("good.cfg", kSimulate);
  CHECK(run_cli("validate --config " + good.string()) == 0);
  CHECK(run_cli("simulate --config " + good.string() + " --out " + (s.dir / "a").string()) == 0);
  CHECK(fs::exists(s.dir / "a" / "summary.csv"));

  // N = 0: validation error and nothing written.
  const auto zero = s.write("zero.cfg", "[experiment]\nkind = \"simulate\"\n[run]\nN = 0\n");
  CHECK(run_cli("run --config " + zero.string() + " --out " + (s.dir / "z").string()) == 1);
  CHECK_FALSE(fs::exists(s.dir / "z"));
  CHECK(run_cli("simulate --config " + (s.dir / "missing.cfg").string()) == 1);
  CHECK(run_cli("simulate") == 1);
  CHECK(run_cli("simulate --config " + good.string() + " --out " + (s.dir / "e").string(),
                "VMV_WORKERS=abc") == 1);

  // Budget guard refuses before allocating.
  const auto big = s.write("big.cfg", std::string(kSimulate) + "memory_limit_mb = 0.001\n");
  CHECK(run_cli("run --config " + big.string() + " --out " + (s.dir / "b").string()) == 3);
  CHECK_FALSE(fs::exists(s.dir / "b"));

  // Runtime failure (explosive drift) leaves no partial output behind.
  const auto boom = s.write("boom.cfg",
                            "[experiment]\nkind = \"limit\"\n[grid]\nT = 1\nn_steps = 50\n"
                            "[model]\nA = [[60]]\n");
  CHECK(run_cli("run --config " + boom.string() + " --out " + (s.dir / "x").string()) == 2);
  CHECK_FALSE(fs::exists(s.dir / "x"));
  for (const auto& entry : fs::directory_iterator(s.dir))
    CHECK(entry.path().filename().string().rfind(".vmv-tmp", 0) != 0);
}

TEST_CASE("existing output directories are only replaced when they hold a manifest") {
  Scratch s("replace");
  auto cfg = validate_config(kSimulate);
  cfg.output = (s.dir / "keep").string();
  fs::create_directories(s.dir / "keep");
  s.write("keep/notes.txt", "precious");
  CHECK_THROWS(run_experiment(cfg));
  CHECK(slurp(s.dir / "keep" / "notes.txt") == "precious");

  cfg.output = (s.dir / "ours").string();
  run_experiment(cfg);
  CHECK_NOTHROW(run_experiment(cfg));  // previous manifest: replaceable
}

TEST_CASE("manifest rerun reproduces artifacts bitwise at any worker count") {
  Scratch s("manifest");
  const auto cfgp = s.write("sim.cfg", kSimulate);
  REQUIRE(run_cli("run --config " + cfgp.string() + " --out " + (s.dir / "a").string() + " --workers 1") == 0);
  const auto manifest = s.dir / "a" / "manifest";
  const std::string mtext = slurp(manifest);
  CHECK(mtext.find("[manifest]") != std::string::npos);
  CHECK(mtext.find("config_hash") != std::string::npos);
  REQUIRE(run_cli("run --config " + manifest.string() + " --out " + (s.dir / "b").string() + " --workers 4") == 0);
  REQUIRE(run_cli("run --config " + manifest.string() + " --out " + (s.dir / "c").string(),
                  "VMV_WORKERS=2") == 0);
  CHECK(slurp(s.dir / "a" / "summary.csv") == slurp(s.dir / "b" / "summary.csv"));
  CHECK(slurp(s.dir / "a" / "summary.csv") == slurp(s.dir / "c" / "summary.csv"));
  // Manifests differ only in the output directory they record.
  const auto rerun = validate_config(slurp(s.dir / "b" / "manifest"));
  CHECK(config_hash(rerun) == config_hash(validate_config(mtext)));
}
