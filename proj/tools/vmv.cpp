#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <omp.h>

#include "CLI11.hpp"
#include "vmv/config.hpp"
#include "vmv/experiment.hpp"

namespace {

enum Exit { kOk = 0, kValidation = 1, kRuntime = 2, kBudget = 3 };

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw vmv::ConfigError({"cannot read config file " + path});
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// --workers beats VMV_WORKERS beats the config value; 0 means all cores.
int resolve_workers(int cli, std::size_t from_config) {
  if (cli > 0) return cli;
  if (const char* env = std::getenv("VMV_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
    throw vmv::ConfigError({"VMV_WORKERS must be a positive integer, got \"" + std::string(env) + "\""});
  }
  if (from_config > 0) return static_cast<int>(from_config);
  return omp_get_num_procs();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volterra McKean-Vlasov simulation and rate-function toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(VMV_VERSION));

  std::string config_path, out_dir;
  int workers = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config,-c", config_path, "experiment config file")->required();
    sub->add_option("--out,-o", out_dir, "output directory (overrides experiment.output)");
    sub->add_option("--workers,-w", workers, "worker threads (overrides VMV_WORKERS)")
        ->check(CLI::PositiveNumber);
    sub->add_option_function<std::uint64_t>(
        "--seed,-s", [&](const std::uint64_t& s) { seed = s; seed_given = true; }, "root seed override");
  };

  std::vector<std::pair<CLI::App*, std::string>> runners;
  for (const auto& kind : vmv::experiment_kinds())
    runners.emplace_back(app.add_subcommand(kind, "run a " + kind + " experiment"), kind);
  runners.emplace_back(app.add_subcommand("run", "run the experiment kind named in the config"), "");
  CLI::App* validate = app.add_subcommand("validate", "check a config and print its canonical form");
  for (auto& [sub, kind] : runners) add_common(sub);
  add_common(validate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    const std::string text = read_file(config_path);
    std::string kind;
    for (auto& [sub, k] : runners)
      if (sub->parsed()) kind = k;
    vmv::ExperimentConfig cfg = kind.empty() ? vmv::validate_config(text) : vmv::validate_config_for(text, kind);
    if (!out_dir.empty()) cfg.output = out_dir;
    if (seed_given) cfg.seed = seed;

    if (validate->parsed()) {
      std::cout << vmv::render_config(cfg);
      return kOk;
    }
    const int threads = resolve_workers(workers, cfg.workers);
    omp_set_num_threads(threads);

    const auto result = vmv::run_experiment(cfg);
    std::cout << "kind = " << cfg.kind << "\n"
              << "output = " << result.output.string() << "\n"
              << "workers = " << threads << "\n"
              << "config_hash = " << vmv::config_hash(cfg) << "\n";
    for (const auto& [k, v] : result.summary) std::cout << k << " = " << v << "\n";
    return kOk;
  } catch (const vmv::ConfigError& e) {
    std::cerr << "vmv: " << e.what() << "\n";
    return kValidation;
  } catch (const vmv::BudgetError& e) {
    std::cerr << "vmv: budget guard: " << e.what() << "\n";
    return kBudget;
  } catch (const std::exception& e) {
    std::cerr << "vmv: " << e.what() << "\n";
    return kRuntime;
  }
}
