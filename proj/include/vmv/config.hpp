#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vmv/errors.hpp"

namespace vmv {

/// Parsed value of the config language: number, string, boolean, list or
/// inline table. Numbers keep their source text so 64-bit integers survive.
struct ConfigValue {
  enum class Kind { number, string, boolean, list, table };
  Kind kind = Kind::number;
  double number = 0.0;
  std::string text;  // string contents, or the number's source token
  bool boolean = false;
  std::vector<ConfigValue> items;       // list elements, or table values
  std::vector<std::string> keys;        // table keys, parallel to items
  int line = 0;
  int column = 0;

  const ConfigValue* find(const std::string& key) const;
};

struct ConfigEntry {
  std::string key;
  ConfigValue value;
};

struct ConfigSection {
  std::string name;
  int line = 0;
  std::vector<ConfigEntry> entries;
  const ConfigValue* find(const std::string& key) const;
};

/// Whole document. Keys before the first header live in a section named "".
struct ConfigDocument {
  std::vector<ConfigSection> sections;
  const ConfigSection* find(const std::string& name) const;
};

/// Every problem found in one document, each prefixed by a line/column or
/// a field path.
class ConfigError : public Error {
public:
  explicit ConfigError(std::vector<std::string> messages);
  const std::vector<std::string>& messages() const { return messages_; }

private:
  std::vector<std::string> messages_;
};

/// Throws ConfigError listing all syntax errors.
ConfigDocument parse_config(const std::string& text);

struct KernelSpec {
  std::string family = "constant";
  double c = 1.0;
  double hurst = 0.5;
  double scale = 1.0;
  std::string path;  // tabulated
};

struct ModelSpec {
  std::string name = "linear_mean_field";
  std::size_t d = 1;
  std::size_t m = 1;
  std::vector<double> A{0.0};       // d x d
  std::vector<double> B{0.0};       // d x d
  std::vector<double> sigma0{1.0};  // d x m
  std::vector<std::vector<double>> sigma1;  // empty or d blocks of d x m
};

/// Target path for rate evaluations.
struct TargetSpec {
  std::string type = "linear";  // linear | exp | control | file
  double slope = 1.0;           // linear: slope * t
  double amplitude = 1.0;       // exp: amplitude * (e^{rate t} - 1)
  double rate = 1.0;
  double control = 1.0;         // control: path generated by the constant control
  std::string path;             // file: t,x1..xd
};

struct ExperimentConfig {
  std::string kind;
  std::string output = "vmv-out";
  std::size_t workers = 0;  // 0 = all available

  double horizon = 1.0;
  std::size_t n_steps = 100;

  ModelSpec model;
  KernelSpec k1, k2;
  std::optional<KernelSpec> kc;  // default: K1 for ldp kinds, K2 for mdp kinds

  std::size_t n_particles = 1000;
  std::uint64_t seed = 0;
  std::vector<double> eps{0.1};
  double h_beta = 0.25;
  std::vector<double> p{2.0};
  std::vector<double> xi{1.0};
  std::vector<double> xi_spread;
  double memory_limit_mb = 4096.0;

  // simulate
  bool write_ensemble = false;
  // limit
  std::string limit_method = "stepping";
  // resolvent
  std::string resolvent_kernel = "K1";
  std::string resolvent_method = "direct";
  std::size_t resolvent_n_max = 200;
  double resolvent_tol = 1e-10;
  std::size_t resolvent_stride = 1;
  // kernel-probe
  std::string probe_kernel = "K1";
  double probe_t = 0.5;
  std::vector<double> probe_h{1e-6, 3e-6, 1e-5, 3e-5, 1e-4};
  // rates
  std::string rate_mode = "ldp";  // rate-min / tail-probe
  std::string rate_solver = "triangular";
  double lambda_reg = 0.0;
  TargetSpec target;
  std::vector<double> event_normal{1.0};
  double event_level = 1.0;
  std::size_t max_iter = 500;
};

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"simulate",  "limit",     "clt",
                                              "ldp-rate",  "mdp-rate",  "rate-min",
                                              "tail-probe", "resolvent", "kernel-probe"};
  return kinds;
}

/// Parse and validate a whole document. All problems are reported together
/// in one ConfigError.
ExperimentConfig validate_config(const std::string& text);

/// As validate_config, with the experiment kind supplied by the caller (a CLI
/// subcommand). A different kind inside the document is an error.
ExperimentConfig validate_config_for(const std::string& text, const std::string& kind);

/// Canonical rendering; validate_config(render_config(c)) == c field by field.
std::string render_config(const ExperimentConfig& config);

}  // namespace vmv
