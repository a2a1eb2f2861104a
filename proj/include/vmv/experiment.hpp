#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "vmv/coefficients.hpp"
#include "vmv/config.hpp"
#include "vmv/kernel.hpp"

namespace vmv {

/// Instantiate a kernel block. Tabulated paths are read relative to the
/// working directory.
Kernel build_kernel(const KernelSpec& spec);

/// Instantiate a model block. Only built-in models are registered.
CoefficientSet build_model(const ModelSpec& spec);

/// Hex FNV-1a hash of the canonical config text with the output directory
/// and worker count blanked (neither changes any number).
std::string config_hash(const ExperimentConfig& config);

/// Manifest text: the canonical config followed by a [manifest] section.
/// It parses as a config, so a run can be repeated from it.
std::string manifest_text(const ExperimentConfig& config, const std::vector<std::string>& files);

struct ExperimentResult {
  std::filesystem::path output;
  std::vector<std::string> files;
  std::vector<std::pair<std::string, std::string>> summary;  // headline key = value pairs
};

/// Run one experiment and write its artifacts into `config.output`. Files go
/// to a sibling temporary directory first and are moved into place only
/// when every step succeeded. An existing output directory is replaced only
/// if it is empty or holds a previous manifest.
ExperimentResult run_experiment(const ExperimentConfig& config);

}  // namespace vmv
