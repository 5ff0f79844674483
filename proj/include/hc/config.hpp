#pragma once

// Run configuration: one versioned JSON document driving every CLI verb.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hc/verify.hpp"

namespace hc {

inline constexpr int kConfigVersion = 1;

struct ContinuationConfig {
  std::vector<double> times{0.1, 0.3, 0.5, 0.7, 0.9};  // fractions of the horizon
  std::size_t n_inner = 2000;
};

struct TouchingConfig {
  std::size_t level = 0;  // 0-based
  std::size_t samples = 100;
};

struct VerifyConfig {
  SimulationConfig sim;  // seed and path counts for the gates
  double n_se = 3.0;
  bool default_deviations = true;
  std::vector<DeviationStrategy> deviations;
  bool mutate_y_sign = false;
  TouchingConfig touching;
  std::optional<ContinuationConfig> continuation;
  std::optional<ConvergenceLadders> convergence;
};

struct RunConfig {
  HierarchySpec hierarchy;
  GridConfig envelope;
  HjbGrid hjb;
  SimulationConfig simulation;
  VerifyConfig verification;
  std::filesystem::path output_dir = "out";
  std::uint64_t hash = 0;  // FNV-1a of the canonical JSON form
};

// Field-path validation errors ("hjb.w_min: ...") on malformed input.
// Relative file references resolve against `base_dir`.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = ".");
RunConfig load_run_config(const std::filesystem::path& file);

}  // namespace hc
