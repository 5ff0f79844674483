#pragma once

// Artifact formats: contract cache (JSON), value function (CSV and a
// versioned binary cache), and the shared header carried by every file.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

#include "hc/hjb.hpp"
#include "json.hpp"

namespace hc {

// Shortest round-trip decimal form; identical bytes on every run.
std::string format_double(double x);

std::uint64_t fnv1a(std::string_view bytes);
std::string hash_hex(std::uint64_t h);

struct ArtifactHeader {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string version = HC_VERSION;

  nlohmann::json to_json() const;
  // "# key=value" lines for CSV files.
  void write_csv_comment(std::ostream& os) const;
};

ArtifactHeader header_from_json(const nlohmann::json& j);

nlohmann::json spec_to_json(const HierarchySpec& spec);
HierarchySpec spec_from_json(const nlohmann::json& j, const std::string& path = "hierarchy");

nlohmann::json contract_to_json(const AggregateContract& agg);
AggregateContract contract_from_json(const nlohmann::json& j);

void write_value_function_csv(std::ostream& os, const ValueFunction& vf, const ArtifactHeader& h);
void write_value_function_binary(std::ostream& os, const ValueFunction& vf, const ArtifactHeader& h);
ValueFunction read_value_function_binary(std::istream& is, ArtifactHeader* h = nullptr);

// Concave envelope of Player 1 as CSV: y, phi_hat, phi, touching, slope_lo, slope_hi, psi...
void write_phi1_csv(std::ostream& os, const AggregateContract& agg, const ArtifactHeader& h);

}  // namespace hc
