#pragma once

#include <cstdint>
#include <string>

#include "ppsim/attacker_pp.hpp"
#include "ppsim/recovery.hpp"
#include "ppsim/sim_kernel.hpp"
#include "ppsim/victim_rsa.hpp"

namespace ppsim {

enum class SetSource { scan, oracle, fixed };

struct AttackSection {
  AttackConfig attacker;
  unsigned n_traces = 11;
  unsigned lookahead = 20;
  SetSource set_source = SetSource::scan;
  std::uint32_t monitor_set = 0;    // fixed
  std::uint32_t monitor_slice = 0;  // fixed
  int oracle_line = -1;             // oracle; -1 picks the middle buffer line
};

struct OutputSection {
  std::string out_dir = "out";
  bool write_traces = true;
};

struct ExperimentConfig {
  KernelConfig kernel;
  VictimConfig victim;
  AttackSection attack;
  RecoveryConfig recovery;
  OutputSection output;

  void validate() const;
};

std::string to_string(SetSource s);

/// Parses a JSON config. Missing keys keep their defaults, unknown keys
/// are rejected.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg, int indent = 2);

std::string noise_to_json(const NoiseConfig& n, int indent = 2);
NoiseConfig noise_from_json(const std::string& text);

/// FNV-1a over the canonical JSON form, output section excluded.
std::uint64_t config_digest(const ExperimentConfig& cfg);
std::string digest_hex(std::uint64_t d);

}  // namespace ppsim
