#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ppsim/recovery.hpp"
#include "ppsim/sim_kernel.hpp"
#include "ppsim/trace.hpp"
#include "ppsim/victim_rsa.hpp"

namespace ppsim {

struct AttackConfig {
  std::uint64_t memory_base = 0x8a3f5000;
  std::uint64_t memory_size = 32ull << 20;
  unsigned hammer_rounds = 8;
  unsigned rate_trials = 200;
  double rate_threshold = 0.99;
  unsigned calibration_probes = 32;
  double monitor_seconds = 0.21;
  Cycles tail_margin = 2'000'000;
  double scan_range_factor = 1.5;  // x expected exponentiation time
  double scan_energy_gate = 16.0;  // in threshold^2 / window units
  std::string scan_order = "random";  // random | sequential
  std::string scan_mode = "cluster";  // first | cluster | full
  double threshold_override = 0.0;    // cycles; 0 calibrates per run

  void validate() const;
};

struct EvictionSet {
  std::vector<PhysicalAddress> addresses;
  CacheLocation target_set;
  PhysicalAddress target;
  unsigned rate_evaluations = 0;
  Cycles build_cycles = 0;
};

struct ProbeResult {
  Ticks ticks = 0;
  Cycles latency = 0;  // measured ticks converted to cycles
  Cycles true_cycles = 0;
  unsigned misses = 0;
};

struct ProbeCalibration {
  Cycles baseline = 0;
  Cycles miss_penalty = 0;
  double threshold = 0.0;
};

struct MonitorStats {
  std::uint64_t probes = 0;
  std::uint64_t skipped_probes = 0;
  double mean_probe_cycles = 0.0;
  double median_probe_cycles = 0.0;
  Cycles monitored_cycles = 0;
  Cycles victim_mult_cycles = 0;
  Cycles victim_exp_cycles = 0;  // true time between exponent start and end, with delays
};

using VictimFactory = std::function<std::unique_ptr<VictimProcess>(Cycles start)>;

struct MonitorResult {
  RawTrace trace;
  MonitorStats stats;
  ProbeCalibration calibration;
};

struct ScanEntry {
  CacheLocation location;
  bool matched = false;
  std::size_t peaks = 0;
  PartialKey partial;
  double median_distance = 0.0;
};

struct ScanResult {
  std::vector<ScanEntry> matches;        // sorted by set index
  std::vector<CacheLocation> ranked;     // interior matches, most consistent first
  std::vector<double> ranked_distance;
  unsigned trials = 0;
  unsigned trials_to_first_hit = 0;
  double simulated_seconds = 0.0;
  double seconds_to_first_hit = 0.0;
};

class Attacker {
 public:
  Attacker(Kernel& k, const AttackConfig& cfg);

  /// Row-conflict scan over the first 4 MB; returns the address of the
  /// higher pair member (a 4 MB boundary). Cached after the first call.
  PhysicalAddress find_border();
  std::vector<std::pair<std::uint64_t, double>> border_profile();

  EvictionSet build_for_target(PhysicalAddress target);
  /// Eviction sets for every slice reachable at this set index.
  std::vector<EvictionSet> eviction_sets_for_index(std::uint32_t set_index);
  EvictionSet generate_eviction_set(CacheLocation set);

  double eviction_rate(const std::vector<PhysicalAddress>& eset, PhysicalAddress target, unsigned trials);
  bool reaches_rate(const std::vector<PhysicalAddress>& eset, PhysicalAddress target);

  ProbeResult prime_probe(const EvictionSet& es);
  ProbeCalibration calibrate(const EvictionSet& es);

  /// Prime+Probe loop over one victim signature.
  MonitorResult monitor(const EvictionSet& es, const VictimFactory& victim, const TraceMeta& meta_template);

  ScanResult scan_vulnerable_sets(const VictimFactory& victim, unsigned key_bits, double expected_mult_cycles,
                                  std::uint64_t seed, const RecoveryConfig& rcfg);

  const AttackConfig& config() const { return cfg_; }
  Kernel& kernel() { return k_; }

 private:
  PhysicalAddress mem(std::uint64_t off) const { return PhysicalAddress{cfg_.memory_base + off}; }
  bool evicted_once(const std::vector<PhysicalAddress>& eset, const std::vector<std::size_t>& order,
                    PhysicalAddress target);

  Kernel& k_;
  AttackConfig cfg_;
  std::optional<PhysicalAddress> border_;
};

/// Scan rule: the rightmost strong peak is preceded by another strong peak
/// within `range` ticks.
bool matches_victim_pattern(const std::vector<Peak>& peaks, double gate, double range);

}  // namespace ppsim
