#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ppsim/cache_sim.hpp"
#include "ppsim/dram_sim.hpp"
#include "ppsim/rng.hpp"

namespace ppsim {

class VictimProcess;

struct NoiseConfig {
  double interrupt_rate = 0.75;  // events per million cycles
  Cycles interrupt_min = 10'000;
  Cycles interrupt_max = 100'000;
  double victim_desched_prob = 0.10;
  double attacker_desched_prob = 0.60;
  double both_desched_prob = 0.30;
  double spurious_miss_rate = 3.2e-6;  // per attacker access
  std::uint64_t rng_seed = 0;       // 0: derived from the experiment seed

  void validate() const;
  bool silent() const { return interrupt_rate <= 0.0 && spurious_miss_rate <= 0.0; }
  static NoiseConfig zero();
};

struct KernelConfig {
  CacheConfig cache;
  DramMapping mapping = DramMapping::skylake_two_dimm();
  DramTiming dram;
  NoiseConfig noise;
  double counter_resolution = 0.87;  // true cycles per counter increment
  double cpu_hz = 2.3e9;
  bool fast_forward = true;

  void validate() const;
};

enum class Entity { victim, attacker };

enum class InterruptTarget : std::uint8_t { none, victim, attacker, both };

struct InterruptEvent {
  Cycles start = 0;
  Cycles duration = 0;
  InterruptTarget target = InterruptTarget::none;

  bool hits_victim() const { return target == InterruptTarget::victim || target == InterruptTarget::both; }
  bool hits_attacker() const {
    return target == InterruptTarget::attacker || target == InterruptTarget::both;
  }
};

/// Poisson stream of interrupts in true time, generated on demand so that
/// the sequence is independent of how far each consumer has looked ahead.
class InterruptSource {
 public:
  InterruptSource(const NoiseConfig& noise, std::uint64_t seed);

  /// Event i, generating more as needed. Returns nullptr past the end of
  /// a scripted schedule or when the rate is zero.
  const InterruptEvent* at(std::size_t i);
  void script(std::vector<InterruptEvent> events);
  bool scripted() const { return scripted_; }

 private:
  NoiseConfig noise_;
  Rng rng_;
  std::vector<InterruptEvent> events_;
  Cycles last_start_ = 0;
  bool scripted_ = false;
};

struct StepResult {
  Cycles latency = 0;
  Cycles descheduled_for = 0;
  bool hit = false;
};

struct KernelStats {
  std::uint64_t attacker_accesses = 0;
  std::uint64_t attacker_misses = 0;
  std::uint64_t victim_touches = 0;
  std::uint64_t spurious_inserts = 0;
  std::uint64_t interrupts_attacker = 0;
  std::uint64_t interrupts_victim = 0;
  std::uint64_t interrupts_both = 0;
  std::uint64_t skipped_probes = 0;
};

/// Owns the shared microarchitectural state and the virtual clocks of the
/// victim and attacker. Single-threaded by contract.
class Kernel {
 public:
  Kernel(const KernelConfig& cfg, std::uint64_t seed);
  ~Kernel();
  Kernel(const Kernel&) = delete;
  Kernel& operator=(const Kernel&) = delete;

  const KernelConfig& config() const { return cfg_; }
  CacheSim& cache() { return cache_; }
  DramSim& dram() { return dram_; }
  const KernelStats& stats() const { return stats_; }

  /// True time of the attacker thread.
  Cycles now() const { return now_; }
  /// Counting-thread value: elapsed true cycles minus suspended intervals,
  /// divided by the counter resolution.
  Ticks read_attacker_clock() const;
  Ticks cycles_to_ticks(Cycles c) const;
  double ticks_to_cycles(double t) const { return t * static_cast<double>(res_ppm_) / 1e6; }
  Cycles suspended() const { return suspended_; }

  StepResult step(Entity who, PhysicalAddress addr, bool repeat = false);
  /// Pure compute time on the attacker thread (interrupts still apply).
  void advance_attacker(Cycles c);

  /// Cache sets whose victim lines are simulated. Lines outside these sets
  /// cannot influence the attacker and are skipped.
  void set_observed(std::vector<CacheLocation> sets);
  bool observed(CacheLocation loc) const;

  void attach_victim(VictimProcess* v);
  VictimProcess* victim() const { return victim_; }
  /// Runs the attached victim up to the attacker's current time.
  void sync_victim();

  InterruptSource& interrupts() { return interrupts_; }
  void script_interrupts(std::vector<InterruptEvent> events);

  /// Victim-side cache access issued by VictimProcess at its own time.
  void victim_touch(PhysicalAddress addr);
  void record_victim_interrupt() { ++stats_.interrupts_victim; }
  /// Clock used by direct victim steps (tests and scripted schedules).
  Cycles victim_now() const { return victim_now_; }

  /// Earliest true time at which anything other than the attacker may
  /// change the observed sets or the attacker clock.
  Cycles next_external_event();
  /// Advances the attacker over `n` probes known to be all-hit.
  void skip_probes(std::uint64_t n, Cycles probe_cycles, std::uint64_t accesses_per_probe);
  /// Attacker accesses left before the next spurious insertion.
  std::uint64_t spurious_countdown() const { return countdown_; }

 private:
  void apply_attacker_interrupts(Cycles upto);

  KernelConfig cfg_;
  CacheSim cache_;
  DramSim dram_;
  InterruptSource interrupts_;
  Rng spurious_rng_;
  std::uint64_t res_ppm_;
  Cycles now_ = 0;
  Cycles suspended_ = 0;
  Cycles victim_now_ = 0;
  std::size_t attacker_cursor_ = 0;
  std::size_t victim_cursor_ = 0;
  std::uint64_t countdown_ = 0;
  std::uint64_t foreign_serial_ = 0;
  std::vector<CacheLocation> observed_;
  VictimProcess* victim_ = nullptr;
  KernelStats stats_;
};

}  // namespace ppsim
