#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ppsim/address_model.hpp"
#include "ppsim/rng.hpp"

namespace ppsim {

class DramSim;

enum class ReplacementPolicy {
  lru,
  bimodal_lru,    // insert at MRU with mru_insert_prob, else at the LRU position
  random_victim,  // evict the LRU line with lru_victim_prob, else a random line
};

std::string to_string(ReplacementPolicy p);
ReplacementPolicy replacement_policy_from_string(const std::string& s);

struct CacheConfig {
  CacheGeometry geometry;
  ReplacementPolicy policy = ReplacementPolicy::bimodal_lru;
  double mru_insert_prob = 0.97;
  double lru_victim_prob = 0.9;
  Cycles hit_latency = 40;
  Cycles repeat_hit_latency = 5;  // line re-touched within one probe pass
  Cycles default_miss_latency = 250;  // used when no DRAM model is attached

  void validate() const;
};

struct AccessOutcome {
  bool hit = false;
  Cycles latency = 0;
};

/// Tags are line numbers (address >> 6). Tags with bit 63 set belong to
/// unrelated processes and are used for noise injection.
inline constexpr std::uint64_t kForeignTagBit = std::uint64_t{1} << 63;

class CacheSim {
 public:
  CacheSim(CacheConfig cfg, std::uint64_t seed);

  AccessOutcome access(PhysicalAddress addr, DramSim* dram = nullptr, bool repeat = false);

  /// Low-level insert/promote of a tag in a given set. Returns true on hit.
  bool touch(CacheLocation loc, std::uint64_t tag);

  bool contains(PhysicalAddress addr) const;
  std::size_t occupancy(CacheLocation loc) const;
  /// Resident tags, most recently used first.
  std::vector<std::uint64_t> resident(CacheLocation loc) const;
  void flush();

  const CacheConfig& config() const { return cfg_; }
  CacheLocation locate(PhysicalAddress addr) const { return cache_location(addr, cfg_.geometry); }

 private:
  std::size_t set_offset(CacheLocation loc) const;

  CacheConfig cfg_;
  std::uint32_t ways_;
  std::vector<std::uint64_t> tags_;
  std::vector<std::uint8_t> counts_;
  Rng rng_;
};

/// Access order of the eviction pattern: for each sliding window of three
/// consecutive addresses, access the window twice.
std::vector<std::size_t> eviction_pattern(std::size_t n);

/// Fraction of trials in which loading `target` and then running the
/// eviction pattern over `eset` removes `target` from the cache.
double eviction_rate(CacheSim& cache, const std::vector<PhysicalAddress>& eset, PhysicalAddress target,
                     unsigned trials, DramSim* dram = nullptr);

/// Same measurement, stopping as soon as the outcome relative to
/// `threshold` is decided. Returns whether rate >= threshold.
bool eviction_rate_at_least(CacheSim& cache, const std::vector<PhysicalAddress>& eset,
                            PhysicalAddress target, unsigned trials, double threshold,
                            DramSim* dram = nullptr);

}  // namespace ppsim
