#include "ppsim/cache_sim.hpp"

#include <algorithm>
#include <cmath>

#include "ppsim/dram_sim.hpp"

namespace ppsim {

std::string to_string(ReplacementPolicy p) {
  switch (p) {
    case ReplacementPolicy::lru: return "lru";
    case ReplacementPolicy::bimodal_lru: return "bimodal_lru";
    case ReplacementPolicy::random_victim: return "random_victim";
  }
  return "?";
}

ReplacementPolicy replacement_policy_from_string(const std::string& s) {
  if (s == "lru") return ReplacementPolicy::lru;
  if (s == "bimodal_lru") return ReplacementPolicy::bimodal_lru;
  if (s == "random_victim") return ReplacementPolicy::random_victim;
  throw Error(ErrorKind::config, "unknown replacement policy '" + s + "' (lru, bimodal_lru, random_victim)");
}

void CacheConfig::validate() const {
  geometry.validate();
  require(mru_insert_prob >= 0.0 && mru_insert_prob <= 1.0, ErrorKind::config,
          "mru_insert_prob must be in [0,1]");
  require(lru_victim_prob >= 0.0 && lru_victim_prob <= 1.0, ErrorKind::config,
          "lru_victim_prob must be in [0,1]");
  require(repeat_hit_latency <= hit_latency, ErrorKind::config,
          "repeat_hit_latency must not exceed hit_latency");
  require(hit_latency < default_miss_latency, ErrorKind::config,
          "hit latency must be below the miss latency");
}

CacheSim::CacheSim(CacheConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
  cfg_.validate();
  ways_ = cfg_.geometry.n_ways;
  const std::size_t sets = cfg_.geometry.total_sets();
  tags_.assign(sets * ways_, 0);
  counts_.assign(sets, 0);
}

std::size_t CacheSim::set_offset(CacheLocation loc) const {
  return static_cast<std::size_t>(loc.slice) * cfg_.geometry.n_sets + loc.set;
}

bool CacheSim::touch(CacheLocation loc, std::uint64_t tag) {
  const std::size_t s = set_offset(loc);
  std::uint64_t* lines = tags_.data() + s * ways_;
  std::uint8_t& n = counts_[s];
  for (std::uint32_t i = 0; i < n; ++i) {
    if (lines[i] == tag) {
      std::rotate(lines, lines + i, lines + i + 1);
      return true;
    }
  }
  // Miss: the random stream is only consumed here, so runs of hits are
  // fully deterministic.
  if (n == ways_) {
    std::uint32_t victim = ways_ - 1;
    if (cfg_.policy == ReplacementPolicy::random_victim && !rng_.bernoulli(cfg_.lru_victim_prob))
      victim = static_cast<std::uint32_t>(rng_.range(0, ways_ - 1));
    std::copy(lines + victim + 1, lines + n, lines + victim);
    --n;
  }
  bool at_mru = true;
  if (cfg_.policy == ReplacementPolicy::bimodal_lru) at_mru = rng_.bernoulli(cfg_.mru_insert_prob);
  if (at_mru) {
    std::copy_backward(lines, lines + n, lines + n + 1);
    lines[0] = tag;
  } else {
    lines[n] = tag;
  }
  ++n;
  return false;
}

AccessOutcome CacheSim::access(PhysicalAddress addr, DramSim* dram, bool repeat) {
  const bool hit = touch(locate(addr), addr.value >> 6);
  AccessOutcome out;
  out.hit = hit;
  if (hit)
    out.latency = repeat ? cfg_.repeat_hit_latency : cfg_.hit_latency;
  else
    out.latency = dram ? dram->access(addr) : cfg_.default_miss_latency;
  return out;
}

bool CacheSim::contains(PhysicalAddress addr) const {
  const std::size_t s = set_offset(locate(addr));
  const std::uint64_t tag = addr.value >> 6;
  const std::uint64_t* lines = tags_.data() + s * ways_;
  return std::find(lines, lines + counts_[s], tag) != lines + counts_[s];
}

std::size_t CacheSim::occupancy(CacheLocation loc) const { return counts_[set_offset(loc)]; }

std::vector<std::uint64_t> CacheSim::resident(CacheLocation loc) const {
  const std::size_t s = set_offset(loc);
  const std::uint64_t* lines = tags_.data() + s * ways_;
  return {lines, lines + counts_[s]};
}

void CacheSim::flush() { std::fill(counts_.begin(), counts_.end(), 0); }

std::vector<std::size_t> eviction_pattern(std::size_t n) {
  std::vector<std::size_t> order;
  if (n == 0) return order;
  const std::size_t groups = n > 2 ? n - 2 : 1;
  order.reserve(groups * 6);
  for (std::size_t i = 0; i < groups; ++i) {
    const std::size_t end = std::min(i + 3, n);
    for (int rep = 0; rep < 2; ++rep)
      for (std::size_t j = i; j < end; ++j) order.push_back(j);
  }
  return order;
}

namespace {

bool evicts_once(CacheSim& cache, const std::vector<PhysicalAddress>& eset,
                 const std::vector<std::size_t>& order, PhysicalAddress target, DramSim* dram) {
  cache.access(target, dram);
  for (std::size_t idx : order) cache.access(eset[idx], dram);
  return !cache.contains(target);
}

}  // namespace

double eviction_rate(CacheSim& cache, const std::vector<PhysicalAddress>& eset, PhysicalAddress target,
                     unsigned trials, DramSim* dram) {
  require(trials >= 1, ErrorKind::invalid_argument, "eviction_rate needs at least one trial");
  const auto order = eviction_pattern(eset.size());
  unsigned evicted = 0;
  for (unsigned t = 0; t < trials; ++t) evicted += evicts_once(cache, eset, order, target, dram);
  return static_cast<double>(evicted) / trials;
}

bool eviction_rate_at_least(CacheSim& cache, const std::vector<PhysicalAddress>& eset,
                            PhysicalAddress target, unsigned trials, double threshold, DramSim* dram) {
  require(trials >= 1, ErrorKind::invalid_argument, "eviction_rate needs at least one trial");
  const auto order = eviction_pattern(eset.size());
  const auto needed = static_cast<unsigned>(std::ceil(threshold * trials - 1e-9));
  const unsigned allowed_fail = trials - std::min(needed, trials);
  unsigned ok = 0, fail = 0;
  for (unsigned t = 0; t < trials; ++t) {
    if (evicts_once(cache, eset, order, target, dram))
      ++ok;
    else if (++fail > allowed_fail)
      return false;
    if (ok >= needed) return true;
  }
  return ok >= needed;
}

}  // namespace ppsim
