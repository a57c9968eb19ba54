#include "doctest.h"
#include "ppsim/cache_sim.hpp"
#include "ppsim/dram_sim.hpp"

using namespace ppsim;

namespace {

CacheConfig lru_config(std::uint32_t ways = 4, std::uint32_t slices = 1) {
  CacheConfig c;
  c.geometry.n_sets = 64;
  c.geometry.n_ways = ways;
  c.geometry.n_slices = slices;
  c.policy = ReplacementPolicy::lru;
  return c;
}

PhysicalAddress same_set(std::uint64_t i, const CacheConfig& c) { return PhysicalAddress{i * c.geometry.set_stride()}; }

}  // namespace

TEST_CASE("hit and miss latencies") {
  CacheSim cache(lru_config(), 1);
  const auto a = PhysicalAddress{0x1000};
  const auto first = cache.access(a);
  CHECK_FALSE(first.hit);
  CHECK(first.latency == 250);
  const auto second = cache.access(a);
  CHECK(second.hit);
  CHECK(second.latency == 40);
  CHECK(cache.access(a, nullptr, true).latency == 5);
  CHECK(cache.contains(a + 8));
}

TEST_CASE("LRU evicts the least recently used line") {
  const auto cfg = lru_config(4);
  CacheSim cache(cfg, 1);
  for (int i = 0; i < 4; ++i) cache.access(same_set(i, cfg));
  cache.access(same_set(0, cfg));  // 1 is now oldest
  cache.access(same_set(4, cfg));
  CHECK(cache.contains(same_set(0, cfg)));
  CHECK_FALSE(cache.contains(same_set(1, cfg)));
  CHECK(cache.occupancy(cache.locate(same_set(0, cfg))) == 4);
  const auto res = cache.resident(cache.locate(same_set(0, cfg)));
  CHECK(res.front() == same_set(4, cfg).value >> 6);
}

TEST_CASE("occupancy never exceeds associativity") {
  for (auto policy : {ReplacementPolicy::lru, ReplacementPolicy::bimodal_lru, ReplacementPolicy::random_victim}) {
    auto cfg = lru_config(8, 2);
    cfg.policy = policy;
    CacheSim cache(cfg, 7);
    Rng rng(11);
    for (int i = 0; i < 20000; ++i) cache.access(PhysicalAddress{rng.range(0, 1 << 24)});
    for (std::uint32_t s = 0; s < cfg.geometry.n_sets; ++s)
      for (std::uint32_t sl = 0; sl < 2; ++sl) CHECK(cache.occupancy({s, sl}) <= 8);
  }
}

TEST_CASE("eviction pattern slides a window of three, twice each") {
  CHECK(eviction_pattern(4) == std::vector<std::size_t>{0, 1, 2, 0, 1, 2, 1, 2, 3, 1, 2, 3});
  CHECK(eviction_pattern(0).empty());
  CHECK(eviction_pattern(2) == std::vector<std::size_t>{0, 1, 0, 1});
}

TEST_CASE("LRU eviction rate is all or nothing at the associativity") {
  const auto cfg = lru_config(6);
  CacheSim cache(cfg, 3);
  std::vector<PhysicalAddress> eset;
  for (int i = 1; i <= 6; ++i) eset.push_back(same_set(i, cfg));
  const auto target = same_set(0, cfg);
  CHECK(eviction_rate(cache, eset, target, 50) == doctest::Approx(1.0));
  eset.pop_back();
  CHECK(eviction_rate(cache, eset, target, 50) == doctest::Approx(0.0));
  CHECK_FALSE(eviction_rate_at_least(cache, eset, target, 50, 0.99));
}

TEST_CASE("bimodal insertion is seeded and reproducible") {
  auto cfg = lru_config(4);
  cfg.policy = ReplacementPolicy::bimodal_lru;
  auto run = [&](std::uint64_t seed) {
    CacheSim cache(cfg, seed);
    std::vector<int> hits;
    Rng rng(2);
    for (int i = 0; i < 3000; ++i) hits.push_back(cache.access(same_set(rng.range(0, 7), cfg)).hit);
    return hits;
  };
  CHECK(run(1) == run(1));
  CHECK(run(1) != run(2));
}

TEST_CASE("policy names and validation") {
  for (auto p : {ReplacementPolicy::lru, ReplacementPolicy::bimodal_lru, ReplacementPolicy::random_victim})
    CHECK(replacement_policy_from_string(to_string(p)) == p);
  CHECK_THROWS_AS(replacement_policy_from_string("plru"), Error);
  CacheConfig c;
  c.mru_insert_prob = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("misses go to DRAM when a model is attached") {
  CacheSim cache(lru_config(), 1);
  DramTiming t;
  t.jitter = 0;
  DramSim dram(DramMapping::skylake_two_dimm(), t, 1);
  const auto first = cache.access(PhysicalAddress{0x40000}, &dram);
  CHECK(first.latency == t.closed_row);
}

TEST_CASE("flush empties the cache") {
  CacheSim cache(lru_config(), 1);
  cache.access(PhysicalAddress{0});
  cache.flush();
  CHECK_FALSE(cache.contains(PhysicalAddress{0}));
}
