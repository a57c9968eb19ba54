#include "doctest.h"
#include "ppsim/attacker_pp.hpp"

using namespace ppsim;

namespace {

KernelConfig quiet_kernel() {
  KernelConfig c;
  c.noise = NoiseConfig::zero();
  return c;
}

struct Rig {
  Kernel k;
  Attacker a;
  VictimConfig vc;
  VictimLayout layout;
  Bits exponent;

  explicit Rig(const KernelConfig& kc, unsigned bits = 1024, std::uint64_t seed = 1)
      : k(kc, seed), a(k, AttackConfig{}) {
    vc.key_bits = bits;
    layout = allocate_victim(bits, false, seed, kc.cache.geometry, vc);
    exponent = generate_key(bits, seed).exponent;
  }

  VictimFactory factory(std::uint64_t seed = 5) {
    return [this, seed](Cycles now) {
      return std::make_unique<VictimProcess>(exponent, layout, vc, effective_mult_cycles(vc, true), now + 200'000,
                                             seed);
    };
  }

  CacheLocation middle_set() const { return layout.spanned_sets[layout.line_count() / 2]; }
};

}  // namespace

TEST_CASE("row-conflict scan finds the 4 MB boundary") {
  Kernel k(quiet_kernel(), 1);
  Attacker a(k, AttackConfig{});
  const PhysicalAddress border = a.find_border();
  CHECK(border.value % (4u << 20) == 0);
  CHECK(border.value > a.config().memory_base);
  CHECK(border.value - a.config().memory_base <= (4u << 20));
  CHECK(a.find_border() == border);
}

TEST_CASE("eviction sets evict, are minimal and map to the target set") {
  Kernel k(quiet_kernel(), 2);
  Attacker a(k, AttackConfig{});
  Rng rng(3);
  for (int i = 0; i < 4; ++i) {
    const CacheLocation loc{static_cast<std::uint32_t>(rng.range(0, 2047)), static_cast<std::uint32_t>(rng.range(0, 1))};
    const EvictionSet es = a.generate_eviction_set(loc);
    CHECK(es.target_set == loc);
    CHECK(k.cache().locate(es.target) == loc);
    for (auto addr : es.addresses) {
      CHECK(k.cache().locate(addr) == loc);
      CHECK(addr != es.target);
    }
    CHECK(a.eviction_rate(es.addresses, es.target, 200) >= 0.99);
    for (std::size_t r = 0; r < es.addresses.size(); ++r) {
      auto smaller = es.addresses;
      smaller.erase(smaller.begin() + static_cast<std::ptrdiff_t>(r));
      CHECK(a.eviction_rate(smaller, es.target, 200) < 0.99);
    }
  }
}

TEST_CASE("under LRU with one slice the set size equals the associativity") {
  KernelConfig kc = quiet_kernel();
  kc.cache.policy = ReplacementPolicy::lru;
  kc.cache.geometry.n_slices = 1;
  for (std::uint32_t ways : {4u, 12u, 16u}) {
    kc.cache.geometry.n_ways = ways;
    Kernel k(kc, 4);
    Attacker a(k, AttackConfig{});
    CHECK(a.generate_eviction_set({77, 0}).addresses.size() == ways);
  }
}

TEST_CASE("probe calibration separates hits from misses") {
  Kernel k(quiet_kernel(), 5);
  Attacker a(k, AttackConfig{});
  const EvictionSet es = a.generate_eviction_set({100, 0});
  const ProbeCalibration cal = a.calibrate(es);
  CHECK(cal.miss_penalty > 100);
  CHECK(cal.threshold > cal.baseline);
  const ProbeResult quiet = a.prime_probe(es);
  CHECK(quiet.misses == 0);
  CHECK(static_cast<double>(quiet.latency) < cal.threshold);
  k.cache().access(es.target);  // foreign line in the set
  const ProbeResult busy = a.prime_probe(es);
  CHECK(busy.misses >= 1);
  CHECK(static_cast<double>(busy.latency) > cal.threshold);
}

TEST_CASE("noiseless monitoring decodes the exponent exactly") {
  Rig r(quiet_kernel(), 4096);
  const EvictionSet es = r.a.generate_eviction_set(r.middle_set());
  const MonitorResult m = r.a.monitor(es, r.factory(), TraceMeta{});
  CHECK(m.trace.meta.set == r.middle_set());
  CHECK(m.trace.size() > 0);
  const DecodeResult d = decode_trace(m.trace, 4096);
  CHECK(levenshtein(d.key.bits, r.exponent) == 0);
  CHECK(m.stats.skipped_probes > 0);
}

TEST_CASE("fast-forward leaves the trace unchanged") {
  KernelConfig kc;
  kc.noise.interrupt_rate = 0.65;
  kc.noise.spurious_miss_rate = 1e-5;
  MonitorResult runs[2];
  for (int ff = 0; ff < 2; ++ff) {
    kc.fast_forward = ff == 1;
    Rig r(kc, 1024, 8);
    const EvictionSet es = r.a.generate_eviction_set(r.middle_set());
    runs[ff] = r.a.monitor(es, r.factory(), TraceMeta{});
  }
  CHECK(runs[0].stats.skipped_probes == 0);
  CHECK(runs[1].stats.skipped_probes > 0);
  CHECK(runs[0].trace.timestamps == runs[1].trace.timestamps);
  CHECK(runs[0].trace.latencies == runs[1].trace.latencies);
  CHECK(runs[0].stats.probes == runs[1].stats.probes);
}

TEST_CASE("a victim-only gap shows as inactivity at least as long") {
  Rig r(quiet_kernel());
  const EvictionSet es = r.a.generate_eviction_set(r.middle_set());
  const Cycles gap = 2'000'000;
  // Find where the exponentiation runs in a clean trace, then script a gap there.
  const MonitorResult clean = r.a.monitor(es, r.factory(), TraceMeta{});
  const Ticks mid = (clean.trace.timestamps.front() + clean.trace.timestamps.back()) / 2;
  Rig r2(quiet_kernel());
  const EvictionSet es2 = r2.a.generate_eviction_set(r2.middle_set());
  r2.k.script_interrupts({{static_cast<Cycles>(r.k.ticks_to_cycles(static_cast<double>(mid))), gap,
                           InterruptTarget::victim}});
  const MonitorResult m = r2.a.monitor(es2, r2.factory(), TraceMeta{});
  Ticks longest = 0;
  for (std::size_t i = 1; i < m.trace.size(); ++i)
    longest = std::max(longest, m.trace.timestamps[i] - m.trace.timestamps[i - 1]);
  // Misses are timestamped per probe, so the edges of the gap are only
  // known to within one probe.
  const double probe = static_cast<double>(*std::max_element(m.trace.latencies.begin(), m.trace.latencies.end()));
  CHECK(static_cast<double>(longest) + probe / 0.87 >= gap / 0.87);
  CHECK(static_cast<double>(longest) < (gap + 200'000) / 0.87);
}

TEST_CASE("scan rule") {
  const double gate = 10;
  CHECK(matches_victim_pattern({{100, 50}, {900, 60}}, gate, 1000));
  CHECK_FALSE(matches_victim_pattern({{100, 50}, {2000, 60}}, gate, 1000));
  CHECK_FALSE(matches_victim_pattern({{100, 5}, {900, 60}}, gate, 1000));
  CHECK_FALSE(matches_victim_pattern({{900, 60}}, gate, 1000));
}

TEST_CASE("missing sets are reported") {
  KernelConfig kc = quiet_kernel();
  Kernel k(kc, 1);
  Attacker a(k, AttackConfig{});
  CHECK_THROWS_AS(a.generate_eviction_set({5000, 0}), Error);
  AttackConfig bad;
  bad.rate_threshold = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
}
