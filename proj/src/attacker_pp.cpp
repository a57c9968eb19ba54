#include "ppsim/attacker_pp.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace ppsim {

namespace {

constexpr std::uint64_t kBorderScanRange = 4ull << 20;

std::vector<std::uint8_t> repeat_flags(const std::vector<std::size_t>& order, std::size_t n) {
  std::vector<std::uint8_t> seen(n, 0), rep(order.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    rep[i] = seen[order[i]];
    seen[order[i]] = 1;
  }
  return rep;
}

double median_from_hist(const std::map<Cycles, std::uint64_t>& hist, std::uint64_t total) {
  if (total == 0) return 0.0;
  const std::uint64_t lo_rank = (total - 1) / 2, hi_rank = total / 2;
  std::uint64_t seen = 0;
  double lo = 0.0, hi = 0.0;
  bool have_lo = false;
  for (const auto& [v, c] : hist) {
    if (!have_lo && seen + c > lo_rank) {
      lo = static_cast<double>(v);
      have_lo = true;
    }
    if (seen + c > hi_rank) {
      hi = static_cast<double>(v);
      break;
    }
    seen += c;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

void AttackConfig::validate() const {
  require(memory_size >= (8ull << 20), ErrorKind::config, "attacker memory must be at least 8 MB");
  require(memory_base % 4096 == 0, ErrorKind::config, "attacker memory must be page aligned");
  require(hammer_rounds >= 1, ErrorKind::config, "hammer_rounds must be at least 1");
  require(rate_trials >= 1, ErrorKind::config, "rate_trials must be at least 1");
  require(rate_threshold > 0.0 && rate_threshold <= 1.0, ErrorKind::config, "rate_threshold must be in (0,1]");
  require(calibration_probes >= 1, ErrorKind::config, "calibration_probes must be at least 1");
  require(monitor_seconds > 0.0, ErrorKind::config, "monitor_seconds must be positive");
  require(scan_range_factor > 0.0, ErrorKind::config, "scan_range_factor must be positive");
  require(scan_order == "random" || scan_order == "sequential", ErrorKind::config,
          "scan_order must be 'random' or 'sequential'");
  require(scan_mode == "first" || scan_mode == "cluster" || scan_mode == "full", ErrorKind::config,
          "scan_mode must be 'first', 'cluster' or 'full'");
}

Attacker::Attacker(Kernel& k, const AttackConfig& cfg) : k_(k), cfg_(cfg) { cfg_.validate(); }

std::vector<std::pair<std::uint64_t, double>> Attacker::border_profile() {
  std::vector<std::pair<std::uint64_t, double>> out;
  const std::uint64_t limit = std::min(kBorderScanRange, cfg_.memory_size - 64);
  for (std::uint64_t i = 0xFC0; i < limit; i += 4096) {
    const double t = k_.dram().hammer(mem(i), mem(i + 64), cfg_.hammer_rounds);
    k_.advance_attacker(static_cast<Cycles>(std::llround(t * 2.0 * (cfg_.hammer_rounds + 1))));
    out.emplace_back(i, t);
  }
  return out;
}

PhysicalAddress Attacker::find_border() {
  if (border_) return *border_;
  double best = -1.0;
  std::uint64_t best_index = 0;
  for (const auto& [i, t] : border_profile())
    if (t > best) {
      best = t;
      best_index = i + 64;
    }
  border_ = mem(best_index);
  return *border_;
}

bool Attacker::evicted_once(const std::vector<PhysicalAddress>& eset, const std::vector<std::size_t>& order,
                            PhysicalAddress target) {
  for (std::size_t idx : order) k_.step(Entity::attacker, eset[idx]);
  // The timed reload also primes the target for the next trial.
  return !k_.step(Entity::attacker, target).hit;
}

double Attacker::eviction_rate(const std::vector<PhysicalAddress>& eset, PhysicalAddress target, unsigned trials) {
  require(trials >= 1, ErrorKind::invalid_argument, "eviction_rate needs at least one trial");
  const auto order = eviction_pattern(eset.size());
  k_.step(Entity::attacker, target);
  unsigned evicted = 0;
  for (unsigned t = 0; t < trials; ++t) evicted += evicted_once(eset, order, target);
  return static_cast<double>(evicted) / trials;
}

bool Attacker::reaches_rate(const std::vector<PhysicalAddress>& eset, PhysicalAddress target) {
  const unsigned trials = cfg_.rate_trials;
  const auto needed = static_cast<unsigned>(std::ceil(cfg_.rate_threshold * trials - 1e-9));
  const unsigned allowed_fail = trials - std::min(needed, trials);
  const auto order = eviction_pattern(eset.size());
  k_.step(Entity::attacker, target);
  unsigned ok = 0, fail = 0;
  for (unsigned t = 0; t < trials; ++t) {
    if (evicted_once(eset, order, target))
      ++ok;
    else if (++fail > allowed_fail)
      return false;
    if (ok >= needed) return true;
  }
  return ok >= needed;
}

EvictionSet Attacker::build_for_target(PhysicalAddress target) {
  const Cycles t0 = k_.now();
  const std::uint64_t stride = k_.cache().config().geometry.set_stride();
  const std::uint64_t end = cfg_.memory_base + cfg_.memory_size;
  EvictionSet es;
  es.target = target;
  es.target_set = k_.cache().locate(target);
  std::vector<PhysicalAddress> full;
  for (std::uint64_t n = 1;; ++n) {
    const PhysicalAddress c = target + n * stride;
    if (c.value + 64 > end)
      throw Error(ErrorKind::stage, "eviction rate " + std::to_string(cfg_.rate_threshold) +
                                        " unreachable within attacker memory for target 0x" +
                                        [&] {
                                          char buf[32];
                                          std::snprintf(buf, sizeof buf, "%llx",
                                                        static_cast<unsigned long long>(target.value));
                                          return std::string(buf);
                                        }() +
                                        " (check geometry and replacement policy)");
    full.push_back(c);
    ++es.rate_evaluations;
    if (reaches_rate(full, target)) break;
  }
  std::vector<std::uint8_t> alive(full.size(), 1);
  for (std::size_t i = 0; i < full.size(); ++i) {
    alive[i] = 0;
    std::vector<PhysicalAddress> trial;
    for (std::size_t j = 0; j < full.size(); ++j)
      if (alive[j]) trial.push_back(full[j]);
    ++es.rate_evaluations;
    if (trial.empty() || !reaches_rate(trial, target)) alive[i] = 1;
  }
  for (std::size_t j = 0; j < full.size(); ++j)
    if (alive[j]) es.addresses.push_back(full[j]);
  es.build_cycles = k_.now() - t0;
  return es;
}

std::vector<EvictionSet> Attacker::eviction_sets_for_index(std::uint32_t set_index) {
  const CacheGeometry& geo = k_.cache().config().geometry;
  require(set_index < geo.n_sets, ErrorKind::invalid_argument, "set index out of range");
  const PhysicalAddress target = find_border() + (std::uint64_t{set_index} << 6);
  std::vector<EvictionSet> sets;
  sets.push_back(build_for_target(target));
  const std::uint64_t stride = geo.set_stride();
  const std::uint64_t end = cfg_.memory_base + cfg_.memory_size;
  for (std::uint64_t n = 1; sets.size() < geo.n_slices; ++n) {
    const PhysicalAddress c = target + n * stride;
    if (c.value + 64 > end) break;
    bool covered = false;
    for (const auto& es : sets) {
      if (std::find(es.addresses.begin(), es.addresses.end(), c) != es.addresses.end() ||
          eviction_rate(es.addresses, c, 16) >= 0.5) {
        covered = true;
        break;
      }
    }
    if (!covered) sets.push_back(build_for_target(c));
  }
  return sets;
}

EvictionSet Attacker::generate_eviction_set(CacheLocation set) {
  for (auto& es : eviction_sets_for_index(set.set))
    if (es.target_set == set) return es;
  throw Error(ErrorKind::not_found, "no eviction set for set " + std::to_string(set.set) + " slice " +
                                        std::to_string(set.slice) + " within attacker memory");
}

ProbeResult Attacker::prime_probe(const EvictionSet& es) {
  require(!es.addresses.empty(), ErrorKind::invalid_argument, "prime_probe needs a nonempty eviction set");
  const auto order = eviction_pattern(es.addresses.size());
  const auto rep = repeat_flags(order, es.addresses.size());
  ProbeResult r;
  const Ticks t0 = k_.read_attacker_clock();
  const Cycles c0 = k_.now();
  for (std::size_t i = 0; i < order.size(); ++i)
    if (!k_.step(Entity::attacker, es.addresses[order[i]], rep[i] != 0).hit) ++r.misses;
  r.ticks = k_.read_attacker_clock() - t0;
  r.true_cycles = k_.now() - c0;
  r.latency = static_cast<Cycles>(std::llround(k_.ticks_to_cycles(static_cast<double>(r.ticks))));
  return r;
}

ProbeCalibration Attacker::calibrate(const EvictionSet& es) {
  for (int i = 0; i < 4; ++i) prime_probe(es);
  std::vector<Cycles> lat;
  for (unsigned i = 0; i < cfg_.calibration_probes; ++i) lat.push_back(prime_probe(es).latency);
  std::nth_element(lat.begin(), lat.begin() + static_cast<std::ptrdiff_t>(lat.size() / 2), lat.end());
  ProbeCalibration cal;
  cal.baseline = lat[lat.size() / 2];
  std::vector<Cycles> pen;
  for (int r = 0; r < 8; ++r) {
    prime_probe(es);
    prime_probe(es);
    Ticks t0 = k_.read_attacker_clock();
    k_.step(Entity::attacker, es.target);
    const Ticks miss = k_.read_attacker_clock() - t0;
    t0 = k_.read_attacker_clock();
    k_.step(Entity::attacker, es.target);
    const Ticks hit = k_.read_attacker_clock() - t0;
    pen.push_back(static_cast<Cycles>(std::llround(k_.ticks_to_cycles(static_cast<double>(miss > hit ? miss - hit : 0)))));
  }
  for (int i = 0; i < 2; ++i) prime_probe(es);
  std::nth_element(pen.begin(), pen.begin() + static_cast<std::ptrdiff_t>(pen.size() / 2), pen.end());
  cal.miss_penalty = pen[pen.size() / 2];
  cal.threshold = static_cast<double>(cal.baseline) + 0.5 * static_cast<double>(cal.miss_penalty);
  return cal;
}

MonitorResult Attacker::monitor(const EvictionSet& es, const VictimFactory& factory, const TraceMeta& meta_template) {
  MonitorResult out;
  k_.set_observed({es.target_set});
  out.calibration = calibrate(es);
  const double thr = cfg_.threshold_override > 0.0 ? cfg_.threshold_override : out.calibration.threshold;

  std::unique_ptr<VictimProcess> victim = factory(k_.now());
  require(victim != nullptr, ErrorKind::stage, "victim trigger returned nothing");
  victim->bind(k_);
  k_.attach_victim(victim.get());

  RawTrace& tr = out.trace;
  tr.meta = meta_template;
  tr.meta.set = es.target_set;
  tr.meta.threshold = thr;
  tr.meta.counter_resolution = k_.config().counter_resolution;
  tr.meta.start_tick = k_.read_attacker_clock();

  const Cycles start = k_.now();
  const Cycles budget_end = start + static_cast<Cycles>(cfg_.monitor_seconds * k_.config().cpu_hz);
  const std::uint64_t accesses = eviction_pattern(es.addresses.size()).size();
  const bool ff = k_.config().fast_forward;
  const bool spurious = k_.config().noise.spurious_miss_rate > 0.0;

  std::map<Cycles, std::uint64_t> hist;
  double sum = 0.0;
  std::uint64_t count = 0;
  unsigned streak = 0;
  Cycles last_cycles = 0;
  for (;;) {
    k_.sync_victim();
    const Cycles now = k_.now();
    if (now >= budget_end) break;
    if (victim->finished(now) && now >= victim->end_time() + cfg_.tail_margin) break;
    const ProbeResult pr = prime_probe(es);
    ++hist[pr.true_cycles];
    sum += static_cast<double>(pr.true_cycles);
    ++count;
    if (static_cast<double>(pr.latency) > thr) {
      tr.timestamps.push_back(k_.read_attacker_clock());
      tr.latencies.push_back(pr.latency);
    }
    if (pr.misses == 0 && pr.true_cycles == last_cycles)
      ++streak;
    else
      streak = pr.misses == 0 ? 1 : 0;
    last_cycles = pr.true_cycles;
    if (!ff || streak < 2) continue;

    // Nothing can touch the monitored set before the next external event,
    // so the probes up to it are identical all-hit probes.
    const Cycles p = pr.true_cycles;
    Cycles limit = std::min(k_.next_external_event(), budget_end);
    limit = std::min(limit, victim->end_time() + cfg_.tail_margin);
    const Cycles t = k_.now();
    if (limit <= t + 1) continue;
    std::uint64_t n = (limit - t - 1) / p;
    n = n > 1 ? n - 1 : 0;
    if (spurious) {
      const std::uint64_t cd = k_.spurious_countdown();
      n = std::min<std::uint64_t>(n, cd > 0 ? (cd - 1) / accesses : 0);
    }
    if (n == 0) continue;
    k_.skip_probes(n, p, accesses);
    hist[p] += n;
    sum += static_cast<double>(n) * static_cast<double>(p);
    count += n;
    out.stats.skipped_probes += n;
  }
  tr.meta.end_tick = k_.read_attacker_clock();
  k_.attach_victim(nullptr);

  out.stats.probes = count;
  out.stats.mean_probe_cycles = count ? sum / static_cast<double>(count) : 0.0;
  out.stats.median_probe_cycles = median_from_hist(hist, count);
  tr.meta.probe_median = out.stats.median_probe_cycles;
  out.stats.monitored_cycles = k_.now() - start;
  out.stats.victim_mult_cycles = victim->mult_cycles();
  out.stats.victim_exp_cycles = victim->exponent_work();
  return out;
}

bool matches_victim_pattern(const std::vector<Peak>& peaks, double gate, double range) {
  std::vector<double> strong;
  for (const Peak& p : peaks)
    if (p.value >= gate) strong.push_back(p.time);
  if (strong.size() < 2) return false;
  const double right = strong.back();
  for (std::size_t i = 0; i + 1 < strong.size(); ++i)
    if (right - strong[i] <= range) return true;
  return false;
}

ScanResult Attacker::scan_vulnerable_sets(const VictimFactory& factory, unsigned key_bits,
                                          double expected_mult_cycles, std::uint64_t seed,
                                          const RecoveryConfig& rcfg) {
  const CacheGeometry& geo = k_.cache().config().geometry;
  std::vector<std::uint32_t> order(geo.n_sets);
  for (std::uint32_t i = 0; i < geo.n_sets; ++i) order[i] = i;
  if (cfg_.scan_order == "random") {
    Rng rng(derive_seed(seed, 0x7363616e));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.range(0, i - 1)]);
  }
  const double res = k_.config().counter_resolution;
  const double mult_ticks = expected_mult_cycles / res;
  const double range = cfg_.scan_range_factor * 1.5 * key_bits * mult_ticks;

  ScanResult out;
  const Cycles t_start = k_.now();
  std::map<std::uint32_t, bool> visited;
  auto examine = [&](std::uint32_t index) {
    if (visited.count(index)) return visited[index];
    bool any = false;
    for (const auto& es : eviction_sets_for_index(index)) {
      ++out.trials;
      TraceMeta meta;
      meta.seed = seed;
      const MonitorResult mr = monitor(es, factory, meta);
      ScanEntry entry;
      entry.location = es.target_set;
      try {
        const ResampledTrace rt = resample(mr.trace, rcfg);
        const auto peaks = detect_peaks(rt, mult_ticks, rcfg);
        const double gate = cfg_.scan_energy_gate * mr.trace.meta.threshold * mr.trace.meta.threshold /
                            static_cast<double>(rcfg.window);
        entry.peaks = peaks.size();
        entry.matched = matches_victim_pattern(peaks, gate, range);
        if (entry.matched) {
          try {
            entry.partial = decode_resampled(rt, key_bits, rcfg).key;
          } catch (const Error&) {
          }
        }
      } catch (const Error&) {
        entry.matched = false;
      }
      if (entry.matched) {
        any = true;
        if (!out.trials_to_first_hit) {
          out.trials_to_first_hit = out.trials;
          out.seconds_to_first_hit = static_cast<double>(k_.now() - t_start) / k_.config().cpu_hz;
        }
        out.matches.push_back(entry);
      }
    }
    visited[index] = any;
    return any;
  };

  for (std::uint32_t index : order) {
    if (visited.count(index)) continue;
    const bool hit = examine(index);
    if (!hit || cfg_.scan_mode == "full") continue;
    if (cfg_.scan_mode == "cluster") {
      for (int dir : {-1, 1}) {
        int misses = 0;
        for (std::int64_t j = static_cast<std::int64_t>(index) + dir;
             j >= 0 && j < static_cast<std::int64_t>(geo.n_sets) && misses < 2; j += dir)
          misses = examine(static_cast<std::uint32_t>(j)) ? 0 : misses + 1;
      }
    }
    break;
  }
  out.simulated_seconds = static_cast<double>(k_.now() - t_start) / k_.config().cpu_hz;

  std::sort(out.matches.begin(), out.matches.end(),
            [](const ScanEntry& a, const ScanEntry& b) { return a.location < b.location; });
  if (out.matches.size() >= 3) {
    std::vector<ScanEntry*> interior;
    for (std::size_t i = 1; i + 1 < out.matches.size(); ++i) interior.push_back(&out.matches[i]);
    for (ScanEntry* e : interior) {
      std::vector<double> d;
      for (ScanEntry* o : interior)
        if (o != e) d.push_back(static_cast<double>(levenshtein(e->partial.bits, o->partial.bits)));
      std::sort(d.begin(), d.end());
      e->median_distance = d.empty() ? 0.0 : (d.size() % 2 ? d[d.size() / 2] : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]));
    }
    std::stable_sort(interior.begin(), interior.end(),
                     [](const ScanEntry* a, const ScanEntry* b) { return a->median_distance < b->median_distance; });
    for (ScanEntry* e : interior) {
      out.ranked.push_back(e->location);
      out.ranked_distance.push_back(e->median_distance);
    }
  }
  return out;
}

}  // namespace ppsim
