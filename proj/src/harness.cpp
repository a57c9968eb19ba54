#include "ppsim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace ppsim {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kKernelStream = 1;
constexpr std::uint64_t kKeyStream = 2;
constexpr std::uint64_t kScanStream = 3;
constexpr std::uint64_t kTraceStream = 1000;
constexpr std::uint64_t kScanVictimStream = 1'000'000;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  require(out.good(), ErrorKind::io, "cannot write " + p.string());
  out << text;
  if (!text.empty() && text.back() != '\n') out << '\n';
}

json location_json(CacheLocation l) { return {{"set", l.set}, {"slice", l.slice}}; }

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

template <class F>
auto run_stage(const char* stage, std::uint64_t seed, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::stage && std::string(e.what()).rfind("stage '", 0) == 0) throw;
    throw Error(ErrorKind::stage, std::string("stage '") + stage + "' failed (seed " + std::to_string(seed) +
                                      "): " + e.what());
  }
}

/// Kernel, attacker and victim key of one experiment.
class Session {
 public:
  Session(const ExperimentConfig& cfg, std::uint64_t seed)
      : cfg_(cfg),
        seed_(seed),
        kernel_(cfg.kernel, derive_seed(seed, kKernelStream)),
        attacker_(kernel_, cfg.attack.attacker) {
    key_seed_ = cfg.victim.seed ? cfg.victim.seed : derive_seed(seed, kKeyStream);
    key_ = generate_key(cfg.victim.key_bits, key_seed_);
    mult_ = effective_mult_cycles(cfg.victim, true);
  }

  VictimFactory factory(std::uint64_t victim_seed) {
    return [this, victim_seed](Cycles now) {
      const VictimConfig& vc = cfg_.victim;
      const VictimLayout layout =
          allocate_victim(vc.key_bits, vc.randomize, victim_seed, kernel_.config().cache.geometry, vc);
      const Bits exponent = signing_exponent(key_, vc.blinding, victim_seed);
      Rng rng(derive_seed(victim_seed, 0x64656c));
      const Cycles start = now + rng.range(0, vc.start_delay_max);
      return std::make_unique<VictimProcess>(exponent, layout, vc, mult_, start, derive_seed(victim_seed, 0x70726f63));
    };
  }

  /// Factory for repeated triggers, each with a fresh signature seed.
  VictimFactory scan_factory() {
    return [this](Cycles now) { return factory(derive_seed(seed_, kScanVictimStream + scan_calls_++))(now); };
  }

  CacheLocation oracle_set() const {
    const VictimLayout layout = allocate_victim(cfg_.victim.key_bits, false, key_seed_,
                                                cfg_.kernel.cache.geometry, cfg_.victim);
    const std::size_t n = layout.line_count();
    const std::size_t line = cfg_.attack.oracle_line < 0 ? n / 2 : static_cast<std::size_t>(cfg_.attack.oracle_line);
    require(line < n, ErrorKind::config, "attack.oracle_line beyond the buffer's " + std::to_string(n) + " lines");
    return layout.spanned_sets[line];
  }

  ScanSummary scan() {
    const ScanResult r = attacker_.scan_vulnerable_sets(scan_factory(), cfg_.victim.key_bits,
                                                        static_cast<double>(mult_), derive_seed(seed_, kScanStream),
                                                        cfg_.recovery);
    ScanSummary s;
    s.performed = true;
    for (const auto& m : r.matches) s.matches.push_back(m.location);
    s.ranked = r.ranked;
    s.ranked_distance = r.ranked_distance;
    s.trials = r.trials;
    s.trials_to_first_hit = r.trials_to_first_hit;
    s.simulated_seconds = r.simulated_seconds;
    s.seconds_to_first_hit = r.seconds_to_first_hit;
    return s;
  }

  CacheLocation choose_set(ScanSummary* scan_out) {
    switch (cfg_.attack.set_source) {
      case SetSource::fixed: return {cfg_.attack.monitor_set, cfg_.attack.monitor_slice};
      case SetSource::oracle: return oracle_set();
      case SetSource::scan: break;
    }
    ScanSummary s = scan();
    if (scan_out) *scan_out = s;
    if (!s.ranked.empty()) return s.ranked.front();
    require(!s.matches.empty(), ErrorKind::not_found, "no vulnerable set found");
    return s.matches[s.matches.size() / 2];
  }

  MonitorResult monitor(const EvictionSet& es, std::uint32_t trace_id, std::uint64_t digest) {
    TraceMeta meta;
    meta.config_digest = digest;
    meta.seed = seed_;
    meta.trace_id = trace_id;
    return attacker_.monitor(es, factory(trace_seed(trace_id)), meta);
  }

  std::uint64_t trace_seed(std::uint32_t id) const { return derive_seed(seed_, kTraceStream + id); }

  Attacker& attacker() { return attacker_; }
  Kernel& kernel() { return kernel_; }
  const RsaKey& key() const { return key_; }
  std::uint64_t key_seed() const { return key_seed_; }

 private:
  const ExperimentConfig& cfg_;
  std::uint64_t seed_;
  Kernel kernel_;
  Attacker attacker_;
  RsaKey key_;
  std::uint64_t key_seed_ = 0;
  Cycles mult_ = 0;
  std::uint64_t scan_calls_ = 0;
};

TraceSummary summarize(const RawTrace& raw, const MonitorStats* st, std::uint32_t id, std::uint64_t seed,
                       unsigned key_bits, const RecoveryConfig& rcfg, const Bits* reference, PartialKey* partial) {
  TraceSummary s;
  s.id = id;
  s.seed = seed;
  s.misses = raw.size();
  s.threshold = raw.meta.threshold;
  if (st) {
    s.probes = st->probes;
    s.skipped_probes = st->skipped_probes;
    s.mean_probe_cycles = st->mean_probe_cycles;
    s.median_probe_cycles = st->median_probe_cycles;
    s.monitored_cycles = st->monitored_cycles;
    s.victim_mult_cycles = st->victim_mult_cycles;
    s.victim_exponent_cycles = st->victim_exp_cycles;
  }
  try {
    DecodeResult d = decode_trace(raw, key_bits, rcfg);
    d.key.source = id;
    s.decoded = true;
    s.partial_bits = d.key.bits.size();
    s.n_peaks = d.n_peaks;
    s.mult_time_ticks = d.mult_time;
    s.exponent_span_ticks = d.exp_end - d.exp_start;
    if (reference) {
      s.edit_distance = levenshtein(d.key.bits, *reference);
      s.partial_error = static_cast<double>(s.edit_distance) / static_cast<double>(reference->size());
    }
    if (partial) *partial = std::move(d.key);
  } catch (const Error& e) {
    s.decode_error = e.what();
    s.partial_error = 1.0;
    if (reference) s.edit_distance = reference->size();
  }
  return s;
}

json trace_summary_json(const TraceSummary& t) {
  json j = {{"id", t.id},
            {"seed", t.seed},
            {"decoded", t.decoded},
            {"partial_error", t.partial_error},
            {"edit_distance", t.edit_distance},
            {"partial_bits", t.partial_bits},
            {"n_peaks", t.n_peaks},
            {"mult_time_ticks", t.mult_time_ticks},
            {"exponent_span_ticks", t.exponent_span_ticks},
            {"misses", t.misses},
            {"probes", t.probes},
            {"skipped_probes", t.skipped_probes},
            {"mean_probe_cycles", t.mean_probe_cycles},
            {"median_probe_cycles", t.median_probe_cycles},
            {"threshold", t.threshold},
            {"monitored_cycles", t.monitored_cycles},
            {"victim_mult_cycles", t.victim_mult_cycles},
            {"victim_exponent_cycles", t.victim_exponent_cycles}};
  if (!t.decoded) j["decode_error"] = t.decode_error;
  return j;
}

json scan_json(const ScanSummary& s) {
  json matches = json::array(), ranked = json::array();
  for (auto m : s.matches) matches.push_back(location_json(m));
  for (std::size_t i = 0; i < s.ranked.size(); ++i) {
    json r = location_json(s.ranked[i]);
    r["median_distance"] = s.ranked_distance[i];
    ranked.push_back(r);
  }
  return {{"performed", s.performed},
          {"matches", matches},
          {"ranked", ranked},
          {"trials", s.trials},
          {"trials_to_first_hit", s.trials_to_first_hit},
          {"simulated_seconds", s.simulated_seconds},
          {"seconds_to_first_hit", s.seconds_to_first_hit}};
}

std::vector<PartialKey> decoded_prefix(const std::vector<PartialKey>& all, const std::vector<TraceSummary>& sums,
                                       std::size_t n) {
  std::vector<PartialKey> out;
  for (std::size_t i = 0; i < n && i < all.size(); ++i)
    if (sums[i].decoded) out.push_back(all[i]);
  return out;
}

std::size_t merged_errors(const std::vector<PartialKey>& parts, std::size_t lookahead, const Bits& reference) {
  if (parts.empty()) return reference.size();
  return bit_errors(merge_keys(parts, lookahead).bits, reference);
}

struct CollectedRun {
  CacheLocation set;
  std::size_t eviction_set_size = 0;
  ScanSummary scan;
  std::vector<RawTrace> traces;
  std::vector<MonitorStats> stats;
  std::vector<TraceSummary> summaries;
  std::vector<PartialKey> partials;
  Bits reference;
  std::uint64_t key_seed = 0;
};

CollectedRun collect(const ExperimentConfig& cfg, std::uint64_t seed, unsigned n_traces, bool decode,
                     StageTiming* timing) {
  CollectedRun run;
  const std::uint64_t digest = config_digest(cfg);
  Session session(cfg, seed);
  run.reference = session.key().exponent;
  run.key_seed = session.key_seed();

  auto t0 = Clock::now();
  run.set = run_stage("scan", seed, [&] { return session.choose_set(&run.scan); });
  if (timing) timing->scan = seconds_since(t0);

  t0 = Clock::now();
  const EvictionSet es = run_stage("eviction_set", seed, [&] { return session.attacker().generate_eviction_set(run.set); });
  run.eviction_set_size = es.addresses.size();
  if (timing) timing->eviction_set = seconds_since(t0);

  t0 = Clock::now();
  for (std::uint32_t t = 0; t < n_traces; ++t) {
    MonitorResult mr = run_stage("monitor", seed, [&] { return session.monitor(es, t, digest); });
    run.traces.push_back(std::move(mr.trace));
    run.stats.push_back(mr.stats);
  }
  if (timing) timing->monitor = seconds_since(t0);

  if (decode) {
    t0 = Clock::now();
    run.partials.resize(n_traces);
    for (std::uint32_t t = 0; t < n_traces; ++t)
      run.summaries.push_back(summarize(run.traces[t], &run.stats[t], t, session.trace_seed(t), cfg.victim.key_bits,
                                        cfg.recovery, &run.reference, &run.partials[t]));
    if (timing) timing->recovery = seconds_since(t0);
  }
  return run;
}

void write_traces(const std::vector<RawTrace>& traces, const fs::path& dir) {
  fs::create_directories(dir);
  for (const RawTrace& t : traces) {
    char name[32];
    std::snprintf(name, sizeof name, "trace_%03u.csv", t.meta.trace_id);
    write_trace_csv(t, (dir / name).string());
  }
}

}  // namespace

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& f) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

ExperimentReport run_end_to_end(const ExperimentConfig& cfg, std::uint64_t seed, const RunOptions& opt) {
  cfg.validate();
  const auto t_start = Clock::now();
  StageTiming timing;
  CollectedRun run = collect(cfg, seed, cfg.attack.n_traces, true, &timing);

  const auto t_rec = Clock::now();
  ExperimentReport r;
  r.config_digest = config_digest(cfg);
  r.seed = seed;
  r.key_bits = cfg.victim.key_bits;
  r.key_seed = run.key_seed;
  r.set_source = cfg.attack.set_source;
  r.monitored_set = run.set;
  r.eviction_set_size = run.eviction_set_size;
  r.scan = run.scan;
  r.traces = run.summaries;
  r.lookahead = cfg.attack.lookahead;
  r.reference = run.reference;

  const auto parts = decoded_prefix(run.partials, run.summaries, run.partials.size());
  run_stage("recovery", seed, [&] {
    require(!parts.empty(), ErrorKind::stage, "no trace could be decoded");
    const MergeResult m = merge_keys(parts, cfg.attack.lookahead);
    r.recovered = m.bits;
    r.merged_bits = m.bits.size();
    r.merge_ties = m.ties;
    for (auto c : m.corrections_per_key) r.merge_corrections += c;
    r.merged_bit_errors = bit_errors(m.bits, r.reference);
    return 0;
  });

  const double res = cfg.kernel.counter_resolution;
  std::vector<double> perr, span, mult, probe, probe_med;
  for (const auto& t : r.traces) {
    perr.push_back(t.partial_error);
    probe.push_back(t.mean_probe_cycles);
    probe_med.push_back(t.median_probe_cycles);
    if (!t.decoded) continue;
    span.push_back(t.exponent_span_ticks * res);
    mult.push_back(t.mult_time_ticks * res);
  }
  r.mean_partial_error = mean_of(perr);
  r.mean_trace_span_cycles = mean_of(span);
  r.mean_mult_cycles = mean_of(mult);
  r.mean_probe_cycles = mean_of(probe);
  r.median_probe_cycles = mean_of(probe_med);

  for (std::size_t n = 1; n <= run.partials.size(); ++n)
    r.errors_vs_traces.emplace_back(n, merged_errors(decoded_prefix(run.partials, run.summaries, n),
                                                     cfg.attack.lookahead, r.reference));
  for (std::size_t la : {5, 10, 15, 20, 25, 30, 40})
    r.errors_vs_lookahead.emplace_back(la, merged_errors(parts, la, r.reference));
  timing.recovery += seconds_since(t_rec);
  timing.total = seconds_since(t_start);
  if (opt.timing) *opt.timing = timing;

  if (!opt.out_dir.empty()) {
    const fs::path dir(opt.out_dir);
    fs::create_directories(dir);
    if (opt.write_traces) write_traces(run.traces, dir / "traces");
    write_text(dir / "config.json", config_to_json(cfg));
    write_text(dir / "report.json", report_to_json(r));
    write_text(dir / "timing.json", timing_to_json(timing));
    write_text(dir / "key.hex", bits_to_hex(r.recovered));
    write_text(dir / "reference.hex", bits_to_hex(r.reference));
    std::ostringstream a, b;
    a << "n_traces,bit_errors\n";
    for (auto [n, e] : r.errors_vs_traces) a << n << ',' << e << '\n';
    b << "lookahead,bit_errors\n";
    for (auto [la, e] : r.errors_vs_lookahead) b << la << ',' << e << '\n';
    write_text(dir / "errors_vs_traces.csv", a.str());
    write_text(dir / "errors_vs_lookahead.csv", b.str());
  }
  return r;
}

std::string report_to_json(const ExperimentReport& r, int indent) {
  json traces = json::array();
  for (const auto& t : r.traces) traces.push_back(trace_summary_json(t));
  json evt = json::array(), evl = json::array();
  for (auto [n, e] : r.errors_vs_traces) evt.push_back({{"n_traces", n}, {"bit_errors", e}});
  for (auto [la, e] : r.errors_vs_lookahead) evl.push_back({{"lookahead", la}, {"bit_errors", e}});
  json j = {{"config_digest", digest_hex(r.config_digest)},
            {"seed", r.seed},
            {"key_bits", r.key_bits},
            {"key_seed", r.key_seed},
            {"set_source", to_string(r.set_source)},
            {"monitored_set", location_json(r.monitored_set)},
            {"eviction_set_size", r.eviction_set_size},
            {"scan", scan_json(r.scan)},
            {"traces", traces},
            {"lookahead", r.lookahead},
            {"merged_bits", r.merged_bits},
            {"merged_bit_errors", r.merged_bit_errors},
            {"merge_ties", r.merge_ties},
            {"merge_corrections", r.merge_corrections},
            {"mean_partial_error", r.mean_partial_error},
            {"mean_trace_span_cycles", r.mean_trace_span_cycles},
            {"mean_mult_cycles", r.mean_mult_cycles},
            {"mean_probe_cycles", r.mean_probe_cycles},
            {"median_probe_cycles", r.median_probe_cycles},
            {"errors_vs_traces", evt},
            {"errors_vs_lookahead", evl},
            {"recovered_hex", bits_to_hex(r.recovered)}};
  return j.dump(indent);
}

std::string timing_to_json(const StageTiming& t, int indent) {
  return json{{"scan_seconds", t.scan},
              {"eviction_set_seconds", t.eviction_set},
              {"monitor_seconds", t.monitor},
              {"recovery_seconds", t.recovery},
              {"total_seconds", t.total}}
      .dump(indent);
}

std::string scan_to_json(const ScanSummary& s, int indent) { return scan_json(s).dump(indent); }

ScanSummary run_scan(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
  cfg.validate();
  Session session(cfg, seed);
  ScanSummary s = run_stage("scan", seed, [&] { return session.scan(); });
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    json j = scan_json(s);
    j["config_digest"] = digest_hex(config_digest(cfg));
    j["seed"] = seed;
    write_text(fs::path(out_dir) / "scan.json", j.dump(2));
  }
  return s;
}

MonitorRun run_monitor(const ExperimentConfig& cfg, std::uint64_t seed, unsigned n_traces, const std::string& out_dir) {
  cfg.validate();
  require(n_traces >= 1, ErrorKind::invalid_argument, "need at least one trace");
  CollectedRun run = collect(cfg, seed, n_traces, false, nullptr);
  MonitorRun m;
  m.set = run.set;
  m.traces = std::move(run.traces);
  m.stats = std::move(run.stats);
  m.reference = run.reference;
  if (!out_dir.empty()) {
    write_traces(m.traces, out_dir);
    write_text(fs::path(out_dir) / "reference.hex", bits_to_hex(m.reference));
  }
  return m;
}

RecoveryReport recover_traces(const std::vector<RawTrace>& traces, unsigned key_bits, unsigned lookahead,
                              const RecoveryConfig& rcfg, const std::optional<Bits>& reference) {
  require(!traces.empty(), ErrorKind::invalid_argument, "no traces to recover from");
  RecoveryReport r;
  std::vector<PartialKey> parts;
  for (const RawTrace& t : traces) {
    PartialKey pk;
    TraceSummary s = summarize(t, nullptr, t.meta.trace_id, t.meta.seed, key_bits, rcfg,
                               reference ? &*reference : nullptr, &pk);
    if (s.decoded) parts.push_back(std::move(pk));
    r.traces.push_back(std::move(s));
  }
  require(!parts.empty(), ErrorKind::stage, "no trace could be decoded");
  const MergeResult m = merge_keys(parts, lookahead);
  r.recovered = m.bits;
  r.ties = m.ties;
  for (auto c : m.corrections_per_key) r.corrections += c;
  if (reference) r.bit_errors = bit_errors(m.bits, *reference);
  return r;
}

std::string recovery_to_json(const RecoveryReport& r, int indent) {
  json traces = json::array();
  for (const auto& t : r.traces) traces.push_back(trace_summary_json(t));
  json j = {{"traces", traces},
            {"recovered_hex", bits_to_hex(r.recovered)},
            {"recovered_bits", r.recovered.size()},
            {"merge_ties", r.ties},
            {"merge_corrections", r.corrections}};
  j["bit_errors"] = r.bit_errors ? json(*r.bit_errors) : json(nullptr);
  return j.dump(indent);
}

SweepParam sweep_param_from_string(const std::string& s) {
  if (s == "n_traces") return SweepParam::n_traces;
  if (s == "lookahead") return SweepParam::lookahead;
  if (s == "noise_scale") return SweepParam::noise_scale;
  throw Error(ErrorKind::invalid_argument, "unknown sweep parameter '" + s + "' (n_traces | lookahead | noise_scale)");
}

std::string to_string(SweepParam p) {
  switch (p) {
    case SweepParam::n_traces: return "n_traces";
    case SweepParam::lookahead: return "lookahead";
    case SweepParam::noise_scale: return "noise_scale";
  }
  return "n_traces";
}

SweepTable sweep(const ExperimentConfig& cfg, std::uint64_t seed, SweepParam param, const std::vector<double>& values,
                 unsigned runs, unsigned threads) {
  cfg.validate();
  require(!values.empty(), ErrorKind::invalid_argument, "sweep needs at least one value");
  require(runs >= 1, ErrorKind::invalid_argument, "sweep needs at least one run");
  for (double v : values) {
    require(v > 0.0 && std::isfinite(v), ErrorKind::invalid_argument, "sweep values must be positive");
    if (param != SweepParam::noise_scale)
      require(v == std::floor(v), ErrorKind::invalid_argument, "sweep values must be integers for this parameter");
  }
  SweepTable table;
  table.param = param;
  table.runs = runs;
  table.rows.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    table.rows[i].value = values[i];
    table.rows[i].errors.assign(runs, 0);
  }
  std::vector<std::vector<double>> perr(values.size(), std::vector<double>(runs, 0.0));

  if (param == SweepParam::noise_scale) {
    parallel_for(values.size() * runs, threads, [&](std::size_t job) {
      const std::size_t vi = job / runs, r = job % runs;
      ExperimentConfig c = cfg;
      c.kernel.noise.interrupt_rate *= values[vi];
      c.kernel.noise.spurious_miss_rate = std::min(1.0, c.kernel.noise.spurious_miss_rate * values[vi]);
      const ExperimentReport rep = run_end_to_end(c, derive_seed(seed, r));
      table.rows[vi].errors[r] = rep.merged_bit_errors;
      perr[vi][r] = rep.mean_partial_error;
    });
  } else {
    unsigned n_max = cfg.attack.n_traces;
    if (param == SweepParam::n_traces)
      n_max = static_cast<unsigned>(*std::max_element(values.begin(), values.end()));
    parallel_for(runs, threads, [&](std::size_t r) {
      const CollectedRun run = collect(cfg, derive_seed(seed, r), n_max, true, nullptr);
      for (std::size_t vi = 0; vi < values.size(); ++vi) {
        const auto v = static_cast<std::size_t>(values[vi]);
        const std::size_t n = param == SweepParam::n_traces ? v : n_max;
        const std::size_t la = param == SweepParam::lookahead ? v : cfg.attack.lookahead;
        const auto parts = decoded_prefix(run.partials, run.summaries, n);
        table.rows[vi].errors[r] = merged_errors(parts, la, run.reference);
        std::vector<double> pe;
        for (std::size_t t = 0; t < n; ++t) pe.push_back(run.summaries[t].partial_error);
        perr[vi][r] = mean_of(pe);
      }
    });
  }
  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    std::vector<double> e(table.rows[vi].errors.begin(), table.rows[vi].errors.end());
    table.rows[vi].mean = mean_of(e);
    table.rows[vi].stddev = stddev_of(e);
    table.rows[vi].mean_partial_error = mean_of(perr[vi]);
  }
  return table;
}

std::string sweep_to_csv(const SweepTable& t) {
  std::ostringstream out;
  out << to_string(t.param) << ",mean_bit_errors,stddev_bit_errors,mean_partial_error,runs\n";
  for (const auto& row : t.rows)
    out << row.value << ',' << row.mean << ',' << row.stddev << ',' << row.mean_partial_error << ',' << t.runs
        << '\n';
  return out.str();
}

std::string sweep_to_json(const SweepTable& t, int indent) {
  json rows = json::array();
  for (const auto& row : t.rows)
    rows.push_back({{"value", row.value},
                    {"mean", row.mean},
                    {"stddev", row.stddev},
                    {"mean_partial_error", row.mean_partial_error},
                    {"errors", row.errors}});
  return json{{"param", to_string(t.param)}, {"runs", t.runs}, {"rows", rows}}.dump(indent);
}

NoiseCalibrationResult calibrate_noise(const ExperimentConfig& cfg, std::uint64_t seed, double target, unsigned budget,
                                       double tolerance, unsigned traces_per_eval) {
  cfg.validate();
  require(target >= 0.0 && target < 0.5, ErrorKind::invalid_argument, "target error must be in [0, 0.5)");
  require(traces_per_eval >= 1, ErrorKind::invalid_argument, "traces_per_eval must be at least 1");
  NoiseCalibrationResult res;
  res.target = target;
  if (target == 0.0) {
    res.noise = NoiseConfig::zero();
    res.noise.interrupt_min = cfg.kernel.noise.interrupt_min;
    res.noise.interrupt_max = cfg.kernel.noise.interrupt_max;
    res.converged = true;
    return res;
  }
  require(budget >= traces_per_eval, ErrorKind::invalid_argument, "budget is smaller than one evaluation");

  // Grid coordinates in decades; the spurious rate below its floor is off.
  constexpr double kRateLo = -3.0, kRateHi = 1.5;
  constexpr double kSpurLo = -6.0, kSpurHi = -2.0;
  constexpr double kConvergedGap = 0.01;
  struct Point {
    double rate, spur;
    bool operator<(const Point& o) const { return std::tie(rate, spur) < std::tie(o.rate, o.spur); }
  };
  auto noise_at = [&](Point p) {
    NoiseConfig n = cfg.kernel.noise;
    n.interrupt_rate = std::pow(10.0, p.rate);
    n.spurious_miss_rate = p.spur < kSpurLo ? 0.0 : std::pow(10.0, p.spur);
    return n;
  };
  std::map<Point, double> cache;
  auto evaluate = [&](Point p) -> std::optional<double> {
    p.rate = std::round(p.rate * 1024.0) / 1024.0;
    p.spur = std::round(p.spur * 1024.0) / 1024.0;
    if (auto it = cache.find(p); it != cache.end()) return it->second;
    if (res.runs_used + traces_per_eval > budget) return std::nullopt;
    ExperimentConfig c = cfg;
    c.kernel.noise = noise_at(p);
    c.attack.set_source = SetSource::oracle;
    const CollectedRun run = collect(c, derive_seed(seed, 0x63616c), traces_per_eval, true, nullptr);
    std::vector<double> e;
    for (const auto& s : run.summaries) e.push_back(s.partial_error);
    res.runs_used += traces_per_eval;
    ++res.evaluations;
    return cache[p] = mean_of(e);
  };

  Point cur{-1.0, kSpurLo - 1.0};
  auto first = evaluate(cur);
  double cur_err = *first;
  double step = 0.5;
  auto gap = [&](double e) { return std::abs(e - target); };
  bool out_of_budget = false;
  while (gap(cur_err) > tolerance && step >= 1.0 / 256.0 && !out_of_budget) {
    bool moved = false;
    for (int coord = 0; coord < 2 && !moved; ++coord) {
      for (int dir : {-1, 1}) {
        Point cand = cur;
        if (coord == 0) {
          cand.rate = std::clamp(cur.rate + dir * step, kRateLo, kRateHi);
          if (cand.rate == cur.rate) continue;
        } else {
          if (cur.spur < kSpurLo)
            cand.spur = dir > 0 ? kSpurLo : cur.spur;
          else
            cand.spur = cur.spur + dir * step;
          if (cand.spur > kSpurHi || cand.spur == cur.spur) continue;
        }
        const auto e = evaluate(cand);
        if (!e) {
          out_of_budget = true;
          break;
        }
        if (gap(*e) < gap(cur_err)) {
          cur = cand;
          cur_err = *e;
          moved = true;
          break;
        }
      }
      if (out_of_budget) break;
    }
    if (!moved) step /= 2.0;
  }
  res.noise = noise_at(cur);
  res.achieved_error = cur_err;
  res.converged = gap(cur_err) <= kConvergedGap;
  return res;
}

std::string calibration_to_json(const NoiseCalibrationResult& r, int indent) {
  return json{{"noise", json::parse(noise_to_json(r.noise))},
              {"achieved_error", r.achieved_error},
              {"target", r.target},
              {"converged", r.converged},
              {"runs_used", r.runs_used},
              {"evaluations", r.evaluations}}
      .dump(indent);
}

}  // namespace ppsim
