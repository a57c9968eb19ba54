#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ppsim/config.hpp"

namespace ppsim {

struct TraceSummary {
  std::uint32_t id = 0;
  std::uint64_t seed = 0;
  bool decoded = false;
  std::string decode_error;
  double partial_error = 0.0;
  std::size_t edit_distance = 0;
  std::size_t partial_bits = 0;
  std::size_t n_peaks = 0;
  double mult_time_ticks = 0.0;
  double exponent_span_ticks = 0.0;
  std::size_t misses = 0;
  std::uint64_t probes = 0;
  std::uint64_t skipped_probes = 0;
  double mean_probe_cycles = 0.0;
  double median_probe_cycles = 0.0;
  double threshold = 0.0;
  Cycles monitored_cycles = 0;
  Cycles victim_mult_cycles = 0;
  Cycles victim_exponent_cycles = 0;  // work time of the exponentiation
};

struct ScanSummary {
  bool performed = false;
  std::vector<CacheLocation> matches;
  std::vector<CacheLocation> ranked;
  std::vector<double> ranked_distance;
  unsigned trials = 0;
  unsigned trials_to_first_hit = 0;
  double simulated_seconds = 0.0;
  double seconds_to_first_hit = 0.0;
};

struct ExperimentReport {
  std::uint64_t config_digest = 0;
  std::uint64_t seed = 0;
  unsigned key_bits = 0;
  std::uint64_t key_seed = 0;
  SetSource set_source = SetSource::scan;
  CacheLocation monitored_set;
  std::size_t eviction_set_size = 0;
  ScanSummary scan;
  std::vector<TraceSummary> traces;
  unsigned lookahead = 20;
  std::size_t merged_bits = 0;
  std::size_t merged_bit_errors = 0;
  std::size_t merge_ties = 0;
  std::size_t merge_corrections = 0;
  double mean_partial_error = 0.0;
  double mean_trace_span_cycles = 0.0;  // exponentiation span seen by the attacker
  double mean_mult_cycles = 0.0;        // estimated from the traces
  double mean_probe_cycles = 0.0;
  double median_probe_cycles = 0.0;
  std::vector<std::pair<std::size_t, std::size_t>> errors_vs_traces;
  std::vector<std::pair<std::size_t, std::size_t>> errors_vs_lookahead;
  Bits recovered;
  Bits reference;
};

struct StageTiming {
  double scan = 0.0;
  double eviction_set = 0.0;
  double monitor = 0.0;
  double recovery = 0.0;
  double total = 0.0;
};

struct RunOptions {
  std::string out_dir;  // empty: nothing is written
  bool write_traces = true;
  StageTiming* timing = nullptr;
};

/// scan -> monitor x n_traces -> recovery. Stage failures are rethrown as
/// ErrorKind::stage naming the stage and the seed.
ExperimentReport run_end_to_end(const ExperimentConfig& cfg, std::uint64_t seed, const RunOptions& opt = {});

std::string report_to_json(const ExperimentReport& r, int indent = 2);
std::string timing_to_json(const StageTiming& t, int indent = 2);

std::string scan_to_json(const ScanSummary& s, int indent = 2);
ScanSummary run_scan(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& out_dir = {});

struct MonitorRun {
  CacheLocation set;
  std::vector<RawTrace> traces;
  std::vector<MonitorStats> stats;
  Bits reference;
};

/// Monitors n signatures on the set chosen by cfg.attack.set_source.
MonitorRun run_monitor(const ExperimentConfig& cfg, std::uint64_t seed, unsigned n_traces,
                       const std::string& out_dir = {});

struct RecoveryReport {
  std::vector<TraceSummary> traces;
  Bits recovered;
  std::optional<std::size_t> bit_errors;
  std::size_t ties = 0;
  std::size_t corrections = 0;
};

RecoveryReport recover_traces(const std::vector<RawTrace>& traces, unsigned key_bits, unsigned lookahead,
                              const RecoveryConfig& rcfg, const std::optional<Bits>& reference = std::nullopt);
std::string recovery_to_json(const RecoveryReport& r, int indent = 2);

enum class SweepParam { n_traces, lookahead, noise_scale };
SweepParam sweep_param_from_string(const std::string& s);
std::string to_string(SweepParam p);

struct SweepRow {
  double value = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  double mean_partial_error = 0.0;
  std::vector<std::size_t> errors;  // merged bit errors per run
};

struct SweepTable {
  SweepParam param = SweepParam::n_traces;
  unsigned runs = 0;
  std::vector<SweepRow> rows;
};

/// Repeated seeded runs per value; run r uses seed derive_seed(seed, r).
/// n_traces and lookahead rows share each run's traces.
SweepTable sweep(const ExperimentConfig& cfg, std::uint64_t seed, SweepParam param, const std::vector<double>& values,
                 unsigned runs, unsigned threads = 0);
std::string sweep_to_csv(const SweepTable& t);
std::string sweep_to_json(const SweepTable& t, int indent = 2);

struct NoiseCalibrationResult {
  NoiseConfig noise;
  double achieved_error = 0.0;
  double target = 0.0;
  bool converged = false;
  unsigned runs_used = 0;
  unsigned evaluations = 0;
};

/// Coordinate descent over log-spaced interrupt and spurious-miss rates
/// until the mean single-trace error is within `tolerance` of `target`.
/// Converged means within one percentage point.
/// `budget` counts monitored traces.
NoiseCalibrationResult calibrate_noise(const ExperimentConfig& cfg, std::uint64_t seed, double target,
                                       unsigned budget = 200, double tolerance = 0.0025,
                                       unsigned traces_per_eval = 10);
std::string calibration_to_json(const NoiseCalibrationResult& r, int indent = 2);

/// Runs f(0..n-1) on up to `threads` workers (0: hardware concurrency).
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& f);

}  // namespace ppsim
