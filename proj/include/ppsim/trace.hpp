#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ppsim/types.hpp"

namespace ppsim {

struct TraceMeta {
  CacheLocation set;
  std::uint64_t config_digest = 0;
  std::uint64_t seed = 0;
  std::uint32_t trace_id = 0;
  double threshold = 0.0;           // cycles
  double probe_median = 0.0;        // median latency over all probes, cycles
  double counter_resolution = 0.87;  // cycles per tick
  Ticks start_tick = 0;
  Ticks end_tick = 0;
};

/// Timestamps (attacker ticks) of probes classified as misses, with the
/// measured probe latency in cycles.
struct RawTrace {
  std::vector<Ticks> timestamps;
  std::vector<std::uint64_t> latencies;
  TraceMeta meta;

  std::size_t size() const { return timestamps.size(); }
  void validate() const;
};

void write_trace_csv(const RawTrace& t, const std::string& path);
/// Reads the CSV and, when present, its `<path>.meta.json` sidecar.
RawTrace read_trace_csv(const std::string& path);
std::string trace_meta_json(const TraceMeta& m);
TraceMeta trace_meta_from_json(const std::string& text);

}  // namespace ppsim
