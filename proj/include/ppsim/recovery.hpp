#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ppsim/trace.hpp"
#include "ppsim/types.hpp"

namespace ppsim {

struct RecoveryConfig {
  Ticks sample_interval = 1000;
  Ticks window = 10000;
  double outlier_factor = 10.0;   // x median probe latency
  double peak_drop_ratio = 0.9;
  unsigned median_peaks = 10;
  double burst_min_mults = 2.5;   // minimum init/clear burst length
  double active_fraction = 0.25;  // of the 95th percentile, for burst segmentation
  unsigned tail_mults = 1;        // silent multiplications between exponent and clear burst
  double mult_time_override = 0.0;  // ticks; 0 estimates from the trace
  unsigned t_iterations = 2;
  double smooth_mults = 1.0;  // box smoothing width before peak search, in multiplications

  void validate() const;
};

/// Squared-latency energy at fixed sampling points.
struct ResampledTrace {
  std::vector<double> values;
  Ticks start = 0;
  Ticks interval = 1000;
  Ticks window = 10000;
  std::vector<std::uint8_t> interpolated;

  double time_of(double index) const { return static_cast<double>(start) + index * static_cast<double>(interval); }
};

ResampledTrace resample(const RawTrace& raw, const RecoveryConfig& cfg = {});

struct Peak {
  double time = 0.0;  // ticks
  double value = 0.0;
};

/// Local maxima of the signal smoothed over one multiplication, with
/// overlap removal and the rolling-median threshold.
std::vector<Peak> detect_peaks(const ResampledTrace& rt, double mult_time, const RecoveryConfig& cfg = {});

struct PartialKey {
  Bits bits;
  std::uint32_t source = 0;
};

/// Decodes peak times into bits. Gaps of g ticks emit round(g/T) - 2 zeros.
/// With an anchor half a multiplication before the exponent start, a lost
/// leading 1 is restored; with the exponent end, trailing zeros are added.
PartialKey extract_partial_key(const std::vector<double>& peak_times, double mult_time,
                               std::optional<double> anchor = std::nullopt,
                               std::optional<double> exp_end = std::nullopt);

struct DecodeResult {
  PartialKey key;
  double mult_time = 0.0;  // ticks
  double exp_start = 0.0;
  double exp_end = 0.0;
  std::size_t n_peaks = 0;
  std::vector<Peak> peaks;
};

/// Full single-trace pipeline: resample, locate the init and clear bursts,
/// estimate the multiplication time and decode the exponent peaks.
DecodeResult decode_trace(const RawTrace& raw, std::size_t key_bits, const RecoveryConfig& cfg = {});
DecodeResult decode_resampled(const ResampledTrace& rt, std::size_t key_bits, const RecoveryConfig& cfg = {});

enum class EditKind : std::uint8_t { match, substitute, insert, del };

struct EditAction {
  EditKind kind = EditKind::match;
  std::size_t position = 0;  // index in the partially transformed sequence
  std::uint8_t value = 0;    // bit written by insert/substitute/match

  bool operator==(const EditAction&) const = default;
};

struct EditScript {
  std::size_t distance = 0;
  std::vector<EditAction> actions;
};

std::size_t levenshtein(const Bits& a, const Bits& b);
/// Minimal script turning a into b. Ties prefer match, then substitute,
/// then delete, then insert.
EditScript edit_distance_actions(const Bits& a, const Bits& b);
Bits apply_actions(const Bits& source, const std::vector<EditAction>& actions);

struct Correction {
  std::size_t key = 0;
  std::size_t position = 0;
  EditKind kind = EditKind::match;
  std::uint8_t value = 0;
};

struct MergeResult {
  Bits bits;
  std::size_t ties = 0;
  std::vector<std::size_t> corrections_per_key;
  std::vector<Correction> corrections;
};

/// Bitwise majority merge; wrong keys are realigned by voting over the
/// edit scripts computed against every agreeing key in a lookahead window.
MergeResult merge_keys(const std::vector<PartialKey>& partials, std::size_t lookahead = 20,
                       bool record_corrections = false);

double partial_error(const Bits& partial, const Bits& truth);
std::size_t bit_errors(const Bits& recovered, const Bits& truth);

}  // namespace ppsim
