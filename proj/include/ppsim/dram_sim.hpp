#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ppsim/address_model.hpp"
#include "ppsim/rng.hpp"

namespace ppsim {

struct DramTiming {
  Cycles row_hit = 200;
  Cycles closed_row = 250;
  Cycles conflict = 350;
  Cycles jitter = 5;  // uniform in [-jitter, +jitter]

  void validate() const;
};

/// Open-row state of every bank plus the seeded jitter stream.
class DramSim {
 public:
  DramSim(DramMapping map, DramTiming timing, std::uint64_t seed);

  Cycles access(PhysicalAddress addr);
  Cycles access(const DramLocation& loc);

  /// Alternates uncached accesses to a and b and returns the mean latency
  /// of `rounds` pairs, after one warm-up pair.
  double hammer(PhysicalAddress a, PhysicalAddress b, unsigned rounds);

  std::optional<std::uint64_t> open_row(std::uint32_t bank_index) const;
  void reset();

  const DramMapping& mapping() const { return map_; }
  const DramTiming& timing() const { return timing_; }

 private:
  Cycles jittered(Cycles base);

  DramMapping map_;
  DramTiming timing_;
  std::vector<std::uint64_t> open_rows_;
  std::vector<std::uint8_t> is_open_;
  Rng rng_;
};

}  // namespace ppsim
