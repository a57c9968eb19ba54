#include "ppsim/dram_sim.hpp"

namespace ppsim {

void DramTiming::validate() const {
  require(row_hit < closed_row && closed_row < conflict, ErrorKind::config,
          "DRAM latencies must satisfy row_hit < closed_row < conflict");
  require(2 * jitter < closed_row - row_hit && 2 * jitter < conflict - closed_row, ErrorKind::config,
          "DRAM jitter must be smaller than half the gap between latency classes");
}

DramSim::DramSim(DramMapping map, DramTiming timing, std::uint64_t seed)
    : map_(map), timing_(timing), open_rows_(kBankCount, 0), is_open_(kBankCount, 0), rng_(seed) {
  map_.validate();
  timing_.validate();
}

Cycles DramSim::jittered(Cycles base) {
  if (timing_.jitter == 0) return base;
  const auto j = static_cast<std::int64_t>(rng_.range(0, 2 * timing_.jitter)) -
                 static_cast<std::int64_t>(timing_.jitter);
  return static_cast<Cycles>(static_cast<std::int64_t>(base) + j);
}

Cycles DramSim::access(PhysicalAddress addr) { return access(dram_location(addr, map_)); }

Cycles DramSim::access(const DramLocation& loc) {
  const std::uint32_t b = loc.bank_index();
  Cycles base;
  if (!is_open_[b])
    base = timing_.closed_row;
  else if (open_rows_[b] == loc.row)
    base = timing_.row_hit;
  else
    base = timing_.conflict;
  is_open_[b] = 1;
  open_rows_[b] = loc.row;
  return jittered(base);
}

double DramSim::hammer(PhysicalAddress a, PhysicalAddress b, unsigned rounds) {
  require(rounds >= 1, ErrorKind::invalid_argument, "hammer needs at least one round");
  const DramLocation la = dram_location(a, map_);
  const DramLocation lb = dram_location(b, map_);
  access(la);
  access(lb);
  Cycles total = 0;
  for (unsigned r = 0; r < rounds; ++r) {
    total += access(la);
    total += access(lb);
  }
  return static_cast<double>(total) / (2.0 * rounds);
}

std::optional<std::uint64_t> DramSim::open_row(std::uint32_t bank_index) const {
  if (bank_index >= kBankCount || !is_open_[bank_index]) return std::nullopt;
  return open_rows_[bank_index];
}

void DramSim::reset() {
  std::fill(is_open_.begin(), is_open_.end(), 0);
  std::fill(open_rows_.begin(), open_rows_.end(), 0);
}

}  // namespace ppsim
