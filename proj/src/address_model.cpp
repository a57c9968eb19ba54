#include "ppsim/address_model.hpp"

#include <bit>

namespace ppsim {

namespace {

bool is_pow2(std::uint32_t x) { return x != 0 && (x & (x - 1)) == 0; }

std::uint8_t parity(std::uint64_t x) { return static_cast<std::uint8_t>(std::popcount(x) & 1); }

constexpr std::uint64_t kMappingBitsMask = ((std::uint64_t{1} << 23) - 1) & ~std::uint64_t{63};
constexpr std::uint64_t kRowStartBits = ((std::uint64_t{1} << 22) - 1) & ~std::uint64_t{63};

}  // namespace

void CacheGeometry::validate() const {
  require(line_size == 64, ErrorKind::config, "cache line size is fixed at 64 bytes");
  require(set_index_low_bit == 6, ErrorKind::config, "set index starts at bit 6");
  require(is_pow2(n_sets), ErrorKind::config, "n_sets must be a power of two");
  require(is_pow2(n_slices), ErrorKind::config, "n_slices must be a power of two");
  require(n_ways >= 1, ErrorKind::config, "n_ways must be at least 1");
  require(n_ways <= 64, ErrorKind::config, "n_ways must not exceed 64");
}

std::uint32_t CacheGeometry::set_bits() const { return static_cast<std::uint32_t>(std::countr_zero(n_sets)); }

std::uint32_t CacheGeometry::slice_bits() const {
  return static_cast<std::uint32_t>(std::countr_zero(n_slices));
}

CacheLocation cache_location(PhysicalAddress addr, const CacheGeometry& geo) {
  const std::uint64_t line = addr.value >> geo.set_index_low_bit;
  CacheLocation loc;
  loc.set = static_cast<std::uint32_t>(line & (geo.n_sets - 1));
  const std::uint32_t w = geo.slice_bits();
  if (w == 0) return loc;
  std::uint64_t folded = 0;
  for (std::uint64_t x = line; x != 0; x >>= w) folded ^= x;
  loc.slice = static_cast<std::uint32_t>(folded & (geo.n_slices - 1));
  return loc;
}

DramMapping DramMapping::skylake_two_dimm() {
  DramMapping m;
  m.channel_mask = mask_from_bits({19, 18, 13, 12, 9, 8});
  m.bg0_mask = mask_from_bits({14, 7});
  m.bg1_mask = mask_from_bits({22, 18});
  m.ba0_mask = mask_from_bits({19, 15});
  m.ba1_mask = mask_from_bits({21, 17});
  m.rank_mask = mask_from_bits({20, 16});
  m.row_low_bit = 18;
  return m;
}

std::uint64_t DramMapping::mask_from_bits(const std::vector<unsigned>& bits) {
  std::uint64_t mask = 0;
  for (unsigned b : bits) {
    require(b < 64, ErrorKind::config, "mapping bit position out of range: " + std::to_string(b));
    mask |= std::uint64_t{1} << b;
  }
  return mask;
}

std::vector<unsigned> DramMapping::bits_from_mask(std::uint64_t mask) {
  std::vector<unsigned> bits;
  for (int b = 63; b >= 0; --b)
    if (mask >> b & 1) bits.push_back(static_cast<unsigned>(b));
  return bits;
}

void DramMapping::validate() const {
  for (std::uint64_t m : {channel_mask, bg0_mask, bg1_mask, ba0_mask, ba1_mask, rank_mask})
    require((m & ~kMappingBitsMask) == 0, ErrorKind::config,
            "DRAM mapping masks may only use address bits 6..22");
  require(row_low_bit >= 18 && row_low_bit < 40, ErrorKind::config,
          "row_low_bit must be in [18, 40)");
}

DramLocation dram_location(PhysicalAddress addr, const DramMapping& map) {
  const std::uint64_t a = addr.value;
  DramLocation loc;
  loc.channel = parity(a & map.channel_mask);
  loc.bank_group = static_cast<std::uint8_t>(parity(a & map.bg1_mask) << 1 | parity(a & map.bg0_mask));
  loc.bank = static_cast<std::uint8_t>(parity(a & map.ba1_mask) << 1 | parity(a & map.ba0_mask));
  loc.rank = parity(a & map.rank_mask);
  loc.row = a >> map.row_low_bit;
  return loc;
}

bool satisfies_row_start_constraints(const AddressPair& pair, const DramMapping& map) {
  const std::uint64_t lo = pair.low.value;
  const std::uint64_t hi = pair.high.value;
  if (hi <= lo) return false;
  const std::uint64_t diff = hi - lo;
  if (diff < 64 || diff > 4096) return false;
  if ((hi & kRowStartBits) != 0 || (lo & kRowStartBits) != kRowStartBits) return false;
  const DramLocation a = dram_location(pair.low, map);
  const DramLocation b = dram_location(pair.high, map);
  return a.same_bank(b) && a.row != b.row;
}

std::vector<AddressPair> find_row_start_pairs(const DramMapping& map, std::uint64_t block_size) {
  map.validate();
  require(block_size >= (std::uint64_t{4} << 20), ErrorKind::invalid_argument,
          "block_size must be at least 4 MB");
  std::vector<AddressPair> pairs;
  for (std::uint64_t hi = 64; hi <= block_size; hi += 64) {
    if ((hi & kRowStartBits) != 0) continue;
    for (std::uint64_t d = 64; d <= 4096 && d <= hi; d += 64) {
      const AddressPair p{PhysicalAddress{hi - d}, PhysicalAddress{hi}};
      if (satisfies_row_start_constraints(p, map)) pairs.push_back(p);
    }
  }
  return pairs;
}

}  // namespace ppsim
