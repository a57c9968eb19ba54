#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ppsim/types.hpp"

namespace ppsim {

/// Last-level cache geometry. Line size and the set-index low bit are fixed
/// by the x86 line format; the rest is configurable for small test caches.
struct CacheGeometry {
  std::uint32_t line_size = 64;
  std::uint32_t n_sets = 2048;
  std::uint32_t n_ways = 12;
  std::uint32_t n_slices = 2;
  std::uint32_t set_index_low_bit = 6;

  void validate() const;
  std::uint32_t set_bits() const;
  std::uint32_t slice_bits() const;
  /// Distance between two addresses with the same set index (128 KB by default).
  std::uint64_t set_stride() const { return std::uint64_t{n_sets} * line_size; }
  std::uint32_t total_sets() const { return n_sets * n_slices; }
};

/// Cache set and slice of an address. The slice is an XOR-fold of all line
/// bits (bit 6 and up), folded to log2(n_slices) bits.
CacheLocation cache_location(PhysicalAddress addr, const CacheGeometry& geo);

/// XOR masks of a DRAM address mapping. Each output bit is the parity of the
/// address bits selected by its mask.
struct DramMapping {
  std::uint64_t channel_mask = 0;
  std::uint64_t bg0_mask = 0;
  std::uint64_t bg1_mask = 0;
  std::uint64_t ba0_mask = 0;
  std::uint64_t ba1_mask = 0;
  std::uint64_t rank_mask = 0;
  unsigned row_low_bit = 18;

  /// Two-DIMM Skylake mapping (i5-6200U, 12 GB).
  static DramMapping skylake_two_dimm();
  static std::uint64_t mask_from_bits(const std::vector<unsigned>& bits);
  static std::vector<unsigned> bits_from_mask(std::uint64_t mask);

  void validate() const;
  bool operator==(const DramMapping&) const = default;
};

struct DramLocation {
  std::uint8_t channel = 0;
  std::uint8_t bank_group = 0;  // BG1:BG0
  std::uint8_t bank = 0;        // BA1:BA0
  std::uint8_t rank = 0;
  std::uint64_t row = 0;

  /// Dense index over (channel, rank, bank group, bank); 64 banks total.
  std::uint32_t bank_index() const {
    return (std::uint32_t{channel} << 5) | (std::uint32_t{rank} << 4) |
           (std::uint32_t{bank_group} << 2) | bank;
  }
  bool same_bank(const DramLocation& o) const { return bank_index() == o.bank_index(); }
  auto operator<=>(const DramLocation&) const = default;
};

inline constexpr std::uint32_t kBankCount = 64;

DramLocation dram_location(PhysicalAddress addr, const DramMapping& map);

struct AddressPair {
  PhysicalAddress low;
  PhysicalAddress high;
  bool operator==(const AddressPair&) const = default;
};

/// Exhaustive search for row-start conflict pairs inside [0, block_size]:
/// same channel/rank/bank group/bank, different row, 64 B to 4 KB apart,
/// address bits 6..21 all zero in the higher and all one in the lower address.
std::vector<AddressPair> find_row_start_pairs(const DramMapping& map, std::uint64_t block_size);

/// Re-checks the four row-start constraints for one pair.
bool satisfies_row_start_constraints(const AddressPair& pair, const DramMapping& map);

}  // namespace ppsim
