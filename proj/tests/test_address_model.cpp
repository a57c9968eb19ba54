#include <set>

#include "doctest.h"
#include "ppsim/address_model.hpp"
#include "ppsim/rng.hpp"

using namespace ppsim;

namespace {

// Independent evaluation of the two-DIMM mapping from its bit lists.
int parity_of(std::uint64_t a, std::initializer_list<int> bits) {
  int p = 0;
  for (int b : bits) p ^= static_cast<int>(a >> b & 1);
  return p;
}

std::array<int, 6> bank_bits(std::uint64_t a) {
  return {parity_of(a, {19, 18, 13, 12, 9, 8}), parity_of(a, {14, 7}), parity_of(a, {22, 18}),
          parity_of(a, {19, 15}), parity_of(a, {21, 17}), parity_of(a, {20, 16})};
}

}  // namespace

TEST_CASE("set index comes from bits 6..16") {
  CacheGeometry g;
  CHECK(cache_location(PhysicalAddress{0}, g).set == 0);
  CHECK(cache_location(PhysicalAddress{64}, g).set == 1);
  CHECK(cache_location(PhysicalAddress{63}, g).set == 0);
  CHECK(cache_location(PhysicalAddress{2047 * 64}, g).set == 2047);
  CHECK(cache_location(PhysicalAddress{2048 * 64}, g).set == 0);
  CHECK(g.set_stride() == 128 * 1024);
}

TEST_CASE("addresses one set stride apart share the set index") {
  CacheGeometry g;
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const PhysicalAddress a{rng.range(0, 1ull << 34)};
    CHECK(cache_location(a, g).set == cache_location(a + g.set_stride(), g).set);
  }
}

TEST_CASE("slice is the xor fold of the line bits") {
  CacheGeometry g;
  g.n_slices = 4;
  Rng rng(9);
  for (int i = 0; i < 500; ++i) {
    const std::uint64_t a = rng.range(0, 1ull << 36);
    std::uint32_t s = 0;
    for (int b = 6; b < 64; b += 2) s ^= static_cast<std::uint32_t>(a >> b & 3);
    CHECK(cache_location(PhysicalAddress{a}, g).slice == s);
  }
  g.n_slices = 1;
  CHECK(cache_location(PhysicalAddress{0xdeadbeef}, g).slice == 0);
}

TEST_CASE("geometry validation") {
  CacheGeometry g;
  CHECK_NOTHROW(g.validate());
  g.n_sets = 1000;
  CHECK_THROWS_AS(g.validate(), Error);
  g = CacheGeometry{};
  g.n_ways = 0;
  CHECK_THROWS_AS(g.validate(), Error);
  g = CacheGeometry{};
  g.line_size = 128;
  CHECK_THROWS_AS(g.validate(), Error);
}

TEST_CASE("dram mapping matches the bit-list definition") {
  const DramMapping m = DramMapping::skylake_two_dimm();
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const std::uint64_t a = rng.range(0, 1ull << 34);
    const DramLocation l = dram_location(PhysicalAddress{a}, m);
    const auto b = bank_bits(a);
    CHECK(l.channel == b[0]);
    CHECK(l.bank_group == (b[2] << 1 | b[1]));
    CHECK(l.bank == (b[4] << 1 | b[3]));
    CHECK(l.rank == b[5]);
    CHECK(l.row == a >> 18);
  }
}

TEST_CASE("mask helpers round-trip") {
  const std::vector<unsigned> bits{22, 18, 7};
  CHECK(DramMapping::bits_from_mask(DramMapping::mask_from_bits(bits)) == bits);
  CHECK_THROWS_AS(DramMapping::mask_from_bits({64}), Error);
  DramMapping m = DramMapping::skylake_two_dimm();
  m.rank_mask |= 1ull << 30;
  CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("row-start pairs in a 4 MB block") {
  const auto pairs = find_row_start_pairs(DramMapping::skylake_two_dimm(), 4ull << 20);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].low.value == 0x3fffc0);
  CHECK(pairs[0].high.value == 0x400000);
  for (const auto& p : pairs) CHECK(satisfies_row_start_constraints(p, DramMapping::skylake_two_dimm()));
}

TEST_CASE("row-start pair constraints reject near misses") {
  const DramMapping m = DramMapping::skylake_two_dimm();
  CHECK(satisfies_row_start_constraints({PhysicalAddress{0x3fffc0}, PhysicalAddress{0x400000}}, m));
  // Same row.
  CHECK_FALSE(satisfies_row_start_constraints({PhysicalAddress{0x3fff80}, PhysicalAddress{0x3fffc0}}, m));
  // Wrong order.
  CHECK_FALSE(satisfies_row_start_constraints({PhysicalAddress{0x400000}, PhysicalAddress{0x3fffc0}}, m));
  // Too far apart.
  CHECK_FALSE(satisfies_row_start_constraints({PhysicalAddress{0x3fe000}, PhysicalAddress{0x400000}}, m));
  CHECK_THROWS_AS(find_row_start_pairs(m, 1 << 20), Error);
}
