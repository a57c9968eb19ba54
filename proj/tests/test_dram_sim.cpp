#include "doctest.h"
#include "ppsim/dram_sim.hpp"

using namespace ppsim;

namespace {

DramTiming exact() {
  DramTiming t;
  t.jitter = 0;
  return t;
}

}  // namespace

TEST_CASE("closed row, row hit and conflict latencies") {
  DramSim d(DramMapping::skylake_two_dimm(), exact(), 1);
  const PhysicalAddress lo{0x3fffc0}, hi{0x400000};
  CHECK(d.access(lo) == 250);
  CHECK(d.access(lo) == 200);
  CHECK(d.access(hi) == 350);
  CHECK(d.open_row(dram_location(hi, d.mapping()).bank_index()) == std::optional<std::uint64_t>{0x400000 >> 18});
  d.reset();
  CHECK(d.access(hi) == 250);
}

TEST_CASE("hammering a conflict pair costs the conflict latency") {
  DramSim d(DramMapping::skylake_two_dimm(), exact(), 1);
  CHECK(d.hammer(PhysicalAddress{0x3fffc0}, PhysicalAddress{0x400000}, 8) == doctest::Approx(350));
  // Neighbouring lines in the same row: row hits.
  CHECK(d.hammer(PhysicalAddress{0x3fff40}, PhysicalAddress{0x3fff80}, 8) < 350);
  CHECK_THROWS_AS(d.hammer(PhysicalAddress{0}, PhysicalAddress{64}, 0), Error);
}

TEST_CASE("hammer is symmetric up to jitter") {
  DramSim d(DramMapping::skylake_two_dimm(), DramTiming{}, 4);
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const PhysicalAddress a{rng.range(0, 1 << 26) & ~63ull}, b{rng.range(0, 1 << 26) & ~63ull};
    CHECK(std::abs(d.hammer(a, b, 8) - d.hammer(b, a, 8)) <= 2.0 * d.timing().jitter);
  }
}

TEST_CASE("jitter stays within bounds and is seeded") {
  DramTiming t;
  t.jitter = 5;
  DramSim a(DramMapping::skylake_two_dimm(), t, 3), b(DramMapping::skylake_two_dimm(), t, 3);
  for (int i = 0; i < 500; ++i) {
    const PhysicalAddress p{static_cast<std::uint64_t>(i) << 20};
    const Cycles x = a.access(p);
    CHECK(x == b.access(p));
    CHECK(x >= 195);
    CHECK(x <= 355);
  }
}

TEST_CASE("timing validation") {
  DramTiming t;
  t.conflict = 100;
  CHECK_THROWS_AS(t.validate(), Error);
}
