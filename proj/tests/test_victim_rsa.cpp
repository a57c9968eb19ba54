#include <boost/multiprecision/cpp_int.hpp>

#include "doctest.h"
#include "ppsim/sim_kernel.hpp"
#include "ppsim/victim_rsa.hpp"

using namespace ppsim;

TEST_CASE("cost table") {
  CHECK(multiplier_buffer_size(1024) == 136);
  CHECK(multiplier_buffer_size(2048) == 264);
  CHECK(multiplier_buffer_size(4096) == 520);
  CHECK(multiplier_buffer_size(8192) == 1032);
  CHECK(table_mult_cycles(1024) == 1764);
  CHECK(table_mult_cycles(2048) == 6624);
  CHECK(table_mult_cycles(4096) == 25462);
  CHECK(table_mult_cycles(8192) == 100440);
  bool ex = false;
  CHECK(multiplier_buffer_size(3072, &ex) == 392);
  CHECK(ex);
  CHECK_THROWS_AS(multiplier_buffer_size(1000), Error);
}

TEST_CASE("buffer spans the listed number of cache sets") {
  CacheGeometry g;
  const std::pair<unsigned, std::size_t> rows[] = {{1024, 3}, {2048, 5}, {4096, 9}, {8192, 17}};
  for (auto [bits, sets] : rows) {
    const VictimLayout l = allocate_victim(bits, false, 1, g);
    CHECK(l.line_count() == sets);
    for (std::size_t i = 1; i < l.line_count(); ++i)
      CHECK(l.spanned_sets[i].set == (l.spanned_sets[i - 1].set + 1) % g.n_sets);
  }
}

TEST_CASE("randomized placement stays in the heap and changes the sets") {
  CacheGeometry g;
  VictimConfig vc;
  std::set<std::uint32_t> first_sets;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const VictimLayout l = allocate_victim(4096, true, s, g, vc);
    CHECK(l.base.value >= vc.heap_base);
    CHECK(l.base.value + l.buffer_size <= vc.heap_base + vc.heap_size);
    first_sets.insert(l.spanned_sets[0].set);
  }
  CHECK(first_sets.size() > 10);
}

TEST_CASE("generated exponents") {
  const RsaKey k = generate_key(4096, 9);
  CHECK(k.exponent.size() == 4096);
  CHECK(k.exponent.front() == 1);
  CHECK(k.exponent.back() == 1);
  CHECK_FALSE(k.functional());
  CHECK(generate_key(4096, 9).exponent == k.exponent);
  CHECK(generate_key(4096, 10).exponent != k.exponent);
  CHECK(signing_exponent(k, false, 3) == k.exponent);
}

TEST_CASE("square and multiply computes modular powers") {
  const RsaKey k = generate_functional_key(256, 5);
  REQUIRE(k.functional());
  const ModExpResult r = mod_exp(k);
  CHECK(r.result == boost::multiprecision::powm(k.base, bits_to_int(k.exponent), k.modulus));
  CHECK(r.squares == k.exponent.size());
  CHECK(r.multiplies == hamming_weight(k.exponent));
  CHECK(r.log.size() == r.squares + r.multiplies);
  // Blinded exponents give the same signature.
  const Bits blinded = signing_exponent(k, true, 77);
  CHECK(blinded != k.exponent);
  CHECK(mod_exp(k.base, blinded, k.modulus).result == r.result);
}

TEST_CASE("int and bit conversions round-trip") {
  const BigInt v("123456789012345678901234567890");
  CHECK(bits_to_int(int_to_bits(v)) == v);
  CHECK(int_to_bits(BigInt(5)) == bits_from_string("101"));
}

TEST_CASE("victim phases follow the exponent") {
  VictimConfig vc;
  vc.key_bits = 1024;
  const Bits e = bits_from_string("1011001");
  const VictimLayout l = allocate_victim(1024, false, 1, CacheGeometry{}, vc);
  VictimProcess v(e, l, vc, 1000, 5000, 1);
  std::vector<PhaseKind> kinds;
  for (const auto& p : v.phases()) kinds.push_back(p.kind);
  using P = PhaseKind;
  const std::vector<P> expect{P::init,     P::square, P::multiply, P::square, P::square, P::multiply,
                              P::square,   P::multiply, P::square, P::square, P::square, P::multiply,
                              P::tail,     P::clear};
  CHECK(kinds == expect);
  CHECK(v.exponent_mults() == 11);
  CHECK(v.start_time() == 5000);
  for (std::size_t i = 1; i < v.phases().size(); ++i)
    CHECK(v.phases()[i].start == v.phases()[i - 1].start + v.phases()[i - 1].duration);
}

TEST_CASE("victim touches land on the buffer and are delayed by interrupts") {
  KernelConfig kc;
  kc.noise = NoiseConfig::zero();
  Kernel k(kc, 1);
  VictimConfig vc;
  vc.key_bits = 1024;
  const VictimLayout l = allocate_victim(1024, false, 1, kc.cache.geometry, vc);
  k.set_observed(l.spanned_sets);
  VictimProcess quiet(bits_from_string("1111"), l, vc, 2000, 0, 1);
  quiet.bind(k);
  quiet.run_until(1'000'000'000, k);
  CHECK(quiet.finished(1'000'000'000));
  CHECK(k.stats().victim_touches > 0);
  for (std::size_t i = 0; i < l.line_count(); ++i) CHECK(k.cache().contains(l.line_address(i)));

  Kernel k2(kc, 1);
  k2.set_observed(l.spanned_sets);
  k2.script_interrupts({{3000, 50'000, InterruptTarget::victim}});
  VictimProcess delayed(bits_from_string("1111"), l, vc, 2000, 0, 1);
  delayed.bind(k2);
  delayed.run_until(1'000'000'000, k2);
  CHECK(delayed.end_time() == quiet.end_time() + 50'000);
  CHECK(delayed.delay() == 50'000);
}

TEST_CASE("effective multiplication time") {
  VictimConfig vc;
  CHECK(effective_mult_cycles(vc, false) == 25462);
  CHECK(effective_mult_cycles(vc, true) == std::llround(25462 * 1.40));
  vc.mult_cycles = 1000;
  CHECK(effective_mult_cycles(vc, false) == 1000);
  CHECK(vc.touches_per_mult() == 64);
}
