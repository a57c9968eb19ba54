#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <optional>
#include <vector>

#include "ppsim/address_model.hpp"
#include "ppsim/rng.hpp"

namespace ppsim {

class Kernel;

using BigInt = boost::multiprecision::cpp_int;

struct RsaKey {
  Bits exponent;  // MSB first, leading bit 1
  BigInt modulus;  // zero for pattern-only keys
  BigInt base;
  BigInt phi;

  std::size_t bit_length() const { return exponent.size(); }
  bool functional() const { return modulus != 0; }
};

/// Random odd exponent with the top bit set. No modulus.
RsaKey generate_key(unsigned bits, std::uint64_t seed);

/// Small textbook RSA key (two random primes) for functional checks.
RsaKey generate_functional_key(unsigned modulus_bits, std::uint64_t seed);

BigInt bits_to_int(const Bits& b);
Bits int_to_bits(const BigInt& v);

/// Exponent actually used for one signature: d, or d + r*phi with blinding.
Bits signing_exponent(const RsaKey& key, bool blinding, std::uint64_t seed);

enum class MulKind : std::uint8_t { square, multiply };

struct ModExpResult {
  BigInt result;  // valid for functional keys only
  std::vector<MulKind> log;
  std::size_t squares = 0;
  std::size_t multiplies = 0;
};

/// Left-to-right square-and-multiply with window size 1.
ModExpResult mod_exp(const RsaKey& key);
ModExpResult mod_exp(const BigInt& base, const Bits& exponent, const BigInt& modulus);

struct VictimConfig {
  unsigned key_bits = 4096;
  std::uint64_t seed = 0;  // key seed; 0 derives it from the experiment seed
  bool randomize = false;
  bool blinding = false;
  unsigned k_touches = 0;  // 0: one touch per 64-bit limb
  std::uint64_t buffer_base = 0x8e4a9c10;
  std::uint64_t heap_base = 0x8e400000;
  std::uint64_t heap_size = 0x400000;
  bool shared_edge_lines = true;
  double prefetch_buddy_prob = 0.3;
  Cycles burst_touch_interval = 50;
  double init_mults_min = 3.0;
  double init_mults_max = 4.0;
  unsigned tail_mults = 1;
  Cycles start_delay_max = 1'000'000;
  Cycles mult_cycles = 0;  // 0: from the key-size cost table
  double attack_slowdown = 1.40;

  void validate() const;
  unsigned touches_per_mult() const { return k_touches ? k_touches : std::max(1u, key_bits / 64); }
};

/// Multiplier buffer size in bytes. Sizes outside the table are
/// extrapolated for multiples of 64 bits and rejected otherwise.
std::uint32_t multiplier_buffer_size(unsigned key_bits, bool* extrapolated = nullptr);
/// Unattacked cycles of one Montgomery multiplication.
Cycles table_mult_cycles(unsigned key_bits);
/// Per-multiplication duration used by the victim model.
Cycles effective_mult_cycles(const VictimConfig& cfg, bool attacked);

struct VictimLayout {
  PhysicalAddress base;
  std::uint32_t buffer_size = 0;
  std::vector<CacheLocation> spanned_sets;
  bool extrapolated = false;

  std::size_t line_count() const { return spanned_sets.size(); }
  PhysicalAddress line_address(std::size_t i) const { return PhysicalAddress{(base.value & ~std::uint64_t{63}) + 64 * i}; }
};

VictimLayout layout_at(PhysicalAddress base, std::uint32_t buffer_size, const CacheGeometry& geo);
VictimLayout allocate_victim(unsigned key_bits, bool randomize, std::uint64_t seed, const CacheGeometry& geo,
                             const VictimConfig& cfg = {});

enum class PhaseKind : std::uint8_t { init, square, multiply, tail, clear };

struct Phase {
  PhaseKind kind;
  Cycles start;  // work time relative to the victim start
  Cycles duration;
};

/// One signature as a timed stream of cache-line touches. Work time is
/// converted to true time by adding the start time and every interrupt
/// delay suffered so far.
class VictimProcess {
 public:
  VictimProcess(const Bits& exponent, const VictimLayout& layout, const VictimConfig& cfg, Cycles mult_cycles,
                Cycles start, std::uint64_t seed);

  /// Selects the lines that fall into the kernel's observed sets.
  void bind(const Kernel& k);

  std::optional<Cycles> next_touch_time();
  /// Start of the next pending interrupt that would delay this victim.
  std::optional<Cycles> next_interrupt_start(Kernel& k);
  void run_until(Cycles t, Kernel& k);
  /// True once all work, including interrupt delays, ends at or before t.
  bool finished(Cycles t) const;

  Cycles start_time() const { return start_; }
  Cycles end_time() const { return start_ + total_work_ + delay_; }
  Cycles delay() const { return delay_; }
  Cycles mult_cycles() const { return mult_; }
  Cycles total_work() const { return total_work_; }
  const std::vector<Phase>& phases() const { return phases_; }
  const VictimLayout& layout() const { return layout_; }
  std::size_t exponent_mults() const { return n_mults_; }
  Cycles exponent_work() const { return n_mults_ * mult_; }

 private:
  bool line_active(PhaseKind kind, std::size_t line) const;
  void emit_line_touches(const Phase& ph, std::size_t line, std::vector<Cycles>& out) const;
  bool refill();

  VictimLayout layout_;
  VictimConfig cfg_;
  Cycles mult_;
  Cycles start_;
  Cycles delay_ = 0;
  Cycles total_work_ = 0;
  std::size_t n_mults_ = 0;
  std::vector<Phase> phases_;
  std::vector<std::uint8_t> edge_;
  std::vector<std::size_t> watched_;
  Rng rng_;

  std::size_t phase_cursor_ = 0;
  std::vector<std::pair<Cycles, std::uint32_t>> pending_;
  std::size_t pending_pos_ = 0;
  std::size_t irq_cursor_ = 0;
};

}  // namespace ppsim
