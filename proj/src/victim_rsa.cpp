#include "ppsim/victim_rsa.hpp"

#include <algorithm>
#include <boost/multiprecision/miller_rabin.hpp>
#include <cmath>

#include "ppsim/sim_kernel.hpp"

namespace ppsim {

namespace {

struct TableRow {
  unsigned bits;
  std::uint32_t buffer;
  Cycles cycles;
};

constexpr TableRow kCostTable[] = {
    {1024, 136, 1764},
    {2048, 264, 6624},
    {4096, 520, 25462},
    {8192, 1032, 100440},
};

BigInt random_bits(Rng& rng, unsigned bits) {
  BigInt v = 0;
  for (unsigned i = 0; i < bits; i += 64) {
    const unsigned take = std::min(64u, bits - i);
    std::uint64_t word = rng.next();
    if (take < 64) word &= (std::uint64_t{1} << take) - 1;
    v <<= take;
    v |= word;
  }
  return v;
}

BigInt random_prime(Rng& rng, unsigned bits) {
  for (;;) {
    BigInt c = random_bits(rng, bits);
    bit_set(c, bits - 1);
    bit_set(c, 0);
    if (bits >= 2) bit_set(c, bits - 2);
    if (boost::multiprecision::miller_rabin_test(c, 25, rng)) return c;
  }
}

}  // namespace

BigInt bits_to_int(const Bits& b) {
  BigInt v = 0;
  for (auto bit : b) {
    v <<= 1;
    if (bit) v |= 1;
  }
  return v;
}

Bits int_to_bits(const BigInt& v) {
  Bits out;
  if (v == 0) return out;
  const unsigned n = static_cast<unsigned>(msb(v)) + 1;
  out.reserve(n);
  for (unsigned i = n; i-- > 0;) out.push_back(bit_test(v, i) ? 1 : 0);
  return out;
}

RsaKey generate_key(unsigned bits, std::uint64_t seed) {
  require(bits >= 2, ErrorKind::invalid_argument, "key needs at least 2 bits");
  Rng rng(derive_seed(seed, 0x6b6579));
  RsaKey key;
  key.exponent.resize(bits);
  for (unsigned i = 0; i < bits; ++i) key.exponent[i] = static_cast<std::uint8_t>(rng.next() >> 63);
  key.exponent.front() = 1;
  key.exponent.back() = 1;
  return key;
}

RsaKey generate_functional_key(unsigned modulus_bits, std::uint64_t seed) {
  require(modulus_bits >= 16 && modulus_bits <= 2048, ErrorKind::invalid_argument,
          "functional keys support 16..2048 modulus bits");
  Rng rng(derive_seed(seed, 0x66756e63));
  for (;;) {
    const BigInt p = random_prime(rng, modulus_bits / 2);
    const BigInt q = random_prime(rng, modulus_bits - modulus_bits / 2);
    if (p == q) continue;
    const BigInt phi = (p - 1) * (q - 1);
    const BigInt e = 65537;
    if (gcd(e, phi) != 1) continue;
    // d = e^-1 mod phi via the extended Euclidean algorithm.
    BigInt r0 = phi, r1 = e, t0 = 0, t1 = 1;
    while (r1 != 0) {
      const BigInt qt = r0 / r1;
      BigInt tmp = r0 - qt * r1;
      r0 = r1;
      r1 = tmp;
      tmp = t0 - qt * t1;
      t0 = t1;
      t1 = tmp;
    }
    if (t0 < 0) t0 += phi;
    RsaKey key;
    key.modulus = p * q;
    key.phi = phi;
    key.exponent = int_to_bits(t0);
    if (key.exponent.empty()) continue;
    key.base = 2 + random_bits(rng, modulus_bits - 2) % (key.modulus - 3);
    return key;
  }
}

Bits signing_exponent(const RsaKey& key, bool blinding, std::uint64_t seed) {
  if (!blinding) return key.exponent;
  Rng rng(derive_seed(seed, 0x626c6e64));
  BigInt phi = key.phi;
  if (phi == 0) {
    phi = random_bits(rng, static_cast<unsigned>(key.bit_length()));
    bit_set(phi, static_cast<unsigned>(key.bit_length()) - 1);
  }
  const BigInt r = 1 + rng.next() % 0xffffffffULL;
  return int_to_bits(bits_to_int(key.exponent) + r * phi);
}

ModExpResult mod_exp(const BigInt& base, const Bits& exponent, const BigInt& modulus) {
  ModExpResult out;
  const bool functional = modulus != 0;
  if (functional) require(modulus > 1, ErrorKind::invalid_argument, "modulus must exceed 1");
  BigInt x = 1;
  out.log.reserve(exponent.size() * 2);
  for (auto bit : exponent) {
    if (functional) x = (x * x) % modulus;
    out.log.push_back(MulKind::square);
    ++out.squares;
    if (bit) {
      if (functional) x = (x * base) % modulus;
      out.log.push_back(MulKind::multiply);
      ++out.multiplies;
    }
  }
  if (functional) out.result = x % modulus;
  return out;
}

ModExpResult mod_exp(const RsaKey& key) { return mod_exp(key.base, key.exponent, key.modulus); }

void VictimConfig::validate() const {
  require(key_bits >= 64, ErrorKind::config, "key_bits must be at least 64");
  require(init_mults_min > 0 && init_mults_min <= init_mults_max, ErrorKind::config,
          "init_mults_min must be positive and not exceed init_mults_max");
  require(burst_touch_interval > 0, ErrorKind::config, "burst_touch_interval must be positive");
  require(prefetch_buddy_prob >= 0.0 && prefetch_buddy_prob <= 1.0, ErrorKind::config,
          "prefetch_buddy_prob must be in [0,1]");
  require(attack_slowdown >= 1.0, ErrorKind::config, "attack_slowdown must be >= 1");
  require(heap_size >= 4096, ErrorKind::config, "heap_size must be at least 4 KB");
  multiplier_buffer_size(key_bits);
}

std::uint32_t multiplier_buffer_size(unsigned key_bits, bool* extrapolated) {
  for (const auto& row : kCostTable)
    if (row.bits == key_bits) {
      if (extrapolated) *extrapolated = false;
      return row.buffer;
    }
  if (key_bits >= 64 && key_bits % 64 == 0) {
    if (extrapolated) *extrapolated = true;
    return key_bits / 8 + 8;
  }
  throw Error(ErrorKind::unsupported, "unsupported key size " + std::to_string(key_bits) +
                                          " bits; supported: 1024, 2048, 4096, 8192 (other multiples of 64 "
                                          "are extrapolated)");
}

Cycles table_mult_cycles(unsigned key_bits) {
  for (const auto& row : kCostTable)
    if (row.bits == key_bits) return row.cycles;
  const double scale = static_cast<double>(key_bits) / 4096.0;
  return static_cast<Cycles>(std::llround(25462.0 * scale * scale));
}

Cycles effective_mult_cycles(const VictimConfig& cfg, bool attacked) {
  const Cycles base = cfg.mult_cycles ? cfg.mult_cycles : table_mult_cycles(cfg.key_bits);
  if (!attacked) return base;
  return static_cast<Cycles>(std::llround(static_cast<double>(base) * cfg.attack_slowdown));
}

VictimLayout layout_at(PhysicalAddress base, std::uint32_t buffer_size, const CacheGeometry& geo) {
  require(buffer_size > 0, ErrorKind::invalid_argument, "buffer size must be positive");
  VictimLayout l;
  l.base = base;
  l.buffer_size = buffer_size;
  const std::uint64_t lines = (base.value % 64 + buffer_size + 63) / 64;
  for (std::uint64_t i = 0; i < lines; ++i) l.spanned_sets.push_back(cache_location(l.line_address(i), geo));
  return l;
}

VictimLayout allocate_victim(unsigned key_bits, bool randomize, std::uint64_t seed, const CacheGeometry& geo,
                             const VictimConfig& cfg) {
  bool extrapolated = false;
  const std::uint32_t size = multiplier_buffer_size(key_bits, &extrapolated);
  std::uint64_t base = cfg.buffer_base;
  if (randomize) {
    Rng rng(derive_seed(seed, 0x68656170));
    const std::uint64_t slots = (cfg.heap_size - size) / 16;
    base = cfg.heap_base + 16 * rng.range(0, slots);
  }
  VictimLayout l = layout_at(PhysicalAddress{base}, size, geo);
  l.extrapolated = extrapolated;
  return l;
}

VictimProcess::VictimProcess(const Bits& exponent, const VictimLayout& layout, const VictimConfig& cfg,
                             Cycles mult_cycles, Cycles start, std::uint64_t seed)
    : layout_(layout), cfg_(cfg), mult_(mult_cycles), start_(start), rng_(seed) {
  require(mult_ > 0, ErrorKind::invalid_argument, "multiplication time must be positive");
  require(!exponent.empty(), ErrorKind::invalid_argument, "exponent must not be empty");
  const double span = cfg_.init_mults_max - cfg_.init_mults_min;
  const double init_m = cfg_.init_mults_min + span * rng_.uniform();
  const double clear_m = cfg_.init_mults_min + span * rng_.uniform();
  Cycles w = 0;
  auto push = [&](PhaseKind k, Cycles d) {
    phases_.push_back({k, w, d});
    w += d;
  };
  push(PhaseKind::init, static_cast<Cycles>(std::llround(init_m * static_cast<double>(mult_))));
  for (auto bit : exponent) {
    push(PhaseKind::square, mult_);
    ++n_mults_;
    if (bit) {
      push(PhaseKind::multiply, mult_);
      ++n_mults_;
    }
  }
  for (unsigned i = 0; i < cfg_.tail_mults; ++i) push(PhaseKind::tail, mult_);
  push(PhaseKind::clear, static_cast<Cycles>(std::llround(clear_m * static_cast<double>(mult_))));
  total_work_ = w;

  const std::size_t n = layout_.line_count();
  edge_.assign(n, 0);
  if (cfg_.shared_edge_lines) {
    if (layout_.base.value % 64 != 0) edge_.front() = 1;
    if ((layout_.base.value % 64 + layout_.buffer_size) % 64 != 0) edge_.back() = 1;
  }
}

void VictimProcess::bind(const Kernel& k) {
  watched_.clear();
  for (std::size_t i = 0; i < layout_.line_count(); ++i)
    if (k.observed(layout_.spanned_sets[i])) watched_.push_back(i);
}

bool VictimProcess::line_active(PhaseKind kind, std::size_t line) const {
  switch (kind) {
    case PhaseKind::init:
    case PhaseKind::clear:
    case PhaseKind::multiply: return true;
    case PhaseKind::square:
    case PhaseKind::tail: return edge_[line] != 0;
  }
  return false;
}

void VictimProcess::emit_line_touches(const Phase& ph, std::size_t line, std::vector<Cycles>& out) const {
  const std::size_t n = layout_.line_count();
  if (ph.kind == PhaseKind::init || ph.kind == PhaseKind::clear) {
    for (Cycles off = line * cfg_.burst_touch_interval; off < ph.duration;
         off += n * cfg_.burst_touch_interval)
      out.push_back(ph.start + off);
    return;
  }
  const unsigned k = cfg_.touches_per_mult();
  const double step = static_cast<double>(ph.duration) / k;
  const double phase_off = (static_cast<double>(line) + 0.5) / static_cast<double>(n);
  for (unsigned i = 0; i < k; ++i)
    out.push_back(ph.start + static_cast<Cycles>((static_cast<double>(i) + phase_off) * step));
}

bool VictimProcess::refill() {
  pending_.clear();
  pending_pos_ = 0;
  if (watched_.empty()) {
    phase_cursor_ = phases_.size();
    return false;
  }
  const std::uint64_t first_line_no = layout_.line_address(0).value >> 6;
  std::vector<Cycles> times;
  while (phase_cursor_ < phases_.size() && pending_.empty()) {
    const Phase& ph = phases_[phase_cursor_++];
    for (std::size_t line : watched_) {
      times.clear();
      if (line_active(ph.kind, line)) {
        emit_line_touches(ph, line, times);
      } else if (cfg_.prefetch_buddy_prob > 0.0) {
        const std::uint64_t buddy_no = (first_line_no + line) ^ 1;
        if (buddy_no >= first_line_no && buddy_no - first_line_no < layout_.line_count()) {
          const std::size_t buddy = buddy_no - first_line_no;
          if (line_active(ph.kind, buddy)) {
            std::vector<Cycles> buddy_times;
            emit_line_touches(ph, buddy, buddy_times);
            for (Cycles t : buddy_times)
              if (rng_.bernoulli(cfg_.prefetch_buddy_prob)) times.push_back(t + 1);
          }
        }
      }
      for (Cycles t : times) pending_.emplace_back(t, static_cast<std::uint32_t>(line));
    }
    std::sort(pending_.begin(), pending_.end());
  }
  return !pending_.empty();
}

std::optional<Cycles> VictimProcess::next_touch_time() {
  if (pending_pos_ >= pending_.size() && !refill()) return std::nullopt;
  return start_ + pending_[pending_pos_].first + delay_;
}

void VictimProcess::run_until(Cycles t, Kernel& k) {
  InterruptSource& irq = k.interrupts();
  for (;;) {
    const std::optional<Cycles> touch = next_touch_time();
    const Cycles horizon = std::min(t, touch ? *touch : end_time());
    const InterruptEvent* ev = irq.at(irq_cursor_);
    if (ev && ev->start <= horizon) {
      ++irq_cursor_;
      if (ev->hits_victim() && ev->start >= start_) {
        delay_ += ev->duration;
        k.record_victim_interrupt();
      }
      continue;
    }
    if (!touch || *touch > t) return;
    k.victim_touch(layout_.line_address(pending_[pending_pos_].second));
    ++pending_pos_;
  }
}

std::optional<Cycles> VictimProcess::next_interrupt_start(Kernel& k) {
  const NoiseConfig& noise = k.config().noise;
  InterruptSource& irq = k.interrupts();
  const bool may_hit = irq.scripted() || noise.victim_desched_prob + noise.both_desched_prob > 0.0;
  for (std::size_t i = irq_cursor_; may_hit; ++i) {
    const InterruptEvent* ev = irq.at(i);
    if (!ev) break;
    if (ev->hits_victim()) return ev->start;
  }
  return std::nullopt;
}

bool VictimProcess::finished(Cycles t) const { return end_time() <= t; }

}  // namespace ppsim
