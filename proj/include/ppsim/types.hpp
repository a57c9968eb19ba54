#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ppsim {

/// True CPU cycles of the simulated machine.
using Cycles = std::uint64_t;

/// Counting-thread increments as read by the attacker.
using Ticks = std::uint64_t;

/// MSB-first bit sequence, one element (0 or 1) per bit.
using Bits = std::vector<std::uint8_t>;

struct PhysicalAddress {
  std::uint64_t value = 0;

  constexpr PhysicalAddress() = default;
  constexpr explicit PhysicalAddress(std::uint64_t v) : value(v) {}

  constexpr PhysicalAddress line() const { return PhysicalAddress{value & ~std::uint64_t{63}}; }
  constexpr PhysicalAddress operator+(std::uint64_t off) const { return PhysicalAddress{value + off}; }
  constexpr auto operator<=>(const PhysicalAddress&) const = default;
};

struct CacheLocation {
  std::uint32_t set = 0;
  std::uint32_t slice = 0;

  constexpr auto operator<=>(const CacheLocation&) const = default;
};

/// Error categories surfaced through the C API as status codes.
enum class ErrorKind { invalid_argument, config, io, unsupported, not_found, stage };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) throw Error(kind, msg);
}

// Bit-string helpers.
Bits bits_from_string(std::string_view s);
std::string bits_to_string(const Bits& b);
std::string bits_to_hex(const Bits& b);
Bits bits_from_hex(std::string_view hex);
std::size_t hamming_weight(const Bits& b);

}  // namespace ppsim
