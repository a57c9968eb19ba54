#include "ppsim/types.hpp"

#include <algorithm>
#include <cctype>

namespace ppsim {

Bits bits_from_string(std::string_view s) {
  Bits out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == '0' || c == '1')
      out.push_back(static_cast<std::uint8_t>(c - '0'));
    else if (c == ' ' || c == '_' || c == '\n' || c == '\t')
      continue;
    else
      throw Error(ErrorKind::invalid_argument, std::string("invalid bit character '") + c + "'");
  }
  return out;
}

std::string bits_to_string(const Bits& b) {
  std::string s(b.size(), '0');
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b[i]) s[i] = '1';
  return s;
}

// Left-pads to a whole number of nibbles.
std::string bits_to_hex(const Bits& b) {
  static const char* digits = "0123456789abcdef";
  if (b.empty()) return "0";
  const std::size_t pad = (4 - b.size() % 4) % 4;
  std::string out;
  out.reserve((b.size() + pad) / 4);
  unsigned nib = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pad + b.size(); ++i) {
    const unsigned bit = i < pad ? 0u : b[i - pad];
    nib = nib << 1 | bit;
    if (++n == 4) {
      out.push_back(digits[nib]);
      nib = 0;
      n = 0;
    }
  }
  return out;
}

Bits bits_from_hex(std::string_view hex) {
  if (hex.size() >= 2 && hex[0] == '0' && (hex[1] == 'x' || hex[1] == 'X')) hex.remove_prefix(2);
  Bits out;
  for (char c : hex) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    int v;
    if (c >= '0' && c <= '9')
      v = c - '0';
    else if (c >= 'a' && c <= 'f')
      v = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F')
      v = c - 'A' + 10;
    else
      throw Error(ErrorKind::invalid_argument, std::string("invalid hex character '") + c + "'");
    for (int k = 3; k >= 0; --k) out.push_back(static_cast<std::uint8_t>(v >> k & 1));
  }
  auto first = std::find(out.begin(), out.end(), 1);
  out.erase(out.begin(), first);
  return out;
}

std::size_t hamming_weight(const Bits& b) {
  return static_cast<std::size_t>(std::count(b.begin(), b.end(), 1));
}

}  // namespace ppsim
