#include "peer_sentinel/ipv4.hpp"

#include <charconv>

namespace peer_sentinel {

std::optional<Ipv4> Ipv4::parse(std::string_view text) {
  std::uint32_t value = 0;
  std::size_t pos = 0;
  for (int i = 0; i < 4; ++i) {
    if (i > 0) {
      if (pos >= text.size() || text[pos] != '.') return std::nullopt;
      ++pos;
    }
    std::size_t start = pos;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
    std::size_t len = pos - start;
    if (len == 0 || len > 3) return std::nullopt;
    if (len > 1 && text[start] == '0') return std::nullopt;
    unsigned octet = 0;
    std::from_chars(text.data() + start, text.data() + pos, octet);
    if (octet > 255) return std::nullopt;
    value = (value << 8) | octet;
  }
  if (pos != text.size()) return std::nullopt;
  return Ipv4(value);
}

bool Ipv4::is_unicast() const {
  const std::uint8_t a = octet(0);
  if (a == 0 || a == 127 || a >= 224) return false;
  if (a == 169 && octet(1) == 254) return false;
  return true;
}

std::string Ipv4::to_string() const {
  std::string out;
  out.reserve(15);
  for (int i = 0; i < 4; ++i) {
    if (i) out.push_back('.');
    out += std::to_string(octet(i));
  }
  return out;
}

std::optional<Subnet24> Subnet24::parse(std::string_view text) {
  auto slash = text.find('/');
  if (slash == std::string_view::npos || text.substr(slash + 1) != "24") return std::nullopt;
  auto ip = Ipv4::parse(text.substr(0, slash));
  if (!ip || (ip->value() & 0xFFu) != 0) return std::nullopt;
  return Subnet24(*ip);
}

std::string Subnet24::to_string() const { return Ipv4(prefix_).to_string() + "/24"; }

}  // namespace peer_sentinel
