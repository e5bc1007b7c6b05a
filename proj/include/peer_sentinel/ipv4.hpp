#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

namespace peer_sentinel {

/// IPv4 address held in host order (first octet in the high byte).
class Ipv4 {
 public:
  constexpr Ipv4() = default;
  constexpr explicit Ipv4(std::uint32_t value) : value_(value) {}
  constexpr Ipv4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d)
      : value_((std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d) {}

  /// Strict dotted-quad parse; no leading zeros beyond "0", no whitespace.
  static std::optional<Ipv4> parse(std::string_view text);

  constexpr std::uint32_t value() const { return value_; }
  constexpr std::uint8_t octet(int i) const { return static_cast<std::uint8_t>(value_ >> (24 - 8 * i)); }

  /// Not 0/8, loopback, link-local, multicast, or the broadcast/reserved block.
  bool is_unicast() const;

  std::string to_string() const;

  constexpr auto operator<=>(const Ipv4&) const = default;

 private:
  std::uint32_t value_ = 0;
};

/// A /24 prefix: the address with the host octet cleared.
class Subnet24 {
 public:
  constexpr Subnet24() = default;
  constexpr explicit Subnet24(Ipv4 ip) : prefix_(ip.value() & 0xFFFFFF00u) {}

  /// Accepts "a.b.c.0/24"; host bits must be zero.
  static std::optional<Subnet24> parse(std::string_view text);

  constexpr std::uint32_t prefix() const { return prefix_; }
  constexpr bool contains(Ipv4 ip) const { return (ip.value() & 0xFFFFFF00u) == prefix_; }
  constexpr Ipv4 host(std::uint8_t h) const { return Ipv4(prefix_ | h); }

  std::string to_string() const;

  constexpr auto operator<=>(const Subnet24&) const = default;

 private:
  std::uint32_t prefix_ = 0;
};

inline Subnet24 subnet_of(Ipv4 ip) { return Subnet24(ip); }

}  // namespace peer_sentinel

template <>
struct std::hash<peer_sentinel::Ipv4> {
  std::size_t operator()(const peer_sentinel::Ipv4& ip) const noexcept {
    return std::hash<std::uint32_t>{}(ip.value());
  }
};

template <>
struct std::hash<peer_sentinel::Subnet24> {
  std::size_t operator()(const peer_sentinel::Subnet24& s) const noexcept {
    return std::hash<std::uint32_t>{}(s.prefix());
  }
};
