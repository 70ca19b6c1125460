#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "hyperlora/bytes.hpp"

namespace hyperlora {

using DevEui = std::array<std::uint8_t, 8>;
using AppEui = std::array<std::uint8_t, 8>;
using DevAddr = std::array<std::uint8_t, 4>;
using DevNonce = std::array<std::uint8_t, 2>;
using AppNonce = std::array<std::uint8_t, 3>;
using NetId = std::array<std::uint8_t, 3>;

/// Identifier of a ledger participant (GatewayEUI or server id).
using EntityId = std::string;

/// Simulated time in microseconds.
using SimTime = std::int64_t;

inline constexpr SimTime kMillisecond = 1'000;
inline constexpr SimTime kSecond = 1'000'000;

inline std::uint32_t dev_addr_value(const DevAddr& a) {
  return static_cast<std::uint32_t>(a[0]) | static_cast<std::uint32_t>(a[1]) << 8 |
         static_cast<std::uint32_t>(a[2]) << 16 | static_cast<std::uint32_t>(a[3]) << 24;
}

inline DevAddr dev_addr_from(std::uint32_t v) {
  return {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
          static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
}

}  // namespace hyperlora
