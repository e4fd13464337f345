#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace taomdv {

using NodeId = std::uint32_t;

enum class Protocol { Aodv, Aomdv, TrustAomdv };

inline std::string_view protocol_name(Protocol p) {
  switch (p) {
    case Protocol::Aodv: return "aodv";
    case Protocol::Aomdv: return "aomdv";
    case Protocol::TrustAomdv: return "trust_aomdv";
  }
  return "unknown";
}

inline std::optional<Protocol> parse_protocol(std::string_view s) {
  if (s == "aodv") return Protocol::Aodv;
  if (s == "aomdv") return Protocol::Aomdv;
  if (s == "trust_aomdv") return Protocol::TrustAomdv;
  return std::nullopt;
}

}  // namespace taomdv
