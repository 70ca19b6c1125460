#include "hyperlora/simnet.hpp"

namespace hyperlora::sim {

const char* to_string(LinkClass c) {
  switch (c) {
    case LinkClass::lora_air: return "lora-air";
    case LinkClass::backhaul: return "backhaul";
  }
  return "?";
}

}  // namespace hyperlora::sim
