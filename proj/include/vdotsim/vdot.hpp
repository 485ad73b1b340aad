#pragma once

// Custom vector dot-product instruction: encoding constants and lane
// semantics. A 64-bit register is viewed as eight signed int8 lanes
// (lane 0 = least-significant byte); one instruction computes the exact
// signed dot product of the two lane vectors and writes it, sign-extended,
// to a 64-bit destination register. The sum of eight int8 products fits in
// 18 bits, so there is no saturation or wraparound.

#include <cstdint>
#include <stdexcept>

namespace vdotsim {

// R-type layout in the custom-0 opcode space:
//   [31:25]=funct7  [24:20]=rs2  [19:15]=rs1  [14:12]=funct3  [11:7]=rd  [6:0]=opcode
inline constexpr uint32_t kVdotOpcode = 0b0001011;  // custom-0
inline constexpr uint32_t kVdotFunct3 = 0b000;
inline constexpr uint32_t kVdotFunct7 = 0b0000000;

inline constexpr int kVdotLanes = 8;
inline constexpr int64_t kVdotMax = 131072;   // 8 * (-128) * (-128)
inline constexpr int64_t kVdotMin = -130048;  // 8 * 127 * (-128)

constexpr int8_t lane(uint64_t word, int i) {
  return static_cast<int8_t>(word >> (8 * i));
}

constexpr uint64_t set_lane(uint64_t word, int i, int8_t v) {
  uint64_t mask = 0xFFull << (8 * i);
  return (word & ~mask) | (static_cast<uint64_t>(static_cast<uint8_t>(v)) << (8 * i));
}

// Eight widening int8 multiplies reduced to one 64-bit signed sum.
constexpr int64_t vdot8(uint64_t a, uint64_t b) {
  int64_t acc = 0;
  for (int i = 0; i < kVdotLanes; ++i) {
    acc += static_cast<int32_t>(lane(a, i)) * static_cast<int32_t>(lane(b, i));
  }
  return acc;
}

constexpr uint32_t pack_vdot(uint32_t rd, uint32_t rs1, uint32_t rs2) {
  return (kVdotFunct7 << 25) | (rs2 << 20) | (rs1 << 15) | (kVdotFunct3 << 12) |
         (rd << 7) | kVdotOpcode;
}

inline uint32_t encode_vdot(uint32_t rd, uint32_t rs1, uint32_t rs2) {
  if (rd > 31 || rs1 > 31 || rs2 > 31)
    throw std::out_of_range("encode_vdot: register index out of range");
  return pack_vdot(rd, rs1, rs2);
}

}  // namespace vdotsim
