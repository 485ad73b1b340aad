#pragma once

// RV64 subset instruction representation and decoder. The subset is the
// integer base plus MUL/MULH/MULW and the custom vector dot-product
// instruction; fixed 32-bit encodings only (no compressed instructions).

#include <cstdint>
#include <string_view>

#include "vdotsim/cost_model.hpp"
#include "vdotsim/vdot.hpp"

namespace vdotsim {

// Default placement of flat memory (and therefore of program images).
inline constexpr uint64_t kDefaultMemBase = 0x8000'0000ull;
inline constexpr uint64_t kDefaultMemSize = 64ull << 20;

enum class Op : uint8_t {
  kIllegal,
  kLui, kAuipc, kJal, kJalr,
  kBeq, kBne, kBlt, kBge, kBltu, kBgeu,
  kLb, kLh, kLw, kLd, kLbu, kLhu, kLwu,
  kSb, kSh, kSw, kSd,
  kAddi, kSlti, kSltiu, kXori, kOri, kAndi, kSlli, kSrli, kSrai,
  kAdd, kSub, kSll, kSlt, kSltu, kXor, kSrl, kSra, kOr, kAnd,
  kAddiw, kAddw, kSubw, kSllw, kSrlw, kSraw,
  kMul, kMulh, kMulw,
  kEcall,
  kVdot,
};

constexpr std::string_view mnemonic(Op op) {
  switch (op) {
    case Op::kIllegal: return "<illegal>";
    case Op::kLui: return "lui";
    case Op::kAuipc: return "auipc";
    case Op::kJal: return "jal";
    case Op::kJalr: return "jalr";
    case Op::kBeq: return "beq";
    case Op::kBne: return "bne";
    case Op::kBlt: return "blt";
    case Op::kBge: return "bge";
    case Op::kBltu: return "bltu";
    case Op::kBgeu: return "bgeu";
    case Op::kLb: return "lb";
    case Op::kLh: return "lh";
    case Op::kLw: return "lw";
    case Op::kLd: return "ld";
    case Op::kLbu: return "lbu";
    case Op::kLhu: return "lhu";
    case Op::kLwu: return "lwu";
    case Op::kSb: return "sb";
    case Op::kSh: return "sh";
    case Op::kSw: return "sw";
    case Op::kSd: return "sd";
    case Op::kAddi: return "addi";
    case Op::kSlti: return "slti";
    case Op::kSltiu: return "sltiu";
    case Op::kXori: return "xori";
    case Op::kOri: return "ori";
    case Op::kAndi: return "andi";
    case Op::kSlli: return "slli";
    case Op::kSrli: return "srli";
    case Op::kSrai: return "srai";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kSll: return "sll";
    case Op::kSlt: return "slt";
    case Op::kSltu: return "sltu";
    case Op::kXor: return "xor";
    case Op::kSrl: return "srl";
    case Op::kSra: return "sra";
    case Op::kOr: return "or";
    case Op::kAnd: return "and";
    case Op::kAddiw: return "addiw";
    case Op::kAddw: return "addw";
    case Op::kSubw: return "subw";
    case Op::kSllw: return "sllw";
    case Op::kSrlw: return "srlw";
    case Op::kSraw: return "sraw";
    case Op::kMul: return "mul";
    case Op::kMulh: return "mulh";
    case Op::kMulw: return "mulw";
    case Op::kEcall: return "ecall";
    case Op::kVdot: return "vdot";
  }
  return "<bad>";
}

// Decoded instruction. Immediates are stored fully sign-extended; for kLui
// and kAuipc `imm` already carries the value shifted into the upper bits.
// For kIllegal, `imm` holds the raw undecodable word.
struct Instruction {
  Op op = Op::kIllegal;
  uint8_t rd = 0;
  uint8_t rs1 = 0;
  uint8_t rs2 = 0;
  int64_t imm = 0;

  bool operator==(const Instruction&) const = default;
};

// Static cost class per opcode. Branches are charged dynamically by the
// machine (taken vs not taken); this returns the not-taken class for them.
constexpr CostClass cost_class_of(Op op) {
  switch (op) {
    case Op::kLui: case Op::kAuipc:
    case Op::kAddi: case Op::kSlti: case Op::kSltiu: case Op::kXori:
    case Op::kOri: case Op::kAndi: case Op::kSlli: case Op::kSrli:
    case Op::kSrai: case Op::kAddiw:
      return CostClass::kAluImm;
    case Op::kAdd: case Op::kSub: case Op::kSll: case Op::kSlt:
    case Op::kSltu: case Op::kXor: case Op::kSrl: case Op::kSra:
    case Op::kOr: case Op::kAnd: case Op::kAddw: case Op::kSubw:
    case Op::kSllw: case Op::kSrlw: case Op::kSraw:
      return CostClass::kAlu;
    case Op::kMul: case Op::kMulh: case Op::kMulw:
      return CostClass::kMul;
    case Op::kLb: case Op::kLbu:
      return CostClass::kLoadByte;
    case Op::kLh: case Op::kLw: case Op::kLd: case Op::kLhu: case Op::kLwu:
      return CostClass::kLoadWide;
    case Op::kSb: case Op::kSh: case Op::kSw: case Op::kSd:
      return CostClass::kStore;
    case Op::kBeq: case Op::kBne: case Op::kBlt: case Op::kBge:
    case Op::kBltu: case Op::kBgeu:
      return CostClass::kBranchNotTaken;
    case Op::kJal: case Op::kJalr:
      return CostClass::kJump;
    case Op::kVdot:
      return CostClass::kVdot;
    case Op::kEcall:
    case Op::kIllegal:
      return CostClass::kEcall;
  }
  return CostClass::kEcall;
}

namespace detail {

constexpr int64_t imm_i(uint32_t w) {
  return static_cast<int32_t>(w) >> 20;
}

constexpr int64_t imm_s(uint32_t w) {
  return ((static_cast<int32_t>(w) >> 25) << 5) | static_cast<int32_t>((w >> 7) & 0x1F);
}

constexpr int64_t imm_b(uint32_t w) {
  int32_t v = static_cast<int32_t>(((w >> 8) & 0xF) << 1) |
              static_cast<int32_t>(((w >> 25) & 0x3F) << 5) |
              static_cast<int32_t>(((w >> 7) & 0x1) << 11);
  v |= (static_cast<int32_t>(w) >> 31) << 12;
  return v;
}

constexpr int64_t imm_u(uint32_t w) {
  return static_cast<int32_t>(w & 0xFFFFF000u);
}

constexpr int64_t imm_j(uint32_t w) {
  int32_t v = static_cast<int32_t>(((w >> 21) & 0x3FF) << 1) |
              static_cast<int32_t>(((w >> 20) & 0x1) << 11) |
              static_cast<int32_t>(((w >> 12) & 0xFF) << 12);
  v |= (static_cast<int32_t>(w) >> 31) << 20;
  return v;
}

}  // namespace detail

// Decodes one 32-bit word. A word outside the subset yields Op::kIllegal
// with the raw word preserved in `imm`; illegality is a value, not an error.
constexpr Instruction decode(uint32_t w) {
  Instruction ins;
  const uint32_t opcode = w & 0x7F;
  const uint8_t rd = (w >> 7) & 0x1F;
  const uint8_t funct3 = (w >> 12) & 0x7;
  const uint8_t rs1 = (w >> 15) & 0x1F;
  const uint8_t rs2 = (w >> 20) & 0x1F;
  const uint8_t funct7 = (w >> 25) & 0x7F;

  auto illegal = [&] {
    Instruction bad;
    bad.op = Op::kIllegal;
    bad.imm = static_cast<int64_t>(w);
    return bad;
  };
  auto r_type = [&](Op op) {
    ins.op = op; ins.rd = rd; ins.rs1 = rs1; ins.rs2 = rs2;
    return ins;
  };
  auto i_type = [&](Op op) {
    ins.op = op; ins.rd = rd; ins.rs1 = rs1; ins.imm = detail::imm_i(w);
    return ins;
  };

  switch (opcode) {
    case 0b0110111:  // LUI
      ins.op = Op::kLui; ins.rd = rd; ins.imm = detail::imm_u(w);
      return ins;
    case 0b0010111:  // AUIPC
      ins.op = Op::kAuipc; ins.rd = rd; ins.imm = detail::imm_u(w);
      return ins;
    case 0b1101111:  // JAL
      ins.op = Op::kJal; ins.rd = rd; ins.imm = detail::imm_j(w);
      return ins;
    case 0b1100111:  // JALR
      if (funct3 != 0) return illegal();
      return i_type(Op::kJalr);
    case 0b1100011: {  // branches
      Op op;
      switch (funct3) {
        case 0b000: op = Op::kBeq; break;
        case 0b001: op = Op::kBne; break;
        case 0b100: op = Op::kBlt; break;
        case 0b101: op = Op::kBge; break;
        case 0b110: op = Op::kBltu; break;
        case 0b111: op = Op::kBgeu; break;
        default: return illegal();
      }
      ins.op = op; ins.rs1 = rs1; ins.rs2 = rs2; ins.imm = detail::imm_b(w);
      return ins;
    }
    case 0b0000011: {  // loads
      Op op;
      switch (funct3) {
        case 0b000: op = Op::kLb; break;
        case 0b001: op = Op::kLh; break;
        case 0b010: op = Op::kLw; break;
        case 0b011: op = Op::kLd; break;
        case 0b100: op = Op::kLbu; break;
        case 0b101: op = Op::kLhu; break;
        case 0b110: op = Op::kLwu; break;
        default: return illegal();
      }
      return i_type(op);
    }
    case 0b0100011: {  // stores
      Op op;
      switch (funct3) {
        case 0b000: op = Op::kSb; break;
        case 0b001: op = Op::kSh; break;
        case 0b010: op = Op::kSw; break;
        case 0b011: op = Op::kSd; break;
        default: return illegal();
      }
      ins.op = op; ins.rs1 = rs1; ins.rs2 = rs2; ins.imm = detail::imm_s(w);
      return ins;
    }
    case 0b0010011: {  // OP-IMM
      switch (funct3) {
        case 0b000: return i_type(Op::kAddi);
        case 0b010: return i_type(Op::kSlti);
        case 0b011: return i_type(Op::kSltiu);
        case 0b100: return i_type(Op::kXori);
        case 0b110: return i_type(Op::kOri);
        case 0b111: return i_type(Op::kAndi);
        case 0b001:  // SLLI, 6-bit shamt
          if ((w >> 26) != 0) return illegal();
          ins.op = Op::kSlli; ins.rd = rd; ins.rs1 = rs1; ins.imm = (w >> 20) & 0x3F;
          return ins;
        case 0b101:  // SRLI / SRAI
          if ((w >> 26) == 0b000000) {
            ins.op = Op::kSrli;
          } else if ((w >> 26) == 0b010000) {
            ins.op = Op::kSrai;
          } else {
            return illegal();
          }
          ins.rd = rd; ins.rs1 = rs1; ins.imm = (w >> 20) & 0x3F;
          return ins;
      }
      return illegal();
    }
    case 0b0110011: {  // OP
      if (funct7 == 0b0000000) {
        switch (funct3) {
          case 0b000: return r_type(Op::kAdd);
          case 0b001: return r_type(Op::kSll);
          case 0b010: return r_type(Op::kSlt);
          case 0b011: return r_type(Op::kSltu);
          case 0b100: return r_type(Op::kXor);
          case 0b101: return r_type(Op::kSrl);
          case 0b110: return r_type(Op::kOr);
          case 0b111: return r_type(Op::kAnd);
        }
      } else if (funct7 == 0b0100000) {
        if (funct3 == 0b000) return r_type(Op::kSub);
        if (funct3 == 0b101) return r_type(Op::kSra);
      } else if (funct7 == 0b0000001) {
        if (funct3 == 0b000) return r_type(Op::kMul);
        if (funct3 == 0b001) return r_type(Op::kMulh);
      }
      return illegal();
    }
    case 0b0011011:  // OP-IMM-32
      if (funct3 == 0b000) return i_type(Op::kAddiw);
      return illegal();
    case 0b0111011: {  // OP-32
      if (funct7 == 0b0000000) {
        if (funct3 == 0b000) return r_type(Op::kAddw);
        if (funct3 == 0b001) return r_type(Op::kSllw);
        if (funct3 == 0b101) return r_type(Op::kSrlw);
      } else if (funct7 == 0b0100000) {
        if (funct3 == 0b000) return r_type(Op::kSubw);
        if (funct3 == 0b101) return r_type(Op::kSraw);
      } else if (funct7 == 0b0000001) {
        if (funct3 == 0b000) return r_type(Op::kMulw);
      }
      return illegal();
    }
    case 0b1110011:  // SYSTEM: only the plain ECALL form
      if (w == 0x00000073) {
        ins.op = Op::kEcall;
        return ins;
      }
      return illegal();
    case kVdotOpcode:  // custom-0
      if (funct3 == kVdotFunct3 && funct7 == kVdotFunct7) return r_type(Op::kVdot);
      return illegal();
    default:
      return illegal();
  }
}

}  // namespace vdotsim
