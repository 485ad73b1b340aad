#pragma once

// Two-pass assembler and disassembler for the simulated subset plus the
// `vdot` mnemonic. Pass 1 collects labels and sizes every line; pass 2
// encodes. Malformed source never produces output bytes: every problem is
// a diagnostic carrying the source line number.
//
// Supported syntax:
//   label:            labels (one per line, code may follow)
//   # comment         to end of line
//   .org ADDR         move the location counter forward (gap is zero-filled)
//   .byte  v, ...     8-bit data
//   .word  v, ...     32-bit data (also what the disassembler emits for
//                     words that do not decode)
//   .dword v, ...     64-bit data
//   pseudo-instructions: li, mv, j, ret
// Registers are x0..x31 or ABI names. Branch/jump targets are labels or
// numeric byte offsets relative to the instruction.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "vdotsim/isa.hpp"
#include "vdotsim/vdot.hpp"

namespace vdotsim {

class AsmError : public std::runtime_error {
 public:
  AsmError(const std::string& msg, int line)
      : std::runtime_error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline constexpr std::pair<std::string_view, uint8_t> kRegNames[] = {
    {"zero", 0}, {"ra", 1},  {"sp", 2},   {"gp", 3},   {"tp", 4},
    {"t0", 5},   {"t1", 6},  {"t2", 7},   {"s0", 8},   {"fp", 8},
    {"s1", 9},   {"a0", 10}, {"a1", 11},  {"a2", 12},  {"a3", 13},
    {"a4", 14},  {"a5", 15}, {"a6", 16},  {"a7", 17},  {"s2", 18},
    {"s3", 19},  {"s4", 20}, {"s5", 21},  {"s6", 22},  {"s7", 23},
    {"s8", 24},  {"s9", 25}, {"s10", 26}, {"s11", 27}, {"t3", 28},
    {"t4", 29},  {"t5", 30}, {"t6", 31},
};

inline std::optional<uint8_t> reg_index(std::string_view name) {
  if (name.size() >= 2 && name[0] == 'x') {
    unsigned v = 0;
    bool ok = name.size() <= 3;
    for (size_t i = 1; ok && i < name.size(); ++i) {
      if (name[i] < '0' || name[i] > '9') {
        ok = false;
      } else {
        v = v * 10 + unsigned(name[i] - '0');
      }
    }
    if (ok && v < 32 && !(name.size() == 3 && name[1] == '0')) return uint8_t(v);
  }
  for (const auto& [n, idx] : kRegNames)
    if (n == name) return idx;
  return std::nullopt;
}

inline std::optional<int64_t> parse_int(std::string_view s) {
  if (s.empty()) return std::nullopt;
  bool neg = false;
  size_t i = 0;
  if (s[0] == '-' || s[0] == '+') {
    neg = s[0] == '-';
    i = 1;
  }
  if (i >= s.size()) return std::nullopt;
  int base = 10;
  if (s.size() - i > 2 && s[i] == '0' && (s[i + 1] == 'x' || s[i + 1] == 'X')) {
    base = 16;
    i += 2;
  }
  uint64_t v = 0;
  for (; i < s.size(); ++i) {
    int d;
    char c = s[i];
    if (c >= '0' && c <= '9') d = c - '0';
    else if (base == 16 && c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (base == 16 && c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else return std::nullopt;
    v = v * uint64_t(base) + uint64_t(d);
  }
  if (neg) v = ~v + 1;
  return static_cast<int64_t>(v);
}

inline bool is_label_char(char c, bool first) {
  if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c == '.') return true;
  return !first && ((c >= '0' && c <= '9') || c == '$');
}

inline bool is_label_name(std::string_view s) {
  if (s.empty()) return false;
  for (size_t i = 0; i < s.size(); ++i)
    if (!is_label_char(s[i], i == 0)) return false;
  return true;
}

inline std::string trim_ws(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

// Encodes one decoded-form instruction back to its 32-bit word. Inverse of
// decode() over the whole subset; throws EncodeError for kIllegal or for
// field values that do not fit the encoding.
inline uint32_t encode(const Instruction& ins) {
  auto require = [&](bool ok, const char* what) {
    if (!ok) throw EncodeError(std::string("encode: ") + what);
  };
  require(ins.rd < 32 && ins.rs1 < 32 && ins.rs2 < 32, "register index out of range");
  const uint32_t rd = ins.rd, rs1 = ins.rs1, rs2 = ins.rs2;
  const int64_t imm = ins.imm;

  auto r_type = [&](uint32_t funct7, uint32_t funct3, uint32_t opcode) {
    return (funct7 << 25) | (rs2 << 20) | (rs1 << 15) | (funct3 << 12) | (rd << 7) | opcode;
  };
  auto i_type = [&](uint32_t funct3, uint32_t opcode) {
    require(imm >= -2048 && imm <= 2047, "12-bit immediate out of range");
    return (uint32_t(imm & 0xFFF) << 20) | (rs1 << 15) | (funct3 << 12) | (rd << 7) | opcode;
  };
  auto shift_type = [&](uint32_t funct6, uint32_t funct3) {
    require(imm >= 0 && imm <= 63, "shift amount out of range");
    return (funct6 << 26) | (uint32_t(imm) << 20) | (rs1 << 15) | (funct3 << 12) | (rd << 7) |
           0b0010011u;
  };
  auto s_type = [&](uint32_t funct3) {
    require(imm >= -2048 && imm <= 2047, "store offset out of range");
    const uint32_t u = uint32_t(imm & 0xFFF);
    return ((u >> 5) << 25) | (rs2 << 20) | (rs1 << 15) | (funct3 << 12) | ((u & 0x1F) << 7) |
           0b0100011u;
  };
  auto b_type = [&](uint32_t funct3) {
    require(imm >= -4096 && imm <= 4094 && (imm & 1) == 0, "branch offset out of range");
    const uint32_t u = uint32_t(imm & 0x1FFF);
    return (((u >> 12) & 1) << 31) | (((u >> 5) & 0x3F) << 25) | (rs2 << 20) | (rs1 << 15) |
           (funct3 << 12) | (((u >> 1) & 0xF) << 8) | (((u >> 11) & 1) << 7) | 0b1100011u;
  };
  auto u_type = [&](uint32_t opcode) {
    require((imm & 0xFFF) == 0 && imm >= INT32_MIN && imm <= INT32_MAX,
            "upper immediate out of range");
    return (uint32_t(imm) & 0xFFFFF000u) | (rd << 7) | opcode;
  };

  switch (ins.op) {
    case Op::kIllegal: throw EncodeError("encode: illegal instruction");
    case Op::kLui: return u_type(0b0110111);
    case Op::kAuipc: return u_type(0b0010111);
    case Op::kJal: {
      require(imm >= -1048576 && imm <= 1048574 && (imm & 1) == 0, "jump offset out of range");
      const uint32_t u = uint32_t(imm & 0x1FFFFF);
      return (((u >> 20) & 1) << 31) | (((u >> 1) & 0x3FF) << 21) | (((u >> 11) & 1) << 20) |
             (((u >> 12) & 0xFF) << 12) | (rd << 7) | 0b1101111u;
    }
    case Op::kJalr: return i_type(0b000, 0b1100111);
    case Op::kBeq: return b_type(0b000);
    case Op::kBne: return b_type(0b001);
    case Op::kBlt: return b_type(0b100);
    case Op::kBge: return b_type(0b101);
    case Op::kBltu: return b_type(0b110);
    case Op::kBgeu: return b_type(0b111);
    case Op::kLb: return i_type(0b000, 0b0000011);
    case Op::kLh: return i_type(0b001, 0b0000011);
    case Op::kLw: return i_type(0b010, 0b0000011);
    case Op::kLd: return i_type(0b011, 0b0000011);
    case Op::kLbu: return i_type(0b100, 0b0000011);
    case Op::kLhu: return i_type(0b101, 0b0000011);
    case Op::kLwu: return i_type(0b110, 0b0000011);
    case Op::kSb: return s_type(0b000);
    case Op::kSh: return s_type(0b001);
    case Op::kSw: return s_type(0b010);
    case Op::kSd: return s_type(0b011);
    case Op::kAddi: return i_type(0b000, 0b0010011);
    case Op::kSlti: return i_type(0b010, 0b0010011);
    case Op::kSltiu: return i_type(0b011, 0b0010011);
    case Op::kXori: return i_type(0b100, 0b0010011);
    case Op::kOri: return i_type(0b110, 0b0010011);
    case Op::kAndi: return i_type(0b111, 0b0010011);
    case Op::kSlli: return shift_type(0b000000, 0b001);
    case Op::kSrli: return shift_type(0b000000, 0b101);
    case Op::kSrai: return shift_type(0b010000, 0b101);
    case Op::kAdd: return r_type(0b0000000, 0b000, 0b0110011);
    case Op::kSub: return r_type(0b0100000, 0b000, 0b0110011);
    case Op::kSll: return r_type(0b0000000, 0b001, 0b0110011);
    case Op::kSlt: return r_type(0b0000000, 0b010, 0b0110011);
    case Op::kSltu: return r_type(0b0000000, 0b011, 0b0110011);
    case Op::kXor: return r_type(0b0000000, 0b100, 0b0110011);
    case Op::kSrl: return r_type(0b0000000, 0b101, 0b0110011);
    case Op::kSra: return r_type(0b0100000, 0b101, 0b0110011);
    case Op::kOr: return r_type(0b0000000, 0b110, 0b0110011);
    case Op::kAnd: return r_type(0b0000000, 0b111, 0b0110011);
    case Op::kAddiw: return i_type(0b000, 0b0011011);
    case Op::kAddw: return r_type(0b0000000, 0b000, 0b0111011);
    case Op::kSubw: return r_type(0b0100000, 0b000, 0b0111011);
    case Op::kSllw: return r_type(0b0000000, 0b001, 0b0111011);
    case Op::kSrlw: return r_type(0b0000000, 0b101, 0b0111011);
    case Op::kSraw: return r_type(0b0100000, 0b101, 0b0111011);
    case Op::kMul: return r_type(0b0000001, 0b000, 0b0110011);
    case Op::kMulh: return r_type(0b0000001, 0b001, 0b0110011);
    case Op::kMulw: return r_type(0b0000001, 0b000, 0b0111011);
    case Op::kEcall: return 0x00000073;
    case Op::kVdot: return pack_vdot(rd, rs1, rs2);
  }
  throw EncodeError("encode: unhandled opcode");
}

// Canonical one-line rendering; the disassembler's output format.
inline std::string render(const Instruction& ins) {
  std::ostringstream out;
  auto x = [](unsigned r) { return "x" + std::to_string(r); };
  const std::string_view m = mnemonic(ins.op);
  switch (ins.op) {
    case Op::kLui:
    case Op::kAuipc: {
      char buf[16];
      std::snprintf(buf, sizeof buf, "0x%x",
                    unsigned((uint64_t(ins.imm) >> 12) & 0xFFFFF));
      out << m << ' ' << x(ins.rd) << ", " << buf;
      break;
    }
    case Op::kJal:
      out << m << ' ' << x(ins.rd) << ", " << ins.imm;
      break;
    case Op::kJalr:
      out << m << ' ' << x(ins.rd) << ", " << x(ins.rs1) << ", " << ins.imm;
      break;
    case Op::kBeq: case Op::kBne: case Op::kBlt:
    case Op::kBge: case Op::kBltu: case Op::kBgeu:
      out << m << ' ' << x(ins.rs1) << ", " << x(ins.rs2) << ", " << ins.imm;
      break;
    case Op::kLb: case Op::kLh: case Op::kLw: case Op::kLd:
    case Op::kLbu: case Op::kLhu: case Op::kLwu:
      out << m << ' ' << x(ins.rd) << ", " << ins.imm << '(' << x(ins.rs1) << ')';
      break;
    case Op::kSb: case Op::kSh: case Op::kSw: case Op::kSd:
      out << m << ' ' << x(ins.rs2) << ", " << ins.imm << '(' << x(ins.rs1) << ')';
      break;
    case Op::kAddi: case Op::kSlti: case Op::kSltiu: case Op::kXori:
    case Op::kOri: case Op::kAndi: case Op::kSlli: case Op::kSrli:
    case Op::kSrai: case Op::kAddiw:
      out << m << ' ' << x(ins.rd) << ", " << x(ins.rs1) << ", " << ins.imm;
      break;
    case Op::kEcall:
      out << m;
      break;
    default:  // R-type including vdot
      out << m << ' ' << x(ins.rd) << ", " << x(ins.rs1) << ", " << x(ins.rs2);
      break;
  }
  return out.str();
}

struct AsmProgram {
  std::string source;
  uint64_t origin = kDefaultMemBase;
  std::vector<uint8_t> bytes;
  std::map<std::string, uint64_t> symbols;
};

namespace detail {

struct SourceLine {
  int line;
  uint64_t addr;
  std::string mnem;                 // lowercase mnemonic or directive
  std::vector<std::string> operands;
  std::vector<Instruction> expansion;  // filled in pass 2 for instructions
};

inline std::vector<std::string> split_operands(std::string_view rest, int line) {
  std::vector<std::string> ops;
  std::string cur;
  int depth = 0;
  for (char c : rest) {
    if (c == '(') ++depth;
    if (c == ')') --depth;
    if (c == ',' && depth == 0) {
      ops.push_back(trim_ws(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim_ws(cur).empty()) ops.push_back(trim_ws(cur));
  for (const auto& o : ops)
    if (o.empty()) throw AsmError("empty operand", line);
  if (depth != 0) throw AsmError("unbalanced parentheses", line);
  return ops;
}

class Assembler {
 public:
  Assembler(std::string_view source, uint64_t origin) : origin_(origin) {
    program_.source = std::string(source);
    program_.origin = origin;
  }

  AsmProgram assemble() {
    pass1();
    pass2();
    while (program_.bytes.size() % 4 != 0) program_.bytes.push_back(0);
    return std::move(program_);
  }

 private:
  uint8_t want_reg(const std::string& s, int line) {
    auto r = reg_index(s);
    if (!r) throw AsmError("unknown register '" + s + "'", line);
    return *r;
  }

  int64_t want_int(const std::string& s, int line) {
    auto v = parse_int(s);
    if (!v) throw AsmError("bad integer '" + s + "'", line);
    return *v;
  }

  // "imm(reg)" with an optional immediate (defaults to 0).
  std::pair<int64_t, uint8_t> want_memop(const std::string& s, int line) {
    size_t open = s.find('(');
    if (open == std::string::npos || s.back() != ')')
      throw AsmError("expected 'offset(register)', got '" + s + "'", line);
    std::string offs = trim_ws(s.substr(0, open));
    std::string reg = trim_ws(s.substr(open + 1, s.size() - open - 2));
    int64_t imm = offs.empty() ? 0 : want_int(offs, line);
    return {imm, want_reg(reg, line)};
  }

  // Branch/jump target: defined label, or numeric offset relative to pc.
  int64_t want_offset(const std::string& s, uint64_t pc, int line) {
    if (auto v = parse_int(s)) return *v;
    if (!is_label_name(s)) throw AsmError("bad target '" + s + "'", line);
    auto it = program_.symbols.find(s);
    if (it == program_.symbols.end())
      throw AsmError("unresolved label '" + s + "'", line);
    return static_cast<int64_t>(it->second - pc);
  }

  void expect_operands(const SourceLine& sl, size_t n) {
    if (sl.operands.size() != n)
      throw AsmError("'" + sl.mnem + "' expects " + std::to_string(n) + " operand(s)",
                     sl.line);
  }

  static std::optional<Op> simple_op(const std::string& m) {
    static const std::map<std::string, Op> table = {
        {"lui", Op::kLui},     {"auipc", Op::kAuipc}, {"jal", Op::kJal},
        {"jalr", Op::kJalr},   {"beq", Op::kBeq},     {"bne", Op::kBne},
        {"blt", Op::kBlt},     {"bge", Op::kBge},     {"bltu", Op::kBltu},
        {"bgeu", Op::kBgeu},   {"lb", Op::kLb},       {"lh", Op::kLh},
        {"lw", Op::kLw},       {"ld", Op::kLd},       {"lbu", Op::kLbu},
        {"lhu", Op::kLhu},     {"lwu", Op::kLwu},     {"sb", Op::kSb},
        {"sh", Op::kSh},       {"sw", Op::kSw},       {"sd", Op::kSd},
        {"addi", Op::kAddi},   {"slti", Op::kSlti},   {"sltiu", Op::kSltiu},
        {"xori", Op::kXori},   {"ori", Op::kOri},     {"andi", Op::kAndi},
        {"slli", Op::kSlli},   {"srli", Op::kSrli},   {"srai", Op::kSrai},
        {"add", Op::kAdd},     {"sub", Op::kSub},     {"sll", Op::kSll},
        {"slt", Op::kSlt},     {"sltu", Op::kSltu},   {"xor", Op::kXor},
        {"srl", Op::kSrl},     {"sra", Op::kSra},     {"or", Op::kOr},
        {"and", Op::kAnd},     {"addiw", Op::kAddiw}, {"addw", Op::kAddw},
        {"subw", Op::kSubw},   {"sllw", Op::kSllw},   {"srlw", Op::kSrlw},
        {"sraw", Op::kSraw},   {"mul", Op::kMul},     {"mulh", Op::kMulh},
        {"mulw", Op::kMulw},   {"ecall", Op::kEcall}, {"vdot", Op::kVdot},
    };
    auto it = table.find(m);
    if (it == table.end()) return std::nullopt;
    return it->second;
  }

  static bool known_mnemonic(const std::string& m) {
    return simple_op(m).has_value() || m == "li" || m == "mv" || m == "j" || m == "ret";
  }

  // Number of 32-bit words a mnemonic expands to. Needed in pass 1; only
  // `li` is size-variable and only on a numeric immediate.
  size_t instr_words(const SourceLine& sl) {
    if (sl.mnem != "li") return 1;
    if (sl.operands.size() != 2) throw AsmError("'li' expects 2 operand(s)", sl.line);
    int64_t imm = want_int(sl.operands[1], sl.line);
    return (imm >= -2048 && imm <= 2047) ? 1 : 2;
  }

  std::vector<Instruction> build(const SourceLine& sl) {
    const std::string& m = sl.mnem;
    const uint64_t pc = sl.addr;
    Instruction ins;

    if (m == "li") {
      expect_operands(sl, 2);
      uint8_t rd = want_reg(sl.operands[0], sl.line);
      int64_t imm = want_int(sl.operands[1], sl.line);
      if (imm >= -2048 && imm <= 2047)
        return {Instruction{Op::kAddi, rd, 0, 0, imm}};
      if (imm < INT32_MIN || imm > INT32_MAX)
        throw AsmError("li immediate out of 32-bit range", sl.line);
      int64_t hi = (imm + 0x800) >> 12;
      int64_t lo = imm - (hi << 12);
      return {Instruction{Op::kLui, rd, 0, 0, static_cast<int64_t>(
                              static_cast<int32_t>(uint32_t(hi) << 12))},
              Instruction{Op::kAddiw, rd, rd, 0, lo}};
    }
    if (m == "mv") {
      expect_operands(sl, 2);
      return {Instruction{Op::kAddi, want_reg(sl.operands[0], sl.line),
                          want_reg(sl.operands[1], sl.line), 0, 0}};
    }
    if (m == "j") {
      expect_operands(sl, 1);
      int64_t off = want_offset(sl.operands[0], pc, sl.line);
      check_jump(off, sl.line);
      return {Instruction{Op::kJal, 0, 0, 0, off}};
    }
    if (m == "ret") {
      expect_operands(sl, 0);
      return {Instruction{Op::kJalr, 0, 1, 0, 0}};
    }

    Op op = *simple_op(m);
    ins.op = op;
    switch (op) {
      case Op::kEcall:
        expect_operands(sl, 0);
        break;
      case Op::kLui:
      case Op::kAuipc: {
        expect_operands(sl, 2);
        ins.rd = want_reg(sl.operands[0], sl.line);
        int64_t field = want_int(sl.operands[1], sl.line);
        if (field < -0x80000 || field > 0xFFFFF)
          throw AsmError("upper immediate out of range", sl.line);
        ins.imm = static_cast<int64_t>(static_cast<int32_t>(uint32_t(field) << 12));
        break;
      }
      case Op::kJal: {
        expect_operands(sl, 2);
        ins.rd = want_reg(sl.operands[0], sl.line);
        ins.imm = want_offset(sl.operands[1], pc, sl.line);
        check_jump(ins.imm, sl.line);
        break;
      }
      case Op::kJalr:
        expect_operands(sl, 3);
        ins.rd = want_reg(sl.operands[0], sl.line);
        ins.rs1 = want_reg(sl.operands[1], sl.line);
        ins.imm = want_int(sl.operands[2], sl.line);
        check_imm12(ins.imm, sl.line);
        break;
      case Op::kBeq: case Op::kBne: case Op::kBlt:
      case Op::kBge: case Op::kBltu: case Op::kBgeu: {
        expect_operands(sl, 3);
        ins.rs1 = want_reg(sl.operands[0], sl.line);
        ins.rs2 = want_reg(sl.operands[1], sl.line);
        ins.imm = want_offset(sl.operands[2], pc, sl.line);
        if (ins.imm < -4096 || ins.imm > 4094)
          throw AsmError("branch target out of range", sl.line);
        if (ins.imm % 4 != 0) throw AsmError("misaligned branch target", sl.line);
        break;
      }
      case Op::kLb: case Op::kLh: case Op::kLw: case Op::kLd:
      case Op::kLbu: case Op::kLhu: case Op::kLwu: {
        expect_operands(sl, 2);
        ins.rd = want_reg(sl.operands[0], sl.line);
        auto [imm, rs1] = want_memop(sl.operands[1], sl.line);
        ins.rs1 = rs1;
        ins.imm = imm;
        check_imm12(ins.imm, sl.line);
        break;
      }
      case Op::kSb: case Op::kSh: case Op::kSw: case Op::kSd: {
        expect_operands(sl, 2);
        ins.rs2 = want_reg(sl.operands[0], sl.line);
        auto [imm, rs1] = want_memop(sl.operands[1], sl.line);
        ins.rs1 = rs1;
        ins.imm = imm;
        check_imm12(ins.imm, sl.line);
        break;
      }
      case Op::kSlli: case Op::kSrli: case Op::kSrai:
        expect_operands(sl, 3);
        ins.rd = want_reg(sl.operands[0], sl.line);
        ins.rs1 = want_reg(sl.operands[1], sl.line);
        ins.imm = want_int(sl.operands[2], sl.line);
        if (ins.imm < 0 || ins.imm > 63)
          throw AsmError("shift amount out of range", sl.line);
        break;
      case Op::kAddi: case Op::kSlti: case Op::kSltiu: case Op::kXori:
      case Op::kOri: case Op::kAndi: case Op::kAddiw:
        expect_operands(sl, 3);
        ins.rd = want_reg(sl.operands[0], sl.line);
        ins.rs1 = want_reg(sl.operands[1], sl.line);
        ins.imm = want_int(sl.operands[2], sl.line);
        check_imm12(ins.imm, sl.line);
        break;
      default:  // R-type including vdot
        expect_operands(sl, 3);
        ins.rd = want_reg(sl.operands[0], sl.line);
        ins.rs1 = want_reg(sl.operands[1], sl.line);
        ins.rs2 = want_reg(sl.operands[2], sl.line);
        break;
    }
    return {ins};
  }

  void check_imm12(int64_t v, int line) {
    if (v < -2048 || v > 2047) throw AsmError("immediate out of range", line);
  }
  void check_jump(int64_t off, int line) {
    if (off < -1048576 || off > 1048574) throw AsmError("jump target out of range", line);
    if (off % 4 != 0) throw AsmError("misaligned branch target", line);
  }

  void pass1() {
    std::istringstream in(program_.source);
    std::string raw;
    int line_no = 0;
    uint64_t lc = origin_;
    while (std::getline(in, raw)) {
      ++line_no;
      std::string text = raw;
      if (size_t hash = text.find('#'); hash != std::string::npos) text.resize(hash);
      text = trim_ws(text);
      if (text.empty()) continue;

      // Optional leading label.
      if (size_t colon = text.find(':'); colon != std::string::npos) {
        std::string name = trim_ws(text.substr(0, colon));
        if (is_label_name(name)) {
          if (program_.symbols.count(name))
            throw AsmError("duplicate label '" + name + "'", line_no);
          program_.symbols[name] = lc;
          text = trim_ws(text.substr(colon + 1));
          if (text.empty()) continue;
        }
      }

      SourceLine sl;
      sl.line = line_no;
      size_t sp = text.find_first_of(" \t");
      sl.mnem = text.substr(0, sp);
      for (char& c : sl.mnem) c = char(std::tolower(static_cast<unsigned char>(c)));
      if (sp != std::string::npos)
        sl.operands = split_operands(text.substr(sp + 1), line_no);

      if (sl.mnem == ".org") {
        if (sl.operands.size() != 1) throw AsmError(".org expects one address", line_no);
        int64_t a = want_int(sl.operands[0], line_no);
        uint64_t addr = static_cast<uint64_t>(a);
        if (addr < lc) throw AsmError(".org moves backwards", line_no);
        lc = addr;
        continue;
      }

      sl.addr = lc;
      if (sl.mnem == ".byte") {
        if (sl.operands.empty()) throw AsmError(".byte expects values", line_no);
        lc += sl.operands.size();
      } else if (sl.mnem == ".word") {
        if (sl.operands.empty()) throw AsmError(".word expects values", line_no);
        lc += 4 * sl.operands.size();
      } else if (sl.mnem == ".dword") {
        if (sl.operands.empty()) throw AsmError(".dword expects values", line_no);
        lc += 8 * sl.operands.size();
      } else if (sl.mnem[0] == '.') {
        throw AsmError("unknown directive '" + sl.mnem + "'", line_no);
      } else if (known_mnemonic(sl.mnem)) {
        if (lc % 4 != 0) throw AsmError("instruction at misaligned address", line_no);
        lc += 4 * instr_words(sl);
      } else {
        throw AsmError("unknown mnemonic '" + sl.mnem + "'", line_no);
      }
      lines_.push_back(std::move(sl));
    }
  }

  void emit_at(uint64_t addr, std::span<const uint8_t> bytes) {
    const uint64_t off = addr - origin_;
    if (program_.bytes.size() < off + bytes.size())
      program_.bytes.resize(off + bytes.size(), 0);
    std::copy(bytes.begin(), bytes.end(), program_.bytes.begin() + long(off));
  }

  void pass2() {
    for (SourceLine& sl : lines_) {
      if (sl.mnem == ".byte" || sl.mnem == ".word" || sl.mnem == ".dword") {
        const unsigned width = sl.mnem == ".byte" ? 1 : sl.mnem == ".word" ? 4 : 8;
        uint64_t at = sl.addr;
        for (const std::string& o : sl.operands) {
          int64_t v = want_int(o, sl.line);
          if (width == 1 && (v < -128 || v > 255))
            throw AsmError(".byte value out of range", sl.line);
          if (width == 4 && (v < INT32_MIN || v > int64_t(UINT32_MAX)))
            throw AsmError(".word value out of range", sl.line);
          uint64_t u = static_cast<uint64_t>(v);
          uint8_t buf[8];
          for (unsigned i = 0; i < width; ++i) buf[i] = uint8_t(u >> (8 * i));
          emit_at(at, std::span<const uint8_t>(buf, width));
          at += width;
        }
        continue;
      }
      sl.expansion = build(sl);
      uint64_t at = sl.addr;
      for (Instruction& ins : sl.expansion) {
        // li's second word sits 4 bytes later; rebuild pc-relative operands
        // against the right address is unnecessary since expansions never
        // use pc-relative immediates beyond the first word.
        uint32_t w = encode(ins);
        uint8_t buf[4] = {uint8_t(w), uint8_t(w >> 8), uint8_t(w >> 16), uint8_t(w >> 24)};
        emit_at(at, buf);
        at += 4;
      }
    }
  }

  uint64_t origin_;
  AsmProgram program_;
  std::vector<SourceLine> lines_;
};

}  // namespace detail

inline AsmProgram assemble(std::string_view source, uint64_t origin = kDefaultMemBase) {
  return detail::Assembler(source, origin).assemble();
}

// One line per 32-bit word. Words that do not decode, or whose decoded form
// would not re-assemble to the identical word, are rendered as `.word`; the
// output always re-assembles to the input image.
inline std::string disassemble(std::span<const uint8_t> image,
                               uint64_t base = kDefaultMemBase) {
  (void)base;
  if (image.size() % 4 != 0)
    throw std::invalid_argument("disassemble: image length not a multiple of 4");
  std::ostringstream out;
  for (size_t i = 0; i < image.size(); i += 4) {
    uint32_t w = uint32_t(image[i]) | uint32_t(image[i + 1]) << 8 |
                 uint32_t(image[i + 2]) << 16 | uint32_t(image[i + 3]) << 24;
    Instruction ins = decode(w);
    bool printable = ins.op != Op::kIllegal;
    if (printable && (ins.op == Op::kJal || ins.op == Op::kBeq || ins.op == Op::kBne ||
                      ins.op == Op::kBlt || ins.op == Op::kBge || ins.op == Op::kBltu ||
                      ins.op == Op::kBgeu)) {
      printable = ins.imm % 4 == 0;  // the subset assembles 4-aligned targets only
    }
    if (printable) printable = encode(ins) == w;
    if (printable) {
      out << render(ins) << '\n';
    } else {
      char buf[24];
      std::snprintf(buf, sizeof buf, ".word 0x%08x", w);
      out << buf << '\n';
    }
  }
  return out.str();
}

}  // namespace vdotsim
