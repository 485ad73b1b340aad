#pragma once

// Architectural machine model: 32 64-bit registers, flat little-endian
// memory, fetch/decode/execute stepping with per-class cycle accounting.
//
// Traps are terminal and leave architectural state untouched apart from the
// recorded trap descriptor: every fault check happens before any register,
// memory, or pc update. A machine instance is single-threaded; distinct
// instances share nothing.

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "vdotsim/cost_model.hpp"
#include "vdotsim/isa.hpp"
#include "vdotsim/vdot.hpp"

namespace vdotsim {

struct MachineConfig {
  uint64_t mem_base = kDefaultMemBase;
  uint64_t mem_size = kDefaultMemSize;
};

enum class TrapKind : uint8_t {
  kIllegalInstruction,
  kMemFault,
  kMisalignedFetch,
};

constexpr std::string_view to_string(TrapKind k) {
  switch (k) {
    case TrapKind::kIllegalInstruction: return "IllegalInstruction";
    case TrapKind::kMemFault: return "MemFault";
    case TrapKind::kMisalignedFetch: return "MisalignedFetch";
  }
  return "?";
}

struct Trap {
  TrapKind kind;
  uint64_t pc;      // pc of the faulting instruction
  uint64_t detail;  // faulting address or raw word, by kind
};

struct StepResult {
  enum class Kind : uint8_t { kRetired, kHalted, kTrap } kind;
  CostClass retired_class{};  // valid for kRetired
  uint32_t exit_code = 0;     // valid for kHalted
  Trap trap{};                // valid for kTrap

  bool retired_ok() const { return kind == Kind::kRetired; }
};

struct RunResult {
  enum class Outcome : uint8_t { kHalted, kTrap, kNonTermination } outcome;
  uint32_t exit_code = 0;
  Trap trap{};
  CycleReport report;
};

class Machine {
 public:
  explicit Machine(MachineConfig cfg = {})
      : base_(cfg.mem_base), mem_(cfg.mem_size) {}

  uint64_t reg(unsigned i) const {
    assert(i < 32);
    return regs_[i];
  }
  void set_reg(unsigned i, uint64_t v) {
    assert(i < 32);
    if (i != 0) regs_[i] = v;
  }

  uint64_t pc() const { return pc_; }
  void set_pc(uint64_t pc) { pc_ = pc; }

  uint64_t mem_base() const { return base_; }
  uint64_t mem_size() const { return mem_.size(); }

  uint64_t retired() const { return retired_; }
  uint64_t cycles() const { return cycles_; }
  const std::array<uint64_t, kNumCostClasses>& class_counts() const { return counts_; }

  bool halted() const { return halted_; }
  uint32_t exit_code() const { return exit_code_; }
  bool trapped() const { return trap_.has_value(); }
  const Trap& trap() const { return *trap_; }

  // Host-side memory access (bounds-checked, throws; no cycle charge).
  void poke(uint64_t addr, std::span<const uint8_t> bytes) {
    if (!in_range(addr, bytes.size()))
      throw std::out_of_range("poke: address range outside memory");
    std::memcpy(&mem_[addr - base_], bytes.data(), bytes.size());
    invalidate_text(addr, bytes.size());
  }
  void peek(uint64_t addr, std::span<uint8_t> bytes) const {
    if (!in_range(addr, bytes.size()))
      throw std::out_of_range("peek: address range outside memory");
    std::memcpy(bytes.data(), &mem_[addr - base_], bytes.size());
  }

  // Copies a flat binary image into memory, points pc at it, and pre-decodes
  // it. Instructions fetched from the image region use the decode cache;
  // stores into the region invalidate the affected entry.
  void load_program(std::span<const uint8_t> image, uint64_t base) {
    if (!in_range(base, image.size()))
      throw std::out_of_range("load_program: image outside memory");
    std::memcpy(&mem_[base - base_], image.data(), image.size());
    pc_ = base;
    text_base_ = base;
    decoded_.assign(image.size() / 4, Instruction{});
    for (size_t i = 0; i + 4 <= image.size(); i += 4) {
      uint32_t w;
      std::memcpy(&w, image.data() + i, 4);
      decoded_[i / 4] = decode(w);
    }
  }

  StepResult step(const CostConfig& cfg) {
    assert(!halted_ && !trap_);
    cfg_for_step_ = &cfg;
    const uint64_t pc = pc_;
    if (pc & 3) return take_trap(TrapKind::kMisalignedFetch, pc, pc);
    if (!in_range(pc, 4)) return take_trap(TrapKind::kMemFault, pc, pc);

    Instruction ins;
    const uint64_t text_off = pc - text_base_;
    if (text_off < decoded_.size() * 4) {
      ins = decoded_[text_off / 4];
    } else {
      uint32_t w;
      std::memcpy(&w, &mem_[pc - base_], 4);
      ins = decode(w);
    }

    switch (ins.op) {
      case Op::kIllegal:
        return take_trap(TrapKind::kIllegalInstruction, pc,
                         static_cast<uint64_t>(ins.imm));

      case Op::kLui:
        set_reg(ins.rd, static_cast<uint64_t>(ins.imm));
        return retire(ins, pc + 4);
      case Op::kAuipc:
        set_reg(ins.rd, pc + static_cast<uint64_t>(ins.imm));
        return retire(ins, pc + 4);

      case Op::kJal: {
        const uint64_t target = pc + static_cast<uint64_t>(ins.imm);
        if (target & 3) return take_trap(TrapKind::kMisalignedFetch, pc, target);
        set_reg(ins.rd, pc + 4);
        return retire(ins, target);
      }
      case Op::kJalr: {
        const uint64_t target = (regs_[ins.rs1] + static_cast<uint64_t>(ins.imm)) & ~1ull;
        if (target & 3) return take_trap(TrapKind::kMisalignedFetch, pc, target);
        set_reg(ins.rd, pc + 4);
        return retire(ins, target);
      }

      case Op::kBeq: return branch(ins, pc, regs_[ins.rs1] == regs_[ins.rs2]);
      case Op::kBne: return branch(ins, pc, regs_[ins.rs1] != regs_[ins.rs2]);
      case Op::kBlt:
        return branch(ins, pc, static_cast<int64_t>(regs_[ins.rs1]) <
                                   static_cast<int64_t>(regs_[ins.rs2]));
      case Op::kBge:
        return branch(ins, pc, static_cast<int64_t>(regs_[ins.rs1]) >=
                                   static_cast<int64_t>(regs_[ins.rs2]));
      case Op::kBltu: return branch(ins, pc, regs_[ins.rs1] < regs_[ins.rs2]);
      case Op::kBgeu: return branch(ins, pc, regs_[ins.rs1] >= regs_[ins.rs2]);

      case Op::kLb: return load(ins, pc, 1, true);
      case Op::kLbu: return load(ins, pc, 1, false);
      case Op::kLh: return load(ins, pc, 2, true);
      case Op::kLhu: return load(ins, pc, 2, false);
      case Op::kLw: return load(ins, pc, 4, true);
      case Op::kLwu: return load(ins, pc, 4, false);
      case Op::kLd: return load(ins, pc, 8, true);

      case Op::kSb: return store(ins, pc, 1);
      case Op::kSh: return store(ins, pc, 2);
      case Op::kSw: return store(ins, pc, 4);
      case Op::kSd: return store(ins, pc, 8);

      case Op::kAddi:
        set_reg(ins.rd, regs_[ins.rs1] + static_cast<uint64_t>(ins.imm));
        return retire(ins, pc + 4);
      case Op::kSlti:
        set_reg(ins.rd, static_cast<int64_t>(regs_[ins.rs1]) < ins.imm ? 1 : 0);
        return retire(ins, pc + 4);
      case Op::kSltiu:
        set_reg(ins.rd, regs_[ins.rs1] < static_cast<uint64_t>(ins.imm) ? 1 : 0);
        return retire(ins, pc + 4);
      case Op::kXori:
        set_reg(ins.rd, regs_[ins.rs1] ^ static_cast<uint64_t>(ins.imm));
        return retire(ins, pc + 4);
      case Op::kOri:
        set_reg(ins.rd, regs_[ins.rs1] | static_cast<uint64_t>(ins.imm));
        return retire(ins, pc + 4);
      case Op::kAndi:
        set_reg(ins.rd, regs_[ins.rs1] & static_cast<uint64_t>(ins.imm));
        return retire(ins, pc + 4);
      case Op::kSlli:
        set_reg(ins.rd, regs_[ins.rs1] << ins.imm);
        return retire(ins, pc + 4);
      case Op::kSrli:
        set_reg(ins.rd, regs_[ins.rs1] >> ins.imm);
        return retire(ins, pc + 4);
      case Op::kSrai:
        set_reg(ins.rd, static_cast<uint64_t>(static_cast<int64_t>(regs_[ins.rs1]) >> ins.imm));
        return retire(ins, pc + 4);

      case Op::kAdd:
        set_reg(ins.rd, regs_[ins.rs1] + regs_[ins.rs2]);
        return retire(ins, pc + 4);
      case Op::kSub:
        set_reg(ins.rd, regs_[ins.rs1] - regs_[ins.rs2]);
        return retire(ins, pc + 4);
      case Op::kSll:
        set_reg(ins.rd, regs_[ins.rs1] << (regs_[ins.rs2] & 63));
        return retire(ins, pc + 4);
      case Op::kSlt:
        set_reg(ins.rd, static_cast<int64_t>(regs_[ins.rs1]) <
                                static_cast<int64_t>(regs_[ins.rs2])
                            ? 1
                            : 0);
        return retire(ins, pc + 4);
      case Op::kSltu:
        set_reg(ins.rd, regs_[ins.rs1] < regs_[ins.rs2] ? 1 : 0);
        return retire(ins, pc + 4);
      case Op::kXor:
        set_reg(ins.rd, regs_[ins.rs1] ^ regs_[ins.rs2]);
        return retire(ins, pc + 4);
      case Op::kSrl:
        set_reg(ins.rd, regs_[ins.rs1] >> (regs_[ins.rs2] & 63));
        return retire(ins, pc + 4);
      case Op::kSra:
        set_reg(ins.rd, static_cast<uint64_t>(static_cast<int64_t>(regs_[ins.rs1]) >>
                                              (regs_[ins.rs2] & 63)));
        return retire(ins, pc + 4);
      case Op::kOr:
        set_reg(ins.rd, regs_[ins.rs1] | regs_[ins.rs2]);
        return retire(ins, pc + 4);
      case Op::kAnd:
        set_reg(ins.rd, regs_[ins.rs1] & regs_[ins.rs2]);
        return retire(ins, pc + 4);

      case Op::kAddiw:
        set_reg(ins.rd, sext32(static_cast<uint32_t>(regs_[ins.rs1]) +
                               static_cast<uint32_t>(ins.imm)));
        return retire(ins, pc + 4);
      case Op::kAddw:
        set_reg(ins.rd, sext32(static_cast<uint32_t>(regs_[ins.rs1]) +
                               static_cast<uint32_t>(regs_[ins.rs2])));
        return retire(ins, pc + 4);
      case Op::kSubw:
        set_reg(ins.rd, sext32(static_cast<uint32_t>(regs_[ins.rs1]) -
                               static_cast<uint32_t>(regs_[ins.rs2])));
        return retire(ins, pc + 4);
      case Op::kSllw:
        set_reg(ins.rd, sext32(static_cast<uint32_t>(regs_[ins.rs1])
                               << (regs_[ins.rs2] & 31)));
        return retire(ins, pc + 4);
      case Op::kSrlw:
        set_reg(ins.rd, sext32(static_cast<uint32_t>(regs_[ins.rs1]) >>
                               (regs_[ins.rs2] & 31)));
        return retire(ins, pc + 4);
      case Op::kSraw:
        set_reg(ins.rd,
                sext32(static_cast<uint32_t>(
                    static_cast<int32_t>(static_cast<uint32_t>(regs_[ins.rs1])) >>
                    (regs_[ins.rs2] & 31))));
        return retire(ins, pc + 4);

      case Op::kMul:
        set_reg(ins.rd, regs_[ins.rs1] * regs_[ins.rs2]);
        return retire(ins, pc + 4);
      case Op::kMulh: {
        const __int128 p = static_cast<__int128>(static_cast<int64_t>(regs_[ins.rs1])) *
                           static_cast<__int128>(static_cast<int64_t>(regs_[ins.rs2]));
        set_reg(ins.rd, static_cast<uint64_t>(p >> 64));
        return retire(ins, pc + 4);
      }
      case Op::kMulw:
        set_reg(ins.rd, sext32(static_cast<uint32_t>(regs_[ins.rs1]) *
                               static_cast<uint32_t>(regs_[ins.rs2])));
        return retire(ins, pc + 4);

      case Op::kVdot:
        set_reg(ins.rd, static_cast<uint64_t>(vdot8(regs_[ins.rs1], regs_[ins.rs2])));
        return retire(ins, pc + 4);

      case Op::kEcall: {
        charge(CostClass::kEcall, cfg);
        halted_ = true;
        exit_code_ = static_cast<uint32_t>(regs_[10]);
        pc_ = pc + 4;
        StepResult r;
        r.kind = StepResult::Kind::kHalted;
        r.exit_code = exit_code_;
        return r;
      }
    }
    return take_trap(TrapKind::kIllegalInstruction, pc, 0);
  }

  // Steps until halt, trap, or max_steps retired instructions.
  RunResult run(const CostConfig& cfg, uint64_t max_steps = UINT64_MAX) {
    RunResult result;
    cfg_for_step_ = &cfg;
    for (uint64_t i = 0; i < max_steps; ++i) {
      StepResult s = step(cfg);
      if (s.kind == StepResult::Kind::kHalted) {
        result.outcome = RunResult::Outcome::kHalted;
        result.exit_code = s.exit_code;
        result.report = make_report(counts_, cfg);
        return result;
      }
      if (s.kind == StepResult::Kind::kTrap) {
        result.outcome = RunResult::Outcome::kTrap;
        result.trap = s.trap;
        result.report = make_report(counts_, cfg);
        return result;
      }
    }
    result.outcome = RunResult::Outcome::kNonTermination;
    result.report = make_report(counts_, cfg);
    return result;
  }

 private:
  static constexpr uint64_t sext32(uint32_t v) {
    return static_cast<uint64_t>(static_cast<int64_t>(static_cast<int32_t>(v)));
  }

  bool in_range(uint64_t addr, uint64_t len) const {
    const uint64_t off = addr - base_;
    return off <= mem_.size() && len <= mem_.size() - off;
  }

  void charge(CostClass c, const CostConfig& cfg) {
    ++retired_;
    ++counts_[static_cast<size_t>(c)];
    cycles_ += cfg.cost_of(c);
  }

  StepResult retire_as(CostClass c, uint64_t next_pc, const CostConfig& cfg) {
    charge(c, cfg);
    pc_ = next_pc;
    StepResult r;
    r.kind = StepResult::Kind::kRetired;
    r.retired_class = c;
    return r;
  }

  StepResult retire(const Instruction& ins, uint64_t next_pc) {
    return retire_as(cost_class_of(ins.op), next_pc, *cfg_for_step_);
  }

  StepResult branch(const Instruction& ins, uint64_t pc, bool taken) {
    if (!taken) return retire_as(CostClass::kBranchNotTaken, pc + 4, *cfg_for_step_);
    const uint64_t target = pc + static_cast<uint64_t>(ins.imm);
    if (target & 3) return take_trap(TrapKind::kMisalignedFetch, pc, target);
    return retire_as(CostClass::kBranchTaken, target, *cfg_for_step_);
  }

  StepResult load(const Instruction& ins, uint64_t pc, unsigned width, bool sign) {
    const uint64_t addr = regs_[ins.rs1] + static_cast<uint64_t>(ins.imm);
    if ((width > 1 && (addr & (width - 1))) || !in_range(addr, width))
      return take_trap(TrapKind::kMemFault, pc, addr);
    uint64_t raw = 0;
    std::memcpy(&raw, &mem_[addr - base_], width);
    if (sign && width < 8) {
      const unsigned shift = 64 - 8 * width;
      raw = static_cast<uint64_t>(static_cast<int64_t>(raw << shift) >> shift);
    }
    set_reg(ins.rd, raw);
    return retire(ins, pc + 4);
  }

  StepResult store(const Instruction& ins, uint64_t pc, unsigned width) {
    const uint64_t addr = regs_[ins.rs1] + static_cast<uint64_t>(ins.imm);
    if ((width > 1 && (addr & (width - 1))) || !in_range(addr, width))
      return take_trap(TrapKind::kMemFault, pc, addr);
    const uint64_t v = regs_[ins.rs2];
    std::memcpy(&mem_[addr - base_], &v, width);
    invalidate_text(addr, width);
    return retire(ins, pc + 4);
  }

  StepResult take_trap(TrapKind kind, uint64_t pc, uint64_t detail) {
    trap_ = Trap{kind, pc, detail};
    StepResult r;
    r.kind = StepResult::Kind::kTrap;
    r.trap = *trap_;
    return r;
  }

  void invalidate_text(uint64_t addr, uint64_t len) {
    if (decoded_.empty() || len == 0) return;
    const uint64_t text_end = text_base_ + decoded_.size() * 4;
    if (addr >= text_end || addr + len <= text_base_) return;
    const uint64_t lo = std::max(addr, text_base_);
    const uint64_t hi = std::min(addr + len, text_end);
    const uint64_t first = (lo - text_base_) / 4;
    const uint64_t last = (hi - 1 - text_base_) / 4;
    for (uint64_t i = first; i <= last; ++i) {
      uint32_t w;
      std::memcpy(&w, &mem_[text_base_ - base_ + i * 4], 4);
      decoded_[i] = decode(w);
    }
  }

  uint64_t base_;
  std::vector<uint8_t> mem_;
  std::array<uint64_t, 32> regs_{};
  uint64_t pc_ = 0;
  uint64_t retired_ = 0;
  uint64_t cycles_ = 0;
  std::array<uint64_t, kNumCostClasses> counts_{};
  bool halted_ = false;
  uint32_t exit_code_ = 0;
  std::optional<Trap> trap_;
  uint64_t text_base_ = 0;
  std::vector<Instruction> decoded_;
  const CostConfig* cfg_for_step_ = nullptr;
};

}  // namespace vdotsim
