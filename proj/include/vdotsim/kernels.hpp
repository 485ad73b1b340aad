#pragma once

// Generated simulator programs for int8 dot products and matrix multiplies,
// in two flavors: a scalar byte-at-a-time baseline and a blocked path using
// the vector dot-product instruction (32-element blocks held in four
// register pairs, partial sums accumulated in software; remainders in
// groups of eight, then element-wise). Both flavors are bit-exact equals of
// a widening integer dot product; they differ only in instruction mix.
//
// Kernel ABI (registers at entry):
//   dot:    a0 = X base (int8[n]), a1 = Y base, a2 = n; result int64 in a0.
//   matmul: a0 = A (int8, MxK row-major), a1 = B (int8, KxN column-major,
//           so each output element reads two contiguous runs), a2 = C
//           (int32, MxN row-major, pre-zeroed by the harness), a3..a5 =
//           M, K, N; a0 = 0 at halt.
// Programs halt via ecall. Operand buffers sit at fixed offsets above the
// program image (kKernelArg*Offset below).

#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "vdotsim/assembler.hpp"
#include "vdotsim/machine.hpp"

namespace vdotsim {

enum class Flavor : uint8_t { kScalar, kVdot };

constexpr std::string_view to_string(Flavor f) {
  return f == Flavor::kScalar ? "scalar" : "vdot";
}

struct DotShape {
  uint64_t n;
};
struct MatmulShape {
  uint64_t m, k, n;
};
using KernelShape = std::variant<DotShape, MatmulShape>;

struct KernelProgram {
  Flavor flavor;
  KernelShape shape;
  std::string source;
  std::vector<uint8_t> image;
  uint64_t origin;
};

// Operand placement relative to the machine's memory base.
inline constexpr uint64_t kKernelMemBytes = 1ull << 20;
inline constexpr uint64_t kKernelArgAOffset = 0x10000;  // X / A
inline constexpr uint64_t kKernelArgBOffset = 0x20000;  // Y / B
inline constexpr uint64_t kKernelArgCOffset = 0x80000;  // C (matmul only)

class KernelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

class AsmText {
 public:
  void op(const std::string& s) { out_ << "    " << s << '\n'; }
  void label(const std::string& s) { out_ << s << ":\n"; }
  void comment(const std::string& s) { out_ << "# " << s << '\n'; }
  std::string gensym(const std::string& stem) { return stem + std::to_string(id_++); }
  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
  int id_ = 0;
};

// Emits code computing the int64 dot product of len elements starting at
// t0 (X) and t1 (Y) into t2. `len_reg` holds the runtime length; `len` is
// the build-time length the remainder handling is specialized to. The
// 32-element block loop advances t0/t1; remainders use immediate offsets.
// Clobbers t0..t6, a6, a7, s8..s11.
inline void emit_dot_body(AsmText& t, Flavor flavor, uint64_t len,
                          const std::string& len_reg) {
  t.op("li t2, 0");
  if (flavor == Flavor::kScalar) {
    const std::string loop = t.gensym("Lsloop"), done = t.gensym("Lsdone");
    t.op("add t3, t0, " + len_reg);
    t.op("beq t0, t3, " + done);
    t.label(loop);
    t.op("lb t4, 0(t0)");
    t.op("lb t5, 0(t1)");
    t.op("mul t6, t4, t5");
    t.op("add t2, t2, t6");
    t.op("addi t0, t0, 1");
    t.op("addi t1, t1, 1");
    t.op("bne t0, t3, " + loop);
    t.label(done);
    return;
  }
  if (len >= 32) {
    const std::string blk = t.gensym("Lblk");
    t.op("srli t4, " + len_reg + ", 5");
    t.op("slli t4, t4, 5");
    t.op("add t4, t0, t4");
    t.label(blk);
    t.op("ld t5, 0(t0)");
    t.op("ld t6, 8(t0)");
    t.op("ld s8, 16(t0)");
    t.op("ld s9, 24(t0)");
    t.op("ld a6, 0(t1)");
    t.op("ld a7, 8(t1)");
    t.op("ld s10, 16(t1)");
    t.op("ld s11, 24(t1)");
    t.op("vdot t5, t5, a6");
    t.op("vdot t6, t6, a7");
    t.op("vdot s8, s8, s10");
    t.op("vdot s9, s9, s11");
    t.op("add t2, t2, t5");
    t.op("add t2, t2, t6");
    t.op("add t2, t2, s8");
    t.op("add t2, t2, s9");
    t.op("addi t0, t0, 32");
    t.op("addi t1, t1, 32");
    t.op("bne t0, t4, " + blk);
  }
  const uint64_t rem = len % 32;
  const uint64_t groups = rem / 8;
  for (uint64_t g = 0; g < groups; ++g) {
    const std::string off = std::to_string(8 * g);
    t.op("ld t5, " + off + "(t0)");
    t.op("ld a6, " + off + "(t1)");
    t.op("vdot t5, t5, a6");
    t.op("add t2, t2, t5");
  }
  for (uint64_t i = 8 * groups; i < rem; ++i) {
    const std::string off = std::to_string(i);
    t.op("lb t5, " + off + "(t0)");
    t.op("lb t6, " + off + "(t1)");
    t.op("mul t5, t5, t6");
    t.op("add t2, t2, t5");
  }
}

}  // namespace detail

inline KernelProgram build_dot_program(Flavor flavor, uint64_t n,
                                       uint64_t origin = kDefaultMemBase) {
  if (n < 1) throw KernelError("build_dot_program: n must be >= 1");
  detail::AsmText t;
  t.comment("dot product, " + std::string(to_string(flavor)) + " flavor, n=" +
            std::to_string(n));
  t.comment("a0 = X, a1 = Y, a2 = n; result in a0");
  t.op("mv t0, a0");
  t.op("mv t1, a1");
  detail::emit_dot_body(t, flavor, n, "a2");
  t.op("mv a0, t2");
  t.op("ecall");

  KernelProgram kp;
  kp.flavor = flavor;
  kp.shape = DotShape{n};
  kp.source = t.str();
  kp.origin = origin;
  kp.image = assemble(kp.source, origin).bytes;
  return kp;
}

inline KernelProgram build_matmul_program(Flavor flavor, uint64_t m, uint64_t k,
                                          uint64_t n,
                                          uint64_t origin = kDefaultMemBase) {
  if (m < 1 || k < 1 || n < 1)
    throw KernelError("build_matmul_program: dimensions must be >= 1");
  detail::AsmText t;
  t.comment("matmul C[MxN] = A[MxK] * B[KxN], " + std::string(to_string(flavor)) +
            " flavor, M=" + std::to_string(m) + " K=" + std::to_string(k) +
            " N=" + std::to_string(n));
  t.comment("a0 = A row-major, a1 = B column-major, a2 = C int32 row-major");
  const std::string row = t.gensym("Lrow"), col = t.gensym("Lcol");
  const std::string rownext = t.gensym("Lrownext"), done = t.gensym("Lmmdone");
  t.op("li s0, 0");
  t.label(row);
  t.op("beq s0, a3, " + done);
  t.op("mul s2, s0, a4");
  t.op("add s2, a0, s2");
  t.op("li s1, 0");
  t.label(col);
  t.op("beq s1, a5, " + rownext);
  t.op("mul s3, s1, a4");
  t.op("add s3, a1, s3");
  t.op("mv t0, s2");
  t.op("mv t1, s3");
  detail::emit_dot_body(t, flavor, k, "a4");
  t.op("mul s4, s0, a5");
  t.op("add s4, s4, s1");
  t.op("slli s4, s4, 2");
  t.op("add s4, a2, s4");
  t.op("sw t2, 0(s4)");
  t.op("addi s1, s1, 1");
  t.op("j " + col);
  t.label(rownext);
  t.op("addi s0, s0, 1");
  t.op("j " + row);
  t.label(done);
  t.op("li a0, 0");
  t.op("ecall");

  KernelProgram kp;
  kp.flavor = flavor;
  kp.shape = MatmulShape{m, k, n};
  kp.source = t.str();
  kp.origin = origin;
  kp.image = assemble(kp.source, origin).bytes;
  return kp;
}

struct DotRun {
  int64_t sum = 0;
  CycleReport report;
};

struct MatmulRun {
  std::vector<int32_t> c;
  CycleReport report;
};

namespace detail {

inline std::span<const uint8_t> as_bytes(std::span<const int8_t> v) {
  return {reinterpret_cast<const uint8_t*>(v.data()), v.size()};
}

[[noreturn]] inline void kernel_trap(const Machine& m, const RunResult& r) {
  std::ostringstream os;
  if (r.outcome == RunResult::Outcome::kNonTermination) {
    os << "kernel did not terminate (retired " << m.retired() << ")";
  } else {
    os << "kernel trapped: " << to_string(r.trap.kind) << " at pc 0x" << std::hex
       << r.trap.pc << " detail 0x" << r.trap.detail;
  }
  throw KernelError(os.str());
}

}  // namespace detail

inline DotRun run_dot(const KernelProgram& kp, std::span<const int8_t> x,
                      std::span<const int8_t> y, const CostConfig& cfg) {
  const auto* shape = std::get_if<DotShape>(&kp.shape);
  if (!shape) throw KernelError("run_dot: not a dot kernel");
  if (x.size() != shape->n || y.size() != shape->n)
    throw KernelError("run_dot: operand length mismatch");
  if (shape->n > kKernelArgBOffset - kKernelArgAOffset)
    throw KernelError("run_dot: n exceeds operand region");

  Machine m(MachineConfig{kp.origin, kKernelMemBytes});
  m.load_program(kp.image, kp.origin);
  m.poke(kp.origin + kKernelArgAOffset, detail::as_bytes(x));
  m.poke(kp.origin + kKernelArgBOffset, detail::as_bytes(y));
  m.set_reg(10, kp.origin + kKernelArgAOffset);
  m.set_reg(11, kp.origin + kKernelArgBOffset);
  m.set_reg(12, shape->n);

  RunResult r = m.run(cfg, 16 * shape->n + 4096);
  if (r.outcome != RunResult::Outcome::kHalted) detail::kernel_trap(m, r);

  DotRun out;
  out.sum = static_cast<int64_t>(m.reg(10));
  out.report = make_report(m.class_counts(), cfg, 0, 2 * shape->n + 8);
  return out;
}

inline MatmulRun run_matmul(const KernelProgram& kp, std::span<const int8_t> a,
                            std::span<const int8_t> b, const CostConfig& cfg) {
  const auto* shape = std::get_if<MatmulShape>(&kp.shape);
  if (!shape) throw KernelError("run_matmul: not a matmul kernel");
  const auto [M, K, N] = *shape;
  if (a.size() != M * K || b.size() != K * N)
    throw KernelError("run_matmul: operand shape mismatch");
  if (M * K > kKernelArgBOffset - kKernelArgAOffset ||
      K * N > kKernelArgCOffset - kKernelArgBOffset ||
      4 * M * N > kKernelMemBytes - kKernelArgCOffset)
    throw KernelError("run_matmul: operands exceed the kernel memory layout");

  Machine m(MachineConfig{kp.origin, kKernelMemBytes});
  m.load_program(kp.image, kp.origin);
  m.poke(kp.origin + kKernelArgAOffset, detail::as_bytes(a));
  m.poke(kp.origin + kKernelArgBOffset, detail::as_bytes(b));
  m.set_reg(10, kp.origin + kKernelArgAOffset);
  m.set_reg(11, kp.origin + kKernelArgBOffset);
  m.set_reg(12, kp.origin + kKernelArgCOffset);
  m.set_reg(13, M);
  m.set_reg(14, K);
  m.set_reg(15, N);

  RunResult r = m.run(cfg, M * N * (8 * K + 96) + 4096);
  if (r.outcome != RunResult::Outcome::kHalted) detail::kernel_trap(m, r);
  if (r.exit_code != 0) throw KernelError("run_matmul: nonzero exit code");

  MatmulRun out;
  out.c.resize(M * N);
  m.peek(kp.origin + kKernelArgCOffset,
         {reinterpret_cast<uint8_t*>(out.c.data()), out.c.size() * 4});
  out.report = make_report(m.class_counts(), cfg, 0, M * K + K * N + 4 * M * N);
  return out;
}

// --- Symmetric per-tensor int8 quantization -------------------------------

struct QuantTensor {
  std::vector<size_t> dims;
  std::vector<int8_t> data;
  float scale = 1.0f;  // real value ~= scale * int8

  size_t size() const { return data.size(); }
};

struct AccumTensor {
  std::vector<size_t> dims;
  std::vector<int32_t> data;
  float scale = 1.0f;
};

// scale = max|v| / 127; values round half away from zero and clamp to
// [-127, 127] (-128 stays out of the quantizer's range). All-zero input
// maps to scale 1 and zero data.
inline QuantTensor quantize(std::span<const float> values, std::vector<size_t> dims) {
  size_t expect = 1;
  for (size_t d : dims) expect *= d;
  if (expect != values.size()) throw std::invalid_argument("quantize: shape mismatch");
  float amax = 0.0f;
  for (float v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("quantize: non-finite input");
    amax = std::max(amax, std::fabs(v));
  }
  QuantTensor t;
  t.dims = std::move(dims);
  t.data.resize(values.size());
  if (amax == 0.0f) {
    t.scale = 1.0f;
    return t;
  }
  t.scale = amax / 127.0f;
  for (size_t i = 0; i < values.size(); ++i) {
    float q = std::round(values[i] * 127.0f / amax);
    q = std::min(127.0f, std::max(-127.0f, q));
    t.data[i] = static_cast<int8_t>(q);
  }
  return t;
}

inline std::vector<float> dequantize(const QuantTensor& t) {
  std::vector<float> out(t.data.size());
  for (size_t i = 0; i < t.data.size(); ++i) out[i] = t.scale * float(t.data[i]);
  return out;
}

inline std::vector<float> dequantize(const AccumTensor& t) {
  std::vector<float> out(t.data.size());
  for (size_t i = 0; i < t.data.size(); ++i) out[i] = t.scale * float(t.data[i]);
  return out;
}

// Cosine similarity with all three dot products executed in the simulator
// on the selected flavor.
inline double cosine_similarity(std::span<const int8_t> x, std::span<const int8_t> y,
                                Flavor flavor, const CostConfig& cfg) {
  if (x.size() != y.size() || x.empty())
    throw std::invalid_argument("cosine_similarity: length mismatch");
  KernelProgram kp = build_dot_program(flavor, x.size());
  const int64_t xy = run_dot(kp, x, y, cfg).sum;
  const int64_t xx = run_dot(kp, x, x, cfg).sum;
  const int64_t yy = run_dot(kp, y, y, cfg).sum;
  if (xx == 0 || yy == 0)
    throw std::domain_error("cosine_similarity: zero-norm input");
  return double(xy) / (std::sqrt(double(xx)) * std::sqrt(double(yy)));
}

}  // namespace vdotsim
