#pragma once

// Desk-scale GPT-2-style decoder whose int8 matrix multiplies execute inside
// the simulator, with host-side float work (layernorm, softmax, GELU,
// residuals, bias adds, quantize/dequantize) charged through the cost
// model's host rates. The scalar and vdot backends produce bit-identical
// logits; they differ only in modeled cycles.
//
// Quantization scheme: weights are symmetric per-tensor int8 (fixed at model
// build). Activations are quantized per position vector: each dense-layer
// input row, per-head query/key row, and softmax row carries its own scale,
// and the value tensor seen by query position i is quantized over rows 0..i.
// Scales for a position therefore never depend on later positions, which
// keeps the decoder exactly causal.
//
// Host float ops are counted one per scalar add/mul/exp/div/sqrt/compare at
// the sites listed in each helper; counts are exact and deterministic, so
// cycle totals reproduce across runs.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "vdotsim/kernels.hpp"
#include "vdotsim/rng.hpp"

namespace vdotsim {

using Backend = Flavor;

struct ModelConfig {
  uint32_t n_vocab = 0;
  uint32_t n_ctx = 0;
  uint32_t n_embd = 0;
  uint32_t n_head = 0;
  uint32_t n_layer = 0;

  uint32_t d_k() const { return n_embd / n_head; }

  void validate() const {
    if (!n_vocab || !n_ctx || !n_embd || !n_head || !n_layer)
      throw std::invalid_argument("model config: all fields must be positive");
    if (n_embd % n_head != 0)
      throw std::invalid_argument("model config: n_embd not divisible by n_head");
    if (n_embd % 32 != 0)
      throw std::invalid_argument("model config: n_embd not divisible by 32");
  }

  bool operator==(const ModelConfig&) const = default;
};

// Desk-scale stand-ins preserving the monotone depth/width growth of the
// published small/medium/large shapes.
inline ModelConfig tiny_small() { return {256, 64, 64, 4, 2}; }
inline ModelConfig tiny_medium() { return {256, 64, 128, 8, 4}; }
inline ModelConfig tiny_large() { return {256, 64, 192, 12, 6}; }

inline ModelConfig model_config_by_name(std::string_view name) {
  if (name == "tiny-small") return tiny_small();
  if (name == "tiny-medium") return tiny_medium();
  if (name == "tiny-large") return tiny_large();
  throw std::invalid_argument("unknown model name '" + std::string(name) + "'");
}

struct LayerWeights {
  std::vector<float> ln1_g, ln1_b, ln2_g, ln2_b;
  QuantTensor wq, wk, wv, wo;  // {n_embd, n_embd}, column-major
  std::vector<float> bq, bk, bv, bo;
  QuantTensor w_fc;    // {n_embd, 4*n_embd}, column-major
  std::vector<float> b_fc;
  QuantTensor w_proj;  // {4*n_embd, n_embd}, column-major
  std::vector<float> b_proj;
};

struct Model {
  ModelConfig config;
  // Row-major n_vocab x n_embd; read row-wise for embedding lookup and as a
  // column-major n_embd x n_vocab matrix for the tied output head.
  QuantTensor tok_emb;
  std::vector<float> pos_emb;  // n_ctx * n_embd
  std::vector<LayerWeights> layers;
  std::vector<float> lnf_g, lnf_b;
};

// Deterministic random-weight model: reals uniform in [-0.1, 0.1], weight
// matrices then quantized. Same (config, seed) yields identical bytes.
inline Model random_model(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  auto reals = [&](size_t count) {
    std::vector<float> v(count);
    for (float& x : v) x = static_cast<float>(rng.range(-0.1, 0.1));
    return v;
  };
  auto qtensor = [&](size_t rows, size_t cols) {
    std::vector<float> v = reals(rows * cols);
    return quantize(v, {rows, cols});
  };

  Model m;
  m.config = cfg;
  const size_t n = cfg.n_embd;
  m.tok_emb = qtensor(cfg.n_vocab, n);
  m.pos_emb = reals(size_t(cfg.n_ctx) * n);
  m.layers.resize(cfg.n_layer);
  for (LayerWeights& lw : m.layers) {
    lw.ln1_g = reals(n);
    lw.ln1_b = reals(n);
    lw.wq = qtensor(n, n);
    lw.bq = reals(n);
    lw.wk = qtensor(n, n);
    lw.bk = reals(n);
    lw.wv = qtensor(n, n);
    lw.bv = reals(n);
    lw.wo = qtensor(n, n);
    lw.bo = reals(n);
    lw.ln2_g = reals(n);
    lw.ln2_b = reals(n);
    lw.w_fc = qtensor(n, 4 * n);
    lw.b_fc = reals(4 * n);
    lw.w_proj = qtensor(4 * n, n);
    lw.b_proj = reals(n);
  }
  m.lnf_g = reals(n);
  m.lnf_b = reals(n);
  return m;
}

// --- QGP1 model file format ------------------------------------------------
//
// magic "QGP1", u32 version=1, u32 {n_vocab, n_ctx, n_embd, n_head, n_layer},
// then tensor records in a fixed order:
//   u16 name length, name bytes, u8 rank, u32 dims..., f32 scale (0 for real
//   tensors), u8 dtype (0 = int8, 1 = f32), raw little-endian data.

class ModelIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u16(std::ostream& out, uint16_t v) {
  uint8_t b[2] = {uint8_t(v), uint8_t(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}
inline void put_u32(std::ostream& out, uint32_t v) {
  uint8_t b[4] = {uint8_t(v), uint8_t(v >> 8), uint8_t(v >> 16), uint8_t(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
inline void put_f32(std::ostream& out, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(out, u);
}

struct TensorRef {
  std::string name;
  std::vector<uint32_t> dims;
  const QuantTensor* q = nullptr;       // int8 payload
  const std::vector<float>* f = nullptr;  // f32 payload
};

inline void for_each_tensor(const Model& m, auto&& fn) {
  const uint32_t n = m.config.n_embd;
  fn(TensorRef{"tok_emb", {m.config.n_vocab, n}, &m.tok_emb, nullptr});
  fn(TensorRef{"pos_emb", {m.config.n_ctx, n}, nullptr, &m.pos_emb});
  for (uint32_t i = 0; i < m.config.n_layer; ++i) {
    const LayerWeights& lw = m.layers[i];
    const std::string p = "h" + std::to_string(i) + ".";
    fn(TensorRef{p + "ln1.g", {n}, nullptr, &lw.ln1_g});
    fn(TensorRef{p + "ln1.b", {n}, nullptr, &lw.ln1_b});
    fn(TensorRef{p + "attn.wq", {n, n}, &lw.wq, nullptr});
    fn(TensorRef{p + "attn.bq", {n}, nullptr, &lw.bq});
    fn(TensorRef{p + "attn.wk", {n, n}, &lw.wk, nullptr});
    fn(TensorRef{p + "attn.bk", {n}, nullptr, &lw.bk});
    fn(TensorRef{p + "attn.wv", {n, n}, &lw.wv, nullptr});
    fn(TensorRef{p + "attn.bv", {n}, nullptr, &lw.bv});
    fn(TensorRef{p + "attn.wo", {n, n}, &lw.wo, nullptr});
    fn(TensorRef{p + "attn.bo", {n}, nullptr, &lw.bo});
    fn(TensorRef{p + "ln2.g", {n}, nullptr, &lw.ln2_g});
    fn(TensorRef{p + "ln2.b", {n}, nullptr, &lw.ln2_b});
    fn(TensorRef{p + "ffn.w_fc", {n, 4 * n}, &lw.w_fc, nullptr});
    fn(TensorRef{p + "ffn.b_fc", {4 * n}, nullptr, &lw.b_fc});
    fn(TensorRef{p + "ffn.w_proj", {4 * n, n}, &lw.w_proj, nullptr});
    fn(TensorRef{p + "ffn.b_proj", {n}, nullptr, &lw.b_proj});
  }
  fn(TensorRef{"lnf.g", {n}, nullptr, &m.lnf_g});
  fn(TensorRef{"lnf.b", {n}, nullptr, &m.lnf_b});
}

}  // namespace detail

inline void save_model(const Model& m, std::ostream& out) {
  out.write("QGP1", 4);
  detail::put_u32(out, 1);
  detail::put_u32(out, m.config.n_vocab);
  detail::put_u32(out, m.config.n_ctx);
  detail::put_u32(out, m.config.n_embd);
  detail::put_u32(out, m.config.n_head);
  detail::put_u32(out, m.config.n_layer);
  detail::for_each_tensor(m, [&](const detail::TensorRef& t) {
    detail::put_u16(out, uint16_t(t.name.size()));
    out.write(t.name.data(), std::streamsize(t.name.size()));
    out.put(char(t.dims.size()));
    for (uint32_t d : t.dims) detail::put_u32(out, d);
    if (t.q) {
      detail::put_f32(out, t.q->scale);
      out.put(0);
      out.write(reinterpret_cast<const char*>(t.q->data.data()),
                std::streamsize(t.q->data.size()));
    } else {
      detail::put_f32(out, 0.0f);
      out.put(1);
      out.write(reinterpret_cast<const char*>(t.f->data()),
                std::streamsize(t.f->size() * 4));
    }
  });
  if (!out) throw ModelIoError("write failure");
}

inline void save_model(const Model& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelIoError("cannot open '" + path + "' for writing");
  save_model(m, out);
}

inline Model load_model(std::istream& in) {
  auto read_bytes = [&](void* dst, size_t len, const std::string& what) {
    in.read(reinterpret_cast<char*>(dst), std::streamsize(len));
    if (size_t(in.gcount()) != len) throw ModelIoError("truncated " + what);
  };
  auto read_u32 = [&](const std::string& what) {
    uint8_t b[4];
    read_bytes(b, 4, what);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
  };

  char magic[4];
  read_bytes(magic, 4, "header");
  if (std::memcmp(magic, "QGP1", 4) != 0) throw ModelIoError("bad magic");
  const uint32_t version = read_u32("header");
  if (version != 1)
    throw ModelIoError("unsupported version " + std::to_string(version));

  ModelConfig cfg;
  cfg.n_vocab = read_u32("config");
  cfg.n_ctx = read_u32("config");
  cfg.n_embd = read_u32("config");
  cfg.n_head = read_u32("config");
  cfg.n_layer = read_u32("config");
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ModelIoError(std::string("bad config: ") + e.what());
  }

  // Build an empty model with the right shapes, then fill tensors in order.
  Model m;
  m.config = cfg;
  m.layers.resize(cfg.n_layer);

  struct Slot {
    std::string name;
    std::vector<uint32_t> dims;
    QuantTensor* q = nullptr;
    std::vector<float>* f = nullptr;
  };
  std::vector<Slot> slots;
  detail::for_each_tensor(m, [&](const detail::TensorRef& t) {
    slots.push_back(Slot{t.name, t.dims, const_cast<QuantTensor*>(t.q),
                         const_cast<std::vector<float>*>(t.f)});
  });

  for (Slot& slot : slots) {
    uint8_t len_b[2];
    read_bytes(len_b, 2, "tensor header");
    const uint16_t name_len = uint16_t(len_b[0]) | uint16_t(len_b[1]) << 8;
    std::string name(name_len, '\0');
    read_bytes(name.data(), name_len, "tensor header");
    if (name != slot.name)
      throw ModelIoError("unexpected tensor '" + name + "' (wanted '" + slot.name + "')");
    uint8_t rank;
    read_bytes(&rank, 1, "tensor '" + name + "'");
    if (rank != slot.dims.size())
      throw ModelIoError("shape mismatch for tensor '" + name + "'");
    size_t count = 1;
    for (uint8_t i = 0; i < rank; ++i) {
      const uint32_t d = read_u32("tensor '" + name + "'");
      if (d != slot.dims[i])
        throw ModelIoError("shape mismatch for tensor '" + name + "'");
      count *= d;
    }
    uint32_t scale_bits = read_u32("tensor '" + name + "'");
    float scale;
    std::memcpy(&scale, &scale_bits, 4);
    uint8_t dtype;
    read_bytes(&dtype, 1, "tensor '" + name + "'");
    if (slot.q) {
      if (dtype != 0) throw ModelIoError("bad dtype for tensor '" + name + "'");
      if (!(scale > 0.0f) || !std::isfinite(scale))
        throw ModelIoError("bad scale for tensor '" + name + "'");
      slot.q->dims.assign(slot.dims.begin(), slot.dims.end());
      slot.q->scale = scale;
      slot.q->data.resize(count);
      read_bytes(slot.q->data.data(), count, "tensor '" + name + "'");
    } else {
      if (dtype != 1) throw ModelIoError("bad dtype for tensor '" + name + "'");
      slot.f->resize(count);
      read_bytes(slot.f->data(), count * 4, "tensor '" + name + "'");
    }
  }
  return m;
}

inline Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelIoError("cannot open '" + path + "'");
  return load_model(in);
}

// --- Forward pass -----------------------------------------------------------

struct LnStats {
  double mean;
  double var;
};

struct ForwardHooks {
  std::vector<LnStats>* ln_stats = nullptr;         // per normalized row
  std::vector<double>* softmax_row_sums = nullptr;  // per softmax row
};

struct ForwardOptions {
  bool all_positions = false;  // also produce logits for every position
  ForwardHooks hooks;
};

struct ForwardTrace {
  std::vector<float> logits;      // last position, n_vocab
  std::vector<float> all_logits;  // T x n_vocab, when requested
  CycleReport report;
};

namespace detail {

// Co-simulation context: routes int8 matmuls through the simulator, caches
// built kernel programs by shape, and accumulates cycle tallies plus host
// float-op counts.
struct CoSim {
  Backend backend;
  const CostConfig* cfg;
  std::map<std::tuple<uint64_t, uint64_t, uint64_t>, KernelProgram> programs;
  CycleReport tally;

  void ops(uint64_t n) { tally.host_float_ops += n; }

  std::vector<int32_t> matmul(std::span<const int8_t> a, std::span<const int8_t> b,
                              uint64_t m, uint64_t k, uint64_t n) {
    auto key = std::make_tuple(m, k, n);
    auto it = programs.find(key);
    if (it == programs.end())
      it = programs.emplace(key, build_matmul_program(backend, m, k, n)).first;
    MatmulRun run = run_matmul(it->second, a, b, *cfg);
    tally.accumulate(run.report);
    return std::move(run.c);
  }

  // Per-position quantization: one scale per row. Charges 3*len + 1 ops
  // (amax scan, scale multiply, round; plus the scale divide).
  float quantize_row(const float* src, size_t len, int8_t* dst) {
    float amax = 0.0f;
    for (size_t i = 0; i < len; ++i) amax = std::max(amax, std::fabs(src[i]));
    ops(3 * len + 1);
    if (amax == 0.0f) {
      std::memset(dst, 0, len);
      return 1.0f;
    }
    const float r = 127.0f / amax;
    for (size_t i = 0; i < len; ++i) {
      float q = std::round(src[i] * r);
      q = std::min(127.0f, std::max(-127.0f, q));
      dst[i] = static_cast<int8_t>(q);
    }
    return amax / 127.0f;
  }

  // y[T x out] = dequant(int8_matmul(rows(x), w)) + bias. Charges 1 op per
  // row (scale product) and 2 per element (scale multiply, bias add), 1 per
  // element without bias.
  void dense(const float* x, size_t rows, size_t in, const QuantTensor& w,
             const float* bias, size_t out, float* y) {
    std::vector<int8_t> a(rows * in);
    std::vector<float> row_scale(rows);
    for (size_t t = 0; t < rows; ++t)
      row_scale[t] = quantize_row(x + t * in, in, a.data() + t * in);
    std::vector<int32_t> c = matmul(a, w.data, rows, in, out);
    for (size_t t = 0; t < rows; ++t) {
      const float f = row_scale[t] * w.scale;
      ops(1 + (bias ? 2 : 1) * out);
      for (size_t j = 0; j < out; ++j) {
        float v = float(c[t * out + j]) * f;
        y[t * out + j] = bias ? v + bias[j] : v;
      }
    }
  }
};

// In-place layernorm over each row; statistics in double, output in f32.
// Charges 7n + 3 ops per row (mean n, center+square 2n, var/sqrt 3,
// normalize and affine 4n).
inline void layernorm_rows(CoSim* cs, float* x, size_t rows, size_t n,
                           const float* g, const float* b,
                           std::vector<LnStats>* probe) {
  constexpr double kEps = 1e-5;
  for (size_t t = 0; t < rows; ++t) {
    float* row = x + t * n;
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += row[i];
    mean /= double(n);
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double d = row[i] - mean;
      var += d * d;
    }
    var /= double(n);
    const double inv = 1.0 / std::sqrt(var + kEps);
    if (probe) {
      double pm = 0.0, pv = 0.0;
      for (size_t i = 0; i < n; ++i) {
        const double z = (row[i] - mean) * inv;
        pm += z;
        pv += z * z;
      }
      probe->push_back(LnStats{pm / double(n), pv / double(n)});
    }
    for (size_t i = 0; i < n; ++i) {
      const float z = float((row[i] - mean) * inv);
      row[i] = z * g[i] + b[i];
    }
    if (cs) cs->ops(7 * n + 3);
  }
}

// Row softmax with max subtraction. Charges 5 ops per element.
inline void softmax_row(CoSim* cs, float* row, size_t n, std::vector<double>* sums) {
  float mx = row[0];
  for (size_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
  float sum = 0.0f;
  for (size_t i = 0; i < n; ++i) {
    row[i] = std::exp(row[i] - mx);
    sum += row[i];
  }
  for (size_t i = 0; i < n; ++i) row[i] /= sum;
  if (sums) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += row[i];
    sums->push_back(s);
  }
  if (cs) cs->ops(5 * n);
}

// tanh-form GELU. Charged as 8 ops per element.
inline float gelu(float x) {
  constexpr float kC = 0.7978845608028654f;  // sqrt(2/pi)
  return 0.5f * x * (1.0f + std::tanh(kC * (x + 0.044715f * x * x * x)));
}

// Multi-head causal attention over already-normalized input rows.
// q, k, v are the projected T x n_embd matrices (bias already added).
// Output is the concatenated head outputs, T x n_embd.
inline std::vector<float> attention_heads(CoSim& cs, const std::vector<float>& q,
                                          const std::vector<float>& k,
                                          const std::vector<float>& v, size_t T,
                                          const ModelConfig& cfg,
                                          std::vector<double>* softmax_sums) {
  const size_t n = cfg.n_embd;
  const size_t d = cfg.d_k();
  const float inv_sqrt_d = 1.0f / std::sqrt(float(d));
  std::vector<float> out(T * n);

  std::vector<int8_t> qq(T * d), kq(T * d);
  std::vector<float> sq(T), sk(T);
  std::vector<float> s(T * T);
  std::vector<int8_t> pq(T * T);
  std::vector<float> sp(T);
  std::vector<float> head_row(d);
  std::vector<float> vprefix(T * d);
  std::vector<int8_t> vq(T * d);

  for (size_t h = 0; h < cfg.n_head; ++h) {
    const size_t col0 = h * d;
    // Per-position quantization of this head's query and key rows.
    std::vector<float> tmp(d);
    for (size_t t = 0; t < T; ++t) {
      std::memcpy(tmp.data(), &q[t * n + col0], d * sizeof(float));
      sq[t] = cs.quantize_row(tmp.data(), d, qq.data() + t * d);
      std::memcpy(tmp.data(), &k[t * n + col0], d * sizeof(float));
      sk[t] = cs.quantize_row(tmp.data(), d, kq.data() + t * d);
    }
    // S = Q K^T; the key buffer read column-major is exactly K^T.
    std::vector<int32_t> s_int = cs.matmul(qq, kq, T, d, T);
    // Dequantize, scale by 1/sqrt(d_k), apply the causal mask.
    // Charges: 1 per row factor, 2 per element, 1 compare per element.
    for (size_t i = 0; i < T; ++i) {
      const float fi = sq[i] * inv_sqrt_d;
      cs.ops(1 + 3 * T);
      for (size_t j = 0; j < T; ++j) {
        s[i * T + j] = j <= i ? float(s_int[i * T + j]) * fi * sk[j]
                              : -std::numeric_limits<float>::infinity();
      }
      softmax_row(&cs, &s[i * T], T, softmax_sums);
      sp[i] = cs.quantize_row(&s[i * T], T, pq.data() + i * T);
    }
    // Output rows one query at a time; the value tensor seen by query i is
    // quantized over positions 0..i only (column-major (i+1) x d buffer).
    for (size_t i = 0; i < T; ++i) {
      const size_t rows = i + 1;
      float amax = 0.0f;
      for (size_t j = 0; j < rows; ++j)
        for (size_t c = 0; c < d; ++c)
          amax = std::max(amax, std::fabs(v[j * n + col0 + c]));
      cs.ops(3 * rows * d + 1);
      float sv = 1.0f;
      if (amax > 0.0f) {
        sv = amax / 127.0f;
        const float r = 127.0f / amax;
        for (size_t j = 0; j < rows; ++j)
          for (size_t c = 0; c < d; ++c) {
            float qv = std::round(v[j * n + col0 + c] * r);
            qv = std::min(127.0f, std::max(-127.0f, qv));
            vq[c * rows + j] = static_cast<int8_t>(qv);
          }
      } else {
        std::memset(vq.data(), 0, rows * d);
      }
      std::vector<int32_t> o_int =
          cs.matmul(std::span<const int8_t>(pq.data() + i * T, rows),
                    std::span<const int8_t>(vq.data(), rows * d), 1, rows, d);
      const float f = sp[i] * sv;
      cs.ops(1 + 2 * d);
      for (size_t c = 0; c < d; ++c) out[i * n + col0 + c] = float(o_int[c]) * f;
    }
  }
  return out;
}

}  // namespace detail

// Public single-call attention entry point (used by tests): projected q/k/v
// matrices in, concatenated head outputs and the cycle tally out.
struct AttentionResult {
  std::vector<float> output;  // T x n_embd
  CycleReport report;
};

inline AttentionResult attention(std::span<const float> q, std::span<const float> k,
                                 std::span<const float> v, size_t seq_len,
                                 const ModelConfig& cfg, Backend backend,
                                 const CostConfig& costs,
                                 std::vector<double>* softmax_sums = nullptr) {
  cfg.validate();
  if (seq_len < 1 || seq_len > cfg.n_ctx)
    throw std::invalid_argument("attention: sequence length out of range");
  const size_t want = seq_len * cfg.n_embd;
  if (q.size() != want || k.size() != want || v.size() != want)
    throw std::invalid_argument("attention: shape mismatch");
  detail::CoSim cs{backend, &costs, {}, {}};
  AttentionResult res;
  res.output = detail::attention_heads(
      cs, std::vector<float>(q.begin(), q.end()), std::vector<float>(k.begin(), k.end()),
      std::vector<float>(v.begin(), v.end()), seq_len, cfg, softmax_sums);
  cs.tally.finalize(costs);
  res.report = cs.tally;
  return res;
}

inline ForwardTrace forward(const Model& model, std::span<const uint32_t> tokens,
                            Backend backend, const CostConfig& costs,
                            const ForwardOptions& opts = {}) {
  const ModelConfig& cfg = model.config;
  const size_t T = tokens.size();
  if (T < 1 || T > cfg.n_ctx)
    throw std::invalid_argument("forward: token count out of range");
  for (uint32_t t : tokens)
    if (t >= cfg.n_vocab) throw std::invalid_argument("forward: token id out of range");

  const size_t n = cfg.n_embd;
  detail::CoSim cs{backend, &costs, {}, {}};

  // Embedding lookup plus learned position embedding. Charges 2n per token
  // (dequantize multiply, position add).
  std::vector<float> h(T * n);
  for (size_t t = 0; t < T; ++t) {
    const int8_t* row = &model.tok_emb.data[size_t(tokens[t]) * n];
    const float* pos = &model.pos_emb[t * n];
    for (size_t i = 0; i < n; ++i)
      h[t * n + i] = model.tok_emb.scale * float(row[i]) + pos[i];
    cs.ops(2 * n);
  }

  std::vector<float> x(T * n), qm(T * n), km(T * n), vm(T * n);
  std::vector<float> u(T * 4 * n), ffn(T * n);
  for (const LayerWeights& lw : model.layers) {
    x = h;
    detail::layernorm_rows(&cs, x.data(), T, n, lw.ln1_g.data(), lw.ln1_b.data(),
                           opts.hooks.ln_stats);
    cs.dense(x.data(), T, n, lw.wq, lw.bq.data(), n, qm.data());
    cs.dense(x.data(), T, n, lw.wk, lw.bk.data(), n, km.data());
    cs.dense(x.data(), T, n, lw.wv, lw.bv.data(), n, vm.data());
    std::vector<float> heads =
        detail::attention_heads(cs, qm, km, vm, T, cfg, opts.hooks.softmax_row_sums);
    std::vector<float> attn_out(T * n);
    cs.dense(heads.data(), T, n, lw.wo, lw.bo.data(), n, attn_out.data());
    for (size_t i = 0; i < T * n; ++i) h[i] += attn_out[i];  // residual
    cs.ops(T * n);

    x = h;
    detail::layernorm_rows(&cs, x.data(), T, n, lw.ln2_g.data(), lw.ln2_b.data(),
                           opts.hooks.ln_stats);
    cs.dense(x.data(), T, n, lw.w_fc, lw.b_fc.data(), 4 * n, u.data());
    for (size_t i = 0; i < T * 4 * n; ++i) u[i] = detail::gelu(u[i]);
    cs.ops(8 * T * 4 * n);
    cs.dense(u.data(), T, 4 * n, lw.w_proj, lw.b_proj.data(), n, ffn.data());
    for (size_t i = 0; i < T * n; ++i) h[i] += ffn[i];  // residual
    cs.ops(T * n);
  }

  detail::layernorm_rows(&cs, h.data(), T, n, model.lnf_g.data(), model.lnf_b.data(),
                         opts.hooks.ln_stats);

  // Tied output head: logits = h_t . tok_emb^T (the row-major embedding is
  // the head matrix in column-major form).
  ForwardTrace trace;
  auto logits_for = [&](size_t t, float* out) {
    std::vector<int8_t> a(n);
    const float s = cs.quantize_row(&h[t * n], n, a.data());
    std::vector<int32_t> c = cs.matmul(a, model.tok_emb.data, 1, n, cfg.n_vocab);
    const float f = s * model.tok_emb.scale;
    cs.ops(1 + cfg.n_vocab);
    for (size_t j = 0; j < cfg.n_vocab; ++j) out[j] = float(c[j]) * f;
  };
  trace.logits.resize(cfg.n_vocab);
  if (opts.all_positions) {
    trace.all_logits.resize(T * cfg.n_vocab);
    for (size_t t = 0; t < T; ++t) logits_for(t, &trace.all_logits[t * cfg.n_vocab]);
    std::memcpy(trace.logits.data(), &trace.all_logits[(T - 1) * cfg.n_vocab],
                cfg.n_vocab * sizeof(float));
  } else {
    logits_for(T - 1, trace.logits.data());
  }

  cs.tally.finalize(costs);
  trace.report = cs.tally;
  return trace;
}

// All-float reference forward (no simulator, no activation quantization);
// weights enter dequantized. Used to bound the int8 path's quantization
// error.
inline std::vector<float> forward_float(const Model& model,
                                        std::span<const uint32_t> tokens) {
  const ModelConfig& cfg = model.config;
  const size_t T = tokens.size();
  if (T < 1 || T > cfg.n_ctx)
    throw std::invalid_argument("forward_float: token count out of range");
  const size_t n = cfg.n_embd;
  const size_t d = cfg.d_k();

  auto matmul_f = [](const std::vector<float>& a, const std::vector<float>& w,
                     size_t rows, size_t in, size_t out) {
    // w column-major in x out, matching the quantized layout.
    std::vector<float> y(rows * out, 0.0f);
    for (size_t t = 0; t < rows; ++t)
      for (size_t j = 0; j < out; ++j) {
        float acc = 0.0f;
        for (size_t i2 = 0; i2 < in; ++i2) acc += a[t * in + i2] * w[j * in + i2];
        y[t * out + j] = acc;
      }
    return y;
  };
  auto dense_f = [&](const std::vector<float>& a, const QuantTensor& w,
                     const std::vector<float>& bias, size_t rows, size_t in, size_t out) {
    std::vector<float> wf = dequantize(w);
    std::vector<float> y = matmul_f(a, wf, rows, in, out);
    for (size_t t = 0; t < rows; ++t)
      for (size_t j = 0; j < out; ++j) y[t * out + j] += bias[j];
    return y;
  };

  std::vector<float> h(T * n);
  for (size_t t = 0; t < T; ++t)
    for (size_t i = 0; i < n; ++i)
      h[t * n + i] = model.tok_emb.scale * float(model.tok_emb.data[tokens[t] * n + i]) +
                     model.pos_emb[t * n + i];

  const float inv_sqrt_d = 1.0f / std::sqrt(float(d));
  for (const LayerWeights& lw : model.layers) {
    std::vector<float> x = h;
    detail::layernorm_rows(nullptr, x.data(), T, n, lw.ln1_g.data(), lw.ln1_b.data(),
                           nullptr);
    std::vector<float> q = dense_f(x, lw.wq, lw.bq, T, n, n);
    std::vector<float> k = dense_f(x, lw.wk, lw.bk, T, n, n);
    std::vector<float> v = dense_f(x, lw.wv, lw.bv, T, n, n);
    std::vector<float> heads(T * n);
    for (size_t hd = 0; hd < cfg.n_head; ++hd) {
      const size_t col0 = hd * d;
      std::vector<float> s(T * T);
      for (size_t i = 0; i < T; ++i) {
        for (size_t j = 0; j < T; ++j) {
          if (j > i) {
            s[i * T + j] = -std::numeric_limits<float>::infinity();
            continue;
          }
          float acc = 0.0f;
          for (size_t c = 0; c < d; ++c)
            acc += q[i * n + col0 + c] * k[j * n + col0 + c];
          s[i * T + j] = acc * inv_sqrt_d;
        }
        detail::softmax_row(nullptr, &s[i * T], T, nullptr);
        for (size_t c = 0; c < d; ++c) {
          float acc = 0.0f;
          for (size_t j = 0; j <= i; ++j) acc += s[i * T + j] * v[j * n + col0 + c];
          heads[i * n + col0 + c] = acc;
        }
      }
    }
    std::vector<float> attn_out = dense_f(heads, lw.wo, lw.bo, T, n, n);
    for (size_t i = 0; i < T * n; ++i) h[i] += attn_out[i];

    x = h;
    detail::layernorm_rows(nullptr, x.data(), T, n, lw.ln2_g.data(), lw.ln2_b.data(),
                           nullptr);
    std::vector<float> uf = dense_f(x, lw.w_fc, lw.b_fc, T, n, 4 * n);
    for (float& e : uf) e = detail::gelu(e);
    std::vector<float> ff = dense_f(uf, lw.w_proj, lw.b_proj, T, 4 * n, n);
    for (size_t i = 0; i < T * n; ++i) h[i] += ff[i];
  }
  detail::layernorm_rows(nullptr, h.data(), T, n, model.lnf_g.data(), model.lnf_b.data(),
                         nullptr);

  std::vector<float> logits(cfg.n_vocab, 0.0f);
  const size_t t = T - 1;
  for (size_t j = 0; j < cfg.n_vocab; ++j) {
    float acc = 0.0f;
    for (size_t i = 0; i < n; ++i)
      acc += h[t * n + i] * model.tok_emb.scale * float(model.tok_emb.data[j * n + i]);
    logits[j] = acc;
  }
  return logits;
}

struct GenerateResult {
  std::vector<uint32_t> tokens;  // prompt followed by generated ids
  CycleReport aggregate;
  std::vector<CycleReport> per_step;
};

// Greedy argmax decoding, ties broken toward the lower token id; re-runs the
// full forward pass each step (no KV cache).
inline GenerateResult generate(const Model& model, std::span<const uint32_t> prompt,
                               size_t n_new, Backend backend, const CostConfig& costs) {
  if (prompt.empty()) throw std::invalid_argument("generate: empty prompt");
  if (prompt.size() + n_new > model.config.n_ctx)
    throw std::invalid_argument("generate: context overflow");
  GenerateResult res;
  res.tokens.assign(prompt.begin(), prompt.end());
  for (size_t step = 0; step < n_new; ++step) {
    ForwardTrace trace = forward(model, res.tokens, backend, costs);
    uint32_t best = 0;
    for (uint32_t j = 1; j < model.config.n_vocab; ++j)
      if (trace.logits[j] > trace.logits[best]) best = j;
    res.tokens.push_back(best);
    res.aggregate.accumulate(trace.report);
    res.per_step.push_back(std::move(trace.report));
  }
  res.aggregate.finalize(costs);
  return res;
}

}  // namespace vdotsim
