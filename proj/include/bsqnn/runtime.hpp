#pragma once
// Layer-graph executor with per-layer engine selection (bit-serial vs 8-bit
// reference) and per-layer timing breakdown.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "bsqnn/bitplane.hpp"
#include "bsqnn/gemm.hpp"
#include "bsqnn/lowering.hpp"
#include "bsqnn/streamline.hpp"

namespace bsqnn {

enum class Engine { BitSerial, Byte };

// The three benchmark configurations: all-byte, bit-serial with byte-form
// im2col, bit-serial with interleaved lowering.
enum class NetConfig { Baseline, BsGemm, BsGemmIntl };

inline const char* to_string(NetConfig c) {
  switch (c) {
    case NetConfig::Baseline: return "baseline";
    case NetConfig::BsGemm: return "bsgemm";
    case NetConfig::BsGemmIntl: return "bsgemm-intl";
  }
  return "?";
}

template <typename Word>
struct ConvLayer {
  std::string name;
  ConvGeometry geom;           // in_c/out_channels are per the full layer
  IntMatrix weights;           // M x (k_h*k_w*C/groups), true integer values
  int wbits = 1;
  bool wsigned = false;
  bool bipolar = false;        // weights in {-1,+1}, stored as signed 1-bit planes
  int abits = 1;
  Engine engine = Engine::BitSerial;
  // packed once at load
  std::vector<BitPlaneMatrix<Word>> packed_dense;   // per group
  std::vector<BitPlaneMatrix<Word>> packed_padded;  // per group, pixel-padded layout
};

template <typename Word>
struct FCLayer {
  std::string name;
  IntMatrix weights;  // M x K, true integer values
  int wbits = 1;
  bool wsigned = false;
  bool bipolar = false;
  int abits = 1;
  Engine engine = Engine::BitSerial;
  BitPlaneMatrix<Word> packed;
};

struct ThresholdLayer {
  std::string name;
  ThresholdSet ts;  // finalized, integer
};

struct MaxPoolLayer {
  std::string name;
  std::size_t window = 2;
  std::size_t stride = 2;
};

// Integer-parameter affine; float affines must be streamlined away first.
struct LinearLayer {
  std::string name;
  LinearTransform lt;
};

template <typename Word>
using Layer = std::variant<ConvLayer<Word>, FCLayer<Word>, ThresholdLayer, MaxPoolLayer,
                           LinearLayer>;

struct LayerReport {
  std::string name;
  std::string kind;
  std::size_t rows = 0, depth = 0, cols = 0;
  double t_lower_ns = 0, t_pack_ns = 0, t_matmul_ns = 0, t_other_ns = 0;
  double gops = 0;  // (2*rows*depth*cols) / t_matmul_ns, matmul time only
};

struct ExecutionReport {
  std::vector<LayerReport> layers;
  double total_ns = 0;

  void write_csv(std::ostream& os) const {
    os << "layer,kind,rows,depth,cols,t_lower_ns,t_pack_ns,t_matmul_ns,t_other_ns,gops\n";
    for (const auto& l : layers)
      os << l.name << ',' << l.kind << ',' << l.rows << ',' << l.depth << ',' << l.cols
         << ',' << l.t_lower_ns << ',' << l.t_pack_ns << ',' << l.t_matmul_ns << ','
         << l.t_other_ns << ',' << l.gops << '\n';
  }
};

struct RunOptions {
  NetConfig config = NetConfig::BsGemm;
  int repeats = 10;  // per-layer timings are medians over this many runs
  unsigned threads = 1;
};

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline Tensor maxpool(const Tensor& t, std::size_t window, std::size_t stride) {
  if (window == 0 || stride == 0 || t.h < window || t.w < window ||
      (t.h - window) % stride != 0 || (t.w - window) % stride != 0)
    throw std::invalid_argument("maxpool: window/stride do not divide geometry");
  const std::size_t oh = (t.h - window) / stride + 1;
  const std::size_t ow = (t.w - window) / stride + 1;
  Tensor out(oh, ow, t.c);
  for (std::size_t oy = 0; oy < oh; oy++)
    for (std::size_t ox = 0; ox < ow; ox++)
      for (std::size_t ch = 0; ch < t.c; ch++) {
        int32_t m = t.at(oy * stride, ox * stride, ch);
        for (std::size_t ky = 0; ky < window; ky++)
          for (std::size_t kx = 0; kx < window; kx++)
            m = std::max(m, t.at(oy * stride + ky, ox * stride + kx, ch));
        out.at(oy, ox, ch) = m;
      }
  return out;
}

inline Tensor apply_thresholds(const Tensor& t, const ThresholdSet& ts) {
  if (!ts.finalized) throw std::invalid_argument("apply_thresholds: thresholds not finalized");
  if (ts.channels() != 1 && ts.channels() != t.c)
    throw std::invalid_argument("apply_thresholds: channel mismatch (" +
                                std::to_string(ts.channels()) + " vs " + std::to_string(t.c) +
                                ")");
  Tensor out(t.h, t.w, t.c);
  for (std::size_t y = 0; y < t.h; y++)
    for (std::size_t x = 0; x < t.w; x++)
      for (std::size_t ch = 0; ch < t.c; ch++)
        out.at(y, x, ch) = ts.apply(double(t.at(y, x, ch)), ch);
  return out;
}

// Per-patch activation sums for the bipolar-weight identity
// W_bipolar * x = 2*(W_stored * x) + colsum(x), with stored planes in {0,-1}.
// A holds one activation column of the math per row (lowered layout).
inline std::vector<int32_t> bipolar_colsum_correction(const IntMatrix& A) {
  std::vector<int32_t> sums(A.rows, 0);
  for (std::size_t r = 0; r < A.rows; r++)
    for (std::size_t c = 0; c < A.cols; c++) sums[r] += A.at(r, c);
  return sums;
}

// Same sums computed from packed unsigned activation planes.
template <typename Word>
std::vector<int32_t> bipolar_colsum_correction(const BitPlaneMatrix<Word>& A) {
  std::vector<int32_t> sums(A.rows(), 0);
  for (int b = 0; b < A.bits; b++)
    for (std::size_t r = 0; r < A.rows(); r++) {
      int32_t pc = 0;
      const Word* row = A.planes[b].row_ptr(r);
      for (std::size_t w = 0; w < A.planes[b].words_per_row; w++)
        pc += std::popcount(static_cast<Word>(row[w]));
      sums[r] += pc << b;
    }
  return sums;
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

template <typename Word = uint64_t>
struct Network {
  std::vector<Layer<Word>> layers;
  // residual output-scale affine from streamlining; argmax-invariant, not
  // applied during execution
  LinearTransform output_affine;

  // Pack all bit-serial weights once; both lowering layouts for conv layers.
  void prepare() {
    for (auto& layer : layers) {
      if (ConvLayer<Word>* cl = std::get_if<ConvLayer<Word>>(&layer)) {
        validate_quant(cl->name, cl->wbits, cl->abits, cl->engine);
        const std::size_t groups = cl->geom.groups;
        const std::size_t cg = cl->geom.in_c / groups;
        const std::size_t mg = cl->geom.out_channels / groups;
        if (cl->weights.rows != cl->geom.out_channels ||
            cl->weights.cols != cl->geom.k_h * cl->geom.k_w * cg)
          throw std::invalid_argument(cl->name + ": weight shape mismatch");
        cl->packed_dense.clear();
        cl->packed_padded.clear();
        for (std::size_t g = 0; g < groups; g++) {
          IntMatrix wg(mg, cl->weights.cols);
          for (std::size_t r = 0; r < mg; r++)
            for (std::size_t c = 0; c < wg.cols; c++)
              wg.at(r, c) = cl->weights.at(g * mg + r, c);
          IntMatrix stored = cl->bipolar ? to_stored_bipolar(wg) : wg;
          const int bits = cl->bipolar ? 1 : cl->wbits;
          const bool sgn = cl->bipolar ? true : cl->wsigned;
          cl->packed_dense.push_back(pack<Word>(stored, bits, sgn));
          IntMatrix padded =
              pad_columns_per_pixel(stored, cg, BitMatrix<Word>::word_bits);
          cl->packed_padded.push_back(pack<Word>(padded, bits, sgn));
        }
      } else if (FCLayer<Word>* fl = std::get_if<FCLayer<Word>>(&layer)) {
        validate_quant(fl->name, fl->wbits, fl->abits, fl->engine);
        IntMatrix stored = fl->bipolar ? to_stored_bipolar(fl->weights) : fl->weights;
        const int bits = fl->bipolar ? 1 : fl->wbits;
        const bool sgn = fl->bipolar ? true : fl->wsigned;
        fl->packed = pack<Word>(stored, bits, sgn);
      }
    }
  }

 private:
  static void validate_quant(const std::string& name, int wbits, int abits, Engine e) {
    if (e == Engine::BitSerial && wbits * abits > 64)
      throw std::invalid_argument(name + ": BitSerial engine requires w*a <= 64");
    if (e == Engine::Byte && (wbits > 8 || abits > 8))
      throw std::invalid_argument(name + ": Byte engine requires <= 8-bit operands");
  }

  // bipolar value v in {-1,+1} -> stored plane value (v-1)/2 in {-1,0}
  static IntMatrix to_stored_bipolar(const IntMatrix& w) {
    IntMatrix s(w.rows, w.cols);
    for (std::size_t i = 0; i < w.data.size(); i++) {
      if (w.data[i] != 1 && w.data[i] != -1)
        throw std::invalid_argument("bipolar weights must be -1 or +1");
      s.data[i] = (w.data[i] - 1) / 2;
    }
    return s;
  }
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ns_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::nano>(Clock::now() - t0).count();
}

inline void check_byte_range(const IntMatrix& m, int bits, bool is_signed,
                             const std::string& name) {
  const int32_t lo = is_signed ? -(1 << (bits - 1)) : 0;
  const int32_t hi = is_signed ? (1 << (bits - 1)) - 1 : (1 << bits) - 1;
  for (int32_t v : m.data)
    if (v < lo || v > hi)
      throw std::out_of_range(name + ": operand " + std::to_string(v) +
                              " outside 8-bit engine range");
}

// res (M x P) from true weights and a lowered activation matrix (P x K),
// honoring engine, lowering mode, and the bipolar correction.
template <typename Word>
IntMatrix quant_matmul(const IntMatrix& true_w, const BitPlaneMatrix<Word>& packed_w,
                       const IntMatrix& lowered, int wbits, bool wsigned, bool bipolar,
                       int abits, Engine engine, unsigned threads, LayerReport& rep) {
  Clock::time_point t0;
  if (engine == Engine::Byte) {
    check_byte_range(true_w, bipolar ? 2 : wbits, wsigned || bipolar, "weights");
    check_byte_range(lowered, abits, false, "activations");
    t0 = Clock::now();
    IntMatrix res = reference_gemm_nt(true_w, lowered);
    rep.t_matmul_ns += ns_since(t0);
    return res;
  }
  t0 = Clock::now();
  BitPlaneMatrix<Word> packed_a = pack<Word>(lowered, abits, false);
  rep.t_pack_ns += ns_since(t0);
  t0 = Clock::now();
  IntMatrix res(true_w.rows, lowered.rows);
  bit_serial_gemm_parallel(packed_w, packed_a, res, threads);
  if (bipolar) {
    const std::vector<int32_t> colsum = bipolar_colsum_correction(lowered);
    for (std::size_t r = 0; r < res.rows; r++)
      for (std::size_t c = 0; c < res.cols; c++)
        res.at(r, c) = 2 * res.at(r, c) + colsum[c];
  }
  rep.t_matmul_ns += ns_since(t0);
  return res;
}

// interleaved path: activations already packed and lowered into planes
template <typename Word>
IntMatrix quant_matmul_packed(const BitPlaneMatrix<Word>& packed_w,
                              const BitPlaneMatrix<Word>& packed_a, bool bipolar,
                              unsigned threads, LayerReport& rep) {
  Clock::time_point t0 = Clock::now();
  IntMatrix res(packed_w.rows(), packed_a.rows());
  bit_serial_gemm_parallel(packed_w, packed_a, res, threads);
  if (bipolar) {
    const std::vector<int32_t> colsum = bipolar_colsum_correction(packed_a);
    for (std::size_t r = 0; r < res.rows; r++)
      for (std::size_t c = 0; c < res.cols; c++)
        res.at(r, c) = 2 * res.at(r, c) + colsum[c];
  }
  rep.t_matmul_ns += ns_since(t0);
  return res;
}

template <typename Word>
Tensor run_conv(const ConvLayer<Word>& cl, const Tensor& in, const RunOptions& opts,
                LayerReport& rep) {
  const std::size_t groups = cl.geom.groups;
  const std::size_t cg = cl.geom.in_c / groups;
  const std::size_t mg = cl.geom.out_channels / groups;
  const Engine engine = opts.config == NetConfig::Baseline ? Engine::Byte : cl.engine;
  const bool interleaved =
      opts.config == NetConfig::BsGemmIntl && engine == Engine::BitSerial;
  if (in.c != cl.geom.in_c)
    throw std::invalid_argument(cl.name + ": input has " + std::to_string(in.c) +
                                " channels, expected " + std::to_string(cl.geom.in_c));
  ConvGeometry gg = cl.geom;
  gg.in_h = in.h;
  gg.in_w = in.w;
  gg.in_c = cg;
  gg.out_channels = mg;
  gg.groups = 1;
  const std::size_t oh = gg.out_h(), ow = gg.out_w();
  rep.rows = cl.geom.out_channels;
  rep.depth = gg.patch_cols();
  rep.cols = oh * ow;
  Tensor out(oh, ow, cl.geom.out_channels);

  for (std::size_t g = 0; g < groups; g++) {
    // slice this group's input channels
    Tensor slice(in.h, in.w, cg);
    for (std::size_t y = 0; y < in.h; y++)
      for (std::size_t x = 0; x < in.w; x++)
        for (std::size_t ch = 0; ch < cg; ch++)
          slice.at(y, x, ch) = in.at(y, x, g * cg + ch);

    IntMatrix true_wg(mg, cl.weights.cols);
    for (std::size_t r = 0; r < mg; r++)
      for (std::size_t c = 0; c < cl.weights.cols; c++)
        true_wg.at(r, c) = cl.weights.at(g * mg + r, c);

    IntMatrix res;
    if (interleaved) {
      Clock::time_point t0 = Clock::now();
      InterleavedTensor<Word> it = pack_interleaved<Word>(slice, cl.abits);
      rep.t_pack_ns += ns_since(t0);
      t0 = Clock::now();
      std::vector<BitMatrix<Word>> planes = im2col_interleaved(it, gg);
      rep.t_lower_ns += ns_since(t0);
      BitPlaneMatrix<Word> packed_a;
      packed_a.bits = cl.abits;
      packed_a.is_signed = false;
      packed_a.planes = std::move(planes);
      res = quant_matmul_packed(cl.packed_padded[g], packed_a, cl.bipolar, opts.threads,
                                rep);
    } else {
      Clock::time_point t0 = Clock::now();
      IntMatrix lowered = im2col_bytes(slice, gg);
      rep.t_lower_ns += ns_since(t0);
      res = quant_matmul(true_wg, cl.packed_dense[g], lowered, cl.wbits, cl.wsigned,
                         cl.bipolar, cl.abits, engine, opts.threads, rep);
    }
    Clock::time_point t0 = Clock::now();
    for (std::size_t m = 0; m < mg; m++)
      for (std::size_t p = 0; p < oh * ow; p++)
        out.at(p / ow, p % ow, g * mg + m) = res.at(m, p);
    rep.t_other_ns += ns_since(t0);
  }
  return out;
}

template <typename Word>
Tensor run_fc(const FCLayer<Word>& fl, const Tensor& in, const RunOptions& opts,
              LayerReport& rep) {
  const std::size_t k = in.h * in.w * in.c;
  if (fl.weights.cols != k)
    throw std::invalid_argument(fl.name + ": input size " + std::to_string(k) +
                                " does not match weight depth " +
                                std::to_string(fl.weights.cols));
  IntMatrix x(1, k);
  x.data = in.data;
  rep.rows = fl.weights.rows;
  rep.depth = k;
  rep.cols = 1;
  const Engine engine = opts.config == NetConfig::Baseline ? Engine::Byte : fl.engine;
  IntMatrix res =
      quant_matmul(fl.weights, fl.packed, x, fl.wbits, fl.wsigned, fl.bipolar, fl.abits,
                   engine, opts.threads, rep);
  Tensor out(1, 1, res.rows);
  for (std::size_t m = 0; m < res.rows; m++) out.at(0, 0, m) = res.at(m, 0);
  return out;
}

inline Tensor run_linear(const LinearLayer& ll, const Tensor& in) {
  Tensor out(in.h, in.w, in.c);
  for (std::size_t y = 0; y < in.h; y++)
    for (std::size_t x = 0; x < in.w; x++)
      for (std::size_t c = 0; c < in.c; c++) {
        const double v = ll.lt.apply(double(in.at(y, x, c)), c);
        if (v != std::floor(v))
          throw std::invalid_argument(ll.name +
                                      ": non-integer linear parameters; streamline first");
        out.at(y, x, c) = int32_t(v);
      }
  return out;
}

}  // namespace detail

// FNV-1a over output values; used for determinism and engine cross-checks.
inline uint64_t tensor_hash(const Tensor& t) {
  uint64_t h = 14695981039346656037ull;
  auto mix = [&](uint64_t v) {
    for (int i = 0; i < 8; i++) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  mix(t.h);
  mix(t.w);
  mix(t.c);
  for (int32_t v : t.data) mix(uint64_t(uint32_t(v)));
  return h;
}

template <typename Word>
std::pair<Tensor, ExecutionReport> run_network(const Network<Word>& net, const Tensor& input,
                                               const RunOptions& opts = {}) {
  const int repeats = std::max(1, opts.repeats);
  std::vector<std::vector<LayerReport>> samples(repeats);
  Tensor output;
  for (int rep = 0; rep < repeats; rep++) {
    Tensor cur = input;
    for (std::size_t li = 0; li < net.layers.size(); li++) {
      LayerReport lr;
      const auto t0 = detail::Clock::now();
      std::visit(
          [&](const auto& layer) {
            using T = std::decay_t<decltype(layer)>;
            lr.name = layer.name;
            if constexpr (std::is_same_v<T, ConvLayer<Word>>) {
              lr.kind = "conv";
              cur = detail::run_conv(layer, cur, opts, lr);
            } else if constexpr (std::is_same_v<T, FCLayer<Word>>) {
              lr.kind = "fc";
              cur = detail::run_fc(layer, cur, opts, lr);
            } else if constexpr (std::is_same_v<T, ThresholdLayer>) {
              lr.kind = "threshold";
              cur = apply_thresholds(cur, layer.ts);
            } else if constexpr (std::is_same_v<T, MaxPoolLayer>) {
              lr.kind = "maxpool";
              cur = maxpool(cur, layer.window, layer.stride);
            } else if constexpr (std::is_same_v<T, LinearLayer>) {
              lr.kind = "linear";
              cur = detail::run_linear(layer, cur);
            }
          },
          net.layers[li]);
      const double total = detail::ns_since(t0);
      if (lr.kind == "threshold" || lr.kind == "maxpool" || lr.kind == "linear")
        lr.t_other_ns = total;
      samples[rep].push_back(std::move(lr));
    }
    if (rep == 0) output = cur;
  }

  ExecutionReport report;
  auto median = [&](auto get, std::size_t li) {
    std::vector<double> v(repeats);
    for (int r = 0; r < repeats; r++) v[r] = get(samples[r][li]);
    std::nth_element(v.begin(), v.begin() + repeats / 2, v.end());
    return v[repeats / 2];
  };
  for (std::size_t li = 0; li < samples[0].size(); li++) {
    LayerReport lr = samples[0][li];
    lr.t_lower_ns = median([](const LayerReport& r) { return r.t_lower_ns; }, li);
    lr.t_pack_ns = median([](const LayerReport& r) { return r.t_pack_ns; }, li);
    lr.t_matmul_ns = median([](const LayerReport& r) { return r.t_matmul_ns; }, li);
    lr.t_other_ns = median([](const LayerReport& r) { return r.t_other_ns; }, li);
    if (lr.t_matmul_ns > 0 && lr.rows > 0)
      lr.gops = 2.0 * double(lr.rows) * double(lr.depth) * double(lr.cols) / lr.t_matmul_ns;
    report.total_ns += lr.t_lower_ns + lr.t_pack_ns + lr.t_matmul_ns + lr.t_other_ns;
    report.layers.push_back(std::move(lr));
  }
  return {std::move(output), std::move(report)};
}

}  // namespace bsqnn
