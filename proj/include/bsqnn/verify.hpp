#pragma once
// End-to-end oracle-equivalence suites, shared by `bench verify` and tests.

#include <random>
#include <sstream>
#include <string>

#include "bsqnn/gemm.hpp"
#include "bsqnn/lowering.hpp"
#include "bsqnn/streamline.hpp"

namespace bsqnn {

struct VerifyResult {
  std::string name;
  int passed = 0;
  int failed = 0;
  std::string first_failure;

  bool ok() const { return failed == 0; }
  void fail(const std::string& msg) {
    if (failed == 0) first_failure = msg;
    failed++;
  }
};

namespace verify_detail {

inline IntMatrix random_matrix(std::mt19937& rng, std::size_t rows, std::size_t cols,
                               int bits, bool is_signed) {
  const int32_t lo = is_signed ? -(1 << (bits - 1)) : 0;
  const int32_t hi = is_signed ? (1 << (bits - 1)) - 1 : (1 << bits) - 1;
  std::uniform_int_distribution<int32_t> dist(lo, hi);
  IntMatrix m(rows, cols);
  for (auto& v : m.data) v = dist(rng);
  return m;
}

inline std::string dump(const IntMatrix& m, std::size_t limit = 16) {
  std::ostringstream os;
  os << m.rows << "x" << m.cols << " [";
  for (std::size_t i = 0; i < std::min(limit, m.data.size()); i++)
    os << (i ? "," : "") << m.data[i];
  if (m.data.size() > limit) os << ",...";
  os << "]";
  return os.str();
}

}  // namespace verify_detail

template <typename Word>
VerifyResult verify_pack_roundtrip(int cases = 500, uint32_t seed = 42) {
  VerifyResult r{"pack-roundtrip"};
  std::mt19937 rng(seed);
  std::uniform_int_distribution<std::size_t> dim(1, 40);
  std::uniform_int_distribution<int> bitsd(1, 4);
  for (int i = 0; i < cases; i++) {
    const int bits = bitsd(rng);
    const bool sgn = rng() & 1;
    IntMatrix m = verify_detail::random_matrix(rng, dim(rng), dim(rng), bits, sgn);
    auto p = pack<Word>(m, bits, sgn);
    bool ok = unpack(p) == m;
    for (const auto& plane : p.planes) ok = ok && plane.padding_popcount() == 0;
    if (ok)
      r.passed++;
    else
      r.fail("roundtrip mismatch, bits=" + std::to_string(bits) +
             " signed=" + std::to_string(sgn) + " m=" + verify_detail::dump(m));
  }
  return r;
}

template <typename Word>
VerifyResult verify_gemm_oracle(int cases = 300, uint32_t seed = 42) {
  VerifyResult r{"gemm-oracle"};
  std::mt19937 rng(seed);
  std::uniform_int_distribution<std::size_t> mn(1, 32), k(1, 128);
  std::uniform_int_distribution<int> bitsd(1, 4);
  for (int i = 0; i < cases; i++) {
    const int w = bitsd(rng), a = bitsd(rng);
    const bool ws = rng() & 1, as = rng() & 1;
    IntMatrix wm = verify_detail::random_matrix(rng, mn(rng), k(rng), w, ws);
    IntMatrix am = verify_detail::random_matrix(rng, mn(rng), wm.cols, a, as);
    IntMatrix res(wm.rows, am.rows);
    bit_serial_gemm(pack<Word>(wm, w, ws), pack<Word>(am, a, as), res);
    if (res == reference_gemm(wm, transpose(am)))
      r.passed++;
    else
      r.fail("bit_serial_gemm mismatch, (w,a)=(" + std::to_string(w) + "," +
             std::to_string(a) + ") signed=(" + std::to_string(ws) + "," +
             std::to_string(as) + ") W=" + verify_detail::dump(wm) +
             " A=" + verify_detail::dump(am));
  }
  return r;
}

template <typename Word>
VerifyResult verify_xnor_duality(int cases = 200, uint32_t seed = 42) {
  VerifyResult r{"xnor-duality"};
  std::mt19937 rng(seed);
  std::uniform_int_distribution<std::size_t> depthd(1, 300);
  std::uniform_int_distribution<int> bit(0, 1);
  for (int i = 0; i < cases; i++) {
    const std::size_t depth = depthd(rng);
    BitMatrix<Word> x(1, depth), y(1, depth);
    int32_t px = 0, py = 0;
    for (std::size_t d = 0; d < depth; d++) {
      if (bit(rng)) {
        x.set(0, d);
        px++;
      }
      if (bit(rng)) {
        y.set(0, d);
        py++;
      }
    }
    IntMatrix xr(1, 1), ar(1, 1);
    binary_gemm_xnor(x, y, xr, 1);
    binary_gemm_and(x, y, ar, 1);
    if (xr.at(0, 0) == 4 * ar.at(0, 0) - 2 * px - 2 * py + int32_t(depth))
      r.passed++;
    else
      r.fail("xnor/and duality violated at depth " + std::to_string(depth));
  }
  return r;
}

template <typename Word>
VerifyResult verify_lowering(uint32_t seed = 42) {
  VerifyResult r{"interleaved-lowering"};
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int32_t> act(0, 3);
  for (std::size_t k : {1u, 3u, 5u, 7u, 11u}) {
    for (std::size_t s : {1u, 2u, 4u}) {
      for (std::size_t p : {0u, 1u, 2u, 3u}) {
        for (std::size_t c : {1u, 8u, 64u, 100u}) {
          // smallest H with integral output and at least 2 output pixels
          std::size_t h = 0;
          for (std::size_t oh = 2;; oh++) {
            const std::ptrdiff_t cand =
                std::ptrdiff_t((oh - 1) * s + k) - 2 * std::ptrdiff_t(p);
            if (cand >= 1) {
              h = std::size_t(cand);
              break;
            }
          }
          ConvGeometry g{h, h, c, k, k, s, p, 1};
          Tensor t(h, h, c);
          for (auto& v : t.data) v = act(rng);
          auto planes = im2col_interleaved(pack_interleaved<Word>(t, 2), g);
          IntMatrix padded = pad_columns_per_pixel(im2col_bytes(t, g), c,
                                                   BitMatrix<Word>::word_bits);
          auto packed = pack<Word>(padded, 2, false);
          bool ok = planes.size() == packed.planes.size();
          for (std::size_t b = 0; ok && b < planes.size(); b++)
            ok = planes[b] == packed.planes[b];
          if (ok)
            r.passed++;
          else
            r.fail("interleaved lowering mismatch, k=" + std::to_string(k) +
                   " s=" + std::to_string(s) + " p=" + std::to_string(p) +
                   " C=" + std::to_string(c));
        }
      }
    }
  }
  return r;
}

inline VerifyResult verify_streamline(int cases = 100, uint32_t seed = 42) {
  VerifyResult r{"streamline"};
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.2, 2.0);
  std::uniform_int_distribution<int> abitsd(1, 3);
  std::uniform_int_distribution<std::size_t> dimd(2, 8);
  for (int i = 0; i < cases; i++) {
    const int abits = abitsd(rng);
    const std::size_t in_dim = dimd(rng), out_dim = dimd(rng);
    LayerSeq seq;
    seq.ops.emplace_back(MatMulOp{verify_detail::random_matrix(rng, out_dim, in_dim, 2, true)});
    LinearTransform alpha;
    alpha.scale.resize(out_dim);
    for (auto& sc : alpha.scale) sc = u(rng);
    seq.ops.emplace_back(alpha);
    std::vector<double> mu(out_dim), sigma(out_dim), gamma(out_dim), beta(out_dim);
    for (std::size_t c = 0; c < out_dim; c++) {
      mu[c] = u(rng) - 1.0;
      sigma[c] = u(rng);
      gamma[c] = u(rng);
      beta[c] = u(rng) - 1.0;
    }
    seq.ops.emplace_back(batchnorm_to_affine(mu, sigma, gamma, beta));
    Quantizer q;
    const int n = (1 << abits) - 1;
    const double step = u(rng);
    for (int kk = 0; kk <= n; kk++) q.levels.push_back(step * kk);
    double t = u(rng) - 1.0;
    for (int kk = 0; kk < n; kk++) {
      q.thresholds.push_back(t);
      t += u(rng);
    }
    seq.ops.emplace_back(q);

    StreamlineResult sr = streamline_graph(seq);
    bool ok = all_parameters_integer(sr.seq);
    std::uniform_int_distribution<int> xi(0, 3);
    for (int rep = 0; ok && rep < 50; rep++) {
      std::vector<double> x(in_dim);
      for (auto& v : x) v = xi(rng);
      auto want = eval_seq(seq, x);
      auto got = eval_seq(sr.seq, x);
      for (std::size_t c = 0; c < want.size(); c++) {
        const double mapped = sr.output_affine.apply(got[c], c);
        if (std::abs(want[c] - mapped) > 1e-9 * std::max(1.0, std::abs(want[c]))) ok = false;
      }
    }
    if (ok)
      r.passed++;
    else
      r.fail("streamlined pipeline diverges from float reference, case " + std::to_string(i));
  }
  return r;
}

template <typename Word>
std::vector<VerifyResult> run_all_verifications(uint32_t seed = 42) {
  return {verify_pack_roundtrip<Word>(500, seed), verify_gemm_oracle<Word>(300, seed),
          verify_xnor_duality<Word>(200, seed), verify_lowering<Word>(seed),
          verify_streamline(100, seed)};
}

}  // namespace bsqnn
