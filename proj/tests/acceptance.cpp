// End-to-end acceptance suite. Each check prints exactly one PASS/FAIL line;
// the process exits nonzero if any check fails.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "bsqnn/gemm.hpp"
#include "bsqnn/lowering.hpp"
#include "bsqnn/runtime.hpp"
#include "bsqnn/streamline.hpp"
#include "bsqnn/verify.hpp"

using namespace bsqnn;

namespace {

int failures = 0;

void report(int idx, bool ok, const std::string& what, const std::string& detail = "") {
  std::cout << "[" << idx << "/7] " << (ok ? "PASS" : "FAIL") << " " << what;
  if (!ok && !detail.empty()) std::cout << " -- " << detail;
  std::cout << std::endl;
  if (!ok) failures++;
}

using Clock = std::chrono::steady_clock;

double time_once(const BitPlaneMatrix<uint64_t>& w, const BitPlaneMatrix<uint64_t>& a) {
  IntMatrix res(w.rows(), a.rows());
  const auto t0 = Clock::now();
  bit_serial_gemm(w, a, res);
  return std::chrono::duration<double, std::nano>(Clock::now() - t0).count();
}

double median_time(const BitPlaneMatrix<uint64_t>& w, const BitPlaneMatrix<uint64_t>& a,
                   int reps = 5) {
  std::vector<double> t;
  for (int i = 0; i < reps; i++) t.push_back(time_once(w, a));
  std::nth_element(t.begin(), t.begin() + t.size() / 2, t.end());
  return t[t.size() / 2];
}

// 1. exact agreement of the bit-serial kernel with the naive integer oracle
void check_gemm_oracle() {
  std::mt19937 rng(1001);
  std::uniform_int_distribution<std::size_t> mn(1, 64), kd(1, 256);
  std::string detail;
  int done = 0;
  for (int w = 1; w <= 4 && detail.empty(); w++)
    for (int a = 1; a <= 4 && detail.empty(); a++)
      for (int ws = 0; ws < 2 && detail.empty(); ws++)
        for (int as = 0; as < 2 && detail.empty(); as++)
          for (int i = 0; i < 16 && detail.empty(); i++) {
            IntMatrix wm = verify_detail::random_matrix(rng, mn(rng), kd(rng), w, ws);
            IntMatrix am = verify_detail::random_matrix(rng, mn(rng), wm.cols, a, as);
            IntMatrix res(wm.rows, am.rows);
            bit_serial_gemm(pack<uint64_t>(wm, w, ws), pack<uint64_t>(am, a, as), res);
            if (!(res == reference_gemm(wm, transpose(am))))
              detail = "mismatch at (w,a)=(" + std::to_string(w) + "," + std::to_string(a) +
                       ") signed=(" + std::to_string(ws) + "," + std::to_string(as) +
                       ") W=" + verify_detail::dump(wm) + " A=" + verify_detail::dump(am);
            done++;
          }
  report(1, detail.empty() && done >= 1000,
         "bit-serial GEMM matches the naive integer oracle on " + std::to_string(done) +
             " random cases, all (w,a) in {1..4}^2, both signednesses",
         detail);
}

// 2. streamlining is behavior-preserving and produces integer thresholds
void check_streamline() {
  std::string detail;

  // known 2-bit uniform quantizer: thresholds {0, 0.807, 1.345}, step 0.538;
  // absorbing the matching scale gives {0, 1.5, 2.5} -> integers {1, 2, 3}
  Quantizer q;
  q.levels = {0.0, 0.538, 1.076, 1.614};
  q.thresholds = {0.0, 0.807, 1.345};
  auto [ts0, affine] = quantizer_to_thresholds(q);
  LinearTransform pre;
  pre.scale = {0.538};
  pre.shift = {0.0};
  ThresholdSet ts = round_thresholds_integer(absorb_into_thresholds(ts0, pre));
  const std::vector<double> want{1, 2, 3};
  if (ts.per_channel[0] != want)
    detail = "expected integer thresholds {1,2,3}, got {" +
             std::to_string(ts.per_channel[0][0]) + "," + std::to_string(ts.per_channel[0][1]) +
             "," + std::to_string(ts.per_channel[0][2]) + "}";
  for (int x = -100; x <= 100 && detail.empty(); x++) {
    // original: quantize the pre-scaled value; streamlined: count thresholds
    const double v = q.apply(0.538 * double(x));
    const double mapped = affine.apply(double(ts.apply(double(x), 0)), 0);
    if (std::abs(v - mapped) > 1e-12)
      detail = "behavior diverges at x=" + std::to_string(x);
  }

  VerifyResult vr = verify_streamline(100, 1002);
  if (detail.empty() && !vr.ok()) detail = vr.first_failure;
  report(2, detail.empty(),
         "streamlining 100 random scale/batch-norm/quantizer stacks is exact on the "
         "integer grid and yields integer thresholds ({0,0.807,1.345}/0.538 -> {1,2,3})",
         detail);
}

// 3. interleaved lowering equals packed byte-form im2col across geometries
void check_lowering() {
  VerifyResult vr = verify_lowering<uint64_t>(1003);
  report(3, vr.ok(),
         "interleaved lowering matches packed im2col bit-for-bit over k in {1,3,5,7,11}, "
         "s in {1,2,4}, p in {0..3}, C in {1,8,64,100} (" + std::to_string(vr.passed) +
             " geometries)",
         vr.first_failure);
}

// 4. cost scales with w*a: invocation count exact, wall clock in band
void check_bit_scaling() {
  std::string detail;
  std::mt19937 rng(1004);
  for (int w = 1; w <= 3 && detail.empty(); w++)
    for (int a = 1; a <= 3 && detail.empty(); a++) {
      IntMatrix wm = verify_detail::random_matrix(rng, 8, 64, w, false);
      IntMatrix am = verify_detail::random_matrix(rng, 8, 64, a, false);
      IntMatrix res(8, 8);
      GemmStats stats;
      bit_serial_gemm(pack<uint64_t>(wm, w, false), pack<uint64_t>(am, a, false), res,
                      &stats);
      if (stats.binary_gemm_calls != uint64_t(w) * uint64_t(a))
        detail = "expected " + std::to_string(w * a) + " binary calls, got " +
                 std::to_string(stats.binary_gemm_calls);
    }

  double ratio = 0;
  if (detail.empty()) {
    IntMatrix w1 = verify_detail::random_matrix(rng, 256, 4096, 1, false);
    IntMatrix a1 = verify_detail::random_matrix(rng, 256, 4096, 1, false);
    IntMatrix w2 = verify_detail::random_matrix(rng, 256, 4096, 2, false);
    IntMatrix a2 = verify_detail::random_matrix(rng, 256, 4096, 2, false);
    auto pw1 = pack<uint64_t>(w1, 1, false), pa1 = pack<uint64_t>(a1, 1, false);
    auto pw2 = pack<uint64_t>(w2, 2, false), pa2 = pack<uint64_t>(a2, 2, false);
    (void)time_once(pw2, pa2);  // warm-up
    const double t11 = median_time(pw1, pa1);
    const double t22 = median_time(pw2, pa2);
    ratio = t22 / t11;
    if (!(ratio >= 2.5 && ratio <= 6.0))
      detail = "t(2,2)/t(1,1) = " + std::to_string(ratio) + ", outside [2.5, 6.0]";
  }
  report(4, detail.empty(),
         "bit-serial cost scales with w*a: invocation count is exactly w*a and the "
         "(2,2)/(1,1) wall-clock ratio on 256x4096x256 is " + std::to_string(ratio),
         detail);
}

// 5. throughput grows with depth (packing amortizes over longer dot products)
void check_depth_throughput() {
  std::mt19937 rng(1005);
  auto gops_at = [&](std::size_t k) {
    IntMatrix wm = verify_detail::random_matrix(rng, 256, k, 1, false);
    IntMatrix am = verify_detail::random_matrix(rng, 256, k, 1, false);
    auto pw = pack<uint64_t>(wm, 1, false), pa = pack<uint64_t>(am, 1, false);
    (void)time_once(pw, pa);  // warm-up
    double best = 1e300;
    for (int i = 0; i < 5; i++) best = std::min(best, time_once(pw, pa));
    return 2.0 * 256.0 * double(k) * 256.0 / best;
  };
  const double g64 = gops_at(64);
  const double g4096 = gops_at(4096);
  const bool ok = g4096 > g64;
  std::ostringstream d;
  d << "GOPS at K=64: " << g64 << ", at K=4096: " << g4096;
  report(5, ok, "(1,1) throughput at M=N=256 is higher at K=4096 than at K=64", d.str());
}

// 6. the three network configurations agree and the report is complete
void check_net_configs() {
  std::mt19937 rng(1006);
  std::string detail;

  Network<uint64_t> net;
  ConvLayer<uint64_t> conv;
  conv.name = "conv1";
  conv.geom = ConvGeometry{0, 0, 8, 3, 3, 1, 1, 16};
  conv.weights = verify_detail::random_matrix(rng, 16, 72, 2, true);
  conv.wbits = 2;
  conv.wsigned = true;
  conv.abits = 2;
  net.layers.push_back(std::move(conv));
  ThresholdSet ts;
  ts.per_channel = {{-4, 0, 5}};
  ts.finalized = true;
  net.layers.push_back(ThresholdLayer{"thres1", ts});
  FCLayer<uint64_t> fc;
  fc.name = "fc1";
  fc.weights = verify_detail::random_matrix(rng, 10, 16 * 16 * 16, 2, true);
  fc.wbits = 2;
  fc.wsigned = true;
  fc.abits = 2;
  net.layers.push_back(std::move(fc));
  net.prepare();

  Tensor in(16, 16, 8);
  std::uniform_int_distribution<int32_t> dist(0, 3);
  for (auto& v : in.data) v = dist(rng);

  std::vector<uint64_t> hashes;
  ExecutionReport intl_report;
  for (NetConfig cfg : {NetConfig::Baseline, NetConfig::BsGemm, NetConfig::BsGemmIntl}) {
    auto [out, rep] = run_network(net, in, RunOptions{cfg, 3});
    hashes.push_back(tensor_hash(out));
    if (cfg == NetConfig::BsGemmIntl) intl_report = rep;
  }
  if (hashes[0] != hashes[1] || hashes[1] != hashes[2])
    detail = "output hashes differ across configurations";

  if (detail.empty()) {
    std::ostringstream csv;
    intl_report.write_csv(csv);
    const std::string header = csv.str().substr(0, csv.str().find('\n'));
    for (const char* col : {"t_lower_ns", "t_pack_ns", "t_matmul_ns", "t_other_ns"})
      if (header.find(col) == std::string::npos) detail = std::string("missing column ") + col;
    const LayerReport& cr = intl_report.layers[0];
    if (detail.empty() &&
        !(cr.t_lower_ns > 0 && cr.t_pack_ns > 0 && cr.t_matmul_ns > 0 && cr.t_other_ns > 0))
      detail = "conv layer timing columns not all populated";
  }
  report(6, detail.empty(),
         "conv/threshold/fc network produces identical outputs under baseline, bsgemm and "
         "bsgemm-intl, with all four timing columns populated",
         detail);
}

// 7. bit-plane pack/unpack roundtrip and padding hygiene at scale
void check_pack_roundtrip() {
  VerifyResult a = verify_pack_roundtrip<uint64_t>(5000, 1007);
  VerifyResult b = verify_pack_roundtrip<uint32_t>(5000, 1008);
  const bool ok = a.ok() && b.ok();
  report(7, ok,
         "pack/unpack roundtrip with zero padding bits on " +
             std::to_string(a.passed + b.passed) + " random matrices (64- and 32-bit words)",
         a.ok() ? b.first_failure : a.first_failure);
}

}  // namespace

int main() {
  check_gemm_oracle();
  check_streamline();
  check_lowering();
  check_bit_scaling();
  check_depth_throughput();
  check_net_configs();
  check_pack_roundtrip();
  return failures == 0 ? 0 : 1;
}
