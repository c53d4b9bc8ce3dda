// Benchmark CLI: GEMM microbenchmark sweeps, network runs with per-layer
// breakdown, and end-to-end verification.
//
// Exit codes: 0 success, 2 usage/model error, 3 kernel verification failure.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bsqnn/gemm.hpp"
#include "bsqnn/model.hpp"
#include "bsqnn/runtime.hpp"
#include "bsqnn/verify.hpp"

namespace {

using Clock = std::chrono::steady_clock;

struct GemmOptions {
  std::vector<std::size_t> ms, ks, ns;
  std::vector<int> wbits{1}, abits{1};
  std::vector<std::string> engines{"bitserial"};
  double repeat_seconds = 1.0;
  uint32_t seed = 42;
  unsigned threads = 1;
};

struct NetOptions {
  std::string model;
  std::string engine = "bsgemm";
  int repeats = 10;
  uint32_t seed = 42;
  unsigned threads = 1;
};

std::vector<std::size_t> default_sweep() {
  std::vector<std::size_t> v;
  for (std::size_t d = 64; d <= 4096; d *= 2) v.push_back(d);
  return v;
}

double elapsed_ns(Clock::time_point t0) {
  return std::chrono::duration<double, std::nano>(Clock::now() - t0).count();
}

template <typename Word>
int run_gemm_bench(const GemmOptions& opt) {
  std::mt19937 rng(opt.seed);
  std::cout << "M,K,N,w,a,engine,ns,gops\n";
  const bsqnn::BlockingParams blocking = bsqnn::default_blocking<Word>();
  for (const std::string& engine : opt.engines) {
    for (std::size_t m : opt.ms)
      for (std::size_t k : opt.ks)
        for (std::size_t n : opt.ns)
          for (int w : opt.wbits)
            for (int a : opt.abits) {
              double ns_per_call = 0;
              if (engine == "bitserial") {
                bsqnn::IntMatrix wm =
                    bsqnn::verify_detail::random_matrix(rng, m, k, w, false);
                bsqnn::IntMatrix am =
                    bsqnn::verify_detail::random_matrix(rng, n, k, a, false);
                auto pw = bsqnn::pack<Word>(wm, w, false);
                auto pa = bsqnn::pack<Word>(am, a, false);
                bsqnn::IntMatrix res(m, n);
                bsqnn::bit_serial_gemm_parallel(pw, pa, res, opt.threads, &blocking);
                // verify a subsample against the naive oracle before timing
                std::uniform_int_distribution<std::size_t> rr(0, m - 1), cc(0, n - 1);
                for (int chk = 0; chk < 16; chk++) {
                  const std::size_t r = rr(rng), c = cc(rng);
                  int32_t want = 0;
                  for (std::size_t d = 0; d < k; d++) want += wm.at(r, d) * am.at(c, d);
                  if (res.at(r, c) != want) {
                    std::cerr << "verification failed at (" << r << "," << c << "): got "
                              << res.at(r, c) << ", expected " << want << " for (" << m
                              << "," << k << "," << n << ") w=" << w << " a=" << a
                              << "\n";
                    return 3;
                  }
                }
                for (int i = 0; i < 3; i++) {  // warm-up
                  bsqnn::IntMatrix scratch(m, n);
                  bsqnn::bit_serial_gemm_parallel(pw, pa, scratch, opt.threads, &blocking);
                }
                const auto t0 = Clock::now();
                uint64_t calls = 0;
                do {
                  bsqnn::IntMatrix scratch(m, n);
                  bsqnn::bit_serial_gemm_parallel(pw, pa, scratch, opt.threads, &blocking);
                  calls++;
                } while (elapsed_ns(t0) < opt.repeat_seconds * 1e9);
                ns_per_call = elapsed_ns(t0) / double(calls);
              } else if (engine == "byte") {
                bsqnn::IntMatrix wm =
                    bsqnn::verify_detail::random_matrix(rng, m, k, 8, true);
                bsqnn::IntMatrix am =
                    bsqnn::verify_detail::random_matrix(rng, n, k, 8, false);
                for (int i = 0; i < 3; i++) (void)bsqnn::reference_gemm_nt(wm, am);
                const auto t0 = Clock::now();
                uint64_t calls = 0;
                do {
                  (void)bsqnn::reference_gemm_nt(wm, am);
                  calls++;
                } while (elapsed_ns(t0) < opt.repeat_seconds * 1e9);
                ns_per_call = elapsed_ns(t0) / double(calls);
              } else {
                std::cerr << "unknown engine '" << engine << "'\n";
                return 2;
              }
              const double gops = 2.0 * double(m) * double(k) * double(n) / ns_per_call;
              std::cout << m << ',' << k << ',' << n << ',' << w << ',' << a << ','
                        << engine << ',' << ns_per_call << ',' << gops << '\n';
            }
  }
  return 0;
}

template <typename Word>
int run_net_bench(const NetOptions& opt) {
  bsqnn::NetConfig cfg;
  if (opt.engine == "baseline")
    cfg = bsqnn::NetConfig::Baseline;
  else if (opt.engine == "bsgemm")
    cfg = bsqnn::NetConfig::BsGemm;
  else if (opt.engine == "bsgemm-intl")
    cfg = bsqnn::NetConfig::BsGemmIntl;
  else {
    std::cerr << "unknown engine '" << opt.engine
              << "' (expected baseline|bsgemm|bsgemm-intl)\n";
    return 2;
  }
  try {
    bsqnn::ModelDef def = bsqnn::parse_model_file(opt.model);
    const auto slash = opt.model.find_last_of('/');
    const std::string dir = slash == std::string::npos ? "." : opt.model.substr(0, slash);
    bsqnn::Network<Word> net = bsqnn::load_network<Word>(def, dir);

    std::mt19937 rng(opt.seed);
    std::uniform_int_distribution<int32_t> dist(0, (1 << def.input_bits) - 1);
    bsqnn::Tensor input(def.in_h, def.in_w, def.in_c);
    for (auto& v : input.data) v = dist(rng);

    bsqnn::RunOptions ro;
    ro.config = cfg;
    ro.repeats = opt.repeats;
    ro.threads = opt.threads;
    auto [output, report] = bsqnn::run_network(net, input, ro);
    report.write_csv(std::cout);
    std::cerr << "config=" << bsqnn::to_string(cfg) << " output_hash=" << std::hex
              << bsqnn::tensor_hash(output) << std::dec << " total_ns=" << report.total_ns
              << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

template <typename Word>
int run_verify(uint32_t seed) {
  const auto results = bsqnn::run_all_verifications<Word>(seed);
  bool ok = true;
  for (const auto& r : results) {
    std::cout << (r.ok() ? "PASS" : "FAIL") << " " << r.name << " (" << r.passed
              << " passed, " << r.failed << " failed)\n";
    if (!r.ok()) {
      std::cout << "  first failure: " << r.first_failure << "\n";
      ok = false;
    }
  }
  return ok ? 0 : 1;
}

int wordsize_from_env() {
  if (const char* e = std::getenv("BSQNN_WORDSIZE")) {
    const std::string v = e;
    if (v == "32") return 32;
    if (v == "64") return 64;
    std::cerr << "BSQNN_WORDSIZE must be 32 or 64, got '" << v << "'\n";
    return -1;
  }
  return 64;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bit-serial QNN benchmark harness"};
  app.require_subcommand(1);

  int wordsize = wordsize_from_env();
  if (wordsize < 0) return 2;
  app.add_option("--wordsize", wordsize, "machine word size for packed kernels (32|64)")
      ->check(CLI::IsMember({32, 64}));

  GemmOptions gopt;
  CLI::App* gemm = app.add_subcommand("gemm", "GEMM microbenchmark sweep, CSV on stdout");
  gemm->add_option("--m", gopt.ms, "rows (list)");
  gemm->add_option("--k", gopt.ks, "depth (list)");
  gemm->add_option("--n", gopt.ns, "cols (list)");
  gemm->add_option("--wbits", gopt.wbits, "weight bit widths (list)");
  gemm->add_option("--abits", gopt.abits, "activation bit widths (list)");
  gemm->add_option("--engine", gopt.engines, "engines: bitserial, byte");
  gemm->add_option("--repeat-seconds", gopt.repeat_seconds, "timing window per config");
  gemm->add_option("--seed", gopt.seed, "operand RNG seed");
  gemm->add_option("--threads", gopt.threads, "row-parallel worker threads");

  NetOptions nopt;
  CLI::App* net = app.add_subcommand("net", "run a network, per-layer breakdown CSV");
  net->add_option("--model", nopt.model, "model description file")->required();
  net->add_option("--engine", nopt.engine, "baseline | bsgemm | bsgemm-intl");
  net->add_option("--repeats", nopt.repeats, "timing repeats (median reported)");
  net->add_option("--seed", nopt.seed, "input RNG seed");
  net->add_option("--threads", nopt.threads, "row-parallel worker threads");

  uint32_t vseed = 42;
  CLI::App* verify = app.add_subcommand("verify", "run the oracle-equivalence suites");
  verify->add_option("--seed", vseed, "suite RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (gopt.ms.empty()) gopt.ms = default_sweep();
  if (gopt.ks.empty()) gopt.ks = default_sweep();
  if (gopt.ns.empty()) gopt.ns = default_sweep();

  if (gemm->parsed())
    return wordsize == 32 ? run_gemm_bench<uint32_t>(gopt) : run_gemm_bench<uint64_t>(gopt);
  if (net->parsed())
    return wordsize == 32 ? run_net_bench<uint32_t>(nopt) : run_net_bench<uint64_t>(nopt);
  if (verify->parsed())
    return wordsize == 32 ? run_verify<uint32_t>(vseed) : run_verify<uint64_t>(vseed);
  return 2;
}
