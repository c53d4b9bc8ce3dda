// Exercises the installed `bench` binary through std::system. BENCH_BIN is
// injected by the build so the tests run against the freshly built tool.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace {

int exit_code(int system_status) {
#ifdef _WIN32
  return system_status;
#else
  return WEXITSTATUS(system_status);
#endif
}

int run(const std::string& args, std::string* stdout_text = nullptr) {
  const std::string out = "bench_cli_out.txt";
  const int status = std::system((std::string(BENCH_BIN) + " " + args + " > " + out +
                                  " 2> bench_cli_err.txt")
                                     .c_str());
  if (stdout_text) {
    std::ifstream f(out);
    std::ostringstream ss;
    ss << f.rdbuf();
    *stdout_text = ss.str();
  }
  std::remove(out.c_str());
  std::remove("bench_cli_err.txt");
  return exit_code(status);
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("--no-such-flag") == 2);
  CHECK(run("gemm --m notanumber") == 2);
  CHECK(run("net") == 2);  // --model is required
  CHECK(run("net --model /nonexistent/model.txt") == 2);
}

TEST_CASE("tiny gemm sweep emits the CSV schema") {
  std::string out;
  REQUIRE(run("gemm --m 8 --k 64 --n 8 --wbits 2 --abits 2 --repeat-seconds 0.01", &out) ==
          0);
  std::istringstream ss(out);
  std::string header, row;
  REQUIRE(std::getline(ss, header));
  CHECK(header == "M,K,N,w,a,engine,ns,gops");
  REQUIRE(std::getline(ss, row));
  CHECK(row.rfind("8,64,8,2,2,bitserial,", 0) == 0);
}

TEST_CASE("verify subcommand passes for both word sizes") {
  std::string out;
  CHECK(run("verify", &out) == 0);
  CHECK(out.find("FAIL") == std::string::npos);
  CHECK(run("--wordsize 32 verify") == 0);
}
