#include "bsqnn/gemm.hpp"
#include "bsqnn/lowering.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace bsqnn;

namespace {
std::mt19937 rng(77);
}

TEST_CASE("im2col_bytes: 1x1 kernel is a reshape") {
  Tensor t = testutil::random_tensor(rng, 3, 4, 5, 3);
  ConvGeometry g{3, 4, 5, 1, 1, 1, 0, 2};
  IntMatrix out = im2col_bytes(t, g);
  CHECK(out.rows == 12);
  CHECK(out.cols == 5);
  CHECK(out.data == t.data);
}

TEST_CASE("im2col_bytes: 3x3 kernel on 3x3 input is a single row") {
  Tensor t = testutil::random_tensor(rng, 3, 3, 2, 2);
  ConvGeometry g{3, 3, 2, 3, 3, 1, 0, 1};
  IntMatrix out = im2col_bytes(t, g);
  CHECK(out.rows == 1);
  CHECK(out.cols == 18);
  CHECK(out.data == t.data);
}

TEST_CASE("im2col_bytes times reshaped kernels equals direct convolution") {
  Tensor t = testutil::random_tensor(rng, 9, 9, 4, 3);
  ConvGeometry g{9, 9, 4, 3, 3, 2, 1, 6};
  IntMatrix w = testutil::random_matrix(rng, 6, g.patch_cols(), 3, true);
  IntMatrix lowered = im2col_bytes(t, g);
  IntMatrix res = reference_gemm_nt(w, lowered);
  Tensor want = direct_conv(t, w, g);
  for (std::size_t m = 0; m < 6; m++)
    for (std::size_t oy = 0; oy < g.out_h(); oy++)
      for (std::size_t ox = 0; ox < g.out_w(); ox++)
        CHECK(res.at(m, oy * g.out_w() + ox) == want.at(oy, ox, m));
}

TEST_CASE("im2col_bytes geometry errors") {
  Tensor t(4, 4, 1);
  CHECK_THROWS_AS(im2col_bytes(t, ConvGeometry{4, 4, 1, 3, 3, 2, 0, 1}),
                  std::invalid_argument);  // (4-3)%2 != 0
  CHECK_THROWS_AS(im2col_bytes(t, ConvGeometry{5, 4, 1, 1, 1, 1, 0, 1}),
                  std::invalid_argument);  // tensor/geometry mismatch
  CHECK_THROWS_AS(im2col_bytes(t, ConvGeometry{4, 4, 1, 7, 7, 1, 0, 1}),
                  std::invalid_argument);  // kernel larger than padded input
}

TEST_CASE("im2col_interleaved: 1-bit 1x1 kernel is a row-major word copy") {
  Tensor t = testutil::random_tensor(rng, 2, 3, 70, 1);
  auto it = pack_interleaved<uint64_t>(t, 1);
  ConvGeometry g{2, 3, 70, 1, 1, 1, 0, 1};
  auto planes = im2col_interleaved(it, g);
  REQUIRE(planes.size() == 1);
  CHECK(planes[0].rows == 6);
  CHECK(planes[0].words_per_row == it.words_per_pixel);
  CHECK(planes[0].data == it.data);
}

TEST_CASE("im2col_interleaved equals packed, pixel-padded im2col_bytes") {
  for (std::size_t c : {1u, 3u, 8u, 64u, 100u}) {
    Tensor t = testutil::random_tensor(rng, 6, 6, c, 2);
    ConvGeometry g{6, 6, c, 3, 3, 1, 1, 1};
    auto it = pack_interleaved<uint64_t>(t, 2);
    auto planes = im2col_interleaved(it, g);
    IntMatrix lowered = im2col_bytes(t, g);
    IntMatrix padded = pad_columns_per_pixel(lowered, c, 64);
    auto packed = pack<uint64_t>(padded, 2, false);
    REQUIRE(planes.size() == 2);
    for (int b = 0; b < 2; b++) CHECK(planes[b] == packed.planes[b]);
  }
}

TEST_CASE("im2col_interleaved: padding pixels contribute zero words") {
  Tensor t(2, 2, 5);
  for (auto& v : t.data) v = 1;
  auto it = pack_interleaved<uint64_t>(t, 1);
  ConvGeometry g{2, 2, 5, 3, 3, 1, 1, 1};
  auto planes = im2col_interleaved(it, g);
  // output pixel (0,0): kernel position (0,0) falls in padding
  CHECK(planes[0].row_ptr(0)[0] == 0);
  // center position of output pixel (0,0) is input pixel (0,0), all ones
  CHECK(planes[0].row_ptr(0)[4] == 0b11111);
}

TEST_CASE("lowering stats: whole-word copies only, one pass per bit") {
  Tensor t = testutil::random_tensor(rng, 4, 4, 64, 3);
  auto it = pack_interleaved<uint64_t>(t, 3);
  ConvGeometry g{4, 4, 64, 3, 3, 1, 0, 1};
  LoweringStats stats;
  im2col_interleaved(it, g, &stats);
  CHECK(stats.subword_ops == 0);
  CHECK(stats.bit_passes == 3);
  CHECK(stats.whole_word_copies == 3u * 4 * 9 * 1);  // bits * out pixels * kernel positions
}

TEST_CASE("pad_columns_per_pixel validates channel multiple") {
  IntMatrix m(2, 7);
  CHECK_THROWS_AS(pad_columns_per_pixel(m, 3, 64), std::invalid_argument);
}
