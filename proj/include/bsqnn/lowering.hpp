#pragma once
// Convolution-to-GEMM lowering: im2col on byte tensors and word-granular
// im2col on channel-interleaved bit tensors.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsqnn/bitplane.hpp"

namespace bsqnn {

struct ConvGeometry {
  std::size_t in_h = 0, in_w = 0, in_c = 0;
  std::size_t k_h = 0, k_w = 0;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t out_channels = 0;
  std::size_t groups = 1;

  std::size_t out_h() const { return (in_h + 2 * pad - k_h) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - k_w) / stride + 1; }
  std::size_t patch_cols() const { return k_h * k_w * in_c; }

  void validate() const {
    if (in_h == 0 || in_w == 0 || in_c == 0 || k_h == 0 || k_w == 0 || stride == 0)
      throw std::invalid_argument("ConvGeometry: zero dimension");
    if (in_h + 2 * pad < k_h || in_w + 2 * pad < k_w)
      throw std::invalid_argument("ConvGeometry: kernel larger than padded input");
    if ((in_h + 2 * pad - k_h) % stride != 0 || (in_w + 2 * pad - k_w) % stride != 0)
      throw std::invalid_argument("ConvGeometry: output dimensions not integral");
    if (groups == 0 || in_c % groups != 0 ||
        (out_channels != 0 && out_channels % groups != 0))
      throw std::invalid_argument("ConvGeometry: bad group count");
  }
};

// Standard sliding-window patch extraction, zero padding. Output row r is
// output pixel r in row-major order; columns nest as (k_h, k_w, C) with C
// innermost. Reference semantics for every other lowering op.
inline IntMatrix im2col_bytes(const Tensor& t, const ConvGeometry& g) {
  g.validate();
  if (t.h != g.in_h || t.w != g.in_w || t.c != g.in_c)
    throw std::invalid_argument("im2col_bytes: tensor does not match geometry");
  const std::size_t oh = g.out_h(), ow = g.out_w();
  IntMatrix out(oh * ow, g.patch_cols());
  for (std::size_t oy = 0; oy < oh; oy++) {
    for (std::size_t ox = 0; ox < ow; ox++) {
      const std::size_t row = oy * ow + ox;
      std::size_t col = 0;
      for (std::size_t ky = 0; ky < g.k_h; ky++) {
        for (std::size_t kx = 0; kx < g.k_w; kx++) {
          const std::ptrdiff_t iy = std::ptrdiff_t(oy * g.stride + ky) - std::ptrdiff_t(g.pad);
          const std::ptrdiff_t ix = std::ptrdiff_t(ox * g.stride + kx) - std::ptrdiff_t(g.pad);
          const bool inside = iy >= 0 && iy < std::ptrdiff_t(g.in_h) && ix >= 0 &&
                              ix < std::ptrdiff_t(g.in_w);
          for (std::size_t ch = 0; ch < g.in_c; ch++, col++)
            out.at(row, col) = inside ? t.at(std::size_t(iy), std::size_t(ix), ch) : 0;
        }
      }
    }
  }
  return out;
}

struct LoweringStats {
  uint64_t whole_word_copies = 0;
  uint64_t subword_ops = 0;  // stays 0: per-pixel padding keeps copies word-aligned
  uint64_t bit_passes = 0;
};

// Insert zero columns so that each C-sized pixel group is padded to a word
// boundary. Produces the element-form twin of the interleaved lowered layout;
// also used to pack conv kernels against it.
inline IntMatrix pad_columns_per_pixel(const IntMatrix& m, std::size_t channels,
                                       std::size_t word_bits) {
  if (channels == 0 || m.cols % channels != 0)
    throw std::invalid_argument("pad_columns_per_pixel: cols not a multiple of channels");
  const std::size_t pixels = m.cols / channels;
  const std::size_t padded_c = (channels + word_bits - 1) / word_bits * word_bits;
  IntMatrix out(m.rows, pixels * padded_c);
  for (std::size_t r = 0; r < m.rows; r++)
    for (std::size_t px = 0; px < pixels; px++)
      for (std::size_t ch = 0; ch < channels; ch++)
        out.at(r, px * padded_c + ch) = m.at(r, px * channels + ch);
  return out;
}

// im2col on the interleaved layout: one pass per activation bit, copying
// whole words per pixel. Padding pixels contribute zero words. For each bit
// position the output equals the packed, per-pixel-padded im2col_bytes result.
template <typename Word>
std::vector<BitMatrix<Word>> im2col_interleaved(const InterleavedTensor<Word>& t,
                                                const ConvGeometry& g,
                                                LoweringStats* stats = nullptr) {
  g.validate();
  if (t.h != g.in_h || t.w != g.in_w || t.c != g.in_c)
    throw std::invalid_argument("im2col_interleaved: tensor does not match geometry");
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t wpp = t.words_per_pixel;
  const std::size_t depth = g.k_h * g.k_w * wpp * BitMatrix<Word>::word_bits;
  std::vector<BitMatrix<Word>> out;
  out.reserve(t.bits);
  for (int b = 0; b < t.bits; b++) {
    BitMatrix<Word> plane(oh * ow, depth);
    for (std::size_t oy = 0; oy < oh; oy++) {
      for (std::size_t ox = 0; ox < ow; ox++) {
        Word* row = plane.row_ptr(oy * ow + ox);
        std::size_t wpos = 0;
        for (std::size_t ky = 0; ky < g.k_h; ky++) {
          for (std::size_t kx = 0; kx < g.k_w; kx++, wpos += wpp) {
            const std::ptrdiff_t iy =
                std::ptrdiff_t(oy * g.stride + ky) - std::ptrdiff_t(g.pad);
            const std::ptrdiff_t ix =
                std::ptrdiff_t(ox * g.stride + kx) - std::ptrdiff_t(g.pad);
            if (iy < 0 || iy >= std::ptrdiff_t(g.in_h) || ix < 0 ||
                ix >= std::ptrdiff_t(g.in_w))
              continue;  // zero padding pixel, words already zero
            const Word* src = t.pixel_ptr(b, std::size_t(iy), std::size_t(ix));
            for (std::size_t wi = 0; wi < wpp; wi++) row[wpos + wi] = src[wi];
            if (stats) stats->whole_word_copies += wpp;
          }
        }
      }
    }
    out.push_back(std::move(plane));
    if (stats) stats->bit_passes++;
  }
  return out;
}

// Direct convolution, brute force; oracle for the lowered paths.
inline Tensor direct_conv(const Tensor& in, const IntMatrix& weights, const ConvGeometry& g) {
  g.validate();
  if (weights.rows != g.out_channels || weights.cols != g.patch_cols())
    throw std::invalid_argument("direct_conv: weight shape mismatch");
  const std::size_t oh = g.out_h(), ow = g.out_w();
  Tensor out(oh, ow, g.out_channels);
  for (std::size_t m = 0; m < g.out_channels; m++)
    for (std::size_t oy = 0; oy < oh; oy++)
      for (std::size_t ox = 0; ox < ow; ox++) {
        int32_t acc = 0;
        std::size_t col = 0;
        for (std::size_t ky = 0; ky < g.k_h; ky++)
          for (std::size_t kx = 0; kx < g.k_w; kx++)
            for (std::size_t ch = 0; ch < g.in_c; ch++, col++) {
              const std::ptrdiff_t iy =
                  std::ptrdiff_t(oy * g.stride + ky) - std::ptrdiff_t(g.pad);
              const std::ptrdiff_t ix =
                  std::ptrdiff_t(ox * g.stride + kx) - std::ptrdiff_t(g.pad);
              if (iy < 0 || iy >= std::ptrdiff_t(g.in_h) || ix < 0 ||
                  ix >= std::ptrdiff_t(g.in_w))
                continue;
              acc += weights.at(m, col) * in.at(std::size_t(iy), std::size_t(ix), ch);
            }
        out.at(oy, ox, m) = acc;
      }
  return out;
}

}  // namespace bsqnn
