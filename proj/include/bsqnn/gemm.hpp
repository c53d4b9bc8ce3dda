#pragma once
// Binary and bit-serial GEMM kernels, plus the naive integer reference.

#include <bit>
#include <cassert>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <vector>

#include "bsqnn/bitplane.hpp"

namespace bsqnn {

struct GemmDims {
  std::size_t rows = 0, depth = 0, cols = 0;
};

// Tile sizes for the blocked kernel. row/col blocks are in matrix rows,
// depth_block is in words.
struct BlockingParams {
  std::size_t row_block = 32;
  std::size_t col_block = 32;
  std::size_t depth_block = 256;
  std::size_t reg_rows = 2;  // register micro-tile
  std::size_t reg_cols = 2;

  void validate() const {
    if (row_block < 1 || col_block < 1 || depth_block < 1 || reg_rows < 1 || reg_cols < 1)
      throw std::invalid_argument("BlockingParams: all block sizes must be >= 1");
  }
};

// Default depth block: half the L1 data cache split across one row-set of
// each operand.
template <typename Word>
BlockingParams default_blocking(std::size_t l1_bytes = 32 * 1024) {
  BlockingParams bp;
  const std::size_t l1_words = l1_bytes / sizeof(Word);
  bp.depth_block = std::max<std::size_t>(1, l1_words / 2 / (bp.row_block + bp.col_block));
  return bp;
}

struct GemmStats {
  uint64_t binary_gemm_calls = 0;
};

namespace detail {
template <typename Word>
void check_binary_shapes(const BitMatrix<Word>& W, const BitMatrix<Word>& A,
                         const IntMatrix& res) {
  if (W.depth != A.depth)
    throw std::invalid_argument("binary gemm: depth mismatch (" + std::to_string(W.depth) +
                                " vs " + std::to_string(A.depth) + ")");
  if (res.rows != W.rows || res.cols != A.rows)
    throw std::invalid_argument("binary gemm: result must be " + std::to_string(W.rows) +
                                "x" + std::to_string(A.rows));
}
}  // namespace detail

// res[r][c] += alpha * sum_d popcount(W(r,d) & A(c,d)).
// Relies on zero padding bits; no masking in the inner loop.
template <typename Word>
void binary_gemm_and(const BitMatrix<Word>& W, const BitMatrix<Word>& A, IntMatrix& res,
                     int32_t alpha) {
  detail::check_binary_shapes(W, A, res);
  const std::size_t nw = W.words_per_row;
  for (std::size_t r = 0; r < W.rows; r++) {
    const Word* wr = W.row_ptr(r);
    int32_t* out = &res.at(r, 0);
    for (std::size_t c = 0; c < A.rows; c++) {
      const Word* ar = A.row_ptr(c);
      int32_t acc = 0;
      for (std::size_t d = 0; d < nw; d++)
        acc += std::popcount(static_cast<Word>(wr[d] & ar[d]));
      out[c] += alpha * acc;
    }
  }
}

// Blocked variant: identical results to binary_gemm_and for any legal tiling.
template <typename Word>
void binary_gemm_and_blocked(const BitMatrix<Word>& W, const BitMatrix<Word>& A,
                             IntMatrix& res, int32_t alpha, const BlockingParams& bp) {
  detail::check_binary_shapes(W, A, res);
  bp.validate();
  const std::size_t nw = W.words_per_row;
  for (std::size_t r0 = 0; r0 < W.rows; r0 += bp.row_block) {
    const std::size_t r1 = std::min(r0 + bp.row_block, W.rows);
    for (std::size_t c0 = 0; c0 < A.rows; c0 += bp.col_block) {
      const std::size_t c1 = std::min(c0 + bp.col_block, A.rows);
      for (std::size_t d0 = 0; d0 < nw; d0 += bp.depth_block) {
        const std::size_t d1 = std::min(d0 + bp.depth_block, nw);
        // 2x2 register micro-tile over the L1-resident block
        std::size_t r = r0;
        for (; r + 2 <= r1; r += 2) {
          const Word* wr0 = W.row_ptr(r) + d0;
          const Word* wr1 = W.row_ptr(r + 1) + d0;
          std::size_t c = c0;
          for (; c + 2 <= c1; c += 2) {
            const Word* ar0 = A.row_ptr(c) + d0;
            const Word* ar1 = A.row_ptr(c + 1) + d0;
            int32_t a00 = 0, a01 = 0, a10 = 0, a11 = 0;
            for (std::size_t d = 0; d < d1 - d0; d++) {
              a00 += std::popcount(static_cast<Word>(wr0[d] & ar0[d]));
              a01 += std::popcount(static_cast<Word>(wr0[d] & ar1[d]));
              a10 += std::popcount(static_cast<Word>(wr1[d] & ar0[d]));
              a11 += std::popcount(static_cast<Word>(wr1[d] & ar1[d]));
            }
            res.at(r, c) += alpha * a00;
            res.at(r, c + 1) += alpha * a01;
            res.at(r + 1, c) += alpha * a10;
            res.at(r + 1, c + 1) += alpha * a11;
          }
          for (; c < c1; c++) {
            const Word* ar = A.row_ptr(c) + d0;
            int32_t a0 = 0, a1 = 0;
            for (std::size_t d = 0; d < d1 - d0; d++) {
              a0 += std::popcount(static_cast<Word>(wr0[d] & ar[d]));
              a1 += std::popcount(static_cast<Word>(wr1[d] & ar[d]));
            }
            res.at(r, c) += alpha * a0;
            res.at(r + 1, c) += alpha * a1;
          }
        }
        for (; r < r1; r++) {
          const Word* wr = W.row_ptr(r) + d0;
          for (std::size_t c = c0; c < c1; c++) {
            const Word* ar = A.row_ptr(c) + d0;
            int32_t acc = 0;
            for (std::size_t d = 0; d < d1 - d0; d++)
              acc += std::popcount(static_cast<Word>(wr[d] & ar[d]));
            res.at(r, c) += alpha * acc;
          }
        }
      }
    }
  }
}

// Bipolar kernel: operands encode {-1,+1} as bits (1 <-> +1).
// res[r][c] += alpha * (2*popcount(~(W^A) masked to depth) - depth).
// Unlike the AND kernel, the final partial word must be masked: padding bits
// agree on both sides and would count as matches.
template <typename Word>
void binary_gemm_xnor(const BitMatrix<Word>& W, const BitMatrix<Word>& A, IntMatrix& res,
                      int32_t alpha) {
  detail::check_binary_shapes(W, A, res);
  const std::size_t nw = W.words_per_row;
  const std::size_t rem = W.depth % BitMatrix<Word>::word_bits;
  const Word tail_mask = rem == 0 ? ~Word(0) : (Word(1) << rem) - 1;
  for (std::size_t r = 0; r < W.rows; r++) {
    const Word* wr = W.row_ptr(r);
    for (std::size_t c = 0; c < A.rows; c++) {
      const Word* ar = A.row_ptr(c);
      int32_t matches = 0;
      for (std::size_t d = 0; d < nw; d++) {
        Word x = ~(wr[d] ^ ar[d]);
        if (d + 1 == nw) x &= tail_mask;
        matches += std::popcount(x);
      }
      res.at(r, c) += alpha * (2 * matches - int32_t(W.depth));
    }
  }
}

// Few-bit integer GEMM as a weighted sum of binary plane products:
// res == unpack(W) * unpack(A)^T, exactly. Accumulates into res.
template <typename Word>
void bit_serial_gemm(const BitPlaneMatrix<Word>& W, const BitPlaneMatrix<Word>& A,
                     IntMatrix& res, GemmStats* stats = nullptr,
                     const BlockingParams* blocking = nullptr) {
  if (W.depth() != A.depth())
    throw std::invalid_argument("bit_serial_gemm: depth mismatch");
  if (res.rows != W.rows() || res.cols != A.rows())
    throw std::invalid_argument("bit_serial_gemm: result shape mismatch");
  // safe-depth bound for the 32-bit accumulator
  assert(W.depth() <= (uint64_t(1) << 31) >> (W.bits + A.bits));
  for (int i = 0; i < W.bits; i++) {
    for (int j = 0; j < A.bits; j++) {
      const int sgn_w = (W.is_signed && i == W.bits - 1) ? -1 : 1;
      const int sgn_a = (A.is_signed && j == A.bits - 1) ? -1 : 1;
      const int32_t alpha = sgn_w * sgn_a * (int32_t(1) << (i + j));
      if (blocking)
        binary_gemm_and_blocked(W.planes[i], A.planes[j], res, alpha, *blocking);
      else
        binary_gemm_and(W.planes[i], A.planes[j], res, alpha);
      if (stats) stats->binary_gemm_calls++;
    }
  }
}

// Row-parallel variant: threads own disjoint row blocks of res, so plane-pair
// contributions to each region stay serialized within one thread.
template <typename Word>
void bit_serial_gemm_parallel(const BitPlaneMatrix<Word>& W, const BitPlaneMatrix<Word>& A,
                              IntMatrix& res, unsigned threads,
                              const BlockingParams* blocking = nullptr) {
  if (threads <= 1 || W.rows() < 2) {
    bit_serial_gemm(W, A, res, nullptr, blocking);
    return;
  }
  threads = std::min<unsigned>(threads, unsigned(W.rows()));
  const std::size_t chunk = (W.rows() + threads - 1) / threads;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; t++) {
    const std::size_t r0 = t * chunk;
    if (r0 >= W.rows()) break;
    const std::size_t r1 = std::min(r0 + chunk, W.rows());
    pool.emplace_back([&, r0, r1] {
      BitPlaneMatrix<Word> wslice;
      wslice.bits = W.bits;
      wslice.is_signed = W.is_signed;
      for (const auto& plane : W.planes) {
        BitMatrix<Word> s(r1 - r0, plane.depth);
        std::copy(plane.row_ptr(r0), plane.row_ptr(r0) + (r1 - r0) * plane.words_per_row,
                  s.data.begin());
        wslice.planes.push_back(std::move(s));
      }
      IntMatrix part(r1 - r0, res.cols);
      bit_serial_gemm(wslice, A, part, nullptr, blocking);
      for (std::size_t r = r0; r < r1; r++)
        for (std::size_t c = 0; c < res.cols; c++) res.at(r, c) += part.at(r - r0, c);
    });
  }
  for (auto& th : pool) th.join();
}

// Exact triple-loop integer product, W (MxK) * A (KxN). Reference oracle and
// byte-engine backend.
inline IntMatrix reference_gemm(const IntMatrix& W, const IntMatrix& A) {
  if (W.cols != A.rows)
    throw std::invalid_argument("reference_gemm: inner dimensions disagree (" +
                                std::to_string(W.cols) + " vs " + std::to_string(A.rows) + ")");
  IntMatrix res(W.rows, A.cols);
  for (std::size_t r = 0; r < W.rows; r++)
    for (std::size_t k = 0; k < W.cols; k++) {
      const int32_t w = W.at(r, k);
      if (w == 0) continue;
      for (std::size_t c = 0; c < A.cols; c++) res.at(r, c) += w * A.at(k, c);
    }
  return res;
}

// W (MxK) * B (NxK)^T, both row-major; avoids materializing the transpose.
inline IntMatrix reference_gemm_nt(const IntMatrix& W, const IntMatrix& B) {
  if (W.cols != B.cols)
    throw std::invalid_argument("reference_gemm_nt: inner dimensions disagree");
  IntMatrix res(W.rows, B.rows);
  for (std::size_t r = 0; r < W.rows; r++)
    for (std::size_t c = 0; c < B.rows; c++) {
      int32_t acc = 0;
      for (std::size_t k = 0; k < W.cols; k++) acc += W.at(r, k) * B.at(c, k);
      res.at(r, c) = acc;
    }
  return res;
}

}  // namespace bsqnn
