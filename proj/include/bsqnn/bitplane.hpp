#pragma once
// Bit-plane packing and storage for few-bit integer matrices and tensors.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace bsqnn {

// Unpacked integer matrix, row-major. Also serves as the GEMM accumulator.
struct IntMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int32_t> data;

  IntMatrix() = default;
  IntMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0) {}

  int32_t& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  int32_t at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool operator==(const IntMatrix& o) const {
    return rows == o.rows && cols == o.cols && data == o.data;
  }
};

inline IntMatrix transpose(const IntMatrix& m) {
  IntMatrix t(m.cols, m.rows);
  for (std::size_t r = 0; r < m.rows; r++)
    for (std::size_t c = 0; c < m.cols; c++) t.at(c, r) = m.at(r, c);
  return t;
}

// Integer activation tensor, H x W x C, row-major with channels innermost.
struct Tensor {
  std::size_t h = 0, w = 0, c = 0;
  std::vector<int32_t> data;

  Tensor() = default;
  Tensor(std::size_t h_, std::size_t w_, std::size_t c_)
      : h(h_), w(w_), c(c_), data(h_ * w_ * c_, 0) {}

  int32_t& at(std::size_t y, std::size_t x, std::size_t ch) {
    return data[(y * w + x) * c + ch];
  }
  int32_t at(std::size_t y, std::size_t x, std::size_t ch) const {
    return data[(y * w + x) * c + ch];
  }

  bool operator==(const Tensor& o) const {
    return h == o.h && w == o.w && c == o.c && data == o.data;
  }
};

// One bit plane: binary matrix packed along the depth (reduction) dimension.
// Each row is padded with zero bits up to a word boundary; padding bits are
// kept zero by every mutator so AND-popcount kernels never need masking.
template <typename Word = uint64_t>
struct BitMatrix {
  static_assert(std::is_same_v<Word, uint32_t> || std::is_same_v<Word, uint64_t>,
                "word size must be 32 or 64 bits");
  static constexpr std::size_t word_bits = sizeof(Word) * 8;

  std::size_t rows = 0;
  std::size_t depth = 0;  // reduction-dimension length in bits
  std::size_t words_per_row = 0;
  std::vector<Word> data;  // rows * words_per_row, row-major

  BitMatrix() = default;
  BitMatrix(std::size_t r, std::size_t d)
      : rows(r),
        depth(d),
        words_per_row((d + word_bits - 1) / word_bits),
        data(r * words_per_row, 0) {}

  Word* row_ptr(std::size_t r) { return data.data() + r * words_per_row; }
  const Word* row_ptr(std::size_t r) const { return data.data() + r * words_per_row; }

  bool get(std::size_t r, std::size_t d) const {
    return (row_ptr(r)[d / word_bits] >> (d % word_bits)) & Word(1);
  }
  void set(std::size_t r, std::size_t d) {
    row_ptr(r)[d / word_bits] |= Word(1) << (d % word_bits);
  }

  // popcount over padding bits; 0 for any well-formed matrix
  uint64_t padding_popcount() const {
    if (depth % word_bits == 0) return 0;
    const Word pad_mask = ~((Word(1) << (depth % word_bits)) - 1);
    uint64_t n = 0;
    for (std::size_t r = 0; r < rows; r++)
      n += std::popcount(static_cast<Word>(row_ptr(r)[words_per_row - 1] & pad_mask));
    return n;
  }

  bool operator==(const BitMatrix& o) const {
    return rows == o.rows && depth == o.depth && data == o.data;
  }
};

// A w-bit integer matrix stored as w bit planes, plane i = bit significance i.
// If signed, the most significant plane carries two's-complement weight -2^(w-1).
template <typename Word = uint64_t>
struct BitPlaneMatrix {
  int bits = 0;
  bool is_signed = false;
  std::vector<BitMatrix<Word>> planes;

  std::size_t rows() const { return planes.empty() ? 0 : planes[0].rows; }
  std::size_t depth() const { return planes.empty() ? 0 : planes[0].depth; }
};

constexpr int kMaxBits = 8;  // library limit; typical use is <= 4

inline void check_range(int64_t v, int bits, bool is_signed, std::size_t r, std::size_t c) {
  const int64_t lo = is_signed ? -(int64_t(1) << (bits - 1)) : 0;
  const int64_t hi = is_signed ? (int64_t(1) << (bits - 1)) - 1 : (int64_t(1) << bits) - 1;
  if (v < lo || v > hi)
    throw std::out_of_range("element " + std::to_string(v) + " at (" + std::to_string(r) +
                            ", " + std::to_string(c) + ") not representable in " +
                            std::to_string(bits) + (is_signed ? " signed" : " unsigned") +
                            " bits");
}

// Pack an integer matrix into bit planes along the column (depth) dimension.
template <typename Word = uint64_t>
BitPlaneMatrix<Word> pack(const IntMatrix& m, int bits, bool is_signed) {
  if (bits < 1 || bits > kMaxBits) throw std::invalid_argument("pack: bits must be in [1, 8]");
  BitPlaneMatrix<Word> p;
  p.bits = bits;
  p.is_signed = is_signed;
  p.planes.assign(bits, BitMatrix<Word>(m.rows, m.cols));
  for (std::size_t r = 0; r < m.rows; r++) {
    for (std::size_t c = 0; c < m.cols; c++) {
      const int32_t v = m.at(r, c);
      check_range(v, bits, is_signed, r, c);
      const uint32_t enc = static_cast<uint32_t>(v) & ((1u << bits) - 1);  // two's complement
      for (int i = 0; i < bits; i++)
        if ((enc >> i) & 1u) p.planes[i].set(r, c);
    }
  }
  return p;
}

template <typename Word>
IntMatrix unpack(const BitPlaneMatrix<Word>& p) {
  IntMatrix m(p.rows(), p.depth());
  for (std::size_t r = 0; r < m.rows; r++) {
    for (std::size_t c = 0; c < m.cols; c++) {
      int32_t v = 0;
      for (int i = 0; i < p.bits; i++) {
        if (!p.planes[i].get(r, c)) continue;
        const bool msb = (i == p.bits - 1);
        v += (p.is_signed && msb) ? -(1 << i) : (1 << i);
      }
      m.at(r, c) = v;
    }
  }
  return m;
}

// Channel-interleaved bit tensor: for each bit position, each pixel holds one
// word-aligned bit vector over channels (channel c -> word c/wordsize, bit
// c%wordsize, LSB-first). Layout is bit-position-major, then row-major pixels.
template <typename Word = uint64_t>
struct InterleavedTensor {
  static constexpr std::size_t word_bits = sizeof(Word) * 8;
  std::size_t h = 0, w = 0, c = 0;
  int bits = 0;
  std::size_t words_per_pixel = 0;
  std::vector<Word> data;  // [bit][pixel][word]

  const Word* pixel_ptr(int bit, std::size_t y, std::size_t x) const {
    return data.data() + (std::size_t(bit) * h * w + y * w + x) * words_per_pixel;
  }
  Word* pixel_ptr(int bit, std::size_t y, std::size_t x) {
    return data.data() + (std::size_t(bit) * h * w + y * w + x) * words_per_pixel;
  }
};

template <typename Word = uint64_t>
InterleavedTensor<Word> pack_interleaved(const Tensor& t, int bits) {
  if (bits < 1 || bits > kMaxBits)
    throw std::invalid_argument("pack_interleaved: bits must be in [1, 8]");
  InterleavedTensor<Word> out;
  out.h = t.h;
  out.w = t.w;
  out.c = t.c;
  out.bits = bits;
  out.words_per_pixel = (t.c + out.word_bits - 1) / out.word_bits;
  out.data.assign(std::size_t(bits) * t.h * t.w * out.words_per_pixel, 0);
  for (std::size_t y = 0; y < t.h; y++) {
    for (std::size_t x = 0; x < t.w; x++) {
      for (std::size_t ch = 0; ch < t.c; ch++) {
        const int32_t v = t.at(y, x, ch);
        check_range(v, bits, false, y * t.w + x, ch);
        for (int b = 0; b < bits; b++)
          if ((v >> b) & 1)
            out.pixel_ptr(b, y, x)[ch / out.word_bits] |= Word(1) << (ch % out.word_bits);
      }
    }
  }
  return out;
}

template <typename Word>
Tensor unpack_interleaved(const InterleavedTensor<Word>& t) {
  Tensor out(t.h, t.w, t.c);
  for (int b = 0; b < t.bits; b++)
    for (std::size_t y = 0; y < t.h; y++)
      for (std::size_t x = 0; x < t.w; x++) {
        const Word* px = t.pixel_ptr(b, y, x);
        for (std::size_t ch = 0; ch < t.c; ch++)
          if ((px[ch / t.word_bits] >> (ch % t.word_bits)) & Word(1))
            out.at(y, x, ch) |= 1 << b;
      }
  return out;
}

// ---------------------------------------------------------------------------
// Packed-weight container file ("BSQW"), binary little-endian:
//   magic "BSQW", version u16, wordsize u8, bits u8, signed u8, reserved u8,
//   rows u32, depth u32, then planes in significance order.
// ---------------------------------------------------------------------------

namespace detail {
inline void put_u16(std::ostream& os, uint16_t v) {
  char b[2] = {char(v & 0xff), char(v >> 8)};
  os.write(b, 2);
}
inline void put_u32(std::ostream& os, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; i++) b[i] = char((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}
inline uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return uint16_t(b[0]) | uint16_t(b[1]) << 8;
}
inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; i++) v |= uint32_t(b[i]) << (8 * i);
  return v;
}
}  // namespace detail

constexpr uint16_t kContainerVersion = 1;

template <typename Word>
void save_packed(std::ostream& os, const BitPlaneMatrix<Word>& p) {
  os.write("BSQW", 4);
  detail::put_u16(os, kContainerVersion);
  os.put(char(sizeof(Word) * 8));
  os.put(char(p.bits));
  os.put(char(p.is_signed ? 1 : 0));
  os.put(char(0));  // reserved
  detail::put_u32(os, uint32_t(p.rows()));
  detail::put_u32(os, uint32_t(p.depth()));
  for (const auto& plane : p.planes)
    for (Word w : plane.data)
      for (std::size_t i = 0; i < sizeof(Word); i++) os.put(char((w >> (8 * i)) & 0xff));
  if (!os) throw std::runtime_error("save_packed: write failed");
}

template <typename Word>
void save_packed(const std::string& path, const BitPlaneMatrix<Word>& p) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_packed: cannot open " + path);
  save_packed(f, p);
}

template <typename Word = uint64_t>
BitPlaneMatrix<Word> load_packed(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "BSQW", 4) != 0)
    throw std::runtime_error("load_packed: bad magic");
  const uint16_t version = detail::get_u16(is);
  if (version != kContainerVersion)
    throw std::runtime_error("load_packed: unsupported version " + std::to_string(version));
  const int wordsize = is.get();
  const int bits = is.get();
  const int sgn = is.get();
  is.get();  // reserved
  if (wordsize != int(sizeof(Word) * 8))
    throw std::runtime_error("load_packed: container wordsize " + std::to_string(wordsize) +
                             " does not match build wordsize " +
                             std::to_string(sizeof(Word) * 8));
  const uint32_t rows = detail::get_u32(is);
  const uint32_t depth = detail::get_u32(is);
  BitPlaneMatrix<Word> p;
  p.bits = bits;
  p.is_signed = sgn != 0;
  p.planes.assign(bits, BitMatrix<Word>(rows, depth));
  for (auto& plane : p.planes)
    for (Word& w : plane.data) {
      w = 0;
      for (std::size_t i = 0; i < sizeof(Word); i++)
        w |= Word(uint8_t(is.get())) << (8 * i);
    }
  if (!is) throw std::runtime_error("load_packed: truncated file");
  return p;
}

template <typename Word = uint64_t>
BitPlaneMatrix<Word> load_packed(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_packed: cannot open " + path);
  return load_packed<Word>(f);
}

}  // namespace bsqnn
