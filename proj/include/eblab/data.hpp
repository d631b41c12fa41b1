#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eblab/rng.hpp"
#include "eblab/tensor.hpp"

namespace eblab {

/// Samples [n, d] with every value in [-1, 1]; labels optional.
struct Dataset {
  Tensor samples;
  std::vector<int> labels;
  std::string tag;
  std::size_t image_height = 0;  ///< 0 for non-image data
  std::size_t image_width = 0;

  std::size_t size() const { return samples.rows(); }
  std::size_t dim() const { return samples.cols(); }
  bool has_labels() const { return !labels.empty(); }
  bool is_image() const { return image_height > 0 && image_width > 0; }

  void validate() const {
    if (samples.rank() != 2) throw std::invalid_argument("dataset: samples must be a matrix");
    for (double v : samples.values()) {
      if (!(v >= -1.0 && v <= 1.0)) throw std::invalid_argument("dataset: value outside [-1,1]");
    }
    if (has_labels() && labels.size() != size()) throw std::invalid_argument("dataset: label count mismatch");
    if (is_image() && image_height * image_width != dim()) throw std::invalid_argument("dataset: image size mismatch");
  }

  Tensor rows(std::span<const std::size_t> idx) const {
    const std::size_t d = dim();
    Tensor out({idx.size(), d});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      std::copy_n(samples.data() + idx[i] * d, d, out.data() + i * d);
    }
    return out;
  }

  /// Uniform draw with replacement.
  Tensor sample_batch(Rng& rng, std::size_t n) const {
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = rng.index(size());
    return rows(idx);
  }
};

// ---------------------------------------------------------------------------
// Ring of Gaussians
// ---------------------------------------------------------------------------

struct RingMixtureSpec {
  std::size_t modes = 8;
  double radius = 2.0;
  double stddev = 0.05;
  std::size_t count = 10000;
  std::uint64_t seed = 1;

  void validate() const {
    if (modes < 1) throw std::invalid_argument("ring: modes must be >= 1");
    if (!(stddev > 0.0)) throw std::invalid_argument("ring: stddev must be > 0");
    if (!(radius >= 0.0)) throw std::invalid_argument("ring: radius must be >= 0");
    if (count < 1) throw std::invalid_argument("ring: count must be >= 1");
  }

  /// Raw coordinates are divided by this to land in [-1, 1]^2.
  double extent() const { return radius + 4.0 * stddev; }
};

/// Mode centers in the rescaled [-1,1]^2 coordinates, as [modes, 2].
inline Tensor ring_centers(const RingMixtureSpec& spec) {
  spec.validate();
  Tensor c({spec.modes, 2});
  for (std::size_t k = 0; k < spec.modes; ++k) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(spec.modes);
    c.at(k, 0) = spec.radius * std::cos(a) / spec.extent();
    c.at(k, 1) = spec.radius * std::sin(a) / spec.extent();
  }
  return c;
}

/// Equal-weight Gaussian modes evenly spaced on a circle. Points are rescaled
/// by 1/(radius + 4 std) and clipped into [-1,1]^2. Labels hold the mode.
inline Dataset gen_ring_mixture(const RingMixtureSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const double ext = spec.extent();
  Dataset ds;
  ds.tag = "ring";
  ds.samples = Tensor({spec.count, 2});
  ds.labels.resize(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::size_t k = rng.index(spec.modes);
    const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(spec.modes);
    const double x = spec.radius * std::cos(a) + spec.stddev * rng.normal();
    const double y = spec.radius * std::sin(a) + spec.stddev * rng.normal();
    ds.samples.at(i, 0) = std::clamp(x / ext, -1.0, 1.0);
    ds.samples.at(i, 1) = std::clamp(y / ext, -1.0, 1.0);
    ds.labels[i] = static_cast<int>(k);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic 8x8 digits
// ---------------------------------------------------------------------------

struct DigitsSpec {
  std::size_t count = 10000;
  std::uint64_t seed = 1;
  double noise = 0.1;         ///< Gaussian pixel noise std, in [-1,1] units
  double min_intensity = 0.6; ///< stroke brightness drawn from [min_intensity, 1]

  void validate() const {
    if (count < 1) throw std::invalid_argument("digits: count must be >= 1");
    if (!(noise >= 0.0)) throw std::invalid_argument("digits: noise must be >= 0");
    if (!(min_intensity > 0.0 && min_intensity <= 1.0)) throw std::invalid_argument("digits: bad intensity");
  }
};

inline constexpr std::size_t kDigitSide = 8;
inline constexpr std::size_t kGlyphWidth = 5;
inline constexpr std::size_t kGlyphHeight = 7;

/// 5x7 glyphs, one string per row.
inline const std::array<std::array<const char*, kGlyphHeight>, 10>& digit_glyphs() {
  static const std::array<std::array<const char*, kGlyphHeight>, 10> glyphs{{
      {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."},
      {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."},
      {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"},
      {"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."},
      {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."},
      {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."},
      {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."},
      {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."},
      {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."},
      {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."},
  }};
  return glyphs;
}

/// Procedurally rendered digits on an 8x8 canvas: a random glyph at a random
/// offset with random stroke brightness plus pixel noise, clipped to [-1,1].
inline Dataset gen_synth_digits(const DigitsSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto& glyphs = digit_glyphs();
  constexpr std::size_t dim = kDigitSide * kDigitSide;
  Dataset ds;
  ds.tag = "digits";
  ds.image_height = kDigitSide;
  ds.image_width = kDigitSide;
  ds.samples = Tensor({spec.count, dim}, -1.0);
  ds.labels.resize(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const auto label = static_cast<int>(rng.index(10));
    const std::size_t ox = rng.index(kDigitSide - kGlyphWidth + 1);
    const std::size_t oy = rng.index(kDigitSide - kGlyphHeight + 1);
    const double intensity = rng.uniform(spec.min_intensity, 1.0);
    auto row = ds.samples.row(i);
    for (std::size_t y = 0; y < kGlyphHeight; ++y)
      for (std::size_t x = 0; x < kGlyphWidth; ++x)
        if (glyphs[label][y][x] == '#') row[(oy + y) * kDigitSide + ox + x] = -1.0 + 2.0 * intensity;
    for (double& v : row) v = std::clamp(v + spec.noise * rng.normal(), -1.0, 1.0);
    ds.labels[i] = label;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

class IdxError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kTruncated, kCountMismatch };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::kIo, "idx: cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
         std::uint32_t{b[at + 3]};
}

inline void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 24));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace detail

struct IdxImages {
  std::size_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;
};

inline IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto b = detail::read_file(path);
  if (b.size() < 4) throw IdxError(IdxError::Kind::kTruncated, "idx: missing header in " + path.string());
  if (detail::read_be32(b, 0) != kIdxImagesMagic) throw IdxError(IdxError::Kind::kBadMagic, "idx: bad image magic");
  if (b.size() < 16) throw IdxError(IdxError::Kind::kTruncated, "idx: truncated image header");
  IdxImages img{detail::read_be32(b, 4), detail::read_be32(b, 8), detail::read_be32(b, 12), {}};
  const std::size_t n = img.count * img.rows * img.cols;
  if (b.size() < 16 + n) throw IdxError(IdxError::Kind::kTruncated, "idx: truncated image payload");
  img.pixels.assign(b.begin() + 16, b.begin() + 16 + static_cast<std::ptrdiff_t>(n));
  return img;
}

inline std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto b = detail::read_file(path);
  if (b.size() < 4) throw IdxError(IdxError::Kind::kTruncated, "idx: missing header in " + path.string());
  if (detail::read_be32(b, 0) != kIdxLabelsMagic) throw IdxError(IdxError::Kind::kBadMagic, "idx: bad label magic");
  if (b.size() < 8) throw IdxError(IdxError::Kind::kTruncated, "idx: truncated label header");
  const std::size_t n = detail::read_be32(b, 4);
  if (b.size() < 8 + n) throw IdxError(IdxError::Kind::kTruncated, "idx: truncated label payload");
  return {b.begin() + 8, b.begin() + 8 + static_cast<std::ptrdiff_t>(n)};
}

inline void write_idx_images(const std::filesystem::path& path, const IdxImages& img) {
  if (img.pixels.size() != img.count * img.rows * img.cols) throw std::invalid_argument("idx: pixel count mismatch");
  std::vector<std::uint8_t> b;
  b.reserve(16 + img.pixels.size());
  detail::put_be32(b, kIdxImagesMagic);
  detail::put_be32(b, static_cast<std::uint32_t>(img.count));
  detail::put_be32(b, static_cast<std::uint32_t>(img.rows));
  detail::put_be32(b, static_cast<std::uint32_t>(img.cols));
  b.insert(b.end(), img.pixels.begin(), img.pixels.end());
  detail::write_file(path, b);
}

inline void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> b;
  detail::put_be32(b, kIdxLabelsMagic);
  detail::put_be32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  detail::write_file(path, b);
}

inline double pixel_to_unit(std::uint8_t p) { return static_cast<double>(p) / 127.5 - 1.0; }

inline std::uint8_t unit_to_pixel(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp((v + 1.0) * 127.5, 0.0, 255.0)));
}

/// Loads an IDX image file (and optional label file) mapping [0,255] to
/// [-1,1]. `pad_to`, when larger than the stored side, zero-pads (pixel 0)
/// symmetrically, e.g. 28 -> 32.
inline Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels = {},
                        std::size_t pad_to = 0) {
  const IdxImages img = read_idx_images(images);
  std::vector<std::uint8_t> lab;
  if (!labels.empty()) {
    lab = read_idx_labels(labels);
    if (lab.size() != img.count) throw IdxError(IdxError::Kind::kCountMismatch, "idx: image/label count mismatch");
  }
  if (img.count == 0 || img.rows == 0 || img.cols == 0) throw IdxError(IdxError::Kind::kTruncated, "idx: empty image set");
  const std::size_t h = std::max(pad_to, img.rows), w = std::max(pad_to, img.cols);
  const std::size_t top = (h - img.rows) / 2, left = (w - img.cols) / 2;
  Dataset ds;
  ds.tag = "idx";
  ds.image_height = h;
  ds.image_width = w;
  ds.samples = Tensor({img.count, h * w}, -1.0);
  for (std::size_t i = 0; i < img.count; ++i) {
    auto row = ds.samples.row(i);
    for (std::size_t y = 0; y < img.rows; ++y)
      for (std::size_t x = 0; x < img.cols; ++x)
        row[(top + y) * w + left + x] = pixel_to_unit(img.pixels[(i * img.rows + y) * img.cols + x]);
  }
  ds.labels.assign(lab.begin(), lab.end());
  ds.validate();
  return ds;
}

/// Quantizes an image dataset and writes it as an IDX pair.
inline void save_idx(const Dataset& ds, const std::filesystem::path& images, const std::filesystem::path& labels) {
  if (!ds.is_image()) throw std::invalid_argument("save_idx: dataset has no image geometry");
  IdxImages img{ds.size(), ds.image_height, ds.image_width, {}};
  img.pixels.reserve(ds.samples.size());
  for (double v : ds.samples.values()) img.pixels.push_back(unit_to_pixel(v));
  write_idx_images(images, img);
  if (ds.has_labels() && !labels.empty()) {
    std::vector<std::uint8_t> lab;
    for (int l : ds.labels) lab.push_back(static_cast<std::uint8_t>(l));
    write_idx_labels(labels, lab);
  }
}

// ---------------------------------------------------------------------------
// PGM
// ---------------------------------------------------------------------------

struct GrayImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  ///< row-major
};

inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::vector<std::uint8_t> b;
  const std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  b.assign(header.begin(), header.end());
  b.insert(b.end(), img.pixels.begin(), img.pixels.end());
  detail::write_file(path, b);
}

inline GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pgm: cannot open " + path.string());
  std::string magic;
  GrayImage img;
  int maxval = 0;
  in >> magic >> img.width >> img.height >> maxval;
  if (magic != "P5" || maxval != 255 || !in) throw std::runtime_error("pgm: unsupported header");
  in.get();
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw std::runtime_error("pgm: truncated payload");
  return img;
}

/// Tiles image samples [n, h*w] into a rows x cols grid (row-major order,
/// unused tiles black) and writes a binary PGM with [-1,1] -> [0,255].
inline GrayImage write_sample_grid(const Tensor& samples, std::size_t h, std::size_t w, std::size_t rows,
                                   std::size_t cols, const std::filesystem::path& path) {
  if (samples.rank() != 2 || samples.cols() != h * w) throw ShapeError("sample grid: sample size mismatch");
  if (rows == 0 || cols == 0) throw std::invalid_argument("sample grid: empty grid");
  GrayImage img{cols * w, rows * h, std::vector<std::uint8_t>(rows * h * cols * w, 0)};
  const std::size_t n = std::min(samples.rows(), rows * cols);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t ty = s / cols, tx = s % cols;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        img.pixels[(ty * h + y) * img.width + tx * w + x] = unit_to_pixel(samples.at(s, y * w + x));
  }
  write_pgm(path, img);
  return img;
}

/// Renders 2-D points in [-1,1]^2 as white dots on black.
inline GrayImage write_scatter_pgm(const Tensor& points, std::size_t side, const std::filesystem::path& path) {
  if (points.rank() != 2 || points.cols() != 2) throw ShapeError("scatter: expected [n,2] points");
  GrayImage img{side, side, std::vector<std::uint8_t>(side * side, 0)};
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const double x = points.at(i, 0), y = points.at(i, 1);
    if (!(x >= -1.0 && x <= 1.0 && y >= -1.0 && y <= 1.0)) continue;
    const auto px = std::min(side - 1, static_cast<std::size_t>((x + 1.0) / 2.0 * static_cast<double>(side)));
    const auto py = std::min(side - 1, static_cast<std::size_t>((1.0 - y) / 2.0 * static_cast<double>(side)));
    img.pixels[py * side + px] = 255;
  }
  write_pgm(path, img);
  return img;
}

}  // namespace eblab
