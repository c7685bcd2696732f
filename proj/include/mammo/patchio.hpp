#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mammo/error.hpp"

namespace mammo {

// Row-major 2-D grid. Used for raw pixel patches and normalized patches.
template <class T>
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> values;

  Grid() = default;
  Grid(std::size_t r, std::size_t c, T fill = T{})
      : rows(r), cols(c), values(r * c, fill) {}
  Grid(std::size_t r, std::size_t c, std::vector<T> v)
      : rows(r), cols(c), values(std::move(v)) {
    if (values.size() != rows * cols) {
      throw ShapeError("grid data length does not match rows x cols");
    }
  }

  bool empty() const { return values.empty(); }
  T& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  const T& at(std::size_t r, std::size_t c) const {
    return values[r * cols + c];
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

using PixelGrid = Grid<std::uint16_t>;
using NormalizedPatch = Grid<double>;

inline constexpr std::uint16_t kMaxIntensity = (1u << 14) - 1;

// 14-bit grayscale mammogram.
struct GrayImage {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint16_t> pixels;
  std::string id;

  // Throws ShapeError / DomainError when the invariants do not hold.
  void validate() const;
};

struct MassMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> bits;  // nonzero marks a mass pixel
};

struct PatchGridConfig {
  std::size_t patch_height = 454;
  std::size_t patch_width = 454;
  std::size_t stride = 300;
  double positive_overlap_min = 0.10;

  void validate() const;  // throws ConfigError
};

enum class Label : std::uint8_t { non_mass = 0, mass = 1 };
enum class Augment : std::uint8_t { original = 0, flipped = 1, rotated90 = 2 };
enum class PatchClass : std::uint8_t { non_mass, mass, discard };

std::string_view to_string(Label label);
std::string_view to_string(Augment augment);
Label parse_label(std::string_view text);
Augment parse_augment(std::string_view text);

// 1-based offset of a patch's top-left pixel in its source image.
struct PatchOrigin {
  std::size_t row = 1;
  std::size_t col = 1;

  friend auto operator<=>(const PatchOrigin&, const PatchOrigin&) = default;
};

struct ExtractedPatch {
  PatchOrigin origin;
  PixelGrid pixels;
};

struct LabeledPatch {
  PixelGrid pixels;
  Label label = Label::non_mass;
  Augment augment = Augment::original;
  std::string source_id;
  PatchOrigin origin;
};

// Origins visited by the stride scan along one axis. An origin o is kept only
// when o + patch_extent < image_extent (strict).
std::vector<std::size_t> axis_origins(std::size_t image_extent,
                                      std::size_t patch_extent,
                                      std::size_t stride);

// Patch origins in row-major scan order.
std::vector<PatchOrigin> patch_origins(std::size_t rows, std::size_t cols,
                                       const PatchGridConfig& cfg);

std::vector<ExtractedPatch> extract_patches(const GrayImage& image,
                                            const PatchGridConfig& cfg);

PixelGrid crop(const GrayImage& image, PatchOrigin origin, std::size_t height,
               std::size_t width);

// mass when the mask covers at least positive_overlap_min of the patch area,
// non_mass when it covers none of it, discard otherwise.
PatchClass label_patch(PatchOrigin origin, const PatchGridConfig& cfg,
                       const MassMask& mask);

template <class T>
Grid<T> flip_x(const Grid<T>& patch) {
  Grid<T> out(patch.rows, patch.cols);
  for (std::size_t r = 0; r < patch.rows; ++r) {
    const std::size_t src = patch.rows - 1 - r;
    std::copy_n(patch.values.begin() + src * patch.cols, patch.cols,
                out.values.begin() + r * patch.cols);
  }
  return out;
}

// Counterclockwise quarter turn about the grid center.
template <class T>
Grid<T> rotate90(const Grid<T>& patch) {
  if (patch.rows != patch.cols) {
    throw ShapeError("rotate90 requires a square grid, got " +
                     std::to_string(patch.rows) + "x" +
                     std::to_string(patch.cols));
  }
  const std::size_t n = patch.rows;
  Grid<T> out(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      out.at(r, c) = patch.at(c, n - 1 - r);
    }
  }
  return out;
}

// Zero mean, unit population variance. Grids with std below 1e-12 map to all
// zeros.
template <class T>
NormalizedPatch normalize_patch(const Grid<T>& patch) {
  if (patch.empty()) throw ShapeError("normalize_patch: empty grid");
  const double n = static_cast<double>(patch.values.size());
  double mean = 0.0;
  for (const T v : patch.values) mean += static_cast<double>(v);
  mean /= n;
  double ss = 0.0;
  for (const T v : patch.values) {
    const double d = static_cast<double>(v) - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / n);
  NormalizedPatch out(patch.rows, patch.cols, 0.0);
  if (sd < 1e-12) return out;
  for (std::size_t i = 0; i < patch.values.size(); ++i) {
    out.values[i] = (static_cast<double>(patch.values[i]) - mean) / sd;
  }
  return out;
}

PixelGrid apply_augment(const PixelGrid& original, Augment augment);

// Returns the originals followed by one flipped and one rotated variant of
// each, labels and provenance carried over.
std::vector<LabeledPatch> augment_dataset(std::vector<LabeledPatch> originals);

}  // namespace mammo
