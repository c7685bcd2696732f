#include "mammo/patchio.hpp"

#include <string>

namespace mammo {

void GrayImage::validate() const {
  if (pixels.size() != rows * cols) {
    throw ShapeError("image '" + id + "': pixel count " +
                     std::to_string(pixels.size()) + " != rows x cols");
  }
  for (const auto p : pixels) {
    if (p > kMaxIntensity) {
      throw DomainError("image '" + id + "': intensity " + std::to_string(p) +
                        " exceeds 14-bit range");
    }
  }
}

void PatchGridConfig::validate() const {
  if (patch_height < 1 || patch_width < 1 || stride < 1) {
    throw ConfigError("patch height, width and stride must be >= 1");
  }
  if (!(positive_overlap_min > 0.0 && positive_overlap_min <= 1.0)) {
    throw ConfigError("positive_overlap_min must lie in (0, 1]");
  }
}

std::string_view to_string(Label label) {
  return label == Label::mass ? "mass" : "non-mass";
}

std::string_view to_string(Augment augment) {
  switch (augment) {
    case Augment::original:
      return "original";
    case Augment::flipped:
      return "flipped";
    case Augment::rotated90:
      return "rotated90";
  }
  return "original";
}

Label parse_label(std::string_view text) {
  if (text == "mass") return Label::mass;
  if (text == "non-mass") return Label::non_mass;
  throw ParseError("unknown label '" + std::string(text) + "'");
}

Augment parse_augment(std::string_view text) {
  if (text == "original") return Augment::original;
  if (text == "flipped") return Augment::flipped;
  if (text == "rotated90") return Augment::rotated90;
  throw ParseError("unknown augment tag '" + std::string(text) + "'");
}

std::vector<std::size_t> axis_origins(std::size_t image_extent,
                                      std::size_t patch_extent,
                                      std::size_t stride) {
  std::vector<std::size_t> origins;
  for (std::size_t origin = 1; origin + patch_extent < image_extent;
       origin += stride) {
    origins.push_back(origin);
  }
  return origins;
}

std::vector<PatchOrigin> patch_origins(std::size_t rows, std::size_t cols,
                                       const PatchGridConfig& cfg) {
  cfg.validate();
  const auto row_origins = axis_origins(rows, cfg.patch_height, cfg.stride);
  const auto col_origins = axis_origins(cols, cfg.patch_width, cfg.stride);
  std::vector<PatchOrigin> out;
  out.reserve(row_origins.size() * col_origins.size());
  for (const auto r : row_origins) {
    for (const auto c : col_origins) out.push_back({r, c});
  }
  return out;
}

PixelGrid crop(const GrayImage& image, PatchOrigin origin, std::size_t height,
               std::size_t width) {
  if (origin.row < 1 || origin.col < 1 ||
      origin.row - 1 + height > image.rows ||
      origin.col - 1 + width > image.cols) {
    throw BoundsError("crop rectangle outside image '" + image.id + "'");
  }
  PixelGrid out(height, width);
  for (std::size_t r = 0; r < height; ++r) {
    const auto* src =
        image.pixels.data() + (origin.row - 1 + r) * image.cols + origin.col - 1;
    std::copy_n(src, width, out.values.begin() + r * width);
  }
  return out;
}

std::vector<ExtractedPatch> extract_patches(const GrayImage& image,
                                            const PatchGridConfig& cfg) {
  image.validate();
  std::vector<ExtractedPatch> out;
  for (const auto origin : patch_origins(image.rows, image.cols, cfg)) {
    out.push_back(
        {origin, crop(image, origin, cfg.patch_height, cfg.patch_width)});
  }
  return out;
}

PatchClass label_patch(PatchOrigin origin, const PatchGridConfig& cfg,
                       const MassMask& mask) {
  cfg.validate();
  if (mask.bits.size() != mask.rows * mask.cols) {
    throw ShapeError("mask bit count does not match rows x cols");
  }
  if (origin.row < 1 || origin.col < 1 ||
      origin.row - 1 + cfg.patch_height > mask.rows ||
      origin.col - 1 + cfg.patch_width > mask.cols) {
    throw BoundsError("patch rectangle at (" + std::to_string(origin.row) +
                      ", " + std::to_string(origin.col) +
                      ") lies outside the mask");
  }
  std::size_t covered = 0;
  for (std::size_t r = 0; r < cfg.patch_height; ++r) {
    const auto* row =
        mask.bits.data() + (origin.row - 1 + r) * mask.cols + origin.col - 1;
    for (std::size_t c = 0; c < cfg.patch_width; ++c) covered += row[c] != 0;
  }
  if (covered == 0) return PatchClass::non_mass;
  const double area =
      static_cast<double>(cfg.patch_height) * static_cast<double>(cfg.patch_width);
  if (static_cast<double>(covered) >= cfg.positive_overlap_min * area) {
    return PatchClass::mass;
  }
  return PatchClass::discard;
}

PixelGrid apply_augment(const PixelGrid& original, Augment augment) {
  switch (augment) {
    case Augment::original:
      return original;
    case Augment::flipped:
      return flip_x(original);
    case Augment::rotated90:
      return rotate90(original);
  }
  return original;
}

std::vector<LabeledPatch> augment_dataset(std::vector<LabeledPatch> originals) {
  const std::size_t n = originals.size();
  originals.reserve(3 * n);
  for (const Augment a : {Augment::flipped, Augment::rotated90}) {
    for (std::size_t i = 0; i < n; ++i) {
      if (originals[i].augment != Augment::original) {
        throw DataError("augment_dataset expects original patches only");
      }
      LabeledPatch p = originals[i];
      p.pixels = apply_augment(originals[i].pixels, a);
      p.augment = a;
      originals.push_back(std::move(p));
    }
  }
  return originals;
}

}  // namespace mammo
