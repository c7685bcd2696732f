#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mammo/patchio.hpp"

namespace mammo {

// Raw image layout: "GIMG", u32 rows, u32 cols, u32 reserved, then u16 pixels
// row-major. Masks use "GMSK" with the same header and one u8 per pixel.
GrayImage read_gimg(const std::filesystem::path& path);
void write_gimg(const std::filesystem::path& path, const GrayImage& image);
MassMask read_gmsk(const std::filesystem::path& path);
void write_gmsk(const std::filesystem::path& path, const MassMask& mask);

// 16-bit (or 8-bit, widened) single-channel PNG.
GrayImage read_png_gray(const std::filesystem::path& path);
// 8-bit PNG; nonzero samples mark mass pixels.
MassMask read_png_mask(const std::filesystem::path& path);

// Dispatch on extension: .gimg/.raw -> raw, .png -> PNG. The image id is the
// file stem.
GrayImage load_image(const std::filesystem::path& path);
MassMask load_mask(const std::filesystem::path& path);

// One manifest row of a patch dataset directory.
struct PatchRecord {
  std::string file;  // relative to the dataset directory
  std::string source_id;
  PatchOrigin origin;
  Label label = Label::non_mass;
  Augment augment = Augment::original;
};

inline constexpr const char* kPatchManifestHeader =
    "file,source_id,origin_row,origin_col,label,augment";

// Writes original patches as raw files plus manifest.csv. Augmented rows
// reference their original's file and are materialised on load.
std::vector<PatchRecord> write_patch_dataset(
    const std::filesystem::path& dir, const std::vector<LabeledPatch>& patches);

std::vector<PatchRecord> read_patch_manifest(const std::filesystem::path& dir);

// Reads the record's raw file and applies its augmentation.
LabeledPatch load_patch(const std::filesystem::path& dir,
                        const PatchRecord& record);

}  // namespace mammo
