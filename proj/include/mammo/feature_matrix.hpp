#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mammo/matrix.hpp"
#include "mammo/patchio.hpp"

namespace mammo {

struct RowProvenance {
  std::string source_id;
  PatchOrigin origin;
  Augment augment = Augment::original;

  friend bool operator==(const RowProvenance&, const RowProvenance&) = default;
};

// N observations x M features, one label and provenance record per row.
struct FeatureMatrix {
  FloatMatrix values;
  std::vector<Label> labels;
  std::vector<RowProvenance> provenance;

  std::size_t rows() const { return values.rows(); }
  std::size_t cols() const { return values.cols(); }
  void validate() const;  // throws ShapeError
};

// "FMAT", u32 rows, u32 cols, f32 row-major.
void write_fmat(const std::filesystem::path& path, const FloatMatrix& m);
FloatMatrix read_fmat(const std::filesystem::path& path);

inline constexpr const char* kLabelManifestHeader =
    "row,label,source_id,origin_row,origin_col,augment";

// Writes `<stem>.fmat` data and `<stem>.labels.csv` companion manifest.
void write_feature_set(const std::filesystem::path& fmat_path,
                       const FeatureMatrix& fm);
FeatureMatrix read_feature_set(const std::filesystem::path& fmat_path);
std::filesystem::path label_manifest_path(
    const std::filesystem::path& fmat_path);

}  // namespace mammo
