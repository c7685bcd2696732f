#include "mammo/feature_matrix.hpp"

#include <fstream>
#include <sstream>

#include "mammo/io.hpp"

namespace mammo {

namespace fs = std::filesystem;

void FeatureMatrix::validate() const {
  if (labels.size() != rows()) {
    throw ShapeError("feature matrix has " + std::to_string(rows()) +
                     " rows but " + std::to_string(labels.size()) + " labels");
  }
  if (!provenance.empty() && provenance.size() != rows()) {
    throw ShapeError("feature matrix provenance length mismatch");
  }
}

void write_fmat(const fs::path& path, const FloatMatrix& m) {
  io::atomic_write(path, [&](std::ostream& out) {
    out.write("FMAT", 4);
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    io::write_le(out, std::span<const float>(m.data()));
  });
}

FloatMatrix read_fmat(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  io::expect_magic(in, "FMAT", path.string());
  const std::size_t rows = io::read_le<std::uint32_t>(in, "rows");
  const std::size_t cols = io::read_le<std::uint32_t>(in, "cols");
  std::vector<float> data(rows * cols);
  io::read_le(in, std::span<float>(data), "feature data");
  return FloatMatrix(rows, cols, std::move(data));
}

fs::path label_manifest_path(const fs::path& fmat_path) {
  auto p = fmat_path;
  p.replace_extension(".labels.csv");
  return p;
}

void write_feature_set(const fs::path& fmat_path, const FeatureMatrix& fm) {
  fm.validate();
  write_fmat(fmat_path, fm.values);
  std::ostringstream out;
  out << kLabelManifestHeader << '\n';
  for (std::size_t i = 0; i < fm.rows(); ++i) {
    const RowProvenance prov =
        fm.provenance.empty() ? RowProvenance{} : fm.provenance[i];
    out << i << ',' << to_string(fm.labels[i]) << ',' << prov.source_id << ','
        << prov.origin.row << ',' << prov.origin.col << ','
        << to_string(prov.augment) << '\n';
  }
  io::atomic_write_text(label_manifest_path(fmat_path), out.str());
}

FeatureMatrix read_feature_set(const fs::path& fmat_path) {
  if (!fs::exists(fmat_path)) {
    throw DataError("feature matrix '" + fmat_path.string() + "' not found");
  }
  FeatureMatrix fm;
  fm.values = read_fmat(fmat_path);
  const auto lines = io::data_lines(label_manifest_path(fmat_path));
  if (lines.empty() || lines.front() != kLabelManifestHeader) {
    throw ParseError("label manifest for '" + fmat_path.string() +
                     "' lacks its header");
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = io::split_csv_line(lines[i]);
    if (f.size() != 6) {
      throw ParseError("label manifest line " + std::to_string(i + 1) +
                       ": expected 6 fields");
    }
    fm.labels.push_back(parse_label(f[1]));
    fm.provenance.push_back(
        {f[2], {std::stoul(f[3]), std::stoul(f[4])}, parse_augment(f[5])});
  }
  fm.validate();
  return fm;
}

}  // namespace mammo
