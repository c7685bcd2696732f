#include "mammo/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <tuple>

#include "mammo/io.hpp"

namespace mammo {

namespace fs = std::filesystem;

namespace {

struct RawHeader {
  std::size_t rows = 0;
  std::size_t cols = 0;
};

RawHeader read_raw_header(std::istream& in, std::string_view magic,
                          const fs::path& path) {
  io::expect_magic(in, magic, path.string());
  RawHeader h;
  h.rows = io::read_le<std::uint32_t>(in, "rows");
  h.cols = io::read_le<std::uint32_t>(in, "cols");
  (void)io::read_le<std::uint32_t>(in, "reserved");
  return h;
}

void write_raw_header(std::ostream& out, std::string_view magic,
                      std::size_t rows, std::size_t cols) {
  out.write(magic.data(), 4);
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(rows));
  io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(cols));
  io::write_le<std::uint32_t>(out, 0);
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

// Decodes a grayscale PNG into 16-bit samples (8-bit inputs are widened
// without rescaling).
std::tuple<std::size_t, std::size_t, std::vector<std::uint16_t>> decode_png(
    const fs::path& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DataError("cannot open '" + path.string() + "'");
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("libpng initialisation failed");
  }
  std::vector<std::uint16_t> pixels;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<unsigned char> buf;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("'" + path.string() + "': corrupt PNG");
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("'" + path.string() + "': expected single-channel PNG");
  }
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (depth == 16) png_set_swap(png);  // PNG is big-endian
  png_read_update_info(png, info);
  rows = png_get_image_height(png, info);
  cols = png_get_image_width(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buf.resize(rowbytes * rows);
  row_ptrs.resize(rows);
  for (std::size_t r = 0; r < rows; ++r) row_ptrs[r] = buf.data() + r * rowbytes;
  png_read_image(png, row_ptrs.data());
  png_destroy_read_struct(&png, &info, nullptr);

  pixels.resize(rows * cols);
  if (depth == 16) {
    std::memcpy(pixels.data(), buf.data(), pixels.size() * 2);
  } else {
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = buf[i];
  }
  return {rows, cols, std::move(pixels)};
}

}  // namespace

GrayImage read_gimg(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  const auto h = read_raw_header(in, "GIMG", path);
  GrayImage img;
  img.rows = h.rows;
  img.cols = h.cols;
  img.id = path.stem().string();
  img.pixels.resize(h.rows * h.cols);
  io::read_le(in, std::span<std::uint16_t>(img.pixels), "pixels");
  img.validate();
  return img;
}

void write_gimg(const fs::path& path, const GrayImage& image) {
  image.validate();
  io::atomic_write(path, [&](std::ostream& out) {
    write_raw_header(out, "GIMG", image.rows, image.cols);
    io::write_le(out, std::span<const std::uint16_t>(image.pixels));
  });
}

MassMask read_gmsk(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  const auto h = read_raw_header(in, "GMSK", path);
  MassMask mask;
  mask.rows = h.rows;
  mask.cols = h.cols;
  mask.bits.resize(h.rows * h.cols);
  io::read_le(in, std::span<std::uint8_t>(mask.bits), "mask bits");
  return mask;
}

void write_gmsk(const fs::path& path, const MassMask& mask) {
  if (mask.bits.size() != mask.rows * mask.cols) {
    throw ShapeError("mask bit count does not match rows x cols");
  }
  io::atomic_write(path, [&](std::ostream& out) {
    write_raw_header(out, "GMSK", mask.rows, mask.cols);
    io::write_le(out, std::span<const std::uint8_t>(mask.bits));
  });
}

GrayImage read_png_gray(const fs::path& path) {
  auto [rows, cols, pixels] = decode_png(path);
  GrayImage img{rows, cols, std::move(pixels), path.stem().string()};
  img.validate();
  return img;
}

MassMask read_png_mask(const fs::path& path) {
  auto [rows, cols, pixels] = decode_png(path);
  MassMask mask{rows, cols, std::vector<std::uint8_t>(pixels.size())};
  for (std::size_t i = 0; i < pixels.size(); ++i) mask.bits[i] = pixels[i] != 0;
  return mask;
}

GrayImage load_image(const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png") return read_png_gray(path);
  return read_gimg(path);
}

MassMask load_mask(const fs::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".png") return read_png_mask(path);
  return read_gmsk(path);
}

std::vector<PatchRecord> write_patch_dataset(
    const fs::path& dir, const std::vector<LabeledPatch>& patches) {
  fs::create_directories(dir / "patches");
  std::map<std::tuple<std::string, std::size_t, std::size_t>, std::string>
      files;
  std::vector<PatchRecord> records;
  records.reserve(patches.size());
  for (const auto& p : patches) {
    if (p.augment != Augment::original) continue;
    const std::string name = "patches/" + p.source_id + "_r" +
                             std::to_string(p.origin.row) + "_c" +
                             std::to_string(p.origin.col) + ".gimg";
    GrayImage img{p.pixels.rows, p.pixels.cols, p.pixels.values, p.source_id};
    write_gimg(dir / name, img);
    files[{p.source_id, p.origin.row, p.origin.col}] = name;
  }
  for (const auto& p : patches) {
    const auto it = files.find({p.source_id, p.origin.row, p.origin.col});
    if (it == files.end()) {
      throw DataError("augmented patch of '" + p.source_id +
                      "' has no original in the dataset");
    }
    records.push_back({it->second, p.source_id, p.origin, p.label, p.augment});
  }
  std::ostringstream manifest;
  manifest << kPatchManifestHeader << '\n';
  for (const auto& r : records) {
    manifest << r.file << ',' << r.source_id << ',' << r.origin.row << ','
             << r.origin.col << ',' << to_string(r.label) << ','
             << to_string(r.augment) << '\n';
  }
  io::atomic_write_text(dir / "manifest.csv", manifest.str());
  return records;
}

std::vector<PatchRecord> read_patch_manifest(const fs::path& dir) {
  const auto path = dir / "manifest.csv";
  if (!fs::exists(path)) {
    throw DataError("patch manifest '" + path.string() + "' not found");
  }
  auto lines = io::data_lines(path);
  if (lines.empty() || lines.front() != kPatchManifestHeader) {
    throw ParseError("'" + path.string() + "': missing manifest header");
  }
  std::vector<PatchRecord> records;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = io::split_csv_line(lines[i]);
    if (f.size() != 6) {
      throw ParseError("'" + path.string() + "' line " + std::to_string(i + 1) +
                       ": expected 6 fields");
    }
    PatchRecord r;
    r.file = f[0];
    r.source_id = f[1];
    r.origin = {std::stoul(f[2]), std::stoul(f[3])};
    r.label = parse_label(f[4]);
    r.augment = parse_augment(f[5]);
    records.push_back(std::move(r));
  }
  return records;
}

LabeledPatch load_patch(const fs::path& dir, const PatchRecord& record) {
  const auto img = read_gimg(dir / record.file);
  PixelGrid original(img.rows, img.cols, img.pixels);
  return {apply_augment(original, record.augment), record.label,
          record.augment, record.source_id, record.origin};
}

}  // namespace mammo
