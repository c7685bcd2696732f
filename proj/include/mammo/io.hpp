#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "mammo/error.hpp"

namespace mammo::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <class T>
  requires std::is_arithmetic_v<T>
void write_le(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
  requires std::is_arithmetic_v<T>
void write_le(std::ostream& out, std::span<const T> values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size_bytes()));
}

// Reads a little-endian value. `what` names the field in truncation errors.
template <class T>
  requires std::is_arithmetic_v<T>
T read_le(std::istream& in, std::string_view what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw ParseError("truncated file while reading " + std::string(what));
  }
  return value;
}

template <class T>
  requires std::is_arithmetic_v<T>
void read_le(std::istream& in, std::span<T> out, std::string_view what) {
  const auto bytes = static_cast<std::streamsize>(out.size_bytes());
  in.read(reinterpret_cast<char*>(out.data()), bytes);
  if (in.gcount() != bytes) {
    throw ParseError("truncated file while reading " + std::string(what));
  }
}

void expect_magic(std::istream& in, std::string_view magic,
                  std::string_view what);

// Writes through a temporary sibling file and renames it into place.
void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& writer,
                  bool binary = true);

void atomic_write_text(const std::filesystem::path& path,
                       std::string_view text);

std::string read_text(const std::filesystem::path& path);

// Incremental SHA-256 (OpenSSL EVP).
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n);
  std::string hex();  // lowercase; finalises the digest

 private:
  void* ctx_;
};

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_bytes(std::span<const unsigned char> bytes);

// Minimal comma-separated parsing; fields never contain commas in our files.
std::vector<std::string> split_csv_line(std::string_view line);

// Non-comment, non-empty lines of a text file.
std::vector<std::string> data_lines(const std::filesystem::path& path);

}  // namespace mammo::io
