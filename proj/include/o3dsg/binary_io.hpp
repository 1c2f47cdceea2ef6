#pragma once

// Little-endian byte buffers shared by every binary file format.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "o3dsg/errors.hpp"

namespace o3dsg::io {

class ByteWriter {
 public:
  void magic(std::string_view m) { buf_.append(m); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u32(bits);
  }
  void f32s(std::span<const float> vs) {
    for (float v : vs) f32(v);
  }
  void bytes(std::string_view s) { buf_.append(s); }
  /// u16 length prefix followed by the raw UTF-8 bytes.
  void str16(std::string_view s, std::string_view field);
  /// u32 length prefix followed by the raw bytes.
  void str32(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }

  const std::string& data() const noexcept { return buf_; }
  std::string take() noexcept { return std::move(buf_); }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string buf_;
};

/// Reads fields in order; every read names its field so truncation and
/// validation failures surface as ParseError(field, ...).
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  void expect_magic(std::string_view m);
  /// Reads a u32 version and rejects anything other than `expected`.
  std::uint32_t expect_version(std::uint32_t expected);

  std::uint8_t u8(std::string_view field) { return static_cast<std::uint8_t>(get_le(1, field)); }
  std::uint16_t u16(std::string_view field) { return static_cast<std::uint16_t>(get_le(2, field)); }
  std::uint32_t u32(std::string_view field) { return static_cast<std::uint32_t>(get_le(4, field)); }
  std::uint64_t u64(std::string_view field) { return get_le(8, field); }
  float f32(std::string_view field) {
    const auto bits = u32(field);
    float v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  void f32s(std::span<float> out, std::string_view field) {
    require(out.size() * 4, field);
    for (float& v : out) v = f32(field);
  }
  std::string str16(std::string_view field);
  std::string str32(std::string_view field);

  /// Throws unless `count * record_size` bytes remain; guards huge allocations
  /// driven by corrupted count fields.
  void require_records(std::uint64_t count, std::uint64_t record_size, std::string_view field);
  void expect_end();

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

 private:
  void require(std::size_t n, std::string_view field);
  std::uint64_t get_le(int n, std::string_view field);

  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace o3dsg::io
