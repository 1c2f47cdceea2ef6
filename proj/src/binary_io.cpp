#include "o3dsg/binary_io.hpp"

#include <fstream>
#include <sstream>

namespace o3dsg::io {

void ByteWriter::str16(std::string_view s, std::string_view field) {
  if (s.size() > 0xFFFF) {
    throw DataError(std::string(field) + " longer than 65535 bytes");
  }
  u16(static_cast<std::uint16_t>(s.size()));
  buf_.append(s);
}

void ByteReader::expect_magic(std::string_view m) {
  require(m.size(), "magic");
  if (data_.substr(pos_, m.size()) != m) {
    throw ParseError("magic", "expected \"" + std::string(m) + "\"");
  }
  pos_ += m.size();
}

std::uint32_t ByteReader::expect_version(std::uint32_t expected) {
  const auto v = u32("version");
  if (v != expected) {
    throw ParseError("version", "unsupported version " + std::to_string(v) +
                                    " (expected " + std::to_string(expected) + ")");
  }
  return v;
}

std::string ByteReader::str16(std::string_view field) {
  const auto n = u16(field);
  require(n, field);
  std::string s(data_.substr(pos_, n));
  pos_ += n;
  return s;
}

std::string ByteReader::str32(std::string_view field) {
  const auto n = u32(field);
  require(n, field);
  std::string s(data_.substr(pos_, n));
  pos_ += n;
  return s;
}

void ByteReader::require_records(std::uint64_t count, std::uint64_t record_size,
                                 std::string_view field) {
  if (record_size != 0 && count > remaining() / record_size) {
    throw ParseError(std::string(field), "truncated: count " + std::to_string(count) +
                                             " exceeds remaining payload");
  }
}

void ByteReader::expect_end() {
  if (pos_ != data_.size()) {
    throw ParseError("trailing", std::to_string(remaining()) + " unexpected trailing bytes");
  }
}

void ByteReader::require(std::size_t n, std::string_view field) {
  if (remaining() < n) {
    throw ParseError(std::string(field), "truncated (need " + std::to_string(n) +
                                             " bytes, have " + std::to_string(remaining()) + ")");
  }
}

std::uint64_t ByteReader::get_le(int n, std::string_view field) {
  require(static_cast<std::size_t>(n), field);
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
  }
  pos_ += static_cast<std::size_t>(n);
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace o3dsg::io
