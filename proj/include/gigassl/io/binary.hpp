#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gigassl/error.hpp"

namespace gigassl::io {

// Little-endian encoders over an in-memory byte buffer. Files are written and
// read whole, so truncation is detected by bounds checks on the buffer.
class Writer {
 public:
  void u32(std::uint32_t v) { put_le(v); }
  void i32(std::int32_t v) { put_le(static_cast<std::uint32_t>(v)); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

  const std::string& buffer() const noexcept { return buf_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Io("cannot open '" + path.string() + "' for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw Io("write failed for '" + path.string() + "'");
  }

 private:
  void put_le(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) buf_.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
  }
  std::string buf_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Io("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Io("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Io("write failed for '" + path.string() + "'");
}

class Reader {
 public:
  // Running past the end raises `truncated` with the given context.
  Reader(std::string data, ErrorKind truncated, std::string context)
      : data_(std::move(data)), truncated_(truncated), context_(std::move(context)) {}

  std::uint32_t u32() { return get_le(); }
  std::int32_t i32() { return static_cast<std::int32_t>(get_le()); }
  float f32() { return std::bit_cast<float>(get_le()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() { return bytes(u32()); }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  const std::string& context() const noexcept { return context_; }

  [[noreturn]] void fail(const std::string& what) const { raise(truncated_, context_ + ": " + what); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail("unexpected end of file at byte " + std::to_string(pos_));
  }
  std::uint32_t get_le() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + b])) << (8 * b);
    pos_ += 4;
    return v;
  }

  std::string data_;
  std::size_t pos_ = 0;
  ErrorKind truncated_;
  std::string context_;
};

}  // namespace gigassl::io
