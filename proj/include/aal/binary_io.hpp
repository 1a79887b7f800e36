#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace aal::io {

// Explicit little-endian encoding, independent of host byte order.
class Writer {
 public:
  void bytes(std::string_view s) { buf_.append(s); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void f64(double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    u32(static_cast<std::uint32_t>(bits & 0xFFFFFFFFu));
    u32(static_cast<std::uint32_t>(bits >> 32));
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  bool done() const { return pos_ >= data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t offset() const { return pos_; }

  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() {
    const std::uint64_t lo = u32();
    const std::uint64_t hi = u32();
    return std::bit_cast<double>(lo | (hi << 32));
  }
  std::string str() {
    const auto n = u32();
    return std::string(bytes(n));
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw std::runtime_error("truncated binary data at offset " + std::to_string(pos_));
    }
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view data);

}  // namespace aal::io
