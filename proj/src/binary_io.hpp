#ifndef SENTMASK_SRC_BINARY_IO_HPP
#define SENTMASK_SRC_BINARY_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "sentmask/error.hpp"

// Little-endian primitive encoding shared by the shaped cache and checkpoints.
namespace sentmask::detail {

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

  std::uint8_t u8() {
    char c;
    if (!in_.get(c)) fail();
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    std::string s(u32(), '\0');
    bytes(s.data(), s.size());
    return s;
  }
  void bytes(void* data, std::size_t n) {
    if (n > 0 && !in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n))) fail();
  }

 private:
  [[noreturn]] void fail() const {
    throw Error(ErrorCode::kIo, what_ + ": unexpected end of file");
  }

  std::istream& in_;
  std::string what_;
};

}  // namespace sentmask::detail

#endif  // SENTMASK_SRC_BINARY_IO_HPP
