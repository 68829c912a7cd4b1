#pragma once

// Little-endian primitives shared by the checkpoint and dataset readers.
// The reader works on an in-memory buffer so that every failure can name
// the byte offset and nothing is committed until a file parses completely.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <iterator>
#include <ostream>
#include <string>
#include <vector>

#include "gcnn/error.hpp"

namespace gcnn::detail {

static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_string(const std::string& s) { put_bytes(s.data(), s.size()); }
  std::vector<char>& bytes() { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<char>& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  template <typename T>
  T get(const char* field) {
    require(sizeof(T), field);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  const char* take(std::size_t n, const char* field) {
    require(n, field);
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string get_string(std::size_t n, const char* field) { return std::string(take(n, field), n); }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  [[noreturn]] void fail(const std::string& msg) const {
    throw FormatError(what_ + ": " + msg + " at offset " + std::to_string(pos_));
  }

 private:
  void require(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n)
      throw FormatError(what_ + ": truncated while reading " + field + " at offset " + std::to_string(pos_) + " (need " +
                        std::to_string(n) + " bytes, " + std::to_string(bytes_.size() - pos_) + " left)");
  }
  const std::vector<char>& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::vector<char> slurp(std::istream& in) {
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace gcnn::detail
