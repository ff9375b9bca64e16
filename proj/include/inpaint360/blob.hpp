#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "inpaint360/errors.hpp"

namespace inpaint360 {

// Little-endian binary framing shared by every checkpoint kind:
//   "I360BLOB" | u32 format version | u32 kind | kind-specific header | f32 arrays
enum class BlobKind : std::uint32_t { kField = 1, kDenoiser = 2 };

inline constexpr char kBlobMagic[8] = {'I', '3', '6', '0', 'B', 'L', 'O', 'B'};
inline constexpr std::uint32_t kBlobVersion = 1;

class BlobWriter {
 public:
  explicit BlobWriter(BlobKind kind) {
    bytes_.insert(bytes_.end(), kBlobMagic, kBlobMagic + 8);
    u32(kBlobVersion);
    u32(static_cast<std::uint32_t>(kind));
  }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void f32_array(std::span<const float> xs) {
    for (float x : xs) put(std::bit_cast<std::uint32_t>(x));
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  template <typename U>
  void put(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class BlobReader {
 public:
  BlobReader(std::span<const std::uint8_t> bytes, BlobKind expected) : bytes_(bytes) {
    if (bytes_.size() < 16 || std::memcmp(bytes_.data(), kBlobMagic, 8) != 0)
      throw IoError("checkpoint: bad magic");
    pos_ = 8;
    const auto version = u32();
    if (version != kBlobVersion) throw IoError("checkpoint: unsupported version " + std::to_string(version));
    if (u32() != static_cast<std::uint32_t>(expected)) throw IoError("checkpoint: wrong kind");
  }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(get<std::uint64_t>()); }
  void f32_array(std::span<float> out) {
    for (float& x : out) x = std::bit_cast<float>(get<std::uint32_t>());
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  template <typename U>
  U get() {
    if (pos_ + sizeof(U) > bytes_.size()) throw IoError("checkpoint: truncated");
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace inpaint360
