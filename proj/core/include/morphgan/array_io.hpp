#pragma once

// Flat binary array files.
//
// Layout (all integers little-endian):
//   char[4]  magic "MGAR"
//   u32      format version (1)
//   u8       dtype: 1 = f32, 2 = f64, 3 = i64
//   u8[3]    zero padding
//   u32      rank
//   u64[rank] dims
//   payload  row-major elements, little-endian

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace morphgan {

enum class DType : std::uint8_t { f32 = 1, f64 = 2, i64 = 3 };

std::size_t dtype_size(DType dtype);
const char* dtype_name(DType dtype);

inline constexpr std::uint32_t kArrayFormatVersion = 1;

struct Array {
  DType dtype = DType::f32;
  std::vector<std::int64_t> shape;
  std::vector<std::byte> bytes;

  std::int64_t numel() const;

  template <typename T>
  std::span<const T> view() const {
    return {reinterpret_cast<const T*>(bytes.data()), bytes.size() / sizeof(T)};
  }

  static Array from_f32(std::vector<std::int64_t> shape, std::span<const float> values);
  static Array from_f64(std::vector<std::int64_t> shape, std::span<const double> values);
  static Array from_i64(std::vector<std::int64_t> shape, std::span<const std::int64_t> values);

  bool operator==(const Array&) const = default;
};

void write_array(std::ostream& os, const Array& array);
Array read_array(std::istream& is);

void save_array(const std::filesystem::path& path, const Array& array);
Array load_array(const std::filesystem::path& path);

}  // namespace morphgan
