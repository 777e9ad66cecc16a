#include "morphgan/array_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "morphgan/error.hpp"

static_assert(std::endian::native == std::endian::little, "array files assume a little-endian host");

namespace morphgan {

namespace {

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T get(std::istream& is) {
  T value{};
  if (!is.read(reinterpret_cast<char*>(&value), sizeof value)) throw IntegrityError("array: truncated header");
  return value;
}

template <typename T>
Array make(DType dtype, std::vector<std::int64_t> shape, std::span<const T> values) {
  Array a;
  a.dtype = dtype;
  a.shape = std::move(shape);
  if (a.numel() != static_cast<std::int64_t>(values.size())) throw ArgumentError("array: shape/value count mismatch");
  a.bytes.resize(values.size_bytes());
  if (!values.empty()) std::memcpy(a.bytes.data(), values.data(), values.size_bytes());
  return a;
}

}  // namespace

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::i64: return 8;
  }
  throw IntegrityError("array: unknown dtype");
}

const char* dtype_name(DType dtype) {
  switch (dtype) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::i64: return "i64";
  }
  return "?";
}

std::int64_t Array::numel() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Array Array::from_f32(std::vector<std::int64_t> shape, std::span<const float> values) {
  return make(DType::f32, std::move(shape), values);
}
Array Array::from_f64(std::vector<std::int64_t> shape, std::span<const double> values) {
  return make(DType::f64, std::move(shape), values);
}
Array Array::from_i64(std::vector<std::int64_t> shape, std::span<const std::int64_t> values) {
  return make(DType::i64, std::move(shape), values);
}

void write_array(std::ostream& os, const Array& a) {
  os.write("MGAR", 4);
  put<std::uint32_t>(os, kArrayFormatVersion);
  put<std::uint8_t>(os, static_cast<std::uint8_t>(a.dtype));
  const char pad[3] = {0, 0, 0};
  os.write(pad, 3);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(a.shape.size()));
  for (auto d : a.shape) put<std::uint64_t>(os, static_cast<std::uint64_t>(d));
  os.write(reinterpret_cast<const char*>(a.bytes.data()), static_cast<std::streamsize>(a.bytes.size()));
  if (!os) throw Error("array: write failed");
}

Array read_array(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "MGAR", 4) != 0) throw IntegrityError("array: bad magic");
  const auto version = get<std::uint32_t>(is);
  if (version != kArrayFormatVersion)
    throw IncompatibleVersionError("array: format version " + std::to_string(version) + " is not supported");
  Array a;
  const auto code = get<std::uint8_t>(is);
  if (code < 1 || code > 3) throw IntegrityError("array: unknown dtype code");
  a.dtype = static_cast<DType>(code);
  char pad[3];
  if (!is.read(pad, 3)) throw IntegrityError("array: truncated header");
  const auto rank = get<std::uint32_t>(is);
  if (rank > 8) throw IntegrityError("array: implausible rank");
  for (std::uint32_t i = 0; i < rank; ++i) a.shape.push_back(static_cast<std::int64_t>(get<std::uint64_t>(is)));
  const auto n = a.numel();
  if (n < 0 || n > (std::int64_t{1} << 34)) throw IntegrityError("array: implausible element count");
  a.bytes.resize(static_cast<std::size_t>(n) * dtype_size(a.dtype));
  if (!is.read(reinterpret_cast<char*>(a.bytes.data()), static_cast<std::streamsize>(a.bytes.size())))
    throw IntegrityError("array: truncated payload");
  return a;
}

void save_array(const std::filesystem::path& path, const Array& array) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_array(os, array);
}

Array load_array(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return read_array(is);
}

}  // namespace morphgan
