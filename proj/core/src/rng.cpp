#include "morphgan/rng.hpp"

namespace morphgan {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = mix64(parent);
  for (auto t : tags) h = mix64(h ^ mix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream) {
  return derive_seed(parent, {fnv1a(stream.data(), stream.size())});
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

double hash_to_unit(std::uint64_t h) {
  return static_cast<double>(mix64(h) >> 11) * 0x1.0p-53;
}

}  // namespace morphgan
