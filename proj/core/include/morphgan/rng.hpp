#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace morphgan {

/// splitmix64 finalizer; used to derive independent child seeds.
std::uint64_t mix64(std::uint64_t x);

/// Derive a child seed from a parent seed and a sequence of integer tags.
std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> tags);

/// Derive a child seed from a parent seed and a textual stream name.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream);

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL);

using Engine = std::mt19937_64;

/// Uniform double in [0, 1) from a hash value; stateless.
double hash_to_unit(std::uint64_t h);

}  // namespace morphgan
