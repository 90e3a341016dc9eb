#include "amg/rng.hpp"

namespace amg {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng Rng::derive(std::string_view tag) const {
  return Rng(splitmix64(seed_ ^ fnv1a64(tag.data(), tag.size())));
}

Rng Rng::derive(std::uint64_t index) const {
  return Rng(splitmix64(splitmix64(seed_) + index));
}

}  // namespace amg
