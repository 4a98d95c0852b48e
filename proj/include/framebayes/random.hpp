#ifndef FRAMEBAYES_RANDOM_HPP
#define FRAMEBAYES_RANDOM_HPP

#include <cstdint>
#include <random>

namespace framebayes {

// splitmix64, used to derive independent streams from one named seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stream k of a master seed; streams are mutually independent for practical purposes.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::uint64_t s = seed;
  std::uint64_t mixed = splitmix64(s);
  for (std::uint64_t k = 0; k <= stream; ++k) mixed = splitmix64(s);
  return std::mt19937_64(mixed);
}

}  // namespace framebayes

#endif
