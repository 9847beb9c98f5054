#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "gyre/tensor.hpp"

// Seeded randomness. Every stream in the system is derived from the run seed
// plus a short purpose tag, so adding a new consumer never shifts the draws of
// an existing one.

namespace gyre {

class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(eng_);
  }
  double gaussian(double mean, double stddev) {
    std::normal_distribution<double> d(mean, stddev);
    return d(eng_);
  }
  // inclusive on both ends
  int uniform_int(int lo, int hi) {
    std::uniform_int_distribution<int> d(lo, hi);
    return d(eng_);
  }
  uint64_t raw() { return eng_(); }

  Tensor2 uniform_tensor(int rows, int cols, double lo, double hi) {
    Tensor2 out(rows, cols);
    for (double& v : out.data) v = uniform(lo, hi);
    return out;
  }
  Tensor2 gaussian_tensor(int rows, int cols, double mean, double stddev) {
    Tensor2 out(rows, cols);
    for (double& v : out.data) v = gaussian(mean, stddev);
    return out;
  }

 private:
  std::mt19937_64 eng_;
};

// FNV-1a style mix of (base, tag, index) into a fresh stream seed.
inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t index = 0) {
  uint64_t h = 14695981039346656037ull;
  auto mix = [&h](uint64_t x) {
    for (int i = 0; i < 8; ++i) {
      h ^= (x >> (8 * i)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  mix(base);
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  mix(index);
  // final avalanche (splitmix64 tail) so nearby indices land far apart
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebull;
  h ^= h >> 31;
  return h;
}

}  // namespace gyre
