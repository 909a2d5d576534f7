#pragma once

#include <cstdint>
#include <random>

namespace svrgld {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Substreams carved out of one (root seed, replica) pair. Index draws and
/// Gaussian draws never share an engine, so changing the batch size or the
/// epoch length leaves the Gaussian sequence of a replica untouched.
enum class Stream : std::uint64_t {
  Model = 1,
  Index = 2,
  Gaussian = 3,
  Sampling = 4,
  Projection = 5,
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(splitmix64(seed)),
                      static_cast<std::uint32_t>(splitmix64(seed) >> 32)};
    engine_.seed(seq);
  }

  Rng(std::uint64_t root, std::uint64_t index, Stream stream)
      : Rng(derive(root, index, stream)) {}

  static std::uint64_t derive(std::uint64_t root, std::uint64_t index,
                              Stream stream) {
    return splitmix64(splitmix64(root ^ splitmix64(index)) +
                      static_cast<std::uint64_t>(stream));
  }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace svrgld
