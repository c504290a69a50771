#ifndef CLTR_RANDOM_H_
#define CLTR_RANDOM_H_

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace cltr {

// Mixes a base seed with a stream counter so that every (seed, stream) pair
// gets an independent generator. Used to give each simulated session, cell
// and repeat its own stream.
uint64_t DeriveSeed(uint64_t base, uint64_t stream);
uint64_t DeriveSeed(uint64_t base, std::initializer_list<uint64_t> streams);

// Stable 64-bit hash of a string (FNV-1a), for turning labels into streams.
uint64_t HashLabel(std::string_view label);

class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // Uniform double in [0, 1) built from the top 53 bits.
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool Bernoulli(double p) { return Uniform() < p; }
  size_t UniformIndex(size_t n) {
    return std::uniform_int_distribution<size_t>(0, n - 1)(engine_);
  }
  double Normal() { return normal_(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace cltr

#endif  // CLTR_RANDOM_H_
