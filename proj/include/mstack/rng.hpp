#pragma once

#include <array>
#include <cstdint>

namespace mstack {

// Philox4x32-10 (Salmon et al. 2011). Pure function of (counter, key).
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key);

// Stream purposes. Values are part of the reproducibility contract.
namespace purpose {
constexpr std::uint32_t kHyper = 1;       // study-level parameters (mu_k, beta_k)
constexpr std::uint32_t kCovariates = 2;  // x_{i,k}
constexpr std::uint32_t kNoise = 3;       // epsilon_{i,k}
constexpr std::uint32_t kFresh = 4;       // fresh evaluation draws
constexpr std::uint32_t kMisc = 5;        // random test instances
constexpr std::uint32_t kFolds = 0x100;   // + repeat index
constexpr std::uint32_t kAttempt = 0x10000;  // multiplier for rejection attempts
}  // namespace purpose

// One independent stream: key = 64-bit seed, counter = (block, purpose, study, replicate).
// Uniform doubles use 53 bits from two words; normals use Box-Muller.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint32_t replicate, std::uint32_t study,
               std::uint32_t purpose);

  std::uint32_t next_u32();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  // Uniform integer in [0, n).
  std::uint32_t below(std::uint32_t n);

 private:
  PhiloxKey key_;
  PhiloxCounter ctr_;
  PhiloxCounter buf_{};
  int pos_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mstack
