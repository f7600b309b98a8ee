#ifndef COVSTAT_RNG_HPP
#define COVSTAT_RNG_HPP

#include <cmath>
#include <cstdint>

namespace covstat {

// Splittable pseudo-random stream in the SplitMix64 family (Steele, Lea,
// Flood 2014): 64-bit state advanced by a per-stream odd increment (gamma),
// output through the SplitMix64 finalizer.
//
// Stream derivation is a pure function of (master_seed, domain, index):
//
//   base  = mix(master_seed ^ salt[domain])
//   h     = base + GOLDEN * (index + 1)
//   state = mix(h),  gamma = odd_gamma(h + GOLDEN)
//
// For a fixed master seed and domain, index -> h is affine with an odd
// multiplier, hence injective mod 2^64; distinct replication indices always
// yield distinct streams. Domains separate replication streams from oracle
// and table streams so they can never alias.
enum class StreamDomain : std::uint64_t {
  kReplication = 0,
  kOracle = 1,
  kTable = 2,
  kAux = 3,
};

class RandomStream {
 public:
  RandomStream() : state_(0), gamma_(kGolden) {}

  static RandomStream from_seed(std::uint64_t seed) {
    return derive(seed, StreamDomain::kAux, 0);
  }

  static RandomStream derive(std::uint64_t master_seed, StreamDomain domain,
                             std::uint64_t index) {
    static constexpr std::uint64_t kSalt[4] = {
        0x243f6a8885a308d3ULL,  // replication
        0x13198a2e03707344ULL,  // oracle
        0xa4093822299f31d0ULL,  // table
        0x082efa98ec4e6c89ULL,  // aux
    };
    const std::uint64_t base =
        mix(master_seed ^ kSalt[static_cast<std::uint64_t>(domain) & 3]);
    const std::uint64_t h = base + kGolden * (index + 1);
    RandomStream s;
    s.state_ = mix(h);
    s.gamma_ = odd_gamma(h + kGolden);
    return s;
  }

  std::uint64_t next_u64() {
    state_ += gamma_;
    return mix(state_);
  }

  // Uniform on the open interval (0,1); never returns an exact endpoint.
  double next_unit() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard exponential via inversion.
  double next_exponential() { return -std::log(next_unit()); }

  // Pair of independent N(0,1) via the Marsaglia polar method.
  void next_normal_pair(double& z1, double& z2) {
    double u, v, s;
    do {
      u = 2.0 * next_unit() - 1.0;
      v = 2.0 * next_unit() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    z1 = u * f;
    z2 = v * f;
  }

  double next_normal() {
    double z1, z2;
    next_normal_pair(z1, z2);
    return z1;
  }

  bool next_sign_bit() { return (next_u64() >> 63) != 0; }

  std::uint64_t state() const { return state_; }
  std::uint64_t gamma() const { return gamma_; }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  // SplitMix64 finalizer.
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // MurmurHash3 variant-13 finalizer, used only for gamma derivation.
  static std::uint64_t mix13(std::uint64_t z) {
    z = (z ^ (z >> 33)) * 0xff51afd7ed558ccdULL;
    z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
    return z ^ (z >> 33);
  }

  // Odd gamma with enough bit transitions (Steele et al. heuristic).
  static std::uint64_t odd_gamma(std::uint64_t h) {
    std::uint64_t g = mix13(h) | 1ULL;
    if (__builtin_popcountll(g ^ (g >> 1)) < 24) g ^= 0xaaaaaaaaaaaaaaaaULL;
    return g;
  }

  std::uint64_t state_;
  std::uint64_t gamma_;
};

}  // namespace covstat

#endif  // COVSTAT_RNG_HPP
