#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <istream>
#include <ostream>

namespace ucf {

// Counter-free xoshiro256** generator. We roll our own distributions on top
// of it because libstdc++'s std::uniform_*_distribution results are not
// specified bit-for-bit, and checkpoints must restore sampling streams
// exactly.
class Rng {
 public:
  Rng() : Rng(0x9e3779b97f4a7c15ull) {}

  explicit Rng(std::uint64_t seed) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    // splitmix64 expansion of the seed into the four state words
    std::uint64_t x = seed;
    for (auto& w : s_) {
      x += 0x9e3779b97f4a7c15ull;
      std::uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
      w = z ^ (z >> 31);
    }
    have_gauss_ = false;
    gauss_ = 0.0;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform integer in [0, n), n >= 1
  std::uint64_t uniform(std::uint64_t n) {
    // Lemire rejection sampling; unbiased
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    std::uint64_t lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      std::uint64_t t = (0 - n) % n;
      while (lo < t) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  // uniform double in [0, 1) with 53-bit resolution
  double uniform_real() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform_real(double lo, double hi) {
    return lo + (hi - lo) * uniform_real();
  }

  // standard normal via Box-Muller (cached pair)
  double normal() {
    if (have_gauss_) {
      have_gauss_ = false;
      return gauss_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform_real();
    } while (u1 <= 0.0);
    const double u2 = uniform_real();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    gauss_ = r * std::sin(theta);
    have_gauss_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform_real() < p; }

  void save(std::ostream& os) const {
    for (auto w : s_) os << w << ' ';
    os << (have_gauss_ ? 1 : 0) << ' ';
    os.write(reinterpret_cast<const char*>(&gauss_), sizeof(gauss_));
  }

  void load(std::istream& is) {
    for (auto& w : s_) is >> w;
    int hg = 0;
    is >> hg;
    have_gauss_ = hg != 0;
    is.get();  // separator
    is.read(reinterpret_cast<char*>(&gauss_), sizeof(gauss_));
  }

  bool operator==(const Rng& o) const {
    return s_[0] == o.s_[0] && s_[1] == o.s_[1] && s_[2] == o.s_[2] &&
           s_[3] == o.s_[3] && have_gauss_ == o.have_gauss_ &&
           (!have_gauss_ || gauss_ == o.gauss_);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4] = {};
  bool have_gauss_ = false;
  double gauss_ = 0.0;
};

}  // namespace ucf
