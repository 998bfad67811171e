#pragma once

// Counter-based noise generation for stochastic trajectories.
//
// Every Gaussian increment is a pure function of (seed, trajectory, step,
// channel), so trajectories can be generated in any order, on any number of
// threads, with bitwise-identical results.  The generator is Philox4x32-10.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

namespace qtraj {

struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      if (round < 9) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
    }
    return ctr;
  }
};

// White-noise increments xi_k = z_k / sqrt(dt) for up to two channels.
struct NoiseDraws {
  double xi1 = 0.0;
  double xi2 = 0.0;
};

class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint32_t trajectory)
      : key_{static_cast<std::uint32_t>(seed),
             static_cast<std::uint32_t>(seed >> 32)},
        trajectory_(trajectory) {}

  // Standard normal draw addressed by (step, channel).
  double normal(std::uint64_t step, std::uint32_t channel) const {
    const Philox4x32::Counter out = Philox4x32::block(
        {static_cast<std::uint32_t>(step),
         static_cast<std::uint32_t>(step >> 32), trajectory_, channel},
        key_);
    const double u1 = to_unit(out[0], out[1]);
    const double u2 = to_unit(out[2], out[3]);
    // Box-Muller; u1 < 1 guarantees the log argument stays positive.
    return std::sqrt(-2.0 * std::log1p(-u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  NoiseDraws draws(std::uint64_t step, int channels, double dt) const {
    if (channels < 1 || channels > 2) {
      throw std::invalid_argument("noise stream supports 1 or 2 channels");
    }
    const double root_dt = std::sqrt(dt);
    NoiseDraws d;
    d.xi1 = normal(step, 0) / root_dt;
    if (channels == 2) d.xi2 = normal(step, 1) / root_dt;
    return d;
  }

 private:
  static double to_unit(std::uint32_t a, std::uint32_t b) {
    const std::uint64_t w = (static_cast<std::uint64_t>(a) << 32) | b;
    return static_cast<double>(w >> 11) * 0x1.0p-53;
  }

  Philox4x32::Key key_;
  std::uint32_t trajectory_;
};

}  // namespace qtraj
