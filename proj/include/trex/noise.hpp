#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "trex/types.hpp"

namespace trex {

/// Photon statistics of the scan: blank intensity i0 (photons per ray) and
/// the seed of the deterministic counter-based noise stream.
struct NoiseModelSpec {
  double i0 = 1e5;
  std::uint64_t seed = 0;

  void validate() const {
    require(i0 >= 1.0 && std::isfinite(i0), ErrorCode::InvalidConfig,
            "NoiseModelSpec: i0 must be >= 1");
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Uniform draw in (0, 1), built from the top 53 bits so the value depends
/// only on the engine's specified output stream.
inline double uniform_open(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Poisson sample. Inversion by sequential search for small means, the
/// transformed-rejection method for large ones. Uses only specified engine
/// output plus libm, so a fixed seed reproduces the sample stream.
inline std::uint64_t poisson_sample(std::mt19937_64& rng, double mean) {
  if (mean <= 0.0) return 0;
  if (mean < 30.0) {
    double p = std::exp(-mean);
    double f = p;
    const double u = uniform_open(rng);
    std::uint64_t k = 0;
    const std::uint64_t kmax = static_cast<std::uint64_t>(20.0 * mean) + 200;
    while (u > f && k < kmax) {
      ++k;
      p *= mean / static_cast<double>(k);
      f += p;
    }
    return k;
  }

  // Hoermann's PTRD transformed rejection
  const double smu = std::sqrt(mean);
  const double b = 0.931 + 2.53 * smu;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mu = std::log(mean);
  for (;;) {
    double u = uniform_open(rng) - 0.5;
    const double v = uniform_open(rng);
    const double us = 0.5 - std::abs(u);
    const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r && kf >= 0.0)
      return static_cast<std::uint64_t>(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    const double k = kf;
    const double lhs =
        std::log(v * inv_alpha / (a / (us * us) + b));
    const double rhs = k * log_mu - mean - std::lgamma(k + 1.0);
    if (lhs <= rhs) return static_cast<std::uint64_t>(kf);
  }
}

}  // namespace detail

/// Transmitted photon counts for clean line integrals p: each ray draws
/// I_t ~ Poisson(i0 * exp(-p_i)) from its own stream (seed mixed with the
/// ray index, so results do not depend on evaluation order), then clamps
/// zero counts to one photon so the log transform below stays finite.
inline Sinogram simulate_intensities(const Sinogram& clean,
                                     const NoiseModelSpec& noise) {
  noise.validate();
  Sinogram out(clean.geometry());
  const std::size_t m = clean.ray_count();
  for (std::size_t i = 0; i < m; ++i) {
    const double mean = noise.i0 * std::exp(-clean.values()[i]);
    std::mt19937_64 rng(detail::splitmix64(noise.seed ^ (0x50686f746f6e73ull +
                                                         i)));
    std::uint64_t count = detail::poisson_sample(rng, mean);
    if (count == 0) count = 1;
    out.values()[i] = static_cast<double>(count);
  }
  return out;
}

struct SimulatedMeasurements {
  Sinogram measured;   // noisy line integrals, ln(i0) - ln(I_t)
  Sinogram intensity;  // transmitted photon counts (zero clamped to one)
};

inline SimulatedMeasurements simulate_measurements(
    const Sinogram& clean, const NoiseModelSpec& noise) {
  Sinogram intensity = simulate_intensities(clean, noise);
  Sinogram measured(clean.geometry());
  const double log_i0 = std::log(noise.i0);
  for (std::size_t i = 0; i < clean.ray_count(); ++i)
    measured.values()[i] = log_i0 - std::log(intensity.values()[i]);
  return {std::move(measured), std::move(intensity)};
}

/// Statistical row weights from transmitted intensities: normalize to max 1,
/// then optionally compress with sqrt (R2) or cbrt (R3). Weights stay in
/// (0, 1] as long as every intensity is positive.
inline std::vector<double> poisson_weights(const std::vector<double>& counts,
                                           WeightMapping mapping) {
  require(!counts.empty(), ErrorCode::AllZeroMeasurements,
          "poisson_weights: empty intensity data");
  double cmax = 0.0;
  for (double c : counts) {
    require(c >= 0 && std::isfinite(c), ErrorCode::InvalidConfig,
            "poisson_weights: intensities must be finite and >= 0");
    cmax = std::max(cmax, c);
  }
  require(cmax > 0.0, ErrorCode::AllZeroMeasurements,
          "poisson_weights: all intensities are zero");
  std::vector<double> w(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double t = counts[i] / cmax;
    switch (mapping) {
      case WeightMapping::R1: w[i] = t; break;
      case WeightMapping::R2: w[i] = std::sqrt(t); break;
      case WeightMapping::R3: w[i] = std::cbrt(t); break;
    }
  }
  return w;
}

inline std::vector<double> poisson_weights(const Sinogram& intensity,
                                           WeightMapping mapping) {
  return poisson_weights(intensity.values(), mapping);
}

}  // namespace trex
