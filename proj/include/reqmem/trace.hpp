#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace reqmem {

enum class TraceKind { field, intensity };

/// Uniformly sampled time signal: a complex field envelope or a real intensity.
struct TimeTrace {
  double t0 = 0.0;
  double dt = 1.0;
  TraceKind kind = TraceKind::intensity;
  /// Field samples; for intensity traces the real part holds the intensity.
  std::vector<std::complex<double>> samples;

  std::size_t size() const { return samples.size(); }
  double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
  /// |E|^2 for fields, the stored value for intensities.
  double intensity(std::size_t i) const;
  /// Sum of intensity * dt over samples with t in [from, to).
  double energy(double from, double to) const;
  double total_energy() const;
};

}  // namespace reqmem
