#pragma once

// Deterministic work splitting and random streams.
//
// Work is always divided into fixed-size chunks whose boundaries do not depend on
// the thread count; each chunk owns its own random stream, and callers reduce
// per-chunk results in chunk order. Results are therefore identical for any
// number of threads.

#include <cstddef>
#include <cstdint>
#include <functional>

namespace reqmem {

/// Resolves a requested thread count: 0 means REQMEM_SIM_THREADS if set, else
/// hardware concurrency.
unsigned resolve_thread_count(unsigned requested);

/// Process-wide default used by the simulation modules.
void set_default_threads(unsigned threads);
unsigned default_threads();

/// Calls body(chunk) for chunk in [0, chunk_count) on up to `threads` workers.
/// Exceptions from the body are rethrown on the calling thread (first chunk wins).
void parallel_chunks(std::size_t chunk_count, unsigned threads,
                     const std::function<void(std::size_t)>& body);

/// splitmix64-seeded xoshiro256** generator. Fully specified, so streams are
/// reproducible across compilers and standard libraries.
class RandomStream {
public:
  RandomStream(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in (0, 1].
  double uniform_open_low();
  double normal();
  /// Lorentzian (Cauchy) draw with the given FWHM, centered at zero.
  double lorentzian(double fwhm);
  /// Exponential waiting time with the given rate.
  double exponential(double rate);
  /// Poisson count; exact inversion below mean 30, rounded normal above.
  std::uint64_t poisson(double mean);

private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace reqmem
