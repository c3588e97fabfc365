#pragma once

#include <complex>
#include <vector>

namespace reqmem {

using ComplexVector = std::vector<std::complex<double>>;

/// In-place forward DFT, X[k] = sum_n x[n] exp(-2 pi i k n / N).
void fft_forward(ComplexVector& data);
/// In-place inverse DFT including the 1/N factor.
void fft_inverse(ComplexVector& data);

/// Smallest power of two >= n.
std::size_t next_power_of_two(std::size_t n);

}  // namespace reqmem
