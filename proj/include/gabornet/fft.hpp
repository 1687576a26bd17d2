// Radix-2 complex FFT for analysis (filter responses). Not differentiable;
// nothing on the training path uses it.
#pragma once

#include <complex>
#include <vector>

namespace gabornet {

bool is_power_of_two(int64_t n);

// In-place forward DFT, n must be a power of two.
void fft(std::vector<std::complex<double>>& a);

}  // namespace gabornet
