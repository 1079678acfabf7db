#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "vmclass/tensor.hpp"

namespace vmclass::spectral {

using Complex = std::complex<double>;

bool is_power_of_two(std::size_t n) noexcept;

// Unnormalized forward transform X[f] = sum_t x[t] exp(-2 pi i f t / W),
// iterative radix-2 decimation in time. Throws ShapeError unless the length
// is a power of two.
std::vector<Complex> fft(std::span<const Complex> signal);
void fft_inplace(std::span<Complex> signal);

// Inverse via the conjugate trick, scaled by 1/W.
std::vector<Complex> inverse_fft(std::span<const Complex> spectrum);

// |FFT| of a real sequence, full length (both symmetric halves kept).
std::vector<double> magnitude_spectrum(std::span<const double> signal);

// Fixed, parameter-free preprocessing block placed before the conv stack.
class SpectralFrontEnd {
public:
    explicit SpectralFrontEnd(std::size_t length);

    std::size_t length() const noexcept { return length_; }

    // (N, M, W) -> (N, M, W); each channel replaced by its magnitude spectrum.
    Tensor apply(const Tensor& input) const;

private:
    std::size_t length_;
    std::vector<Complex> twiddles_;
};

Tensor magnitude_frontend(const Tensor& input);

}  // namespace vmclass::spectral
