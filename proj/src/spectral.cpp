#include "vmclass/spectral.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "vmclass/error.hpp"

namespace vmclass::spectral {

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

namespace {

// exp(-2 pi i k / n) for k < n / 2
std::vector<Complex> twiddle_table(std::size_t n) {
    std::vector<Complex> table(n / 2);
    for (std::size_t k = 0; k < table.size(); ++k) {
        const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        table[k] = Complex(std::cos(angle), std::sin(angle));
    }
    return table;
}

void check_length(std::size_t n) {
    if (!is_power_of_two(n)) {
        throw ShapeError("fft: length " + std::to_string(n) + " is not a power of two");
    }
}

void transform(std::span<Complex> a, std::span<const Complex> twiddles) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t step = n / len;
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t k = 0; k < half; ++k) {
                const Complex w = twiddles[k * step];
                const Complex b = a[start + k + half];
                const Complex odd(b.real() * w.real() - b.imag() * w.imag(),
                                  b.real() * w.imag() + b.imag() * w.real());
                const Complex even = a[start + k];
                a[start + k] = even + odd;
                a[start + k + half] = even - odd;
            }
        }
    }
}

}  // namespace

void fft_inplace(std::span<Complex> a) {
    check_length(a.size());
    transform(a, twiddle_table(a.size()));
}

std::vector<Complex> fft(std::span<const Complex> signal) {
    std::vector<Complex> out(signal.begin(), signal.end());
    fft_inplace(out);
    return out;
}

std::vector<Complex> inverse_fft(std::span<const Complex> spectrum) {
    std::vector<Complex> out(spectrum.size());
    for (std::size_t i = 0; i < spectrum.size(); ++i) out[i] = std::conj(spectrum[i]);
    fft_inplace(out);
    const double scale = 1.0 / static_cast<double>(out.size());
    for (auto& v : out) v = std::conj(v) * scale;
    return out;
}

std::vector<double> magnitude_spectrum(std::span<const double> signal) {
    std::vector<Complex> buffer(signal.begin(), signal.end());
    fft_inplace(buffer);
    std::vector<double> out(buffer.size());
    for (std::size_t i = 0; i < buffer.size(); ++i) out[i] = std::abs(buffer[i]);
    return out;
}

SpectralFrontEnd::SpectralFrontEnd(std::size_t length) : length_(length) {
    if (!is_power_of_two(length)) {
        throw ShapeError("spectral front end: length " + std::to_string(length) +
                         " is not a power of two");
    }
    twiddles_ = twiddle_table(length);
}

Tensor SpectralFrontEnd::apply(const Tensor& input) const {
    require_rank(input, 3, "spectral front end input");
    if (input.dim(2) != length_) {
        throw ShapeError("spectral front end: expected sequence length " + std::to_string(length_) +
                         ", got " + std::to_string(input.dim(2)));
    }
    Tensor out(input.shape());
    const std::size_t rows = input.dim(0) * input.dim(1);
    std::vector<Complex> buffer(length_);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = input.data().data() + r * length_;
        double* y = out.data().data() + r * length_;
        for (std::size_t t = 0; t < length_; ++t) buffer[t] = Complex(x[t], 0.0);
        transform(buffer, twiddles_);
        for (std::size_t f = 0; f < length_; ++f) y[f] = std::abs(buffer[f]);
    }
    return out;
}

Tensor magnitude_frontend(const Tensor& input) {
    require_rank(input, 3, "magnitude_frontend input");
    return SpectralFrontEnd(input.dim(2)).apply(input);
}

}  // namespace vmclass::spectral
