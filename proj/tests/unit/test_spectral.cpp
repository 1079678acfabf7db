#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "vmclass/error.hpp"
#include "vmclass/spectral.hpp"

using namespace vmclass;
using spectral::Complex;

TEST_CASE("power-of-two detection") {
    CHECK(spectral::is_power_of_two(1));
    CHECK(spectral::is_power_of_two(256));
    CHECK_FALSE(spectral::is_power_of_two(0));
    CHECK_FALSE(spectral::is_power_of_two(12));
}

TEST_CASE("impulse has a flat unit spectrum") {
    const std::vector<double> x{1, 0, 0, 0};
    CHECK(spectral::magnitude_spectrum(x) == std::vector<double>{1, 1, 1, 1});
}

TEST_CASE("constant signal concentrates in bin 0") {
    const std::vector<double> x{1, 1, 1, 1};
    const auto m = spectral::magnitude_spectrum(x);
    CHECK(m[0] == doctest::Approx(4.0));
    for (int f = 1; f < 4; ++f) CHECK(m[f] == doctest::Approx(0.0));
}

TEST_CASE("cosine at bin 2 of 8") {
    std::vector<double> x(8);
    for (int t = 0; t < 8; ++t) x[t] = std::cos(2 * std::numbers::pi * 2 * t / 8);
    const auto m = spectral::magnitude_spectrum(x);
    for (int f = 0; f < 8; ++f) {
        CAPTURE(f);
        CHECK(m[f] == doctest::Approx(f == 2 || f == 6 ? 4.0 : 0.0));
    }
}

TEST_CASE("fft matches the naive DFT and satisfies Parseval") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> dist;
    for (std::size_t w : {1u, 2u, 4u, 8u, 16u, 32u, 64u, 128u, 256u}) {
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<Complex> x(w);
            for (auto& v : x) v = Complex(dist(rng), dist(rng));
            const auto fast = spectral::fft(x);
            const auto slow = oracle::dft(x);
            double energy_t = 0, energy_f = 0;
            for (std::size_t i = 0; i < w; ++i) {
                CHECK(std::abs(fast[i] - slow[i]) < 1e-9);
                energy_t += std::norm(x[i]);
                energy_f += std::norm(fast[i]);
            }
            CHECK(std::abs(energy_f / static_cast<double>(w) - energy_t) <= 1e-9 * energy_t);
        }
    }
}

TEST_CASE("inverse fft round-trips") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> dist(-1, 1);
    std::vector<Complex> x(64);
    for (auto& v : x) v = Complex(dist(rng), dist(rng));
    const auto back = spectral::inverse_fft(spectral::fft(x));
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(back[i] - x[i]) < 1e-12);
}

TEST_CASE("magnitude spectrum of a real signal is symmetric") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> dist(-5, 5);
    std::vector<double> x(32);
    for (auto& v : x) v = dist(rng);
    const auto m = spectral::magnitude_spectrum(x);
    for (std::size_t f = 1; f < 32; ++f) CHECK(m[f] == doctest::Approx(m[32 - f]).epsilon(1e-12));
}

TEST_CASE("non power of two lengths are rejected") {
    std::vector<Complex> x(12);
    CHECK_THROWS_AS(spectral::fft(x), ShapeError);
    CHECK_THROWS_AS(spectral::SpectralFrontEnd(6), ShapeError);
}

TEST_CASE("front end maps each channel to its magnitude spectrum") {
    std::mt19937_64 rng(8);
    const auto input = oracle::random_tensor({2, 3, 8}, rng);
    const auto out = spectral::SpectralFrontEnd(8).apply(input);
    REQUIRE(out.shape() == input.shape());
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t c = 0; c < 3; ++c) {
            std::vector<Complex> row(8);
            for (std::size_t t = 0; t < 8; ++t) row[t] = input.at({n, c, t});
            const auto ref = oracle::dft(row);
            for (std::size_t f = 0; f < 8; ++f) CHECK(out.at({n, c, f}) == doctest::Approx(std::abs(ref[f])).epsilon(1e-12));
        }
    CHECK(spectral::magnitude_frontend(input) == out);
    CHECK_THROWS_AS(spectral::SpectralFrontEnd(4).apply(input), ShapeError);
}
