#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace sp2n {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Radix-2 complex FFT with precomputed twiddles. One instance per transform
// length; reused across the many strided 1-D transforms of a 3-D array.
class Fft {
public:
    explicit Fft(std::size_t n) : n_(n) {
        if (!is_power_of_two(n)) throw std::invalid_argument("Fft: length must be a power of two");
        twiddle_.resize(n / 2);
        for (std::size_t k = 0; k < n / 2; ++k) {
            const double angle = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
            twiddle_[k] = {std::cos(angle), std::sin(angle)};
        }
        bitrev_.resize(n);
        std::size_t bits = 0;
        while ((std::size_t{1} << bits) < n) ++bits;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t r = 0;
            for (std::size_t b = 0; b < bits; ++b)
                if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
            bitrev_[i] = r;
        }
    }

    std::size_t size() const { return n_; }

    void forward(std::complex<double>* data) const { transform(data, false); }

    void inverse(std::complex<double>* data) const {
        transform(data, true);
        const double scale = 1.0 / static_cast<double>(n_);
        for (std::size_t i = 0; i < n_; ++i) data[i] *= scale;
    }

    // Signed frequency index: 0, 1, ..., n/2-1, -n/2, ..., -1.
    std::ptrdiff_t signed_index(std::size_t k) const {
        return k < n_ / 2 ? static_cast<std::ptrdiff_t>(k)
                          : static_cast<std::ptrdiff_t>(k) - static_cast<std::ptrdiff_t>(n_);
    }

private:
    void transform(std::complex<double>* a, bool invert) const {
        for (std::size_t i = 0; i < n_; ++i) {
            const std::size_t j = bitrev_[i];
            if (i < j) std::swap(a[i], a[j]);
        }
        for (std::size_t len = 2; len <= n_; len <<= 1) {
            const std::size_t step = n_ / len;
            for (std::size_t i = 0; i < n_; i += len) {
                for (std::size_t k = 0; k < len / 2; ++k) {
                    std::complex<double> w = twiddle_[k * step];
                    if (invert) w = std::conj(w);
                    const std::complex<double> u = a[i + k];
                    const std::complex<double> v = a[i + k + len / 2] * w;
                    a[i + k] = u + v;
                    a[i + k + len / 2] = u - v;
                }
            }
        }
    }

    std::size_t n_;
    std::vector<std::complex<double>> twiddle_;
    std::vector<std::size_t> bitrev_;
};

}  // namespace sp2n
