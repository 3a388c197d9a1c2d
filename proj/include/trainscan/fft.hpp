// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace trainscan::dsp {

/// Real-to-complex / complex-to-real transform of one fixed size, backed by
/// FFTW. Buffers are owned and SIMD-aligned, so repeated calls on equal input
/// give bit-identical output. Not shareable across threads; make one per worker.
class RealFft {
public:
    explicit RealFft(std::size_t size);
    ~RealFft();
    RealFft(RealFft&& other) noexcept;
    RealFft& operator=(RealFft&& other) noexcept;
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    std::size_t size() const { return size_; }
    std::size_t bins() const { return size_ / 2 + 1; }

    /// Input buffer (size()) to fill before forward().
    std::span<double> real() { return {real_, size_}; }
    /// Spectrum buffer (bins()) filled by forward(), consumed by inverse().
    std::span<std::complex<double>> spectrum();

    void forward();
    /// Unnormalized inverse: real() receives size() times the signal.
    void inverse();

private:
    void release() noexcept;

    std::size_t size_ = 0;
    double* real_ = nullptr;
    void* complex_ = nullptr;
    void* plan_forward_ = nullptr;
    void* plan_inverse_ = nullptr;
};

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_power_of_two(std::size_t n) {
    std::size_t p = 1;
    while (p < n) {
        p <<= 1;
    }
    return p;
}

} // namespace trainscan::dsp
