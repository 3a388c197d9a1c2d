// SPDX-License-Identifier: Apache-2.0
#include "trainscan/fft.hpp"

#include "trainscan/error.hpp"

#include <fftw3.h>

#include <mutex>
#include <utility>

namespace trainscan::dsp {

namespace {
// the FFTW planner is not thread-safe; execution is
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
} // namespace

RealFft::RealFft(std::size_t size) : size_(size) {
    if (size < 2) {
        throw Error(ErrorCode::invalid_argument, "FFT size must be at least 2");
    }
    real_ = fftw_alloc_real(size_);
    auto* cplx = fftw_alloc_complex(size_ / 2 + 1);
    complex_ = cplx;
    if (real_ == nullptr || cplx == nullptr) {
        release();
        throw std::bad_alloc();
    }
    std::lock_guard lock(planner_mutex());
    plan_forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(size_), real_, cplx, FFTW_ESTIMATE);
    plan_inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(size_), cplx, real_, FFTW_ESTIMATE);
}

RealFft::~RealFft() { release(); }

RealFft::RealFft(RealFft&& other) noexcept
    : size_(std::exchange(other.size_, 0)),
      real_(std::exchange(other.real_, nullptr)),
      complex_(std::exchange(other.complex_, nullptr)),
      plan_forward_(std::exchange(other.plan_forward_, nullptr)),
      plan_inverse_(std::exchange(other.plan_inverse_, nullptr)) {}

RealFft& RealFft::operator=(RealFft&& other) noexcept {
    if (this != &other) {
        release();
        size_ = std::exchange(other.size_, 0);
        real_ = std::exchange(other.real_, nullptr);
        complex_ = std::exchange(other.complex_, nullptr);
        plan_forward_ = std::exchange(other.plan_forward_, nullptr);
        plan_inverse_ = std::exchange(other.plan_inverse_, nullptr);
    }
    return *this;
}

void RealFft::release() noexcept {
    if (plan_forward_ != nullptr || plan_inverse_ != nullptr) {
        std::lock_guard lock(planner_mutex());
        if (plan_forward_ != nullptr) {
            fftw_destroy_plan(static_cast<fftw_plan>(plan_forward_));
        }
        if (plan_inverse_ != nullptr) {
            fftw_destroy_plan(static_cast<fftw_plan>(plan_inverse_));
        }
    }
    plan_forward_ = plan_inverse_ = nullptr;
    fftw_free(real_);
    fftw_free(complex_);
    real_ = nullptr;
    complex_ = nullptr;
}

std::span<std::complex<double>> RealFft::spectrum() {
    // fftw_complex is layout-compatible with std::complex<double>
    return {reinterpret_cast<std::complex<double>*>(complex_), size_ / 2 + 1};
}

void RealFft::forward() { fftw_execute(static_cast<fftw_plan>(plan_forward_)); }

void RealFft::inverse() { fftw_execute(static_cast<fftw_plan>(plan_inverse_)); }

} // namespace trainscan::dsp
