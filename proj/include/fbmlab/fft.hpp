#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <new>
#include <span>
#include <utility>
#include <vector>

namespace fbmlab {

/// SIMD-aligned complex buffer owned through fftw_malloc. All transforms run
/// on these buffers so FFTW always sees the alignment the plan was made for,
/// which keeps results bit-identical from call to call.
class ComplexBuffer {
public:
    ComplexBuffer() = default;
    explicit ComplexBuffer(std::size_t n)
        : data_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n == 0 ? 1 : n)))),
          size_(n) {
        if (!data_) {
            throw std::bad_alloc();
        }
        for (std::size_t i = 0; i < n; ++i) {
            data_[i][0] = 0.0;
            data_[i][1] = 0.0;
        }
    }
    ComplexBuffer(const ComplexBuffer& other) : ComplexBuffer(other.size_) {
        for (std::size_t i = 0; i < size_; ++i) {
            data_[i][0] = other.data_[i][0];
            data_[i][1] = other.data_[i][1];
        }
    }
    ComplexBuffer(ComplexBuffer&& other) noexcept
        : data_(std::exchange(other.data_, nullptr)), size_(std::exchange(other.size_, 0)) {}
    ComplexBuffer& operator=(ComplexBuffer other) noexcept {
        std::swap(data_, other.data_);
        std::swap(size_, other.size_);
        return *this;
    }
    ~ComplexBuffer() {
        if (data_) {
            fftw_free(data_);
        }
    }

    std::size_t size() const { return size_; }
    double& re(std::size_t i) { return data_[i][0]; }
    double& im(std::size_t i) { return data_[i][1]; }
    double re(std::size_t i) const { return data_[i][0]; }
    double im(std::size_t i) const { return data_[i][1]; }
    void set(std::size_t i, double r, double m) {
        data_[i][0] = r;
        data_[i][1] = m;
    }
    fftw_complex* raw() { return data_; }

private:
    fftw_complex* data_ = nullptr;
    std::size_t size_ = 0;
};

namespace detail {

class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    // Plan creation is not thread-safe in FFTW; execution with the new-array
    // interface is.
    fftw_plan get(const std::vector<int>& dims, int sign) {
        std::lock_guard lock(mutex_);
        auto key = std::make_pair(dims, sign);
        if (auto it = plans_.find(key); it != plans_.end()) {
            return it->second;
        }
        std::size_t total = 1;
        for (int d : dims) {
            total *= static_cast<std::size_t>(d);
        }
        ComplexBuffer scratch(total);
        fftw_plan plan = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), scratch.raw(),
                                       scratch.raw(), sign, FFTW_ESTIMATE);
        plans_.emplace(key, plan);
        return plan;
    }

    ~PlanCache() {
        for (auto& [key, plan] : plans_) {
            fftw_destroy_plan(plan);
        }
    }

private:
    std::mutex mutex_;
    std::map<std::pair<std::vector<int>, int>, fftw_plan> plans_;
};

} // namespace detail

/// In-place unnormalized DFT over a row-major array with the given extents.
inline void fft_inplace(ComplexBuffer& buffer, std::span<const std::size_t> extents, bool forward) {
    std::vector<int> dims(extents.begin(), extents.end());
    fftw_plan plan = detail::PlanCache::instance().get(dims, forward ? FFTW_FORWARD : FFTW_BACKWARD);
    fftw_execute_dft(plan, buffer.raw(), buffer.raw());
}

inline void fft_inplace(ComplexBuffer& buffer, bool forward) {
    const std::size_t n = buffer.size();
    fft_inplace(buffer, std::span<const std::size_t>(&n, 1), forward);
}

} // namespace fbmlab
