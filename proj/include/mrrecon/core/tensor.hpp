// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mrrecon/core/errors.hpp"

namespace mrrecon {

/// Dense row-major double tensor. Complex data is stored as a trailing
/// dimension of size 2 holding (real, imag) pairs.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(count(shape_)), 0.0);
    }

    Tensor(std::vector<int64_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        require(static_cast<int64_t>(data_.size()) == count(shape_),
                "tensor data size does not match shape");
    }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int64_t> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    int rank() const { return static_cast<int>(shape_.size()); }
    const std::vector<int64_t>& shape() const { return shape_; }

    int64_t dim(int i) const {
        if (i < 0) i += rank();
        return shape_.at(static_cast<size_t>(i));
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    /// Multi-index access, e.g. t.at({f, c, y, x}).
    double& at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(offset(idx))]; }
    double at(std::initializer_list<int64_t> idx) const { return data_[static_cast<size_t>(offset(idx))]; }
    double& at(std::span<const int64_t> idx) { return data_[static_cast<size_t>(offset(idx))]; }
    double at(std::span<const int64_t> idx) const { return data_[static_cast<size_t>(offset(idx))]; }

    int64_t offset(std::initializer_list<int64_t> idx) const {
        return offset(std::span<const int64_t>(idx.begin(), idx.size()));
    }

    int64_t offset(std::span<const int64_t> idx) const {
        require(static_cast<int>(idx.size()) == rank(), "index rank mismatch");
        int64_t off = 0;
        int d = 0;
        for (int64_t i : idx) {
            off = off * shape_[static_cast<size_t>(d)] + i;
            ++d;
        }
        return off;
    }

    /// Reinterpret with a new shape of identical element count.
    Tensor reshaped(std::vector<int64_t> shape) const {
        require(count(shape) == size(), "reshape changes element count");
        return Tensor(std::move(shape), data_);
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    double max() const {
        double m = -std::numeric_limits<double>::infinity();
        for (double v : data_) m = std::max(m, v);
        return m;
    }

    double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

    double norm2() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (int i = 0; i < rank(); ++i) os << (i ? "," : "") << shape_[static_cast<size_t>(i)];
        os << ']';
        return os.str();
    }

    static int64_t count(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t d : shape) {
            require(d >= 0, "negative dimension");
            n *= d;
        }
        return n;
    }

private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "shape mismatch in max_abs_diff");
    double m = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// ||a - b|| / max(||b||, tiny) — relative L2 error.
inline double rel_error(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "shape mismatch in rel_error");
    double num = 0.0, den = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        num += d * d;
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

} // namespace mrrecon
