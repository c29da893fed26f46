// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "mrrecon/core/errors.hpp"
#include "mrrecon/core/fft.hpp"
#include "mrrecon/core/tensor.hpp"

namespace mrrecon {

// Complex tensors carry a trailing dimension of size 2 = (real, imag).

inline void validate_complex_image(const Tensor& t, const char* what) {
    require(t.rank() >= 3, std::string(what) + ": expected [..., H, W, 2]");
    require(t.dim(-1) == 2, std::string(what) + ": trailing dim must be the (re, im) pair");
    require(t.dim(-2) >= 8 && t.dim(-3) >= 8, std::string(what) + ": spatial dims must be >= 8");
    require(t.all_finite(), std::string(what) + ": non-finite values");
}

/// Adjacent multi-coil k-space stack, shaped [T, C, H, W, 2]. The central
/// adjacent index carries the slice being reconstructed.
struct MultiCoilKSpace {
    Tensor data;
    int64_t central_index = 0;

    MultiCoilKSpace() = default;
    MultiCoilKSpace(Tensor d, int64_t central) : data(std::move(d)), central_index(central) { validate(); }

    int64_t adjacents() const { return data.dim(0); }
    int64_t coils() const { return data.dim(1); }
    int64_t height() const { return data.dim(2); }
    int64_t width() const { return data.dim(3); }

    void validate() const {
        require(data.rank() == 5 && data.dim(4) == 2, "MultiCoilKSpace: expected [T, C, H, W, 2]");
        require(data.dim(0) % 2 == 1, "MultiCoilKSpace: adjacent count must be odd");
        require(central_index == (data.dim(0) - 1) / 2, "MultiCoilKSpace: central index must be (T-1)/2");
        require(data.all_finite(), "MultiCoilKSpace: non-finite values");
    }

    /// The central adjacent slice, [C, H, W, 2].
    Tensor central() const {
        const int64_t plane = coils() * height() * width() * 2;
        Tensor out({coils(), height(), width(), 2});
        const double* src = data.data() + central_index * plane;
        std::copy(src, src + plane, out.data());
        return out;
    }
};

/// Per-coil complex sensitivity maps, [C, H, W, 2], RSS-normalized on support.
struct SensitivityMaps {
    Tensor data;

    SensitivityMaps() = default;
    explicit SensitivityMaps(Tensor d) : data(std::move(d)) {
        require(data.rank() == 4 && data.dim(3) == 2, "SensitivityMaps: expected [C, H, W, 2]");
    }

    int64_t coils() const { return data.dim(0); }
    int64_t height() const { return data.dim(1); }
    int64_t width() const { return data.dim(2); }
};

namespace detail {

template <class T>
Tensor fft2c_impl(const Tensor& t, bool inverse) {
    const int h = static_cast<int>(t.dim(-3));
    const int w = static_cast<int>(t.dim(-2));
    const int64_t batch = t.size() / (static_cast<int64_t>(h) * w * 2);
    std::vector<std::complex<T>> buf(static_cast<size_t>(batch) * h * w);
    const double* src = t.data();
    for (size_t i = 0; i < buf.size(); ++i)
        buf[i] = std::complex<T>(static_cast<T>(src[2 * i]), static_cast<T>(src[2 * i + 1]));
    fft::fft2_centered(buf.data(), batch, h, w, inverse);
    Tensor out(t.shape());
    double* dst = out.data();
    for (size_t i = 0; i < buf.size(); ++i) {
        dst[2 * i] = static_cast<double>(buf[i].real());
        dst[2 * i + 1] = static_cast<double>(buf[i].imag());
    }
    return out;
}

} // namespace detail

/// Centered orthonormal 2D Fourier transform over the trailing [H, W] plane
/// (low frequencies at the array center). Energy-preserving.
inline Tensor fft2c(const Tensor& img) {
    validate_complex_image(img, "fft2c");
    return detail::fft2c_impl<double>(img, false);
}

/// Exact inverse of fft2c, same conventions.
inline Tensor ifft2c(const Tensor& ksp) {
    validate_complex_image(ksp, "ifft2c");
    return detail::fft2c_impl<double>(ksp, true);
}

/// First column of the centered auto-calibration window of width `acs`:
/// [floor(W/2) - acs/2, floor(W/2) + acs/2), left-biased for odd widths.
inline int64_t acs_start(int64_t width, int64_t acs) { return width / 2 - acs / 2; }

/// Keeps only the `acs_lines` centered columns of the central adjacent slice;
/// everything else (including all non-central adjacents) is zeroed.
inline MultiCoilKSpace extract_acs(const MultiCoilKSpace& ksp, int64_t acs_lines) {
    require(acs_lines >= 0, "extract_acs: negative width");
    require(acs_lines <= ksp.width(), "extract_acs: acs_lines exceeds k-space width");
    const int64_t t0 = ksp.central_index;
    const int64_t c0 = acs_start(ksp.width(), acs_lines);
    Tensor out(ksp.data.shape());
    for (int64_t c = 0; c < ksp.coils(); ++c)
        for (int64_t y = 0; y < ksp.height(); ++y)
            for (int64_t x = c0; x < c0 + acs_lines; ++x) {
                out.at({t0, c, y, x, 0}) = ksp.data.at({t0, c, y, x, 0});
                out.at({t0, c, y, x, 1}) = ksp.data.at({t0, c, y, x, 1});
            }
    MultiCoilKSpace r;
    r.data = std::move(out);
    r.central_index = t0;
    return r;
}

/// Elementwise complex conjugate of the maps; magnitudes (and hence the RSS
/// normalization) are preserved exactly.
inline SensitivityMaps conjugate_maps(const SensitivityMaps& maps) {
    SensitivityMaps out;
    out.data = maps.data;
    double* d = out.data.data();
    for (int64_t i = 1; i < out.data.size(); i += 2) d[i] = -d[i];
    return out;
}

/// SENSE reduce: per adjacent slice, sum_c S'_c * I_c. The maps argument is
/// the pre-conjugated set.
inline Tensor coil_reduce(const Tensor& img_mc, const SensitivityMaps& maps_conj) {
    require(img_mc.rank() == 5 && img_mc.dim(4) == 2, "coil_reduce: expected [T, C, H, W, 2]");
    require(img_mc.dim(1) == maps_conj.coils(), "coil_reduce: coil count mismatch");
    require(img_mc.dim(2) == maps_conj.height() && img_mc.dim(3) == maps_conj.width(),
            "coil_reduce: spatial shape mismatch");
    const int64_t t_n = img_mc.dim(0), c_n = img_mc.dim(1), h = img_mc.dim(2), w = img_mc.dim(3);
    Tensor out({t_n, h, w, 2});
    for (int64_t t = 0; t < t_n; ++t)
        for (int64_t c = 0; c < c_n; ++c)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) {
                    const double ar = img_mc.at({t, c, y, x, 0});
                    const double ai = img_mc.at({t, c, y, x, 1});
                    const double br = maps_conj.data.at({c, y, x, 0});
                    const double bi = maps_conj.data.at({c, y, x, 1});
                    out.at({t, y, x, 0}) += ar * br - ai * bi;
                    out.at({t, y, x, 1}) += ar * bi + ai * br;
                }
    return out;
}

/// SENSE expand: replicate each slice across coils and weight by S_c.
inline Tensor coil_expand(const Tensor& img, const SensitivityMaps& maps) {
    require(img.rank() == 4 && img.dim(3) == 2, "coil_expand: expected [T, H, W, 2]");
    require(img.dim(1) == maps.height() && img.dim(2) == maps.width(),
            "coil_expand: spatial shape mismatch");
    const int64_t t_n = img.dim(0), c_n = maps.coils(), h = img.dim(1), w = img.dim(2);
    Tensor out({t_n, c_n, h, w, 2});
    for (int64_t t = 0; t < t_n; ++t)
        for (int64_t c = 0; c < c_n; ++c)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) {
                    const double ar = img.at({t, y, x, 0});
                    const double ai = img.at({t, y, x, 1});
                    const double br = maps.data.at({c, y, x, 0});
                    const double bi = maps.data.at({c, y, x, 1});
                    out.at({t, c, y, x, 0}) = ar * br - ai * bi;
                    out.at({t, c, y, x, 1}) = ar * bi + ai * br;
                }
    return out;
}

/// Root-sum-of-squares coil combination: sqrt(sum_c |I_c|^2), [C,H,W,2] -> [H,W].
inline Tensor coil_combine_rss(const Tensor& img_mc) {
    require(img_mc.rank() == 4 && img_mc.dim(3) == 2, "coil_combine_rss: expected [C, H, W, 2]");
    require(img_mc.dim(0) >= 1, "coil_combine_rss: need at least one coil");
    const int64_t c_n = img_mc.dim(0), h = img_mc.dim(1), w = img_mc.dim(2);
    Tensor out({h, w});
    for (int64_t c = 0; c < c_n; ++c)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const double re = img_mc.at({c, y, x, 0});
                const double im = img_mc.at({c, y, x, 1});
                out.at({y, x}) += re * re + im * im;
            }
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(out[i]);
    return out;
}

} // namespace mrrecon
