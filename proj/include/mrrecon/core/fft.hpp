// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "mrrecon/core/errors.hpp"

namespace mrrecon::fft {

constexpr double kPi = 3.14159265358979323846;

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

inline int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

/// In-place unnormalized radix-2 FFT. Twiddles are computed in double and
/// cast to T so the float instantiation keeps near-double twiddle accuracy.
template <class T>
void transform_pow2(std::complex<T>* x, int n, bool inverse) {
    // bit reversal permutation
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * kPi / len * (inverse ? 1.0 : -1.0);
        for (int i = 0; i < n; i += len) {
            for (int k = 0; k < len / 2; ++k) {
                const std::complex<T> w(static_cast<T>(std::cos(ang * k)),
                                        static_cast<T>(std::sin(ang * k)));
                const std::complex<T> u = x[i + k];
                const std::complex<T> v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
            }
        }
    }
}

/// In-place unnormalized FFT for arbitrary n (Bluestein chirp-z for non
/// powers of two).
template <class T>
void transform(std::complex<T>* x, int n, bool inverse) {
    if (n <= 1) return;
    if (is_pow2(n)) {
        transform_pow2(x, n, inverse);
        return;
    }
    if (inverse) {
        for (int i = 0; i < n; ++i) x[i] = std::conj(x[i]);
        transform<T>(x, n, false);
        for (int i = 0; i < n; ++i) x[i] = std::conj(x[i]);
        return;
    }
    // Bluestein: X[k] = w[k] * ((x*w) (*) conj-chirp)[k], w[j] = exp(-i*pi*j^2/n).
    const int m = next_pow2(2 * n - 1);
    std::vector<std::complex<T>> chirp(static_cast<size_t>(n));
    for (int j = 0; j < n; ++j) {
        // j^2 mod 2n keeps the phase argument small for large j
        const long long j2 = (static_cast<long long>(j) * j) % (2LL * n);
        const double ang = kPi * static_cast<double>(j2) / n;
        chirp[static_cast<size_t>(j)] =
            std::complex<T>(static_cast<T>(std::cos(ang)), static_cast<T>(-std::sin(ang)));
    }
    std::vector<std::complex<T>> a(static_cast<size_t>(m)), b(static_cast<size_t>(m));
    for (int j = 0; j < n; ++j) a[static_cast<size_t>(j)] = x[j] * chirp[static_cast<size_t>(j)];
    b[0] = std::conj(chirp[0]);
    for (int j = 1; j < n; ++j)
        b[static_cast<size_t>(j)] = b[static_cast<size_t>(m - j)] = std::conj(chirp[static_cast<size_t>(j)]);
    transform_pow2(a.data(), m, false);
    transform_pow2(b.data(), m, false);
    for (int j = 0; j < m; ++j) a[static_cast<size_t>(j)] *= b[static_cast<size_t>(j)];
    transform_pow2(a.data(), m, true);
    const T inv_m = static_cast<T>(1.0 / m);
    for (int k = 0; k < n; ++k) x[k] = a[static_cast<size_t>(k)] * inv_m * chirp[static_cast<size_t>(k)];
}

/// fftshift index map: element i of the input lands at (i + floor(n/2)) mod n,
/// so the DC bin moves to the array center. ifftshift is the inverse map.
inline int shift_index(int i, int n) { return (i + n / 2) % n; }
inline int unshift_index(int i, int n) { return (i + n - n / 2) % n; }

/// Centered orthonormal 2D FFT over the trailing [h, w] plane of a
/// [batch, h, w] complex buffer: ifftshift -> transform -> fftshift, scaled
/// by 1/sqrt(h*w) in both directions (Parseval-preserving).
template <class T>
void fft2_centered(std::complex<T>* data, int64_t batch, int h, int w, bool inverse) {
    require(h >= 1 && w >= 1, "fft2_centered: empty plane");
    const int64_t plane = static_cast<int64_t>(h) * w;
    std::vector<std::complex<T>> buf(static_cast<size_t>(plane));
    std::vector<std::complex<T>> col(static_cast<size_t>(h));
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(h) * w));
    for (int64_t bidx = 0; bidx < batch; ++bidx) {
        std::complex<T>* p = data + bidx * plane;
        // ifftshift both axes
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                buf[static_cast<size_t>(y) * w + x] =
                    p[static_cast<int64_t>((y + h / 2) % h) * w + (x + w / 2) % w];
        // rows
        for (int y = 0; y < h; ++y) transform(buf.data() + static_cast<int64_t>(y) * w, w, inverse);
        // columns
        for (int x = 0; x < w; ++x) {
            for (int y = 0; y < h; ++y) col[static_cast<size_t>(y)] = buf[static_cast<size_t>(y) * w + x];
            transform(col.data(), h, inverse);
            for (int y = 0; y < h; ++y) buf[static_cast<size_t>(y) * w + x] = col[static_cast<size_t>(y)];
        }
        // fftshift both axes and scale
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                p[static_cast<int64_t>(shift_index(y, h)) * w + shift_index(x, w)] =
                    buf[static_cast<size_t>(y) * w + x] * scale;
    }
}

} // namespace mrrecon::fft
