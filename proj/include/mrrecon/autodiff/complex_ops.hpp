// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "mrrecon/autodiff/tape.hpp"
#include "mrrecon/core/fft.hpp"

// Differentiable ops on complex tensors stored as a trailing dimension of 2
// (real, imaginary). Gradients are plain real-valued partials with respect to
// both components, which is what finite differences measure.

namespace mrrecon::ad {

namespace detail {

inline void check_complex(const Tensor& t, const char* who) {
    require(t.rank() >= 3 && t.dim(t.rank() - 1) == 2, who);
}

/// (h, w) of the trailing spatial plane and the number of such planes.
struct PlaneGeom {
    int64_t batch, h, w;
};

inline PlaneGeom plane_geom(const Tensor& t) {
    const int64_t r = t.rank();
    PlaneGeom g{1, t.dim(r - 3), t.dim(r - 2)};
    for (int64_t i = 0; i < r - 3; ++i) g.batch *= t.dim(i);
    return g;
}

} // namespace detail

/// Centered orthonormal 2D FFT over every [H, W] plane. The transform is
/// unitary, so the backward pass applies the opposite direction to the
/// upstream gradient.
inline Var cfft2(Tape& t, Var x, bool inverse) {
    detail::check_complex(t.val(x), "cfft2: expected [..., H, W, 2]");
    const detail::PlaneGeom g = detail::plane_geom(t.val(x));
    Tensor out = t.val(x);
    fft::fft2_centered(reinterpret_cast<std::complex<double>*>(out.data()), g.batch,
                  static_cast<int>(g.h), static_cast<int>(g.w), inverse);
    return detail::make_node(t, std::move(out), {x}, [x, g, inverse](Tape& tp, const Tensor& gr) {
        Tensor gt = gr;
        fft::fft2_centered(reinterpret_cast<std::complex<double>*>(gt.data()), g.batch,
                      static_cast<int>(g.h), static_cast<int>(g.w), !inverse);
        detail::accumulate(tp, x, gt);
    });
}

/// Multiplies every complex entry by the real mask value at its [H, W] site.
inline Var mask_mul(Tape& t, Var x, const Tensor& mask) {
    detail::check_complex(t.val(x), "mask_mul: expected [..., H, W, 2]");
    const detail::PlaneGeom g = detail::plane_geom(t.val(x));
    require(mask.rank() == 2 && mask.dim(0) == g.h && mask.dim(1) == g.w, "mask_mul: mask shape");
    Tensor out = t.val(x);
    const int64_t hw = g.h * g.w;
    for (int64_t b = 0; b < g.batch; ++b)
        for (int64_t p = 0; p < hw; ++p) {
            out[(b * hw + p) * 2 + 0] *= mask[p];
            out[(b * hw + p) * 2 + 1] *= mask[p];
        }
    Tensor m = mask;
    return detail::make_node(t, std::move(out), {x}, [x, g, m](Tape& tp, const Tensor& gr) {
        Tensor& gx = tp.grad(x);
        const int64_t hw = g.h * g.w;
        for (int64_t b = 0; b < g.batch; ++b)
            for (int64_t p = 0; p < hw; ++p) {
                gx[(b * hw + p) * 2 + 0] += gr[(b * hw + p) * 2 + 0] * m[p];
                gx[(b * hw + p) * 2 + 1] += gr[(b * hw + p) * 2 + 1] * m[p];
            }
    });
}

/// Complex conjugate.
inline Var conj(Tape& t, Var x) {
    detail::check_complex(t.val(x), "conj: expected [..., 2]");
    Tensor out = t.val(x);
    for (int64_t i = 1; i < out.size(); i += 2) out[i] = -out[i];
    return detail::make_node(t, std::move(out), {x}, [x](Tape& tp, const Tensor& gr) {
        Tensor& gx = tp.grad(x);
        for (int64_t i = 0; i < gx.size(); i += 2) {
            gx[i] += gr[i];
            gx[i + 1] -= gr[i + 1];
        }
    });
}

/// out[t] = sum_c maps[c] * x[t, c] (complex product). Callers pass maps
/// already conjugated when they want the SENSE reduce.
inline Var coil_reduce(Tape& t, Var x, Var maps) {
    const Tensor& vx = t.val(x);
    const Tensor& vm = t.val(maps);
    require(vx.rank() == 5 && vx.dim(4) == 2, "coil_reduce: expected [T, C, H, W, 2]");
    require(vm.rank() == 4 && vm.dim(3) == 2, "coil_reduce: expected maps [C, H, W, 2]");
    require(vx.dim(1) == vm.dim(0) && vx.dim(2) == vm.dim(1) && vx.dim(3) == vm.dim(2),
            "coil_reduce: coil or spatial mismatch");
    const int64_t T = vx.dim(0), C = vx.dim(1), hw = vx.dim(2) * vx.dim(3);
    Tensor out({T, vx.dim(2), vx.dim(3), 2});
    for (int64_t f = 0; f < T; ++f)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t p = 0; p < hw; ++p) {
                const double xr = vx[((f * C + c) * hw + p) * 2 + 0];
                const double xi = vx[((f * C + c) * hw + p) * 2 + 1];
                const double mr = vm[(c * hw + p) * 2 + 0];
                const double mi = vm[(c * hw + p) * 2 + 1];
                out[(f * hw + p) * 2 + 0] += mr * xr - mi * xi;
                out[(f * hw + p) * 2 + 1] += mr * xi + mi * xr;
            }
    return detail::make_node(t, std::move(out), {x, maps},
                             [x, maps, T, C, hw](Tape& tp, const Tensor& gr) {
        const Tensor& vx = tp.val(x);
        const Tensor& vm = tp.val(maps);
        const bool nx = tp.needs_grad(x), nm = tp.needs_grad(maps);
        for (int64_t f = 0; f < T; ++f)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t p = 0; p < hw; ++p) {
                    const double gr_ = gr[(f * hw + p) * 2 + 0];
                    const double gi_ = gr[(f * hw + p) * 2 + 1];
                    if (nx) {
                        const double mr = vm[(c * hw + p) * 2 + 0];
                        const double mi = vm[(c * hw + p) * 2 + 1];
                        // d(out)/d(x) is multiplication by m; adjoint is conj(m).
                        tp.grad(x)[((f * C + c) * hw + p) * 2 + 0] += mr * gr_ + mi * gi_;
                        tp.grad(x)[((f * C + c) * hw + p) * 2 + 1] += mr * gi_ - mi * gr_;
                    }
                    if (nm) {
                        const double xr = vx[((f * C + c) * hw + p) * 2 + 0];
                        const double xi = vx[((f * C + c) * hw + p) * 2 + 1];
                        tp.grad(maps)[(c * hw + p) * 2 + 0] += xr * gr_ + xi * gi_;
                        tp.grad(maps)[(c * hw + p) * 2 + 1] += xr * gi_ - xi * gr_;
                    }
                }
    });
}

/// out[t, c] = maps[c] * img[t] (complex product), the SENSE expand.
inline Var coil_expand(Tape& t, Var img, Var maps) {
    const Tensor& vi = t.val(img);
    const Tensor& vm = t.val(maps);
    require(vi.rank() == 4 && vi.dim(3) == 2, "coil_expand: expected [T, H, W, 2]");
    require(vm.rank() == 4 && vm.dim(3) == 2, "coil_expand: expected maps [C, H, W, 2]");
    require(vi.dim(1) == vm.dim(1) && vi.dim(2) == vm.dim(2), "coil_expand: spatial mismatch");
    const int64_t T = vi.dim(0), C = vm.dim(0), hw = vi.dim(1) * vi.dim(2);
    Tensor out({T, C, vi.dim(1), vi.dim(2), 2});
    for (int64_t f = 0; f < T; ++f)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t p = 0; p < hw; ++p) {
                const double xr = vi[(f * hw + p) * 2 + 0];
                const double xi = vi[(f * hw + p) * 2 + 1];
                const double mr = vm[(c * hw + p) * 2 + 0];
                const double mi = vm[(c * hw + p) * 2 + 1];
                out[((f * C + c) * hw + p) * 2 + 0] = mr * xr - mi * xi;
                out[((f * C + c) * hw + p) * 2 + 1] = mr * xi + mi * xr;
            }
    return detail::make_node(t, std::move(out), {img, maps},
                             [img, maps, T, C, hw](Tape& tp, const Tensor& gr) {
        const Tensor& vi = tp.val(img);
        const Tensor& vm = tp.val(maps);
        const bool ni = tp.needs_grad(img), nm = tp.needs_grad(maps);
        for (int64_t f = 0; f < T; ++f)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t p = 0; p < hw; ++p) {
                    const double gr_ = gr[((f * C + c) * hw + p) * 2 + 0];
                    const double gi_ = gr[((f * C + c) * hw + p) * 2 + 1];
                    if (ni) {
                        const double mr = vm[(c * hw + p) * 2 + 0];
                        const double mi = vm[(c * hw + p) * 2 + 1];
                        tp.grad(img)[(f * hw + p) * 2 + 0] += mr * gr_ + mi * gi_;
                        tp.grad(img)[(f * hw + p) * 2 + 1] += mr * gi_ - mi * gr_;
                    }
                    if (nm) {
                        const double xr = vi[(f * hw + p) * 2 + 0];
                        const double xi = vi[(f * hw + p) * 2 + 1];
                        tp.grad(maps)[(c * hw + p) * 2 + 0] += xr * gr_ + xi * gi_;
                        tp.grad(maps)[(c * hw + p) * 2 + 1] += xr * gi_ - xi * gr_;
                    }
                }
    });
}

/// Elementwise complex magnitude; output drops the trailing component dim.
/// Gradient at an exactly zero entry is defined as zero.
inline Var magnitude(Tape& t, Var x) {
    detail::check_complex(t.val(x), "magnitude: expected [..., 2]");
    const Tensor& vx = t.val(x);
    std::vector<int64_t> shape(vx.shape().begin(), vx.shape().end() - 1);
    const int64_t n = vx.size() / 2;
    Tensor out(shape);
    for (int64_t i = 0; i < n; ++i)
        out[i] = std::sqrt(vx[2 * i] * vx[2 * i] + vx[2 * i + 1] * vx[2 * i + 1]);
    const int32_t out_id = static_cast<int32_t>(t.size());
    if (!t.needs_grad(x)) return t.push(std::move(out), false, nullptr);
    return t.push(std::move(out), true, [x, out_id, n](Tape& tp) {
        const Tensor& gr = tp.grad(Var{out_id});
        const Tensor& r = tp.val(Var{out_id});
        const Tensor& vx = tp.val(x);
        Tensor& gx = tp.grad(x);
        for (int64_t i = 0; i < n; ++i) {
            if (r[i] == 0.0) continue;
            gx[2 * i] += gr[i] * vx[2 * i] / r[i];
            gx[2 * i + 1] += gr[i] * vx[2 * i + 1] / r[i];
        }
    });
}

/// Principal-value phase via two-argument arctangent; phase of an exactly
/// zero entry is 0 with zero gradient.
inline Var phase(Tape& t, Var x) {
    detail::check_complex(t.val(x), "phase: expected [..., 2]");
    const Tensor& vx = t.val(x);
    std::vector<int64_t> shape(vx.shape().begin(), vx.shape().end() - 1);
    const int64_t n = vx.size() / 2;
    Tensor out(shape);
    for (int64_t i = 0; i < n; ++i) {
        const double re = vx[2 * i], im = vx[2 * i + 1];
        out[i] = (re == 0.0 && im == 0.0) ? 0.0 : std::atan2(im, re);
    }
    return detail::make_node(t, std::move(out), {x}, [x, n](Tape& tp, const Tensor& gr) {
        const Tensor& vx = tp.val(x);
        Tensor& gx = tp.grad(x);
        for (int64_t i = 0; i < n; ++i) {
            const double re = vx[2 * i], im = vx[2 * i + 1];
            const double q = re * re + im * im;
            if (q == 0.0) continue;
            gx[2 * i] += gr[i] * (-im / q);
            gx[2 * i + 1] += gr[i] * (re / q);
        }
    });
}

/// Root-sum-of-squares coil combine: [C, H, W, 2] -> [H, W].
inline Var rss_combine(Tape& t, Var x) {
    const Tensor& vx = t.val(x);
    require(vx.rank() == 4 && vx.dim(3) == 2, "rss_combine: expected [C, H, W, 2]");
    const int64_t C = vx.dim(0), hw = vx.dim(1) * vx.dim(2);
    Tensor out({vx.dim(1), vx.dim(2)});
    for (int64_t p = 0; p < hw; ++p) {
        double q = 0.0;
        for (int64_t c = 0; c < C; ++c) {
            const double re = vx[(c * hw + p) * 2 + 0], im = vx[(c * hw + p) * 2 + 1];
            q += re * re + im * im;
        }
        out[p] = std::sqrt(q);
    }
    const int32_t out_id = static_cast<int32_t>(t.size());
    if (!t.needs_grad(x)) return t.push(std::move(out), false, nullptr);
    return t.push(std::move(out), true, [x, out_id, C, hw](Tape& tp) {
        const Tensor& gr = tp.grad(Var{out_id});
        const Tensor& r = tp.val(Var{out_id});
        const Tensor& vx = tp.val(x);
        Tensor& gx = tp.grad(x);
        for (int64_t p = 0; p < hw; ++p) {
            if (r[p] == 0.0) continue;
            const double s = gr[p] / r[p];
            for (int64_t c = 0; c < C; ++c) {
                gx[(c * hw + p) * 2 + 0] += s * vx[(c * hw + p) * 2 + 0];
                gx[(c * hw + p) * 2 + 1] += s * vx[(c * hw + p) * 2 + 1];
            }
        }
    });
}

/// Normalizes the coil dimension so sum_c |out_c|^2 = q/(q + eps) ~ 1 at
/// every pixel. The eps floor keeps the map smooth through zero pixels.
inline Var rss_normalize(Tape& t, Var maps, double eps = 1e-12) {
    const Tensor& vm = t.val(maps);
    require(vm.rank() == 4 && vm.dim(3) == 2, "rss_normalize: expected [C, H, W, 2]");
    const int64_t C = vm.dim(0), hw = vm.dim(1) * vm.dim(2);
    Tensor out = vm;
    for (int64_t p = 0; p < hw; ++p) {
        double q = eps;
        for (int64_t c = 0; c < C; ++c) {
            const double re = vm[(c * hw + p) * 2 + 0], im = vm[(c * hw + p) * 2 + 1];
            q += re * re + im * im;
        }
        const double inv_r = 1.0 / std::sqrt(q);
        for (int64_t c = 0; c < C; ++c) {
            out[(c * hw + p) * 2 + 0] *= inv_r;
            out[(c * hw + p) * 2 + 1] *= inv_r;
        }
    }
    return detail::make_node(t, std::move(out), {maps},
                             [maps, C, hw, eps](Tape& tp, const Tensor& gr) {
        const Tensor& vm = tp.val(maps);
        Tensor& gm = tp.grad(maps);
        for (int64_t p = 0; p < hw; ++p) {
            double q = eps, dot = 0.0;
            for (int64_t c = 0; c < C; ++c) {
                const double re = vm[(c * hw + p) * 2 + 0], im = vm[(c * hw + p) * 2 + 1];
                q += re * re + im * im;
                dot += gr[(c * hw + p) * 2 + 0] * re + gr[(c * hw + p) * 2 + 1] * im;
            }
            const double inv_r = 1.0 / std::sqrt(q);
            const double inv_r3 = inv_r * inv_r * inv_r;
            for (int64_t c = 0; c < C; ++c) {
                gm[(c * hw + p) * 2 + 0] +=
                    gr[(c * hw + p) * 2 + 0] * inv_r - vm[(c * hw + p) * 2 + 0] * dot * inv_r3;
                gm[(c * hw + p) * 2 + 1] +=
                    gr[(c * hw + p) * 2 + 1] * inv_r - vm[(c * hw + p) * 2 + 1] * dot * inv_r3;
            }
        }
    });
}

/// Selects index i along dim 0, dropping that dimension.
inline Var slice_dim0(Tape& t, Var x, int64_t i) {
    const Tensor& vx = t.val(x);
    require(vx.rank() >= 2, "slice_dim0: rank too small");
    require(i >= 0 && i < vx.dim(0), "slice_dim0: index out of range");
    std::vector<int64_t> shape(vx.shape().begin() + 1, vx.shape().end());
    const int64_t stride = vx.size() / vx.dim(0);
    Tensor out(shape);
    std::copy(vx.data() + i * stride, vx.data() + (i + 1) * stride, out.data());
    return detail::make_node(t, std::move(out), {x}, [x, i, stride](Tape& tp, const Tensor& gr) {
        Tensor& gx = tp.grad(x);
        for (int64_t j = 0; j < stride; ++j) gx[i * stride + j] += gr[j];
    });
}

/// [B, H, W, 2] -> [B, 2, H, W]: component pairs become channel planes.
inline Var split_complex_channels(Tape& t, Var x) {
    const Tensor& vx = t.val(x);
    require(vx.rank() == 4 && vx.dim(3) == 2, "split_complex_channels: expected [B, H, W, 2]");
    const int64_t B = vx.dim(0), hw = vx.dim(1) * vx.dim(2);
    Tensor out({B, 2, vx.dim(1), vx.dim(2)});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t p = 0; p < hw; ++p) {
            out[(b * 2 + 0) * hw + p] = vx[(b * hw + p) * 2 + 0];
            out[(b * 2 + 1) * hw + p] = vx[(b * hw + p) * 2 + 1];
        }
    return detail::make_node(t, std::move(out), {x}, [x, B, hw](Tape& tp, const Tensor& gr) {
        Tensor& gx = tp.grad(x);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t p = 0; p < hw; ++p) {
                gx[(b * hw + p) * 2 + 0] += gr[(b * 2 + 0) * hw + p];
                gx[(b * hw + p) * 2 + 1] += gr[(b * 2 + 1) * hw + p];
            }
    });
}

/// [B, 2, H, W] -> [B, H, W, 2], inverse of split_complex_channels.
inline Var merge_complex_channels(Tape& t, Var x) {
    const Tensor& vx = t.val(x);
    require(vx.rank() == 4 && vx.dim(1) == 2, "merge_complex_channels: expected [B, 2, H, W]");
    const int64_t B = vx.dim(0), hw = vx.dim(2) * vx.dim(3);
    Tensor out({B, vx.dim(2), vx.dim(3), 2});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t p = 0; p < hw; ++p) {
            out[(b * hw + p) * 2 + 0] = vx[(b * 2 + 0) * hw + p];
            out[(b * hw + p) * 2 + 1] = vx[(b * 2 + 1) * hw + p];
        }
    return detail::make_node(t, std::move(out), {x}, [x, B, hw](Tape& tp, const Tensor& gr) {
        Tensor& gx = tp.grad(x);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t p = 0; p < hw; ++p) {
                gx[(b * 2 + 0) * hw + p] += gr[(b * hw + p) * 2 + 0];
                gx[(b * 2 + 1) * hw + p] += gr[(b * hw + p) * 2 + 1];
            }
    });
}

/// [T, H, W, 2] -> [1, 2T, H, W]: adjacent frames stacked as channel pairs
/// (real plane then imaginary plane per frame).
inline Var complex_to_channels(Tape& t, Var x) {
    const Tensor& vx = t.val(x);
    require(vx.rank() == 4 && vx.dim(3) == 2, "complex_to_channels: expected [T, H, W, 2]");
    Var split = split_complex_channels(t, x);
    return reshape(t, split, {1, vx.dim(0) * 2, vx.dim(1), vx.dim(2)});
}

/// [1, 2T, H, W] -> [T, H, W, 2], inverse of complex_to_channels.
inline Var channels_to_complex(Tape& t, Var x) {
    const Tensor& vx = t.val(x);
    require(vx.rank() == 4 && vx.dim(0) == 1 && vx.dim(1) % 2 == 0,
            "channels_to_complex: expected [1, 2T, H, W]");
    Var r = reshape(t, x, {vx.dim(1) / 2, 2, vx.dim(2), vx.dim(3)});
    return merge_complex_channels(t, r);
}

} // namespace mrrecon::ad
