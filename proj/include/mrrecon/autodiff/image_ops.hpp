// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mrrecon/autodiff/tape.hpp"

// Differentiable image ops on [B, C, H, W] tensors.

namespace mrrecon::ad {

namespace detail {

struct ConvGeom {
    int64_t b, cin, h, w;
    int64_t cout, kh, kw;
    int64_t stride, pad;
    int64_t oh, ow;
};

/// col[(ci*kh + ky)*kw + kx, oy*ow + ox] = x_b[ci, oy*s + ky - p, ox*s + kx - p], 0 outside.
inline void im2col(const double* xb, const ConvGeom& g, double* col) {
    const int64_t cols = g.oh * g.ow;
    for (int64_t ci = 0; ci < g.cin; ++ci)
        for (int64_t ky = 0; ky < g.kh; ++ky)
            for (int64_t kx = 0; kx < g.kw; ++kx) {
                double* row = col + ((ci * g.kh + ky) * g.kw + kx) * cols;
                for (int64_t oy = 0; oy < g.oh; ++oy) {
                    const int64_t iy = oy * g.stride + ky - g.pad;
                    for (int64_t ox = 0; ox < g.ow; ++ox) {
                        const int64_t ix = ox * g.stride + kx - g.pad;
                        row[oy * g.ow + ox] =
                            (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w)
                                ? xb[(ci * g.h + iy) * g.w + ix]
                                : 0.0;
                    }
                }
            }
}

/// Scatter-add transpose of im2col.
inline void col2im_add(const double* col, const ConvGeom& g, double* gxb) {
    const int64_t cols = g.oh * g.ow;
    for (int64_t ci = 0; ci < g.cin; ++ci)
        for (int64_t ky = 0; ky < g.kh; ++ky)
            for (int64_t kx = 0; kx < g.kw; ++kx) {
                const double* row = col + ((ci * g.kh + ky) * g.kw + kx) * cols;
                for (int64_t oy = 0; oy < g.oh; ++oy) {
                    const int64_t iy = oy * g.stride + ky - g.pad;
                    if (iy < 0 || iy >= g.h) continue;
                    for (int64_t ox = 0; ox < g.ow; ++ox) {
                        const int64_t ix = ox * g.stride + kx - g.pad;
                        if (ix < 0 || ix >= g.w) continue;
                        gxb[(ci * g.h + iy) * g.w + ix] += row[oy * g.ow + ox];
                    }
                }
            }
}

} // namespace detail

/// 2D convolution, zero padding. x [B,Cin,H,W], w [Cout,Cin,kh,kw], bias [Cout].
inline Var conv2d(Tape& t, Var x, Var w, Var bias, int64_t stride, int64_t pad) {
    const Tensor& vx = t.val(x);
    const Tensor& vw = t.val(w);
    require(vx.rank() == 4 && vw.rank() == 4, "conv2d: expected [B,Cin,H,W] and [Cout,Cin,kh,kw]");
    require(vx.dim(1) == vw.dim(1), "conv2d: channel mismatch");
    require(t.val(bias).rank() == 1 && t.val(bias).dim(0) == vw.dim(0), "conv2d: bias shape");
    require(stride >= 1 && pad >= 0, "conv2d: bad stride or pad");
    detail::ConvGeom g{};
    g.b = vx.dim(0); g.cin = vx.dim(1); g.h = vx.dim(2); g.w = vx.dim(3);
    g.cout = vw.dim(0); g.kh = vw.dim(2); g.kw = vw.dim(3);
    g.stride = stride; g.pad = pad;
    g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
    g.ow = (g.w + 2 * pad - g.kw) / stride + 1;
    require(g.h + 2 * pad >= g.kh && g.w + 2 * pad >= g.kw, "conv2d: kernel larger than padded input");

    const int64_t krows = g.cin * g.kh * g.kw;
    const int64_t cols = g.oh * g.ow;
    Tensor out({g.b, g.cout, g.oh, g.ow});
    std::vector<double> col(static_cast<size_t>(krows * cols));
    detail::CEMat W(vw.data(), g.cout, krows);
    for (int64_t b = 0; b < g.b; ++b) {
        detail::im2col(vx.data() + b * g.cin * g.h * g.w, g, col.data());
        detail::CEMat C(col.data(), krows, cols);
        detail::EMat O(out.data() + b * g.cout * cols, g.cout, cols);
        O.noalias() = W * C;
        for (int64_t co = 0; co < g.cout; ++co) {
            const double bv = t.val(bias)[co];
            double* dst = out.data() + (b * g.cout + co) * cols;
            for (int64_t i = 0; i < cols; ++i) dst[i] += bv;
        }
    }
    return detail::make_node(t, std::move(out), {x, w, bias},
                             [x, w, bias, g](Tape& tp, const Tensor& gr) {
        const int64_t krows = g.cin * g.kh * g.kw;
        const int64_t cols = g.oh * g.ow;
        std::vector<double> col(static_cast<size_t>(krows * cols));
        std::vector<double> gcol(static_cast<size_t>(krows * cols));
        detail::CEMat W(tp.val(w).data(), g.cout, krows);
        const bool nx = tp.needs_grad(x), nw = tp.needs_grad(w), nb = tp.needs_grad(bias);
        for (int64_t b = 0; b < g.b; ++b) {
            detail::CEMat G(gr.data() + b * g.cout * cols, g.cout, cols);
            if (nw || nx)
                detail::im2col(tp.val(x).data() + b * g.cin * g.h * g.w, g, col.data());
            if (nw) {
                detail::CEMat C(col.data(), krows, cols);
                detail::EMat GW(tp.grad(w).data(), g.cout, krows);
                GW.noalias() += G * C.transpose();
            }
            if (nx) {
                detail::EMat GC(gcol.data(), krows, cols);
                GC.noalias() = W.transpose() * G;
                detail::col2im_add(gcol.data(), g, tp.grad(x).data() + b * g.cin * g.h * g.w);
            }
            if (nb) {
                Tensor& gb = tp.grad(bias);
                for (int64_t co = 0; co < g.cout; ++co) {
                    const double* src = gr.data() + (b * g.cout + co) * cols;
                    double acc = 0.0;
                    for (int64_t i = 0; i < cols; ++i) acc += src[i];
                    gb[co] += acc;
                }
            }
        }
    });
}

/// Per-(sample, channel) normalization with affine parameters gamma/beta [C].
inline Var instance_norm(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-5) {
    const Tensor& vx = t.val(x);
    require(vx.rank() == 4, "instance_norm: expected [B,C,H,W]");
    const int64_t bn = vx.dim(0), c = vx.dim(1), hw = vx.dim(2) * vx.dim(3);
    require(t.val(gamma).size() == c && t.val(beta).size() == c, "instance_norm: affine shape");
    require(hw > 1, "instance_norm: needs more than one pixel per plane");
    Tensor out(vx.shape());
    Tensor xhat(vx.shape());
    Tensor inv_sigma({bn, c});
    for (int64_t b = 0; b < bn; ++b)
        for (int64_t ch = 0; ch < c; ++ch) {
            const double* src = vx.data() + (b * c + ch) * hw;
            double mu = 0.0;
            for (int64_t i = 0; i < hw; ++i) mu += src[i];
            mu /= static_cast<double>(hw);
            double var = 0.0;
            for (int64_t i = 0; i < hw; ++i) var += (src[i] - mu) * (src[i] - mu);
            var /= static_cast<double>(hw);
            const double is = 1.0 / std::sqrt(var + eps);
            inv_sigma[b * c + ch] = is;
            double* xh = xhat.data() + (b * c + ch) * hw;
            double* dst = out.data() + (b * c + ch) * hw;
            const double gm = t.val(gamma)[ch], bt = t.val(beta)[ch];
            for (int64_t i = 0; i < hw; ++i) {
                xh[i] = (src[i] - mu) * is;
                dst[i] = gm * xh[i] + bt;
            }
        }
    return detail::make_node(t, std::move(out), {x, gamma, beta},
                             [x, gamma, beta, xhat, inv_sigma, bn, c, hw](Tape& tp, const Tensor& g) {
        for (int64_t b = 0; b < bn; ++b)
            for (int64_t ch = 0; ch < c; ++ch) {
                const double* gp = g.data() + (b * c + ch) * hw;
                const double* xh = xhat.data() + (b * c + ch) * hw;
                if (tp.needs_grad(gamma)) {
                    double acc = 0.0;
                    for (int64_t i = 0; i < hw; ++i) acc += gp[i] * xh[i];
                    tp.grad(gamma)[ch] += acc;
                }
                if (tp.needs_grad(beta)) {
                    double acc = 0.0;
                    for (int64_t i = 0; i < hw; ++i) acc += gp[i];
                    tp.grad(beta)[ch] += acc;
                }
                if (tp.needs_grad(x)) {
                    const double gm = tp.val(gamma)[ch];
                    const double is = inv_sigma[b * c + ch];
                    double mg = 0.0, mgx = 0.0;
                    for (int64_t i = 0; i < hw; ++i) {
                        mg += gp[i];
                        mgx += gp[i] * xh[i];
                    }
                    mg /= static_cast<double>(hw);
                    mgx /= static_cast<double>(hw);
                    double* gx = tp.grad(x).data() + (b * c + ch) * hw;
                    for (int64_t i = 0; i < hw; ++i)
                        gx[i] += gm * is * (gp[i] - mg - xh[i] * mgx);
                }
            }
    });
}

/// [B,C,H,W] -> [B,C] spatial mean.
inline Var global_avg_pool(Tape& t, Var x) {
    const Tensor& vx = t.val(x);
    require(vx.rank() == 4, "global_avg_pool: expected [B,C,H,W]");
    const int64_t bc = vx.dim(0) * vx.dim(1), hw = vx.dim(2) * vx.dim(3);
    Tensor out({vx.dim(0), vx.dim(1)});
    for (int64_t p = 0; p < bc; ++p) {
        double acc = 0.0;
        const double* src = vx.data() + p * hw;
        for (int64_t i = 0; i < hw; ++i) acc += src[i];
        out[p] = acc / static_cast<double>(hw);
    }
    return detail::make_node(t, std::move(out), {x}, [x, bc, hw](Tape& tp, const Tensor& g) {
        Tensor& gx = tp.grad(x);
        for (int64_t p = 0; p < bc; ++p) {
            const double gv = g[p] / static_cast<double>(hw);
            double* dst = gx.data() + p * hw;
            for (int64_t i = 0; i < hw; ++i) dst[i] += gv;
        }
    });
}

/// Channelwise rescale: x [B,C,H,W] * s [B,C].
inline Var mul_channel(Tape& t, Var x, Var s) {
    const Tensor& vx = t.val(x);
    const Tensor& vs = t.val(s);
    require(vx.rank() == 4 && vs.rank() == 2, "mul_channel: bad ranks");
    require(vx.dim(0) == vs.dim(0) && vx.dim(1) == vs.dim(1), "mul_channel: B,C mismatch");
    const int64_t bc = vx.dim(0) * vx.dim(1), hw = vx.dim(2) * vx.dim(3);
    Tensor out = vx;
    for (int64_t p = 0; p < bc; ++p) {
        double* dst = out.data() + p * hw;
        for (int64_t i = 0; i < hw; ++i) dst[i] *= vs[p];
    }
    return detail::make_node(t, std::move(out), {x, s}, [x, s, bc, hw](Tape& tp, const Tensor& g) {
        if (tp.needs_grad(x)) {
            Tensor& gx = tp.grad(x);
            const Tensor& vs = tp.val(s);
            for (int64_t p = 0; p < bc; ++p) {
                double* dst = gx.data() + p * hw;
                const double* gp = g.data() + p * hw;
                for (int64_t i = 0; i < hw; ++i) dst[i] += gp[i] * vs[p];
            }
        }
        if (tp.needs_grad(s)) {
            Tensor& gs = tp.grad(s);
            const Tensor& vx = tp.val(x);
            for (int64_t p = 0; p < bc; ++p) {
                const double* gp = g.data() + p * hw;
                const double* xp = vx.data() + p * hw;
                double acc = 0.0;
                for (int64_t i = 0; i < hw; ++i) acc += gp[i] * xp[i];
                gs[p] += acc;
            }
        }
    });
}

/// Nearest-neighbor 2x upsample.
inline Var upsample_nearest2(Tape& t, Var x) {
    const Tensor& vx = t.val(x);
    require(vx.rank() == 4, "upsample_nearest2: expected [B,C,H,W]");
    const int64_t bc = vx.dim(0) * vx.dim(1), h = vx.dim(2), w = vx.dim(3);
    Tensor out({vx.dim(0), vx.dim(1), 2 * h, 2 * w});
    for (int64_t p = 0; p < bc; ++p)
        for (int64_t y = 0; y < 2 * h; ++y)
            for (int64_t xw = 0; xw < 2 * w; ++xw)
                out[(p * 2 * h + y) * 2 * w + xw] = vx[(p * h + y / 2) * w + xw / 2];
    return detail::make_node(t, std::move(out), {x}, [x, bc, h, w](Tape& tp, const Tensor& g) {
        Tensor& gx = tp.grad(x);
        for (int64_t p = 0; p < bc; ++p)
            for (int64_t y = 0; y < 2 * h; ++y)
                for (int64_t xw = 0; xw < 2 * w; ++xw)
                    gx[(p * h + y / 2) * w + xw / 2] += g[(p * 2 * h + y) * 2 * w + xw];
    });
}

namespace detail {

struct LerpAxis {
    std::vector<int64_t> i0, i1;
    std::vector<double> w1;
};

/// Half-pixel-center source coordinates, clamped to the edge.
inline LerpAxis lerp_axis(int64_t in_n, int64_t out_n) {
    LerpAxis ax;
    ax.i0.resize(static_cast<size_t>(out_n));
    ax.i1.resize(static_cast<size_t>(out_n));
    ax.w1.resize(static_cast<size_t>(out_n));
    const double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
    for (int64_t o = 0; o < out_n; ++o) {
        double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
        const int64_t lo = static_cast<int64_t>(std::floor(src));
        ax.i0[static_cast<size_t>(o)] = lo;
        ax.i1[static_cast<size_t>(o)] = std::min(lo + 1, in_n - 1);
        ax.w1[static_cast<size_t>(o)] = src - static_cast<double>(lo);
    }
    return ax;
}

} // namespace detail

/// Bilinear resize to (out_h, out_w), half-pixel centers.
inline Var resize_bilinear(Tape& t, Var x, int64_t out_h, int64_t out_w) {
    const Tensor& vx = t.val(x);
    require(vx.rank() == 4, "resize_bilinear: expected [B,C,H,W]");
    require(out_h >= 1 && out_w >= 1, "resize_bilinear: bad target size");
    const int64_t bc = vx.dim(0) * vx.dim(1), h = vx.dim(2), w = vx.dim(3);
    const detail::LerpAxis ay = detail::lerp_axis(h, out_h);
    const detail::LerpAxis axx = detail::lerp_axis(w, out_w);
    Tensor out({vx.dim(0), vx.dim(1), out_h, out_w});
    for (int64_t p = 0; p < bc; ++p) {
        const double* src = vx.data() + p * h * w;
        double* dst = out.data() + p * out_h * out_w;
        for (int64_t y = 0; y < out_h; ++y) {
            const int64_t y0 = ay.i0[static_cast<size_t>(y)], y1 = ay.i1[static_cast<size_t>(y)];
            const double fy = ay.w1[static_cast<size_t>(y)];
            for (int64_t xo = 0; xo < out_w; ++xo) {
                const int64_t x0 = axx.i0[static_cast<size_t>(xo)], x1 = axx.i1[static_cast<size_t>(xo)];
                const double fx = axx.w1[static_cast<size_t>(xo)];
                dst[y * out_w + xo] = (1 - fy) * ((1 - fx) * src[y0 * w + x0] + fx * src[y0 * w + x1]) +
                                      fy * ((1 - fx) * src[y1 * w + x0] + fx * src[y1 * w + x1]);
            }
        }
    }
    return detail::make_node(t, std::move(out), {x},
                             [x, bc, h, w, out_h, out_w, ay, axx](Tape& tp, const Tensor& g) {
        Tensor& gx = tp.grad(x);
        for (int64_t p = 0; p < bc; ++p) {
            double* dst = gx.data() + p * h * w;
            const double* gp = g.data() + p * out_h * out_w;
            for (int64_t y = 0; y < out_h; ++y) {
                const int64_t y0 = ay.i0[static_cast<size_t>(y)], y1 = ay.i1[static_cast<size_t>(y)];
                const double fy = ay.w1[static_cast<size_t>(y)];
                for (int64_t xo = 0; xo < out_w; ++xo) {
                    const int64_t x0 = axx.i0[static_cast<size_t>(xo)], x1 = axx.i1[static_cast<size_t>(xo)];
                    const double fx = axx.w1[static_cast<size_t>(xo)];
                    const double gv = gp[y * out_w + xo];
                    dst[y0 * w + x0] += (1 - fy) * (1 - fx) * gv;
                    dst[y0 * w + x1] += (1 - fy) * fx * gv;
                    dst[y1 * w + x0] += fy * (1 - fx) * gv;
                    dst[y1 * w + x1] += fy * fx * gv;
                }
            }
        }
    });
}

namespace detail {

/// Mirror index without repeating the border sample; requires pad < n.
inline int64_t reflect_index(int64_t i, int64_t n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

} // namespace detail

/// Reflection padding (border not repeated). Each pad must be < corresponding dim.
inline Var pad_reflect(Tape& t, Var x, int64_t top, int64_t bottom, int64_t left, int64_t right) {
    const Tensor& vx = t.val(x);
    require(vx.rank() == 4, "pad_reflect: expected [B,C,H,W]");
    const int64_t bc = vx.dim(0) * vx.dim(1), h = vx.dim(2), w = vx.dim(3);
    require(top >= 0 && bottom >= 0 && left >= 0 && right >= 0, "pad_reflect: negative pad");
    require(top < h && bottom < h && left < w && right < w,
            "pad_reflect: pad must be smaller than the spatial extent");
    const int64_t oh = h + top + bottom, ow = w + left + right;
    Tensor out({vx.dim(0), vx.dim(1), oh, ow});
    for (int64_t p = 0; p < bc; ++p)
        for (int64_t y = 0; y < oh; ++y) {
            const int64_t sy = detail::reflect_index(y - top, h);
            for (int64_t xo = 0; xo < ow; ++xo) {
                const int64_t sx = detail::reflect_index(xo - left, w);
                out[(p * oh + y) * ow + xo] = vx[(p * h + sy) * w + sx];
            }
        }
    return detail::make_node(t, std::move(out), {x},
                             [x, bc, h, w, top, left, oh, ow](Tape& tp, const Tensor& g) {
        Tensor& gx = tp.grad(x);
        for (int64_t p = 0; p < bc; ++p)
            for (int64_t y = 0; y < oh; ++y) {
                const int64_t sy = detail::reflect_index(y - top, h);
                for (int64_t xo = 0; xo < ow; ++xo) {
                    const int64_t sx = detail::reflect_index(xo - left, w);
                    gx[(p * h + sy) * w + sx] += g[(p * oh + y) * ow + xo];
                }
            }
    });
}

/// Spatial crop starting at (top, left).
inline Var crop_spatial(Tape& t, Var x, int64_t top, int64_t left, int64_t out_h, int64_t out_w) {
    const Tensor& vx = t.val(x);
    require(vx.rank() == 4, "crop_spatial: expected [B,C,H,W]");
    const int64_t bc = vx.dim(0) * vx.dim(1), h = vx.dim(2), w = vx.dim(3);
    require(top >= 0 && left >= 0 && top + out_h <= h && left + out_w <= w, "crop_spatial: out of bounds");
    Tensor out({vx.dim(0), vx.dim(1), out_h, out_w});
    for (int64_t p = 0; p < bc; ++p)
        for (int64_t y = 0; y < out_h; ++y)
            for (int64_t xo = 0; xo < out_w; ++xo)
                out[(p * out_h + y) * out_w + xo] = vx[(p * h + top + y) * w + left + xo];
    return detail::make_node(t, std::move(out), {x},
                             [x, bc, h, w, top, left, out_h, out_w](Tape& tp, const Tensor& g) {
        Tensor& gx = tp.grad(x);
        for (int64_t p = 0; p < bc; ++p)
            for (int64_t y = 0; y < out_h; ++y)
                for (int64_t xo = 0; xo < out_w; ++xo)
                    gx[(p * h + top + y) * w + left + xo] += g[(p * out_h + y) * out_w + xo];
    });
}

} // namespace mrrecon::ad
