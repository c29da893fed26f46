// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mrrecon/autodiff/complex_ops.hpp"
#include "mrrecon/autodiff/image_ops.hpp"
#include "mrrecon/autodiff/tape.hpp"
#include "mrrecon/core/errors.hpp"
#include "mrrecon/kspace/ops.hpp"

// Generator and discriminator loss terms. Everything here is a tape
// expression built from checked primitives, so the backward pass needs no
// bespoke derivations.

namespace mrrecon::train {

using ad::Tape;
using ad::Var;

/// Normalized Gaussian window as a single-channel conv kernel [1,1,n,n].
inline Tensor gaussian_window(int64_t size = 7, double sigma = 1.5) {
    require(size >= 1 && size % 2 == 1, "gaussian_window: size must be odd");
    require(sigma > 0.0, "gaussian_window: sigma must be positive");
    Tensor w({1, 1, size, size});
    const double c = static_cast<double>(size - 1) / 2.0;
    double sum = 0.0;
    for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x) {
            const double dy = static_cast<double>(y) - c;
            const double dx = static_cast<double>(x) - c;
            const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
            w.at({0, 0, y, x}) = v;
            sum += v;
        }
    for (int64_t i = 0; i < w.size(); ++i) w[i] /= sum;
    return w;
}

/// MSE of complex magnitudes plus MSE of principal-value phases against a
/// fixed target. Zero-magnitude entries carry phase 0. The wrap-aware flag
/// measures the wrapped phase difference instead of the raw principal
/// values, avoiding the +-pi discontinuity penalty.
inline Var physical_loss(Tape& t, Var k_pred, const Tensor& k_gt, bool wrap_aware = false) {
    const Tensor& vp = t.val(k_pred);
    require(vp.same_shape(k_gt), "physical_loss: shape mismatch");
    require(k_gt.rank() >= 3 && k_gt.dim(k_gt.rank() - 1) == 2,
            "physical_loss: expected complex pairs in the trailing dim");
    std::vector<int64_t> rshape;
    for (int64_t d = 0; d + 1 < k_gt.rank(); ++d) rshape.push_back(k_gt.dim(d));
    Tensor mag_gt(rshape), phase_gt(rshape);
    for (int64_t i = 0; i < mag_gt.size(); ++i) {
        const double re = k_gt[2 * i], im = k_gt[2 * i + 1];
        mag_gt[i] = std::sqrt(re * re + im * im);  // mirrors the magnitude op exactly
        phase_gt[i] = (re == 0.0 && im == 0.0) ? 0.0 : std::atan2(im, re);
    }
    Var mag_term = ad::mse(t, ad::magnitude(t, k_pred), t.constant(std::move(mag_gt)));
    Var phase = ad::phase(t, k_pred);
    Var phase_term;
    if (wrap_aware) {
        Var diff = ad::wrap_pi(t, ad::sub(t, phase, t.constant(phase_gt)));
        phase_term = ad::mean(t, ad::mul(t, diff, diff));
    } else {
        phase_term = ad::mse(t, phase, t.constant(std::move(phase_gt)));
    }
    return ad::add(t, mag_term, phase_term);
}

/// 1 - SSIM with Gaussian 7x7 windows (sigma 1.5), k1 = 0.01, k2 = 0.03.
/// The dynamic range is the ground-truth maximum, floored at 1e-12 so a
/// constant-zero ground truth stays finite.
inline Var ssim_loss(Tape& t, Var img_pred, const Tensor& img_gt) {
    const Tensor& vp = t.val(img_pred);
    require(vp.same_shape(img_gt), "ssim_loss: shape mismatch");
    require(img_gt.rank() == 2, "ssim_loss: expected [H, W] images");
    const int64_t h = img_gt.dim(0), w = img_gt.dim(1);
    require(h >= 7 && w >= 7, "ssim_loss: images smaller than the 7x7 window");

    double range = 0.0;
    for (int64_t i = 0; i < img_gt.size(); ++i) range = std::max(range, img_gt[i]);
    range = std::max(range, 1e-12);
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);

    Var kernel = t.constant(gaussian_window());
    Var nobias = t.constant(Tensor({1}));
    auto blur = [&](Var v) { return ad::conv2d(t, v, kernel, nobias, 1, 0); };

    Var x = ad::reshape(t, img_pred, {1, 1, h, w});
    Var y = t.constant(img_gt.reshaped({1, 1, h, w}));
    Var mx = blur(x);
    Var my = blur(y);
    Var mx2 = ad::mul(t, mx, mx);
    Var my2 = ad::mul(t, my, my);
    Var mxy = ad::mul(t, mx, my);
    Var sx = ad::sub(t, blur(ad::mul(t, x, x)), mx2);
    Var sy = ad::sub(t, blur(ad::mul(t, y, y)), my2);
    Var sxy = ad::sub(t, blur(ad::mul(t, x, y)), mxy);
    Var num = ad::mul(t, ad::add_scalar(t, ad::mul_scalar(t, mxy, 2.0), c1),
                      ad::add_scalar(t, ad::mul_scalar(t, sxy, 2.0), c2));
    Var den = ad::mul(t, ad::add_scalar(t, ad::add(t, mx2, my2), c1),
                      ad::add_scalar(t, ad::add(t, sx, sy), c2));
    Var map = ad::div(t, num, den);
    return ad::add_scalar(t, ad::neg(t, ad::mean(t, map)), 1.0);
}

/// Physical + SSIM term for one reconstructor step, with the RSS image
/// supplied by the caller (the generator already computed it).
inline Var step_loss(Tape& t, Var k_pred_central, Var img_pred, const Tensor& k_gt) {
    Tensor img_gt = coil_combine_rss(ifft2c(k_gt));
    return ad::add(t, physical_loss(t, k_pred_central, k_gt),
                   ssim_loss(t, img_pred, img_gt));
}

/// Convenience overload that derives the image from the k-space itself.
inline Var step_loss(Tape& t, Var k_pred_central, const Tensor& k_gt) {
    Var img = ad::rss_combine(t, ad::cfft2(t, k_pred_central, true));
    return step_loss(t, k_pred_central, img, k_gt);
}

/// Total generator objective: lambda * sum of step losses + adversarial term.
inline Var generator_loss(Tape& t, const std::vector<Var>& step_losses, Var adversarial,
                          double lambda) {
    require(!step_losses.empty(), "generator_loss: no step losses");
    Var acc = step_losses[0];
    for (size_t i = 1; i < step_losses.size(); ++i) acc = ad::add(t, acc, step_losses[i]);
    return ad::add(t, ad::mul_scalar(t, acc, lambda), adversarial);
}

/// [candidate, zero-filled] channel concatenation fed to the discriminator;
/// both inputs are [H, W] images.
inline Var make_conditioned_input(Tape& t, Var candidate, Var zero_filled) {
    const Tensor& vc = t.val(candidate);
    const Tensor& vz = t.val(zero_filled);
    require(vc.rank() == 2 && vz.rank() == 2, "make_conditioned_input: expected [H, W]");
    require(vc.same_shape(vz), "make_conditioned_input: shape mismatch");
    Var a = ad::reshape(t, candidate, {1, 1, vc.dim(0), vc.dim(1)});
    Var b = ad::reshape(t, zero_filled, {1, 1, vc.dim(0), vc.dim(1)});
    return ad::concat_channels(t, a, b);
}

/// Inverted-label convention: real patches are labeled 0 and fake patches 1.
/// L_Disc = (BCE(0, pred_real) + BCE(1, pred_fake)) / 2, sigmoid inside.
inline Var discriminator_loss(Tape& t, Var pred_real, Var pred_fake) {
    Tensor zeros(t.val(pred_real).shape());
    Tensor ones = Tensor::full(t.val(pred_fake).shape(), 1.0);
    Var real_term = ad::bce_with_logits(t, pred_real, zeros);
    Var fake_term = ad::bce_with_logits(t, pred_fake, ones);
    return ad::mul_scalar(t, ad::add(t, real_term, fake_term), 0.5);
}

/// BCE of fake predictions against the real label (zeros): the generator
/// pushes its fakes toward the discriminator's "real" side.
inline Var generator_adversarial_loss(Tape& t, Var pred_fake) {
    Tensor zeros(t.val(pred_fake).shape());
    return ad::bce_with_logits(t, pred_fake, zeros);
}

/// Scalar record of one training step's loss terms.
struct LossReport {
    std::vector<double> physical;  // per step
    std::vector<double> ssim;      // per step
    std::vector<double> disc;      // per-step discriminator loss after its update
    double stepwise_sum = 0.0;     // sum of (physical + ssim)
    double adversarial = 0.0;      // generator's GAN term
    double total = 0.0;            // lambda * stepwise_sum + adversarial
    double lambda = 1.0;
    bool skipped = false;          // divergence guard fired; no generator update
};

} // namespace mrrecon::train
