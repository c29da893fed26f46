// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mrrecon/core/errors.hpp"
#include "mrrecon/core/rng.hpp"
#include "mrrecon/core/tensor.hpp"
#include "mrrecon/kspace/ops.hpp"
#include "mrrecon/sampling/masks.hpp"

namespace mrrecon {

enum class ContrastTag { cine, t1w, t2w, aorta, tagging };

inline const char* contrast_name(ContrastTag t) {
    switch (t) {
        case ContrastTag::cine: return "cine";
        case ContrastTag::t1w: return "t1w";
        case ContrastTag::t2w: return "t2w";
        case ContrastTag::aorta: return "aorta";
        case ContrastTag::tagging: return "tagging";
    }
    return "unknown";
}

inline ContrastTag contrast_from_name(const std::string& s) {
    for (ContrastTag t : {ContrastTag::cine, ContrastTag::t1w, ContrastTag::t2w,
                          ContrastTag::aorta, ContrastTag::tagging})
        if (s == contrast_name(t)) return t;
    throw DataError("unknown contrast tag: " + s);
}

/// Axis-aligned ellipse in pixel coordinates (row, col center; row, col
/// semi-axes). Later ellipses paint over earlier ones.
struct Ellipse {
    double cy = 0, cx = 0, ay = 1, ax = 1;
    double intensity = 1.0;
    double pulsatility = 0.0;
};

struct PhantomSpec {
    int64_t height = 64, width = 64;
    int64_t frames = 8, coils = 4;
    double heart_rate_phase = 0.0;
    std::vector<Ellipse> ellipses;
    double noise_std = 0.0;
    uint64_t seed = 0;

    void validate() const {
        require(height >= 8 && width >= 8, "PhantomSpec: spatial dims must be >= 8");
        require(frames >= 1, "PhantomSpec: frames must be >= 1");
        require(coils >= 1, "PhantomSpec: coils must be >= 1");
        require(noise_std >= 0.0, "PhantomSpec: negative noise std");
        require(!ellipses.empty(), "PhantomSpec: empty ellipse set");
        for (const auto& e : ellipses) {
            require(e.intensity >= 0.0 && e.intensity <= 1.0,
                    "PhantomSpec: ellipse intensity outside [0, 1]");
            require(e.pulsatility >= 0.0 && e.pulsatility < 0.5,
                    "PhantomSpec: pulsatility outside [0, 0.5)");
            require(e.ay > 0.0 && e.ax > 0.0, "PhantomSpec: non-positive ellipse axes");
            require(e.cy >= 0.0 && e.cy < static_cast<double>(height) && e.cx >= 0.0 &&
                        e.cx < static_cast<double>(width),
                    "PhantomSpec: ellipse center outside the field of view");
        }
    }
};

struct SubjectRecord {
    Tensor kspace_full; // [frames, coils, H, W, 2]
    Tensor image_rss;   // [frames, H, W]
    PhantomSpec spec;
    ContrastTag contrast_tag = ContrastTag::cine;

    int64_t frames() const { return kspace_full.dim(0); }
    int64_t coils() const { return kspace_full.dim(1); }
    int64_t height() const { return kspace_full.dim(2); }
    int64_t width() const { return kspace_full.dim(3); }
};

namespace detail {

inline double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

inline void quantize_f32(Tensor& t) {
    for (int64_t i = 0; i < t.size(); ++i) t[i] = quantize_f32(t[i]);
}

} // namespace detail

/// Smooth complex coil profiles: one Gaussian magnitude lobe per coil placed
/// around the field of view, a gentle random linear phase ramp, then exact
/// per-pixel RSS normalization. One coil therefore has unit magnitude
/// everywhere.
inline SensitivityMaps simulate_coil_maps(int64_t h, int64_t w, int64_t coils, uint64_t seed) {
    require(h >= 1 && w >= 1, "simulate_coil_maps: bad shape");
    require(coils >= 1, "simulate_coil_maps: coils must be >= 1");
    Rng rng(mix_seed(seed, hash_name("coil_maps")));
    const double cy = 0.5 * static_cast<double>(h - 1);
    const double cx = 0.5 * static_cast<double>(w - 1);
    const double ring = 0.6 * static_cast<double>(std::max(h, w));
    const double sigma = 0.6 * static_cast<double>(std::max(h, w));
    Tensor m({coils, h, w, 2});
    for (int64_t c = 0; c < coils; ++c) {
        const double theta =
            2.0 * fft::kPi * static_cast<double>(c) / static_cast<double>(coils) +
            rng.uniform(-0.2, 0.2);
        const double ly = cy + ring * std::sin(theta);
        const double lx = cx + ring * std::cos(theta);
        const double p0 = rng.uniform(-fft::kPi, fft::kPi);
        const double py = rng.uniform(-0.3, 0.3) * fft::kPi;
        const double px = rng.uniform(-0.3, 0.3) * fft::kPi;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const double dy = static_cast<double>(y) - ly;
                const double dx = static_cast<double>(x) - lx;
                const double mag = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
                const double phase = p0 + py * static_cast<double>(y) / static_cast<double>(h) +
                                     px * static_cast<double>(x) / static_cast<double>(w);
                m.at({c, y, x, 0}) = mag * std::cos(phase);
                m.at({c, y, x, 1}) = mag * std::sin(phase);
            }
    }
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            double rss = 0.0;
            for (int64_t c = 0; c < coils; ++c)
                rss += m.at({c, y, x, 0}) * m.at({c, y, x, 0}) +
                       m.at({c, y, x, 1}) * m.at({c, y, x, 1});
            rss = std::sqrt(rss);
            for (int64_t c = 0; c < coils; ++c) {
                m.at({c, y, x, 0}) /= rss;
                m.at({c, y, x, 1}) /= rss;
            }
        }
    return SensitivityMaps(std::move(m));
}

/// Paints the ellipse set at cardiac phase t/frames; axes breathe by the
/// per-ellipse pulsatility and later ellipses overwrite earlier ones.
inline Tensor phantom_intensity_frame(const PhantomSpec& spec, int64_t t) {
    Tensor img({spec.height, spec.width});
    const double phase = 2.0 * fft::kPi * static_cast<double>(t) /
                             static_cast<double>(spec.frames) +
                         spec.heart_rate_phase;
    for (const auto& e : spec.ellipses) {
        const double scale = 1.0 + e.pulsatility * std::sin(phase);
        const double ay = e.ay * scale, ax = e.ax * scale;
        for (int64_t y = 0; y < spec.height; ++y)
            for (int64_t x = 0; x < spec.width; ++x) {
                const double ry = (static_cast<double>(y) - e.cy) / ay;
                const double rx = (static_cast<double>(x) - e.cx) / ax;
                if (ry * ry + rx * rx <= 1.0) img.at({y, x}) = e.intensity;
            }
    }
    return img;
}

/// Cardiac-like ellipse layout (torso, myocardium ring, two pulsing
/// chambers, a static vessel) with a per-contrast intensity palette. The
/// palettes only create variety for prompt conditioning; no signal-model
/// fidelity is claimed.
inline std::vector<Ellipse> default_ellipses(int64_t h, int64_t w, ContrastTag tag,
                                             uint64_t seed) {
    Rng rng(mix_seed(seed, hash_name(contrast_name(tag))));
    const double hc = 0.5 * static_cast<double>(h - 1);
    const double wc = 0.5 * static_cast<double>(w - 1);
    const double hs = static_cast<double>(h), ws = static_cast<double>(w);
    double torso = 0.35, myo = 0.75, blood = 0.95, chamber2 = 0.55, vessel = 0.85;
    switch (tag) {
        case ContrastTag::cine: break;
        case ContrastTag::t1w: torso = 0.45; myo = 0.6; blood = 0.3; chamber2 = 0.8; break;
        case ContrastTag::t2w: torso = 0.25; myo = 0.5; blood = 1.0; chamber2 = 0.7; break;
        case ContrastTag::aorta: torso = 0.3; vessel = 1.0; blood = 0.65; break;
        case ContrastTag::tagging: torso = 0.4; myo = 0.9; blood = 0.45; break;
    }
    auto jitter = [&rng](double v, double amt) { return v + rng.uniform(-amt, amt); };
    std::vector<Ellipse> es;
    es.push_back({hc, wc, 0.42 * hs, 0.45 * ws, torso, 0.0});
    es.push_back({jitter(hc, 0.02 * hs), jitter(wc - 0.08 * ws, 0.02 * ws), 0.22 * hs,
                  0.2 * ws, myo, 0.05});
    es.push_back({jitter(hc, 0.02 * hs), jitter(wc - 0.08 * ws, 0.02 * ws), 0.12 * hs,
                  0.1 * ws, blood, 0.2});
    es.push_back({jitter(hc - 0.05 * hs, 0.02 * hs), jitter(wc + 0.14 * ws, 0.02 * ws),
                  0.09 * hs, 0.08 * ws, chamber2, 0.15});
    es.push_back({jitter(hc + 0.22 * hs, 0.02 * hs), jitter(wc + 0.2 * ws, 0.02 * ws),
                  0.05 * hs, 0.05 * ws, vessel, 0.0});
    return es;
}

/// Full forward simulation. Ground-truth k-space is the coil-weighted
/// spectrum plus optional per-component Gaussian noise; the stored RSS image
/// is recomputed from the stored (noisy, float32-quantized) k-space so the
/// record's internal-consistency invariant holds by construction.
inline SubjectRecord simulate_subject(const PhantomSpec& spec,
                                      ContrastTag tag = ContrastTag::cine) {
    spec.validate();
    Rng noise_rng(mix_seed(spec.seed, hash_name("kspace_noise")));
    SensitivityMaps maps = simulate_coil_maps(spec.height, spec.width, spec.coils, spec.seed);
    SubjectRecord rec;
    rec.spec = spec;
    rec.contrast_tag = tag;
    rec.kspace_full = Tensor({spec.frames, spec.coils, spec.height, spec.width, 2});
    rec.image_rss = Tensor({spec.frames, spec.height, spec.width});
    for (int64_t t = 0; t < spec.frames; ++t) {
        Tensor intensity = phantom_intensity_frame(spec, t);
        Tensor coil_img({spec.coils, spec.height, spec.width, 2});
        for (int64_t c = 0; c < spec.coils; ++c)
            for (int64_t y = 0; y < spec.height; ++y)
                for (int64_t x = 0; x < spec.width; ++x) {
                    const double v = intensity.at({y, x});
                    coil_img.at({c, y, x, 0}) = v * maps.data.at({c, y, x, 0});
                    coil_img.at({c, y, x, 1}) = v * maps.data.at({c, y, x, 1});
                }
        Tensor ksp = fft2c(coil_img);
        if (spec.noise_std > 0.0)
            for (int64_t i = 0; i < ksp.size(); ++i)
                ksp[i] += noise_rng.normal(0.0, spec.noise_std);
        for (int64_t i = 0; i < ksp.size(); ++i)
            rec.kspace_full[t * ksp.size() + i] = ksp[i];
    }
    detail::quantize_f32(rec.kspace_full);
    for (int64_t t = 0; t < spec.frames; ++t) {
        Tensor frame({spec.coils, spec.height, spec.width, 2});
        const double* src = rec.kspace_full.data() + t * frame.size();
        std::copy(src, src + frame.size(), frame.data());
        Tensor rss = coil_combine_rss(ifft2c(frame));
        for (int64_t i = 0; i < rss.size(); ++i)
            rec.image_rss[t * rss.size() + i] = rss[i];
    }
    detail::quantize_f32(rec.image_rss);
    return rec;
}

/// Gathers frames [frame-(T-1)/2, frame+(T-1)/2] with clamp padding at the
/// sequence edges; returns the masked stack and the fully sampled stack.
inline std::pair<MultiCoilKSpace, MultiCoilKSpace> make_training_example(
    const SubjectRecord& rec, int64_t frame, const SamplingMask& mask, int64_t adjacent) {
    require(adjacent >= 1 && adjacent % 2 == 1, "make_training_example: T must be odd");
    require(frame >= 0 && frame < rec.frames(), "make_training_example: frame out of range");
    require(mask.height() == rec.height() && mask.width() == rec.width(),
            "make_training_example: mask shape mismatch");
    const int64_t half = (adjacent - 1) / 2;
    const int64_t plane = rec.coils() * rec.height() * rec.width() * 2;
    MultiCoilKSpace full;
    full.data = Tensor({adjacent, rec.coils(), rec.height(), rec.width(), 2});
    full.central_index = half;
    for (int64_t i = 0; i < adjacent; ++i) {
        const int64_t src_frame = std::clamp<int64_t>(frame - half + i, 0, rec.frames() - 1);
        const double* src = rec.kspace_full.data() + src_frame * plane;
        std::copy(src, src + plane, full.data.data() + i * plane);
    }
    full.validate();
    return {apply_mask(full, mask), full};
}

} // namespace mrrecon
