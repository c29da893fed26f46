// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <limits>
#include <string>
#include <vector>

#include "mrrecon/core/errors.hpp"
#include "mrrecon/core/tensor.hpp"
#include "mrrecon/train/losses.hpp"

// Evaluation metrics on plain tensors; no tape involved. Callers normalize
// images by the ground-truth volume maximum before scoring.

namespace mrrecon::train {

/// ||pred - gt||^2 / ||gt||^2. An all-zero ground truth has no scale to
/// normalize by and is rejected.
inline double metric_nmse(const Tensor& pred, const Tensor& gt) {
    require(pred.same_shape(gt), "metric_nmse: shape mismatch");
    double num = 0.0, den = 0.0;
    for (int64_t i = 0; i < gt.size(); ++i) {
        const double d = pred[i] - gt[i];
        num += d * d;
        den += gt[i] * gt[i];
    }
    require(den > 0.0, "metric_nmse: all-zero ground truth");
    return num / den;
}

/// 10 * log10(max(gt)^2 / MSE) in dB; a perfect match returns +infinity.
inline double metric_psnr(const Tensor& pred, const Tensor& gt) {
    require(pred.same_shape(gt), "metric_psnr: shape mismatch");
    double peak = 0.0, mse = 0.0;
    for (int64_t i = 0; i < gt.size(); ++i) {
        peak = std::max(peak, gt[i]);
        const double d = pred[i] - gt[i];
        mse += d * d;
    }
    mse /= static_cast<double>(gt.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

/// Mean SSIM over all valid Gaussian 7x7 windows (sigma 1.5), k1 = 0.01,
/// k2 = 0.03, dynamic range = max(gt) floored at 1e-12. Matches the
/// differentiable loss path: ssim_loss == 1 - metric_ssim.
inline double metric_ssim(const Tensor& pred, const Tensor& gt) {
    require(pred.same_shape(gt), "metric_ssim: shape mismatch");
    require(pred.rank() == 2, "metric_ssim: expected [H, W] images");
    const int64_t h = pred.dim(0), w = pred.dim(1);
    const int64_t n = 7;
    require(h >= n && w >= n, "metric_ssim: images smaller than the 7x7 window");
    Tensor win = gaussian_window(n, 1.5);

    double range = 0.0;
    for (int64_t i = 0; i < gt.size(); ++i) range = std::max(range, gt[i]);
    range = std::max(range, 1e-12);
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);

    double acc = 0.0;
    const int64_t oh = h - n + 1, ow = w - n + 1;
    for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
            double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
            for (int64_t dy = 0; dy < n; ++dy)
                for (int64_t dx = 0; dx < n; ++dx) {
                    const double wv = win.at({0, 0, dy, dx});
                    const double a = pred.at({y + dy, x + dx});
                    const double b = gt.at({y + dy, x + dx});
                    mx += wv * a;
                    my += wv * b;
                    xx += wv * a * a;
                    yy += wv * b * b;
                    xy += wv * a * b;
                }
            const double sx = xx - mx * mx;
            const double sy = yy - my * my;
            const double sxy = xy - mx * my;
            acc += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) /
                   ((mx * mx + my * my + c1) * (sx + sy + c2));
        }
    return acc / static_cast<double>(oh * ow);
}

/// Per-example scores for one reconstruction and its zero-filled baseline.
struct ExampleMetrics {
    std::string contrast;
    double acceleration = 0.0;
    double ssim = 0.0, psnr = 0.0, nmse = 0.0;
    double baseline_ssim = 0.0, baseline_psnr = 0.0, baseline_nmse = 0.0;
};

struct MetricAggregate {
    double mean = 0.0;
    double stddev = 0.0;
};

inline MetricAggregate aggregate(const std::vector<double>& xs) {
    MetricAggregate a;
    if (xs.empty()) return a;
    for (double x : xs) a.mean += x;
    a.mean /= static_cast<double>(xs.size());
    for (double x : xs) a.stddev += (x - a.mean) * (x - a.mean);
    a.stddev = std::sqrt(a.stddev / static_cast<double>(xs.size()));
    return a;
}

/// Evaluation summary: per-example rows plus NMSE/PSNR/SSIM aggregates for
/// the reconstruction and the zero-filled baseline.
struct MetricsReport {
    std::vector<ExampleMetrics> examples;

    MetricAggregate nmse, psnr, ssim;
    MetricAggregate baseline_nmse, baseline_psnr, baseline_ssim;

    void finalize() {
        auto collect = [this](auto field) {
            std::vector<double> xs;
            xs.reserve(examples.size());
            for (const auto& e : examples) xs.push_back(e.*field);
            return aggregate(xs);
        };
        nmse = collect(&ExampleMetrics::nmse);
        psnr = collect(&ExampleMetrics::psnr);
        ssim = collect(&ExampleMetrics::ssim);
        baseline_nmse = collect(&ExampleMetrics::baseline_nmse);
        baseline_psnr = collect(&ExampleMetrics::baseline_psnr);
        baseline_ssim = collect(&ExampleMetrics::baseline_ssim);
    }

    /// Finalized sub-reports keyed by a per-example label.
    template <typename KeyFn>
    std::map<std::string, MetricsReport> split_by(KeyFn key) const {
        std::map<std::string, MetricsReport> groups;
        for (const auto& e : examples) groups[key(e)].examples.push_back(e);
        for (auto& [k, rep] : groups) rep.finalize();
        return groups;
    }

    std::map<std::string, MetricsReport> by_contrast() const {
        return split_by([](const ExampleMetrics& e) { return e.contrast; });
    }

    std::map<std::string, MetricsReport> by_acceleration() const {
        return split_by([](const ExampleMetrics& e) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "af%g", e.acceleration);
            return std::string(buf);
        });
    }
};

} // namespace mrrecon::train
