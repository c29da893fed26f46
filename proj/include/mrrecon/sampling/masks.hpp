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

namespace mrrecon {

enum class Trajectory { uniform, gaussian, pseudo_radial };

inline const char* trajectory_name(Trajectory t) {
    switch (t) {
        case Trajectory::uniform: return "uniform";
        case Trajectory::gaussian: return "gaussian";
        case Trajectory::pseudo_radial: return "pseudo_radial";
    }
    return "unknown";
}

inline Trajectory trajectory_from_name(const std::string& s) {
    if (s == "uniform") return Trajectory::uniform;
    if (s == "gaussian") return Trajectory::gaussian;
    if (s == "pseudo_radial") return Trajectory::pseudo_radial;
    throw ConfigError("unknown trajectory: " + s);
}

/// Binary undersampling pattern over one k-space plane. Cartesian
/// trajectories are column-constant; the centered ACS band is always fully
/// sampled. The ones count must land within 15% of the declared acceleration,
/// otherwise construction fails (the declared factor is unreachable with the
/// requested ACS width).
struct SamplingMask {
    Tensor data;
    Trajectory trajectory = Trajectory::uniform;
    double acceleration = 1.0;
    int64_t acs_lines = 0;
    uint64_t seed = 0;

    int64_t height() const { return data.dim(0); }
    int64_t width() const { return data.dim(1); }

    int64_t ones() const {
        int64_t n = 0;
        for (int64_t i = 0; i < data.size(); ++i) n += (data[i] != 0.0);
        return n;
    }

    double achieved_acceleration() const {
        const int64_t n = ones();
        require(n > 0, "SamplingMask: empty mask");
        return static_cast<double>(data.size()) / static_cast<double>(n);
    }

    void validate() const {
        require(data.rank() == 2, "SamplingMask: expected [H, W]");
        require(acs_lines >= 0 && acs_lines <= width(), "SamplingMask: bad ACS width");
        for (int64_t i = 0; i < data.size(); ++i)
            require(data[i] == 0.0 || data[i] == 1.0, "SamplingMask: values must be 0 or 1");
        const int64_t c0 = acs_start(width(), acs_lines);
        for (int64_t y = 0; y < height(); ++y)
            for (int64_t x = c0; x < c0 + acs_lines; ++x)
                require(data.at({y, x}) == 1.0, "SamplingMask: ACS column not fully sampled");
        if (trajectory != Trajectory::pseudo_radial)
            for (int64_t x = 0; x < width(); ++x)
                for (int64_t y = 1; y < height(); ++y)
                    require(data.at({y, x}) == data.at({0, x}),
                            "SamplingMask: Cartesian mask must be column-constant");
        const double achieved = achieved_acceleration();
        require(std::abs(achieved - acceleration) <= 0.15 * acceleration,
                "SamplingMask: achieved acceleration " + std::to_string(achieved) +
                    " outside 15% of declared " + std::to_string(acceleration));
    }
};

namespace detail {

/// Total sampled-column budget implied by the declared factor, ACS included.
inline int64_t column_budget(int64_t w, double acceleration) {
    return std::llround(static_cast<double>(w) / acceleration);
}

inline Tensor all_ones(int64_t h, int64_t w) { return Tensor::full({h, w}, 1.0); }

inline void set_column(Tensor& m, int64_t x) {
    for (int64_t y = 0; y < m.dim(0); ++y) m.at({y, x}) = 1.0;
}

inline void force_acs(Tensor& m, int64_t acs) {
    const int64_t c0 = acs_start(m.dim(1), acs);
    for (int64_t x = c0; x < c0 + acs; ++x) set_column(m, x);
}

/// Column indices outside the ACS band, in increasing order.
inline std::vector<int64_t> non_acs_columns(int64_t w, int64_t acs) {
    const int64_t c0 = acs_start(w, acs);
    std::vector<int64_t> cols;
    cols.reserve(static_cast<size_t>(w - acs));
    for (int64_t x = 0; x < w; ++x)
        if (x < c0 || x >= c0 + acs) cols.push_back(x);
    return cols;
}

} // namespace detail

/// Equispaced Cartesian mask. The sampled-column count is the budget
/// round(W/acceleration); ACS columns count toward it and the remainder is
/// spread evenly over the non-ACS columns, rotated by `offset`. With a zero
/// ACS width this reduces to every round(acceleration)-th column.
inline SamplingMask make_uniform_mask(int64_t h, int64_t w, double acceleration,
                                      int64_t acs_lines, int64_t offset = 0) {
    require(h >= 1 && w >= 1, "make_uniform_mask: bad shape");
    require(acceleration >= 1.0, "make_uniform_mask: acceleration must be >= 1");
    require(acs_lines >= 0 && acs_lines <= w, "make_uniform_mask: bad ACS width");
    SamplingMask m;
    m.trajectory = Trajectory::uniform;
    m.acceleration = acceleration;
    m.acs_lines = acs_lines;
    m.seed = static_cast<uint64_t>(offset);
    if (acceleration == 1.0) {
        m.data = detail::all_ones(h, w);
        m.validate();
        return m;
    }
    m.data = Tensor({h, w});
    detail::force_acs(m.data, acs_lines);
    const auto ring = detail::non_acs_columns(w, acs_lines);
    const int64_t budget = detail::column_budget(w, acceleration);
    int64_t extras = std::max<int64_t>(0, budget - acs_lines);
    extras = std::min<int64_t>(extras, static_cast<int64_t>(ring.size()));
    if (extras > 0) {
        const int64_t ring_n = static_cast<int64_t>(ring.size());
        const int64_t shift = ((offset % ring_n) + ring_n) % ring_n;
        for (int64_t i = 0; i < extras; ++i) {
            const int64_t pos = (i * ring_n / extras + shift) % ring_n;
            detail::set_column(m.data, ring[static_cast<size_t>(pos)]);
        }
    }
    m.validate();
    return m;
}

/// Random Cartesian mask with line density falling off as a Gaussian of
/// sigma = W/6 around the k-space center. Exactly
/// max(0, round(W/acceleration) - acs_lines) non-ACS columns are drawn
/// without replacement.
inline SamplingMask make_gaussian_mask(int64_t h, int64_t w, double acceleration,
                                       int64_t acs_lines, uint64_t seed) {
    require(h >= 1 && w >= 1, "make_gaussian_mask: bad shape");
    require(acceleration >= 1.0, "make_gaussian_mask: acceleration must be >= 1");
    require(acs_lines >= 0 && acs_lines <= w, "make_gaussian_mask: bad ACS width");
    SamplingMask m;
    m.trajectory = Trajectory::gaussian;
    m.acceleration = acceleration;
    m.acs_lines = acs_lines;
    m.seed = seed;
    if (acceleration == 1.0) {
        m.data = detail::all_ones(h, w);
        m.validate();
        return m;
    }
    m.data = Tensor({h, w});
    detail::force_acs(m.data, acs_lines);
    auto ring = detail::non_acs_columns(w, acs_lines);
    int64_t extras = std::max<int64_t>(0, detail::column_budget(w, acceleration) - acs_lines);
    extras = std::min<int64_t>(extras, static_cast<int64_t>(ring.size()));
    const double sigma = static_cast<double>(w) / 6.0;
    const double center = static_cast<double>(w / 2);
    std::vector<double> weight(ring.size());
    for (size_t i = 0; i < ring.size(); ++i) {
        const double d = static_cast<double>(ring[i]) - center;
        weight[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    }
    Rng rng(seed);
    for (int64_t drawn = 0; drawn < extras; ++drawn) {
        double total = 0.0;
        for (double v : weight) total += v;
        double u = rng.uniform() * total;
        size_t pick = 0;
        for (size_t i = 0; i < weight.size(); ++i) {
            u -= weight[i];
            if (u <= 0.0) {
                pick = i;
                break;
            }
            pick = i;
        }
        detail::set_column(m.data, ring[pick]);
        weight[pick] = 0.0;
    }
    m.validate();
    return m;
}

/// Golden-angle increment between consecutive spokes, in radians.
inline constexpr double kGoldenAngleRad = 111.246 * fft::kPi / 180.0;

/// Marks the line through the array center at `angle` (radians, measured
/// from the +x axis). Unit steps along the dominant axis give a gap-free
/// Bresenham-style trace; the trace is symmetric about the center, so masks
/// built from spokes are 180-degree rotation symmetric for odd H and W.
inline void rasterize_spoke(Tensor& m, double angle) {
    require(m.rank() == 2, "rasterize_spoke: expected [H, W]");
    const int64_t h = m.dim(0), w = m.dim(1);
    const int64_t cy = h / 2, cx = w / 2;
    const double dy = std::sin(angle), dx = std::cos(angle);
    const double step = 1.0 / std::max(std::abs(dx), std::abs(dy));
    const double tmax = 0.5 * std::hypot(static_cast<double>(h), static_cast<double>(w)) + 1.0;
    for (double t = 0.0; t <= tmax; t += step)
        for (double s : {t, -t}) {
            const int64_t y = cy + std::lround(s * dy);
            const int64_t x = cx + std::lround(s * dx);
            if (y >= 0 && y < h && x >= 0 && x < w) m.at({y, x}) = 1.0;
        }
}

/// Pseudo-radial mask: spokes at golden-angle increments from a seeded start
/// angle, over a forced ACS band. The spoke count is tuned so the achieved
/// sampling fraction lands as close as possible to 1/acceleration.
inline SamplingMask make_pseudo_radial_mask(int64_t h, int64_t w, double acceleration,
                                            int64_t acs_lines, uint64_t seed) {
    require(h >= 1 && w >= 1, "make_pseudo_radial_mask: bad shape");
    require(acceleration >= 1.0, "make_pseudo_radial_mask: acceleration must be >= 1");
    require(acs_lines >= 0 && acs_lines <= w, "make_pseudo_radial_mask: bad ACS width");
    SamplingMask m;
    m.trajectory = Trajectory::pseudo_radial;
    m.acceleration = acceleration;
    m.acs_lines = acs_lines;
    m.seed = seed;
    if (acceleration == 1.0) {
        m.data = detail::all_ones(h, w);
        m.validate();
        return m;
    }
    Rng rng(seed);
    const double start = rng.uniform(0.0, fft::kPi);
    const double target = static_cast<double>(h) * static_cast<double>(w) / acceleration;

    Tensor acc({h, w});
    detail::force_acs(acc, acs_lines);
    auto count_ones = [&acc]() {
        int64_t n = 0;
        for (int64_t i = 0; i < acc.size(); ++i) n += (acc[i] != 0.0);
        return n;
    };
    const int64_t cap = 8 * std::max(h, w);
    int64_t best_count = 0;
    double best_diff = std::abs(static_cast<double>(count_ones()) - target);
    for (int64_t s = 1; s <= cap; ++s) {
        rasterize_spoke(acc, start + static_cast<double>(s - 1) * kGoldenAngleRad);
        const double ones = static_cast<double>(count_ones());
        const double diff = std::abs(ones - target);
        if (diff < best_diff) {
            best_diff = diff;
            best_count = s;
        }
        // The union only grows; once well past the target nothing improves.
        if (ones > 1.3 * target) break;
    }
    m.data = Tensor({h, w});
    detail::force_acs(m.data, acs_lines);
    for (int64_t s = 1; s <= best_count; ++s)
        rasterize_spoke(m.data, start + static_cast<double>(s - 1) * kGoldenAngleRad);
    m.validate();
    return m;
}

/// Elementwise mask application across every adjacent and coil plane;
/// idempotent, and exact zeros at unsampled coordinates.
inline MultiCoilKSpace apply_mask(const MultiCoilKSpace& ksp, const SamplingMask& mask) {
    require(mask.height() == ksp.height() && mask.width() == ksp.width(),
            "apply_mask: mask/k-space shape mismatch");
    MultiCoilKSpace out;
    out.data = Tensor(ksp.data.shape());
    out.central_index = ksp.central_index;
    const int64_t planes = ksp.adjacents() * ksp.coils();
    const int64_t hw = ksp.height() * ksp.width();
    for (int64_t p = 0; p < planes; ++p)
        for (int64_t i = 0; i < hw; ++i) {
            if (mask.data[i] == 0.0) continue;
            out.data[(p * hw + i) * 2] = ksp.data[(p * hw + i) * 2];
            out.data[(p * hw + i) * 2 + 1] = ksp.data[(p * hw + i) * 2 + 1];
        }
    return out;
}

} // namespace mrrecon
