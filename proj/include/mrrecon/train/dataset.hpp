// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrrecon/core/errors.hpp"
#include "mrrecon/core/rng.hpp"
#include "mrrecon/core/tensor.hpp"
#include "mrrecon/kspace/ops.hpp"
#include "mrrecon/phantom/phantom.hpp"
#include "mrrecon/sampling/masks.hpp"

// Training examples: one (subject, frame) pair with its sampling mask,
// masked and fully sampled k-space stacks, ground-truth images, and the
// zero-filled baseline. Masks are drawn per example from a (trajectory,
// acceleration) grid with seeds derived from (dataset seed, subject, frame),
// so a dataset is a pure function of its inputs.

namespace mrrecon::train {

struct MaskSpec {
    Trajectory trajectory = Trajectory::uniform;
    double acceleration = 4.0;
    int64_t acs_lines = 16;
};

inline SamplingMask make_mask_from_spec(const MaskSpec& spec, int64_t h, int64_t w,
                                        uint64_t seed) {
    switch (spec.trajectory) {
        case Trajectory::uniform:
            return make_uniform_mask(h, w, spec.acceleration, spec.acs_lines,
                                     static_cast<int64_t>(seed % static_cast<uint64_t>(w)));
        case Trajectory::gaussian:
            return make_gaussian_mask(h, w, spec.acceleration, spec.acs_lines, seed);
        case Trajectory::pseudo_radial:
            return make_pseudo_radial_mask(h, w, spec.acceleration, spec.acs_lines, seed);
    }
    throw ValidationError("make_mask_from_spec: unknown trajectory");
}

struct TrainExample {
    MultiCoilKSpace masked;   // [T, C, H, W, 2] after the mask
    MultiCoilKSpace full;     // same stack fully sampled
    SamplingMask mask;
    Tensor k_gt_central;      // [C, H, W, 2]
    Tensor img_gt;            // [H, W] RSS of the central frame
    Tensor img_zf;            // [H, W] zero-filled baseline
    double volume_max = 1.0;  // max RSS intensity over the subject's frames
    std::string contrast;
    double acceleration = 0.0;
    int64_t subject = 0;
    int64_t frame = 0;
};

inline TrainExample make_example(const SubjectRecord& rec, int64_t subject_index,
                                 int64_t frame, const SamplingMask& mask, int64_t adjacent) {
    auto [masked, full] = make_training_example(rec, frame, mask, adjacent);
    TrainExample ex;
    ex.k_gt_central = full.central();
    ex.img_gt = coil_combine_rss(ifft2c(ex.k_gt_central));
    ex.img_zf = coil_combine_rss(ifft2c(masked.central()));
    ex.masked = std::move(masked);
    ex.full = std::move(full);
    ex.mask = mask;
    double vmax = 0.0;
    for (int64_t i = 0; i < rec.image_rss.size(); ++i)
        vmax = std::max(vmax, rec.image_rss[i]);
    require(vmax > 0.0, "make_example: blank subject");
    ex.volume_max = vmax;
    ex.contrast = contrast_name(rec.contrast_tag);
    ex.acceleration = mask.acceleration;
    ex.subject = subject_index;
    ex.frame = frame;
    return ex;
}

/// Every frame of every subject, with the mask spec drawn uniformly from the
/// grid per example. A single-entry grid gives every example that spec.
inline std::vector<TrainExample> build_dataset(const std::vector<SubjectRecord>& subjects,
                                               const std::vector<MaskSpec>& grid,
                                               int64_t adjacent, uint64_t seed) {
    require(!grid.empty(), "build_dataset: empty mask grid");
    std::vector<TrainExample> out;
    for (size_t s = 0; s < subjects.size(); ++s) {
        const SubjectRecord& rec = subjects[s];
        for (int64_t f = 0; f < rec.frames(); ++f) {
            const uint64_t ex_seed =
                mix_seed(seed, (static_cast<uint64_t>(s) << 24) ^ static_cast<uint64_t>(f));
            Rng pick(ex_seed);
            const MaskSpec& ms =
                grid[static_cast<size_t>(pick.uniform_int(0, static_cast<int64_t>(grid.size()) - 1))];
            SamplingMask mask = make_mask_from_spec(ms, rec.height(), rec.width(), ex_seed);
            out.push_back(make_example(rec, static_cast<int64_t>(s), f, mask, adjacent));
        }
    }
    return out;
}

/// Seeded in-place Fisher-Yates shuffle of the per-epoch visit order.
inline std::vector<size_t> epoch_order(size_t n, uint64_t seed, int64_t epoch) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(mix_seed(seed, 0x9e3779b9ULL + static_cast<uint64_t>(epoch)));
    for (size_t i = n; i > 1; --i) {
        const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

} // namespace mrrecon::train
