// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mrrecon/autodiff/complex_ops.hpp"
#include "mrrecon/autodiff/tape.hpp"
#include "mrrecon/kspace/ops.hpp"
#include "mrrecon/nn/apunet.hpp"
#include "mrrecon/sampling/masks.hpp"

// The generator: sensitivity-map estimation from the ACS region, then N
// reconstructor modules, each refining the coil-combined image stack with an
// attention-prompt UNet and applying the data-consistency update
//   k(t+1) = k(t) - eta(t) * M * (k(t) - k(0)) + G_k.
// G_k is the k-space of the network's correction, so a zero-weight body
// leaves G_k = 0 and the cascade reduces to pure data consistency. The
// reconstructor bodies therefore run without the UNet's global input skip;
// the SME keeps it (an untrained SME is the identity on ACS images).

namespace mrrecon::recon {

using ad::Param;
using ad::ParamStore;
using ad::Tape;
using ad::Var;

struct GeneratorConfig {
    int64_t num_reconstructors = 12;
    int64_t adjacent = 5;  // odd adjacent stack height T
    int64_t acs_lines = 16;
    nn::APUNetConfig apunet;  // reconstructor body; channels forced to 2*adjacent
    nn::APUNetConfig sme;     // map estimator body; channels forced to 2
    double eta_init = 1.0;    // starts as hard data consistency
    bool share_step_weights = false;
    // Zero the step bodies' head convs so the unrolled cascade begins at the
    // data-consistency fixed point (zero-filled quality) instead of injecting
    // random k-space corrections.
    bool zero_init_steps = true;

    static GeneratorConfig tiny(int64_t adjacent_frames, int64_t steps) {
        GeneratorConfig c;
        c.num_reconstructors = steps;
        c.adjacent = adjacent_frames;
        c.apunet = nn::APUNetConfig::tiny(2 * adjacent_frames);
        c.sme = nn::APUNetConfig::tiny(2);
        return c;
    }

    void validate() const {
        require(num_reconstructors >= 0, "GeneratorConfig: negative step count");
        require(adjacent >= 1 && adjacent % 2 == 1, "GeneratorConfig: adjacent must be odd");
        require(acs_lines >= 1, "GeneratorConfig: acs region empty");
    }
};

/// Data-consistency update as a tape expression. k0 enters as a
/// constant; mask broadcasts over adjacents and coils; G_k is added at every
/// location, sampled or not.
inline Var dc_update(Tape& t, Var k_t, const Tensor& k0, const Tensor& mask, Var eta, Var g_k) {
    require(t.val(k_t).same_shape(k0), "dc_update: k shapes differ");
    require(t.val(g_k).same_shape(k0), "dc_update: G_k shape differs");
    Var diff = ad::sub(t, k_t, t.constant(k0));
    Var masked = ad::mask_mul(t, diff, mask);
    Var corrected = ad::sub(t, k_t, ad::scale_by(t, masked, eta));
    return ad::add(t, corrected, g_k);
}

/// Per-step record handed to the loss and the discriminator feeds.
struct StepOutput {
    Var k_central;  // [C, H, W, 2] central-adjacent k-space after the step
    Var image;      // [H, W] RSS magnitude of the central slice
};

struct GeneratorForward {
    Var k_final;    // [T, C, H, W, 2]
    Var maps;       // [C, H, W, 2] RSS-normalized sensitivity maps
    std::vector<StepOutput> steps;
};

class Generator {
public:
    Generator(ParamStore& ps, GeneratorConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        nn::APUNetConfig sme_cfg = cfg_.sme;
        sme_cfg.in_channels = sme_cfg.out_channels = 2;
        sme_ = std::make_unique<nn::APUNet>(ps, "sme.", sme_cfg);
        nn::APUNetConfig body = cfg_.apunet;
        body.in_channels = body.out_channels = 2 * cfg_.adjacent;
        body.input_residual = false;
        body.zero_init_output = cfg_.zero_init_steps;
        if (cfg_.share_step_weights && cfg_.num_reconstructors > 0)
            shared_ = std::make_unique<nn::APUNet>(ps, "generator.shared.", body);
        for (int64_t s = 0; s < cfg_.num_reconstructors; ++s) {
            if (!cfg_.share_step_weights)
                steps_.push_back(std::make_unique<nn::APUNet>(
                    ps, "generator.step" + std::to_string(s) + ".", body));
            etas_.push_back(&ps.constant("eta." + std::to_string(s), {1}, cfg_.eta_init));
        }
    }

    const GeneratorConfig& config() const { return cfg_; }
    const nn::APUNet& sme() const { return *sme_; }
    double eta(int64_t step) const { return etas_[static_cast<size_t>(step)]->value[0]; }

    /// ACS coil images through the shared map estimator, coils stacked along
    /// the batch axis, then RSS normalization. Differentiable in the SME
    /// parameters; k0 is data.
    Var estimate_maps(Tape& t, const MultiCoilKSpace& k0) const {
        MultiCoilKSpace acs = extract_acs(k0, cfg_.acs_lines);
        Tensor central = acs.central();  // [C, H, W, 2]
        Var img = ad::cfft2(t, t.constant(std::move(central)), true);
        Var batched = ad::split_complex_channels(t, img);        // [C, 2, H, W]
        Var refined = sme_->forward(t, batched);
        Var maps = ad::merge_complex_channels(t, refined);       // [C, H, W, 2]
        return ad::rss_normalize(t, maps);
    }

    /// One reconstructor module: reduce, refine, expand, transform, update.
    Var reconstructor_step(Tape& t, int64_t step, Var k_t, const Tensor& k0, Var maps,
                           Var maps_conj, const Tensor& mask) const {
        Var i_mc = ad::cfft2(t, k_t, true);                     // [T, C, H, W, 2]
        Var i_sc = ad::coil_reduce(t, i_mc, maps_conj);         // [T, H, W, 2]
        Var stacked = ad::complex_to_channels(t, i_sc);         // [1, 2T, H, W]
        const nn::APUNet& body = cfg_.share_step_weights ? *shared_ : *steps_[static_cast<size_t>(step)];
        Var refined = body.forward(t, stacked);
        Var i_rf = ad::channels_to_complex(t, refined);         // [T, H, W, 2]
        Var i_ss = ad::coil_expand(t, i_rf, maps);              // [T, C, H, W, 2]
        Var g_k = ad::cfft2(t, i_ss, false);
        Var eta = t.leaf(*etas_[static_cast<size_t>(step)]);
        return dc_update(t, k_t, k0, mask, eta, g_k);
    }

    /// Runs map estimation once, then every reconstructor step, recording the
    /// central k-space and RSS image after each step.
    GeneratorForward forward(Tape& t, const MultiCoilKSpace& k0,
                             const SamplingMask& mask) const {
        require(k0.adjacents() == cfg_.adjacent, "generator: adjacent count mismatch");
        require(mask.data.dim(0) == k0.height() && mask.data.dim(1) == k0.width(),
                "generator: mask shape mismatch");
        GeneratorForward out;
        out.maps = estimate_maps(t, k0);
        Var maps_conj = ad::conj(t, out.maps);
        Var k = t.constant(k0.data);
        for (int64_t s = 0; s < cfg_.num_reconstructors; ++s) {
            k = reconstructor_step(t, s, k, k0.data, out.maps, maps_conj, mask.data);
            StepOutput rec;
            rec.k_central = ad::slice_dim0(t, k, k0.central_index);      // [C, H, W, 2]
            rec.image = ad::rss_combine(t, ad::cfft2(t, rec.k_central, true));
            out.steps.push_back(rec);
        }
        out.k_final = k;
        return out;
    }

private:
    GeneratorConfig cfg_;
    std::unique_ptr<nn::APUNet> sme_;
    std::unique_ptr<nn::APUNet> shared_;
    std::vector<std::unique_ptr<nn::APUNet>> steps_;
    std::vector<Param*> etas_;
};

/// RSS magnitude of the central slice of a k-space volume; the plain
/// inference path with no tape.
inline Tensor reconstruct_image(const MultiCoilKSpace& k) {
    return coil_combine_rss(ifft2c(k.central()));
}

} // namespace mrrecon::recon
