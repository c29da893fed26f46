// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mrrecon/nn/layers.hpp"

// Patch discriminator: strided convolution stack ending in a single-channel
// logit map (one logit per receptive patch, no global pooling). Input is the
// 2-channel [candidate, zero-filled conditioning] concatenation.

namespace mrrecon::nn {

struct DiscriminatorConfig {
    int64_t layers = 4;         // stride-2 blocks before the logit head
    int64_t base_channels = 64;
    int64_t kernel = 4;
    int64_t stride = 2;
    double leaky_slope = 0.2;
    bool use_norm = true;       // instance norm on all but the first block
    int64_t in_channels = 2;

    static DiscriminatorConfig tiny() {
        DiscriminatorConfig c;
        c.layers = 3;
        c.base_channels = 8;
        return c;
    }

    void validate() const {
        require(layers >= 1, "DiscriminatorConfig: need at least one layer");
        require(base_channels >= 1 && kernel >= 2 && stride >= 1, "DiscriminatorConfig: bad block");
        require(in_channels >= 1, "DiscriminatorConfig: bad input channels");
    }
};

class PatchDiscriminator {
public:
    PatchDiscriminator(ad::ParamStore& ps, std::string prefix, DiscriminatorConfig cfg)
        : cfg_(std::move(cfg)), prefix_(std::move(prefix)) {
        cfg_.validate();
        int64_t cin = cfg_.in_channels;
        for (int64_t i = 0; i < cfg_.layers; ++i) {
            // Channel growth doubles per block, capped at 8x base.
            const int64_t cout = cfg_.base_channels * std::min<int64_t>(int64_t{1} << i, 8);
            const std::string bn = prefix_ + "block" + std::to_string(i);
            blocks_.push_back(detail::make_conv(ps, bn, cout, cin, cfg_.kernel));
            if (cfg_.use_norm && i > 0) {
                norm_gamma_.push_back(&ps.constant(bn + ".norm.gamma", {cout}, 1.0));
                norm_beta_.push_back(&ps.zeros(bn + ".norm.beta", {cout}));
            } else {
                norm_gamma_.push_back(nullptr);
                norm_beta_.push_back(nullptr);
            }
            cin = cout;
        }
        head_ = detail::make_conv(ps, prefix_ + "head", 1, cin, cfg_.kernel);
    }

    const DiscriminatorConfig& config() const { return cfg_; }
    const std::string& prefix() const { return prefix_; }

    /// Spatial size of the logit map for an input plane of the given size.
    /// Throws when the stack would shrink a dimension below one logit.
    std::pair<int64_t, int64_t> logit_shape(int64_t h, int64_t w) const {
        for (int64_t i = 0; i < cfg_.layers; ++i) {
            h = (h + 2 - cfg_.kernel) / cfg_.stride + 1;
            w = (w + 2 - cfg_.kernel) / cfg_.stride + 1;
            require(h >= 1 && w >= 1, "discriminator: input smaller than the receptive field");
        }
        h = h + 2 - cfg_.kernel + 1;
        w = w + 2 - cfg_.kernel + 1;
        require(h >= 1 && w >= 1, "discriminator: input smaller than the receptive field");
        return {h, w};
    }

    /// [B, in_channels, H, W] -> [B, 1, h_p, w_p] patch logits.
    Var forward(Tape& t, Var x) const {
        const Tensor& vx = t.val(x);
        require(vx.rank() == 4, "discriminator: expected [B, C, H, W]");
        require(vx.dim(1) == cfg_.in_channels, "discriminator: channel count mismatch");
        logit_shape(vx.dim(2), vx.dim(3));  // validates the size up front
        Var h = x;
        for (size_t i = 0; i < blocks_.size(); ++i) {
            h = detail::apply_conv(t, blocks_[i], h, cfg_.stride, 1);
            if (norm_gamma_[i] != nullptr)
                h = ad::instance_norm(t, h, t.leaf(*norm_gamma_[i]), t.leaf(*norm_beta_[i]));
            h = ad::leaky_relu(t, h, cfg_.leaky_slope);
        }
        return detail::apply_conv(t, head_, h, 1, 1);
    }

private:
    DiscriminatorConfig cfg_;
    std::string prefix_;
    std::vector<detail::ConvP> blocks_;
    std::vector<Param*> norm_gamma_, norm_beta_;
    detail::ConvP head_;
};

} // namespace mrrecon::nn
