// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrrecon/nn/layers.hpp"

// Attention-prompt UNet: encoder-decoder with squeeze-excitation channel
// attention in every block and a learned prompt bank adapted to the input at
// the bottom and at each decoder level. The network predicts a residual that
// is added to its input, so a zero-weight network is the identity.

namespace mrrecon::nn {

struct APUNetConfig {
    int64_t levels = 4;
    int64_t base_channels = 32;
    std::vector<int64_t> channel_mult = {1, 2, 4, 8};
    int64_t in_channels = 10;   // 2 * adjacents for reconstructor use
    int64_t out_channels = 10;
    int64_t attention_reduction = 8;
    PromptConfig prompt;
    bool encoder_prompts = false;  // ablation flag; decoder-side is the default
    bool input_residual = true;    // y = x + net(x); off when the caller wants the raw correction
    bool zero_init_output = false; // zero the head conv so the net starts as the zero map

    /// Two-level, eight-channel preset for tests and desk-scale runs.
    static APUNetConfig tiny(int64_t in_ch) {
        APUNetConfig c;
        c.levels = 2;
        c.base_channels = 8;
        c.channel_mult = {1, 2};
        c.in_channels = in_ch;
        c.out_channels = in_ch;
        c.attention_reduction = 8;
        c.prompt.components = 2;
        c.prompt.prompt_size = 4;
        return c;
    }

    int64_t channels_at(int64_t level) const {
        return base_channels * channel_mult[static_cast<size_t>(level)];
    }

    void validate() const {
        require(levels >= 2, "APUNetConfig: levels must be >= 2");
        require(static_cast<int64_t>(channel_mult.size()) == levels,
                "APUNetConfig: channel_mult must list one factor per level");
        require(in_channels >= 1 && out_channels >= 1, "APUNetConfig: bad channel counts");
        require(in_channels == out_channels,
                "APUNetConfig: residual prediction requires in_channels == out_channels");
        require(attention_reduction >= 1, "APUNetConfig: bad attention reduction");
        for (int64_t l = 0; l < levels; ++l)
            require(channels_at(l) % attention_reduction == 0,
                    "APUNetConfig: channels must divide by attention_reduction");
        require(prompt.components >= 1 && prompt.prompt_size >= 1, "APUNetConfig: bad prompt");
    }
};

class APUNet {
public:
    APUNet(ParamStore& ps, std::string prefix, APUNetConfig cfg)
        : cfg_(std::move(cfg)), prefix_(std::move(prefix)) {
        cfg_.validate();
        const int64_t L = cfg_.levels;
        stem_ = detail::make_conv(ps, prefix_ + "stem", cfg_.channels_at(0), cfg_.in_channels, 3);
        for (int64_t i = 0; i + 1 < L; ++i) {
            enc_.emplace_back(ps, prefix_ + "enc" + std::to_string(i), cfg_.channels_at(i),
                              cfg_.attention_reduction);
            if (cfg_.encoder_prompts)
                enc_prompt_.emplace_back(ps, prefix_ + "enc" + std::to_string(i) + ".prompt",
                                         cfg_.channels_at(i), cfg_.prompt);
            down_.push_back(detail::make_conv(ps, prefix_ + "down" + std::to_string(i),
                                              cfg_.channels_at(i + 1), cfg_.channels_at(i), 3));
        }
        bottom_ = detail::CABlock(ps, prefix_ + "bottom", cfg_.channels_at(L - 1),
                                  cfg_.attention_reduction);
        bottom_prompt_ = detail::PromptBlock(ps, prefix_ + "bottom.prompt", cfg_.channels_at(L - 1),
                                             cfg_.prompt);
        for (int64_t i = L - 2; i >= 0; --i) {
            const std::string dn = prefix_ + "dec" + std::to_string(i);
            up_.push_back(detail::make_conv(ps, dn + ".up", cfg_.channels_at(i),
                                            cfg_.channels_at(i + 1), 3));
            fuse_.push_back(detail::make_conv(ps, dn + ".fuse", cfg_.channels_at(i),
                                              2 * cfg_.channels_at(i), 3));
            dec_prompt_.emplace_back(ps, dn + ".prompt", cfg_.channels_at(i), cfg_.prompt);
            dec_.emplace_back(ps, dn + ".block", cfg_.channels_at(i), cfg_.attention_reduction);
        }
        head_ = cfg_.zero_init_output
                    ? detail::make_zero_conv(ps, prefix_ + "head", cfg_.out_channels,
                                             cfg_.channels_at(0), 3)
                    : detail::make_conv(ps, prefix_ + "head", cfg_.out_channels,
                                        cfg_.channels_at(0), 3);
    }

    const APUNetConfig& config() const { return cfg_; }
    const std::string& prefix() const { return prefix_; }

    /// [B, in_channels, H, W] -> same shape; input is reflect-padded to the
    /// level-count divisibility requirement and cropped back on exit.
    Var forward(Tape& t, Var x) const {
        const Tensor& vx = t.val(x);
        require(vx.rank() == 4, "apunet: expected [B, C, H, W]");
        require(vx.dim(1) == cfg_.in_channels, "apunet: channel count mismatch");
        const int64_t H = vx.dim(2), W = vx.dim(3);
        const int64_t div = int64_t{1} << (cfg_.levels - 1);
        const int64_t ph = (div - H % div) % div;
        const int64_t pw = (div - W % div) % div;
        require(ph < H && pw < W,
                "apunet: spatial dims too small to pad to the required multiple of " +
                    std::to_string(div));
        Var h = x;
        if (ph > 0 || pw > 0) h = ad::pad_reflect(t, h, 0, ph, 0, pw);

        h = ad::gelu(t, detail::apply_conv(t, stem_, h, 1, 1));
        std::vector<Var> skips;
        for (size_t i = 0; i + 1 < static_cast<size_t>(cfg_.levels); ++i) {
            h = enc_[i].forward(t, h);
            if (cfg_.encoder_prompts) h = enc_prompt_[i].forward(t, h);
            skips.push_back(h);
            h = ad::gelu(t, detail::apply_conv(t, down_[i], h, 2, 1));
        }
        h = bottom_.forward(t, h);
        h = bottom_prompt_.forward(t, h);
        for (size_t d = 0; d < up_.size(); ++d) {
            const size_t level = static_cast<size_t>(cfg_.levels) - 2 - d;
            h = ad::gelu(t, detail::apply_conv(t, up_[d], ad::upsample_nearest2(t, h), 1, 1));
            h = ad::concat_channels(t, h, skips[level]);
            h = ad::gelu(t, detail::apply_conv(t, fuse_[d], h, 1, 1));
            h = dec_prompt_[d].forward(t, h);
            h = dec_[d].forward(t, h);
        }
        Var out = detail::apply_conv(t, head_, h, 1, 1);
        if (ph > 0 || pw > 0) out = ad::crop_spatial(t, out, 0, 0, H, W);
        return cfg_.input_residual ? ad::add(t, x, out) : out;
    }

private:
    APUNetConfig cfg_;
    std::string prefix_;
    detail::ConvP stem_, head_;
    std::vector<detail::CABlock> enc_, dec_;
    std::vector<detail::PromptBlock> enc_prompt_, dec_prompt_;
    detail::PromptBlock bottom_prompt_;
    detail::CABlock bottom_;
    std::vector<detail::ConvP> down_, up_, fuse_;
};

} // namespace mrrecon::nn
