// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <string>

#include "mrrecon/autodiff/image_ops.hpp"
#include "mrrecon/autodiff/tape.hpp"
#include "mrrecon/core/errors.hpp"

// Building blocks shared by the UNet and the discriminator.

namespace mrrecon::nn {

using ad::Param;
using ad::ParamStore;
using ad::Tape;
using ad::Var;

struct PromptConfig {
    int64_t components = 5;   // bank entries N_p
    int64_t prompt_size = 8;  // spatial extent of each bank entry
};

namespace detail {

/// conv weight + zero bias pair registered under `name`.w / `name`.b.
struct ConvP {
    Param* w = nullptr;
    Param* b = nullptr;
};

inline ConvP make_conv(ParamStore& ps, const std::string& name, int64_t cout, int64_t cin,
                       int64_t k) {
    ConvP c;
    c.w = &ps.kaiming(name + ".w", {cout, cin, k, k}, cin * k * k);
    c.b = &ps.zeros(name + ".b", {cout});
    return c;
}

/// All-zero weights and bias: the layer starts as the zero map, so a branch
/// it terminates contributes nothing until training moves it.
inline ConvP make_zero_conv(ParamStore& ps, const std::string& name, int64_t cout, int64_t cin,
                            int64_t k) {
    ConvP c;
    c.w = &ps.zeros(name + ".w", {cout, cin, k, k});
    c.b = &ps.zeros(name + ".b", {cout});
    return c;
}

inline Var apply_conv(Tape& t, const ConvP& c, Var x, int64_t stride, int64_t pad) {
    return ad::conv2d(t, x, t.leaf(*c.w), t.leaf(*c.b), stride, pad);
}

/// Residual channel-attention unit: y = x + SE(conv(x)). With gates driven
/// to one this reduces to x + conv(x).
struct CABlock {
    ConvP conv;
    ConvP se1;
    ConvP se2;
    int64_t channels = 0, reduced = 0;

    CABlock() = default;
    CABlock(ParamStore& ps, const std::string& name, int64_t c, int64_t reduction) {
        channels = c;
        reduced = std::max<int64_t>(1, c / reduction);
        conv = make_conv(ps, name + ".conv", c, c, 3);
        se1.w = &ps.kaiming(name + ".se1.w", {c, reduced}, c);
        se1.b = &ps.zeros(name + ".se1.b", {reduced});
        se2.w = &ps.kaiming(name + ".se2.w", {reduced, c}, reduced);
        se2.b = &ps.zeros(name + ".se2.b", {c});
    }

    Var forward(Tape& t, Var x) const {
        Var u = apply_conv(t, conv, x, 1, 1);
        Var pooled = ad::global_avg_pool(t, u);  // [B, C]
        Var z = ad::gelu(t, ad::add_rowvec(t, ad::matmul(t, pooled, t.leaf(*se1.w)), t.leaf(*se1.b)));
        Var gates = ad::sigmoid(t, ad::add_rowvec(t, ad::matmul(t, z, t.leaf(*se2.w)), t.leaf(*se2.b)));
        return ad::add(t, x, ad::mul_channel(t, u, gates));
    }
};

/// Discriminative prompt block: pooled features pick a convex mix of the
/// bank, the mix is resized to the feature plane, concatenated, and fused
/// back to the feature channel count.
struct PromptBlock {
    Param* bank = nullptr;  // [N_p, C, hp, wp]
    ConvP proj;             // linear [C, N_p]
    ConvP fuse;             // 3x3 conv [C, 2C]
    int64_t channels = 0, components = 0, psize = 0;

    PromptBlock() = default;
    PromptBlock(ParamStore& ps, const std::string& name, int64_t c, const PromptConfig& pc) {
        channels = c;
        components = pc.components;
        psize = pc.prompt_size;
        bank = &ps.normal(name + ".bank", {components, c, psize, psize}, 0.02);
        proj.w = &ps.kaiming(name + ".proj.w", {c, components}, c);
        proj.b = &ps.zeros(name + ".proj.b", {components});
        fuse = make_conv(ps, name + ".fuse", c, 2 * c, 3);
    }

    /// Convex mixing weights over the bank, [B, N_p]; rows sum to one.
    Var component_weights(Tape& t, Var features) const {
        Var pooled = ad::global_avg_pool(t, features);  // [B, C]
        Var logits = ad::add_rowvec(t, ad::matmul(t, pooled, t.leaf(*proj.w)), t.leaf(*proj.b));
        return ad::softmax_rows(t, logits);
    }

    Var forward(Tape& t, Var features) const {
        const Tensor& vf = t.val(features);
        require(vf.dim(2) >= 2 && vf.dim(3) >= 2, "prompt block: spatial size must be >= 2x2");
        const int64_t B = vf.dim(0), H = vf.dim(2), W = vf.dim(3);
        Var weights = component_weights(t, features);  // [B, N_p]
        Var bank_flat = ad::reshape(t, t.leaf(*bank), {components, channels * psize * psize});
        Var mixed = ad::reshape(t, ad::matmul(t, weights, bank_flat), {B, channels, psize, psize});
        Var sized = ad::resize_bilinear(t, mixed, H, W);
        Var cat = ad::concat_channels(t, features, sized);
        return apply_conv(t, fuse, cat, 1, 1);
    }
};

} // namespace detail
} // namespace mrrecon::nn
