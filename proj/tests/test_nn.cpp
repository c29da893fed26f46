// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "gradcheck.hpp"
#include "mrrecon/nn/apunet.hpp"
#include "mrrecon/nn/discriminator.hpp"

using mrrecon::Rng;
using mrrecon::Tensor;
using mrrecon::ValidationError;
using mrrecon::ad::Param;
using mrrecon::ad::ParamStore;
using mrrecon::ad::Tape;
using mrrecon::ad::Var;
namespace ad = mrrecon::ad;
namespace nn = mrrecon::nn;

namespace {

Tensor random_tensor(const std::vector<int64_t>& shape, uint64_t seed, double scale = 1.0) {
    Tensor t(shape);
    Rng rng(seed);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

void zero_all(ParamStore& ps) {
    for (Param* p : ps.all())
        for (int64_t i = 0; i < p->value.size(); ++i) p->value[i] = 0.0;
}

} // namespace

TEST_CASE("apunet preserves shape for the reconstructor channel layout") {
    ParamStore ps(7);
    nn::APUNet net(ps, "u.", nn::APUNetConfig::tiny(10));  // T = 5 adjacents
    Tape t;
    Tensor x = random_tensor({1, 10, 64, 64}, 11);
    Var y = net.forward(t, t.constant(x));
    const Tensor& vy = t.val(y);
    REQUIRE(vy.rank() == 4);
    REQUIRE(vy.dim(0) == 1);
    REQUIRE(vy.dim(1) == 10);
    REQUIRE(vy.dim(2) == 64);
    REQUIRE(vy.dim(3) == 64);
    for (int64_t i = 0; i < vy.size(); ++i) REQUIRE(std::isfinite(vy[i]));
}

TEST_CASE("apunet pads and crops odd spatial sizes internally") {
    ParamStore ps(8);
    nn::APUNet net(ps, "u.", nn::APUNetConfig::tiny(4));
    Tape t;
    Tensor x = random_tensor({1, 4, 13, 11}, 12);
    Var y = net.forward(t, t.constant(x));
    REQUIRE(t.val(y).dim(2) == 13);
    REQUIRE(t.val(y).dim(3) == 11);
}

TEST_CASE("apunet rejects inputs too small to reflect-pad") {
    ParamStore ps(9);
    nn::APUNetConfig cfg = nn::APUNetConfig::tiny(2);
    cfg.levels = 3;
    cfg.channel_mult = {1, 1, 2};
    nn::APUNet net(ps, "u.", cfg);
    Tape t;
    // 3 levels need divisibility by 4; padding 2x2 up to 4x4 needs pad >= dim.
    Tensor x = random_tensor({1, 2, 2, 2}, 13);
    REQUIRE_THROWS_AS(net.forward(t, t.constant(x)), ValidationError);
}

TEST_CASE("apunet with zeroed parameters is the identity") {
    ParamStore ps(10);
    nn::APUNet net(ps, "u.", nn::APUNetConfig::tiny(6));
    zero_all(ps);
    Tape t;
    Tensor x = random_tensor({1, 6, 16, 16}, 14);
    Var y = net.forward(t, t.constant(x));
    const Tensor& vy = t.val(y);
    REQUIRE(vy.same_shape(x));
    for (int64_t i = 0; i < x.size(); ++i) REQUIRE(vy[i] == x[i]);
}

TEST_CASE("apunet without the input skip emits zero at zero weights") {
    ParamStore ps(10);
    nn::APUNetConfig cfg = nn::APUNetConfig::tiny(6);
    cfg.input_residual = false;
    nn::APUNet net(ps, "u.", cfg);
    zero_all(ps);
    Tape t;
    Var y = net.forward(t, t.constant(random_tensor({1, 6, 16, 16}, 15)));
    const Tensor& vy = t.val(y);
    for (int64_t i = 0; i < vy.size(); ++i) REQUIRE(vy[i] == 0.0);
}

TEST_CASE("channel attention with saturated gates adds the convolution") {
    ParamStore ps(11);
    nn::detail::CABlock block(ps, "ca", 8, 8);
    // Large excitation bias drives every sigmoid gate to 1.
    for (int64_t i = 0; i < block.se2.b->value.size(); ++i) block.se2.b->value[i] = 40.0;
    Tensor x = random_tensor({1, 8, 8, 8}, 16);

    Tape t;
    Var y = block.forward(t, t.constant(x));
    Tape t2;
    Var conv = nn::detail::apply_conv(t2, block.conv, t2.constant(x), 1, 1);
    const Tensor& vy = t.val(y);
    const Tensor& vc = t2.val(conv);
    REQUIRE(vy.same_shape(x));
    for (int64_t i = 0; i < x.size(); ++i)
        REQUIRE(std::abs(vy[i] - (x[i] + vc[i])) < 1e-12);
}

TEST_CASE("channel attention on zero input reduces to the bias pathway") {
    ParamStore ps(12);
    nn::detail::CABlock block(ps, "ca", 8, 8);
    Tape t;
    Tensor x({1, 8, 6, 6});
    Var y = block.forward(t, t.constant(x));
    // conv(0) = bias map u; pooled logits come from u alone; output = u * gates.
    Tape t2;
    Var u = nn::detail::apply_conv(t2, block.conv, t2.constant(x), 1, 1);
    const Tensor& vu = t2.val(u);
    std::vector<double> gates(8);
    for (int64_t c = 0; c < 8; ++c) {
        // u is constant per channel (= bias), so the pooled value is the bias.
        double z = 0.0;
        for (int64_t r = 0; r < block.se1.w->value.dim(1); ++r) {
            double acc = block.se1.b->value[r];
            for (int64_t cc = 0; cc < 8; ++cc)
                acc += block.conv.b->value[cc] * block.se1.w->value.at({cc, r});
            const double g = acc * 0.5 *
                (1.0 + std::erf(acc / std::sqrt(2.0)));
            z += g * block.se2.w->value.at({r, c});
        }
        z += block.se2.b->value[c];
        gates[static_cast<size_t>(c)] = 1.0 / (1.0 + std::exp(-z));
    }
    const Tensor& vy = t.val(y);
    for (int64_t c = 0; c < 8; ++c)
        for (int64_t i = 0; i < 36; ++i) {
            const double expect = vu[c * 36 + i] * gates[static_cast<size_t>(c)];
            REQUIRE(std::abs(vy[c * 36 + i] - expect) < 1e-12);
            REQUIRE(std::isfinite(vy[c * 36 + i]));
        }
}

TEST_CASE("prompt mixing weights form a convex combination") {
    ParamStore ps(13);
    nn::PromptConfig pc;
    pc.components = 3;
    pc.prompt_size = 4;
    nn::detail::PromptBlock block(ps, "p", 8, pc);
    Tape t;
    Var w = block.component_weights(t, t.constant(random_tensor({2, 8, 8, 8}, 17)));
    const Tensor& vw = t.val(w);
    REQUIRE(vw.dim(0) == 2);
    REQUIRE(vw.dim(1) == 3);
    for (int64_t b = 0; b < 2; ++b) {
        double sum = 0.0;
        for (int64_t i = 0; i < 3; ++i) {
            REQUIRE(vw.at({b, i}) >= 0.0);
            sum += vw.at({b, i});
        }
        REQUIRE(std::abs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("singleton prompt bank gets weight exactly one") {
    ParamStore ps(14);
    nn::PromptConfig pc;
    pc.components = 1;
    pc.prompt_size = 4;
    nn::detail::PromptBlock block(ps, "p", 8, pc);
    Tape t;
    Var w = block.component_weights(t, t.constant(random_tensor({1, 8, 8, 8}, 18)));
    REQUIRE(t.val(w)[0] == 1.0);
}

TEST_CASE("identical bank entries make the prompt logit-independent") {
    ParamStore ps(15);
    nn::PromptConfig pc;
    pc.components = 2;
    pc.prompt_size = 4;
    nn::detail::PromptBlock block(ps, "p", 4, pc);
    // Copy entry 0 over entry 1 so any convex mix equals entry 0.
    const int64_t half = block.bank->value.size() / 2;
    for (int64_t i = 0; i < half; ++i)
        block.bank->value[half + i] = block.bank->value[i];

    Tensor x = random_tensor({1, 4, 8, 8}, 19);
    Tape t;
    Var y = block.forward(t, t.constant(x));
    // Shift the projection bias: weights change, the mixed prompt must not.
    for (int64_t i = 0; i < block.proj.b->value.size(); ++i)
        block.proj.b->value[i] += (i % 2 == 0) ? 3.0 : -2.0;
    Tape t2;
    Var y2 = block.forward(t2, t2.constant(x));
    const Tensor& v1 = t.val(y);
    const Tensor& v2 = t2.val(y2);
    for (int64_t i = 0; i < v1.size(); ++i) REQUIRE(std::abs(v1[i] - v2[i]) < 1e-12);
}

TEST_CASE("prompt block rejects sub-2x2 features") {
    ParamStore ps(16);
    nn::PromptConfig pc;
    pc.components = 2;
    pc.prompt_size = 4;
    nn::detail::PromptBlock block(ps, "p", 4, pc);
    Tape t;
    Tensor x({1, 4, 1, 1});
    REQUIRE_THROWS_AS(block.forward(t, t.constant(x)), ValidationError);
}

TEST_CASE("apunet forward is deterministic") {
    ParamStore ps(17);
    nn::APUNet net(ps, "u.", nn::APUNetConfig::tiny(4));
    Tensor x = random_tensor({1, 4, 16, 16}, 20);
    Tape t1, t2;
    Var y1 = net.forward(t1, t1.constant(x));
    Var y2 = net.forward(t2, t2.constant(x));
    for (int64_t i = 0; i < x.size(); ++i) REQUIRE(t1.val(y1)[i] == t2.val(y2)[i]);
}

TEST_CASE("apunet gradients match finite differences for every parameter group") {
    ParamStore ps(18);
    nn::APUNetConfig cfg = nn::APUNetConfig::tiny(4);
    nn::APUNet net(ps, "u.", cfg);
    // Odd spatial size exercises the reflect-pad path inside the net.
    Tensor x = random_tensor({1, 4, 9, 7}, 21, 0.5);
    Tensor target = random_tensor({1, 4, 9, 7}, 22, 0.5);
    auto build = [&](Tape& t) {
        Var y = net.forward(t, t.constant(x));
        return ad::mse(t, y, t.constant(target));
    };
    gradcheck::Report rep = gradcheck::check(build, ps.all(), 6);
    INFO(rep.worst);
    REQUIRE(rep.max_rel_err < 1e-4);
}

TEST_CASE("prompt banks receive nonzero gradient from a reconstruction loss") {
    ParamStore ps(19);
    nn::APUNet net(ps, "u.", nn::APUNetConfig::tiny(4));
    Tape t;
    Var y = net.forward(t, t.constant(random_tensor({1, 4, 12, 12}, 23)));
    Var loss = ad::mse(t, y, t.constant(random_tensor({1, 4, 12, 12}, 24)));
    ps.zero_grad();
    t.backward(loss);
    for (Param* p : ps.with_prefix("u.")) {
        if (p->name.find(".bank") == std::string::npos) continue;
        double norm = 0.0;
        for (int64_t i = 0; i < p->grad.size(); ++i) norm += p->grad[i] * p->grad[i];
        INFO(p->name);
        REQUIRE(norm > 0.0);
    }
}

TEST_CASE("discriminator emits a patch logit map larger than 1x1") {
    ParamStore ps(20);
    nn::PatchDiscriminator disc(ps, "d.", nn::DiscriminatorConfig::tiny());
    Tape t;
    Var y = disc.forward(t, t.constant(random_tensor({1, 2, 64, 64}, 25)));
    const Tensor& vy = t.val(y);
    REQUIRE(vy.rank() == 4);
    REQUIRE(vy.dim(1) == 1);
    auto [h, w] = disc.logit_shape(64, 64);
    REQUIRE(vy.dim(2) == h);
    REQUIRE(vy.dim(3) == w);
    REQUIRE(h > 1);
    REQUIRE(w > 1);
}

TEST_CASE("discriminator logit map shifts with a full-stride input shift") {
    ParamStore ps(21);
    nn::DiscriminatorConfig cfg = nn::DiscriminatorConfig::tiny();
    cfg.use_norm = false;  // instance norm is global, not translation covariant
    nn::PatchDiscriminator disc(ps, "d.", cfg);
    const int64_t n = 128;
    Tensor x = random_tensor({1, 2, n, n}, 26);
    const int64_t total_stride = 8;  // three stride-2 blocks
    Tensor xs({1, 2, n, n});
    for (int64_t c = 0; c < 2; ++c)
        for (int64_t y = total_stride; y < n; ++y)
            for (int64_t xx = 0; xx < n; ++xx)
                xs.at({0, c, y, xx}) = x.at({0, c, y - total_stride, xx});
    Tape t;
    Var a = disc.forward(t, t.constant(x));
    Var b = disc.forward(t, t.constant(xs));
    const Tensor& va = t.val(a);
    const Tensor& vb = t.val(b);
    // Map cell r covers input rows [8r-15, 8r+30]. Compare cells whose
    // receptive field avoids both the conv padding and the blank shift band.
    for (int64_t r = 3; r <= 12; ++r)
        for (int64_t c = 2; c <= 12; ++c)
            REQUIRE(std::abs(vb.at({0, 0, r, c}) - va.at({0, 0, r - 1, c})) < 1e-9);
}

TEST_CASE("discriminator rejects inputs below the receptive field") {
    ParamStore ps(22);
    nn::PatchDiscriminator disc(ps, "d.", nn::DiscriminatorConfig::tiny());
    Tape t;
    Tensor x({1, 2, 4, 4});
    REQUIRE_THROWS_AS(disc.forward(t, t.constant(x)), ValidationError);
}

TEST_CASE("discriminator forward is deterministic under fixed weights") {
    ParamStore ps(23);
    nn::PatchDiscriminator disc(ps, "d.", nn::DiscriminatorConfig::tiny());
    Tensor x = random_tensor({1, 2, 32, 32}, 27);
    Tape t1, t2;
    Var y1 = disc.forward(t1, t1.constant(x));
    Var y2 = disc.forward(t2, t2.constant(x));
    for (int64_t i = 0; i < t1.val(y1).size(); ++i)
        REQUIRE(t1.val(y1)[i] == t2.val(y2)[i]);
}
