// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mrrecon/autodiff/tape.hpp"
#include "mrrecon/core/errors.hpp"
#include "mrrecon/core/tensor.hpp"

// AdamW with decoupled weight decay, global-norm gradient clipping, and a
// step decay schedule. Moment buffers live in the optimizer, keyed by the
// position of the parameter in the construction list.

namespace mrrecon::train {

using ad::Param;

struct AdamWConfig {
    double lr = 0.002;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.1;
};

class AdamW {
public:
    explicit AdamW(std::vector<Param*> params, AdamWConfig cfg = {})
        : params_(std::move(params)), cfg_(cfg) {
        require(!params_.empty(), "AdamW: no parameters");
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (Param* p : params_) {
            require(p != nullptr, "AdamW: null parameter");
            m_.emplace_back(p->value.shape());
            v_.emplace_back(p->value.shape());
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (size_t k = 0; k < params_.size(); ++k) {
            Param& p = *params_[k];
            Tensor& m = m_[k];
            Tensor& v = v_[k];
            for (int64_t i = 0; i < p.value.size(); ++i) {
                const double g = p.grad[i];
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                p.value[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                         cfg_.weight_decay * p.value[i]);
            }
        }
    }

    void zero_grad() {
        for (Param* p : params_) p->zero_grad();
    }

    void set_lr(double lr) { cfg_.lr = lr; }
    double lr() const { return cfg_.lr; }
    int64_t steps_taken() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    std::vector<Param*> params_;
    AdamWConfig cfg_;
    std::vector<Tensor> m_, v_;
    int64_t t_ = 0;
};

/// Scales gradients in place so their joint L2 norm does not exceed
/// `max_norm`; returns the norm before clipping.
inline double clip_global_norm(const std::vector<Param*>& params, double max_norm) {
    require(max_norm > 0.0, "clip_global_norm: max_norm must be positive");
    double sq = 0.0;
    for (Param* p : params)
        for (int64_t i = 0; i < p->grad.size(); ++i) sq += p->grad[i] * p->grad[i];
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (Param* p : params)
            for (int64_t i = 0; i < p->grad.size(); ++i) p->grad[i] *= scale;
    }
    return norm;
}

/// Step decay: lr(epoch) = base * gamma^floor(epoch / step_size).
class StepLR {
public:
    StepLR(double base_lr, int64_t step_size = 11, double gamma = 0.1)
        : base_(base_lr), step_size_(step_size), gamma_(gamma) {
        require(step_size_ >= 1, "StepLR: step_size must be >= 1");
    }

    double lr_for_epoch(int64_t epoch) const {
        require(epoch >= 0, "StepLR: negative epoch");
        return base_ * std::pow(gamma_, static_cast<double>(epoch / step_size_));
    }

    void apply(AdamW& opt, int64_t epoch) const { opt.set_lr(lr_for_epoch(epoch)); }

private:
    double base_;
    int64_t step_size_;
    double gamma_;
};

} // namespace mrrecon::train
