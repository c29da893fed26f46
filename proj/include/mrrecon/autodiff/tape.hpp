// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mrrecon/core/errors.hpp"
#include "mrrecon/core/rng.hpp"
#include "mrrecon/core/tensor.hpp"

namespace mrrecon::ad {

/// Learnable tensor living outside any tape; gradients from every backward
/// pass accumulate here until zero_grad.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
    void zero_grad() { std::fill(grad.data(), grad.data() + grad.size(), 0.0); }
};

/// Named parameter registry with name-hashed deterministic initialization:
/// the draw for a parameter depends only on (store seed, parameter name),
/// never on creation order.
class ParamStore {
public:
    explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

    Param& constant(const std::string& name, const std::vector<int64_t>& shape, double v) {
        return emplace(name, Tensor::full(shape, v));
    }
    Param& zeros(const std::string& name, const std::vector<int64_t>& shape) {
        return constant(name, shape, 0.0);
    }
    Param& normal(const std::string& name, const std::vector<int64_t>& shape, double std) {
        Rng rng(mix_seed(seed_, hash_name(name)));
        Tensor t(shape);
        for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, std);
        return emplace(name, std::move(t));
    }
    /// He-style initialization for convolution and linear weights.
    Param& kaiming(const std::string& name, const std::vector<int64_t>& shape, int64_t fan_in) {
        return normal(name, shape, std::sqrt(2.0 / static_cast<double>(fan_in)));
    }

    Param* find(const std::string& name) {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : params_[it->second].get();
    }
    const Param* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : params_[it->second].get();
    }

    std::vector<Param*> all() {
        std::vector<Param*> out;
        out.reserve(params_.size());
        for (auto& p : params_) out.push_back(p.get());
        return out;
    }
    std::vector<const Param*> all() const {
        std::vector<const Param*> out;
        out.reserve(params_.size());
        for (const auto& p : params_) out.push_back(p.get());
        return out;
    }

    /// Parameters whose names start with the prefix, in creation order.
    std::vector<Param*> with_prefix(const std::string& prefix) {
        std::vector<Param*> out;
        for (auto& p : params_)
            if (p->name.rfind(prefix, 0) == 0) out.push_back(p.get());
        return out;
    }

    void zero_grad() {
        for (auto& p : params_) p->zero_grad();
    }

    uint64_t seed() const { return seed_; }
    size_t size() const { return params_.size(); }

private:
    Param& emplace(const std::string& name, Tensor value) {
        require(index_.find(name) == index_.end(), "duplicate parameter name: " + name);
        index_[name] = params_.size();
        params_.push_back(std::make_unique<Param>(name, std::move(value)));
        return *params_.back();
    }

    uint64_t seed_;
    std::vector<std::unique_ptr<Param>> params_;
    std::map<std::string, size_t> index_;
};

/// Handle into a tape; cheap to copy.
struct Var {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
};

/// Append-only record of one forward computation. Values persist for the
/// tape's lifetime; backward walks the records in reverse once.
class Tape {
public:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&)> back;
        bool needs_grad = false;
        Param* sink = nullptr;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor v) {
        nodes_.push_back(Node{std::move(v), Tensor({1}), nullptr, false, nullptr});
        return Var{static_cast<int32_t>(nodes_.size() - 1)};
    }

    Var leaf(Param& p) {
        nodes_.push_back(Node{p.value, Tensor({1}), nullptr, true, &p});
        return Var{static_cast<int32_t>(nodes_.size() - 1)};
    }

    Var push(Tensor value, bool needs_grad, std::function<void(Tape&)> back) {
        nodes_.push_back(Node{std::move(value), Tensor({1}), std::move(back), needs_grad, nullptr});
        return Var{static_cast<int32_t>(nodes_.size() - 1)};
    }

    const Tensor& val(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }
    Tensor& grad(Var v) { return nodes_[static_cast<size_t>(v.id)].grad; }
    bool needs_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].needs_grad; }
    size_t size() const { return nodes_.size(); }

    /// Seeds d(root)/d(root) = 1 and accumulates into every Param leaf
    /// reachable from it. The root must be scalar.
    void backward(Var root) {
        require(!ran_backward_, "tape backward may run only once");
        require(val(root).size() == 1, "backward root must be scalar");
        ran_backward_ = true;
        // Constants never receive gradient, so they keep the placeholder grad.
        for (size_t i = 0; i <= static_cast<size_t>(root.id); ++i)
            if (nodes_[i].needs_grad || i == static_cast<size_t>(root.id))
                nodes_[i].grad = Tensor(nodes_[i].value.shape());
        nodes_[static_cast<size_t>(root.id)].grad[0] = 1.0;
        for (int32_t i = root.id; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (!n.needs_grad) continue;
            if (n.back) n.back(*this);
            if (n.sink)
                for (int64_t k = 0; k < n.grad.size(); ++k) n.sink->grad[k] += n.grad[k];
        }
    }

private:
    // Deque keeps references from val()/grad() stable while new nodes are
    // appended mid-expression.
    std::deque<Node> nodes_;
    bool ran_backward_ = false;
};

namespace detail {

inline void accumulate(Tape& t, Var target, const Tensor& g) {
    if (!t.needs_grad(target)) return;
    Tensor& dst = t.grad(target);
    for (int64_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
}

/// Appends a node whose backward receives (tape, upstream gradient). The new
/// node's id equals the tape size at call time, captured before the push.
template <class Back>
Var make_node(Tape& t, Tensor value, std::initializer_list<Var> inputs, Back back) {
    bool ng = false;
    for (Var v : inputs) ng = ng || t.needs_grad(v);
    if (!ng) return t.push(std::move(value), false, nullptr);
    const int32_t out_id = static_cast<int32_t>(t.size());
    return t.push(std::move(value), true,
                  [out_id, back](Tape& tp) { back(tp, tp.grad(Var{out_id})); });
}

using EMat = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using CEMat = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

} // namespace detail

// ---- elementwise arithmetic ----

inline Var add(Tape& t, Var a, Var b) {
    require(t.val(a).same_shape(t.val(b)), "add: shape mismatch");
    Tensor out = t.val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] += t.val(b)[i];
    return detail::make_node(t, std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        detail::accumulate(tp, a, g);
        detail::accumulate(tp, b, g);
    });
}

inline Var sub(Tape& t, Var a, Var b) {
    require(t.val(a).same_shape(t.val(b)), "sub: shape mismatch");
    Tensor out = t.val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] -= t.val(b)[i];
    return detail::make_node(t, std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        detail::accumulate(tp, a, g);
        if (tp.needs_grad(b)) {
            Tensor& gb = tp.grad(b);
            for (int64_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
        }
    });
}

inline Var mul(Tape& t, Var a, Var b) {
    require(t.val(a).same_shape(t.val(b)), "mul: shape mismatch");
    Tensor out = t.val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= t.val(b)[i];
    return detail::make_node(t, std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        if (tp.needs_grad(a)) {
            Tensor& ga = tp.grad(a);
            const Tensor& vb = tp.val(b);
            for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * vb[i];
        }
        if (tp.needs_grad(b)) {
            Tensor& gb = tp.grad(b);
            const Tensor& va = tp.val(a);
            for (int64_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * va[i];
        }
    });
}

inline Var div(Tape& t, Var a, Var b) {
    require(t.val(a).same_shape(t.val(b)), "div: shape mismatch");
    Tensor out = t.val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] /= t.val(b)[i];
    return detail::make_node(t, std::move(out), {a, b}, [a, b](Tape& tp, const Tensor& g) {
        const Tensor& va = tp.val(a);
        const Tensor& vb = tp.val(b);
        if (tp.needs_grad(a)) {
            Tensor& ga = tp.grad(a);
            for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g[i] / vb[i];
        }
        if (tp.needs_grad(b)) {
            Tensor& gb = tp.grad(b);
            for (int64_t i = 0; i < gb.size(); ++i) gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
        }
    });
}

inline Var neg(Tape& t, Var a) {
    Tensor out = t.val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = -out[i];
    return detail::make_node(t, std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad(a);
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] -= g[i];
    });
}

/// Principal value in [-pi, pi]. The derivative is 1 away from the wrap
/// points, so the gradient passes straight through.
inline Var wrap_pi(Tape& t, Var a) {
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    Tensor out = t.val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::remainder(out[i], kTwoPi);
    return detail::make_node(t, std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
        detail::accumulate(tp, a, g);
    });
}

inline Var add_scalar(Tape& t, Var a, double c) {
    Tensor out = t.val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] += c;
    return detail::make_node(t, std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
        detail::accumulate(tp, a, g);
    });
}

inline Var mul_scalar(Tape& t, Var a, double c) {
    Tensor out = t.val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= c;
    return detail::make_node(t, std::move(out), {a}, [a, c](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad(a);
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] += c * g[i];
    });
}

/// y = s * x with s a one-element tape variable (broadcast scalar).
inline Var scale_by(Tape& t, Var x, Var s) {
    require(t.val(s).size() == 1, "scale_by: scale must be one element");
    const double sv = t.val(s)[0];
    Tensor out = t.val(x);
    for (int64_t i = 0; i < out.size(); ++i) out[i] *= sv;
    return detail::make_node(t, std::move(out), {x, s}, [x, s](Tape& tp, const Tensor& g) {
        const double sv = tp.val(s)[0];
        if (tp.needs_grad(x)) {
            Tensor& gx = tp.grad(x);
            for (int64_t i = 0; i < gx.size(); ++i) gx[i] += sv * g[i];
        }
        if (tp.needs_grad(s)) {
            const Tensor& vx = tp.val(x);
            double acc = 0.0;
            for (int64_t i = 0; i < vx.size(); ++i) acc += g[i] * vx[i];
            tp.grad(s)[0] += acc;
        }
    });
}

// ---- reductions ----

inline Var sum(Tape& t, Var a) {
    Tensor out({1});
    for (int64_t i = 0; i < t.val(a).size(); ++i) out[0] += t.val(a)[i];
    return detail::make_node(t, std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad(a);
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
    });
}

inline Var mean(Tape& t, Var a) {
    const double inv_n = 1.0 / static_cast<double>(t.val(a).size());
    Tensor out({1});
    for (int64_t i = 0; i < t.val(a).size(); ++i) out[0] += t.val(a)[i];
    out[0] *= inv_n;
    return detail::make_node(t, std::move(out), {a}, [a, inv_n](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad(a);
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * inv_n;
    });
}

/// Mean squared error between same-shape tensors, as one fused node.
inline Var mse(Tape& t, Var a, Var b) {
    require(t.val(a).same_shape(t.val(b)), "mse: shape mismatch");
    const int64_t n = t.val(a).size();
    Tensor out({1});
    for (int64_t i = 0; i < n; ++i) {
        const double d = t.val(a)[i] - t.val(b)[i];
        out[0] += d * d;
    }
    out[0] /= static_cast<double>(n);
    return detail::make_node(t, std::move(out), {a, b}, [a, b, n](Tape& tp, const Tensor& g) {
        const Tensor& va = tp.val(a);
        const Tensor& vb = tp.val(b);
        const double c = 2.0 * g[0] / static_cast<double>(n);
        if (tp.needs_grad(a)) {
            Tensor& ga = tp.grad(a);
            for (int64_t i = 0; i < n; ++i) ga[i] += c * (va[i] - vb[i]);
        }
        if (tp.needs_grad(b)) {
            Tensor& gb = tp.grad(b);
            for (int64_t i = 0; i < n; ++i) gb[i] -= c * (va[i] - vb[i]);
        }
    });
}

// ---- activations ----

inline Var leaky_relu(Tape& t, Var a, double slope) {
    Tensor out = t.val(a);
    for (int64_t i = 0; i < out.size(); ++i)
        if (out[i] < 0.0) out[i] *= slope;
    return detail::make_node(t, std::move(out), {a}, [a, slope](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad(a);
        const Tensor& va = tp.val(a);
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * (va[i] >= 0.0 ? 1.0 : slope);
    });
}

/// Exact Gaussian-error-linear unit; smooth everywhere, which keeps central
/// finite differences honest in the gradient checks.
inline Var gelu(Tape& t, Var a) {
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    Tensor out = t.val(a);
    for (int64_t i = 0; i < out.size(); ++i)
        out[i] = 0.5 * out[i] * (1.0 + std::erf(out[i] * kInvSqrt2));
    return detail::make_node(t, std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad(a);
        const Tensor& va = tp.val(a);
        for (int64_t i = 0; i < ga.size(); ++i) {
            const double x = va[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            ga[i] += g[i] * (cdf + x * pdf);
        }
    });
}

inline Var sigmoid(Tape& t, Var a) {
    Tensor out = t.val(a);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    const int32_t out_id = static_cast<int32_t>(t.size());
    if (!t.needs_grad(a)) return t.push(std::move(out), false, nullptr);
    return t.push(std::move(out), true, [a, out_id](Tape& tp) {
        const Tensor& g = tp.grad(Var{out_id});
        const Tensor& y = tp.val(Var{out_id});
        Tensor& ga = tp.grad(a);
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    });
}

/// Softmax along the last dimension of a rank-2 tensor.
inline Var softmax_rows(Tape& t, Var a) {
    require(t.val(a).rank() == 2, "softmax_rows: expected [m, n]");
    const int64_t m = t.val(a).dim(0), n = t.val(a).dim(1);
    Tensor out = t.val(a);
    for (int64_t r = 0; r < m; ++r) {
        double mx = out[r * n];
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, out[r * n + j]);
        double total = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            out[r * n + j] = std::exp(out[r * n + j] - mx);
            total += out[r * n + j];
        }
        for (int64_t j = 0; j < n; ++j) out[r * n + j] /= total;
    }
    const int32_t out_id = static_cast<int32_t>(t.size());
    if (!t.needs_grad(a)) return t.push(std::move(out), false, nullptr);
    return t.push(std::move(out), true, [a, out_id, m, n](Tape& tp) {
        const Tensor& g = tp.grad(Var{out_id});
        const Tensor& y = tp.val(Var{out_id});
        Tensor& ga = tp.grad(a);
        for (int64_t r = 0; r < m; ++r) {
            double dot = 0.0;
            for (int64_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
            for (int64_t j = 0; j < n; ++j) ga[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
        }
    });
}

// ---- linear algebra ----

inline Var matmul(Tape& t, Var a, Var b) {
    require(t.val(a).rank() == 2 && t.val(b).rank() == 2, "matmul: expected rank-2 inputs");
    const int64_t m = t.val(a).dim(0), k = t.val(a).dim(1), n = t.val(b).dim(1);
    require(t.val(b).dim(0) == k, "matmul: inner dim mismatch");
    Tensor out({m, n});
    {
        detail::CEMat A(t.val(a).data(), m, k);
        detail::CEMat B(t.val(b).data(), k, n);
        detail::EMat C(out.data(), m, n);
        C.noalias() = A * B;
    }
    return detail::make_node(t, std::move(out), {a, b},
                             [a, b, m, k, n](Tape& tp, const Tensor& g) {
        detail::CEMat G(g.data(), m, n);
        if (tp.needs_grad(a)) {
            detail::CEMat B(tp.val(b).data(), k, n);
            detail::EMat GA(tp.grad(a).data(), m, k);
            GA.noalias() += G * B.transpose();
        }
        if (tp.needs_grad(b)) {
            detail::CEMat A(tp.val(a).data(), m, k);
            detail::EMat GB(tp.grad(b).data(), k, n);
            GB.noalias() += A.transpose() * G;
        }
    });
}

/// Adds a length-n bias vector to every row of an [m, n] tensor.
inline Var add_rowvec(Tape& t, Var a, Var bias) {
    require(t.val(a).rank() == 2 && t.val(bias).rank() == 1, "add_rowvec: bad ranks");
    const int64_t m = t.val(a).dim(0), n = t.val(a).dim(1);
    require(t.val(bias).dim(0) == n, "add_rowvec: width mismatch");
    Tensor out = t.val(a);
    for (int64_t r = 0; r < m; ++r)
        for (int64_t j = 0; j < n; ++j) out[r * n + j] += t.val(bias)[j];
    return detail::make_node(t, std::move(out), {a, bias},
                             [a, bias, m, n](Tape& tp, const Tensor& g) {
        detail::accumulate(tp, a, g);
        if (tp.needs_grad(bias)) {
            Tensor& gb = tp.grad(bias);
            for (int64_t r = 0; r < m; ++r)
                for (int64_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
        }
    });
}

// ---- shape plumbing ----

inline Var reshape(Tape& t, Var a, std::vector<int64_t> shape) {
    Tensor out = t.val(a).reshaped(std::move(shape));
    return detail::make_node(t, std::move(out), {a}, [a](Tape& tp, const Tensor& g) {
        Tensor& ga = tp.grad(a);
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    });
}

/// Concatenates two [B, C, H, W] tensors along the channel dimension.
inline Var concat_channels(Tape& t, Var a, Var b) {
    const Tensor& va = t.val(a);
    const Tensor& vb = t.val(b);
    require(va.rank() == 4 && vb.rank() == 4, "concat_channels: expected [B, C, H, W]");
    require(va.dim(0) == vb.dim(0) && va.dim(2) == vb.dim(2) && va.dim(3) == vb.dim(3),
            "concat_channels: non-channel dims must match");
    const int64_t bn = va.dim(0), ca = va.dim(1), cb = vb.dim(1);
    const int64_t hw = va.dim(2) * va.dim(3);
    Tensor out({bn, ca + cb, va.dim(2), va.dim(3)});
    for (int64_t i = 0; i < bn; ++i) {
        std::copy(va.data() + i * ca * hw, va.data() + (i + 1) * ca * hw,
                  out.data() + i * (ca + cb) * hw);
        std::copy(vb.data() + i * cb * hw, vb.data() + (i + 1) * cb * hw,
                  out.data() + i * (ca + cb) * hw + ca * hw);
    }
    return detail::make_node(t, std::move(out), {a, b},
                             [a, b, bn, ca, cb, hw](Tape& tp, const Tensor& g) {
        if (tp.needs_grad(a)) {
            Tensor& ga = tp.grad(a);
            for (int64_t i = 0; i < bn; ++i)
                for (int64_t j = 0; j < ca * hw; ++j)
                    ga[i * ca * hw + j] += g[i * (ca + cb) * hw + j];
        }
        if (tp.needs_grad(b)) {
            Tensor& gb = tp.grad(b);
            for (int64_t i = 0; i < bn; ++i)
                for (int64_t j = 0; j < cb * hw; ++j)
                    gb[i * cb * hw + j] += g[i * (ca + cb) * hw + ca * hw + j];
        }
    });
}

// ---- stable binary cross-entropy on logits ----

/// Mean of max(z,0) - z*y + log(1 + exp(-|z|)) over all elements; `target`
/// is a constant tensor of labels in [0, 1].
inline Var bce_with_logits(Tape& t, Var logits, const Tensor& target) {
    const Tensor& z = t.val(logits);
    require(z.same_shape(target), "bce_with_logits: shape mismatch");
    const int64_t n = z.size();
    Tensor out({1});
    for (int64_t i = 0; i < n; ++i)
        out[0] += std::max(z[i], 0.0) - z[i] * target[i] + std::log1p(std::exp(-std::abs(z[i])));
    out[0] /= static_cast<double>(n);
    Tensor tgt = target;
    return detail::make_node(t, std::move(out), {logits},
                             [logits, tgt, n](Tape& tp, const Tensor& g) {
        Tensor& gz = tp.grad(logits);
        const Tensor& z = tp.val(logits);
        const double c = g[0] / static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) {
            const double s = 1.0 / (1.0 + std::exp(-z[i]));
            gz[i] += c * (s - tgt[i]);
        }
    });
}

} // namespace mrrecon::ad

