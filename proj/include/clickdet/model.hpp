#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "clickdet/features.hpp"
#include "clickdet/rng.hpp"
#include "clickdet/tensor.hpp"

namespace clickdet {

// ---------------------------------------------------------------------------
// Configuration
//
// The network is a stack of broadcasting residual blocks. Internally every
// tensor is (C, D1, D2) where D1 is the pooled axis and D2 the kept axis:
// temporal broadcasting pools over time (D1 = frames), the feature variant
// pools over the feature axis (D1 = features). One code path serves both.
// ---------------------------------------------------------------------------

enum class BroadcastAxis { Temporal, Feature };

inline std::string to_string(BroadcastAxis a) {
    return a == BroadcastAxis::Temporal ? "temporal" : "feature";
}

inline BroadcastAxis broadcast_axis_from_string(const std::string& s) {
    if (s == "temporal") return BroadcastAxis::Temporal;
    if (s == "feature") return BroadcastAxis::Feature;
    throw std::invalid_argument("unknown broadcast axis: " + s);
}

struct ModelConfig {
    BroadcastAxis broadcast_axis = BroadcastAxis::Temporal;
    // Channel width per block; a width change makes a transition block. The
    // default keeps a narrow temporal front end and a wide final embedding,
    // landing the parameter count in the published ~88.7K neighborhood.
    std::vector<int> block_channels = {12, 16, 16, 224};
    int temporal_kernel = 3;
    int feature_kernel = 3;
    int n_classes = 3;
    int input_t = 79;
    int input_f = 41;
    double eps_norm = 1e-5;
    double bn_momentum = 0.1;

    void validate() const {
        if (block_channels.empty())
            throw std::invalid_argument("ModelConfig: block_channels is empty");
        for (const int c : block_channels)
            if (c <= 0) throw std::invalid_argument("ModelConfig: channel widths must be > 0");
        if (temporal_kernel < 1 || temporal_kernel % 2 == 0 || feature_kernel < 1 ||
            feature_kernel % 2 == 0)
            throw std::invalid_argument("ModelConfig: kernels must be odd and >= 1");
        if (n_classes < 2 || input_t < 1 || input_f < 1)
            throw std::invalid_argument("ModelConfig: bad dimensions");
    }

    int d1() const { return broadcast_axis == BroadcastAxis::Temporal ? input_t : input_f; }
    int d2() const { return broadcast_axis == BroadcastAxis::Temporal ? input_f : input_t; }
    int k1() const {
        return broadcast_axis == BroadcastAxis::Temporal ? temporal_kernel : feature_kernel;
    }
    int k2() const {
        return broadcast_axis == BroadcastAxis::Temporal ? feature_kernel : temporal_kernel;
    }
    int in_channels(std::size_t block) const {
        return block == 0 ? 1 : block_channels[block - 1];
    }
    bool is_identity(std::size_t block) const {
        return in_channels(block) == block_channels[block];
    }
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <typename T>
struct BlockParams {
    std::vector<T> dw1_w, dw1_b;  // depthwise conv along D1
    std::vector<T> pw1_w, pw1_b;  // pointwise conv C_in -> C_out
    std::vector<T> bn_gamma, bn_beta;
    std::vector<T> in_gamma, in_beta;  // instance norm, shaped (C_out, D2)
    std::vector<T> dw2_w, dw2_b;       // depthwise conv along D2
    std::vector<T> pw2_w, pw2_b;       // pointwise conv C_out -> C_out
};

template <typename T>
struct ParamSet {
    std::vector<T> ln_gamma, ln_beta;  // input layer norm, per (D1, D2) position
    std::vector<BlockParams<T>> blocks;
    std::vector<T> fc_w, fc_b;

    // Visits every learnable array in build order.
    template <typename Fn>
    void for_each(Fn&& fn) {
        fn("ln.gamma", ln_gamma);
        fn("ln.beta", ln_beta);
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const std::string b = "block" + std::to_string(i) + ".";
            auto& p = blocks[i];
            fn(b + "dw1.w", p.dw1_w);
            fn(b + "dw1.b", p.dw1_b);
            fn(b + "pw1.w", p.pw1_w);
            fn(b + "pw1.b", p.pw1_b);
            fn(b + "bn.gamma", p.bn_gamma);
            fn(b + "bn.beta", p.bn_beta);
            fn(b + "in.gamma", p.in_gamma);
            fn(b + "in.beta", p.in_beta);
            fn(b + "dw2.w", p.dw2_w);
            fn(b + "dw2.b", p.dw2_b);
            fn(b + "pw2.w", p.pw2_w);
            fn(b + "pw2.b", p.pw2_b);
        }
        fn("fc.w", fc_w);
        fn("fc.b", fc_b);
    }

    template <typename Fn>
    void for_each(Fn&& fn) const {
        const_cast<ParamSet*>(this)->for_each(
            [&](const std::string& name, std::vector<T>& v) {
                fn(name, static_cast<const std::vector<T>&>(v));
            });
    }

    std::size_t total_size() const {
        std::size_t n = 0;
        for_each([&](const std::string&, const std::vector<T>& v) { n += v.size(); });
        return n;
    }

    static ParamSet shaped_like(const ModelConfig& cfg) {
        ParamSet s;
        const std::size_t plane = static_cast<std::size_t>(cfg.d1()) * cfg.d2();
        s.ln_gamma.resize(plane);
        s.ln_beta.resize(plane);
        for (std::size_t i = 0; i < cfg.block_channels.size(); ++i) {
            const int cin = cfg.in_channels(i);
            const int cout = cfg.block_channels[i];
            BlockParams<T> b;
            b.dw1_w.resize(static_cast<std::size_t>(cin) * cfg.k1());
            b.dw1_b.resize(cin);
            b.pw1_w.resize(static_cast<std::size_t>(cout) * cin);
            b.pw1_b.resize(cout);
            b.bn_gamma.resize(cout);
            b.bn_beta.resize(cout);
            b.in_gamma.resize(static_cast<std::size_t>(cout) * cfg.d2());
            b.in_beta.resize(static_cast<std::size_t>(cout) * cfg.d2());
            b.dw2_w.resize(static_cast<std::size_t>(cout) * cfg.k2());
            b.dw2_b.resize(cout);
            b.pw2_w.resize(static_cast<std::size_t>(cout) * cout);
            b.pw2_b.resize(cout);
            s.blocks.push_back(std::move(b));
        }
        const int c_last = cfg.block_channels.back();
        s.fc_w.resize(static_cast<std::size_t>(cfg.n_classes) * c_last);
        s.fc_b.resize(cfg.n_classes);
        return s;
    }

    void fill(T value) {
        for_each([&](const std::string&, std::vector<T>& v) {
            std::fill(v.begin(), v.end(), value);
        });
    }
};

template <typename T>
using GradientSet = ParamSet<T>;

enum class ModelMode { Train, Eval };

template <typename T>
struct Model {
    ModelConfig config;
    ParamSet<T> params;
    std::vector<std::vector<T>> bn_running_mean;  // per block
    std::vector<std::vector<T>> bn_running_var;
    ModelMode mode = ModelMode::Eval;
};

// Uniform +-sqrt(6 / fan_in) weights, zero biases, unit norm scales.
template <typename T = float>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Model<T> m;
    m.config = cfg;
    m.params = ParamSet<T>::shaped_like(cfg);

    Rng rng(derive_seed(seed, "model-init"));
    auto init_uniform = [&](std::vector<T>& v, int fan_in) {
        const double bound = std::sqrt(6.0 / fan_in);
        for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
    };

    std::fill(m.params.ln_gamma.begin(), m.params.ln_gamma.end(), T(1));
    std::fill(m.params.ln_beta.begin(), m.params.ln_beta.end(), T(0));
    for (std::size_t i = 0; i < cfg.block_channels.size(); ++i) {
        auto& b = m.params.blocks[i];
        const int cin = cfg.in_channels(i);
        const int cout = cfg.block_channels[i];
        init_uniform(b.dw1_w, cfg.k1());
        init_uniform(b.pw1_w, cin);
        std::fill(b.bn_gamma.begin(), b.bn_gamma.end(), T(1));
        std::fill(b.in_gamma.begin(), b.in_gamma.end(), T(1));
        init_uniform(b.dw2_w, cfg.k2());
        init_uniform(b.pw2_w, cout);
        m.bn_running_mean.emplace_back(cout, T(0));
        m.bn_running_var.emplace_back(cout, T(1));
    }
    init_uniform(m.params.fc_w, cfg.block_channels.back());
    return m;
}

// ---------------------------------------------------------------------------
// Compute accounting (learnable scalars; running statistics excluded)
// ---------------------------------------------------------------------------

inline std::int64_t count_params(const ModelConfig& cfg) {
    cfg.validate();
    const std::int64_t plane = static_cast<std::int64_t>(cfg.d1()) * cfg.d2();
    std::int64_t total = 2 * plane;  // layer norm
    for (std::size_t i = 0; i < cfg.block_channels.size(); ++i) {
        const std::int64_t cin = cfg.in_channels(i);
        const std::int64_t cout = cfg.block_channels[i];
        total += cin * cfg.k1() + cin;        // dw1
        total += cout * cin + cout;           // pw1
        total += 2 * cout;                    // batch norm
        total += 2 * cout * cfg.d2();         // instance norm
        total += cout * cfg.k2() + cout;      // dw2
        total += cout * cout + cout;          // pw2
    }
    total += static_cast<std::int64_t>(cfg.n_classes) * cfg.block_channels.back() +
             cfg.n_classes;  // classifier
    return total;
}

// Multiply-accumulate count for one 1 s inference. Convention: convolutions
// cost output_elements x kernel_taps x input_channels (depthwise: x1),
// affine layers in x out, normalizations 2 MACs per element, pooling 1 MAC
// per input element; activations, broadcasts, residual adds and the softmax
// are free.
inline std::int64_t count_macs(const ModelConfig& cfg) {
    cfg.validate();
    const std::int64_t plane = static_cast<std::int64_t>(cfg.d1()) * cfg.d2();
    std::int64_t total = 2 * plane;  // layer norm
    for (std::size_t i = 0; i < cfg.block_channels.size(); ++i) {
        const std::int64_t cin = cfg.in_channels(i);
        const std::int64_t cout = cfg.block_channels[i];
        total += cfg.k1() * cin * plane;   // dw1
        total += cin * cout * plane;       // pw1
        total += 2 * cout * plane;         // batch norm
        total += cout * plane;             // pool over D1
        total += 2 * cout * cfg.d2();      // instance norm
        total += cfg.k2() * cout * cfg.d2();  // dw2
        total += static_cast<std::int64_t>(cout) * cout * cfg.d2();  // pw2
    }
    total += cfg.block_channels.back() * plane;  // head pool
    total += static_cast<std::int64_t>(cfg.block_channels.back()) * cfg.n_classes;
    return total;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

namespace model_detail {

template <typename T>
void check_finite(const std::vector<T>& v, const char* where) {
#ifndef NDEBUG
    for (const T x : v)
        assert(std::isfinite(static_cast<double>(x)) && where);
#else
    (void)v;
    (void)where;
#endif
}

// Depthwise conv along D1 (zero padded): out[c,d1,:] = sum_j w[c,j] x[c,d1+j-off,:]
template <typename T>
void dw_conv_d1(const T* x, T* out, const T* w, const T* b, int channels, int d1,
                int d2, int k) {
    const int off = k / 2;
    for (int c = 0; c < channels; ++c) {
        const T* xc = x + static_cast<std::size_t>(c) * d1 * d2;
        T* oc = out + static_cast<std::size_t>(c) * d1 * d2;
        for (int i = 0; i < d1; ++i) {
            T* orow = oc + static_cast<std::size_t>(i) * d2;
            for (int jj = 0; jj < d2; ++jj) orow[jj] = b[c];
            for (int j = 0; j < k; ++j) {
                const int src = i + j - off;
                if (src < 0 || src >= d1) continue;
                const T wj = w[c * k + j];
                const T* xrow = xc + static_cast<std::size_t>(src) * d2;
                for (int jj = 0; jj < d2; ++jj) orow[jj] += wj * xrow[jj];
            }
        }
    }
}

// Depthwise conv along D2 on a (C, D2) map.
template <typename T>
void dw_conv_d2(const T* x, T* out, const T* w, const T* b, int channels, int d2,
                int k) {
    const int off = k / 2;
    for (int c = 0; c < channels; ++c) {
        const T* xc = x + static_cast<std::size_t>(c) * d2;
        T* oc = out + static_cast<std::size_t>(c) * d2;
        for (int i = 0; i < d2; ++i) {
            T acc = b[c];
            for (int j = 0; j < k; ++j) {
                const int src = i + j - off;
                if (src >= 0 && src < d2) acc += w[c * k + j] * xc[src];
            }
            oc[i] = acc;
        }
    }
}

}  // namespace model_detail

// Per-block activations kept for the backward pass.
template <typename T>
struct BlockCache {
    std::vector<T> v;  // pre batch-norm, N*C*D1*D2
    std::vector<T> a;  // post ReLU (pool input), N*C*D1*D2
    std::vector<T> y;  // block output, N*C*D1*D2
    std::vector<T> r_t, rhat_raw, rhat, p, g;  // N*C*D2
    std::vector<T> in_inv_std;                 // N
    std::vector<T> bn_mu, bn_inv_std;          // C (train-mode batch stats)
    // backward scratch
    std::vector<T> drhat, dr_t;                     // N*C*D2
    std::vector<T> s1_partial, s2_partial;          // N*C
    std::vector<T> g_pw1, g_pw2, g_dw1, g_dw2;      // per-sample grad partials
    std::vector<T> g_pw1_b, g_pw2_b, g_dw1_b, g_dw2_b;  // N*C
};

template <typename T>
struct Workspace {
    int n = 0;
    std::vector<T> x_raw;       // N * D1*D2, input before layer norm
    std::vector<T> x0;          // N * D1*D2, layer norm output
    std::vector<T> ln_xhat;     // N * D1*D2
    std::vector<T> ln_inv_std;  // N
    std::vector<BlockCache<T>> blocks;
    std::vector<T> pooled;  // N * C_last
    std::vector<T> logits, probs, dlogits;  // N * n_classes
    std::vector<T> dy, dx;  // ping-pong gradient planes, N * Cmax * D1*D2

    void resize_for(const ModelConfig& cfg, int batch) {
        n = batch;
        const std::size_t plane = static_cast<std::size_t>(cfg.d1()) * cfg.d2();
        const std::size_t nn = static_cast<std::size_t>(batch);
        x_raw.resize(nn * plane);
        x0.resize(nn * plane);
        ln_xhat.resize(nn * plane);
        ln_inv_std.resize(nn);
        blocks.resize(cfg.block_channels.size());
        int cmax = 1;
        for (std::size_t i = 0; i < cfg.block_channels.size(); ++i) {
            const int cin = cfg.in_channels(i);
            const int cout = cfg.block_channels[i];
            cmax = std::max(cmax, cout);
            auto& b = blocks[i];
            b.v.resize(nn * cout * plane);
            b.a.resize(nn * cout * plane);
            b.y.resize(nn * cout * plane);
            const std::size_t cd2 = static_cast<std::size_t>(cout) * cfg.d2();
            for (auto* vec : {&b.r_t, &b.rhat_raw, &b.rhat, &b.p, &b.g, &b.drhat, &b.dr_t})
                vec->resize(nn * cd2);
            b.in_inv_std.resize(nn);
            b.bn_mu.resize(cout);
            b.bn_inv_std.resize(cout);
            b.s1_partial.resize(nn * cout);
            b.s2_partial.resize(nn * cout);
            b.g_pw1.resize(nn * cout * cin);
            b.g_pw2.resize(nn * static_cast<std::size_t>(cout) * cout);
            b.g_dw1.resize(nn * static_cast<std::size_t>(cin) * cfg.k1());
            b.g_dw2.resize(nn * cd2 / cfg.d2() * cfg.k2());
            b.g_pw1_b.resize(nn * cout);
            b.g_pw2_b.resize(nn * cout);
            b.g_dw1_b.resize(nn * cin);
            b.g_dw2_b.resize(nn * cout);
        }
        pooled.resize(nn * cfg.block_channels.back());
        logits.resize(nn * cfg.n_classes);
        probs.resize(nn * cfg.n_classes);
        dlogits.resize(nn * cfg.n_classes);
        dy.resize(nn * cmax * plane);
        dx.resize(nn * cmax * plane);
    }
};

// Copies one feature matrix into the model's internal (C=1, D1, D2) layout.
template <typename T>
void fill_input(const ModelConfig& cfg, const FeatureMatrix& fm, T* dst) {
    if (fm.rows != cfg.input_f || fm.cols != cfg.input_t)
        throw std::invalid_argument("model input: expected " + std::to_string(cfg.input_f) +
                                    " x " + std::to_string(cfg.input_t) + " features, got " +
                                    std::to_string(fm.rows) + " x " + std::to_string(fm.cols));
    if (cfg.broadcast_axis == BroadcastAxis::Temporal) {
        for (int t = 0; t < cfg.input_t; ++t)
            for (int f = 0; f < cfg.input_f; ++f)
                dst[static_cast<std::size_t>(t) * cfg.input_f + f] = static_cast<T>(fm.at(f, t));
    } else {
        for (int f = 0; f < cfg.input_f; ++f)
            for (int t = 0; t < cfg.input_t; ++t)
                dst[static_cast<std::size_t>(f) * cfg.input_t + t] = static_cast<T>(fm.at(f, t));
    }
}

namespace model_detail {

template <typename T>
void parallel_samples(ThreadPool* pool, int n, const std::function<void(std::size_t)>& fn) {
    if (pool)
        pool->parallel_for(static_cast<std::size_t>(n), fn);
    else
        for (int i = 0; i < n; ++i) fn(static_cast<std::size_t>(i));
}

template <typename T>
void softmax_row(const T* logits, T* probs, int n) {
    T mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    T sum = 0;
    for (int i = 0; i < n; ++i) {
        probs[i] = std::exp(logits[i] - mx);
        sum += probs[i];
    }
    for (int i = 0; i < n; ++i) probs[i] /= sum;
}

}  // namespace model_detail

// Train-mode batched forward filling the workspace. Batch-norm batch
// statistics are reduced across samples in index order so results do not
// depend on the thread count; running statistics are updated in place.
template <typename T>
void forward_train(Model<T>& m, Workspace<T>& ws, ThreadPool* pool = nullptr) {
    using namespace model_detail;
    const auto& cfg = m.config;
    const int n = ws.n;
    const int d1 = cfg.d1(), d2 = cfg.d2();
    const std::size_t plane = static_cast<std::size_t>(d1) * d2;

    // input layer norm, per instance over the whole plane
    parallel_samples<T>(pool, n, [&](std::size_t i) {
        const T* x = &ws.x_raw[i * plane];
        T* xhat = &ws.ln_xhat[i * plane];
        T* y = &ws.x0[i * plane];
        double sum = 0.0, sumsq = 0.0;
        sum_sumsq_lanes(x, plane, sum, sumsq);
        const double mu = sum / static_cast<double>(plane);
        const double var = std::max(0.0, sumsq / static_cast<double>(plane) - mu * mu);
        const T inv_std = static_cast<T>(1.0 / std::sqrt(var + cfg.eps_norm));
        const T mu_t = static_cast<T>(mu);
        ws.ln_inv_std[i] = inv_std;
        for (std::size_t j = 0; j < plane; ++j) {
            xhat[j] = (x[j] - mu_t) * inv_std;
            y[j] = m.params.ln_gamma[j] * xhat[j] + m.params.ln_beta[j];
        }
    });

    const T* x_in = ws.x0.data();
    std::size_t cin_stride = plane;  // per-sample stride of the block input

    for (std::size_t bi = 0; bi < cfg.block_channels.size(); ++bi) {
        auto& bc = ws.blocks[bi];
        const auto& bp = m.params.blocks[bi];
        const int cin = cfg.in_channels(bi);
        const int cout = cfg.block_channels[bi];
        const std::size_t out_stride = static_cast<std::size_t>(cout) * plane;
        const std::size_t cd2 = static_cast<std::size_t>(cout) * d2;
        const bool identity = cfg.is_identity(bi);

        // dw1 + pw1 into V
        parallel_samples<T>(pool, n, [&](std::size_t i) {
            thread_local std::vector<T> u;
            ensure_size(u, static_cast<std::size_t>(cin) * plane);
            const T* x = x_in + i * cin_stride;
            dw_conv_d1(x, u.data(), bp.dw1_w.data(), bp.dw1_b.data(), cin, d1, d2,
                       cfg.k1());
            T* v = &bc.v[i * out_stride];
            gemm_nn_set(v, bp.pw1_w.data(), u.data(), cout, cin, plane);
            for (int o = 0; o < cout; ++o) {
                T* vo = v + static_cast<std::size_t>(o) * plane;
                const T b = bp.pw1_b[o];
                for (std::size_t j = 0; j < plane; ++j) vo[j] += b;
            }
        });

        // batch statistics per channel, reduced in sample order
        {
            std::vector<double> sum(cout, 0.0), sumsq(cout, 0.0);
            std::vector<double> part(static_cast<std::size_t>(n) * cout * 2, 0.0);
            parallel_samples<T>(pool, n, [&](std::size_t i) {
                const T* v = &bc.v[i * out_stride];
                for (int o = 0; o < cout; ++o) {
                    double s = 0.0, s2 = 0.0;
                    sum_sumsq_lanes(v + static_cast<std::size_t>(o) * plane, plane, s, s2);
                    part[(i * cout + o) * 2] = s;
                    part[(i * cout + o) * 2 + 1] = s2;
                }
            });
            for (int i = 0; i < n; ++i)
                for (int o = 0; o < cout; ++o) {
                    sum[o] += part[(static_cast<std::size_t>(i) * cout + o) * 2];
                    sumsq[o] += part[(static_cast<std::size_t>(i) * cout + o) * 2 + 1];
                }
            const double count = static_cast<double>(n) * plane;
            for (int o = 0; o < cout; ++o) {
                const double mu = sum[o] / count;
                const double var = std::max(0.0, sumsq[o] / count - mu * mu);
                bc.bn_mu[o] = static_cast<T>(mu);
                bc.bn_inv_std[o] = static_cast<T>(1.0 / std::sqrt(var + cfg.eps_norm));
                m.bn_running_mean[bi][o] = static_cast<T>(
                    (1.0 - cfg.bn_momentum) * m.bn_running_mean[bi][o] + cfg.bn_momentum * mu);
                m.bn_running_var[bi][o] = static_cast<T>(
                    (1.0 - cfg.bn_momentum) * m.bn_running_var[bi][o] + cfg.bn_momentum * var);
            }
        }

        // normalize + ReLU + pool + instance norm + feature path + residual
        parallel_samples<T>(pool, n, [&](std::size_t i) {
            const T* v = &bc.v[i * out_stride];
            T* a = &bc.a[i * out_stride];
            T* r_t = &bc.r_t[i * cd2];
            for (int o = 0; o < cout; ++o) {
                const T mu = bc.bn_mu[o];
                const T inv_std = bc.bn_inv_std[o];
                const T gamma = bp.bn_gamma[o];
                const T beta = bp.bn_beta[o];
                const T* vo = v + static_cast<std::size_t>(o) * plane;
                T* ao = a + static_cast<std::size_t>(o) * plane;
                for (std::size_t j = 0; j < plane; ++j) {
                    const T z = gamma * ((vo[j] - mu) * inv_std) + beta;
                    ao[j] = z > T(0) ? z : T(0);
                }
                // mean-pool over D1
                T* ro = r_t + static_cast<std::size_t>(o) * d2;
                for (int jj = 0; jj < d2; ++jj) ro[jj] = 0;
                for (int ii = 0; ii < d1; ++ii) {
                    const T* arow = ao + static_cast<std::size_t>(ii) * d2;
                    for (int jj = 0; jj < d2; ++jj) ro[jj] += arow[jj];
                }
                const T inv_d1 = T(1) / static_cast<T>(d1);
                for (int jj = 0; jj < d2; ++jj) ro[jj] *= inv_d1;
            }

            // instance norm over all elements of r_t
            double sum_r = 0.0, sumsq_r = 0.0;
            sum_sumsq_lanes(r_t, cd2, sum_r, sumsq_r);
            const double mu_r = sum_r / static_cast<double>(cd2);
            const double var_r =
                std::max(0.0, sumsq_r / static_cast<double>(cd2) - mu_r * mu_r);
            const T inv_std_r = static_cast<T>(1.0 / std::sqrt(var_r + cfg.eps_norm));
            bc.in_inv_std[i] = inv_std_r;
            T* rhat_raw = &bc.rhat_raw[i * cd2];
            T* rhat = &bc.rhat[i * cd2];
            for (std::size_t j = 0; j < cd2; ++j) {
                rhat_raw[j] = static_cast<T>((r_t[j] - mu_r) * inv_std_r);
                rhat[j] = bp.in_gamma[j] * rhat_raw[j] + bp.in_beta[j];
            }

            // feature-side encoder: dw2 + pw2 + ReLU
            T* pbuf = &bc.p[i * cd2];
            dw_conv_d2(rhat, pbuf, bp.dw2_w.data(), bp.dw2_b.data(), cout, d2, cfg.k2());
            T* g = &bc.g[i * cd2];
            gemm_nn_set(g, bp.pw2_w.data(), pbuf, cout, cout, d2);
            for (int o = 0; o < cout; ++o) {
                T* go = g + static_cast<std::size_t>(o) * d2;
                const T b = bp.pw2_b[o];
                for (int jj = 0; jj < d2; ++jj) {
                    const T q = go[jj] + b;
                    go[jj] = q > T(0) ? q : T(0);
                }
            }

            // residual combination: identity keeps x; the temporal encoder
            // contributes its full 2D map (pooling feeds only the feature
            // path), and the feature summary broadcasts back over D1
            const T* x = x_in + i * cin_stride;
            T* y = &bc.y[i * out_stride];
            for (int o = 0; o < cout; ++o) {
                const T* ao = a + static_cast<std::size_t>(o) * plane;
                const T* go = g + static_cast<std::size_t>(o) * d2;
                T* yo = y + static_cast<std::size_t>(o) * plane;
                if (identity) {
                    const T* xo = x + static_cast<std::size_t>(o) * plane;
                    for (int ii = 0; ii < d1; ++ii) {
                        const T* xrow = xo + static_cast<std::size_t>(ii) * d2;
                        const T* arow = ao + static_cast<std::size_t>(ii) * d2;
                        T* yrow = yo + static_cast<std::size_t>(ii) * d2;
                        for (int jj = 0; jj < d2; ++jj)
                            yrow[jj] = xrow[jj] + arow[jj] + go[jj];
                    }
                } else {
                    for (int ii = 0; ii < d1; ++ii) {
                        const T* arow = ao + static_cast<std::size_t>(ii) * d2;
                        T* yrow = yo + static_cast<std::size_t>(ii) * d2;
                        for (int jj = 0; jj < d2; ++jj) yrow[jj] = arow[jj] + go[jj];
                    }
                }
            }
        });
        model_detail::check_finite(bc.y, "block output");

        x_in = bc.y.data();
        cin_stride = out_stride;
    }

    // classifier head: global mean pool + affine + softmax
    const int c_last = cfg.block_channels.back();
    parallel_samples<T>(pool, n, [&](std::size_t i) {
        const T* y = x_in + i * cin_stride;
        T* h = &ws.pooled[i * c_last];
        const T inv_plane = T(1) / static_cast<T>(plane);
        for (int o = 0; o < c_last; ++o) {
            T acc = 0;
            const T* yo = y + static_cast<std::size_t>(o) * plane;
            for (std::size_t j = 0; j < plane; ++j) acc += yo[j];
            h[o] = acc * inv_plane;
        }
        T* logits = &ws.logits[i * cfg.n_classes];
        for (int k = 0; k < cfg.n_classes; ++k) {
            T acc = m.params.fc_b[k];
            const T* wrow = &m.params.fc_w[static_cast<std::size_t>(k) * c_last];
            for (int o = 0; o < c_last; ++o) acc += wrow[o] * h[o];
            logits[k] = acc;
        }
        model_detail::softmax_row(logits, &ws.probs[i * cfg.n_classes], cfg.n_classes);
    });
}

// Eval-mode forward for one sample using running statistics; pure.
template <typename T>
std::vector<T> forward_eval_one(const Model<T>& m, const FeatureMatrix& fm) {
    const auto& cfg = m.config;
    const int d1 = cfg.d1(), d2 = cfg.d2();
    const std::size_t plane = static_cast<std::size_t>(d1) * d2;

    std::vector<T> x(plane);
    fill_input(cfg, fm, x.data());

    // layer norm
    {
        double mu = 0.0;
        for (const T v : x) mu += v;
        mu /= static_cast<double>(plane);
        double var = 0.0;
        for (const T v : x) {
            const double dxx = v - mu;
            var += dxx * dxx;
        }
        var /= static_cast<double>(plane);
        const double inv_std = 1.0 / std::sqrt(var + cfg.eps_norm);
        for (std::size_t j = 0; j < plane; ++j)
            x[j] = m.params.ln_gamma[j] * static_cast<T>((x[j] - mu) * inv_std) +
                   m.params.ln_beta[j];
    }

    std::vector<T> u, v, r_t, rhat, p, g, y;
    int cin = 1;
    for (std::size_t bi = 0; bi < cfg.block_channels.size(); ++bi) {
        const auto& bp = m.params.blocks[bi];
        const int cout = cfg.block_channels[bi];
        const std::size_t cd2 = static_cast<std::size_t>(cout) * d2;

        ensure_size(u, static_cast<std::size_t>(cin) * plane);
        model_detail::dw_conv_d1(x.data(), u.data(), bp.dw1_w.data(), bp.dw1_b.data(),
                                 cin, d1, d2, cfg.k1());
        ensure_size(v, static_cast<std::size_t>(cout) * plane);
        gemm_nn_set(v.data(), bp.pw1_w.data(), u.data(), cout, cin, plane);

        r_t.assign(cd2, T(0));
        for (int o = 0; o < cout; ++o) {
            const T mu = m.bn_running_mean[bi][o];
            const T inv_std =
                static_cast<T>(1.0 / std::sqrt(static_cast<double>(m.bn_running_var[bi][o]) +
                                               cfg.eps_norm));
            const T gamma = bp.bn_gamma[o], beta = bp.bn_beta[o], bias = bp.pw1_b[o];
            T* vo = v.data() + static_cast<std::size_t>(o) * plane;
            T* ro = r_t.data() + static_cast<std::size_t>(o) * d2;
            for (int ii = 0; ii < d1; ++ii) {
                const T* vrow = vo + static_cast<std::size_t>(ii) * d2;
                for (int jj = 0; jj < d2; ++jj) {
                    const T z = gamma * ((vrow[jj] + bias - mu) * inv_std) + beta;
                    vo[static_cast<std::size_t>(ii) * d2 + jj] = z > T(0) ? z : T(0);
                    ro[jj] += vo[static_cast<std::size_t>(ii) * d2 + jj];
                }
            }
            const T inv_d1 = T(1) / static_cast<T>(d1);
            for (int jj = 0; jj < d2; ++jj) ro[jj] *= inv_d1;
        }

        // instance norm
        double mu_r = 0.0;
        for (const T val : r_t) mu_r += val;
        mu_r /= static_cast<double>(cd2);
        double var_r = 0.0;
        for (const T val : r_t) {
            const double dr = val - mu_r;
            var_r += dr * dr;
        }
        var_r /= static_cast<double>(cd2);
        const double inv_std_r = 1.0 / std::sqrt(var_r + cfg.eps_norm);
        rhat.resize(cd2);
        for (std::size_t j = 0; j < cd2; ++j)
            rhat[j] = bp.in_gamma[j] * static_cast<T>((r_t[j] - mu_r) * inv_std_r) +
                      bp.in_beta[j];

        p.assign(cd2, T(0));
        model_detail::dw_conv_d2(rhat.data(), p.data(), bp.dw2_w.data(), bp.dw2_b.data(),
                                 cout, d2, cfg.k2());
        ensure_size(g, cd2);
        gemm_nn_set(g.data(), bp.pw2_w.data(), p.data(), cout, cout, d2);
        for (int o = 0; o < cout; ++o)
            for (int jj = 0; jj < d2; ++jj) {
                T& q = g[static_cast<std::size_t>(o) * d2 + jj];
                q += bp.pw2_b[o];
                q = q > T(0) ? q : T(0);
            }

        ensure_size(y, static_cast<std::size_t>(cout) * plane);
        const bool identity = cfg.is_identity(bi);
        for (int o = 0; o < cout; ++o) {
            const T* ao = v.data() + static_cast<std::size_t>(o) * plane;  // post-ReLU
            const T* go = g.data() + static_cast<std::size_t>(o) * d2;
            T* yo = y.data() + static_cast<std::size_t>(o) * plane;
            for (int ii = 0; ii < d1; ++ii)
                for (int jj = 0; jj < d2; ++jj) {
                    const std::size_t at = static_cast<std::size_t>(ii) * d2 + jj;
                    T val = ao[at] + go[jj];
                    if (identity)
                        val += x[static_cast<std::size_t>(o) * plane + at];
                    yo[at] = val;
                }
        }
        x = y;
        cin = cout;
    }

    const int c_last = cfg.block_channels.back();
    std::vector<T> h(c_last, T(0));
    for (int o = 0; o < c_last; ++o) {
        T acc = 0;
        for (std::size_t j = 0; j < plane; ++j)
            acc += x[static_cast<std::size_t>(o) * plane + j];
        h[o] = acc / static_cast<T>(plane);
    }
    std::vector<T> logits(cfg.n_classes), probs(cfg.n_classes);
    for (int k = 0; k < cfg.n_classes; ++k) {
        T acc = m.params.fc_b[k];
        for (int o = 0; o < c_last; ++o)
            acc += m.params.fc_w[static_cast<std::size_t>(k) * c_last + o] * h[o];
        logits[k] = acc;
    }
    model_detail::softmax_row(logits.data(), probs.data(), cfg.n_classes);
    return probs;
}

// Probability vector for one segment's features (eval mode).
template <typename T>
std::vector<T> forward(const Model<T>& m, const FeatureMatrix& fm) {
    return forward_eval_one(m, fm);
}

// Cross-entropy loss and exact gradients for the train-mode graph (batch
// statistics included). Per-sample contributions are computed in parallel
// and reduced in sample order.
template <typename T>
double loss_and_grad(Model<T>& m, const std::vector<const FeatureMatrix*>& batch,
                     const std::vector<int>& targets, GradientSet<T>& grads,
                     Workspace<T>& ws, ThreadPool* pool = nullptr) {
    using namespace model_detail;
    const auto& cfg = m.config;
    if (batch.empty() || batch.size() != targets.size())
        throw std::invalid_argument("loss_and_grad: empty or mismatched batch");
    for (const int t : targets)
        if (t < 0 || t >= cfg.n_classes)
            throw std::invalid_argument("loss_and_grad: target out of range");

    const int n = static_cast<int>(batch.size());
    const int d1 = cfg.d1(), d2 = cfg.d2();
    const std::size_t plane = static_cast<std::size_t>(d1) * d2;
    ws.resize_for(cfg, n);

    parallel_samples<T>(pool, n, [&](std::size_t i) {
        fill_input(cfg, *batch[i], &ws.x_raw[i * plane]);
    });

    forward_train(m, ws, pool);

    // loss and logit gradients
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const T p = ws.probs[static_cast<std::size_t>(i) * cfg.n_classes + targets[i]];
        loss -= std::log(std::max(static_cast<double>(p), 1e-300));
    }
    loss /= n;
    if (!std::isfinite(loss)) throw std::runtime_error("loss_and_grad: non-finite loss");

    for (int i = 0; i < n; ++i)
        for (int k = 0; k < cfg.n_classes; ++k)
            ws.dlogits[static_cast<std::size_t>(i) * cfg.n_classes + k] =
                (ws.probs[static_cast<std::size_t>(i) * cfg.n_classes + k] -
                 (k == targets[i] ? T(1) : T(0))) /
                static_cast<T>(n);

    if (grads.total_size() == 0) grads = ParamSet<T>::shaped_like(cfg);
    grads.fill(T(0));

    // ----- head backward -----
    const int c_last = cfg.block_channels.back();
    const std::size_t last_stride = static_cast<std::size_t>(c_last) * plane;
    for (int i = 0; i < n; ++i) {
        const T* dl = &ws.dlogits[static_cast<std::size_t>(i) * cfg.n_classes];
        const T* h = &ws.pooled[static_cast<std::size_t>(i) * c_last];
        for (int k = 0; k < cfg.n_classes; ++k) {
            grads.fc_b[k] += dl[k];
            T* grow = &grads.fc_w[static_cast<std::size_t>(k) * c_last];
            for (int o = 0; o < c_last; ++o) grow[o] += dl[k] * h[o];
        }
    }
    // d(pooled) -> d(last block output), spread uniformly over the plane
    parallel_samples<T>(pool, n, [&](std::size_t i) {
        const T* dl = &ws.dlogits[i * cfg.n_classes];
        T* dyp = &ws.dy[i * last_stride];
        const T inv_plane = T(1) / static_cast<T>(plane);
        for (int o = 0; o < c_last; ++o) {
            T dh = 0;
            for (int k = 0; k < cfg.n_classes; ++k)
                dh += m.params.fc_w[static_cast<std::size_t>(k) * c_last + o] * dl[k];
            dh *= inv_plane;
            T* dyo = dyp + static_cast<std::size_t>(o) * plane;
            for (std::size_t j = 0; j < plane; ++j) dyo[j] = dh;
        }
    });

    // ----- blocks backward, last to first -----
    for (int bi = static_cast<int>(cfg.block_channels.size()) - 1; bi >= 0; --bi) {
        auto& bc = ws.blocks[bi];
        auto& gp = grads.blocks[bi];
        const auto& bp = m.params.blocks[bi];
        const int cin = cfg.in_channels(bi);
        const int cout = cfg.block_channels[bi];
        const std::size_t out_stride = static_cast<std::size_t>(cout) * plane;
        const std::size_t in_stride = static_cast<std::size_t>(cin) * plane;
        const std::size_t cd2 = static_cast<std::size_t>(cout) * d2;
        const bool identity = cfg.is_identity(bi);
        const T* x_in = bi == 0 ? ws.x0.data() : ws.blocks[bi - 1].y.data();

        // phase A: everything that is per-sample, down to dZ and BN partials
        parallel_samples<T>(pool, n, [&](std::size_t i) {
            const T* dyp = &ws.dy[i * out_stride];
            T* dxp = &ws.dx[i * in_stride];
            if (identity)
                std::memcpy(dxp, dyp, out_stride * sizeof(T));
            else
                std::memset(dxp, 0, in_stride * sizeof(T));

            // the broadcast feature summary receives the column sums of dY
            T* dr_t = &bc.dr_t[i * cd2];
            for (int o = 0; o < cout; ++o) {
                const T* dyo = dyp + static_cast<std::size_t>(o) * plane;
                T* dro = dr_t + static_cast<std::size_t>(o) * d2;
                for (int jj = 0; jj < d2; ++jj) dro[jj] = 0;
                for (int ii = 0; ii < d1; ++ii) {
                    const T* dyrow = dyo + static_cast<std::size_t>(ii) * d2;
                    for (int jj = 0; jj < d2; ++jj) dro[jj] += dyrow[jj];
                }
            }

            // G path: dQ = dG * [Q > 0]
            thread_local std::vector<T> dq, dp;
            ensure_size(dq, cd2);
            dp.assign(cd2, T(0));
            const T* g = &bc.g[i * cd2];
            for (std::size_t j = 0; j < cd2; ++j)
                dq[j] = g[j] > T(0) ? dr_t[j] : T(0);  // dG = column sums of dY

            // pw2 backward
            T* g_pw2 = &bc.g_pw2[i * static_cast<std::size_t>(cout) * cout];
            std::memset(g_pw2, 0, static_cast<std::size_t>(cout) * cout * sizeof(T));
            gemm_nt_acc(g_pw2, dq.data(), &bc.p[i * cd2], cout, d2, cout);
            T* g_pw2_b = &bc.g_pw2_b[i * cout];
            for (int o = 0; o < cout; ++o) {
                T acc = 0;
                for (int jj = 0; jj < d2; ++jj)
                    acc += dq[static_cast<std::size_t>(o) * d2 + jj];
                g_pw2_b[o] = acc;
            }
            gemm_tn_acc(dp.data(), bp.pw2_w.data(), dq.data(), cout, cout, d2);

            // dw2 backward
            const T* rhat = &bc.rhat[i * cd2];
            T* g_dw2 = &bc.g_dw2[i * static_cast<std::size_t>(cout) * cfg.k2()];
            T* g_dw2_b = &bc.g_dw2_b[i * cout];
            T* drhat = &bc.drhat[i * cd2];
            const int off2 = cfg.k2() / 2;
            for (int o = 0; o < cout; ++o) {
                const T* dpo = dp.data() + static_cast<std::size_t>(o) * d2;
                const T* ro = rhat + static_cast<std::size_t>(o) * d2;
                T* dro = drhat + static_cast<std::size_t>(o) * d2;
                for (int jj = 0; jj < d2; ++jj) dro[jj] = 0;
                T db = 0;
                for (int j = 0; j < cfg.k2(); ++j) {
                    T dw = 0;
                    for (int jj = 0; jj < d2; ++jj) {
                        const int src = jj + j - off2;
                        if (src >= 0 && src < d2) {
                            dw += dpo[jj] * ro[src];
                            dro[src] += dpo[jj] * bp.dw2_w[o * cfg.k2() + j];
                        }
                    }
                    g_dw2[static_cast<std::size_t>(o) * cfg.k2() + j] = dw;
                }
                for (int jj = 0; jj < d2; ++jj) db += dpo[jj];
                g_dw2_b[o] = db;
            }

            // instance norm backward (per instance over all cd2 elements)
            const T* rhat_raw = &bc.rhat_raw[i * cd2];
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            thread_local std::vector<T> dxhat;
            ensure_size(dxhat, cd2);
            for (std::size_t j = 0; j < cd2; ++j) {
                dxhat[j] = drhat[j] * bp.in_gamma[j];
                mean_dxhat += dxhat[j];
                mean_dxhat_xhat += static_cast<double>(dxhat[j]) * rhat_raw[j];
            }
            mean_dxhat /= static_cast<double>(cd2);
            mean_dxhat_xhat /= static_cast<double>(cd2);
            const T inv_std_r = bc.in_inv_std[i];
            // r_t feeds only the instance-norm path; overwrite the scratch
            for (std::size_t j = 0; j < cd2; ++j)
                dr_t[j] = inv_std_r * static_cast<T>(dxhat[j] - mean_dxhat -
                                                     rhat_raw[j] * mean_dxhat_xhat);

            // A receives dY directly (the 2D residual addend) plus the pool
            // backward share; then the ReLU mask and BN partial sums
            const T* a = &bc.a[i * out_stride];
            const T* v = &bc.v[i * out_stride];
            T* dz = &ws.dy[i * out_stride];  // overwrite dY in place with dZ
            T* s1 = &bc.s1_partial[i * cout];
            T* s2 = &bc.s2_partial[i * cout];
            const T inv_d1 = T(1) / static_cast<T>(d1);
            for (int o = 0; o < cout; ++o) {
                const T mu = bc.bn_mu[o];
                const T inv_std = bc.bn_inv_std[o];
                const T* dro = dr_t + static_cast<std::size_t>(o) * d2;
                const T* ao = a + static_cast<std::size_t>(o) * plane;
                const T* vo = v + static_cast<std::size_t>(o) * plane;
                T* dzo = dz + static_cast<std::size_t>(o) * plane;
                double s1o = 0.0, s2o = 0.0;
                for (int ii = 0; ii < d1; ++ii) {
                    const std::size_t row = static_cast<std::size_t>(ii) * d2;
                    for (int jj = 0; jj < d2; ++jj) {
                        T dzv = T(0);
                        if (ao[row + jj] > T(0)) {
                            dzv = dzo[row + jj] + dro[jj] * inv_d1;
                            s1o += dzv;
                            s2o += static_cast<double>(dzv) * ((vo[row + jj] - mu) * inv_std);
                        }
                        dzo[row + jj] = dzv;
                    }
                }
                s1[o] = static_cast<T>(s1o);
                s2[o] = static_cast<T>(s2o);
            }
        });

        // reductions over samples (ascending order per element)
        {
            const std::size_t chunk = 2048;
            const std::size_t n_chunks = (cd2 + chunk - 1) / chunk;
            auto in_work = [&](std::size_t ci) {
                const std::size_t lo = ci * chunk;
                const std::size_t hi = std::min(lo + chunk, cd2);
                for (int i = 0; i < n; ++i) {
                    const T* drhat = &bc.drhat[static_cast<std::size_t>(i) * cd2];
                    const T* rhat_raw = &bc.rhat_raw[static_cast<std::size_t>(i) * cd2];
                    for (std::size_t j = lo; j < hi; ++j) {
                        gp.in_gamma[j] += drhat[j] * rhat_raw[j];
                        gp.in_beta[j] += drhat[j];
                    }
                }
            };
            if (pool && n_chunks > 1)
                pool->parallel_for(n_chunks, in_work);
            else
                for (std::size_t ci = 0; ci < n_chunks; ++ci) in_work(ci);
        }
        reduce_sample_partials(gp.pw2_w.data(), bc.g_pw2.data(), n,
                               static_cast<std::size_t>(cout) * cout, pool);
        reduce_sample_partials(gp.dw2_w.data(), bc.g_dw2.data(), n,
                               static_cast<std::size_t>(cout) * cfg.k2(), pool);
        reduce_sample_partials(gp.pw2_b.data(), bc.g_pw2_b.data(), n, cout, pool);
        reduce_sample_partials(gp.dw2_b.data(), bc.g_dw2_b.data(), n, cout, pool);
        std::vector<double> s1(cout, 0.0), s2(cout, 0.0);
        for (int i = 0; i < n; ++i)
            for (int o = 0; o < cout; ++o) {
                s1[o] += bc.s1_partial[static_cast<std::size_t>(i) * cout + o];
                s2[o] += bc.s2_partial[static_cast<std::size_t>(i) * cout + o];
            }
        for (int o = 0; o < cout; ++o) {
            gp.bn_beta[o] += static_cast<T>(s1[o]);
            gp.bn_gamma[o] += static_cast<T>(s2[o]);
        }
        const double m_count = static_cast<double>(n) * plane;
        std::vector<T> mean_dz(cout), mean_dz_vhat(cout);
        for (int o = 0; o < cout; ++o) {
            mean_dz[o] = static_cast<T>(s1[o] / m_count);
            mean_dz_vhat[o] = static_cast<T>(s2[o] / m_count);
        }

        // phase B: dV, pw1/dw1 backward, dX
        parallel_samples<T>(pool, n, [&](std::size_t i) {
            const T* dz = &ws.dy[i * out_stride];
            const T* v = &bc.v[i * out_stride];
            thread_local std::vector<T> dv, u, du;
            ensure_size(dv, out_stride);
            for (int o = 0; o < cout; ++o) {
                const T mu = bc.bn_mu[o];
                const T inv_std = bc.bn_inv_std[o];
                const T scale = bp.bn_gamma[o] * inv_std;
                const T* dzo = dz + static_cast<std::size_t>(o) * plane;
                const T* vo = v + static_cast<std::size_t>(o) * plane;
                T* dvo = dv.data() + static_cast<std::size_t>(o) * plane;
                const T m1 = mean_dz[o], m2 = mean_dz_vhat[o];
                for (std::size_t j = 0; j < plane; ++j) {
                    const T vhat = (vo[j] - mu) * inv_std;
                    dvo[j] = scale * (dzo[j] - m1 - vhat * m2);
                }
            }

            // recompute U (cheap depthwise) for the pw1 weight gradient
            ensure_size(u, static_cast<std::size_t>(cin) * plane);
            const T* x = x_in + i * in_stride;
            dw_conv_d1(x, u.data(), bp.dw1_w.data(), bp.dw1_b.data(), cin, d1, d2,
                       cfg.k1());

            T* g_pw1 = &bc.g_pw1[i * static_cast<std::size_t>(cout) * cin];
            std::memset(g_pw1, 0, static_cast<std::size_t>(cout) * cin * sizeof(T));
            gemm_nt_acc(g_pw1, dv.data(), u.data(), cout, plane, cin);
            T* g_pw1_b = &bc.g_pw1_b[i * cout];
            for (int o = 0; o < cout; ++o) {
                T acc = 0;
                const T* dvo = dv.data() + static_cast<std::size_t>(o) * plane;
                for (std::size_t j = 0; j < plane; ++j) acc += dvo[j];
                g_pw1_b[o] = acc;
            }

            du.assign(static_cast<std::size_t>(cin) * plane, T(0));
            gemm_tn_acc(du.data(), bp.pw1_w.data(), dv.data(), cin, cout, plane);

            // dw1 backward: weight grads and input grads
            T* g_dw1 = &bc.g_dw1[i * static_cast<std::size_t>(cin) * cfg.k1()];
            T* g_dw1_b = &bc.g_dw1_b[i * cin];
            T* dxp = &ws.dx[i * in_stride];
            const int off1 = cfg.k1() / 2;
            for (int c = 0; c < cin; ++c) {
                const T* duc = du.data() + static_cast<std::size_t>(c) * plane;
                const T* xc = x + static_cast<std::size_t>(c) * plane;
                T* dxc = dxp + static_cast<std::size_t>(c) * plane;
                T db = 0;
                for (int j = 0; j < cfg.k1(); ++j) {
                    T dw = 0;
                    const int shift = j - off1;
                    const T wj = bp.dw1_w[c * cfg.k1() + j];
                    for (int ii = 0; ii < d1; ++ii) {
                        const int src = ii + shift;
                        if (src < 0 || src >= d1) continue;
                        const T* durow = duc + static_cast<std::size_t>(ii) * d2;
                        const T* xrow = xc + static_cast<std::size_t>(src) * d2;
                        T* dxrow = dxc + static_cast<std::size_t>(src) * d2;
                        for (int jj = 0; jj < d2; ++jj) {
                            dw += durow[jj] * xrow[jj];
                            dxrow[jj] += durow[jj] * wj;
                        }
                    }
                    g_dw1[static_cast<std::size_t>(c) * cfg.k1() + j] = dw;
                }
                for (std::size_t j = 0; j < plane; ++j) db += duc[j];
                g_dw1_b[c] = db;
            }
        });

        // reductions of the D1-side parameter grads
        reduce_sample_partials(gp.pw1_w.data(), bc.g_pw1.data(), n,
                               static_cast<std::size_t>(cout) * cin, pool);
        reduce_sample_partials(gp.dw1_w.data(), bc.g_dw1.data(), n,
                               static_cast<std::size_t>(cin) * cfg.k1(), pool);
        reduce_sample_partials(gp.pw1_b.data(), bc.g_pw1_b.data(), n, cout, pool);
        reduce_sample_partials(gp.dw1_b.data(), bc.g_dw1_b.data(), n, cin, pool);

        std::swap(ws.dy, ws.dx);  // dX becomes the next (earlier) block's dY
    }

    // ----- layer norm backward (input gradients stop here; x_raw is data) -----
    {
        const std::size_t chunk = 1024;
        const std::size_t n_chunks = (plane + chunk - 1) / chunk;
        auto work = [&](std::size_t ci) {
            const std::size_t lo = ci * chunk;
            const std::size_t hi = std::min(lo + chunk, plane);
            for (int i = 0; i < n; ++i) {
                const T* dy = &ws.dy[static_cast<std::size_t>(i) * plane];
                const T* xhat = &ws.ln_xhat[static_cast<std::size_t>(i) * plane];
                for (std::size_t j = lo; j < hi; ++j) {
                    grads.ln_gamma[j] += dy[j] * xhat[j];
                    grads.ln_beta[j] += dy[j];
                }
            }
        };
        if (pool && n_chunks > 1)
            pool->parallel_for(n_chunks, work);
        else
            for (std::size_t ci = 0; ci < n_chunks; ++ci) work(ci);
    }

    return loss;
}

// ---------------------------------------------------------------------------
// Optimizer: bias-corrected adaptive moments
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
    ParamSet<T> m, v;
    std::int64_t t = 0;

    static AdamState shaped_like(const ModelConfig& cfg) {
        AdamState s;
        s.m = ParamSet<T>::shaped_like(cfg);
        s.v = ParamSet<T>::shaped_like(cfg);
        s.m.fill(T(0));
        s.v.fill(T(0));
        return s;
    }
};

template <typename T>
void apply_gradients(Model<T>& model, const GradientSet<T>& grads, AdamState<T>& state,
                     double lr, double beta1 = 0.9, double beta2 = 0.999,
                     double eps = 1e-8) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));

    std::vector<std::vector<T>*> pv, gv, mv, vv;
    model.params.for_each([&](const std::string&, std::vector<T>& a) { pv.push_back(&a); });
    const_cast<GradientSet<T>&>(grads).for_each(
        [&](const std::string&, std::vector<T>& a) { gv.push_back(&a); });
    state.m.for_each([&](const std::string&, std::vector<T>& a) { mv.push_back(&a); });
    state.v.for_each([&](const std::string&, std::vector<T>& a) { vv.push_back(&a); });
    if (pv.size() != gv.size())
        throw std::invalid_argument("apply_gradients: gradient shape mismatch");

    for (std::size_t a = 0; a < pv.size(); ++a) {
        auto& p = *pv[a];
        auto& g = *gv[a];
        auto& mm = *mv[a];
        auto& vvv = *vv[a];
        if (p.size() != g.size())
            throw std::invalid_argument("apply_gradients: array size mismatch");
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double gj = g[j];
            mm[j] = static_cast<T>(beta1 * mm[j] + (1.0 - beta1) * gj);
            vvv[j] = static_cast<T>(beta2 * vvv[j] + (1.0 - beta2) * gj * gj);
            const double mhat = mm[j] / bc1;
            const double vhat = vvv[j] / bc2;
            p[j] = static_cast<T>(p[j] - lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoints: "STLM", version, config, named float32 arrays in build order
// (learnable parameters followed by batch-norm running statistics).
// ---------------------------------------------------------------------------

constexpr std::uint32_t kCheckpointVersion = 1;

namespace model_detail {

inline void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ofstream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u32(out, static_cast<std::uint32_t>(bits & 0xffffffffULL));
    put_u32(out, static_cast<std::uint32_t>(bits >> 32));
}

inline double get_f64(std::ifstream& in) {
    const std::uint64_t lo = get_u32(in);
    const std::uint64_t hi = get_u32(in);
    const std::uint64_t bits = lo | (hi << 32);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

template <typename T>
void put_array(std::ofstream& out, const std::string& name, const std::vector<T>& v) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(v.size()));
    put_u32(out, static_cast<std::uint32_t>(v.size() >> 32));
    for (const T x : v) {
        const float f = static_cast<float>(x);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
}

template <typename T>
void get_array(std::ifstream& in, const std::string& expected_name, std::vector<T>& v,
               const std::string& path) {
    const std::uint32_t name_len = get_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (name != expected_name)
        throw std::runtime_error("checkpoint: expected array '" + expected_name +
                                 "', found '" + name + "' in " + path);
    const std::uint64_t lo = get_u32(in);
    const std::uint64_t hi = get_u32(in);
    const std::uint64_t count = lo | (hi << 32);
    if (count != v.size())
        throw std::runtime_error("checkpoint: array '" + name + "' has " +
                                 std::to_string(count) + " elements, expected " +
                                 std::to_string(v.size()) + " in " + path);
    for (auto& x : v) {
        const std::uint32_t bits = get_u32(in);
        float f;
        std::memcpy(&f, &bits, 4);
        x = static_cast<T>(f);
    }
}

}  // namespace model_detail

template <typename T>
void save_checkpoint(const Model<T>& m, const std::string& path) {
    using namespace model_detail;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write("STLM", 4);
    put_u32(out, kCheckpointVersion);
    const auto& cfg = m.config;
    put_u32(out, cfg.broadcast_axis == BroadcastAxis::Temporal ? 0 : 1);
    put_u32(out, static_cast<std::uint32_t>(cfg.block_channels.size()));
    for (const int c : cfg.block_channels) put_u32(out, static_cast<std::uint32_t>(c));
    put_u32(out, static_cast<std::uint32_t>(cfg.temporal_kernel));
    put_u32(out, static_cast<std::uint32_t>(cfg.feature_kernel));
    put_u32(out, static_cast<std::uint32_t>(cfg.n_classes));
    put_u32(out, static_cast<std::uint32_t>(cfg.input_t));
    put_u32(out, static_cast<std::uint32_t>(cfg.input_f));
    put_f64(out, cfg.eps_norm);
    put_f64(out, cfg.bn_momentum);

    m.params.for_each([&](const std::string& name, const std::vector<T>& v) {
        put_array(out, name, v);
    });
    for (std::size_t i = 0; i < m.bn_running_mean.size(); ++i) {
        const std::string b = "block" + std::to_string(i) + ".bn.";
        put_array(out, b + "running_mean", m.bn_running_mean[i]);
        put_array(out, b + "running_var", m.bn_running_var[i]);
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

template <typename T = float>
Model<T> load_checkpoint(const std::string& path) {
    using namespace model_detail;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "STLM", 4) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    const std::uint32_t version = get_u32(in);
    if (version != kCheckpointVersion)
        throw std::runtime_error("load_checkpoint: unsupported version in " + path);

    ModelConfig cfg;
    cfg.broadcast_axis = get_u32(in) == 0 ? BroadcastAxis::Temporal : BroadcastAxis::Feature;
    const std::uint32_t n_blocks = get_u32(in);
    cfg.block_channels.clear();
    for (std::uint32_t i = 0; i < n_blocks; ++i)
        cfg.block_channels.push_back(static_cast<int>(get_u32(in)));
    cfg.temporal_kernel = static_cast<int>(get_u32(in));
    cfg.feature_kernel = static_cast<int>(get_u32(in));
    cfg.n_classes = static_cast<int>(get_u32(in));
    cfg.input_t = static_cast<int>(get_u32(in));
    cfg.input_f = static_cast<int>(get_u32(in));
    cfg.eps_norm = get_f64(in);
    cfg.bn_momentum = get_f64(in);
    cfg.validate();

    Model<T> m;
    m.config = cfg;
    m.params = ParamSet<T>::shaped_like(cfg);
    m.params.for_each([&](const std::string& name, std::vector<T>& v) {
        get_array(in, name, v, path);
    });
    for (std::size_t i = 0; i < cfg.block_channels.size(); ++i) {
        m.bn_running_mean.emplace_back(cfg.block_channels[i], T(0));
        m.bn_running_var.emplace_back(cfg.block_channels[i], T(1));
        const std::string b = "block" + std::to_string(i) + ".bn.";
        get_array(in, b + "running_mean", m.bn_running_mean[i], path);
        get_array(in, b + "running_var", m.bn_running_var[i], path);
    }
    if (!in) throw std::runtime_error("load_checkpoint: truncated file: " + path);
    return m;
}

}  // namespace clickdet
