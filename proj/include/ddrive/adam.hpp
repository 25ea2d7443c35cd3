#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ddrive/tensor.hpp"

namespace dd {

struct AdamConfig {
    float lr = 1e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

struct AdamState {
    AdamConfig cfg;
    long long t = 0;
    std::vector<Tensor> m;  // one pair per weight tensor, shape-matched
    std::vector<Tensor> v;
};

inline AdamState make_adam(const std::vector<const Tensor*>& params, AdamConfig cfg = {}) {
    AdamState st;
    st.cfg = cfg;
    for (const Tensor* p : params) {
        st.m.emplace_back(p->shape);
        st.v.emplace_back(p->shape);
    }
    return st;
}

inline void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
                      AdamState& st) {
    if (params.size() != grads.size() || params.size() != st.m.size())
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    st.t += 1;
    double bc1 = 1.0 - std::pow(static_cast<double>(st.cfg.beta1), static_cast<double>(st.t));
    double bc2 = 1.0 - std::pow(static_cast<double>(st.cfg.beta2), static_cast<double>(st.t));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (!p.same_shape(g) || !p.same_shape(st.m[i]))
            throw std::invalid_argument("adam_step: shape mismatch");
        float* mp = st.m[i].ptr();
        float* vp = st.v[i].ptr();
        float* pp = p.ptr();
        const float* gp = g.ptr();
        for (int j = 0; j < p.size(); ++j) {
            if (!std::isfinite(gp[j])) throw std::runtime_error("adam_step: non-finite gradient");
            mp[j] = st.cfg.beta1 * mp[j] + (1.0f - st.cfg.beta1) * gp[j];
            vp[j] = st.cfg.beta2 * vp[j] + (1.0f - st.cfg.beta2) * gp[j] * gp[j];
            float mhat = mp[j] / static_cast<float>(bc1);
            float vhat = vp[j] / static_cast<float>(bc2);
            pp[j] -= st.cfg.lr * mhat / (std::sqrt(vhat) + st.cfg.eps);
        }
    }
}

}  // namespace dd
