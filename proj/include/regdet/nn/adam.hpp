#pragma once

#include <cmath>
#include <map>

#include "regdet/nn/graph.hpp"

namespace regdet::nn {

// Adaptive-moment optimizer with bias correction; default moments.
class Adam {
public:
    explicit Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    double learning_rate() const { return lr_; }

    void step(const std::map<const Param*, Tensor>& grads) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (const auto& [param, grad] : grads) {
            State& s = state_[param];
            if (!s.m.defined()) {
                s.m = Tensor::zeros(grad.shape);
                s.v = Tensor::zeros(grad.shape);
            }
            float* m = s.m.data();
            float* v = s.v.data();
            const float* g = grad.data();
            float* p = const_cast<Param*>(param)->value.data();
            for (std::size_t i = 0; i < grad.size(); ++i) {
                m[i] = static_cast<float>(beta1_ * m[i] + (1.0 - beta1_) * g[i]);
                v[i] = static_cast<float>(beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i]);
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                p[i] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

private:
    struct State {
        Tensor m, v;
    };
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::map<const Param*, State> state_;
};

}  // namespace regdet::nn
