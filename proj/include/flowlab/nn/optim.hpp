#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "flowlab/nn/layers.hpp"

namespace flowlab::nn {

/// SGD with classical momentum and decoupled-from-nothing L2 weight decay
/// (decay is added to the raw gradient, the standard classifier recipe).
template <class T>
class SgdMomentum {
public:
    SgdMomentum(ParamRefs<T> params, T lr, T momentum, T weight_decay)
        : params_(std::move(params)), lr_(lr), momentum_(momentum), wd_(weight_decay) {
        if (lr <= T(0)) throw std::invalid_argument("sgd: lr must be > 0");
        for (auto* p : params_) velocity_.emplace_back(p->value.shape());
    }

    void set_lr(T lr) { lr_ = lr; }
    T lr() const { return lr_; }

    void zero_grad() { zero_grads(params_); }

    void step() {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& w = params_[i]->value;
            auto& g = params_[i]->grad;
            auto& v = velocity_[i];
            for (std::size_t j = 0; j < w.size(); ++j) {
                const T grad = g[j] + wd_ * w[j];
                v[j] = momentum_ * v[j] + grad;
                w[j] -= lr_ * v[j];
            }
        }
    }

private:
    ParamRefs<T> params_;
    std::vector<Tensor<T>> velocity_;
    T lr_, momentum_, wd_;
};

/// Adam with bias correction.
template <class T>
class Adam {
public:
    Adam(ParamRefs<T> params, T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
        : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
        if (lr <= T(0)) throw std::invalid_argument("adam: lr must be > 0");
        for (auto* p : params_) {
            m_.emplace_back(p->value.shape());
            v_.emplace_back(p->value.shape());
        }
    }

    void set_lr(T lr) { lr_ = lr; }
    T lr() const { return lr_; }

    void zero_grad() { zero_grads(params_); }

    void step() {
        ++t_;
        const T c1 = T(1) - std::pow(b1_, static_cast<T>(t_));
        const T c2 = T(1) - std::pow(b2_, static_cast<T>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& w = params_[i]->value;
            auto& g = params_[i]->grad;
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t j = 0; j < w.size(); ++j) {
                m[j] = b1_ * m[j] + (T(1) - b1_) * g[j];
                v[j] = b2_ * v[j] + (T(1) - b2_) * g[j] * g[j];
                const T mhat = m[j] / c1;
                const T vhat = v[j] / c2;
                w[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

private:
    ParamRefs<T> params_;
    std::vector<Tensor<T>> m_, v_;
    T lr_, b1_, b2_, eps_;
    long t_ = 0;
};

}  // namespace flowlab::nn
