#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flowlab/core/rng.hpp"
#include "flowlab/core/tensor.hpp"
#include "flowlab/kern/kernels.hpp"

namespace flowlab::nn {

/// A learnable tensor and its gradient accumulator. Layers own these and
/// expose them through collect() so optimizers and checkpoints see a flat,
/// stable-ordered list.
template <class T>
struct ParamTensor {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    void reset(std::string n, std::vector<int> shape) {
        name = std::move(n);
        value = Tensor<T>(shape);
        grad = Tensor<T>(std::move(shape));
    }
};

template <class T>
using ParamRefs = std::vector<ParamTensor<T>*>;

template <class T>
std::size_t param_count(const ParamRefs<T>& params) {
    std::size_t n = 0;
    for (const auto* p : params) n += p->value.size();
    return n;
}

template <class T>
void zero_grads(const ParamRefs<T>& params) {
    for (auto* p : params) p->grad.zero();
}

namespace detail {

template <class T>
Tensor<T> transposed(const Tensor<T>& a) {
    const int r = a.extent(0), c = a.extent(1);
    Tensor<T> t({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) t[static_cast<std::size_t>(j) * r + i] = a[static_cast<std::size_t>(i) * c + j];
    return t;
}

}  // namespace detail

/// 2-d convolution over a single [C,H,W] example, lowered to one GEMM via
/// im2col. Weights are stored pre-flattened as [out_ch, in_ch*k*k].
template <class T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::string name, int in_ch, int out_ch, int ksize, int stride, int pad) {
        if (in_ch < 1 || out_ch < 1 || ksize < 1 || stride < 1 || pad < 0)
            throw std::invalid_argument("conv: bad geometry");
        in_ch_ = in_ch;
        out_ch_ = out_ch;
        k_ = ksize;
        stride_ = stride;
        pad_ = pad;
        w_.reset(name + ".w", {out_ch, in_ch * ksize * ksize});
        b_.reset(name + ".b", {out_ch});
    }

    /// He-normal fan-in initialization (post-relu variance preserving).
    void init_he(Rng& rng) {
        const T std = std::sqrt(T(2) / static_cast<T>(in_ch_ * k_ * k_));
        for (auto& v : w_.value.span()) v = static_cast<T>(rng.normal()) * std;
        b_.value.zero();
    }

    /// All-zero weights and bias: the layer's output is identically 0.
    void init_zero() {
        w_.value.zero();
        b_.value.zero();
    }

    void collect(ParamRefs<T>& out) {
        out.push_back(&w_);
        out.push_back(&b_);
    }

    int out_extent(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.shape().size() != 3 || x.extent(0) != in_ch_)
            throw std::invalid_argument("conv " + w_.name + ": input shape " + x.shape_str());
        h_ = x.extent(1);
        w_in_ = x.extent(2);
        const int oh = out_extent(h_), ow = out_extent(w_in_);
        if (oh < 1 || ow < 1) throw std::invalid_argument("conv " + w_.name + ": empty output");

        im2col(x);
        Tensor<T> y({out_ch_, oh, ow});
        const int ohw = oh * ow;
        kern::gemm(out_ch_, ohw, in_ch_ * k_ * k_, w_.value.data(), in_ch_ * k_ * k_,
                   cols_.data(), ohw, y.data(), ohw, false);
        for (int oc = 0; oc < out_ch_; ++oc) {
            T* row = y.data() + static_cast<std::size_t>(oc) * ohw;
            const T bias = b_.value[static_cast<std::size_t>(oc)];
            for (int i = 0; i < ohw; ++i) row[i] += bias;
        }
        return y;
    }

    /// Accumulates weight/bias gradients from the cached forward input and
    /// returns the gradient with respect to that input.
    Tensor<T> backward(const Tensor<T>& gy) {
        const int oh = out_extent(h_), ow = out_extent(w_in_);
        const int ohw = oh * ow;
        const int kk = in_ch_ * k_ * k_;
        if (gy.shape().size() != 3 || gy.extent(0) != out_ch_ || gy.extent(1) != oh ||
            gy.extent(2) != ow)
            throw std::invalid_argument("conv " + w_.name + ": grad shape " + gy.shape_str());

        // dW += gy · colsᵀ ; db += row sums of gy.
        Tensor<T> colsT = detail::transposed(cols_);
        kern::gemm(out_ch_, kk, ohw, gy.data(), ohw, colsT.data(), kk, w_.grad.data(), kk, true);
        for (int oc = 0; oc < out_ch_; ++oc)
            b_.grad[static_cast<std::size_t>(oc)] +=
                kern::vsum(static_cast<std::size_t>(ohw),
                           gy.data() + static_cast<std::size_t>(oc) * ohw);

        // dcols = Wᵀ · gy, then scattered back to input coordinates.
        Tensor<T> wT = detail::transposed(w_.value);
        Tensor<T> dcols({kk, ohw});
        kern::gemm(kk, ohw, out_ch_, wT.data(), out_ch_, gy.data(), ohw, dcols.data(), ohw,
                   false);
        return col2im(dcols);
    }

    const ParamTensor<T>& weight() const { return w_; }
    ParamTensor<T>& weight() { return w_; }

private:
    void im2col(const Tensor<T>& x) {
        const int oh = out_extent(h_), ow = out_extent(w_in_);
        const int ohw = oh * ow;
        cols_ = Tensor<T>({in_ch_ * k_ * k_, ohw});
        std::size_t r = 0;
        for (int c = 0; c < in_ch_; ++c) {
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx, ++r) {
                    T* row = cols_.data() + r * static_cast<std::size_t>(ohw);
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride_ - pad_ + ky;
                        if (iy < 0 || iy >= h_) continue;  // row pre-zeroed
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride_ - pad_ + kx;
                            if (ix < 0 || ix >= w_in_) continue;
                            row[oy * ow + ox] = x.at3(c, iy, ix);
                        }
                    }
                }
            }
        }
    }

    Tensor<T> col2im(const Tensor<T>& dcols) const {
        const int oh = out_extent(h_), ow = out_extent(w_in_);
        const int ohw = oh * ow;
        Tensor<T> gx({in_ch_, h_, w_in_});
        std::size_t r = 0;
        for (int c = 0; c < in_ch_; ++c) {
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx, ++r) {
                    const T* row = dcols.data() + r * static_cast<std::size_t>(ohw);
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride_ - pad_ + ky;
                        if (iy < 0 || iy >= h_) continue;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride_ - pad_ + kx;
                            if (ix < 0 || ix >= w_in_) continue;
                            gx.at3(c, iy, ix) += row[oy * ow + ox];
                        }
                    }
                }
            }
        }
        return gx;
    }

    int in_ch_ = 0, out_ch_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
    int h_ = 0, w_in_ = 0;
    ParamTensor<T> w_, b_;
    Tensor<T> cols_;
};

/// Fully connected layer on a flat vector: y = W·x + b.
template <class T>
class Dense {
public:
    Dense() = default;
    Dense(std::string name, int in_dim, int out_dim) {
        if (in_dim < 1 || out_dim < 1) throw std::invalid_argument("dense: bad dims");
        in_ = in_dim;
        out_ = out_dim;
        w_.reset(name + ".w", {out_dim, in_dim});
        b_.reset(name + ".b", {out_dim});
    }

    void init_he(Rng& rng) {
        const T std = std::sqrt(T(2) / static_cast<T>(in_));
        for (auto& v : w_.value.span()) v = static_cast<T>(rng.normal()) * std;
        b_.value.zero();
    }

    void init_zero() {
        w_.value.zero();
        b_.value.zero();
    }

    void collect(ParamRefs<T>& out) {
        out.push_back(&w_);
        out.push_back(&b_);
    }

    Tensor<T> forward(const Tensor<T>& x) {
        if (static_cast<int>(x.size()) != in_)
            throw std::invalid_argument("dense " + w_.name + ": input size " + x.shape_str());
        x_ = x;
        Tensor<T> y({out_});
        for (int o = 0; o < out_; ++o)
            y[static_cast<std::size_t>(o)] =
                kern::vdot(static_cast<std::size_t>(in_),
                           w_.value.data() + static_cast<std::size_t>(o) * in_, x.data()) +
                b_.value[static_cast<std::size_t>(o)];
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        if (static_cast<int>(gy.size()) != out_)
            throw std::invalid_argument("dense " + w_.name + ": grad size " + gy.shape_str());
        Tensor<T> gx({in_});
        for (int o = 0; o < out_; ++o) {
            const T g = gy[static_cast<std::size_t>(o)];
            kern::axpy(static_cast<std::size_t>(in_), g, x_.data(),
                       w_.grad.data() + static_cast<std::size_t>(o) * in_);
            kern::axpy(static_cast<std::size_t>(in_), g,
                       w_.value.data() + static_cast<std::size_t>(o) * in_, gx.data());
            b_.grad[static_cast<std::size_t>(o)] += g;
        }
        return gx;
    }

private:
    int in_ = 0, out_ = 0;
    ParamTensor<T> w_, b_;
    Tensor<T> x_;
};

/// Elementwise max(x, 0); shape-preserving.
template <class T>
class Relu {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        x_ = x;
        Tensor<T> y(x.shape());
        kern::relu(x.size(), x.data(), y.data());
        return y;
    }
    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(gy.shape());
        kern::relu_bwd(gy.size(), x_.data(), gy.data(), gx.data());
        return gx;
    }

private:
    Tensor<T> x_;
};

/// Global average pooling [C,H,W] -> [C].
template <class T>
class GlobalAvgPool {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        if (x.shape().size() != 3) throw std::invalid_argument("gap: need [C,H,W]");
        c_ = x.extent(0);
        h_ = x.extent(1);
        w_ = x.extent(2);
        Tensor<T> y({c_});
        const std::size_t hw = static_cast<std::size_t>(h_) * w_;
        for (int c = 0; c < c_; ++c)
            y[static_cast<std::size_t>(c)] = kern::vsum(hw, x.data() + c * hw) / static_cast<T>(hw);
        return y;
    }
    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx({c_, h_, w_});
        const std::size_t hw = static_cast<std::size_t>(h_) * w_;
        for (int c = 0; c < c_; ++c) {
            const T g = gy[static_cast<std::size_t>(c)] / static_cast<T>(hw);
            T* row = gx.data() + c * hw;
            for (std::size_t i = 0; i < hw; ++i) row[i] = g;
        }
        return gx;
    }

private:
    int c_ = 0, h_ = 0, w_ = 0;
};

}  // namespace flowlab::nn
