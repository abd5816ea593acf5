#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flowlab/core/rng.hpp"
#include "flowlab/core/tensor.hpp"
#include "flowlab/kern/kernels.hpp"
#include "flowlab/nn/layers.hpp"

namespace flowlab::flow {

/// Architecture descriptor. Everything needed to rebuild the parameter
/// shapes lives here; checkpoints serialize it verbatim.
struct FlowArch {
    int dz = 64;              // global-code dimension
    int blocks = 8;           // coupling blocks, alternating mask families
    int coupling_width = 16;  // hidden channels of each coupling net
    int encoder_base = 16;    // encoder widths are base, 2*base, 4*base
    int height = 32;
    int width = 32;
    float squeeze_eps = 0.05f;  // logit-squeeze epsilon
    float scale_cap = 2.0f;     // |log-scale| bound inside couplings

    void validate() const {
        if (dz < 1 || blocks < 1 || coupling_width < 1 || encoder_base < 1)
            throw std::invalid_argument("flow arch: sizes must be >= 1");
        if (height < 4 || width < 4) throw std::invalid_argument("flow arch: image too small");
        if (squeeze_eps <= 0.0f || squeeze_eps >= 0.5f)
            throw std::invalid_argument("flow arch: squeeze epsilon must be in (0, 0.5)");
        if (scale_cap <= 0.0f) throw std::invalid_argument("flow arch: scale cap must be > 0");
    }

    bool operator==(const FlowArch&) const = default;
};

/// Bits/dim from a negative log-likelihood in nats on D dimensions of
/// dequantized 8-bit data. The +8 is the exact D·log(256) correction; a
/// density that is uniform over the dequantized cube (nll = 0) scores
/// exactly 8 bits/dim.
template <class T>
T bits_per_dim(T nll_nats, std::size_t dims) {
    if (dims == 0) throw std::invalid_argument("bits_per_dim: zero dims");
    return nll_nats / (static_cast<T>(dims) * static_cast<T>(M_LN2)) + T(8);
}

/// KL(N(mu, diag(sigma^2)) || N(0, I)) with sigma = exp(log_sigma).
/// Non-negative, and zero exactly when mu = 0 and sigma = 1.
template <class T>
T kl_standard_normal(const Tensor<T>& mu, const Tensor<T>& log_sigma) {
    if (!mu.same_shape(log_sigma))
        throw std::invalid_argument("kl: mu and log_sigma shapes differ");
    T kl = 0;
    for (std::size_t j = 0; j < mu.size(); ++j) {
        const T s = std::exp(log_sigma[j]);
        kl += T(0.5) * (mu[j] * mu[j] + s * s - T(1)) - log_sigma[j];
    }
    return kl;
}

enum class EncodeMode { mean, sample };

template <class T>
struct ElboParts {
    T recon_nats = 0;  // -log p(x | z): flow change-of-variables term
    T kl_nats = 0;     // KL(q(z|x) || N(0, I))
    T objective = 0;   // recon + beta * kl (the training loss)
    T nll_nats = 0;    // recon + kl (the beta=1 bound used for bits/dim)
};

namespace detail {

/// Binary coupling mask: value 1 = coordinate is passed through unchanged
/// and visible to the coupling net, 0 = coordinate is transformed.
struct MaskSpec {
    enum class Kind { checker, channel } kind = Kind::checker;
    int variant = 0;  // checker: parity; channel: which channel is transformed

    template <class T>
    T at(int c, int y, int x) const {
        if (kind == Kind::checker) return ((y + x + variant) & 1) ? T(0) : T(1);
        return c == variant ? T(0) : T(1);
    }
};

inline MaskSpec mask_for_block(int index) {
    MaskSpec m;
    if (index % 2 == 0) {
        m.kind = MaskSpec::Kind::checker;
        m.variant = (index / 2) % 2;
    } else {
        m.kind = MaskSpec::Kind::channel;
        m.variant = ((index - 1) / 2) % 3;
    }
    return m;
}

}  // namespace detail

/// The conditioning network of one coupling block: a 3-layer net of 1x1
/// convolutions over the visible coordinates with the global code injected
/// as a per-channel bias after the first layer. Output channels 0..2 are
/// raw log-scales, 3..5 are shifts. The last layer is zero-initialized, so
/// a fresh block is exactly the identity map.
///
/// The kernels are deliberately 1x1: the bijection itself carries no
/// spatial context, so whitening a checkerboard-masked pixel (whose own
/// visible values are all zero) can only draw on z. That pins global
/// statistics — above all the background color — to the global code and
/// leaves per-pixel content to the local code, which is the decoupling the
/// rest of the system depends on. With wider kernels a flat background is
/// spatially self-predictive and the trained flow simply ignores z.
template <class T>
class CouplingNet {
public:
    CouplingNet() = default;
    CouplingNet(const std::string& name, int dz, int width)
        : conv_in_(name + ".in", 3, width, 1, 1, 0),
          zproj_(name + ".z", dz, width),
          conv_mid_(name + ".mid", width, width, 1, 1, 0),
          conv_out_(name + ".out", width, 6, 1, 1, 0),
          width_(width) {}

    void init(Rng& rng) {
        conv_in_.init_he(rng);
        zproj_.init_he(rng);
        conv_mid_.init_he(rng);
        conv_out_.init_zero();
    }

    void collect(nn::ParamRefs<T>& out) {
        conv_in_.collect(out);
        zproj_.collect(out);
        conv_mid_.collect(out);
        conv_out_.collect(out);
    }

    Tensor<T> forward(const Tensor<T>& masked_h, const Tensor<T>& z) {
        Tensor<T> a = conv_in_.forward(masked_h);
        Tensor<T> zb = zproj_.forward(z);
        const int hgt = a.extent(1), wid = a.extent(2);
        const std::size_t hw = static_cast<std::size_t>(hgt) * wid;
        for (int c = 0; c < width_; ++c) {
            T* row = a.data() + c * hw;
            const T b = zb[static_cast<std::size_t>(c)];
            for (std::size_t i = 0; i < hw; ++i) row[i] += b;
        }
        return conv_out_.forward(relu2_.forward(conv_mid_.forward(relu1_.forward(a))));
    }

    /// Backward from the 6-channel output gradient; accumulates parameter
    /// gradients and returns (grad wrt masked_h, grad wrt z).
    std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& gout) {
        Tensor<T> ga =
            conv_mid_.backward(relu2_.backward(conv_out_.backward(gout)));
        ga = relu1_.backward(ga);
        const int hgt = ga.extent(1), wid = ga.extent(2);
        const std::size_t hw = static_cast<std::size_t>(hgt) * wid;
        Tensor<T> gzb({width_});
        for (int c = 0; c < width_; ++c)
            gzb[static_cast<std::size_t>(c)] = kern::vsum(hw, ga.data() + c * hw);
        Tensor<T> gz = zproj_.backward(gzb);
        Tensor<T> gmh = conv_in_.backward(ga);
        return {std::move(gmh), std::move(gz)};
    }

private:
    nn::Conv2d<T> conv_in_, conv_mid_, conv_out_;
    nn::Dense<T> zproj_;
    nn::Relu<T> relu1_, relu2_;
    int width_ = 0;
};

/// One conditional affine coupling h' = M.h + (1-M).(h*exp(s) + t), with
/// (s_raw, t) = net(M.h, z) and s = cap*tanh(s_raw/cap).
template <class T>
class CouplingBlock {
public:
    CouplingBlock() = default;
    CouplingBlock(int index, int dz, int width, T cap)
        : mask_(detail::mask_for_block(index)),
          net_("block" + std::to_string(index), dz, width),
          cap_(cap),
          index_(index) {}

    void init(Rng& rng) { net_.init(rng); }
    void collect(nn::ParamRefs<T>& out) { net_.collect(out); }
    int index() const { return index_; }

    /// Training/encode direction. Caches everything backward() needs.
    Tensor<T> forward(const Tensor<T>& h, const Tensor<T>& z, T& logdet) {
        h_ = h;
        Tensor<T> mh = masked(h);
        Tensor<T> st = net_.forward(mh, z);
        compute_scales(st);

        const int hgt = h.extent(1), wid = h.extent(2);
        Tensor<T> out(h.shape());
        T ld = 0;
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < hgt; ++y)
                for (int x = 0; x < wid; ++x) {
                    const T m = mask_.template at<T>(c, y, x);
                    const T hv = h.at3(c, y, x);
                    if (m == T(1)) {
                        out.at3(c, y, x) = hv;
                    } else {
                        out.at3(c, y, x) = hv * es_.at3(c, y, x) + t_.at3(c, y, x);
                        ld += s_.at3(c, y, x);
                    }
                }
        logdet += ld;
        return out;
    }

    /// Inverse direction (decode). No caching needed by callers.
    Tensor<T> inverse(const Tensor<T>& hp, const Tensor<T>& z, T& logdet) {
        Tensor<T> mh = masked(hp);  // masked coords agree between h and h'
        Tensor<T> st = net_.forward(mh, z);
        compute_scales(st);

        const int hgt = hp.extent(1), wid = hp.extent(2);
        Tensor<T> out(hp.shape());
        T ld = 0;
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < hgt; ++y)
                for (int x = 0; x < wid; ++x) {
                    const T m = mask_.template at<T>(c, y, x);
                    const T hv = hp.at3(c, y, x);
                    if (m == T(1)) {
                        out.at3(c, y, x) = hv;
                    } else {
                        out.at3(c, y, x) =
                            (hv - t_.at3(c, y, x)) / es_.at3(c, y, x);
                        ld -= s_.at3(c, y, x);
                    }
                }
        logdet += ld;
        return out;
    }

    /// Backward through forward(). `g` is dL/d(output); returns dL/d(input)
    /// and accumulates dL/dz into gz. The -sum(s) log-determinant term of
    /// the loss is folded in here (hence the -1 on the scale gradient).
    Tensor<T> backward(const Tensor<T>& g, Tensor<T>& gz) {
        const int hgt = g.extent(1), wid = g.extent(2);
        Tensor<T> gst({6, hgt, wid});
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < hgt; ++y)
                for (int x = 0; x < wid; ++x) {
                    const T m = mask_.template at<T>(c, y, x);
                    if (m == T(1)) continue;
                    const T gv = g.at3(c, y, x);
                    const T th = th_.at3(c, y, x);
                    const T gs = gv * h_.at3(c, y, x) * es_.at3(c, y, x) - T(1);
                    gst.at3(c, y, x) = gs * (T(1) - th * th);  // through cap*tanh(./cap)
                    gst.at3(c + 3, y, x) = gv;                 // shift gradient
                }

        auto [gmh, gzb] = net_.backward(gst);
        kern::vadd(gz.size(), gz.data(), gzb.data(), gz.data());

        Tensor<T> gh(g.shape());
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < hgt; ++y)
                for (int x = 0; x < wid; ++x) {
                    const T m = mask_.template at<T>(c, y, x);
                    if (m == T(1)) {
                        gh.at3(c, y, x) = g.at3(c, y, x) + gmh.at3(c, y, x);
                    } else {
                        gh.at3(c, y, x) = g.at3(c, y, x) * es_.at3(c, y, x);
                    }
                }
        return gh;
    }

private:
    Tensor<T> masked(const Tensor<T>& h) const {
        const int hgt = h.extent(1), wid = h.extent(2);
        Tensor<T> mh(h.shape());
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < hgt; ++y)
                for (int x = 0; x < wid; ++x)
                    mh.at3(c, y, x) = mask_.template at<T>(c, y, x) * h.at3(c, y, x);
        return mh;
    }

    /// Splits the net output into capped log-scales and shifts.
    void compute_scales(const Tensor<T>& st) {
        const int hgt = st.extent(1), wid = st.extent(2);
        const std::size_t hw3 = static_cast<std::size_t>(3) * hgt * wid;
        s_ = Tensor<T>({3, hgt, wid});
        th_ = Tensor<T>({3, hgt, wid});
        t_ = Tensor<T>({3, hgt, wid});
        es_ = Tensor<T>({3, hgt, wid});
        Tensor<T> q({3, hgt, wid});
        kern::vscale(hw3, T(1) / cap_, st.data(), q.data());
        kern::vtanh(hw3, q.data(), th_.data());
        kern::vscale(hw3, cap_, th_.data(), s_.data());
        kern::vexp(hw3, s_.data(), es_.data());
        for (std::size_t i = 0; i < hw3; ++i) t_[i] = st[hw3 + i];
    }

    detail::MaskSpec mask_;
    CouplingNet<T> net_;
    T cap_ = T(2);
    int index_ = 0;
    Tensor<T> h_, s_, th_, t_, es_;  // forward caches
};

/// Convolutional recognition network for the global code: three stride-2
/// convolutions, global average pooling, and a dense head emitting
/// (mu, log-sigma).
template <class T>
class Encoder {
public:
    Encoder() = default;
    Encoder(int dz, int base)
        : c1_("enc.c1", 3, base, 3, 2, 1),
          c2_("enc.c2", base, 2 * base, 3, 2, 1),
          c3_("enc.c3", 2 * base, 4 * base, 3, 2, 1),
          head_("enc.head", 4 * base, 2 * dz),
          dz_(dz) {}

    void init(Rng& rng) {
        c1_.init_he(rng);
        c2_.init_he(rng);
        c3_.init_he(rng);
        // Small head so the initial posterior sits near N(0, I).
        head_.init_he(rng);
        nn::ParamRefs<T> hp;
        head_.collect(hp);
        for (auto& v : hp[0]->value.span()) v *= T(0.01);
    }

    void collect(nn::ParamRefs<T>& out) {
        c1_.collect(out);
        c2_.collect(out);
        c3_.collect(out);
        head_.collect(out);
    }

    /// Returns (mu, log_sigma), each of length dz.
    std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& x) {
        auto y = head_.forward(
            gap_.forward(r3_.forward(c3_.forward(r2_.forward(c2_.forward(r1_.forward(c1_.forward(x))))))));
        Tensor<T> mu({dz_});
        Tensor<T> ls({dz_});
        for (int j = 0; j < dz_; ++j) {
            mu[static_cast<std::size_t>(j)] = y[static_cast<std::size_t>(j)];
            ls[static_cast<std::size_t>(j)] = y[static_cast<std::size_t>(dz_ + j)];
        }
        return {std::move(mu), std::move(ls)};
    }

    void backward(const Tensor<T>& gmu, const Tensor<T>& gls) {
        Tensor<T> gy({2 * dz_});
        for (int j = 0; j < dz_; ++j) {
            gy[static_cast<std::size_t>(j)] = gmu[static_cast<std::size_t>(j)];
            gy[static_cast<std::size_t>(dz_ + j)] = gls[static_cast<std::size_t>(j)];
        }
        c1_.backward(r1_.backward(
            c2_.backward(r2_.backward(c3_.backward(r3_.backward(gap_.backward(head_.backward(gy))))))));
    }

private:
    nn::Conv2d<T> c1_, c2_, c3_;
    nn::Relu<T> r1_, r2_, r3_;
    nn::GlobalAvgPool<T> gap_;
    nn::Dense<T> head_;
    int dz_ = 0;
};

/// The decoupled generative flow: encoder q(z|x) plus a z-conditioned
/// invertible coupling stack between (logit-squeezed) image space and the
/// local code nu. Forward caches are single-example: run forward, then
/// backward, before the next example.
template <class T>
class FlowModelT {
public:
    FlowModelT() = default;

    explicit FlowModelT(const FlowArch& arch) : arch_(arch), encoder_(arch.dz, arch.encoder_base) {
        arch.validate();
        blocks_.reserve(static_cast<std::size_t>(arch.blocks));
        for (int b = 0; b < arch.blocks; ++b)
            blocks_.emplace_back(b, arch.dz, arch.coupling_width, static_cast<T>(arch.scale_cap));
        collect_params();
    }

    FlowModelT(const FlowModelT&) = delete;
    FlowModelT& operator=(const FlowModelT&) = delete;
    FlowModelT(FlowModelT&&) = delete;
    FlowModelT& operator=(FlowModelT&&) = delete;

    const FlowArch& arch() const { return arch_; }
    nn::ParamRefs<T>& params() { return params_; }
    const nn::ParamRefs<T>& params() const { return params_; }

    void init(Rng& rng) {
        encoder_.init(rng);
        for (auto& b : blocks_) b.init(rng);
    }

    /// Logit squeeze y = logit(eps + (1-2eps) x); accumulates the exact
    /// log |dy/dx| into logdet.
    Tensor<T> preprocess(const Tensor<T>& x, T& logdet) const {
        const T eps = static_cast<T>(arch_.squeeze_eps);
        const T a = T(1) - T(2) * eps;
        const T log_a = std::log(a);
        Tensor<T> y(x.shape());
        T ld = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const T s = eps + a * x[i];
            y[i] = std::log(s) - std::log(T(1) - s);
            ld += log_a - std::log(s) - std::log(T(1) - s);
        }
        logdet += ld;
        return y;
    }

    /// Exact inverse of preprocess, clamped to [0,1].
    Tensor<T> preprocess_inverse(const Tensor<T>& y) const {
        const T eps = static_cast<T>(arch_.squeeze_eps);
        const T a = T(1) - T(2) * eps;
        Tensor<T> x(y.shape());
        kern::vsigmoid(y.size(), y.data(), x.data());
        for (auto& v : x.span()) {
            v = (v - eps) / a;
            v = std::min(T(1), std::max(T(0), v));
        }
        return x;
    }

    /// (z, nu) for an image tensor [3,H,W] in [0,1]. mode=sample draws the
    /// reparameterized z from rng; mode=mean is deterministic and is what
    /// augmentation uses.
    std::pair<Tensor<T>, Tensor<T>> encode(const Tensor<T>& x, EncodeMode mode,
                                           Rng* rng = nullptr) {
        check_input(x);
        auto [mu, ls] = encoder_.forward(x);
        Tensor<T> z({arch_.dz});
        if (mode == EncodeMode::mean) {
            z = mu;
        } else {
            if (!rng) throw std::invalid_argument("encode: sample mode needs an rng");
            for (int j = 0; j < arch_.dz; ++j)
                z[static_cast<std::size_t>(j)] =
                    mu[static_cast<std::size_t>(j)] +
                    std::exp(ls[static_cast<std::size_t>(j)]) * static_cast<T>(rng->normal());
        }
        T logdet = 0;
        Tensor<T> nu = flow_forward(x, z, logdet);
        return {std::move(z), std::move(nu)};
    }

    /// Image tensor [3,H,W] in [0,1] from (z, nu): exact flow inverse, then
    /// inverse preprocessing.
    Tensor<T> decode(const Tensor<T>& z, const Tensor<T>& nu) {
        if (static_cast<int>(z.size()) != arch_.dz)
            throw std::invalid_argument("decode: z length != dz");
        if (nu.shape().size() != 3 || nu.extent(0) != 3)
            throw std::invalid_argument("decode: nu must be [3,H,W]");
        T logdet = 0;
        return preprocess_inverse(flow_inverse(nu, z, logdet));
    }

    /// The variational bound for one example, split into its parts.
    /// eta is the reparameterization noise (z = mu + sigma.eta); pass zeros
    /// for a deterministic mean-z evaluation. With backprop=true, parameter
    /// gradients of (recon + beta*kl) are accumulated.
    ElboParts<T> elbo(const Tensor<T>& x, T beta, const Tensor<T>& eta, bool backprop) {
        check_input(x);
        if (static_cast<int>(eta.size()) != arch_.dz)
            throw std::invalid_argument("elbo: eta length != dz");

        auto [mu, ls] = encoder_.forward(x);
        Tensor<T> sigma({arch_.dz});
        kern::vexp(sigma.size(), ls.data(), sigma.data());
        Tensor<T> z({arch_.dz});
        for (std::size_t j = 0; j < z.size(); ++j) z[j] = mu[j] + sigma[j] * eta[j];

        T logdet = 0;
        Tensor<T> pre = preprocess(x, logdet);
        Tensor<T> h = pre;
        for (auto& b : blocks_) {
            h = b.forward(h, z, logdet);
            check_finite(h, "forward", b.index());
        }

        const std::size_t D = x.size();
        const T half_log2pi = T(0.5) * std::log(T(2) * static_cast<T>(M_PI));
        T recon = T(0.5) * kern::vsumsq(h.size(), h.data()) +
                  static_cast<T>(D) * half_log2pi - logdet;

        const T kl = kl_standard_normal(mu, ls);

        ElboParts<T> parts;
        parts.recon_nats = recon;
        parts.kl_nats = kl;
        parts.objective = recon + beta * kl;
        parts.nll_nats = recon + kl;
        if (!std::isfinite(static_cast<double>(parts.objective)))
            throw std::runtime_error("flow: non-finite training objective");

        if (backprop) {
            // dL/dnu from 0.5*||nu||^2, then back through the couplings,
            // collecting dL/dz from every conditioning input.
            Tensor<T> g = h;
            Tensor<T> gz({arch_.dz});
            for (int b = arch_.blocks - 1; b >= 0; --b)
                g = blocks_[static_cast<std::size_t>(b)].backward(g, gz);

            Tensor<T> gmu({arch_.dz});
            Tensor<T> gls({arch_.dz});
            for (std::size_t j = 0; j < gmu.size(); ++j) {
                gmu[j] = gz[j] + beta * mu[j];
                gls[j] = gz[j] * eta[j] * sigma[j] + beta * (sigma[j] * sigma[j] - T(1));
            }
            encoder_.backward(gmu, gls);
        }
        return parts;
    }

    /// Deterministic bits/dim of the beta=1 bound with mean z.
    T nll_bpd(const Tensor<T>& x) {
        Tensor<T> eta({arch_.dz});
        auto parts = elbo(x, T(1), eta, false);
        return bits_per_dim(parts.nll_nats, x.size());
    }

    /// Forward half of the flow alone (used by encode and tests).
    Tensor<T> flow_forward(const Tensor<T>& x, const Tensor<T>& z, T& logdet) {
        Tensor<T> h = preprocess(x, logdet);
        for (auto& b : blocks_) {
            h = b.forward(h, z, logdet);
            check_finite(h, "forward", b.index());
        }
        return h;
    }

    /// Inverse of the coupling stack alone: nu back to preprocessed space,
    /// accumulating the inverse log-determinant (the negation of the
    /// forward blocks' contribution).
    Tensor<T> flow_inverse(const Tensor<T>& nu, const Tensor<T>& z, T& logdet) {
        Tensor<T> h = nu;
        for (int b = arch_.blocks - 1; b >= 0; --b) {
            h = blocks_[static_cast<std::size_t>(b)].inverse(h, z, logdet);
            check_finite(h, "inverse", b);
        }
        return h;
    }

private:
    void collect_params() {
        params_.clear();
        encoder_.collect(params_);
        for (auto& b : blocks_) b.collect(params_);
    }

    void check_input(const Tensor<T>& x) const {
        if (x.shape().size() != 3 || x.extent(0) != 3)
            throw std::invalid_argument("flow: input must be [3,H,W], got " + x.shape_str());
    }

    static void check_finite(const Tensor<T>& h, const char* dir, int block) {
        const T s = kern::vsum(h.size(), h.data());
        if (!std::isfinite(static_cast<double>(s)))
            throw std::runtime_error(std::string("flow: non-finite activations in ") + dir +
                                     " at block " + std::to_string(block));
    }

    FlowArch arch_;
    Encoder<T> encoder_;
    std::vector<CouplingBlock<T>> blocks_;
    nn::ParamRefs<T> params_;
};

using FlowModel = FlowModelT<float>;

extern template class FlowModelT<float>;
extern template class FlowModelT<double>;

}  // namespace flowlab::flow
