#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "facerep/rng.hpp"

namespace facerep::nn {

// NCHW, contiguous. FC stages use h = w = 1.
template <typename S>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<S> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          data(static_cast<size_t>(n_) * c_ * h_ * w_, S(0)) {}

    size_t per_image() const { return static_cast<size_t>(c) * h * w; }
    size_t size() const { return static_cast<size_t>(n) * per_image(); }
    S* img(int i) { return data.data() + per_image() * i; }
    const S* img(int i) const { return data.data() + per_image() * i; }
};

template <typename S>
struct Param {
    std::string name;
    std::vector<S>* value;
    std::vector<S>* grad;
};

template <typename S>
struct StateVec {
    std::string name;
    std::vector<S>* data;
};

template <typename S>
using MatR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MapM = Eigen::Map<MatR<S>>;
template <typename S>
using CMapM = Eigen::Map<const MatR<S>>;

template <typename S>
class Layer {
  public:
    virtual ~Layer() = default;
    virtual Tensor<S> forward(Tensor<S> x, bool training) = 0;
    virtual Tensor<S> backward(Tensor<S> dy) = 0;
    virtual std::vector<Param<S>> params() { return {}; }
    virtual std::vector<StateVec<S>> state() { return {}; }
    virtual std::string kind() const = 0;
};

// 3x3 convolution, stride 1, zero padding 1, via im2col + GEMM.
template <typename S>
class Conv3x3 : public Layer<S> {
  public:
    Conv3x3(int in_c, int out_c, Rng& rng) : in_c_(in_c), out_c_(out_c) {
        const double std = std::sqrt(2.0 / (9.0 * in_c));
        std::normal_distribution<double> gauss(0.0, std);
        weight_.resize(static_cast<size_t>(out_c) * in_c * 9);
        for (S& v : weight_) v = static_cast<S>(gauss(rng));
        bias_.assign(out_c, S(0));
        wgrad_.assign(weight_.size(), S(0));
        bgrad_.assign(bias_.size(), S(0));
    }

    Tensor<S> forward(Tensor<S> x, bool training) override {
        if (x.c != in_c_) throw std::invalid_argument("Conv3x3: channel mismatch");
        Tensor<S> y(x.n, out_c_, x.h, x.w);
        const int hw = x.h * x.w;
        col_.assign(static_cast<size_t>(in_c_) * 9 * hw, S(0));
        CMapM<S> wm(weight_.data(), out_c_, in_c_ * 9);
        for (int i = 0; i < x.n; ++i) {
            im2col(x.img(i), x.h, x.w);
            MapM<S> ym(y.img(i), out_c_, hw);
            ym.noalias() = wm * CMapM<S>(col_.data(), in_c_ * 9, hw);
            for (int oc = 0; oc < out_c_; ++oc) ym.row(oc).array() += bias_[oc];
        }
        if (training) input_ = std::move(x);
        return y;
    }

    Tensor<S> backward(Tensor<S> dy) override {
        Tensor<S> dx(input_.n, in_c_, input_.h, input_.w);
        const int hw = input_.h * input_.w;
        MapM<S> dwm(wgrad_.data(), out_c_, in_c_ * 9);
        CMapM<S> wm(weight_.data(), out_c_, in_c_ * 9);
        std::vector<S> dcol(static_cast<size_t>(in_c_) * 9 * hw);
        for (int i = 0; i < input_.n; ++i) {
            im2col(input_.img(i), input_.h, input_.w);
            CMapM<S> dym(dy.img(i), out_c_, hw);
            dwm.noalias() += dym * CMapM<S>(col_.data(), in_c_ * 9, hw).transpose();
            for (int oc = 0; oc < out_c_; ++oc) bgrad_[oc] += dym.row(oc).sum();
            MapM<S> dcm(dcol.data(), in_c_ * 9, hw);
            dcm.noalias() = wm.transpose() * dym;
            col2im(dcol.data(), dx.img(i), input_.h, input_.w);
        }
        return dx;
    }

    std::vector<Param<S>> params() override {
        return {{"conv.weight", &weight_, &wgrad_}, {"conv.bias", &bias_, &bgrad_}};
    }
    std::vector<StateVec<S>> state() override {
        return {{"conv.weight", &weight_}, {"conv.bias", &bias_}};
    }
    std::string kind() const override { return "conv3x3"; }

  private:
    void im2col(const S* src, int h, int w) {
        const int hw = h * w;
        S* dst = col_.data();
        for (int c = 0; c < in_c_; ++c) {
            const S* plane = src + static_cast<size_t>(c) * hw;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    S* row = dst + (static_cast<size_t>(c) * 9 + ky * 3 + kx) * hw;
                    for (int y = 0; y < h; ++y) {
                        const int yy = y + ky - 1;
                        if (yy < 0 || yy >= h) {
                            std::fill(row + y * w, row + (y + 1) * w, S(0));
                            continue;
                        }
                        for (int x = 0; x < w; ++x) {
                            const int xx = x + kx - 1;
                            row[y * w + x] = (xx < 0 || xx >= w) ? S(0) : plane[yy * w + xx];
                        }
                    }
                }
            }
        }
    }

    void col2im(const S* dcol, S* dst, int h, int w) {
        const int hw = h * w;
        for (int c = 0; c < in_c_; ++c) {
            S* plane = dst + static_cast<size_t>(c) * hw;
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const S* row = dcol + (static_cast<size_t>(c) * 9 + ky * 3 + kx) * hw;
                    for (int y = 0; y < h; ++y) {
                        const int yy = y + ky - 1;
                        if (yy < 0 || yy >= h) continue;
                        for (int x = 0; x < w; ++x) {
                            const int xx = x + kx - 1;
                            if (xx >= 0 && xx < w) plane[yy * w + xx] += row[y * w + x];
                        }
                    }
                }
            }
        }
    }

    int in_c_, out_c_;
    std::vector<S> weight_, bias_, wgrad_, bgrad_;
    std::vector<S> col_;
    Tensor<S> input_;
};

// Per-channel normalization: batch statistics (biased variance) in training,
// running statistics in inference. Works on conv maps and FC features alike.
template <typename S>
class BatchNorm : public Layer<S> {
  public:
    explicit BatchNorm(int channels)
        : c_(channels), gamma_(channels, S(1)), beta_(channels, S(0)),
          rmean_(channels, S(0)), rvar_(channels, S(1)),
          ggrad_(channels, S(0)), bgrad_(channels, S(0)) {}

    Tensor<S> forward(Tensor<S> x, bool training) override {
        if (x.c != c_) throw std::invalid_argument("BatchNorm: channel mismatch");
        const int plane = x.h * x.w;
        const int per_ch = x.n * plane;
        Tensor<S> y(x.n, x.c, x.h, x.w);
        if (!training) {
            for (int ch = 0; ch < c_; ++ch) {
                const S istd = S(1) / std::sqrt(rvar_[ch] + S(kEps));
                for (int i = 0; i < x.n; ++i) {
                    const S* src = x.img(i) + static_cast<size_t>(ch) * plane;
                    S* dst = y.img(i) + static_cast<size_t>(ch) * plane;
                    for (int k = 0; k < plane; ++k) {
                        dst[k] = gamma_[ch] * (src[k] - rmean_[ch]) * istd + beta_[ch];
                    }
                }
            }
            return y;
        }
        xhat_.resize(x.size());
        istd_.assign(c_, S(0));
        n_ = x.n;
        h_ = x.h;
        w_ = x.w;
        for (int ch = 0; ch < c_; ++ch) {
            double sum = 0, sq = 0;
            for (int i = 0; i < x.n; ++i) {
                const S* src = x.img(i) + static_cast<size_t>(ch) * plane;
                for (int k = 0; k < plane; ++k) {
                    sum += src[k];
                    sq += static_cast<double>(src[k]) * src[k];
                }
            }
            const double mean = sum / per_ch;
            const double var = std::max(0.0, sq / per_ch - mean * mean);
            const S istd = static_cast<S>(1.0 / std::sqrt(var + kEps));
            istd_[ch] = istd;
            rmean_[ch] = static_cast<S>((1.0 - kMomentum) * rmean_[ch] + kMomentum * mean);
            rvar_[ch] = static_cast<S>((1.0 - kMomentum) * rvar_[ch] + kMomentum * var);
            for (int i = 0; i < x.n; ++i) {
                const S* src = x.img(i) + static_cast<size_t>(ch) * plane;
                S* dst = y.img(i) + static_cast<size_t>(ch) * plane;
                S* xh = xhat_.data() + (x.img(i) - x.data.data()) + static_cast<size_t>(ch) * plane;
                for (int k = 0; k < plane; ++k) {
                    xh[k] = static_cast<S>((src[k] - mean) * istd);
                    dst[k] = gamma_[ch] * xh[k] + beta_[ch];
                }
            }
        }
        return y;
    }

    Tensor<S> backward(Tensor<S> dy) override {
        const int plane = h_ * w_;
        const int per_ch = n_ * plane;
        const size_t per_image = static_cast<size_t>(c_) * plane;
        Tensor<S> dx(n_, c_, h_, w_);
        for (int ch = 0; ch < c_; ++ch) {
            double sum_dy = 0, sum_dyxh = 0;
            for (int i = 0; i < n_; ++i) {
                const S* d = dy.img(i) + static_cast<size_t>(ch) * plane;
                const S* xh = xhat_.data() + per_image * i + static_cast<size_t>(ch) * plane;
                for (int k = 0; k < plane; ++k) {
                    sum_dy += d[k];
                    sum_dyxh += static_cast<double>(d[k]) * xh[k];
                }
            }
            ggrad_[ch] += static_cast<S>(sum_dyxh);
            bgrad_[ch] += static_cast<S>(sum_dy);
            const double mean_dy = sum_dy / per_ch;
            const double mean_dyxh = sum_dyxh / per_ch;
            const double scale = static_cast<double>(gamma_[ch]) * istd_[ch];
            for (int i = 0; i < n_; ++i) {
                const S* d = dy.img(i) + static_cast<size_t>(ch) * plane;
                const S* xh = xhat_.data() + per_image * i + static_cast<size_t>(ch) * plane;
                S* o = dx.img(i) + static_cast<size_t>(ch) * plane;
                for (int k = 0; k < plane; ++k) {
                    o[k] = static_cast<S>(scale * (d[k] - mean_dy - xh[k] * mean_dyxh));
                }
            }
        }
        return dx;
    }

    std::vector<Param<S>> params() override {
        return {{"bn.gamma", &gamma_, &ggrad_}, {"bn.beta", &beta_, &bgrad_}};
    }
    std::vector<StateVec<S>> state() override {
        return {{"bn.gamma", &gamma_},
                {"bn.beta", &beta_},
                {"bn.running_mean", &rmean_},
                {"bn.running_var", &rvar_}};
    }
    std::string kind() const override { return "batchnorm"; }

    static constexpr double kEps = 1e-5;
    static constexpr double kMomentum = 0.1;

  private:
    int c_;
    std::vector<S> gamma_, beta_, rmean_, rvar_, ggrad_, bgrad_;
    std::vector<S> xhat_, istd_;
    int n_ = 0, h_ = 0, w_ = 0;
};

template <typename S>
class ReLU : public Layer<S> {
  public:
    Tensor<S> forward(Tensor<S> x, bool training) override {
        if (training) {
            mask_.resize(x.size());
            for (size_t i = 0; i < x.size(); ++i) mask_[i] = x.data[i] > S(0);
        }
        for (S& v : x.data) v = std::max(v, S(0));
        return x;
    }
    Tensor<S> backward(Tensor<S> dy) override {
        for (size_t i = 0; i < dy.size(); ++i) {
            if (!mask_[i]) dy.data[i] = S(0);
        }
        return dy;
    }
    std::string kind() const override { return "relu"; }

  private:
    std::vector<uint8_t> mask_;
};

template <typename S>
class MaxPool2 : public Layer<S> {
  public:
    Tensor<S> forward(Tensor<S> x, bool training) override {
        if (x.h % 2 || x.w % 2) throw std::invalid_argument("MaxPool2: odd spatial size");
        Tensor<S> y(x.n, x.c, x.h / 2, x.w / 2);
        argmax_.resize(y.size());
        in_h_ = x.h;
        in_w_ = x.w;
        size_t oi = 0;
        for (int i = 0; i < x.n; ++i) {
            const S* src = x.img(i);
            for (int c = 0; c < x.c; ++c) {
                const S* plane = src + static_cast<size_t>(c) * x.h * x.w;
                for (int yy = 0; yy < y.h; ++yy) {
                    for (int xx = 0; xx < y.w; ++xx, ++oi) {
                        size_t best = static_cast<size_t>(c) * x.h * x.w +
                                      static_cast<size_t>(2 * yy) * x.w + 2 * xx;
                        S bv = plane[static_cast<size_t>(2 * yy) * x.w + 2 * xx];
                        for (int dy = 0; dy < 2; ++dy) {
                            for (int dx = 0; dx < 2; ++dx) {
                                const size_t k = static_cast<size_t>(2 * yy + dy) * x.w + 2 * xx + dx;
                                if (plane[k] > bv) {
                                    bv = plane[k];
                                    best = static_cast<size_t>(c) * x.h * x.w + k;
                                }
                            }
                        }
                        y.data[oi] = bv;
                        argmax_[oi] = best;
                    }
                }
            }
        }
        (void)training;
        return y;
    }

    Tensor<S> backward(Tensor<S> dy) override {
        Tensor<S> dx(dy.n, dy.c, in_h_, in_w_);
        size_t oi = 0;
        for (int i = 0; i < dy.n; ++i) {
            S* dst = dx.img(i);
            const size_t count = dy.per_image();
            for (size_t k = 0; k < count; ++k, ++oi) dst[argmax_[oi]] += dy.data[oi];
        }
        return dx;
    }
    std::string kind() const override { return "maxpool2"; }

  private:
    std::vector<size_t> argmax_;
    int in_h_ = 0, in_w_ = 0;
};

template <typename S>
class Flatten : public Layer<S> {
  public:
    Tensor<S> forward(Tensor<S> x, bool training) override {
        (void)training;
        c_ = x.c;
        h_ = x.h;
        w_ = x.w;
        x.c = x.c * x.h * x.w;
        x.h = x.w = 1;
        return x;
    }
    Tensor<S> backward(Tensor<S> dy) override {
        dy.c = c_;
        dy.h = h_;
        dy.w = w_;
        return dy;
    }
    std::string kind() const override { return "flatten"; }

  private:
    int c_ = 0, h_ = 0, w_ = 0;
};

template <typename S>
class Linear : public Layer<S> {
  public:
    Linear(int in, int out, Rng& rng) : in_(in), out_(out) {
        std::normal_distribution<double> gauss(0.0, std::sqrt(2.0 / in));
        weight_.resize(static_cast<size_t>(out) * in);
        for (S& v : weight_) v = static_cast<S>(gauss(rng));
        bias_.assign(out, S(0));
        wgrad_.assign(weight_.size(), S(0));
        bgrad_.assign(bias_.size(), S(0));
    }

    Tensor<S> forward(Tensor<S> x, bool training) override {
        if (x.c != in_ || x.h != 1 || x.w != 1) {
            throw std::invalid_argument("Linear: expected flattened input of width " +
                                        std::to_string(in_));
        }
        Tensor<S> y(x.n, out_, 1, 1);
        CMapM<S> xm(x.data.data(), x.n, in_);
        CMapM<S> wm(weight_.data(), out_, in_);
        MapM<S> ym(y.data.data(), x.n, out_);
        ym.noalias() = xm * wm.transpose();
        for (int i = 0; i < x.n; ++i) {
            for (int o = 0; o < out_; ++o) ym(i, o) += bias_[o];
        }
        if (training) input_ = std::move(x);
        return y;
    }

    Tensor<S> backward(Tensor<S> dy) override {
        CMapM<S> dym(dy.data.data(), dy.n, out_);
        CMapM<S> xm(input_.data.data(), input_.n, in_);
        MapM<S>(wgrad_.data(), out_, in_).noalias() += dym.transpose() * xm;
        for (int o = 0; o < out_; ++o) bgrad_[o] += dym.col(o).sum();
        Tensor<S> dx(dy.n, in_, 1, 1);
        MapM<S>(dx.data.data(), dy.n, in_).noalias() =
            dym * CMapM<S>(weight_.data(), out_, in_);
        return dx;
    }

    std::vector<Param<S>> params() override {
        return {{"fc.weight", &weight_, &wgrad_}, {"fc.bias", &bias_, &bgrad_}};
    }
    std::vector<StateVec<S>> state() override {
        return {{"fc.weight", &weight_}, {"fc.bias", &bias_}};
    }
    std::string kind() const override { return "linear"; }

  private:
    int in_, out_;
    std::vector<S> weight_, bias_, wgrad_, bgrad_;
    Tensor<S> input_;
};

template <typename S>
struct Net {
    std::vector<std::unique_ptr<Layer<S>>> layers;

    Tensor<S> forward(Tensor<S> x, bool training) {
        for (auto& l : layers) x = l->forward(std::move(x), training);
        return x;
    }

    // forward that also copies out the activations of the given layer indices
    Tensor<S> forward_collect(Tensor<S> x, const std::vector<int>& taps,
                              std::vector<Tensor<S>>* out) {
        for (const int t : taps) {
            if (t < 0 || t >= static_cast<int>(layers.size())) {
                throw std::invalid_argument("forward_collect: layer index " + std::to_string(t) +
                                            " out of range");
            }
        }
        for (size_t i = 0; i < layers.size(); ++i) {
            x = layers[i]->forward(std::move(x), false);
            for (const int t : taps) {
                if (t == static_cast<int>(i)) out->push_back(x);
            }
        }
        return x;
    }

    Tensor<S> backward(Tensor<S> dy) {
        for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
            dy = (*it)->backward(std::move(dy));
        }
        return dy;
    }

    std::vector<Param<S>> params() {
        std::vector<Param<S>> out;
        for (size_t i = 0; i < layers.size(); ++i) {
            for (Param<S> p : layers[i]->params()) {
                p.name = "layer" + std::to_string(i) + "." + p.name;
                out.push_back(p);
            }
        }
        return out;
    }

    std::vector<StateVec<S>> state() {
        std::vector<StateVec<S>> out;
        for (size_t i = 0; i < layers.size(); ++i) {
            for (StateVec<S> s : layers[i]->state()) {
                s.name = "layer" + std::to_string(i) + "." + s.name;
                out.push_back(s);
            }
        }
        return out;
    }

    void zero_grad() {
        for (const Param<S>& p : params()) std::fill(p.grad->begin(), p.grad->end(), S(0));
    }

    int64_t parameter_count() {
        int64_t n = 0;
        for (const Param<S>& p : params()) n += static_cast<int64_t>(p.value->size());
        return n;
    }
};

}  // namespace facerep::nn
