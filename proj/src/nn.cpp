#include "udgan/nn.hpp"

#include <cmath>
#include <cstring>

namespace udgan::nn {

namespace {

// PyTorch-style default init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor init_uniform(Shape shape, std::int64_t fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::uniform(std::move(shape), rng, -bound, bound, true);
}

}  // namespace

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride_, int pad_,
               bool with_bias, Rng& rng)
    : stride(stride_), pad(pad_) {
    const std::int64_t fan_in =
        static_cast<std::int64_t>(in_ch) * kernel * kernel;
    weight = init_uniform({out_ch, in_ch, kernel, kernel}, fan_in, rng);
    if (with_bias) bias = init_uniform({out_ch}, fan_in, rng);
}

Tensor Conv2d::forward(const Tensor& x) const {
    return conv2d(x, weight, bias, stride, pad);
}

void Conv2d::collect(const std::string& prefix,
                     std::vector<NamedTensor>& params) {
    params.push_back({prefix + ".weight", weight});
    if (bias.defined()) params.push_back({prefix + ".bias", bias});
}

ConvTranspose2d::ConvTranspose2d(int in_ch, int out_ch, int kernel,
                                 int stride_, int pad_, bool with_bias,
                                 Rng& rng)
    : stride(stride_), pad(pad_) {
    const std::int64_t fan_in =
        static_cast<std::int64_t>(in_ch) * kernel * kernel;
    weight = init_uniform({in_ch, out_ch, kernel, kernel}, fan_in, rng);
    if (with_bias) bias = init_uniform({out_ch}, fan_in, rng);
}

Tensor ConvTranspose2d::forward(const Tensor& x) const {
    return conv_transpose2d(x, weight, bias, stride, pad);
}

void ConvTranspose2d::collect(const std::string& prefix,
                              std::vector<NamedTensor>& params) {
    params.push_back({prefix + ".weight", weight});
    if (bias.defined()) params.push_back({prefix + ".bias", bias});
}

Linear::Linear(int in_dim, int out_dim, Rng& rng) {
    weight = init_uniform({out_dim, in_dim}, in_dim, rng);
    bias = init_uniform({out_dim}, in_dim, rng);
}

Tensor Linear::forward(const Tensor& x) const {
    return linear(x, weight, bias);
}

void Linear::collect(const std::string& prefix,
                     std::vector<NamedTensor>& params) {
    params.push_back({prefix + ".weight", weight});
    params.push_back({prefix + ".bias", bias});
}

BatchNorm2d::BatchNorm2d(int channels) {
    gamma = Tensor::full({channels}, 1.0, true);
    beta = Tensor::zeros({channels}, true);
    running_mean = Tensor::zeros({channels});
    running_var = Tensor::full({channels}, 1.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) {
    return batch_norm2d(x, gamma, beta, running_mean, running_var, momentum,
                        eps, training);
}

void BatchNorm2d::collect(const std::string& prefix,
                          std::vector<NamedTensor>& params) {
    params.push_back({prefix + ".gamma", gamma});
    params.push_back({prefix + ".beta", beta});
}

void BatchNorm2d::collect_buffers(const std::string& prefix,
                                  std::vector<NamedTensor>& buffers) {
    buffers.push_back({prefix + ".running_mean", running_mean});
    buffers.push_back({prefix + ".running_var", running_var});
}

Sgd::Sgd(std::vector<Tensor> params, double lr, double momentum)
    : Optimizer(std::move(params), lr), momentum_(momentum) {
    velocity_.resize(params_.size());
}

void Sgd::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!eligible(p)) continue;
        auto& v = velocity_[i];
        if (v.size() != p.values().size()) v.assign(p.values().size(), 0.0);
        const auto& g = p.grad();
        for (std::size_t j = 0; j < v.size(); ++j) {
            v[j] = momentum_ * v[j] + g[j];
            p.values()[j] -= lr_ * v[j];
        }
    }
}

Adam::Adam(std::vector<Tensor> params, double lr, double beta1, double beta2,
           double eps, bool amsgrad)
    : Optimizer(std::move(params), lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      amsgrad_(amsgrad) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    vmax_.resize(params_.size());
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!eligible(p)) continue;
        auto& m = m_[i];
        auto& v = v_[i];
        if (m.size() != p.values().size()) {
            m.assign(p.values().size(), 0.0);
            v.assign(p.values().size(), 0.0);
            if (amsgrad_) vmax_[i].assign(p.values().size(), 0.0);
        }
        const auto& g = p.grad();
        for (std::size_t j = 0; j < m.size(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            double denom;
            if (amsgrad_) {
                auto& vm = vmax_[i];
                vm[j] = std::max(vm[j], v[j]);
                denom = std::sqrt(vm[j] / bc2) + eps_;
            } else {
                denom = std::sqrt(v[j] / bc2) + eps_;
            }
            p.values()[j] -= lr_ * (m[j] / bc1) / denom;
        }
    }
}

std::uint64_t checksum(const std::vector<Tensor>& tensors) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& t : tensors) {
        for (double d : t.values()) {
            std::uint64_t bits;
            std::memcpy(&bits, &d, sizeof(bits));
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xff;
                h *= 0x100000001b3ull;
            }
        }
    }
    return h;
}

}  // namespace udgan::nn
