#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "udgan/rng.hpp"
#include "udgan/tensor.hpp"

namespace udgan::nn {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

// Layers are plain structs holding parameter tensors; forward passes build
// the autodiff graph. Mode-dependent layers take `training` explicitly.

struct Conv2d {
    Tensor weight;  // [Cout, Cin, kh, kw]
    Tensor bias;    // undefined when constructed without bias
    int stride = 1;
    int pad = 0;

    Conv2d() = default;
    Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad,
           bool with_bias, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, std::vector<NamedTensor>& params);
};

struct ConvTranspose2d {
    Tensor weight;  // [Cin, Cout, kh, kw]
    Tensor bias;
    int stride = 1;
    int pad = 0;

    ConvTranspose2d() = default;
    ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, int pad,
                    bool with_bias, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, std::vector<NamedTensor>& params);
};

struct Linear {
    Tensor weight;  // [out, in]
    Tensor bias;

    Linear() = default;
    Linear(int in_dim, int out_dim, Rng& rng);
    Tensor forward(const Tensor& x) const;
    void collect(const std::string& prefix, std::vector<NamedTensor>& params);
};

struct BatchNorm2d {
    Tensor gamma, beta;              // parameters
    Tensor running_mean, running_var;  // buffers
    double momentum = 0.1;
    double eps = 1e-5;

    BatchNorm2d() = default;
    explicit BatchNorm2d(int channels);
    Tensor forward(const Tensor& x, bool training);
    void collect(const std::string& prefix, std::vector<NamedTensor>& params);
    void collect_buffers(const std::string& prefix,
                         std::vector<NamedTensor>& buffers);
};

// --- optimizers ---------------------------------------------------------

class Optimizer {
public:
    explicit Optimizer(std::vector<Tensor> params, double lr)
        : params_(std::move(params)), lr_(lr) {}
    virtual ~Optimizer() = default;

    virtual void step() = 0;
    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    const std::vector<Tensor>& params() const { return params_; }

protected:
    // frozen or untouched parameters are skipped
    bool eligible(const Tensor& p) const {
        return p.requires_grad() && p.has_grad();
    }

    std::vector<Tensor> params_;
    double lr_;
};

class Sgd final : public Optimizer {
public:
    Sgd(std::vector<Tensor> params, double lr, double momentum);
    void step() override;

private:
    double momentum_;
    std::vector<std::vector<double>> velocity_;
};

// Adam; with `amsgrad` set it keeps the running maximum of the second
// moment as the denominator.
class Adam final : public Optimizer {
public:
    Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9,
         double beta2 = 0.999, double eps = 1e-8, bool amsgrad = false);
    void step() override;

private:
    double beta1_, beta2_, eps_;
    bool amsgrad_;
    std::int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_, vmax_;
};

// FNV-1a over the raw bytes of the parameter payload; used for the
// frozen-group invariants and checkpoint round-trip checks.
std::uint64_t checksum(const std::vector<Tensor>& tensors);

}  // namespace udgan::nn
