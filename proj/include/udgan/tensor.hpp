#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "udgan/rng.hpp"

namespace udgan {

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::int64_t>;

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated on first use during backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Pulls from this->grad and accumulates into parents' grads.
    std::function<void(Node&)> backprop;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

// Reverse-mode autodiff tensor, double precision, CPU. A Tensor is a cheap
// handle onto a graph node; ops build the graph and backward() on a scalar
// root accumulates gradients into every reachable node that requires them.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from_vector(Shape shape, std::vector<double> v,
                              bool requires_grad = false);
    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0,
                        bool requires_grad = false);
    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi,
                          bool requires_grad = false);
    static Tensor scalar(double v);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::int64_t numel() const;
    std::int64_t dim(int i) const;
    int ndim() const { return static_cast<int>(shape().size()); }

    double* data();
    const double* data() const;
    std::vector<double>& values();
    const std::vector<double>& values() const;

    double item() const;  // scalar tensors only
    double at(std::initializer_list<std::int64_t> idx) const;

    bool requires_grad() const;
    void set_requires_grad(bool v);

    bool has_grad() const;
    const std::vector<double>& grad() const;
    std::vector<double>& grad_ref();
    void zero_grad();

    // Runs reverse-mode accumulation from this scalar.
    void backward();

    // Constant copy, cut off from the graph.
    Tensor detach() const;
    // Deep copy (leaf; keeps requires_grad flag).
    Tensor clone() const;

    bool all_finite() const;

    detail::Node* node() const { return node_.get(); }
    std::shared_ptr<detail::Node> node_ptr() const { return node_; }
    static Tensor wrap(std::shared_ptr<detail::Node> n);

private:
    std::shared_ptr<detail::Node> node_;
};

// --- elementwise / arithmetic --------------------------------------------

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);  // elementwise
Tensor operator*(double s, const Tensor& a);
Tensor operator+(const Tensor& a, double s);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double negative_slope);
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

// --- shape ops -------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_cols(const Tensor& a, const Tensor& b);        // [N,a]⊕[N,b]
Tensor slice_rows(const Tensor& x, std::int64_t start, std::int64_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);

// --- linear algebra ----------------------------------------------------------

// y = x · wᵀ + b with x:[N,in], w:[out,in], b:[out] (b may be undefined).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);

// --- conv / norm / pool ------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad);
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b,
                        int stride, int pad);
// gamma/beta are affine parameters; running_mean/var are buffers mutated in
// training mode.
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    Tensor& running_mean, Tensor& running_var, double momentum,
                    double eps, bool training);
Tensor instance_norm2d(const Tensor& x, double eps);
Tensor global_avg_pool(const Tensor& x);  // [N,C,H,W] -> [N,C]

// --- reductions / objectives -------------------------------------------------

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
// Mean over all elements of softplus(x) or softplus(-x).
Tensor softplus_mean(const Tensor& x, bool negate);
// Mean over all elements of |a - b|; b is treated as constant.
Tensor l1_mean(const Tensor& a, const Tensor& b);
// Mean over batch of CE against label-smoothed targets; labels in [0,K).
Tensor cross_entropy_smoothed(const Tensor& logits,
                              const std::vector<int>& labels, double epsilon);
// Batch mean of ½ Σ_j (μ² + e^logvar − 1 − logvar).
Tensor kl_gaussian(const Tensor& mu, const Tensor& logvar);

// Shape of a conv output dimension.
std::int64_t conv_out_dim(std::int64_t in, int kernel, int stride, int pad);
std::int64_t conv_transpose_out_dim(std::int64_t in, int kernel, int stride,
                                    int pad);

}  // namespace udgan
