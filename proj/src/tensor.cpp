#include "udgan/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace udgan {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

NodePtr new_node(Shape shape) {
    auto n = std::make_shared<Node>();
    n->value.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
    n->shape = std::move(shape);
    return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch");
    }
}

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

double stable_softplus(double z) {
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double stable_sigmoid(double z) {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

// --- Tensor basics -----------------------------------------------------------

Tensor Tensor::wrap(NodePtr n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = new_node(std::move(shape));
    n->requires_grad = requires_grad;
    return wrap(n);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    auto t = zeros(std::move(shape), requires_grad);
    std::fill(t.values().begin(), t.values().end(), v);
    return t;
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> v,
                           bool requires_grad) {
    if (shape_numel(shape) != static_cast<std::int64_t>(v.size())) {
        throw ShapeError("from_vector: element count does not match shape");
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return wrap(n);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
    auto t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.values()) v = rng.normal() * stddev;
    return t;
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi,
                       bool requires_grad) {
    auto t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

Tensor Tensor::scalar(double v) { return from_vector({1}, {v}); }

const Shape& Tensor::shape() const { return node_->shape; }
std::int64_t Tensor::numel() const {
    return static_cast<std::int64_t>(node_->value.size());
}
std::int64_t Tensor::dim(int i) const { return node_->shape.at(i); }

double* Tensor::data() { return node_->value.data(); }
const double* Tensor::data() const { return node_->value.data(); }
std::vector<double>& Tensor::values() { return node_->value; }
const std::vector<double>& Tensor::values() const { return node_->value; }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item(): tensor is not scalar");
    return node_->value[0];
}

double Tensor::at(std::initializer_list<std::int64_t> idx) const {
    const Shape& s = shape();
    if (idx.size() != s.size()) throw ShapeError("at(): rank mismatch");
    std::int64_t flat = 0;
    std::size_t i = 0;
    for (auto v : idx) {
        if (v < 0 || v >= s[i]) throw ShapeError("at(): index out of range");
        flat = flat * s[i] + v;
        ++i;
    }
    return node_->value[static_cast<std::size_t>(flat)];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool v) { node_->requires_grad = v; }

bool Tensor::has_grad() const {
    return node_ && node_->grad.size() == node_->value.size();
}
const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw NumericError("grad(): no gradient accumulated");
    return node_->grad;
}
std::vector<double>& Tensor::grad_ref() {
    node_->ensure_grad();
    return node_->grad;
}
void Tensor::zero_grad() {
    if (node_) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::detach() const {
    auto n = std::make_shared<Node>();
    n->shape = node_->shape;
    n->value = node_->value;
    return wrap(n);
}

Tensor Tensor::clone() const {
    auto t = detach();
    t.set_requires_grad(requires_grad());
    return t;
}

bool Tensor::all_finite() const {
    for (double v : node_->value) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::backward() {
    if (numel() != 1) throw ShapeError("backward(): root must be scalar");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // iterative DFS; graphs can be a few thousand nodes deep in long loops
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop) {
            n->ensure_grad();
            n->backprop(*n);
        }
    }
}

// --- graph plumbing ----------------------------------------------------------

namespace {

// Builds the output node; parents/backprop are recorded only when some input
// participates in the graph, so pure-inference forwards stay graph-free.
Tensor make_op(Shape out_shape, std::vector<double> out_value,
               std::vector<Tensor> inputs,
               std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(out_shape);
    n->value = std::move(out_value);
    bool rg = false;
    for (const auto& t : inputs) rg = rg || t.requires_grad();
    n->requires_grad = rg;
    if (rg) {
        for (const auto& t : inputs) n->parents.push_back(t.node_ptr());
        n->backprop = std::move(backprop);
    }
    return Tensor::wrap(n);
}

void accumulate(const NodePtr& p, const std::vector<double>& contribution) {
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t i = 0; i < contribution.size(); ++i) {
        p->grad[i] += contribution[i];
    }
}

}  // namespace

// --- elementwise -------------------------------------------------------------

Tensor operator+(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.values());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
    auto pa = a.node_ptr(), pb = b.node_ptr();
    return make_op(a.shape(), std::move(out), {a, b}, [pa, pb](Node& n) {
        accumulate(pa, n.grad);
        accumulate(pb, n.grad);
    });
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.values());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
    auto pa = a.node_ptr(), pb = b.node_ptr();
    return make_op(a.shape(), std::move(out), {a, b}, [pa, pb](Node& n) {
        accumulate(pa, n.grad);
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                pb->grad[i] -= n.grad[i];
            }
        }
    });
}

Tensor operator*(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.values());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
    auto pa = a.node_ptr(), pb = b.node_ptr();
    return make_op(a.shape(), std::move(out), {a, b}, [pa, pb](Node& n) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                pa->grad[i] += n.grad[i] * pb->value[i];
            }
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) {
                pb->grad[i] += n.grad[i] * pa->value[i];
            }
        }
    });
}

Tensor operator*(double s, const Tensor& a) {
    std::vector<double> out(a.values());
    for (auto& v : out) v *= s;
    auto pa = a.node_ptr();
    return make_op(a.shape(), std::move(out), {a}, [pa, s](Node& n) {
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            pa->grad[i] += s * n.grad[i];
        }
    });
}

Tensor operator+(const Tensor& a, double s) {
    std::vector<double> out(a.values());
    for (auto& v : out) v += s;
    auto pa = a.node_ptr();
    return make_op(a.shape(), std::move(out), {a},
                   [pa](Node& n) { accumulate(pa, n.grad); });
}

Tensor exp(const Tensor& x) {
    std::vector<double> out(x.values());
    for (auto& v : out) v = std::exp(v);
    auto px = x.node_ptr();
    return make_op(x.shape(), std::move(out), {x}, [px](Node& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            px->grad[i] += n.grad[i] * n.value[i];
        }
    });
}

Tensor log(const Tensor& x) {
    std::vector<double> out(x.values());
    for (auto& v : out) v = std::log(v);
    auto px = x.node_ptr();
    return make_op(x.shape(), std::move(out), {x}, [px](Node& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            px->grad[i] += n.grad[i] / px->value[i];
        }
    });
}

Tensor tanh(const Tensor& x) {
    std::vector<double> out(x.values());
    for (auto& v : out) v = std::tanh(v);
    auto px = x.node_ptr();
    return make_op(x.shape(), std::move(out), {x}, [px](Node& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            px->grad[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
        }
    });
}

Tensor leaky_relu(const Tensor& x, double negative_slope) {
    std::vector<double> out(x.values());
    for (auto& v : out) v = v > 0.0 ? v : negative_slope * v;
    auto px = x.node_ptr();
    return make_op(x.shape(), std::move(out), {x},
                   [px, negative_slope](Node& n) {
                       if (!px->requires_grad) return;
                       px->ensure_grad();
                       for (std::size_t i = 0; i < n.grad.size(); ++i) {
                           const double f =
                               px->value[i] > 0.0 ? 1.0 : negative_slope;
                           px->grad[i] += n.grad[i] * f;
                       }
                   });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw NumericError("dropout: p must be in [0,1)");
    if (!training || p == 0.0) return x;
    const double keep = 1.0 - p;
    auto mask = std::make_shared<std::vector<double>>(x.values().size());
    std::vector<double> out(x.values());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double m = rng.bernoulli(p) ? 0.0 : 1.0 / keep;
        (*mask)[i] = m;
        out[i] *= m;
    }
    auto px = x.node_ptr();
    return make_op(x.shape(), std::move(out), {x}, [px, mask](Node& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            px->grad[i] += n.grad[i] * (*mask)[i];
        }
    });
}

// --- shape ops -----------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: element count mismatch");
    }
    auto px = x.node_ptr();
    return make_op(std::move(shape), x.values(), {x},
                   [px](Node& n) { accumulate(px, n.grad); });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(0) != b.dim(0)) {
        throw ShapeError("concat_cols: expects [N,a] and [N,b]");
    }
    const std::int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    std::vector<double> out(static_cast<std::size_t>(n * (ca + cb)));
    for (std::int64_t i = 0; i < n; ++i) {
        std::copy_n(a.data() + i * ca, ca, out.data() + i * (ca + cb));
        std::copy_n(b.data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
    }
    auto pa = a.node_ptr(), pb = b.node_ptr();
    return make_op({n, ca + cb}, std::move(out), {a, b},
                   [pa, pb, n, ca, cb](Node& nd) {
                       if (pa->requires_grad) {
                           pa->ensure_grad();
                           for (std::int64_t i = 0; i < n; ++i)
                               for (std::int64_t j = 0; j < ca; ++j)
                                   pa->grad[i * ca + j] +=
                                       nd.grad[i * (ca + cb) + j];
                       }
                       if (pb->requires_grad) {
                           pb->ensure_grad();
                           for (std::int64_t i = 0; i < n; ++i)
                               for (std::int64_t j = 0; j < cb; ++j)
                                   pb->grad[i * cb + j] +=
                                       nd.grad[i * (ca + cb) + ca + j];
                       }
                   });
}

Tensor slice_rows(const Tensor& x, std::int64_t start, std::int64_t count) {
    if (x.ndim() < 1 || start < 0 || count < 1 || start + count > x.dim(0)) {
        throw ShapeError("slice_rows: bad range");
    }
    const std::int64_t row = x.numel() / x.dim(0);
    Shape out_shape = x.shape();
    out_shape[0] = count;
    std::vector<double> out(static_cast<std::size_t>(count * row));
    std::copy_n(x.data() + start * row, count * row, out.data());
    auto px = x.node_ptr();
    return make_op(std::move(out_shape), std::move(out), {x},
                   [px, start, row](Node& n) {
                       if (!px->requires_grad) return;
                       px->ensure_grad();
                       for (std::size_t i = 0; i < n.grad.size(); ++i) {
                           px->grad[static_cast<std::size_t>(start * row) + i] +=
                               n.grad[i];
                       }
                   });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: empty input");
    Shape tail = parts[0].shape();
    std::int64_t rows = 0;
    const std::int64_t row = parts[0].numel() / parts[0].dim(0);
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (std::vector<std::int64_t>(s.begin() + 1, s.end()) !=
            std::vector<std::int64_t>(tail.begin() + 1, tail.end())) {
            throw ShapeError("concat_rows: trailing dims differ");
        }
        rows += p.dim(0);
    }
    Shape out_shape = tail;
    out_shape[0] = rows;
    std::vector<double> out(static_cast<std::size_t>(rows * row));
    std::int64_t off = 0;
    for (const auto& p : parts) {
        std::copy_n(p.data(), p.numel(), out.data() + off);
        off += p.numel();
    }
    std::vector<NodePtr> pnodes;
    for (const auto& p : parts) pnodes.push_back(p.node_ptr());
    return make_op(std::move(out_shape), std::move(out), parts,
                   [pnodes](Node& n) {
                       std::size_t off = 0;
                       for (const auto& p : pnodes) {
                           const std::size_t sz = p->value.size();
                           if (p->requires_grad) {
                               p->ensure_grad();
                               for (std::size_t i = 0; i < sz; ++i)
                                   p->grad[i] += n.grad[off + i];
                           }
                           off += sz;
                       }
                   });
}

// --- linear algebra ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes");
    }
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(static_cast<std::size_t>(m * n));
    {
        ConstMatMap am(a.data(), m, k), bm(b.data(), k, n);
        MatMap om(out.data(), m, n);
        om.noalias() = am * bm;
    }
    auto pa = a.node_ptr(), pb = b.node_ptr();
    return make_op({m, n}, std::move(out), {a, b}, [pa, pb, m, k, n](Node& nd) {
        ConstMatMap gm(nd.grad.data(), m, n);
        if (pa->requires_grad) {
            pa->ensure_grad();
            ConstMatMap bm(pb->value.data(), k, n);
            MatMap ga(pa->grad.data(), m, k);
            ga.noalias() += gm * bm.transpose();
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            ConstMatMap am(pa->value.data(), m, k);
            MatMap gb(pb->grad.data(), k, n);
            gb.noalias() += am.transpose() * gm;
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(1)) {
        throw ShapeError("linear: incompatible shapes");
    }
    const std::int64_t n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
    const bool has_bias = b.defined();
    if (has_bias && (b.ndim() != 1 || b.dim(0) != out_dim)) {
        throw ShapeError("linear: bad bias shape");
    }
    std::vector<double> out(static_cast<std::size_t>(n * out_dim));
    {
        ConstMatMap xm(x.data(), n, in), wm(w.data(), out_dim, in);
        MatMap om(out.data(), n, out_dim);
        om.noalias() = xm * wm.transpose();
        if (has_bias) {
            Eigen::Map<const Eigen::RowVectorXd> bv(b.data(), out_dim);
            om.rowwise() += bv;
        }
    }
    std::vector<Tensor> inputs = {x, w};
    if (has_bias) inputs.push_back(b);
    auto px = x.node_ptr(), pw = w.node_ptr();
    NodePtr pb = has_bias ? b.node_ptr() : nullptr;
    return make_op({n, out_dim}, std::move(out), std::move(inputs),
                   [px, pw, pb, n, in, out_dim](Node& nd) {
                       ConstMatMap gm(nd.grad.data(), n, out_dim);
                       if (px->requires_grad) {
                           px->ensure_grad();
                           ConstMatMap wm(pw->value.data(), out_dim, in);
                           MatMap gx(px->grad.data(), n, in);
                           gx.noalias() += gm * wm;
                       }
                       if (pw->requires_grad) {
                           pw->ensure_grad();
                           ConstMatMap xm(px->value.data(), n, in);
                           MatMap gw(pw->grad.data(), out_dim, in);
                           gw.noalias() += gm.transpose() * xm;
                       }
                       if (pb && pb->requires_grad) {
                           pb->ensure_grad();
                           Eigen::Map<Eigen::RowVectorXd> gb(pb->grad.data(),
                                                             out_dim);
                           gb += gm.colwise().sum();
                       }
                   });
}

// --- reductions / objectives ---------------------------------------------

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    auto px = x.node_ptr();
    return make_op({1}, {s}, {x}, [px](Node& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (auto& g : px->grad) g += n.grad[0];
    });
}

Tensor mean_all(const Tensor& x) {
    const double inv = 1.0 / static_cast<double>(x.numel());
    double s = 0.0;
    for (double v : x.values()) s += v;
    auto px = x.node_ptr();
    return make_op({1}, {s * inv}, {x}, [px, inv](Node& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (auto& g : px->grad) g += n.grad[0] * inv;
    });
}

Tensor softplus_mean(const Tensor& x, bool negate) {
    const double sgn = negate ? -1.0 : 1.0;
    const double inv = 1.0 / static_cast<double>(x.numel());
    double s = 0.0;
    for (double v : x.values()) s += stable_softplus(sgn * v);
    auto px = x.node_ptr();
    return make_op({1}, {s * inv}, {x}, [px, sgn, inv](Node& n) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < px->grad.size(); ++i) {
            px->grad[i] +=
                n.grad[0] * sgn * stable_sigmoid(sgn * px->value[i]) * inv;
        }
    });
}

Tensor l1_mean(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "l1_mean");
    const double inv = 1.0 / static_cast<double>(a.numel());
    double s = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        s += std::abs(a.data()[i] - b.data()[i]);
    }
    auto pa = a.node_ptr(), pb = b.node_ptr();
    return make_op({1}, {s * inv}, {a, b}, [pa, pb, inv](Node& n) {
        for (std::size_t i = 0; i < pa->value.size(); ++i) {
            const double d = pa->value[i] - pb->value[i];
            const double sg = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            if (pa->requires_grad) {
                pa->ensure_grad();
                pa->grad[i] += n.grad[0] * sg * inv;
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                pb->grad[i] -= n.grad[0] * sg * inv;
            }
        }
    });
}

Tensor cross_entropy_smoothed(const Tensor& logits,
                              const std::vector<int>& labels, double epsilon) {
    if (logits.ndim() != 2) throw ShapeError("cross_entropy: logits must be [N,K]");
    const std::int64_t n = logits.dim(0), k = logits.dim(1);
    if (k < 2) throw ShapeError("cross_entropy: need K >= 2 classes");
    if (static_cast<std::int64_t>(labels.size()) != n) {
        throw ShapeError("cross_entropy: labels/batch mismatch");
    }
    if (epsilon < 0.0 || epsilon >= 1.0) {
        throw NumericError("cross_entropy: smoothing must be in [0,1)");
    }
    for (int lab : labels) {
        if (lab < 0 || lab >= k) {
            throw std::out_of_range("cross_entropy: label out of range");
        }
    }
    auto probs = std::make_shared<std::vector<double>>(
        static_cast<std::size_t>(n * k));
    const double off = epsilon / static_cast<double>(k);
    const double on = 1.0 - epsilon + off;
    double total = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double* row = logits.data() + i * k;
        const double m = *std::max_element(row, row + k);
        double z = 0.0;
        for (std::int64_t j = 0; j < k; ++j) z += std::exp(row[j] - m);
        const double log_z = m + std::log(z);
        double dot = 0.0;
        for (std::int64_t j = 0; j < k; ++j) {
            (*probs)[i * k + j] = std::exp(row[j] - log_z);
            dot += (j == labels[i] ? on : off) * row[j];
        }
        total += log_z - dot;
    }
    auto pl = logits.node_ptr();
    auto labs = std::make_shared<std::vector<int>>(labels);
    const double inv = 1.0 / static_cast<double>(n);
    return make_op({1}, {total * inv}, {logits},
                   [pl, probs, labs, on, off, n, k, inv](Node& nd) {
                       if (!pl->requires_grad) return;
                       pl->ensure_grad();
                       for (std::int64_t i = 0; i < n; ++i) {
                           for (std::int64_t j = 0; j < k; ++j) {
                               const double t =
                                   (j == (*labs)[i]) ? on : off;
                               pl->grad[i * k + j] +=
                                   nd.grad[0] * ((*probs)[i * k + j] - t) * inv;
                           }
                       }
                   });
}

Tensor kl_gaussian(const Tensor& mu, const Tensor& logvar) {
    check_same_shape(mu, logvar, "kl_gaussian");
    if (mu.ndim() != 2) throw ShapeError("kl_gaussian: expects [N,d]");
    if (!mu.all_finite() || !logvar.all_finite()) {
        throw NumericError("kl_gaussian: non-finite input");
    }
    const std::int64_t n = mu.dim(0);
    const double inv = 1.0 / static_cast<double>(n);
    double s = 0.0;
    for (std::int64_t i = 0; i < mu.numel(); ++i) {
        const double m = mu.data()[i], lv = logvar.data()[i];
        s += 0.5 * (m * m + std::exp(lv) - 1.0 - lv);
    }
    auto pm = mu.node_ptr(), pv = logvar.node_ptr();
    return make_op({1}, {s * inv}, {mu, logvar}, [pm, pv, inv](Node& nd) {
        if (pm->requires_grad) {
            pm->ensure_grad();
            for (std::size_t i = 0; i < pm->value.size(); ++i) {
                pm->grad[i] += nd.grad[0] * pm->value[i] * inv;
            }
        }
        if (pv->requires_grad) {
            pv->ensure_grad();
            for (std::size_t i = 0; i < pv->value.size(); ++i) {
                pv->grad[i] +=
                    nd.grad[0] * 0.5 * (std::exp(pv->value[i]) - 1.0) * inv;
            }
        }
    });
}

std::int64_t conv_out_dim(std::int64_t in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

std::int64_t conv_transpose_out_dim(std::int64_t in, int kernel, int stride,
                                    int pad) {
    return (in - 1) * stride - 2 * pad + kernel;
}

}  // namespace udgan
