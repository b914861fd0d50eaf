#include <Eigen/Core>

#include <cmath>
#include <memory>

#include "udgan/tensor.hpp"

// Convolution, transposed convolution, normalization and pooling kernels.
// Convolutions run as im2col + GEMM; transposed convolution is the adjoint
// (col2im of a GEMM), which keeps the two exactly consistent with each other.

namespace udgan {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// col has layout [C*kh*kw, Ho*Wo], row-major.
void im2col(const double* img, std::int64_t c, std::int64_t h, std::int64_t w,
            int kh, int kw, int stride, int pad, std::int64_t ho,
            std::int64_t wo, double* col) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                double* dst =
                    col + ((ch * kh + ki) * kw + kj) * (ho * wo);
                for (std::int64_t i = 0; i < ho; ++i) {
                    const std::int64_t y = i * stride + ki - pad;
                    for (std::int64_t j = 0; j < wo; ++j) {
                        const std::int64_t x = j * stride + kj - pad;
                        dst[i * wo + j] =
                            (y >= 0 && y < h && x >= 0 && x < w)
                                ? img[(ch * h + y) * w + x]
                                : 0.0;
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: accumulates col entries back into the image.
void col2im(const double* col, std::int64_t c, std::int64_t h, std::int64_t w,
            int kh, int kw, int stride, int pad, std::int64_t ho,
            std::int64_t wo, double* img) {
    for (std::int64_t ch = 0; ch < c; ++ch) {
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj) {
                const double* src =
                    col + ((ch * kh + ki) * kw + kj) * (ho * wo);
                for (std::int64_t i = 0; i < ho; ++i) {
                    const std::int64_t y = i * stride + ki - pad;
                    if (y < 0 || y >= h) continue;
                    for (std::int64_t j = 0; j < wo; ++j) {
                        const std::int64_t x = j * stride + kj - pad;
                        if (x < 0 || x >= w) continue;
                        img[(ch * h + y) * w + x] += src[i * wo + j];
                    }
                }
            }
        }
    }
}

Tensor make_conv_node(Shape out_shape, std::vector<double> out_value,
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

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
              int pad) {
    if (x.ndim() != 4 || w.ndim() != 4) {
        throw ShapeError("conv2d: expects x[N,C,H,W], w[Cout,Cin,kh,kw]");
    }
    const std::int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2),
                       wd = x.dim(3);
    const std::int64_t cout = w.dim(0);
    const int kh = static_cast<int>(w.dim(2)), kw = static_cast<int>(w.dim(3));
    if (w.dim(1) != cin) throw ShapeError("conv2d: channel mismatch");
    const std::int64_t ho = conv_out_dim(h, kh, stride, pad);
    const std::int64_t wo = conv_out_dim(wd, kw, stride, pad);
    if (ho < 1 || wo < 1) throw ShapeError("conv2d: output would be empty");
    const bool has_bias = b.defined();
    if (has_bias && (b.ndim() != 1 || b.dim(0) != cout)) {
        throw ShapeError("conv2d: bad bias shape");
    }

    const std::int64_t ck = cin * kh * kw;
    const std::int64_t spatial = ho * wo;
    auto cols =
        std::make_shared<std::vector<double>>(static_cast<std::size_t>(n * ck * spatial));
    std::vector<double> out(static_cast<std::size_t>(n * cout * spatial));
    ConstMatMap wm(w.data(), cout, ck);
    for (std::int64_t s = 0; s < n; ++s) {
        double* col = cols->data() + s * ck * spatial;
        im2col(x.data() + s * cin * h * wd, cin, h, wd, kh, kw, stride, pad,
               ho, wo, col);
        MatMap om(out.data() + s * cout * spatial, cout, spatial);
        ConstMatMap cm(col, ck, spatial);
        om.noalias() = wm * cm;
        if (has_bias) om.colwise() += Eigen::Map<const Eigen::VectorXd>(b.data(), cout);
    }

    std::vector<Tensor> inputs = {x, w};
    if (has_bias) inputs.push_back(b);
    auto px = x.node_ptr(), pw = w.node_ptr();
    NodePtr pb = has_bias ? b.node_ptr() : nullptr;
    return make_conv_node(
        {n, cout, ho, wo}, std::move(out), std::move(inputs),
        [px, pw, pb, cols, n, cin, h, wd, cout, kh, kw, stride, pad, ho, wo,
         ck, spatial](Node& nd) {
            ConstMatMap wm(pw->value.data(), cout, ck);
            if (pw->requires_grad) pw->ensure_grad();
            if (px->requires_grad) px->ensure_grad();
            if (pb && pb->requires_grad) pb->ensure_grad();
            std::vector<double> dcol(static_cast<std::size_t>(ck * spatial));
            for (std::int64_t s = 0; s < n; ++s) {
                ConstMatMap gm(nd.grad.data() + s * cout * spatial, cout,
                               spatial);
                const double* col = cols->data() + s * ck * spatial;
                if (pw->requires_grad) {
                    MatMap gw(pw->grad.data(), cout, ck);
                    gw.noalias() += gm * ConstMatMap(col, ck, spatial).transpose();
                }
                if (px->requires_grad) {
                    MatMap dc(dcol.data(), ck, spatial);
                    dc.noalias() = wm.transpose() * gm;
                    col2im(dcol.data(), cin, h, wd, kh, kw, stride, pad, ho,
                           wo, px->grad.data() + s * cin * h * wd);
                }
                if (pb && pb->requires_grad) {
                    Eigen::Map<Eigen::VectorXd> gb(pb->grad.data(), cout);
                    gb += gm.rowwise().sum();
                }
            }
        });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b,
                        int stride, int pad) {
    if (x.ndim() != 4 || w.ndim() != 4) {
        throw ShapeError(
            "conv_transpose2d: expects x[N,Cin,H,W], w[Cin,Cout,kh,kw]");
    }
    const std::int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2),
                       wd = x.dim(3);
    const std::int64_t cout = w.dim(1);
    const int kh = static_cast<int>(w.dim(2)), kw = static_cast<int>(w.dim(3));
    if (w.dim(0) != cin) throw ShapeError("conv_transpose2d: channel mismatch");
    const std::int64_t ho = conv_transpose_out_dim(h, kh, stride, pad);
    const std::int64_t wo = conv_transpose_out_dim(wd, kw, stride, pad);
    if (ho < 1 || wo < 1) {
        throw ShapeError("conv_transpose2d: output would be empty");
    }
    const bool has_bias = b.defined();
    if (has_bias && (b.ndim() != 1 || b.dim(0) != cout)) {
        throw ShapeError("conv_transpose2d: bad bias shape");
    }

    const std::int64_t ck = cout * kh * kw;
    const std::int64_t spatial = h * wd;  // col count matches the input grid
    std::vector<double> out(static_cast<std::size_t>(n * cout * ho * wo), 0.0);
    std::vector<double> cols(static_cast<std::size_t>(ck * spatial));
    ConstMatMap wm(w.data(), cin, ck);
    for (std::int64_t s = 0; s < n; ++s) {
        ConstMatMap xm(x.data() + s * cin * spatial, cin, spatial);
        MatMap cm(cols.data(), ck, spatial);
        cm.noalias() = wm.transpose() * xm;
        col2im(cols.data(), cout, ho, wo, kh, kw, stride, pad, h, wd,
               out.data() + s * cout * ho * wo);
        if (has_bias) {
            for (std::int64_t c = 0; c < cout; ++c) {
                double* ch = out.data() + (s * cout + c) * ho * wo;
                for (std::int64_t i = 0; i < ho * wo; ++i) ch[i] += b.data()[c];
            }
        }
    }

    std::vector<Tensor> inputs = {x, w};
    if (has_bias) inputs.push_back(b);
    auto px = x.node_ptr(), pw = w.node_ptr();
    NodePtr pb = has_bias ? b.node_ptr() : nullptr;
    return make_conv_node(
        {n, cout, ho, wo}, std::move(out), std::move(inputs),
        [px, pw, pb, n, cin, h, wd, cout, kh, kw, stride, pad, ho, wo, ck,
         spatial](Node& nd) {
            ConstMatMap wm(pw->value.data(), cin, ck);
            if (pw->requires_grad) pw->ensure_grad();
            if (px->requires_grad) px->ensure_grad();
            if (pb && pb->requires_grad) pb->ensure_grad();
            std::vector<double> dcol(static_cast<std::size_t>(ck * spatial));
            for (std::int64_t s = 0; s < n; ++s) {
                // adjoint of col2im is im2col over the output gradient
                im2col(nd.grad.data() + s * cout * ho * wo, cout, ho, wo, kh,
                       kw, stride, pad, h, wd, dcol.data());
                ConstMatMap dc(dcol.data(), ck, spatial);
                if (px->requires_grad) {
                    MatMap gx(px->grad.data() + s * cin * spatial, cin,
                              spatial);
                    gx.noalias() += wm * dc;
                }
                if (pw->requires_grad) {
                    ConstMatMap xm(px->value.data() + s * cin * spatial, cin,
                                   spatial);
                    MatMap gw(pw->grad.data(), cin, ck);
                    gw.noalias() += xm * dc.transpose();
                }
                if (pb && pb->requires_grad) {
                    for (std::int64_t c = 0; c < cout; ++c) {
                        const double* g =
                            nd.grad.data() + (s * cout + c) * ho * wo;
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < ho * wo; ++i) acc += g[i];
                        pb->grad[c] += acc;
                    }
                }
            }
        });
}

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    Tensor& running_mean, Tensor& running_var, double momentum,
                    double eps, bool training) {
    if (x.ndim() != 4) throw ShapeError("batch_norm2d: expects [N,C,H,W]");
    const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c ||
        running_var.numel() != c) {
        throw ShapeError("batch_norm2d: channel size mismatch");
    }
    const std::int64_t m = n * h * w;
    auto xhat = std::make_shared<std::vector<double>>(x.values().size());
    auto inv_std = std::make_shared<std::vector<double>>(c);
    std::vector<double> out(x.values().size());

    for (std::int64_t ch = 0; ch < c; ++ch) {
        double mean, var;
        if (training) {
            double s = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                const double* p = x.data() + (i * c + ch) * h * w;
                for (std::int64_t j = 0; j < h * w; ++j) s += p[j];
            }
            mean = s / static_cast<double>(m);
            double sq = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                const double* p = x.data() + (i * c + ch) * h * w;
                for (std::int64_t j = 0; j < h * w; ++j) {
                    const double d = p[j] - mean;
                    sq += d * d;
                }
            }
            var = sq / static_cast<double>(m);
            const double unbiased =
                m > 1 ? sq / static_cast<double>(m - 1) : var;
            running_mean.values()[ch] =
                (1.0 - momentum) * running_mean.values()[ch] + momentum * mean;
            running_var.values()[ch] =
                (1.0 - momentum) * running_var.values()[ch] +
                momentum * unbiased;
        } else {
            mean = running_mean.values()[ch];
            var = running_var.values()[ch];
        }
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[ch] = is;
        const double g = gamma.data()[ch], bt = beta.data()[ch];
        for (std::int64_t i = 0; i < n; ++i) {
            const double* p = x.data() + (i * c + ch) * h * w;
            double* xh = xhat->data() + (i * c + ch) * h * w;
            double* o = out.data() + (i * c + ch) * h * w;
            for (std::int64_t j = 0; j < h * w; ++j) {
                xh[j] = (p[j] - mean) * is;
                o[j] = g * xh[j] + bt;
            }
        }
    }

    auto px = x.node_ptr(), pg = gamma.node_ptr(), pbt = beta.node_ptr();
    return make_conv_node(
        x.shape(), std::move(out), {x, gamma, beta},
        [px, pg, pbt, xhat, inv_std, n, c, h, w, m, training](Node& nd) {
            if (px->requires_grad) px->ensure_grad();
            if (pg->requires_grad) pg->ensure_grad();
            if (pbt->requires_grad) pbt->ensure_grad();
            for (std::int64_t ch = 0; ch < c; ++ch) {
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::int64_t i = 0; i < n; ++i) {
                    const double* dy = nd.grad.data() + (i * c + ch) * h * w;
                    const double* xh = xhat->data() + (i * c + ch) * h * w;
                    for (std::int64_t j = 0; j < h * w; ++j) {
                        sum_dy += dy[j];
                        sum_dy_xhat += dy[j] * xh[j];
                    }
                }
                if (pg->requires_grad) pg->grad[ch] += sum_dy_xhat;
                if (pbt->requires_grad) pbt->grad[ch] += sum_dy;
                if (!px->requires_grad) continue;
                const double g = pg->value[ch];
                const double is = (*inv_std)[ch];
                const double inv_m = 1.0 / static_cast<double>(m);
                for (std::int64_t i = 0; i < n; ++i) {
                    const double* dy = nd.grad.data() + (i * c + ch) * h * w;
                    const double* xh = xhat->data() + (i * c + ch) * h * w;
                    double* gx = px->grad.data() + (i * c + ch) * h * w;
                    for (std::int64_t j = 0; j < h * w; ++j) {
                        if (training) {
                            gx[j] += g * is *
                                     (dy[j] - sum_dy * inv_m -
                                      xh[j] * sum_dy_xhat * inv_m);
                        } else {
                            gx[j] += g * is * dy[j];
                        }
                    }
                }
            }
        });
}

Tensor instance_norm2d(const Tensor& x, double eps) {
    if (x.ndim() != 4) throw ShapeError("instance_norm2d: expects [N,C,H,W]");
    const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t m = h * w;
    auto xhat = std::make_shared<std::vector<double>>(x.values().size());
    auto inv_std = std::make_shared<std::vector<double>>(n * c);
    std::vector<double> out(x.values().size());
    for (std::int64_t ic = 0; ic < n * c; ++ic) {
        const double* p = x.data() + ic * m;
        double s = 0.0;
        for (std::int64_t j = 0; j < m; ++j) s += p[j];
        const double mean = s / static_cast<double>(m);
        double sq = 0.0;
        for (std::int64_t j = 0; j < m; ++j) {
            const double d = p[j] - mean;
            sq += d * d;
        }
        const double is = 1.0 / std::sqrt(sq / static_cast<double>(m) + eps);
        (*inv_std)[ic] = is;
        for (std::int64_t j = 0; j < m; ++j) {
            (*xhat)[ic * m + j] = (p[j] - mean) * is;
            out[ic * m + j] = (*xhat)[ic * m + j];
        }
    }
    auto px = x.node_ptr();
    return make_conv_node(
        x.shape(), std::move(out), {x},
        [px, xhat, inv_std, n, c, m](Node& nd) {
            if (!px->requires_grad) return;
            px->ensure_grad();
            const double inv_m = 1.0 / static_cast<double>(m);
            for (std::int64_t ic = 0; ic < n * c; ++ic) {
                const double* dy = nd.grad.data() + ic * m;
                const double* xh = xhat->data() + ic * m;
                double* gx = px->grad.data() + ic * m;
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::int64_t j = 0; j < m; ++j) {
                    sum_dy += dy[j];
                    sum_dy_xhat += dy[j] * xh[j];
                }
                const double is = (*inv_std)[ic];
                for (std::int64_t j = 0; j < m; ++j) {
                    gx[j] += is * (dy[j] - sum_dy * inv_m -
                                   xh[j] * sum_dy_xhat * inv_m);
                }
            }
        });
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.ndim() != 4) throw ShapeError("global_avg_pool: expects [N,C,H,W]");
    const std::int64_t n = x.dim(0), c = x.dim(1), m = x.dim(2) * x.dim(3);
    std::vector<double> out(static_cast<std::size_t>(n * c));
    for (std::int64_t ic = 0; ic < n * c; ++ic) {
        const double* p = x.data() + ic * m;
        double s = 0.0;
        for (std::int64_t j = 0; j < m; ++j) s += p[j];
        out[ic] = s / static_cast<double>(m);
    }
    auto px = x.node_ptr();
    return make_conv_node({n, c}, std::move(out), {x}, [px, n, c, m](Node& nd) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        const double inv = 1.0 / static_cast<double>(m);
        for (std::int64_t ic = 0; ic < n * c; ++ic) {
            double* gx = px->grad.data() + ic * m;
            for (std::int64_t j = 0; j < m; ++j) gx[j] += nd.grad[ic] * inv;
        }
    });
}

}  // namespace udgan
