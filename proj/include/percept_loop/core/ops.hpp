#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "percept_loop/core/autodiff.hpp"

// Differentiable tensor operations. Every op computes its value eagerly and
// attaches a backward closure only when an input requires gradients.
namespace percept_loop::ad {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T, typename F>
Var<T> unary(const Var<T>& a, F&& fwd_and_deriv)
{
    const auto& x = a.value();
    Tensor<T> y(x.channels(), x.height(), x.width());
    for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = fwd_and_deriv(x[i]).first;
    return Var<T>::make(std::move(y), {a.node()}, [f = fwd_and_deriv](Node<T>& self) {
        auto& p = self.parents[0];
        if (Tensor<T>* g = grad_of(p))
            for (std::size_t i = 0; i < g->size(); ++i)
                (*g)[i] += self.grad[i] * f(p->value[i]).second;
    });
}

} // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b)
{
    require_same_shape(a.value(), b.value(), "add");
    Tensor<T> y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] += b.value()[i];
    return Var<T>::make(std::move(y), {a.node(), b.node()}, [](Node<T>& self) {
        for (auto& p : self.parents)
            if (Tensor<T>* g = grad_of(p))
                for (std::size_t i = 0; i < g->size(); ++i)
                    (*g)[i] += self.grad[i];
    });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b)
{
    require_same_shape(a.value(), b.value(), "sub");
    Tensor<T> y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] -= b.value()[i];
    return Var<T>::make(std::move(y), {a.node(), b.node()}, [](Node<T>& self) {
        if (Tensor<T>* g = grad_of(self.parents[0]))
            for (std::size_t i = 0; i < g->size(); ++i)
                (*g)[i] += self.grad[i];
        if (Tensor<T>* g = grad_of(self.parents[1]))
            for (std::size_t i = 0; i < g->size(); ++i)
                (*g)[i] -= self.grad[i];
    });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b)
{
    require_same_shape(a.value(), b.value(), "mul");
    Tensor<T> y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] *= b.value()[i];
    return Var<T>::make(std::move(y), {a.node(), b.node()}, [](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (Tensor<T>* g = grad_of(pa))
            for (std::size_t i = 0; i < g->size(); ++i)
                (*g)[i] += self.grad[i] * pb->value[i];
        if (Tensor<T>* g = grad_of(pb))
            for (std::size_t i = 0; i < g->size(); ++i)
                (*g)[i] += self.grad[i] * pa->value[i];
    });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b)
{
    require_same_shape(a.value(), b.value(), "div");
    Tensor<T> y = a.value();
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] /= b.value()[i];
    return Var<T>::make(std::move(y), {a.node(), b.node()}, [](Node<T>& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (Tensor<T>* g = grad_of(pa))
            for (std::size_t i = 0; i < g->size(); ++i)
                (*g)[i] += self.grad[i] / pb->value[i];
        if (Tensor<T>* g = grad_of(pb))
            for (std::size_t i = 0; i < g->size(); ++i) {
                const T d = pb->value[i];
                (*g)[i] -= self.grad[i] * pa->value[i] / (d * d);
            }
    });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor)
{
    return detail::unary(a, [factor](T x) { return std::pair<T, T>{x * factor, factor}; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T offset)
{
    return detail::unary(a, [offset](T x) { return std::pair<T, T>{x + offset, T(1)}; });
}

template <typename T>
Var<T> square(const Var<T>& a)
{
    return detail::unary(a, [](T x) { return std::pair<T, T>{x * x, T(2) * x}; });
}

template <typename T>
Var<T> relu(const Var<T>& a)
{
    return detail::unary(a, [](T x) { return x > T(0) ? std::pair<T, T>{x, T(1)} : std::pair<T, T>{T(0), T(0)}; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a)
{
    return detail::unary(a, [](T x) {
        const T s = T(1) / (T(1) + std::exp(-x));
        return std::pair<T, T>{s, s * (T(1) - s)};
    });
}

template <typename T>
Var<T> abs(const Var<T>& a)
{
    return detail::unary(a, [](T x) {
        const T sign = x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0));
        return std::pair<T, T>{std::abs(x), sign};
    });
}

template <typename T>
Var<T> sum_all(const Var<T>& a)
{
    T s = T(0);
    for (T v : a.value().data())
        s += v;
    return Var<T>::make(Tensor<T>::scalar(s), {a.node()}, [](Node<T>& self) {
        if (Tensor<T>* g = grad_of(self.parents[0]))
            for (std::size_t i = 0; i < g->size(); ++i)
                (*g)[i] += self.grad[0];
    });
}

template <typename T>
Var<T> mean_all(const Var<T>& a)
{
    const T n = static_cast<T>(a.value().size());
    return scale(sum_all(a), T(1) / n);
}

/// Stacks scalar vars into a (n, 1, 1) vector.
template <typename T>
Var<T> stack(const std::vector<Var<T>>& scalars)
{
    Tensor<T> y(static_cast<int>(scalars.size()), 1, 1);
    std::vector<std::shared_ptr<Node<T>>> parents;
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        y[i] = scalars[i].item();
        parents.push_back(scalars[i].node());
    }
    return Var<T>::make(std::move(y), std::move(parents), [](Node<T>& self) {
        for (std::size_t i = 0; i < self.parents.size(); ++i)
            if (Tensor<T>* g = grad_of(self.parents[i]))
                (*g)[0] += self.grad[i];
    });
}

/// Concatenates along the channel axis; spatial sizes must match.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b)
{
    const auto& x = a.value();
    const auto& z = b.value();
    if (x.height() != z.height() || x.width() != z.width())
        throw ShapeError("concat_channels: spatial mismatch " + x.shape_string() + " vs " + z.shape_string());
    Tensor<T> y(x.channels() + z.channels(), x.height(), x.width());
    std::copy(x.data().begin(), x.data().end(), y.data().begin());
    std::copy(z.data().begin(), z.data().end(), y.data().begin() + x.size());
    return Var<T>::make(std::move(y), {a.node(), b.node()}, [](Node<T>& self) {
        std::size_t offset = 0;
        for (auto& p : self.parents) {
            if (Tensor<T>* g = grad_of(p))
                for (std::size_t i = 0; i < g->size(); ++i)
                    (*g)[i] += self.grad[offset + i];
            offset += p->value.size();
        }
    });
}

/// y[c] = x[c] * gain[c] + offset[c] with constant per-channel coefficients.
template <typename T>
Var<T> channel_affine(const Var<T>& a, std::span<const T> gain, std::span<const T> offset)
{
    const auto& x = a.value();
    if (gain.size() != static_cast<std::size_t>(x.channels()) || offset.size() != gain.size())
        throw ShapeError("channel_affine: coefficient count does not match channels");
    Tensor<T> y(x.channels(), x.height(), x.width());
    for (int c = 0; c < x.channels(); ++c) {
        auto src = x.channel(c);
        auto dst = y.channel(c);
        for (std::size_t i = 0; i < src.size(); ++i)
            dst[i] = src[i] * gain[c] + offset[c];
    }
    std::vector<T> g_copy(gain.begin(), gain.end());
    return Var<T>::make(std::move(y), {a.node()}, [g_copy](Node<T>& self) {
        if (Tensor<T>* g = grad_of(self.parents[0]))
            for (int c = 0; c < g->channels(); ++c) {
                auto dst = g->channel(c);
                auto src = std::span<const T>(self.grad.channel(c));
                for (std::size_t i = 0; i < dst.size(); ++i)
                    dst[i] += src[i] * g_copy[c];
            }
    });
}

/// Per-pixel maximum over channels: (C, H, W) -> (1, H, W). The gradient is
/// routed to the first channel attaining the maximum.
template <typename T>
Var<T> max_over_channels(const Var<T>& a)
{
    const auto& x = a.value();
    if (x.channels() < 1)
        throw ShapeError("max_over_channels: no channels");
    Tensor<T> y(1, x.height(), x.width());
    std::vector<int> argmax(x.plane(), 0);
    for (std::size_t i = 0; i < x.plane(); ++i) {
        T best = x[i];
        for (int c = 1; c < x.channels(); ++c) {
            const T v = x[c * x.plane() + i];
            if (v > best) {
                best = v;
                argmax[i] = c;
            }
        }
        y[i] = best;
    }
    return Var<T>::make(std::move(y), {a.node()}, [argmax = std::move(argmax)](Node<T>& self) {
        if (Tensor<T>* g = grad_of(self.parents[0])) {
            const std::size_t plane = g->plane();
            for (std::size_t i = 0; i < plane; ++i)
                (*g)[argmax[i] * plane + i] += self.grad[i];
        }
    });
}

/// Window bounds for adaptive pooling of `in` cells into `out` cells; windows
/// cover [floor(i*in/out), ceil((i+1)*in/out)).
inline std::pair<int, int> adaptive_window(int i, int in, int out)
{
    const int start = static_cast<int>((static_cast<long long>(i) * in) / out);
    const int end = static_cast<int>((static_cast<long long>(i + 1) * in + out - 1) / out);
    return {start, end};
}

/// Adaptive max pooling to an exact target size. When the source is an exact
/// multiple of the target this is a plain kernel=stride pooling.
template <typename T>
Var<T> adaptive_max_pool(const Var<T>& a, int out_h, int out_w)
{
    const auto& x = a.value();
    if (out_h < 1 || out_w < 1 || out_h > x.height() || out_w > x.width())
        throw ShapeError("adaptive_max_pool: impossible target " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " from " + x.shape_string());
    Tensor<T> y(x.channels(), out_h, out_w);
    std::vector<std::size_t> argmax(y.size());
    for (int c = 0; c < x.channels(); ++c)
        for (int oy = 0; oy < out_h; ++oy) {
            const auto [y0, y1] = adaptive_window(oy, x.height(), out_h);
            for (int ox = 0; ox < out_w; ++ox) {
                const auto [x0, x1] = adaptive_window(ox, x.width(), out_w);
                std::size_t best_idx = (static_cast<std::size_t>(c) * x.height() + y0) * x.width() + x0;
                T best = x[best_idx];
                for (int yy = y0; yy < y1; ++yy)
                    for (int xx = x0; xx < x1; ++xx) {
                        const std::size_t idx = (static_cast<std::size_t>(c) * x.height() + yy) * x.width() + xx;
                        if (x[idx] > best) {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                const std::size_t o = (static_cast<std::size_t>(c) * out_h + oy) * out_w + ox;
                y[o] = best;
                argmax[o] = best_idx;
            }
        }
    return Var<T>::make(std::move(y), {a.node()}, [argmax = std::move(argmax)](Node<T>& self) {
        if (Tensor<T>* g = grad_of(self.parents[0]))
            for (std::size_t o = 0; o < argmax.size(); ++o)
                (*g)[argmax[o]] += self.grad[o];
    });
}

/// Per-channel spatial mean: (C, H, W) -> (C, 1, 1).
template <typename T>
Var<T> channel_mean(const Var<T>& a)
{
    const auto& x = a.value();
    Tensor<T> y(x.channels(), 1, 1);
    const T n = static_cast<T>(x.plane());
    for (int c = 0; c < x.channels(); ++c) {
        T s = T(0);
        for (T v : x.channel(c))
            s += v;
        y[c] = s / n;
    }
    return Var<T>::make(std::move(y), {a.node()}, [n](Node<T>& self) {
        if (Tensor<T>* g = grad_of(self.parents[0]))
            for (int c = 0; c < g->channels(); ++c)
                for (T& v : g->channel(c))
                    v += self.grad[c] / n;
    });
}

/// Per-channel population standard deviation sqrt(var + eps): (C, H, W) -> (C, 1, 1).
template <typename T>
Var<T> channel_std(const Var<T>& a, T eps = T(1e-8))
{
    const auto& x = a.value();
    Tensor<T> y(x.channels(), 1, 1);
    std::vector<T> means(x.channels());
    const T n = static_cast<T>(x.plane());
    for (int c = 0; c < x.channels(); ++c) {
        T s = T(0);
        for (T v : x.channel(c))
            s += v;
        const T m = s / n;
        T ss = T(0);
        for (T v : x.channel(c))
            ss += (v - m) * (v - m);
        means[c] = m;
        y[c] = std::sqrt(ss / n + eps);
    }
    return Var<T>::make(std::move(y), {a.node()}, [n, means = std::move(means)](Node<T>& self) {
        auto& p = self.parents[0];
        if (Tensor<T>* g = grad_of(p))
            for (int c = 0; c < g->channels(); ++c) {
                // d std / d x_i = (x_i - m) / (n * std)
                const T k = self.grad[c] / (n * self.value[c]);
                auto src = p->value.channel(c);
                auto dst = g->channel(c);
                for (std::size_t i = 0; i < dst.size(); ++i)
                    dst[i] += k * (src[i] - means[c]);
            }
    });
}

/// Fully connected layer on a (in, 1, 1) vector. Weight is (out, in, 1),
/// bias is (out, 1, 1).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias)
{
    const int in = x.value().channels();
    const int out = weight.value().channels();
    if (x.value().plane() != 1 || weight.value().height() != in || bias.value().channels() != out)
        throw ShapeError("linear: input " + x.value().shape_string() + " weight " +
                         weight.value().shape_string() + " bias " + bias.value().shape_string());
    Tensor<T> y = bias.value();
    {
        detail::ConstMatMap<T> w(weight.value().raw(), out, in);
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> v(x.value().raw(), in);
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> r(y.raw(), out);
        r.noalias() += w * v;
    }
    return Var<T>::make(std::move(y), {x.node(), weight.node(), bias.node()}, [in, out](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        auto& pb = self.parents[2];
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> dy(self.grad.raw(), out);
        if (Tensor<T>* g = grad_of(px)) {
            detail::ConstMatMap<T> w(pw->value.raw(), out, in);
            Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dx(g->raw(), in);
            dx.noalias() += w.transpose() * dy;
        }
        if (Tensor<T>* g = grad_of(pw)) {
            Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> v(px->value.raw(), in);
            detail::MatMap<T> dw(g->raw(), out, in);
            dw.noalias() += dy * v.transpose();
        }
        if (Tensor<T>* g = grad_of(pb))
            for (int i = 0; i < out; ++i)
                (*g)[i] += dy[i];
    });
}

struct ConvGeometry {
    int kernel = 3;
    int stride = 1;
    int pad = 1;
    int groups = 1;

    int out_size(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
};

namespace detail {

template <typename T>
void im2col(const Tensor<T>& x, int c0, int cin, const ConvGeometry& g, int oh, int ow, RowMat<T>& col)
{
    const int k = g.kernel;
    col.resize(static_cast<Eigen::Index>(cin) * k * k, static_cast<Eigen::Index>(oh) * ow);
    for (int ci = 0; ci < cin; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                T* row = col.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    T* dst = row + static_cast<std::size_t>(oy) * ow;
                    if (iy < 0 || iy >= x.height()) {
                        std::fill(dst, dst + ow, T(0));
                        continue;
                    }
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        dst[ox] = (ix < 0 || ix >= x.width()) ? T(0) : x(c0 + ci, iy, ix);
                    }
                }
            }
}

template <typename T>
void col2im(const RowMat<T>& col, int c0, int cin, const ConvGeometry& g, int oh, int ow, Tensor<T>& dx)
{
    const int k = g.kernel;
    for (int ci = 0; ci < cin; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const T* row = col.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * oh * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= dx.height())
                        continue;
                    const T* src = row + static_cast<std::size_t>(oy) * ow;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < dx.width())
                            dx(c0 + ci, iy, ix) += src[ox];
                    }
                }
            }
}

inline bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

} // namespace detail

/// 2-D convolution (cross-correlation) with square kernels, zero padding and
/// channel groups. Weight shape is (C_out, C_in/groups * k * k, 1); `bias` may
/// be an invalid Var for a bias-free convolution.
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, const ConvGeometry& geom)
{
    const auto& x = input.value();
    const auto& w = weight.value();
    const int cout = w.channels();
    const int groups = geom.groups;
    if (groups < 1 || x.channels() % groups != 0 || cout % groups != 0)
        throw ShapeError("conv2d: channels not divisible by groups");
    const int cin_g = x.channels() / groups;
    const int cout_g = cout / groups;
    const int kdim = cin_g * geom.kernel * geom.kernel;
    if (w.height() != kdim || w.width() != 1)
        throw ShapeError("conv2d: weight " + w.shape_string() + " incompatible with input " + x.shape_string());
    const int oh = geom.out_size(x.height());
    const int ow = geom.out_size(x.width());
    if (oh < 1 || ow < 1)
        throw ShapeError("conv2d: input " + x.shape_string() + " too small for kernel");
    const bool has_bias = bias.valid();
    if (has_bias && bias.value().channels() != cout)
        throw ShapeError("conv2d: bias length mismatch");

    Tensor<T> y(cout, oh, ow);
    const Eigen::Index npix = static_cast<Eigen::Index>(oh) * ow;
    detail::RowMat<T> col;
    for (int g = 0; g < groups; ++g) {
        detail::ConstMatMap<T> wg(w.raw() + static_cast<std::size_t>(g) * cout_g * kdim, cout_g, kdim);
        detail::MatMap<T> yg(y.raw() + static_cast<std::size_t>(g) * cout_g * npix, cout_g, npix);
        if (detail::is_pointwise(geom)) {
            detail::ConstMatMap<T> xg(x.raw() + static_cast<std::size_t>(g) * cin_g * npix, cin_g, npix);
            yg.noalias() = wg * xg;
        } else {
            detail::im2col(x, g * cin_g, cin_g, geom, oh, ow, col);
            yg.noalias() = wg * col;
        }
    }
    if (has_bias)
        for (int c = 0; c < cout; ++c)
            for (T& v : y.channel(c))
                v += bias.value()[c];

    std::vector<std::shared_ptr<Node<T>>> parents{input.node(), weight.node()};
    if (has_bias)
        parents.push_back(bias.node());
    return Var<T>::make(std::move(y), std::move(parents), [geom, groups, cin_g, cout_g, kdim, oh, ow](Node<T>& self) {
        auto& px = self.parents[0];
        auto& pw = self.parents[1];
        const Eigen::Index npix = static_cast<Eigen::Index>(oh) * ow;
        Tensor<T>* gx = grad_of(px);
        Tensor<T>* gw = grad_of(pw);
        detail::RowMat<T> col;
        detail::RowMat<T> dcol;
        for (int g = 0; g < groups; ++g) {
            detail::ConstMatMap<T> dy(self.grad.raw() + static_cast<std::size_t>(g) * cout_g * npix, cout_g, npix);
            if (gw) {
                detail::MatMap<T> dw(gw->raw() + static_cast<std::size_t>(g) * cout_g * kdim, cout_g, kdim);
                if (detail::is_pointwise(geom)) {
                    detail::ConstMatMap<T> xg(px->value.raw() + static_cast<std::size_t>(g) * cin_g * npix, cin_g,
                                              npix);
                    dw.noalias() += dy * xg.transpose();
                } else {
                    detail::im2col(px->value, g * cin_g, cin_g, geom, oh, ow, col);
                    dw.noalias() += dy * col.transpose();
                }
            }
            if (gx) {
                detail::ConstMatMap<T> wg(pw->value.raw() + static_cast<std::size_t>(g) * cout_g * kdim, cout_g, kdim);
                if (detail::is_pointwise(geom)) {
                    detail::MatMap<T> dx(gx->raw() + static_cast<std::size_t>(g) * cin_g * npix, cin_g, npix);
                    dx.noalias() += wg.transpose() * dy;
                } else {
                    dcol.noalias() = wg.transpose() * dy;
                    detail::col2im(dcol, g * cin_g, cin_g, geom, oh, ow, *gx);
                }
            }
        }
        if (self.parents.size() > 2)
            if (Tensor<T>* gb = grad_of(self.parents[2]))
                for (int c = 0; c < gb->channels(); ++c) {
                    T s = T(0);
                    for (T v : std::span<const T>(self.grad.channel(c)))
                        s += v;
                    (*gb)[c] += s;
                }
    });
}

/// Sub-window [y0, y0+h) x [x0, x0+w) of every channel.
template <typename T>
Var<T> crop(const Var<T>& a, int y0, int x0, int h, int w)
{
    const auto& x = a.value();
    if (y0 < 0 || x0 < 0 || y0 + h > x.height() || x0 + w > x.width())
        throw ShapeError("crop: window outside " + x.shape_string());
    Tensor<T> y(x.channels(), h, w);
    for (int c = 0; c < x.channels(); ++c)
        for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx)
                y(c, yy, xx) = x(c, y0 + yy, x0 + xx);
    return Var<T>::make(std::move(y), {a.node()}, [y0, x0](Node<T>& self) {
        if (Tensor<T>* g = grad_of(self.parents[0]))
            for (int c = 0; c < self.grad.channels(); ++c)
                for (int yy = 0; yy < self.grad.height(); ++yy)
                    for (int xx = 0; xx < self.grad.width(); ++xx)
                        (*g)(c, y0 + yy, x0 + xx) += self.grad(c, yy, xx);
    });
}

} // namespace percept_loop::ad
