#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "percept_loop/core/autodiff.hpp"
#include "percept_loop/core/util.hpp"

namespace percept_loop::iqa {

inline constexpr double kNormInNormEps = 1e-8;

namespace detail {

/// (v - mean(v)) / (||v - mean(v)||_2 + eps), with the centred vector and its norm.
template <typename T>
void center_normalize(std::span<const T> v, T eps, std::vector<T>& centered, T& norm, std::vector<T>& normalized)
{
    const std::size_t n = v.size();
    T mean = T(0);
    for (T x : v)
        mean += x;
    mean /= static_cast<T>(n);
    centered.resize(n);
    T ss = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        centered[i] = v[i] - mean;
        ss += centered[i] * centered[i];
    }
    norm = std::sqrt(ss);
    normalized.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        normalized[i] = centered[i] / (norm + eps);
}

} // namespace detail

/// L2 distance between the batch-centred, norm-scaled predictions and
/// targets. Invariant to positive affine maps of either argument (up to eps).
/// `preds` is a (B, 1, 1) vector; gradients flow to it only.
template <typename T>
ad::Var<T> norm_in_norm_loss(const ad::Var<T>& preds, std::span<const double> targets, T eps = T(kNormInNormEps))
{
    const auto& p = preds.value();
    const std::size_t n = p.size();
    if (n < 2)
        throw ValidationError("norm_in_norm_loss: batch size must be at least 2");
    if (targets.size() != n)
        throw ValidationError("norm_in_norm_loss: prediction/target length mismatch");

    std::vector<T> t(targets.begin(), targets.end());
    std::vector<T> pc, pn, tc, tn;
    T pnorm, tnorm;
    detail::center_normalize<T>(p.data(), eps, pc, pnorm, pn);
    detail::center_normalize<T>(std::span<const T>(t), eps, tc, tnorm, tn);
    std::vector<T> diff(n);
    T ss = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        diff[i] = pn[i] - tn[i];
        ss += diff[i] * diff[i];
    }
    const T loss = std::sqrt(ss);

    return ad::Var<T>::make(Tensor<T>::scalar(loss), {preds.node()},
                            [=](ad::Node<T>& self) {
                                Tensor<T>* g = ad::grad_of(self.parents[0]);
                                if (!g || loss == T(0))
                                    return;
                                const T up = self.grad[0];
                                // dL/du where u is the normalised prediction vector
                                std::vector<T> gu(n);
                                for (std::size_t i = 0; i < n; ++i)
                                    gu[i] = up * diff[i] / loss;
                                // u = c / (|c| + eps): du/dc^T g = g/(|c|+eps) - c (c.g) / ((|c|+eps)^2 |c|)
                                T cg = T(0);
                                for (std::size_t i = 0; i < n; ++i)
                                    cg += pc[i] * gu[i];
                                const T denom = pnorm + eps;
                                std::vector<T> gc(n);
                                for (std::size_t i = 0; i < n; ++i) {
                                    gc[i] = gu[i] / denom;
                                    if (pnorm > T(0))
                                        gc[i] -= pc[i] * cg / (denom * denom * pnorm);
                                }
                                // centring: subtract the mean of the incoming gradient
                                T gm = T(0);
                                for (T v : gc)
                                    gm += v;
                                gm /= static_cast<T>(n);
                                for (std::size_t i = 0; i < n; ++i)
                                    (*g)[i] += gc[i] - gm;
                            });
}

/// Value-only convenience overload.
inline double norm_in_norm_loss(std::span<const double> preds, std::span<const double> targets)
{
    return norm_in_norm_loss<double>(ad::Var<double>::constant(Tensor<double>::vector(preds)), targets).item();
}

} // namespace percept_loop::iqa
