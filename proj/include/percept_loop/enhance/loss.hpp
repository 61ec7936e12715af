#pragma once

#include <cmath>
#include <vector>

#include "percept_loop/enhance/enhancer.hpp"
#include "percept_loop/iqa/model.hpp"
#include "percept_loop/metrics/ssim.hpp"

namespace percept_loop::enhance {

/// Differentiable mean SSIM matching metrics::ssim: valid Gaussian windows,
/// per-channel maps averaged (or a single luma map).
template <typename T>
Var<T> ssim_graph(const Var<T>& x, const Var<T>& y, const metrics::SsimConfig& cfg = {})
{
    require_same_shape(x.value(), y.value(), "ssim");
    if (x.value().channels() != 3)
        throw ShapeError("ssim: expected 3-channel inputs");
    if (x.value().height() < cfg.window || x.value().width() < cfg.window)
        throw ShapeError("ssim: image smaller than the window");

    Var<T> a = x, b = y;
    if (cfg.luma_only) {
        Tensor<T> lw(1, 3, 1);
        lw[0] = T(0.299), lw[1] = T(0.587), lw[2] = T(0.114);
        const auto luma_w = Var<T>::constant(std::move(lw));
        a = ad::conv2d(x, luma_w, Var<T>{}, ad::ConvGeometry{1, 1, 0, 1});
        b = ad::conv2d(y, luma_w, Var<T>{}, ad::ConvGeometry{1, 1, 0, 1});
    }
    const int channels = a.value().channels();
    const auto w1 = metrics::ssim_window_1d(cfg);
    Tensor<T> window(channels, cfg.window * cfg.window, 1);
    for (int c = 0; c < channels; ++c)
        for (int i = 0; i < cfg.window; ++i)
            for (int j = 0; j < cfg.window; ++j)
                window(c, i * cfg.window + j, 0) = static_cast<T>(w1[i] * w1[j]);
    const auto win = Var<T>::constant(std::move(window));
    const ad::ConvGeometry valid{cfg.window, 1, 0, channels};
    auto filt = [&](const Var<T>& v) { return ad::conv2d(v, win, Var<T>{}, valid); };

    const T c1 = static_cast<T>((cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range));
    const T c2 = static_cast<T>((cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range));
    auto mu_a = filt(a);
    auto mu_b = filt(b);
    auto mu_ab = ad::mul(mu_a, mu_b);
    auto mu_aa = ad::square(mu_a);
    auto mu_bb = ad::square(mu_b);
    auto var_a = ad::sub(filt(ad::square(a)), mu_aa);
    auto var_b = ad::sub(filt(ad::square(b)), mu_bb);
    auto cov = ad::sub(filt(ad::mul(a, b)), mu_ab);
    auto num = ad::mul(ad::add_scalar(ad::scale(mu_ab, T(2)), c1), ad::add_scalar(ad::scale(cov, T(2)), c2));
    auto den = ad::mul(ad::add_scalar(ad::add(mu_aa, mu_bb), c1), ad::add_scalar(ad::add(var_a, var_b), c2));
    return ad::mean_all(ad::div(num, den));
}

/// 1 - SSIM(enhanced, reference).
template <typename T>
Var<T> fidelity_loss(const Var<T>& enhanced, const Var<T>& reference, const metrics::SsimConfig& cfg = {})
{
    return ad::add_scalar(ad::scale(ssim_graph(enhanced, reference, cfg), T(-1)), T(1));
}

inline double fidelity_loss(const ImageBuffer& enhanced, const ImageBuffer& reference, const metrics::SsimConfig& cfg = {})
{
    return 1.0 - metrics::ssim(enhanced, reference, cfg);
}

/// |q_max - IACA(enhanced)|; the quality model contributes no parameter
/// gradients when its parameters are frozen.
template <typename T>
Var<T> quality_loss(const Var<T>& enhanced, const iqa::QualityModel<T>& iqa_model)
{
    if (!iqa_model.has_q_max())
        throw ValidationError("quality_loss: quality model has no q_max");
    auto score = iqa::iaca_forward_graph(enhanced, iqa_model).score;
    return ad::abs(ad::add_scalar(ad::scale(score, T(-1)), static_cast<T>(iqa_model.q_max)));
}

template <typename T>
double quality_loss(const ImageBuffer& enhanced, const iqa::QualityModel<T>& iqa_model)
{
    if (!iqa_model.has_q_max())
        throw ValidationError("quality_loss: quality model has no q_max");
    return std::abs(iqa_model.q_max - iqa::iaca_forward(enhanced, iqa_model).score);
}

/// fidelity + lambda * quality on the raw enhancer output. With lambda == 0
/// the quality model is not evaluated.
template <typename T, typename Net>
    requires EnhancerNetwork<Net, T>
Var<T> combined_loss(const Var<T>& low, const Var<T>& reference, const Net& enhancer, const iqa::QualityModel<T>& iqa_model,
                     double lambda, const metrics::SsimConfig& cfg = {})
{
    if (!(lambda >= 0.0))
        throw ValidationError("combined_loss: lambda must be non-negative");
    auto out = enhancer.forward(low);
    require_same_shape(out.value(), low.value(), "enhancer output");
    auto loss = fidelity_loss(out, reference, cfg);
    if (lambda == 0.0)
        return loss;
    return ad::add(loss, ad::scale(quality_loss(out, iqa_model), static_cast<T>(lambda)));
}

} // namespace percept_loop::enhance
