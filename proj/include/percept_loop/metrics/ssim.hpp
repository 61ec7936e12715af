#pragma once

#include <cmath>
#include <vector>

#include "percept_loop/dataio/image.hpp"

namespace percept_loop::metrics {

struct SsimConfig {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
    // Compare BT.601 luma instead of averaging the three channels.
    bool luma_only = false;
};

/// Normalised 1-D Gaussian window of odd length.
inline std::vector<double> ssim_window_1d(const SsimConfig& cfg)
{
    std::vector<double> w(cfg.window);
    const int r = cfg.window / 2;
    double sum = 0.0;
    for (int i = 0; i < cfg.window; ++i) {
        w[i] = std::exp(-((i - r) * (i - r)) / (2.0 * cfg.sigma * cfg.sigma));
        sum += w[i];
    }
    for (double& v : w)
        v /= sum;
    return w;
}

namespace detail {

/// Separable 'valid' filtering of a single plane.
inline std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& k)
{
    const int n = static_cast<int>(k.size());
    const int oh = h - n + 1;
    const int ow = w - n + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i)
                s += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0.0;
            for (int i = 0; i < n; ++i)
                s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

inline double ssim_plane(const std::vector<double>& a, const std::vector<double>& b, int h, int w,
                         const SsimConfig& cfg)
{
    const auto k = ssim_window_1d(cfg);
    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    const auto mu_a = filter_valid(a, h, w, k);
    const auto mu_b = filter_valid(b, h, w, k);
    const auto e_aa = filter_valid(aa, h, w, k);
    const auto e_bb = filter_valid(bb, h, w, k);
    const auto e_ab = filter_valid(ab, h, w, k);
    const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
    const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = e_aa[i] - ma * ma;
        const double vb = e_bb[i] - mb * mb;
        const double cov = e_ab[i] - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return total / static_cast<double>(mu_a.size());
}

} // namespace detail

/// Mean SSIM over all fully-covered window positions (no padding).
inline double ssim(const ImageBuffer& x, const ImageBuffer& y, const SsimConfig& cfg = {})
{
    if (x.height() != y.height() || x.width() != y.width())
        throw ShapeError("ssim: shape mismatch");
    if (x.height() < cfg.window || x.width() < cfg.window)
        throw ShapeError("ssim: image smaller than the " + std::to_string(cfg.window) + "-pixel window");
    const int h = x.height(), w = x.width();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    auto channel = [&](const ImageBuffer& img, int c) {
        std::vector<double> v(plane);
        for (std::size_t i = 0; i < plane; ++i)
            v[i] = img.pixels()[c * plane + i];
        return v;
    };
    if (cfg.luma_only) {
        auto luma = [&](const ImageBuffer& img) {
            std::vector<double> v(plane);
            for (std::size_t i = 0; i < plane; ++i)
                v[i] = 0.299 * img.pixels()[i] + 0.587 * img.pixels()[plane + i] + 0.114 * img.pixels()[2 * plane + i];
            return v;
        };
        return detail::ssim_plane(luma(x), luma(y), h, w, cfg);
    }
    double sum = 0.0;
    for (int c = 0; c < 3; ++c)
        sum += detail::ssim_plane(channel(x, c), channel(y, c), h, w, cfg);
    return sum / 3.0;
}

} // namespace percept_loop::metrics
