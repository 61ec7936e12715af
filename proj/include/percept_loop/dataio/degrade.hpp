#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "percept_loop/dataio/image.hpp"

namespace percept_loop {

/// One concrete set of degradation parameters. Steps run in the order
/// gains -> contrast -> exposure -> gamma -> blur -> noise, with clipping to
/// [0,1] after each step; identity-valued steps are skipped entirely.
struct DegradationRecipe {
    double gamma = 1.0;
    double noise_sigma = 0.0;
    double blur_sigma = 0.0;
    std::array<double, 3> gains{1.0, 1.0, 1.0};
    double contrast = 1.0;
    double exposure = 0.0;

    bool operator==(const DegradationRecipe&) const = default;
};

struct RecipeLimits {
    double gamma_min = 0.25, gamma_max = 4.0;
    double noise_max = 0.1;
    double blur_max = 2.0;
    double gain_min = 0.7, gain_max = 1.3;
    double contrast_min = 0.3, contrast_max = 1.5;
    double exposure_min = -0.5, exposure_max = 0.5;
};

inline void validate_recipe(const DegradationRecipe& r, const RecipeLimits& lim = {})
{
    auto check = [](double v, double lo, double hi, const char* name) {
        if (!(v >= lo && v <= hi))
            throw ValidationError(std::string("degradation parameter ") + name + " = " + std::to_string(v) +
                                  " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    };
    check(r.gamma, lim.gamma_min, lim.gamma_max, "gamma");
    check(r.noise_sigma, 0.0, lim.noise_max, "noise_sigma");
    check(r.blur_sigma, 0.0, lim.blur_max, "blur_sigma");
    for (double g : r.gains)
        check(g, lim.gain_min, lim.gain_max, "gains");
    check(r.contrast, lim.contrast_min, lim.contrast_max, "contrast");
    check(r.exposure, lim.exposure_min, lim.exposure_max, "exposure");
}

/// Normalised 1-D Gaussian taps with radius ceil(3 sigma).
inline std::vector<double> gaussian_taps(double sigma)
{
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> taps(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        taps[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += taps[i + radius];
    }
    for (double& t : taps)
        t /= sum;
    return taps;
}

/// Separable Gaussian blur with symmetric (reflect-101) borders.
inline Tensor<float> gaussian_blur(const Tensor<float>& src, double sigma)
{
    const auto taps = gaussian_taps(sigma);
    const int r = static_cast<int>(taps.size() / 2);
    auto reflect = [](int i, int n) {
        if (n == 1)
            return 0;
        while (i < 0 || i >= n)
            i = i < 0 ? -i : 2 * (n - 1) - i;
        return i;
    };
    Tensor<float> tmp(src.channels(), src.height(), src.width());
    Tensor<float> out(src.channels(), src.height(), src.width());
    for (int c = 0; c < src.channels(); ++c) {
        for (int y = 0; y < src.height(); ++y)
            for (int x = 0; x < src.width(); ++x) {
                double s = 0.0;
                for (int k = -r; k <= r; ++k)
                    s += taps[k + r] * src(c, y, reflect(x + k, src.width()));
                tmp(c, y, x) = static_cast<float>(s);
            }
        for (int y = 0; y < src.height(); ++y)
            for (int x = 0; x < src.width(); ++x) {
                double s = 0.0;
                for (int k = -r; k <= r; ++k)
                    s += taps[k + r] * tmp(c, reflect(y + k, src.height()), x);
                out(c, y, x) = static_cast<float>(s);
            }
    }
    return out;
}

inline void clip01(Tensor<float>& t)
{
    for (float& v : t.data())
        v = std::clamp(v, 0.0f, 1.0f);
}

/// Applies a recipe. Noise draws come from `noise_rng`; nothing else is random.
inline ImageBuffer apply_recipe(const ImageBuffer& image, const DegradationRecipe& r, std::mt19937_64& noise_rng)
{
    Tensor<float> p = image.pixels();
    const std::size_t plane = p.plane();

    if (r.gains != std::array<double, 3>{1.0, 1.0, 1.0}) {
        for (int c = 0; c < 3; ++c)
            for (float& v : p.channel(c))
                v = static_cast<float>(v * r.gains[c]);
        clip01(p);
    }
    if (r.contrast != 1.0) {
        for (float& v : p.data())
            v = static_cast<float>(0.5 + r.contrast * (v - 0.5));
        clip01(p);
    }
    if (r.exposure != 0.0) {
        for (float& v : p.data())
            v = static_cast<float>(v + r.exposure);
        clip01(p);
    }
    if (r.gamma != 1.0) {
        for (float& v : p.data())
            v = static_cast<float>(std::pow(static_cast<double>(v), r.gamma));
        clip01(p);
    }
    if (r.blur_sigma > 0.0) {
        p = gaussian_blur(p, r.blur_sigma);
        clip01(p);
    }
    if (r.noise_sigma > 0.0) {
        std::normal_distribution<double> noise(0.0, r.noise_sigma);
        for (std::size_t i = 0; i < 3 * plane; ++i)
            p[i] = static_cast<float>(p[i] + noise(noise_rng));
        clip01(p);
    }
    return ImageBuffer(std::move(p));
}

} // namespace percept_loop
