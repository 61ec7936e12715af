#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "percept_loop/core/ops.hpp"
#include "percept_loop/dataio/image.hpp"

namespace test_support {

using percept_loop::Tensor;
using percept_loop::ad::Var;

inline Tensor<double> random_tensor(int c, int h, int w, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    Tensor<double> t(c, h, w);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.data())
        v = u(rng);
    return t;
}

inline percept_loop::ImageBuffer random_image(int h, int w, std::mt19937_64& rng)
{
    percept_loop::ImageBuffer img(h, w);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.set(c, y, x, u(rng));
    return img;
}

/// Clipped additive Gaussian noise, seeded independently of any library rng.
inline percept_loop::ImageBuffer add_noise(const percept_loop::ImageBuffer& img, double sigma, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    percept_loop::ImageBuffer out = img;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x)
                out.set(c, y, x, static_cast<float>(std::clamp(img(c, y, x) + n(rng), 0.0, 1.0)));
    return out;
}

/// Reduces an arbitrary output to a scalar with fixed random weights so that
/// every output element receives a distinct upstream gradient.
inline Var<double> weighted_sum(const Var<double>& out, std::uint64_t seed = 17)
{
    std::mt19937_64 rng(seed);
    const auto& v = out.value();
    auto w = Var<double>::constant(random_tensor(v.channels(), v.height(), v.width(), rng));
    return percept_loop::ad::sum_all(percept_loop::ad::mul(out, w));
}

/// Largest relative deviation (norm-based) between analytic and central
/// difference gradients over every coordinate of `leaves`.
inline double max_grad_error(std::vector<Var<double>> leaves, const std::function<Var<double>()>& f, double h = 1e-6)
{
    for (auto& l : leaves)
        l.zero_grad();
    f().backward();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (auto& leaf : leaves) {
        const auto analytic = std::as_const(leaf).grad();
        for (std::size_t i = 0; i < leaf.value().size(); ++i) {
            double& v = leaf.mutable_value().data()[i];
            const double orig = v;
            v = orig + h;
            const double fp = f().item();
            v = orig - h;
            const double fm = f().item();
            v = orig;
            const double num = (fp - fm) / (2 * h);
            const double an = analytic.empty() ? 0.0 : analytic.data()[i];
            diff2 += (an - num) * (an - num);
            a2 += an * an;
            n2 += num * num;
        }
    }
    return std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
}

/// Fresh scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("percept_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

} // namespace test_support
