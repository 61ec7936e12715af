#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "percept_loop/core/util.hpp"

namespace percept_loop::metrics {

namespace detail {

inline void check_pair(std::span<const double> a, std::span<const double> b, const char* who)
{
    if (a.size() != b.size())
        throw ValidationError(std::string(who) + ": length mismatch");
    if (a.size() < 2)
        throw ValidationError(std::string(who) + ": need at least two samples");
    auto constant = [](std::span<const double> v) {
        return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
    };
    if (constant(a) || constant(b))
        throw ValidationError(std::string(who) + ": constant input");
}

inline double pearson(std::span<const double> a, std::span<const double> b)
{
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    const double r = sab / std::sqrt(saa * sbb);
    return std::clamp(r, -1.0, 1.0);
}

} // namespace detail

/// 1-based ranks; tied values share the average of their positions.
inline std::vector<double> average_ranks(std::span<const double> v)
{
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]])
            ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

inline double plcc(std::span<const double> a, std::span<const double> b)
{
    detail::check_pair(a, b, "plcc");
    return detail::pearson(a, b);
}

inline double srocc(std::span<const double> a, std::span<const double> b)
{
    detail::check_pair(a, b, "srocc");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    return detail::pearson(ra, rb);
}

} // namespace percept_loop::metrics
