#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "percept_loop/dataio/corpus.hpp"
#include "percept_loop/metrics/ssim.hpp"
#include "percept_loop/study/vote.hpp"

namespace percept_loop::study {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Probability that a method with distortion d_a is preferred over one with
/// distortion d_b.
inline double preference_probability(double d_a, double d_b, double temperature)
{
    if (!(temperature > 0.0))
        throw ValidationError("simulate: temperature must be positive");
    return logistic((d_b - d_a) / temperature);
}

inline std::string simulated_subject_id(std::int64_t s)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "sim%04lld", static_cast<long long>(s));
    return buf;
}

/// Complete simulated study for one content: every subject judges every
/// unordered pair once.
inline std::vector<VoteRecord> simulate_pairwise(const std::string& study_id, const std::string& content_id,
                                                 const std::vector<std::string>& methods,
                                                 const std::vector<double>& distortions, std::int64_t n_subjects,
                                                 double temperature, std::mt19937_64& rng)
{
    if (methods.size() != distortions.size())
        throw ValidationError("simulate: one distortion per method required");
    if (n_subjects < 1)
        throw ValidationError("simulate: need at least one subject");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<std::int64_t> elapsed(2000, 5000);
    std::vector<VoteRecord> out;
    std::uint64_t ts = 0;
    for (std::int64_t s = 0; s < n_subjects; ++s)
        for (std::size_t a = 0; a < methods.size(); ++a)
            for (std::size_t b = a + 1; b < methods.size(); ++b) {
                const double p = preference_probability(distortions[a], distortions[b], temperature);
                VoteRecord v;
                v.study_id = study_id;
                v.subject_id = simulated_subject_id(s);
                v.content_id = content_id;
                v.method_a = methods[a];
                v.method_b = methods[b];
                v.choice = u(rng) < p ? Pick::A : Pick::B;
                v.presented_left = u(rng) < 0.5 ? Pick::A : Pick::B;
                v.elapsed_ms = elapsed(rng);
                v.timestamp_ms = ++ts;
                out.push_back(std::move(v));
            }
    return out;
}

struct SimulationConfig {
    std::string study_id = "sim";
    std::int64_t n_subjects = 30;
    double temperature = 0.05;
    metrics::SsimConfig ssim;
};

/// SSIM distance 1 - SSIM(x, reference) for every enhanced entry, keyed by
/// content then method.
inline std::map<std::string, std::map<std::string, double>>
enhanced_distortions(const CorpusManifest& manifest, const std::filesystem::path& root, const metrics::SsimConfig& cfg = {})
{
    std::map<std::string, std::map<std::string, double>> out;
    std::map<std::string, ImageBuffer> refs;
    for (const auto& e : manifest.entries)
        if (e.role == Role::reference)
            refs.emplace(e.content_id, load_image(root / e.path));
    for (const auto& e : manifest.entries) {
        if (e.role != Role::enhanced)
            continue;
        auto it = refs.find(e.content_id);
        if (it == refs.end())
            throw ValidationError("simulate: content " + e.content_id + " has no reference");
        out[e.content_id][*e.method_id] = 1.0 - metrics::ssim(load_image(root / e.path), it->second, cfg);
    }
    return out;
}

/// Logistic preference model over SSIM distances, standing in for human
/// subjects. Deterministic given the seed.
inline std::vector<VoteRecord> simulate_votes(const CorpusManifest& manifest, const std::filesystem::path& root,
                                              const SimulationConfig& cfg, std::uint64_t seed)
{
    if (!(cfg.temperature > 0.0))
        throw ValidationError("simulate: temperature must be positive");
    const auto dist = enhanced_distortions(manifest, root, cfg.ssim);
    std::vector<VoteRecord> out;
    std::uint64_t content_index = 0;
    for (const auto& [cid, per_method] : dist) {
        std::vector<std::string> methods;
        std::vector<double> d;
        for (const auto& [m, v] : per_method) {
            methods.push_back(m);
            d.push_back(v);
        }
        if (methods.size() < 2)
            continue;
        auto rng = make_rng(seed, {0x5170, content_index++});
        auto votes = simulate_pairwise(cfg.study_id, cid, methods, d, cfg.n_subjects, cfg.temperature, rng);
        out.insert(out.end(), votes.begin(), votes.end());
    }
    return out;
}

} // namespace percept_loop::study
