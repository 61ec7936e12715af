#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "percept_loop/study/vote.hpp"

namespace percept_loop::study {

struct Trial {
    std::string content_id;
    std::string method_a;
    std::string method_b;
    Pick presented_left = Pick::A;
    bool is_sanity = false;

    bool operator==(const Trial&) const = default;
};

struct TrialSchedule {
    std::vector<Trial> trials;
    std::string subject_id;
    std::uint64_t seed = 0;

    std::size_t sanity_count() const
    {
        return static_cast<std::size_t>(std::count_if(trials.begin(), trials.end(), [](const Trial& t) { return t.is_sanity; }));
    }
};

/// Every unordered method pair for every content, in random order with random
/// left/right placement. A `sanity_rate` fraction of trials is repeated later
/// in the session with the sides swapped.
inline TrialSchedule schedule_trials(const std::vector<std::string>& content_ids, const std::vector<std::string>& methods,
                                     const std::string& subject_id, double sanity_rate, std::uint64_t seed)
{
    if (methods.size() < 2)
        throw ValidationError("schedule_trials: need at least two methods");
    if (content_ids.empty())
        throw ValidationError("schedule_trials: empty content list");
    if (!(sanity_rate >= 0.0 && sanity_rate <= 0.2))
        throw ValidationError("schedule_trials: sanity_rate must be in [0, 0.2]");
    for (std::size_t i = 0; i < methods.size(); ++i)
        for (std::size_t j = i + 1; j < methods.size(); ++j)
            if (methods[i] == methods[j])
                throw ValidationError("schedule_trials: duplicate method " + methods[i]);

    auto rng = make_rng(seed, {0x7a1a1});
    std::bernoulli_distribution coin(0.5);
    TrialSchedule s;
    s.subject_id = subject_id;
    s.seed = seed;
    for (const auto& cid : content_ids)
        for (std::size_t i = 0; i < methods.size(); ++i)
            for (std::size_t j = i + 1; j < methods.size(); ++j)
                s.trials.push_back({cid, methods[i], methods[j], Pick::A, false});
    std::shuffle(s.trials.begin(), s.trials.end(), rng);
    for (auto& t : s.trials)
        t.presented_left = coin(rng) ? Pick::A : Pick::B;

    const auto n_base = s.trials.size();
    const auto n_sanity = static_cast<std::size_t>(std::llround(sanity_rate * static_cast<double>(n_base)));
    if (n_sanity == 0)
        return s;
    std::vector<std::size_t> originals(n_base);
    for (std::size_t i = 0; i < n_base; ++i)
        originals[i] = i;
    std::shuffle(originals.begin(), originals.end(), rng);
    originals.resize(n_sanity);
    std::sort(originals.begin(), originals.end());

    // Each repeat is placed uniformly after its original. Inserting from the
    // last original backwards keeps earlier indices valid.
    for (auto it = originals.rbegin(); it != originals.rend(); ++it) {
        Trial repeat = s.trials[*it];
        repeat.presented_left = other(repeat.presented_left);
        repeat.is_sanity = true;
        const std::size_t pos = std::uniform_int_distribution<std::size_t>(*it + 1, s.trials.size())(rng);
        s.trials.insert(s.trials.begin() + static_cast<std::ptrdiff_t>(pos), std::move(repeat));
    }
    return s;
}

} // namespace percept_loop::study
