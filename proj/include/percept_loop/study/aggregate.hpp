#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "percept_loop/study/vote.hpp"

namespace percept_loop::study {

struct SanityResult {
    bool passed = false;
    double consistency = 0.0;
    std::size_t sanity_trials = 0;
};

/// Repeated-pair consistency for one session: the fraction of sanity trials
/// whose preferred method matches the original trial's preferred method.
inline SanityResult sanity_check(const std::vector<VoteRecord>& session_votes, double min_consistency = 0.8)
{
    if (!(min_consistency >= 0.0 && min_consistency <= 1.0))
        throw ValidationError("sanity_check: min_consistency must be in [0,1]");
    auto pair_key = [](const VoteRecord& v) {
        return v.content_id + "\x1f" + std::min(v.method_a, v.method_b) + "\x1f" + std::max(v.method_a, v.method_b);
    };
    std::map<std::string, std::string> original_pref;
    for (const auto& v : session_votes)
        if (!v.is_sanity)
            original_pref[pair_key(v)] = v.preferred();
    std::size_t matched = 0, agree = 0;
    for (const auto& v : session_votes) {
        if (!v.is_sanity)
            continue;
        auto it = original_pref.find(pair_key(v));
        if (it == original_pref.end())
            continue;
        ++matched;
        if (it->second == v.preferred())
            ++agree;
    }
    if (matched == 0)
        throw ValidationError("sanity_check: session has no sanity trials");
    SanityResult r;
    r.sanity_trials = matched;
    r.consistency = static_cast<double>(agree) / static_cast<double>(matched);
    r.passed = r.consistency >= min_consistency;
    return r;
}

/// Winning-count matrix for one content: counts[r][c] is the number of
/// times methods[r] was preferred over methods[c].
struct PairwiseTally {
    std::string content_id;
    std::vector<std::string> methods;
    std::vector<std::vector<std::int64_t>> counts;
    std::int64_t n_subjects = 0;

    std::size_t index_of(const std::string& method) const
    {
        auto it = std::find(methods.begin(), methods.end(), method);
        if (it == methods.end())
            throw ValidationError("tally: unknown method '" + method + "' for content " + content_id);
        return static_cast<std::size_t>(it - methods.begin());
    }

    bool complete() const
    {
        if (n_subjects < 1)
            return false;
        for (std::size_t r = 0; r < methods.size(); ++r)
            for (std::size_t c = 0; c < methods.size(); ++c)
                if (r != c && counts[r][c] + counts[c][r] != n_subjects)
                    return false;
        return true;
    }
};

/// Counts non-sanity votes for `content_id`. Sanity repeats are ignored here;
/// callers drop failing sessions before tallying.
inline PairwiseTally tally(const std::vector<VoteRecord>& votes, const std::vector<std::string>& methods,
                           const std::string& content_id)
{
    PairwiseTally t;
    t.content_id = content_id;
    t.methods = methods;
    t.counts.assign(methods.size(), std::vector<std::int64_t>(methods.size(), 0));
    std::set<std::string> subjects;
    for (const auto& v : votes) {
        if (v.content_id != content_id || v.is_sanity)
            continue;
        const auto r = t.index_of(v.preferred());
        const auto c = t.index_of(v.rejected());
        ++t.counts[r][c];
        subjects.insert(v.study_id + "\x1f" + v.subject_id);
    }
    t.n_subjects = static_cast<std::int64_t>(subjects.size());
    return t;
}

/// Builds the votes that a complete study with the given winning counts
/// would have produced: one vote per subject per pair.
inline std::vector<VoteRecord> votes_from_counts(const std::string& study_id, const std::string& content_id,
                                                 const std::vector<std::string>& methods,
                                                 const std::vector<std::vector<std::int64_t>>& counts,
                                                 std::int64_t n_subjects)
{
    std::vector<VoteRecord> out;
    std::uint64_t ts = 0;
    for (std::size_t r = 0; r < methods.size(); ++r)
        for (std::size_t c = r + 1; c < methods.size(); ++c) {
            if (counts[r][c] + counts[c][r] != n_subjects)
                throw ValidationError("votes_from_counts: pair " + methods[r] + "/" + methods[c] +
                                      " does not sum to the subject count");
            for (std::int64_t s = 0; s < n_subjects; ++s) {
                VoteRecord v;
                v.study_id = study_id;
                char sid[32];
                std::snprintf(sid, sizeof sid, "s%03lld", static_cast<long long>(s));
                v.subject_id = sid;
                v.content_id = content_id;
                v.method_a = methods[r];
                v.method_b = methods[c];
                v.choice = s < counts[r][c] ? Pick::A : Pick::B;
                v.presented_left = (s % 2 == 0) ? Pick::A : Pick::B;
                v.elapsed_ms = 3000;
                v.timestamp_ms = ++ts;
                out.push_back(std::move(v));
            }
        }
    return out;
}

struct OpinionScore {
    std::string content_id;
    std::string method_id;
    std::int64_t winning_times = 0;
    std::int64_t total = 0;
    double score = 0.0;
};

/// score = winning_times / (n_subjects * (M - 1)), winning_times = row sum.
inline std::vector<OpinionScore> opinion_scores(const PairwiseTally& t)
{
    const auto m = static_cast<std::int64_t>(t.methods.size());
    if (m < 2)
        throw ValidationError("opinion_scores: fewer than two methods");
    if (!t.complete())
        throw ValidationError("opinion_scores: incomplete tally for content " + t.content_id);
    const std::int64_t total = t.n_subjects * (m - 1);
    std::vector<OpinionScore> out;
    for (std::size_t r = 0; r < t.methods.size(); ++r) {
        std::int64_t wins = 0;
        for (std::int64_t v : t.counts[r])
            wins += v;
        out.push_back({t.content_id, t.methods[r], wins, total, static_cast<double>(wins) / static_cast<double>(total)});
    }
    return out;
}

struct SessionVerdict {
    std::string study_id;
    std::string subject_id;
    std::optional<SanityResult> sanity; // empty when the session had no sanity trials
    std::size_t fast_votes = 0;
    bool included = true;
};

struct Aggregation {
    std::vector<OpinionScore> scores;
    std::vector<SessionVerdict> sessions;
};

/// Full log-to-scores pipeline: sessions are (study_id, subject_id); a session
/// failing its sanity check is dropped entirely, a session without sanity
/// trials is kept. Methods per content are sorted by id.
inline Aggregation aggregate_votes(const std::vector<VoteRecord>& votes, double min_consistency = 0.8)
{
    std::map<std::pair<std::string, std::string>, std::vector<VoteRecord>> sessions;
    for (const auto& v : votes)
        sessions[{v.study_id, v.subject_id}].push_back(v);

    Aggregation agg;
    std::vector<VoteRecord> kept;
    for (auto& [key, session] : sessions) {
        SessionVerdict verdict{key.first, key.second, std::nullopt, 0, true};
        verdict.fast_votes = static_cast<std::size_t>(std::count_if(session.begin(), session.end(), is_fast_vote));
        const bool has_sanity = std::any_of(session.begin(), session.end(), [](const VoteRecord& v) { return v.is_sanity; });
        if (has_sanity) {
            try {
                verdict.sanity = sanity_check(session, min_consistency);
                verdict.included = verdict.sanity->passed;
            } catch (const ValidationError&) {
                // sanity repeats without a matching original: nothing to judge
            }
        }
        if (verdict.included)
            kept.insert(kept.end(), session.begin(), session.end());
        agg.sessions.push_back(std::move(verdict));
    }

    std::map<std::string, std::set<std::string>> methods_by_content;
    for (const auto& v : kept) {
        methods_by_content[v.content_id].insert(v.method_a);
        methods_by_content[v.content_id].insert(v.method_b);
    }
    for (const auto& [cid, mset] : methods_by_content) {
        std::vector<std::string> methods(mset.begin(), mset.end());
        auto t = tally(kept, methods, cid);
        auto s = opinion_scores(t);
        agg.scores.insert(agg.scores.end(), s.begin(), s.end());
    }
    return agg;
}

inline std::string opinion_scores_csv(const std::vector<OpinionScore>& scores)
{
    std::ostringstream os;
    os << "content_id,method_id,winning_times,total,score\n";
    for (const auto& s : scores)
        os << s.content_id << ',' << s.method_id << ',' << s.winning_times << ',' << s.total << ','
           << fixed(s.score, 4) << '\n';
    return os.str();
}

/// Parses the CSV export. The score column is recomputed from the integer
/// columns so no precision is lost to the 4-decimal rendering.
inline std::vector<OpinionScore> parse_opinion_scores_csv(const std::string& text)
{
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "content_id,method_id,winning_times,total,score")
        throw ValidationError("opinion-score CSV: unexpected header");
    std::vector<OpinionScore> out;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ','))
            f.push_back(cell);
        if (f.size() != 5)
            throw ValidationError("opinion-score CSV: bad row '" + line + "'");
        OpinionScore s;
        s.content_id = f[0];
        s.method_id = f[1];
        s.winning_times = std::stoll(f[2]);
        s.total = std::stoll(f[3]);
        if (s.total <= 0)
            throw ValidationError("opinion-score CSV: non-positive total");
        s.score = static_cast<double>(s.winning_times) / static_cast<double>(s.total);
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace percept_loop::study
