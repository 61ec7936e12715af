#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <thread>

#include "percept_loop/study/aggregate.hpp"
#include "percept_loop/study/schedule.hpp"
#include "percept_loop/study/simulate.hpp"
#include "support.hpp"

using namespace percept_loop;
using namespace percept_loop::study;
using test_support::TempDir;

namespace {

std::vector<std::string> ids(const std::string& prefix, int n)
{
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i)
        out.push_back(prefix + std::to_string(i));
    return out;
}

VoteRecord vote(const std::string& subject, const std::string& content, const std::string& a, const std::string& b,
                Pick choice, bool sanity = false)
{
    VoteRecord v;
    v.study_id = "st";
    v.subject_id = subject;
    v.content_id = content;
    v.method_a = a;
    v.method_b = b;
    v.choice = choice;
    v.presented_left = sanity ? Pick::B : Pick::A;
    v.elapsed_ms = 1200;
    v.is_sanity = sanity;
    return v;
}

// Session with four originals and their sanity repeats; `agree` repeats match.
std::vector<VoteRecord> session_with_repeats(int agree)
{
    std::vector<VoteRecord> s;
    const std::vector<std::pair<std::string, std::string>> pairs{{"m0", "m1"}, {"m0", "m2"}, {"m1", "m2"}, {"m1", "m3"}};
    for (const auto& [a, b] : pairs)
        s.push_back(vote("u", "c0", a, b, Pick::A));
    for (int i = 0; i < 4; ++i)
        s.push_back(vote("u", "c0", pairs[i].first, pairs[i].second, i < agree ? Pick::A : Pick::B, true));
    return s;
}

} // namespace

TEST(Schedule, FullScaleTrialCount)
{
    const auto s = schedule_trials(ids("c", 290), ids("m", 10), "u", 0.0, 1);
    EXPECT_EQ(s.trials.size(), 13050u);
    EXPECT_EQ(s.sanity_count(), 0u);
}

TEST(Schedule, SinglePair)
{
    const auto s = schedule_trials({"c"}, {"a", "b"}, "u", 0.0, 1);
    ASSERT_EQ(s.trials.size(), 1u);
}

TEST(Schedule, EveryPairExactlyOnce)
{
    const auto s = schedule_trials(ids("c", 4), ids("m", 5), "u", 0.0, 3);
    ASSERT_EQ(s.trials.size(), 40u);
    std::map<std::tuple<std::string, std::string, std::string>, int> seen;
    for (const auto& t : s.trials)
        ++seen[{t.content_id, std::min(t.method_a, t.method_b), std::max(t.method_a, t.method_b)}];
    EXPECT_EQ(seen.size(), 40u);
    for (const auto& [k, n] : seen)
        EXPECT_EQ(n, 1);
}

TEST(Schedule, SanityRepeatsAreSwappedAndLater)
{
    const auto s = schedule_trials(ids("c", 10), ids("m", 4), "u", 0.2, 5);
    const std::size_t base = 10 * 6;
    EXPECT_EQ(s.sanity_count(), 12u);
    EXPECT_EQ(s.trials.size(), base + 12);
    for (std::size_t i = 0; i < s.trials.size(); ++i) {
        const auto& t = s.trials[i];
        if (!t.is_sanity)
            continue;
        bool found = false;
        for (std::size_t j = 0; j < i; ++j) {
            const auto& o = s.trials[j];
            if (!o.is_sanity && o.content_id == t.content_id && o.method_a == t.method_a && o.method_b == t.method_b) {
                EXPECT_EQ(o.presented_left, other(t.presented_left));
                found = true;
            }
        }
        EXPECT_TRUE(found) << "sanity trial " << i << " has no earlier original";
    }
}

TEST(Schedule, SeededAndValidated)
{
    const auto a = schedule_trials(ids("c", 5), ids("m", 4), "u", 0.1, 7);
    const auto b = schedule_trials(ids("c", 5), ids("m", 4), "u", 0.1, 7);
    const auto c = schedule_trials(ids("c", 5), ids("m", 4), "u", 0.1, 8);
    EXPECT_EQ(a.trials, b.trials);
    EXPECT_NE(a.trials, c.trials);
    EXPECT_THROW(schedule_trials({"c"}, {"a"}, "u", 0.0, 1), ValidationError);
    EXPECT_THROW(schedule_trials({}, {"a", "b"}, "u", 0.0, 1), ValidationError);
    EXPECT_THROW(schedule_trials({"c"}, {"a", "b"}, "u", 0.3, 1), ValidationError);
    EXPECT_THROW(schedule_trials({"c"}, {"a", "a"}, "u", 0.0, 1), ValidationError);
}

TEST(VoteRecordTest, JsonRoundTripAndValidation)
{
    auto v = vote("u", "c", "a", "b", Pick::B, true);
    v.timestamp_ms = 77;
    const auto back = vote_from_json(nlohmann::json::parse(to_json(v).dump()));
    EXPECT_EQ(to_json(back), to_json(v));
    EXPECT_EQ(back.preferred(), "b");

    auto bad = v;
    bad.method_b = "a";
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = v;
    bad.elapsed_ms = -1;
    EXPECT_THROW(bad.validate(), ValidationError);
    bad = v;
    bad.elapsed_ms = 0;
    EXPECT_NO_THROW(bad.validate());
    EXPECT_THROW(vote_from_json(nlohmann::json{{"study_id", "x"}}), ValidationError);
}

TEST(VoteLogTest, AppendIncrementsSequence)
{
    TempDir dir("log");
    VoteLog log(dir / "v.jsonl");
    EXPECT_EQ(log.append(vote("u", "c", "a", "b", Pick::A)), 1u);
    EXPECT_EQ(log.append(vote("u", "c", "a", "c", Pick::A)), 2u);
    EXPECT_EQ(log.records().size(), 2u);
}

TEST(VoteLogTest, DuplicateRejectedAndLogUnchanged)
{
    TempDir dir("dup");
    VoteLog log(dir / "v.jsonl");
    log.append(vote("u", "c", "a", "b", Pick::A));
    const auto before = log.records();
    // Same trial, methods listed the other way round.
    EXPECT_THROW(log.append(vote("u", "c", "b", "a", Pick::B)), DuplicateTrialError);
    EXPECT_EQ(log.size(), 1u);
    EXPECT_EQ(log.records().size(), before.size());
    // The sanity repeat of the same pair is a different trial.
    EXPECT_NO_THROW(log.append(vote("u", "c", "a", "b", Pick::A, true)));
}

TEST(VoteLogTest, ReopenKeepsDuplicateIndex)
{
    TempDir dir("reopen");
    {
        VoteLog log(dir / "v.jsonl");
        log.append(vote("u", "c", "a", "b", Pick::A));
    }
    VoteLog log(dir / "v.jsonl");
    EXPECT_EQ(log.size(), 1u);
    EXPECT_THROW(log.append(vote("u", "c", "a", "b", Pick::A)), DuplicateTrialError);
    EXPECT_EQ(log.append(vote("u", "c", "a", "d", Pick::A)), 2u);
}

TEST(VoteLogTest, MalformedRecordRejected)
{
    TempDir dir("malformed");
    VoteLog log(dir / "v.jsonl");
    auto v = vote("u", "c", "a", "b", Pick::A);
    v.subject_id.clear();
    EXPECT_THROW(log.append(v), ValidationError);
    EXPECT_EQ(log.size(), 0u);
}

TEST(VoteLogTest, ThousandConcurrentAppends)
{
    TempDir dir("stress");
    VoteLog log(dir / "v.jsonl");
    constexpr int kThreads = 8, kPerThread = 125;
    std::vector<std::thread> pool;
    std::vector<std::vector<std::uint64_t>> seqs(kThreads);
    for (int t = 0; t < kThreads; ++t)
        pool.emplace_back([&, t] {
            for (int i = 0; i < kPerThread; ++i)
                seqs[t].push_back(log.append(vote("u" + std::to_string(t), "c" + std::to_string(i), "a", "b", Pick::A)));
        });
    for (auto& th : pool)
        th.join();
    std::set<std::uint64_t> all;
    for (const auto& s : seqs)
        all.insert(s.begin(), s.end());
    EXPECT_EQ(all.size(), 1000u);
    EXPECT_EQ(*all.begin(), 1u);
    EXPECT_EQ(*all.rbegin(), 1000u);
    const auto recs = read_votes_jsonl(dir / "v.jsonl");
    ASSERT_EQ(recs.size(), 1000u);
    std::set<std::string> keys;
    for (const auto& r : recs)
        keys.insert(trial_key(r));
    EXPECT_EQ(keys.size(), 1000u);
}

TEST(Sanity, Ratios)
{
    auto all = sanity_check(session_with_repeats(4), 0.8);
    EXPECT_DOUBLE_EQ(all.consistency, 1.0);
    EXPECT_TRUE(all.passed);
    auto none = sanity_check(session_with_repeats(0), 0.01);
    EXPECT_DOUBLE_EQ(none.consistency, 0.0);
    EXPECT_FALSE(none.passed);
    auto three = sanity_check(session_with_repeats(3), 0.7);
    EXPECT_DOUBLE_EQ(three.consistency, 0.75);
    EXPECT_TRUE(three.passed);
    EXPECT_EQ(three.sanity_trials, 4u);
}

TEST(Sanity, SwapIsUndoneBeforeComparing)
{
    // Original picks the left image (method a); the repeat shows a on the right
    // and the subject again picks a. That is agreement.
    auto orig = vote("u", "c", "a", "b", Pick::A);
    orig.presented_left = Pick::A;
    auto rep = vote("u", "c", "a", "b", Pick::A, true);
    rep.presented_left = Pick::B;
    EXPECT_DOUBLE_EQ(sanity_check({orig, rep}).consistency, 1.0);
}

TEST(Sanity, NoSanityTrialsIsAnError)
{
    EXPECT_THROW(sanity_check({vote("u", "c", "a", "b", Pick::A)}), ValidationError);
    EXPECT_THROW(sanity_check(session_with_repeats(4), 1.5), ValidationError);
}

TEST(Tally, EmptyVotes)
{
    const auto t = tally({}, {"a", "b", "c"}, "c0");
    for (const auto& row : t.counts)
        for (auto v : row)
            EXPECT_EQ(v, 0);
    EXPECT_FALSE(t.complete());
}

TEST(Tally, CrmVersusEnlightenGan)
{
    const std::vector<std::string> m{"CRM", "EnlightenGAN"};
    const auto votes = votes_from_counts("st", "c0", m, {{0, 14}, {16, 0}}, 30);
    const auto t = tally(votes, m, "c0");
    EXPECT_EQ(t.counts[0][1], 14);
    EXPECT_EQ(t.counts[1][0], 16);
    EXPECT_EQ(t.counts[0][1] + t.counts[1][0], 30);
    EXPECT_EQ(t.counts[0][0], 0);
}

TEST(Tally, MatchesScalarRecount)
{
    std::mt19937_64 rng(3);
    const auto methods = ids("m", 5);
    std::vector<VoteRecord> votes;
    for (const auto* cid : {"c0", "c1"}) {
        const auto v = simulate_pairwise("st", cid, methods, {0.1, 0.2, 0.15, 0.4, 0.3}, 12, 0.1, rng);
        votes.insert(votes.end(), v.begin(), v.end());
    }
    votes.push_back(vote("x", "c0", "m0", "m1", Pick::B, true)); // sanity: ignored
    const auto t = tally(votes, methods, "c0");
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 5; ++c) {
            std::int64_t n = 0;
            for (const auto& v : votes)
                if (v.content_id == "c0" && !v.is_sanity && v.preferred() == methods[r] && v.rejected() == methods[c])
                    ++n;
            EXPECT_EQ(t.counts[r][c], n);
        }
    EXPECT_TRUE(t.complete());
    EXPECT_THROW(tally(votes, {"m0", "m1"}, "c0"), ValidationError);
}

TEST(OpinionScores, TenMethodFixtureRows)
{
    // Ten methods, 30 subjects. Method 0 wins 197 times, method 1 wins 22
    // times; every other pair is split 15/15.
    std::vector<std::vector<std::int64_t>> c(10, std::vector<std::int64_t>(10, 15));
    for (int i = 0; i < 10; ++i)
        c[i][i] = 0;
    const std::vector<std::int64_t> row0{0, 22, 22, 22, 22, 22, 22, 22, 22, 21};
    const std::vector<std::int64_t> row1{8, 0, 2, 2, 2, 2, 2, 2, 1, 1};
    for (int j = 1; j < 10; ++j) {
        c[0][j] = row0[j];
        c[j][0] = 30 - row0[j];
    }
    for (int j = 2; j < 10; ++j) {
        c[1][j] = row1[j];
        c[j][1] = 30 - row1[j];
    }
    const auto methods = ids("m", 10);
    const auto t = tally(votes_from_counts("st", "c", methods, c, 30), methods, "c");
    ASSERT_TRUE(t.complete());
    const auto s = opinion_scores(t);
    EXPECT_EQ(s[0].winning_times, 197);
    EXPECT_EQ(s[0].total, 270);
    EXPECT_EQ(fixed(s[0].score, 4), "0.7296");
    EXPECT_EQ(s[1].winning_times, 22);
    EXPECT_EQ(fixed(s[1].score, 4), "0.0815");
    double sum = 0;
    for (const auto& o : s)
        sum += o.score;
    EXPECT_NEAR(sum, 5.0, 1e-12);
}

TEST(OpinionScores, Boundaries)
{
    const std::vector<std::string> m{"a", "b", "c"};
    const auto t = tally(votes_from_counts("st", "c", m, {{0, 4, 4}, {0, 0, 2}, {0, 2, 0}}, 4), m, "c");
    const auto s = opinion_scores(t);
    EXPECT_DOUBLE_EQ(s[0].score, 1.0);
    EXPECT_EQ(s[0].winning_times, s[0].total);
    EXPECT_DOUBLE_EQ(
        opinion_scores(tally(votes_from_counts("st", "c", m, {{0, 0, 0}, {4, 0, 2}, {4, 2, 0}}, 4), m, "c"))[0].score,
        0.0);
    const auto dr = opinion_scores(tally(votes_from_counts("st", "c", {"x", "y"}, {{0, 22}, {8, 0}}, 30), {"x", "y"}, "c"));
    EXPECT_EQ(dr[0].winning_times, 22);
}

TEST(OpinionScores, PermutationInvariant)
{
    std::mt19937_64 rng(4);
    const auto methods = ids("m", 6);
    const auto votes = simulate_pairwise("st", "c", methods, {0.3, 0.1, 0.5, 0.2, 0.25, 0.4}, 9, 0.1, rng);
    std::map<std::string, double> base;
    for (const auto& s : opinion_scores(tally(votes, methods, "c")))
        base[s.method_id] = s.score;
    auto perm = methods;
    for (int k = 0; k < 5; ++k) {
        std::shuffle(perm.begin(), perm.end(), rng);
        for (const auto& s : opinion_scores(tally(votes, perm, "c")))
            EXPECT_EQ(s.score, base[s.method_id]);
    }
}

TEST(OpinionScores, IncompleteTallyRejected)
{
    const std::vector<std::string> m{"a", "b", "c"};
    auto votes = votes_from_counts("st", "c", m, {{0, 2, 1}, {0, 0, 1}, {1, 1, 0}}, 2);
    votes.pop_back();
    EXPECT_THROW(opinion_scores(tally(votes, m, "c")), ValidationError);
}

TEST(Aggregate, FailingSessionDropped)
{
    auto good = session_with_repeats(4);
    auto bad = session_with_repeats(0);
    for (auto& v : bad)
        v.subject_id = "w";
    // Complete the pairs so the kept session yields a full tally.
    std::vector<VoteRecord> votes = good;
    for (const auto& [a, b] : std::vector<std::pair<std::string, std::string>>{{"m0", "m3"}, {"m2", "m3"}})
        votes.push_back(vote("u", "c0", a, b, Pick::B));
    votes.insert(votes.end(), bad.begin(), bad.end());
    const auto agg = aggregate_votes(votes, 0.8);
    ASSERT_EQ(agg.sessions.size(), 2u);
    EXPECT_TRUE(agg.sessions[0].included);
    EXPECT_FALSE(agg.sessions[1].included);
    ASSERT_EQ(agg.scores.size(), 4u);
    for (const auto& s : agg.scores)
        EXPECT_EQ(s.total, 3);
}

TEST(Aggregate, CsvRoundTrip)
{
    const std::vector<std::string> m{"a", "b"};
    const auto agg = aggregate_votes(votes_from_counts("st", "c", m, {{0, 197}, {73, 0}}, 270));
    const auto csv = opinion_scores_csv(agg.scores);
    EXPECT_NE(csv.find("c,a,197,270,0.7296"), std::string::npos);
    const auto back = parse_opinion_scores_csv(csv);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].score, 197.0 / 270.0);
    EXPECT_THROW(parse_opinion_scores_csv("bad header\n"), ValidationError);
}

TEST(Simulate, PreferenceProbability)
{
    EXPECT_EQ(preference_probability(0.3, 0.3, 0.05), 0.5);
    EXPECT_GT(preference_probability(0.0, 1.0, 1e-3), 1.0 - 1e-12);
    EXPECT_THROW(preference_probability(0, 1, 0.0), ValidationError);
}

TEST(Simulate, MonteCarloMatchesLogistic)
{
    std::mt19937_64 rng(11);
    const double da = 0.2, db = 0.25, temp = 0.05;
    const auto votes = simulate_pairwise("st", "c", {"a", "b"}, {da, db}, 10000, temp, rng);
    ASSERT_EQ(votes.size(), 10000u);
    const double p = preference_probability(da, db, temp);
    const auto wins = std::count_if(votes.begin(), votes.end(), [](const VoteRecord& v) { return v.choice == Pick::A; });
    const double rate = static_cast<double>(wins) / 10000.0;
    const double se = std::sqrt(p * (1 - p) / 10000.0);
    EXPECT_LT(std::abs(rate - p), 3 * se) << "rate " << rate << " vs " << p;
}

TEST(Simulate, CompleteStudyIsAntisymmetric)
{
    std::mt19937_64 rng(12);
    const auto methods = ids("m", 7);
    const auto votes = simulate_pairwise("st", "c", methods, {0.1, 0.3, 0.2, 0.5, 0.4, 0.25, 0.35}, 30, 0.1, rng);
    const auto t = tally(votes, methods, "c");
    EXPECT_TRUE(t.complete());
    double sum = 0;
    for (const auto& s : opinion_scores(t))
        sum += s.score;
    EXPECT_NEAR(sum, 3.5, 1e-12);
}

TEST(Simulate, CorpusVotesDeterministic)
{
    TempDir dir("simcorpus");
    auto cfg = default_degradation_config();
    cfg.methods.resize(3);
    const auto m = generate_degraded_corpus(synthesize_base_images({3, 32, 32}, 1), cfg, 2, dir.path());
    SimulationConfig sc;
    sc.n_subjects = 5;
    const auto a = simulate_votes(m, dir.path(), sc, 9);
    const auto b = simulate_votes(m, dir.path(), sc, 9);
    ASSERT_EQ(a.size(), 3u * 5u * 3u);
    for (std::size_t i = 0; i < a.size(); ++i)
        EXPECT_EQ(to_json(a[i]), to_json(b[i]));
    sc.temperature = 0.0;
    EXPECT_THROW(simulate_votes(m, dir.path(), sc, 9), ValidationError);
}
