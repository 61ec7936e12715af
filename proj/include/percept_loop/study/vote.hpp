#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "percept_loop/core/util.hpp"

namespace percept_loop::study {

enum class Pick { A, B };

inline std::string to_string(Pick p) { return p == Pick::A ? "A" : "B"; }

inline Pick pick_from_string(const std::string& s)
{
    if (s == "A")
        return Pick::A;
    if (s == "B")
        return Pick::B;
    throw ValidationError("expected \"A\" or \"B\", got \"" + s + "\"");
}

inline Pick other(Pick p) { return p == Pick::A ? Pick::B : Pick::A; }

/// One forced-choice trial outcome. `choice` names the preferred method
/// (A = method_a), independent of which side it was shown on.
struct VoteRecord {
    std::string study_id;
    std::string subject_id;
    std::string content_id;
    std::string method_a;
    std::string method_b;
    Pick choice = Pick::A;
    Pick presented_left = Pick::A;
    std::int64_t elapsed_ms = 0;
    bool is_sanity = false;
    std::uint64_t timestamp_ms = 0;

    const std::string& preferred() const { return choice == Pick::A ? method_a : method_b; }
    const std::string& rejected() const { return choice == Pick::A ? method_b : method_a; }

    void validate() const
    {
        if (study_id.empty() || subject_id.empty() || content_id.empty() || method_a.empty() || method_b.empty())
            throw ValidationError("vote: empty identifier field");
        if (method_a == method_b)
            throw ValidationError("vote: method_a equals method_b (" + method_a + ")");
        if (elapsed_ms < 0)
            throw ValidationError("vote: elapsed_ms must be non-negative");
    }

    bool operator==(const VoteRecord&) const = default;
};

/// Trials answered faster than this are flagged, not rejected.
inline constexpr std::int64_t kFastVoteMs = 500;

inline bool is_fast_vote(const VoteRecord& v) { return v.elapsed_ms < kFastVoteMs; }

inline nlohmann::ordered_json to_json(const VoteRecord& v)
{
    return nlohmann::ordered_json{{"study_id", v.study_id},
                          {"subject_id", v.subject_id},
                          {"content_id", v.content_id},
                          {"method_a", v.method_a},
                          {"method_b", v.method_b},
                          {"choice", to_string(v.choice)},
                          {"presented_left", to_string(v.presented_left)},
                          {"elapsed_ms", v.elapsed_ms},
                          {"is_sanity", v.is_sanity},
                          {"timestamp_ms", v.timestamp_ms}};
}

inline VoteRecord vote_from_json(const nlohmann::json& j)
{
    try {
        VoteRecord v;
        v.study_id = j.at("study_id").get<std::string>();
        v.subject_id = j.at("subject_id").get<std::string>();
        v.content_id = j.at("content_id").get<std::string>();
        v.method_a = j.at("method_a").get<std::string>();
        v.method_b = j.at("method_b").get<std::string>();
        v.choice = pick_from_string(j.at("choice").get<std::string>());
        v.presented_left = pick_from_string(j.at("presented_left").get<std::string>());
        v.elapsed_ms = j.at("elapsed_ms").get<std::int64_t>();
        v.is_sanity = j.at("is_sanity").get<bool>();
        v.timestamp_ms = j.at("timestamp_ms").get<std::uint64_t>();
        v.validate();
        return v;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed vote record: ") + e.what());
    }
}

/// Identity of a trial for duplicate detection: the method pair is unordered.
inline std::string trial_key(const VoteRecord& v)
{
    const auto& lo = std::min(v.method_a, v.method_b);
    const auto& hi = std::max(v.method_a, v.method_b);
    nlohmann::json k = {v.study_id, v.subject_id, v.content_id, lo, hi, v.is_sanity};
    return k.dump();
}

inline std::vector<VoteRecord> read_votes_jsonl(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("cannot open vote log " + path.string());
    std::vector<VoteRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        try {
            out.push_back(vote_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline void write_votes_jsonl(const std::vector<VoteRecord>& votes, const std::filesystem::path& path)
{
    std::string text;
    for (const auto& v : votes)
        text += to_json(v).dump() + "\n";
    write_text_file(path, text);
}

class DuplicateTrialError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class StorageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Append-only JSON-lines vote log. Appends are serialised; the returned
/// sequence numbers are 1-based and gap-free.
class VoteLog {
public:
    explicit VoteLog(std::filesystem::path path) : path_(std::move(path))
    {
        if (std::filesystem::exists(path_))
            for (const auto& v : read_votes_jsonl(path_)) {
                keys_.insert(trial_key(v));
                ++sequence_;
            }
        if (path_.has_parent_path())
            std::filesystem::create_directories(path_.parent_path());
        out_.open(path_, std::ios::binary | std::ios::app);
        if (!out_)
            throw StorageError("cannot open vote log " + path_.string() + " for append");
    }

    std::uint64_t append(const VoteRecord& record)
    {
        record.validate();
        const std::string key = trial_key(record);
        const std::string line = to_json(record).dump() + "\n";
        std::lock_guard lock(mu_);
        if (keys_.count(key))
            throw DuplicateTrialError("duplicate trial for subject " + record.subject_id + " content " +
                                      record.content_id + " (" + record.method_a + " vs " + record.method_b + ")");
        out_.write(line.data(), static_cast<std::streamsize>(line.size()));
        out_.flush();
        if (!out_)
            throw StorageError("write to vote log failed");
        keys_.insert(key);
        return ++sequence_;
    }

    bool contains(const VoteRecord& record) const
    {
        std::lock_guard lock(mu_);
        return keys_.count(trial_key(record)) > 0;
    }

    std::uint64_t size() const
    {
        std::lock_guard lock(mu_);
        return sequence_;
    }

    const std::filesystem::path& path() const { return path_; }

    std::vector<VoteRecord> records() const
    {
        std::lock_guard lock(mu_);
        return read_votes_jsonl(path_);
    }

private:
    std::filesystem::path path_;
    mutable std::mutex mu_;
    std::ofstream out_;
    std::set<std::string> keys_;
    std::uint64_t sequence_ = 0;
};

} // namespace percept_loop::study
