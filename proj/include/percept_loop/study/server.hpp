#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "percept_loop/dataio/corpus.hpp"
#include "percept_loop/study/aggregate.hpp"
#include "percept_loop/study/schedule.hpp"
#include "percept_loop/study/vote.hpp"

#include <httplib.h>
// <resolv.h>, pulled in by httplib, defines _res; Eigen uses it as a parameter name.
#undef _res

namespace percept_loop::study {

struct StudyServerConfig {
    std::string study_id = "study";
    std::filesystem::path corpus_root;      // images are served relative to this
    std::filesystem::path vote_log = "votes.jsonl";
    std::optional<std::filesystem::path> ui_dir; // static bundle mounted at /
    double sanity_rate = 0.1;
    double min_consistency = 0.8;
    std::uint64_t seed = 0;
};

/// A JSON reply plus HTTP status, independent of the transport.
struct ApiReply {
    int status = 200;
    nlohmann::json body;
};

/// Session bookkeeping behind the HTTP API. Each session owns one seeded
/// schedule; votes go straight to the shared append-only log. All methods
/// are safe to call concurrently.
class StudySessions {
public:
    StudySessions(CorpusManifest manifest, StudyServerConfig config)
        : manifest_(std::move(manifest)), config_(std::move(config)), log_(config_.vote_log)
    {
        methods_ = manifest_.enhanced_methods();
        if (methods_.size() < 2)
            throw ValidationError("study: corpus needs at least two enhanced methods");
        for (const auto& cid : manifest_.content_ids())
            if (manifest_.find(cid, Role::enhanced))
                contents_.push_back(cid);
    }

    /// Body fields (all optional): subject_id.
    ApiReply create(const nlohmann::json& body)
    {
        std::lock_guard lock(mu_);
        std::string subject = body.is_object() ? body.value("subject_id", std::string()) : std::string();
        if (subject.empty()) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "subject%04zu", sessions_.size() + 1);
            subject = buf;
        }
        for (const auto& [id, s] : sessions_)
            if (s.schedule.subject_id == subject)
                return {409, {{"error", "subject " + subject + " already has a session"}, {"session_id", id}}};

        const auto seed = derive_seed(config_.seed, {std::stoull(fnv1a_hex(subject), nullptr, 16)});
        Session s;
        s.schedule = schedule_trials(contents_, methods_, subject, config_.sanity_rate, seed);
        const std::string id = "s" + std::to_string(sessions_.size() + 1);
        nlohmann::json trials = nlohmann::json::array();
        for (const auto& t : s.schedule.trials)
            trials.push_back({t.content_id, t.method_a, t.method_b, to_string(t.presented_left), t.is_sanity});
        const std::string schedule_id = fnv1a_hex(trials.dump());
        const auto total = s.schedule.trials.size();
        sessions_.emplace(id, std::move(s));
        return {201, {{"session_id", id}, {"subject_id", subject}, {"schedule_id", schedule_id}, {"total", total}}};
    }

    ApiReply next(const std::string& id)
    {
        std::lock_guard lock(mu_);
        auto* s = find(id);
        if (!s)
            return not_found(id);
        const auto total = s->schedule.trials.size();
        if (s->answered >= total)
            return {200, {{"done", true}, {"answered", s->answered}, {"total", total}}};
        const Trial& t = s->schedule.trials[s->answered];
        const std::string& left = t.presented_left == Pick::A ? t.method_a : t.method_b;
        const std::string& right = t.presented_left == Pick::A ? t.method_b : t.method_a;
        return {200,
                {{"done", false},
                 {"trial_token", token(id, s->answered)},
                 {"index", s->answered},
                 {"total", total},
                 {"content_id", t.content_id},
                 {"left_url", image_url(t.content_id, left)},
                 {"right_url", image_url(t.content_id, right)}}};
    }

    /// Body: trial_token, choice ("left" | "right"), elapsed_ms.
    ApiReply vote(const std::string& id, const nlohmann::json& body)
    {
        std::lock_guard lock(mu_);
        auto* s = find(id);
        if (!s)
            return not_found(id);
        std::string tok, choice;
        std::int64_t elapsed = 0;
        try {
            tok = body.at("trial_token").get<std::string>();
            choice = body.at("choice").get<std::string>();
            elapsed = body.at("elapsed_ms").get<std::int64_t>();
        } catch (const nlohmann::json::exception& e) {
            return {400, {{"error", std::string("malformed vote: ") + e.what()}}};
        }
        if (choice != "left" && choice != "right")
            return {400, {{"error", "choice must be \"left\" or \"right\""}}};
        std::size_t index = 0;
        if (!parse_token(id, tok, index) || index >= s->schedule.trials.size())
            return {400, {{"error", "unknown trial token"}}};
        if (index < s->answered)
            return {409, {{"error", "trial already answered"}, {"trial_token", tok}}};
        if (index > s->answered)
            return {400, {{"error", "trial is not the current one"}}};

        const Trial& t = s->schedule.trials[index];
        VoteRecord v;
        v.study_id = config_.study_id;
        v.subject_id = s->schedule.subject_id;
        v.content_id = t.content_id;
        v.method_a = t.method_a;
        v.method_b = t.method_b;
        v.presented_left = t.presented_left;
        v.choice = choice == "left" ? t.presented_left : other(t.presented_left);
        v.elapsed_ms = elapsed;
        v.is_sanity = t.is_sanity;
        v.timestamp_ms = static_cast<std::uint64_t>(
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
                .count());
        std::uint64_t seq = 0;
        try {
            seq = log_.append(v);
        } catch (const DuplicateTrialError& e) {
            return {409, {{"error", e.what()}}};
        } catch (const ValidationError& e) {
            return {400, {{"error", e.what()}}};
        } catch (const StorageError& e) {
            return {500, {{"error", e.what()}}};
        }
        s->votes.push_back(v);
        ++s->answered;
        return {200, {{"sequence", seq}, {"answered", s->answered}, {"fast_vote", is_fast_vote(v)}}};
    }

    ApiReply status(const std::string& id)
    {
        std::lock_guard lock(mu_);
        auto* s = find(id);
        if (!s)
            return not_found(id);
        const auto total = s->schedule.trials.size();
        const bool complete = s->answered >= total;
        nlohmann::json sanity = nullptr;
        if (complete && s->schedule.sanity_count() > 0) {
            const auto r = sanity_check(s->votes, config_.min_consistency);
            sanity = {{"passed", r.passed}, {"consistency", r.consistency}, {"sanity_trials", r.sanity_trials}};
        }
        return {200,
                {{"session_id", id},
                 {"subject_id", s->schedule.subject_id},
                 {"answered", s->answered},
                 {"total", total},
                 {"complete", complete},
                 {"sanity", sanity}}};
    }

    /// Maps a request path below /images/ to a file, refusing anything that
    /// could escape the corpus root.
    std::optional<std::filesystem::path> image_file(const std::string& rel) const
    {
        if (rel.empty() || rel.front() == '/' || rel.find("..") != std::string::npos || rel.find('\\') != std::string::npos)
            return std::nullopt;
        auto p = config_.corpus_root / rel;
        if (!std::filesystem::is_regular_file(p))
            return std::nullopt;
        return p;
    }

    const VoteLog& log() const { return log_; }
    const StudyServerConfig& config() const { return config_; }

private:
    struct Session {
        TrialSchedule schedule;
        std::size_t answered = 0;
        std::vector<VoteRecord> votes;
    };

    Session* find(const std::string& id)
    {
        auto it = sessions_.find(id);
        return it == sessions_.end() ? nullptr : &it->second;
    }

    static ApiReply not_found(const std::string& id) { return {404, {{"error", "no session " + id}}}; }

    static std::string token(const std::string& id, std::size_t index) { return id + ":" + std::to_string(index); }

    static bool parse_token(const std::string& id, const std::string& tok, std::size_t& index)
    {
        const std::string prefix = id + ":";
        if (tok.rfind(prefix, 0) != 0 || tok.size() == prefix.size())
            return false;
        const std::string digits = tok.substr(prefix.size());
        if (digits.find_first_not_of("0123456789") != std::string::npos || digits.size() > 12)
            return false;
        index = std::stoull(digits);
        return true;
    }

    std::string image_url(const std::string& cid, const std::string& method) const
    {
        const auto* e = manifest_.find(cid, Role::enhanced, method);
        if (!e)
            throw ValidationError("study: no image for " + cid + "/" + method);
        return "/images/" + e->path;
    }

    CorpusManifest manifest_;
    StudyServerConfig config_;
    VoteLog log_;
    std::vector<std::string> methods_;
    std::vector<std::string> contents_;
    std::map<std::string, Session> sessions_;
    std::mutex mu_;
};

/// Registers the session API on an httplib server. The caller owns both
/// objects and decides how to listen.
inline void register_study_routes(httplib::Server& server, StudySessions& sessions)
{
    auto send = [](httplib::Response& res, const ApiReply& r) {
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    auto parse = [](const httplib::Request& req) -> std::optional<nlohmann::json> {
        if (req.body.empty())
            return nlohmann::json::object();
        auto j = nlohmann::json::parse(req.body, nullptr, false);
        if (j.is_discarded())
            return std::nullopt;
        return j;
    };

    server.Post("/sessions", [&sessions, send, parse](const httplib::Request& req, httplib::Response& res) {
        auto body = parse(req);
        if (!body)
            return send(res, {400, {{"error", "body is not valid JSON"}}});
        send(res, sessions.create(*body));
    });
    server.Get(R"(/sessions/([^/]+)/next)", [&sessions, send](const httplib::Request& req, httplib::Response& res) {
        send(res, sessions.next(req.matches[1]));
    });
    server.Post(R"(/sessions/([^/]+)/votes)", [&sessions, send, parse](const httplib::Request& req, httplib::Response& res) {
        auto body = parse(req);
        if (!body)
            return send(res, {400, {{"error", "body is not valid JSON"}}});
        send(res, sessions.vote(req.matches[1], *body));
    });
    server.Get(R"(/sessions/([^/]+)/status)", [&sessions, send](const httplib::Request& req, httplib::Response& res) {
        send(res, sessions.status(req.matches[1]));
    });
    server.Get(R"(/images/(.+))", [&sessions, send](const httplib::Request& req, httplib::Response& res) {
        const auto file = sessions.image_file(req.matches[1]);
        if (!file)
            return send(res, {404, {{"error", "no such image"}}});
        res.set_content(read_text_file(*file), "image/png");
    });
    if (sessions.config().ui_dir && !server.set_mount_point("/", sessions.config().ui_dir->string()))
        throw ValidationError("study: UI directory " + sessions.config().ui_dir->string() + " does not exist");
}

} // namespace percept_loop::study
