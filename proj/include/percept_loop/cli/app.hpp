#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "percept_loop/dataio/corpus.hpp"
#include "percept_loop/enhance/train.hpp"
#include "percept_loop/iqa/model_io.hpp"
#include "percept_loop/iqa/train.hpp"
#include "percept_loop/metrics/correlation.hpp"
#include "percept_loop/metrics/reports.hpp"
#include "percept_loop/study/aggregate.hpp"
#include "percept_loop/study/server.hpp"
#include "percept_loop/study/simulate.hpp"

namespace percept_loop::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kConfigFormatVersion = 1;

enum class Verbosity { quiet, normal, debug };

/// Options shared by every subcommand; unused ones stay empty.
struct RunConfig {
    std::string command;
    std::optional<fs::path> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<fs::path> output_dir;
    Verbosity verbosity = Verbosity::normal;
    bool force = false;
    std::optional<fs::path> model;
    std::optional<fs::path> images;
    std::optional<fs::path> votes;
    std::optional<double> lambda;
    std::optional<int> epochs;
    int port = 8080;
};

class Log {
public:
    Log(std::ostream& err, Verbosity v) : err_(err), v_(v) {}
    void info(const std::string& s) const
    {
        if (v_ != Verbosity::quiet)
            err_ << s << '\n';
    }
    void debug(const std::string& s) const
    {
        if (v_ == Verbosity::debug)
            err_ << s << '\n';
    }
    bool debugging() const { return v_ == Verbosity::debug; }

private:
    std::ostream& err_;
    Verbosity v_;
};

/// Reads a JSON config; the file must carry a matching format_version.
/// Returns an empty object when no path is given.
inline json load_config(const std::optional<fs::path>& path)
{
    if (!path)
        return json::object();
    json j = json::parse(read_text_file(*path), nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw ValidationError("config " + path->string() + ": not a JSON object");
    if (!j.contains("format_version"))
        throw ValidationError("config " + path->string() + ": missing field format_version");
    if (!j.at("format_version").is_number_integer() || j.at("format_version").get<int>() != kConfigFormatVersion)
        throw ValidationError("config " + path->string() + ": format_version must be " +
                              std::to_string(kConfigFormatVersion));
    return j;
}

inline std::uint64_t resolve_seed(const RunConfig& rc, const json& cfg)
{
    if (rc.seed)
        return *rc.seed;
    return cfg.value("seed", std::uint64_t{0});
}

template <typename T>
T require(const std::optional<T>& v, const char* flag, const std::string& cmd)
{
    if (!v)
        throw ValidationError(cmd + ": " + flag + " is required");
    return *v;
}

/// Relative to the config file's directory when the path is relative.
inline fs::path config_relative(const RunConfig& rc, const std::string& p)
{
    fs::path path(p);
    if (path.is_relative() && rc.config_path)
        return rc.config_path->parent_path() / path;
    return path;
}

/// PNG files below `dir`, sorted by relative path.
inline std::vector<fs::path> png_files(const fs::path& dir)
{
    if (!fs::is_directory(dir))
        throw ValidationError("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
            out.push_back(fs::relative(e.path(), dir));
    std::sort(out.begin(), out.end());
    return out;
}

inline void write_output(const std::optional<fs::path>& out, const std::string& text, std::ostream& stdout_stream)
{
    if (!out) {
        stdout_stream << text;
        return;
    }
    if (out->has_parent_path())
        fs::create_directories(out->parent_path());
    write_text_file(*out, text);
}

inline void write_report(const metrics::MetricReport& r, const std::optional<fs::path>& out, std::ostream& stdout_stream)
{
    if (out && out->extension() == ".csv")
        write_output(out, metrics::report_csv(r), stdout_stream);
    else
        write_output(out, metrics::to_json(r).dump(2) + "\n", stdout_stream);
}

inline CorpusManifest load_corpus(const fs::path& root) { return load_manifest(root / "manifest.json"); }

/// Opinion scores from either a vote log (.jsonl, aggregated here) or an
/// exported opinion-score CSV.
inline std::map<std::pair<std::string, std::string>, double> load_scores(const fs::path& path, double min_consistency)
{
    std::vector<study::OpinionScore> scores;
    if (path.extension() == ".jsonl")
        scores = study::aggregate_votes(study::read_votes_jsonl(path), min_consistency).scores;
    else
        scores = study::parse_opinion_scores_csv(read_text_file(path));
    std::map<std::pair<std::string, std::string>, double> out;
    for (const auto& s : scores)
        out[{s.content_id, s.method_id}] = s.score;
    if (out.empty())
        throw ValidationError("no opinion scores in " + path.string());
    return out;
}

inline std::optional<SplitSpec> model_split(const fs::path& model_dir)
{
    const auto p = model_dir / "split.json";
    if (!fs::exists(p))
        return std::nullopt;
    return split_from_json(json::parse(read_text_file(p)));
}

inline std::set<std::string> all_contents(const CorpusManifest& m)
{
    const auto ids = m.content_ids();
    return {ids.begin(), ids.end()};
}

// ---- subcommands -----------------------------------------------------------

inline int corpus_synth(const RunConfig& rc, const Log& log, std::ostream&)
{
    const json cfg_json = load_config(rc.config_path);
    const auto seed = resolve_seed(rc, cfg_json);
    const fs::path out = require(rc.output_dir, "--out", rc.command);
    DegradationConfig cfg = rc.config_path ? degradation_config_from_json(cfg_json) : default_degradation_config();
    if (fs::exists(out / "manifest.json") && !rc.force)
        throw ValidationError("corpus already exists at " + out.string() + " (pass --force to overwrite)");

    std::vector<ImageBuffer> bases;
    for (const auto& p : cfg.base_image_paths)
        bases.push_back(load_image(config_relative(rc, p)));
    if (cfg.synthetic.count > 0) {
        auto synth = synthesize_base_images(cfg.synthetic, derive_seed(seed, {0xba5e}));
        bases.insert(bases.end(), synth.begin(), synth.end());
    }
    const unsigned threads = worker_threads();
    log.info("corpus synth: " + std::to_string(bases.size()) + " contents, " + std::to_string(cfg.methods.size()) +
             " methods, " + std::to_string(threads) + " threads");
    fs::create_directories(out);
    const auto manifest = generate_degraded_corpus(bases, cfg, seed, out, threads);
    save_manifest(manifest, out / "manifest.json");
    log.info("wrote " + (out / "manifest.json").string());
    return 0;
}

inline int study_serve(const RunConfig& rc, const Log& log, std::ostream&)
{
    const json cfg = load_config(rc.config_path);
    study::StudyServerConfig sc;
    sc.corpus_root = require(rc.images, "--images", rc.command);
    sc.vote_log = rc.output_dir.value_or(".") / "votes.jsonl";
    sc.study_id = cfg.value("study_id", sc.study_id);
    sc.sanity_rate = cfg.value("sanity_rate", sc.sanity_rate);
    sc.min_consistency = cfg.value("min_consistency", sc.min_consistency);
    sc.seed = resolve_seed(rc, cfg);
    if (cfg.contains("ui_dir"))
        sc.ui_dir = config_relative(rc, cfg.at("ui_dir").get<std::string>());
    const std::string host = cfg.value("host", std::string("127.0.0.1"));

    study::StudySessions sessions(load_corpus(sc.corpus_root), sc);
    httplib::Server server;
    study::register_study_routes(server, sessions);
    log.info("study serve: listening on http://" + host + ":" + std::to_string(rc.port) + ", votes -> " +
             sc.vote_log.string());
    if (!server.listen(host, rc.port))
        throw std::runtime_error("study serve: cannot listen on " + host + ":" + std::to_string(rc.port));
    return 0;
}

inline int study_simulate(const RunConfig& rc, const Log& log, std::ostream&)
{
    const json cfg = load_config(rc.config_path);
    const fs::path root = require(rc.images, "--images", rc.command);
    const fs::path out = require(rc.output_dir, "--out", rc.command);
    study::SimulationConfig sc;
    sc.study_id = cfg.value("study_id", sc.study_id);
    sc.n_subjects = cfg.value("n_subjects", sc.n_subjects);
    sc.temperature = cfg.value("temperature", sc.temperature);
    sc.ssim.luma_only = cfg.value("ssim_luma_only", sc.ssim.luma_only);
    if (sc.n_subjects < 1)
        throw ValidationError("study simulate: n_subjects must be positive");
    if (fs::exists(out) && !rc.force)
        throw ValidationError("vote log " + out.string() + " exists (pass --force to overwrite)");
    const auto votes = study::simulate_votes(load_corpus(root), root, sc, resolve_seed(rc, cfg));
    if (out.has_parent_path())
        fs::create_directories(out.parent_path());
    study::write_votes_jsonl(votes, out);
    log.info("study simulate: " + std::to_string(votes.size()) + " votes -> " + out.string());
    return 0;
}

inline int study_aggregate(const RunConfig& rc, const Log& log, std::ostream& out)
{
    const json cfg = load_config(rc.config_path);
    const auto votes = study::read_votes_jsonl(require(rc.votes, "--votes", rc.command));
    const auto agg = study::aggregate_votes(votes, cfg.value("min_consistency", 0.8));
    std::size_t dropped = 0;
    for (const auto& s : agg.sessions) {
        if (!s.included)
            ++dropped;
        if (s.fast_votes > 0)
            log.debug("session " + s.study_id + "/" + s.subject_id + ": " + std::to_string(s.fast_votes) +
                      " votes under " + std::to_string(study::kFastVoteMs) + " ms");
    }
    log.info("study aggregate: " + std::to_string(agg.sessions.size()) + " sessions, " + std::to_string(dropped) +
             " excluded by the sanity check");
    write_output(rc.output_dir, study::opinion_scores_csv(agg.scores), out);
    return 0;
}

inline int iqa_train(const RunConfig& rc, const Log& log, std::ostream&)
{
    json cfg = load_config(rc.config_path);
    const fs::path root = require(rc.images, "--images", rc.command);
    const fs::path out = require(rc.output_dir, "--out", rc.command);
    const auto seed = resolve_seed(rc, cfg);
    if (!rc.force && (fs::exists(out / "manifest.json") || fs::exists(out / "params.bin")))
        throw ValidationError("model already exists at " + out.string() + " (pass --force to overwrite)");

    const json model_json = cfg.value("model", json::object());
    const std::string preset = model_json.value("preset", std::string("full"));
    if (preset != "full" && preset != "tiny")
        throw ValidationError("iqa train: model.preset must be \"full\" or \"tiny\"");
    const auto config = iqa::iaca_config_from_json(model_json, preset == "tiny" ? iqa::IacaConfig::tiny()
                                                                              : iqa::IacaConfig::full());
    json train_json = cfg.value("train", json::object());
    if (rc.epochs)
        train_json["epochs"] = *rc.epochs;
    const auto hyper = iqa::iqa_train_config_from_json(train_json);

    const auto manifest = load_corpus(root);
    const auto scores = load_scores(require(rc.votes, "--votes", rc.command), cfg.value("min_consistency", 0.8));
    const double test_fraction = cfg.value("test_fraction", 0.2);
    const SplitSpec split = split_by_content(manifest, test_fraction, derive_seed(seed, {0x5b}));
    const auto items = iqa::training_items(manifest, root, scores, split.train_content_ids);
    log.info("iqa train: " + std::to_string(items.size()) + " training images from " +
             std::to_string(split.train_content_ids.size()) + " contents");

    const auto model = iqa::train_iqa<float>(items, config, hyper, seed, split.digest(), [&](const iqa::IqaStepLog& s) {
        log.debug("step " + std::to_string(s.step) + " epoch " + std::to_string(s.epoch) + " loss " + fixed(s.loss, 6));
    });
    iqa::save_quality_model(model, out, rc.force);
    write_text_file(out / "split.json", to_json(split).dump(2) + "\n");
    write_text_file(out / "train_config.json", iqa::to_json(hyper).dump(2) + "\n");

    std::vector<double> pred, target;
    for (const auto& it : items) {
        pred.push_back(iqa::iaca_forward(it.image, model).score);
        target.push_back(it.score);
    }
    log.info("iqa train: q_max " + fixed(model.q_max, 6) + ", training SROCC " + fixed(metrics::srocc(pred, target), 4));
    return 0;
}

inline int iqa_score(const RunConfig& rc, const Log& log, std::ostream& out)
{
    load_config(rc.config_path);
    const auto model = iqa::load_quality_model<float>(require(rc.model, "--model", rc.command));
    const fs::path dir = require(rc.images, "--images", rc.command);
    const auto files = png_files(dir);
    std::string csv = "path,score\n";
    for (const auto& f : files)
        csv += f.generic_string() + "," + fixed(iqa::iaca_forward(load_image(dir / f), model).score, 6) + "\n";
    log.info("iqa score: " + std::to_string(files.size()) + " images");
    write_output(rc.output_dir, csv, out);
    return 0;
}

inline int enhance_train(const RunConfig& rc, const Log& log, std::ostream&)
{
    json cfg = load_config(rc.config_path);
    const fs::path root = require(rc.images, "--images", rc.command);
    const fs::path model_dir = require(rc.model, "--model", rc.command);
    const fs::path out = require(rc.output_dir, "--out", rc.command);
    const auto seed = resolve_seed(rc, cfg);
    if (!rc.force && (fs::exists(out / "manifest.json") || fs::exists(out / "params.bin")))
        throw ValidationError("model already exists at " + out.string() + " (pass --force to overwrite)");

    json train_json = cfg.value("train", json::object());
    if (rc.lambda)
        train_json["lambda"] = *rc.lambda;
    if (rc.epochs)
        train_json["epochs"] = *rc.epochs;
    const auto config = enhance::enhance_train_config_from_json(train_json);

    const auto iqa_model = iqa::load_quality_model<float>(model_dir);
    const auto manifest = load_corpus(root);
    const auto split = model_split(model_dir);
    const auto contents = split ? split->train_content_ids : all_contents(manifest);
    const auto pairs = enhance::enhancement_pairs(manifest, root, contents);
    log.info("enhance train: " + std::to_string(pairs.size()) + " pairs, lambda " + fixed(config.lambda, 6));

    const auto model = enhance::train_enhancer<float>(pairs, iqa_model, config, seed, [&](const enhance::EnhanceStepLog& s) {
        log.debug("step " + std::to_string(s.step) + " epoch " + std::to_string(s.epoch) + " lr " + fixed(s.lr, 6) +
                  " loss " + fixed(s.loss, 6));
    });
    enhance::save_enhancer(model, out, rc.force, enhance::to_json(config));
    log.info("wrote " + out.string());
    return 0;
}

/// Applies an enhancer to a corpus (its low-light entries, written as
/// <content>.png) or to every PNG under a plain directory (paths mirrored).
inline int enhance_apply(const RunConfig& rc, const Log& log, std::ostream&)
{
    load_config(rc.config_path);
    const auto model = enhance::load_enhancer<float>(require(rc.model, "--model", rc.command));
    const fs::path in = require(rc.images, "--images", rc.command);
    const fs::path out = require(rc.output_dir, "--out", rc.command);
    std::vector<std::pair<fs::path, fs::path>> jobs;
    if (fs::exists(in / "manifest.json")) {
        const auto manifest = load_corpus(in);
        for (const auto& e : manifest.entries)
            if (e.role == Role::low_light)
                jobs.emplace_back(in / e.path, out / (e.content_id + ".png"));
    } else {
        for (const auto& f : png_files(in))
            jobs.emplace_back(in / f, out / f);
    }
    for (const auto& [src, dst] : jobs)
        save_image(enhance::enhancer_forward(load_image(src), model), dst);
    log.info("enhance apply: " + std::to_string(jobs.size()) + " images -> " + out.string());
    return 0;
}

/// Predicted vs opinion scores on the model's held-out contents (all
/// contents when the model has no recorded split, or with "contents": "all").
inline int eval_correlations(const RunConfig& rc, const Log& log, std::ostream& out)
{
    const json cfg = load_config(rc.config_path);
    const fs::path model_dir = require(rc.model, "--model", rc.command);
    const fs::path root = require(rc.images, "--images", rc.command);
    const auto model = iqa::load_quality_model<float>(model_dir);
    const auto manifest = load_corpus(root);
    const auto scores = load_scores(require(rc.votes, "--votes", rc.command), cfg.value("min_consistency", 0.8));
    const std::string which = cfg.value("contents", std::string("test"));
    const auto split = model_split(model_dir);
    std::set<std::string> contents;
    if (which == "all" || !split)
        contents = all_contents(manifest);
    else if (which == "test")
        contents = split->test_content_ids;
    else if (which == "train")
        contents = split->train_content_ids;
    else
        throw ValidationError("eval correlations: contents must be test, train or all");

    const auto items = iqa::training_items(manifest, root, scores, contents);
    metrics::MetricReport r;
    r.name = "correlations";
    std::vector<double> pred, target;
    for (const auto& it : items) {
        const double p = iqa::iaca_forward(it.image, model).score;
        r.per_item.emplace_back(it.id, p);
        pred.push_back(p);
        target.push_back(it.score);
    }
    r.summary = {{"srocc", metrics::srocc(pred, target)},
                 {"plcc", metrics::plcc(pred, target)},
                 {"n", static_cast<double>(items.size())}};
    log.info("eval correlations: SROCC " + fixed(r.summary["srocc"], 4) + ", PLCC " + fixed(r.summary["plcc"], 4) +
             " over " + std::to_string(items.size()) + " images");
    write_report(r, rc.output_dir, out);
    return 0;
}

/// Config: baseline_dir (required), optimized_dir (or --images). Images are
/// paired by relative path.
inline int eval_scorediff(const RunConfig& rc, const Log& log, std::ostream& out)
{
    const json cfg = load_config(rc.config_path);
    if (!cfg.contains("baseline_dir"))
        throw ValidationError("eval scorediff: config field baseline_dir is required");
    const fs::path baseline = config_relative(rc, cfg.at("baseline_dir").get<std::string>());
    fs::path optimized;
    if (rc.images)
        optimized = *rc.images;
    else if (cfg.contains("optimized_dir"))
        optimized = config_relative(rc, cfg.at("optimized_dir").get<std::string>());
    else
        throw ValidationError("eval scorediff: --images or config field optimized_dir is required");
    const auto model = iqa::load_quality_model<float>(require(rc.model, "--model", rc.command));

    std::vector<metrics::ScorePair> pairs;
    for (const auto& f : png_files(optimized))
        if (fs::exists(baseline / f))
            pairs.push_back({load_image(baseline / f), load_image(optimized / f), f.generic_string()});
    const auto r = metrics::score_diff_report(model, pairs);
    log.info("eval scorediff: " + std::to_string(pairs.size()) + " pairs, fraction_positive " +
             fixed(r.summary.at("fraction_positive"), 4));
    write_report(r, rc.output_dir, out);
    return 0;
}

inline int eval_preference(const RunConfig& rc, const Log& log, std::ostream& out)
{
    const json cfg = load_config(rc.config_path);
    const auto votes = study::read_votes_jsonl(require(rc.votes, "--votes", rc.command));
    const auto r = metrics::preference_report(votes, cfg.value("ours", std::string("ours")));
    log.info("eval preference: overall " + fixed(r.summary.at("overall"), 4));
    write_report(r, rc.output_dir, out);
    return 0;
}

// ---- dispatch ----------------------------------------------------------------

/// Parses argv and runs one subcommand. Exit codes: 0 success, 1 invalid
/// input (bad flags, config or data), 2 runtime failure.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Low-light quality assessment and enhancement toolkit", "percept-loop"};
    app.require_subcommand(1);
    RunConfig rc;
    std::string verbosity = "normal";

    std::function<int(const RunConfig&, const Log&, std::ostream&)> action;
    using Handler = int (*)(const RunConfig&, const Log&, std::ostream&);

    struct Flags {
        bool config = false, seed = false, out = false, force = false, model = false, images = false, votes = false,
             lambda = false, epochs = false, port = false;
    };
    auto command = [&](CLI::App* group, const std::string& name, const std::string& help, Flags f, Handler h) {
        auto* sub = group->add_subcommand(name, help);
        if (f.config)
            sub->add_option("--config", rc.config_path, "JSON config file (with format_version)");
        if (f.seed)
            sub->add_option("--seed", rc.seed, "seed for all randomness (overrides config seed)");
        if (f.out)
            sub->add_option("--out", rc.output_dir, "output path");
        if (f.force)
            sub->add_flag("--force", rc.force, "overwrite existing outputs");
        if (f.model)
            sub->add_option("--model", rc.model, "model directory");
        if (f.images)
            sub->add_option("--images", rc.images, "corpus or image directory");
        if (f.votes)
            sub->add_option("--votes", rc.votes, "vote log (.jsonl) or opinion-score CSV");
        if (f.lambda)
            sub->add_option("--lambda", rc.lambda, "quality-prior weight (overrides config)")->check(CLI::NonNegativeNumber);
        if (f.epochs)
            sub->add_option("--epochs", rc.epochs, "training epochs (overrides config)")->check(CLI::PositiveNumber);
        if (f.port)
            sub->add_option("--port", rc.port, "listen port")->check(CLI::Range(1, 65535));
        sub->add_option("--verbosity", verbosity, "quiet | normal | debug")
            ->check(CLI::IsMember({"quiet", "normal", "debug"}));
        sub->callback([&, group, name, h] {
            rc.command = group->get_name() + " " + name;
            action = h;
        });
    };

    auto* corpus = app.add_subcommand("corpus", "synthetic corpus generation")->require_subcommand(1);
    auto* study_g = app.add_subcommand("study", "pairwise subjective study")->require_subcommand(1);
    auto* iqa_g = app.add_subcommand("iqa", "quality model training and scoring")->require_subcommand(1);
    auto* enh = app.add_subcommand("enhance", "enhancer training and inference")->require_subcommand(1);
    auto* eval = app.add_subcommand("eval", "evaluation reports")->require_subcommand(1);

    command(corpus, "synth", "generate reference, low-light and degraded images", {.config = true, .seed = true, .out = true, .force = true}, corpus_synth);
    command(study_g, "serve", "serve the session HTTP API", {.config = true, .seed = true, .out = true, .images = true, .port = true}, study_serve);
    command(study_g, "simulate", "simulate votes with the logistic SSIM observer", {.config = true, .seed = true, .out = true, .force = true, .images = true}, study_simulate);
    command(study_g, "aggregate", "vote log to opinion-score CSV", {.config = true, .out = true, .votes = true}, study_aggregate);
    command(iqa_g, "train", "train the quality model", {.config = true, .seed = true, .out = true, .force = true, .images = true, .votes = true, .epochs = true}, iqa_train);
    command(iqa_g, "score", "score every PNG under a directory", {.config = true, .out = true, .model = true, .images = true}, iqa_score);
    command(enh, "train", "train an enhancer against a frozen quality model", {.config = true, .seed = true, .out = true, .force = true, .model = true, .images = true, .lambda = true, .epochs = true}, enhance_train);
    command(enh, "apply", "run an enhancer over images", {.config = true, .out = true, .model = true, .images = true}, enhance_apply);
    command(eval, "correlations", "SROCC / PLCC of predictions against opinion scores", {.config = true, .out = true, .model = true, .images = true, .votes = true}, eval_correlations);
    command(eval, "scorediff", "quality-score differences between two image sets", {.config = true, .out = true, .model = true, .images = true}, eval_scorediff);
    command(eval, "preference", "preference percentages for one method over another", {.config = true, .out = true, .votes = true}, eval_preference);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }
    rc.verbosity = verbosity == "quiet" ? Verbosity::quiet : verbosity == "debug" ? Verbosity::debug : Verbosity::normal;
    const Log log(err, rc.verbosity);
    try {
        return action(rc, log, out);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const nlohmann::json::exception& e) {
        err << "error: malformed input: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    std::vector<const char*> argv;
    argv.push_back("percept-loop");
    for (const auto& a : args)
        argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace percept_loop::cli
