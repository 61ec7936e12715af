// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 1). Pass criterion names (A1 ... A10)
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "percept_loop/cli/app.hpp"
#include "percept_loop/dataio/corpus.hpp"
#include "percept_loop/enhance/train.hpp"
#include "percept_loop/iqa/model_io.hpp"
#include "percept_loop/iqa/train.hpp"
#include "percept_loop/metrics/correlation.hpp"
#include "percept_loop/metrics/ssim.hpp"
#include "percept_loop/study/aggregate.hpp"
#include "percept_loop/study/simulate.hpp"

namespace fs = std::filesystem;
using namespace percept_loop;
using ad::Var;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int d = 6) { return fixed(v, d); }

fs::path scratch(const std::string& name)
{
    const auto p = fs::temp_directory_path() / ("percept_acceptance_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// ---- A1 -------------------------------------------------------------------

Outcome a1()
{
    const std::vector<std::string> methods = {"CRM", "EnlightenGAN", "JED", "MF", "MR",
                                              "DRD", "Self-supervised", "DRBN", "SRIE", "ZeroDCE"};
    const std::vector<std::vector<long>> counts = {
        {0, 14, 19, 18, 29, 30, 19, 15, 22, 19}, {16, 0, 22, 22, 30, 30, 29, 15, 19, 14},
        {11, 8, 0, 9, 18, 23, 15, 9, 14, 11},    {12, 8, 21, 0, 30, 30, 22, 14, 16, 13},
        {1, 0, 12, 0, 0, 30, 11, 11, 5, 0},      {0, 0, 7, 0, 0, 0, 2, 9, 2, 2},
        {11, 1, 15, 8, 19, 28, 0, 15, 7, 3},     {15, 15, 21, 16, 19, 21, 15, 0, 2, 11},
        {8, 11, 16, 14, 25, 28, 23, 28, 0, 14},  {11, 16, 19, 17, 30, 28, 27, 19, 16, 0}};
    const std::vector<std::string> expected = {"0.6852", "0.7296", "0.4370", "0.6148", "0.2593",
                                               "0.0815", "0.3963", "0.5000", "0.6185", "0.6778"};
    const auto votes = study::votes_from_counts("table", "img", methods, counts, 30);
    const auto t = study::tally(votes, methods, "img");
    const auto os = study::opinion_scores(t);
    std::ostringstream bad;
    for (std::size_t i = 0; i < methods.size(); ++i) {
        if (os[i].method_id != methods[i] || fixed(os[i].score, 4) != expected[i] || os[i].total != 270)
            bad << ' ' << methods[i] << '=' << fixed(os[i].score, 4) << "/T=" << os[i].total;
    }
    if (!bad.str().empty())
        return {false, "mismatches:" + bad.str()};
    return {true, "10/10 opinion scores match to 4 dp, T=270"};
}

// ---- A2 -------------------------------------------------------------------

Outcome a2()
{
    std::mt19937_64 rng(20240601);
    std::size_t pairs_checked = 0;
    for (int study_i = 0; study_i < 200; ++study_i) {
        const int m = std::uniform_int_distribution<int>(3, 10)(rng);
        const int n = std::uniform_int_distribution<int>(5, 30)(rng);
        std::vector<std::string> methods;
        std::vector<double> d;
        for (int k = 0; k < m; ++k) {
            methods.push_back("m" + std::to_string(k));
            d.push_back(std::uniform_real_distribution<double>(0.0, 0.5)(rng));
        }
        const auto votes = study::simulate_pairwise("s" + std::to_string(study_i), "c", methods, d, n, 0.05, rng);
        // Permuted method order must give the same per-method scores.
        auto shuffled = methods;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        const auto t = study::tally(votes, shuffled, "c");
        for (int r = 0; r < m; ++r) {
            if (t.counts[r][r] != 0)
                return {false, "non-zero diagonal in study " + std::to_string(study_i)};
            for (int c = r + 1; c < m; ++c, ++pairs_checked)
                if (t.counts[r][c] + t.counts[c][r] != n)
                    return {false, "antisymmetry violated in study " + std::to_string(study_i)};
        }
        const auto os = study::opinion_scores(t);
        long long wins = 0;
        double sum = 0.0;
        for (const auto& s : os) {
            wins += s.winning_times;
            sum += s.score;
        }
        if (wins * 2 != static_cast<long long>(n) * m * (m - 1) || std::abs(sum - m / 2.0) > 1e-12)
            return {false, "score sum " + fmt(sum, 15) + " != M/2 in study " + std::to_string(study_i)};
    }
    return {true, "200 studies, " + std::to_string(pairs_checked) + " pairs antisymmetric, sums = M/2"};
}

// ---- A3 -------------------------------------------------------------------

// Independent oracles: rank by counting, Pearson in long double.
long double brute_pearson(const std::vector<double>& a, const std::vector<double>& b)
{
    const std::size_t n = a.size();
    long double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i)
        ma += a[i], mb += b[i];
    ma /= n, mb /= n;
    long double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

std::vector<double> brute_ranks(const std::vector<double>& v)
{
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double less = 0, equal = 0;
        for (double x : v) {
            less += x < v[i];
            equal += x == v[i];
        }
        r[i] = less + (equal + 1.0) / 2.0;
    }
    return r;
}

Outcome a3()
{
    using V = std::vector<double>;
    const double s08 = metrics::srocc(V{1, 2, 3, 4}, V{1, 3, 2, 4});
    const double s1 = metrics::srocc(V{1, 2, 3}, V{10, 20, 30});
    const double sm1 = metrics::srocc(V{1, 2, 3}, V{3, 2, 1});
    const double p1 = metrics::plcc(V{1, 2, 3, 5}, V{3, 5, 7, 11});
    const double pm1 = metrics::plcc(V{1, 2, 3, 5}, V{-1, -2, -3, -5});
    if (s08 != 0.8 || s1 != 1.0 || sm1 != -1.0 || p1 != 1.0 || pm1 != -1.0)
        return {false, "fixed examples: " + fmt(s08, 17) + " " + fmt(s1, 17) + " " + fmt(sm1, 17) + " " +
                           fmt(p1, 17) + " " + fmt(pm1, 17)};

    std::mt19937_64 rng(777);
    double worst = 0.0;
    int with_ties = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(3, 20)(rng);
        const bool ties = trial % 10 < 3;
        V a(n), b(n);
        do {
            for (std::size_t i = 0; i < n; ++i) {
                if (ties) {
                    a[i] = std::uniform_int_distribution<int>(0, 3)(rng);
                    b[i] = std::uniform_int_distribution<int>(0, 3)(rng);
                } else {
                    a[i] = std::normal_distribution<double>()(rng);
                    b[i] = std::normal_distribution<double>()(rng);
                }
            }
        } while (std::all_of(a.begin(), a.end(), [&](double x) { return x == a[0]; }) ||
                 std::all_of(b.begin(), b.end(), [&](double x) { return x == b[0]; }));
        with_ties += ties;
        worst = std::max(worst, std::abs(metrics::plcc(a, b) - static_cast<double>(brute_pearson(a, b))));
        worst = std::max(worst, std::abs(metrics::srocc(a, b) -
                                         static_cast<double>(brute_pearson(brute_ranks(a), brute_ranks(b)))));
    }
    if (worst > 1e-10)
        return {false, "max deviation from brute force " + fmt(worst, 15)};
    return {true, "fixed examples exact; 100 vectors (" + std::to_string(with_ties) + " with ties), max dev " +
                      fmt(worst, 17)};
}

// ---- A4 -------------------------------------------------------------------

ImageBuffer random_image(int h, int w, std::mt19937_64& rng)
{
    ImageBuffer img(h, w);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                img.set(c, y, x, u(rng));
    return img;
}

ImageBuffer add_noise(const ImageBuffer& img, double sigma, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    ImageBuffer out = img;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x)
                out.set(c, y, x, static_cast<float>(std::clamp(img(c, y, x) + n(rng), 0.0, 1.0)));
    return out;
}

Outcome a4()
{
    std::mt19937_64 rng(4);
    double worst_id = 0.0, worst_sym = 0.0;
    for (int i = 0; i < 20; ++i) {
        const int h = std::uniform_int_distribution<int>(11, 48)(rng);
        const int w = std::uniform_int_distribution<int>(11, 48)(rng);
        const auto x = random_image(h, w, rng);
        const auto y = random_image(h, w, rng);
        worst_id = std::max(worst_id, std::abs(metrics::ssim(x, x) - 1.0));
        worst_sym = std::max(worst_sym, std::abs(metrics::ssim(x, y) - metrics::ssim(y, x)));
    }
    const auto base = synthesize_base_image(64, 64, 11);
    double prev = 1.0;
    std::string values;
    bool monotone = true;
    for (double sigma : {0.01, 0.05, 0.1}) {
        const double v = metrics::ssim(base, add_noise(base, sigma, 99));
        values += " " + fmt(v, 6);
        monotone = monotone && v < prev;
        prev = v;
    }
    const bool ok = worst_id <= 1e-9 && worst_sym <= 1e-12 && monotone;
    return {ok, "identity dev " + fmt(worst_id, 15) + ", symmetry dev " + fmt(worst_sym, 15) + ", noise ladder" + values};
}

// ---- A5 -------------------------------------------------------------------

struct GradCheck {
    double error = 0.0;      // norm-based relative error over checked coordinates
    std::size_t checked = 0;
    std::size_t straddled = 0; // skipped: a kink lies inside [x-h, x+h]
};

/// Compares analytic and central-difference gradients over a sample of
/// coordinates of the given leaves. A coordinate whose forward and backward
/// one-sided differences disagree has a ReLU/abs/max kink inside the
/// stencil; the central difference there is not a derivative, so it is
/// counted and skipped rather than compared.
GradCheck grad_check(std::vector<Var<double>> leaves, const std::function<Var<double>()>& loss_fn,
                     std::mt19937_64& rng, std::size_t per_leaf, std::size_t extra)
{
    for (auto& l : leaves)
        l.zero_grad();
    const double f0 = loss_fn().item();
    loss_fn().backward();
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    std::size_t total = 0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        const std::size_t n = leaves[li].value().size();
        total += n;
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t k = 0; k < std::min(per_leaf, n); ++k)
            coords.emplace_back(li, idx[k]);
    }
    for (std::size_t k = 0; k < extra; ++k) {
        std::size_t flat = std::uniform_int_distribution<std::size_t>(0, total - 1)(rng), li = 0;
        while (flat >= leaves[li].value().size())
            flat -= leaves[li++].value().size();
        coords.emplace_back(li, flat);
    }
    const double h = 1e-6;
    double gnorm = 0.0;
    for (auto [li, i] : coords) {
        const Tensor<double>& g = std::as_const(leaves[li]).grad();
        const double a = g.empty() ? 0.0 : g.data()[i];
        gnorm += a * a;
    }
    // Below this, one-sided differences are dominated by rounding.
    const double floor = 1e-6 * std::sqrt(gnorm);
    GradCheck r;
    double diff2 = 0.0, a2n = 0.0, n2n = 0.0;
    for (auto [li, i] : coords) {
        const Tensor<double>& g = std::as_const(leaves[li]).grad();
        const double analytic = g.empty() ? 0.0 : g.data()[i];
        double& v = leaves[li].mutable_value().data()[i];
        const double orig = v;
        v = orig + h;
        const double fp = loss_fn().item();
        v = orig - h;
        const double fm = loss_fn().item();
        v = orig;
        const double fwd = (fp - f0) / h, bwd = (f0 - fm) / h;
        if (std::abs(fwd - bwd) > 1e-3 * (std::abs(fwd) + std::abs(bwd)) + floor) {
            ++r.straddled;
            continue;
        }
        const double numeric = (fp - fm) / (2 * h);
        ++r.checked;
        diff2 += (analytic - numeric) * (analytic - numeric);
        a2n += analytic * analytic;
        n2n += numeric * numeric;
    }
    r.error = std::sqrt(diff2) / std::max({std::sqrt(a2n), std::sqrt(n2n), 1e-12});
    return r;
}

std::vector<Var<double>> leaves_of(const ParamStore<double>& ps)
{
    std::vector<Var<double>> out;
    for (const auto& p : ps.entries())
        out.push_back(p.var);
    return out;
}

/// Fresh models have zero biases, so a ReLU fed by an all-zero pixel sits
/// exactly on its kink. Small random biases move the check to a point where
/// the loss is differentiable.
void jitter_biases(ParamStore<double>& ps, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (auto& e : ps.entries())
        if (e.name.ends_with(".b"))
            for (double& v : e.var.mutable_value().data())
                v = u(rng);
}

Outcome a5()
{
    double worst_nin = 0.0, worst_iqa = 0.0, worst_comb = 0.0;
    std::size_t checked = 0, straddled = 0;
    auto take = [&](double& worst, const GradCheck& r) {
        worst = std::max(worst, r.error);
        checked += r.checked;
        straddled += r.straddled;
    };
    bool frozen_ok = true;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        std::mt19937_64 rng(seed * 7919);
        // (a) Norm-in-Norm on a batch of 8 predictions.
        std::vector<double> targets(8);
        Tensor<double> p(8, 1, 1);
        std::normal_distribution<double> nd;
        for (int i = 0; i < 8; ++i) {
            targets[i] = nd(rng);
            p[i] = nd(rng);
        }
        auto preds = Var<double>::leaf(p, true);
        take(worst_nin, grad_check({preds}, [&] { return iqa::norm_in_norm_loss(preds, targets); }, rng, 8, 0));

        // (b) IACA training loss, tiny configuration, all aux terms.
        auto model = iqa::init_quality_model<double>(iqa::IacaConfig::tiny(), seed);
        jitter_biases(model.params, rng);
        std::vector<Var<double>> imgs;
        std::vector<double> t;
        for (int i = 0; i < 3; ++i) {
            imgs.push_back(Var<double>::constant(random_image(64, 64, rng).to_tensor<double>()));
            t.push_back(nd(rng));
        }
        take(worst_iqa,
             grad_check(leaves_of(model.params), [&] { return iqa::iqa_training_loss(model, imgs, t); }, rng, 3, 100));

        // (c) combined loss through a tiny enhancer and the frozen model.
        auto frozen = enhance::frozen_copy(model);
        frozen.q_max = 0.5;
        enhance::EnhancerArch arch{4, 4, 9, 1, 5};
        auto enh = enhance::init_enhancer<double>(arch, seed);
        jitter_biases(enh.params, rng);
        const auto low = Var<double>::constant(random_image(64, 64, rng).to_tensor<double>());
        const auto ref = Var<double>::constant(random_image(64, 64, rng).to_tensor<double>());
        take(worst_comb, grad_check(leaves_of(enh.params),
                                    [&] { return enhance::combined_loss(low, ref, enh, frozen, 0.5); }, rng, 3, 60));
        for (const auto& fp : frozen.params.entries())
            frozen_ok = frozen_ok && (std::as_const(fp.var).grad().empty() ||
                                      std::all_of(fp.var.grad().data().begin(), fp.var.grad().data().end(),
                                                  [](double g) { return g == 0.0; }));
    }
    // Skipping is only legitimate while kinks are rare.
    const bool few_kinks = straddled * 10 <= checked + straddled;
    const bool ok = worst_nin < 1e-5 && worst_iqa < 1e-5 && worst_comb < 1e-5 && frozen_ok && few_kinks;
    return {ok, "max relative error: norm-in-norm " + fmt(worst_nin, 10) + ", IACA loss " + fmt(worst_iqa, 10) +
                    ", combined " + fmt(worst_comb, 10) + "; " + std::to_string(checked) + " coordinates checked, " +
                    std::to_string(straddled) + " skipped at kinks" +
                    (frozen_ok ? "" : "; frozen model received gradients")};
}

// ---- A6 -------------------------------------------------------------------

struct SmallCorpus {
    fs::path root;
    CorpusManifest manifest;
    std::map<std::pair<std::string, std::string>, double> scores;
};

SmallCorpus make_scored_corpus(const std::string& name, std::size_t contents, std::vector<std::string> keep_methods,
                               std::uint64_t seed)
{
    SmallCorpus c;
    c.root = scratch(name);
    auto cfg = default_degradation_config();
    if (!keep_methods.empty()) {
        std::vector<RecipeSpec> kept;
        for (const auto& m : cfg.methods)
            if (std::find(keep_methods.begin(), keep_methods.end(), m.method_id) != keep_methods.end())
                kept.push_back(m);
        cfg.methods = kept;
    }
    cfg.synthetic = {static_cast<int>(contents), 64, 64};
    const auto bases = synthesize_base_images(cfg.synthetic, derive_seed(seed, {0xba5e}));
    c.manifest = generate_degraded_corpus(bases, cfg, seed, c.root, 1);
    study::SimulationConfig sc;
    const auto votes = study::simulate_votes(c.manifest, c.root, sc, seed);
    for (const auto& s : study::aggregate_votes(votes).scores)
        c.scores[{s.content_id, s.method_id}] = s.score;
    return c;
}

double training_srocc(const iqa::QualityModel<float>& m, const std::vector<iqa::TrainItem>& items)
{
    std::vector<double> p, t;
    for (const auto& it : items) {
        p.push_back(iqa::iaca_forward(it.image, m).score);
        t.push_back(it.score);
    }
    return metrics::srocc(p, t);
}

Outcome a6()
{
    const auto corpus = make_scored_corpus("a6", 8, {"mild_noise", "heavy_noise", "blurry", "color_cast"}, 6);
    const auto ids = corpus.manifest.content_ids();
    const auto items = iqa::training_items(corpus.manifest, corpus.root, corpus.scores, {ids.begin(), ids.end()});
    if (items.size() != 32)
        return {false, "expected 32 training images, got " + std::to_string(items.size())};
    iqa::IqaTrainConfig hyper;
    hyper.epochs = 200;
    hyper.batch_size = 32;
    hyper.learning_rate = 3e-3;
    hyper.crop_size = 0;
    hyper.max_steps = 200;

    auto run = [&](bool illumination, long long& steps_used, double& best) {
        auto cfg = iqa::IacaConfig::tiny();
        cfg.use_illumination = illumination;
        long long steps = 0;
        auto model = iqa::train_iqa<float>(items, cfg, hyper, 6, "", [&](const iqa::IqaStepLog& s) { steps = s.step + 1; });
        steps_used = steps;
        best = training_srocc(model, items);
        return model;
    };
    long long steps_on = 0, steps_off = 0;
    double srocc_on = 0.0, srocc_off = 0.0;
    const auto on = run(true, steps_on, srocc_on);
    const auto off = run(false, steps_off, srocc_off);
    const bool differ = iqa::iaca_forward(items[0].image, on).score != iqa::iaca_forward(items[0].image, off).score;
    const bool ok = srocc_on >= 0.95 && srocc_off >= 0.95 && steps_on <= 200 && steps_off <= 200 && differ;
    return {ok, "training SROCC with illumination " + fmt(srocc_on, 4) + " (" + std::to_string(steps_on) +
                    " steps), without " + fmt(srocc_off, 4) + " (" + std::to_string(steps_off) + " steps)"};
}

// ---- A7 -------------------------------------------------------------------

Outcome a7()
{
    std::mt19937_64 rng(7);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(2, 64)(rng);
        std::vector<double> t(n), p(n);
        do {
            for (auto& v : t)
                v = std::normal_distribution<double>()(rng);
        } while (std::all_of(t.begin(), t.end(), [&](double v) { return v == t[0]; }));
        const double a = std::exp(std::uniform_real_distribution<double>(-5.0, 5.0)(rng));
        const double b = std::uniform_real_distribution<double>(-10.0, 10.0)(rng);
        for (std::size_t k = 0; k < n; ++k)
            p[k] = a * t[k] + b;
        worst = std::max(worst, iqa::norm_in_norm_loss(p, t));
        // The graph version must agree.
        Tensor<double> pt(static_cast<int>(n), 1, 1);
        for (std::size_t k = 0; k < n; ++k)
            pt[k] = p[k];
        worst = std::max(worst, iqa::norm_in_norm_loss(Var<double>::constant(pt), t).item());
    }
    return {worst <= 1e-6, "max loss over 100 affine draws " + fmt(worst, 12)};
}

// ---- A8 -------------------------------------------------------------------

Outcome a8()
{
    const std::uint64_t seed = 8;
    const auto corpus = make_scored_corpus("a8", 120, {}, seed);
    const auto split = split_by_content(corpus.manifest, 0.5, derive_seed(seed, {0x5b}));
    const auto items = iqa::training_items(corpus.manifest, corpus.root, corpus.scores, split.train_content_ids);

    iqa::IqaTrainConfig hyper;
    // Random crops keep the tiny model from memorising whole images; the
    // enhancer can only follow a scorer that generalises to unseen content.
    hyper.epochs = 200;
    hyper.batch_size = 32;
    hyper.learning_rate = 1e-3;
    hyper.crop_size = 48;
    const auto iqa_model = iqa::train_iqa<float>(items, iqa::IacaConfig::tiny(), hyper, seed, split.digest());

    const auto held_items = iqa::training_items(corpus.manifest, corpus.root, corpus.scores, split.test_content_ids);
    std::vector<double> hp, ht;
    for (const auto& it : held_items) {
        hp.push_back(iqa::iaca_forward(it.image, iqa_model).score);
        ht.push_back(it.score);
    }
    const double held_srocc = metrics::srocc(hp, ht);

    enhance::EnhanceTrainConfig ec;
    ec.epochs = 40;
    ec.decay_epoch = 20;
    ec.initial_lr = 1e-3;
    ec.crop_size = 48;
    ec.batch_size = 16;
    const auto train_pairs = enhance::enhancement_pairs(corpus.manifest, corpus.root, split.train_content_ids);
    ec.lambda = 0.0;
    const auto plain = enhance::train_enhancer<float>(train_pairs, iqa_model, ec, seed);
    ec.lambda = 5e-3;
    const auto guided = enhance::train_enhancer<float>(train_pairs, iqa_model, ec, seed);

    const auto test_pairs = enhance::enhancement_pairs(corpus.manifest, corpus.root, split.test_content_ids);
    std::size_t wins = 0;
    double ssim_plain = 0.0, ssim_guided = 0.0;
    for (const auto& p : test_pairs) {
        const auto a = enhance::enhancer_forward(p.low, plain);
        const auto b = enhance::enhancer_forward(p.low, guided);
        wins += iqa::iaca_forward(b, iqa_model).score > iqa::iaca_forward(a, iqa_model).score;
        ssim_plain += metrics::ssim(a, p.reference);
        ssim_guided += metrics::ssim(b, p.reference);
    }
    const double frac = static_cast<double>(wins) / static_cast<double>(test_pairs.size());
    const auto n = static_cast<double>(test_pairs.size());
    return {test_pairs.size() >= 50 && frac >= 0.6,
            "lambda>0 scores higher on " + std::to_string(wins) + "/" + std::to_string(test_pairs.size()) + " (" +
                fmt(100 * frac, 1) + "%) held-out images; IQA held-out SROCC " + fmt(held_srocc, 3) +
                "; mean SSIM " + fmt(ssim_plain / n, 4) + " vs " + fmt(ssim_guided / n, 4)};
}

// ---- A9 -------------------------------------------------------------------

int cli(const std::vector<std::string>& args)
{
    std::string cmd = std::string("PERCEPT_LOOP_THREADS=1 '") + PERCEPT_CLI_PATH + "'";
    for (const auto& a : args)
        cmd += " '" + a + "'";
    cmd += " --verbosity quiet";
    return std::system(cmd.c_str());
}

bool same_file(const fs::path& a, const fs::path& b) { return read_text_file(a) == read_text_file(b); }

Outcome a9()
{
    const auto dir = scratch("a9");
    write_text_file(dir / "corpus.json", R"({"format_version": 1,
  "low_light": {"gamma": [2.0, 3.0], "noise_sigma": [0.005, 0.02]},
  "methods": [{"id": "noisy", "noise_sigma": [0.03, 0.06]},
              {"id": "blurry", "blur_sigma": [1.0, 2.0]},
              {"id": "dim", "gamma": [1.5, 2.0]}],
  "synthetic_bases": {"count": 10, "height": 64, "width": 64}})");
    write_text_file(dir / "iqa.json", R"({"format_version": 1, "model": {"preset": "tiny"},
  "train": {"epochs": 3, "batch_size": 8, "learning_rate": 0.003, "crop_size": 48}, "test_fraction": 0.3})");
    write_text_file(dir / "enh.json", R"({"format_version": 1,
  "train": {"epochs": 2, "initial_lr": 0.001, "crop_size": 40, "batch_size": 4,
            "arch": {"width1": 8, "width2": 4}}})");

    std::string failures;
    for (const char* run : {"r1", "r2"}) {
        const auto r = dir / run;
        const std::vector<std::vector<std::string>> steps = {
            {"corpus", "synth", "--config", (dir / "corpus.json").string(), "--seed", "7", "--out", (r / "corpus").string()},
            {"study", "simulate", "--images", (r / "corpus").string(), "--seed", "7", "--out", (r / "votes.jsonl").string()},
            {"study", "aggregate", "--votes", (r / "votes.jsonl").string(), "--out", (r / "scores.csv").string()},
            {"iqa", "train", "--config", (dir / "iqa.json").string(), "--images", (r / "corpus").string(), "--votes",
             (r / "scores.csv").string(), "--seed", "7", "--out", (r / "iqa").string()},
            {"enhance", "train", "--config", (dir / "enh.json").string(), "--images", (r / "corpus").string(), "--model",
             (r / "iqa").string(), "--seed", "7", "--lambda", "0.005", "--out", (r / "enh").string()},
            {"enhance", "apply", "--model", (r / "enh").string(), "--images", (r / "corpus").string(), "--out",
             (r / "enhanced").string()},
            {"iqa", "score", "--model", (r / "iqa").string(), "--images", (r / "enhanced").string(), "--out",
             (r / "pred.csv").string()}};
        for (const auto& s : steps)
            if (cli(s) != 0)
                return {false, std::string(run) + ": command failed: " + s[0] + " " + s[1]};
    }
    const auto r1 = dir / "r1", r2 = dir / "r2";
    for (const auto& rel : {"corpus/manifest.json", "votes.jsonl", "scores.csv", "iqa/manifest.json", "iqa/params.bin",
                            "enh/manifest.json", "enh/params.bin", "pred.csv"})
        if (!same_file(r1 / rel, r2 / rel))
            failures += std::string(" ") + rel;
    for (const auto& e : load_manifest(r1 / "corpus/manifest.json").entries)
        if (!same_file(r1 / "corpus" / e.path, r2 / "corpus" / e.path))
            failures += " corpus/" + e.path;
    if (!failures.empty())
        return {false, "differs between reruns:" + failures};
    return {true, "corpus, votes, scores, IQA model, enhancer and predictions byte-identical across reruns"};
}

// ---- A10 ------------------------------------------------------------------

Outcome a10()
{
    const auto corpus = make_scored_corpus("a10", 6, {"mild_noise", "blurry", "color_cast"}, 10);
    const auto ids = corpus.manifest.content_ids();
    const std::set<std::string> all(ids.begin(), ids.end());
    iqa::IqaTrainConfig hyper;
    hyper.epochs = 3;
    hyper.batch_size = 6;
    hyper.learning_rate = 3e-3;
    hyper.crop_size = 0;
    const auto model = iqa::train_iqa<float>(iqa::training_items(corpus.manifest, corpus.root, corpus.scores, all),
                                             iqa::IacaConfig::tiny(), hyper, 10);
    const std::string before = parameter_blob(model.params);
    const double q_before = model.q_max;
    auto grads = [&] {
        std::vector<float> g;
        for (const auto& p : model.params.entries())
            g.insert(g.end(), std::as_const(p.var).grad().data().begin(), std::as_const(p.var).grad().data().end());
        return g;
    };
    const auto grads_before = grads();

    enhance::EnhanceTrainConfig ec;
    ec.epochs = 2;
    ec.decay_epoch = 1;
    ec.crop_size = 48;
    ec.batch_size = 3;
    ec.lambda = 0.5;
    ec.arch = {8, 4, 9, 1, 5};
    const auto enh = enhance::train_enhancer<float>(enhance::enhancement_pairs(corpus.manifest, corpus.root, all), model, ec, 10);
    const std::string after = parameter_blob(model.params);
    const bool grads_clean = grads() == grads_before;
    const bool ok = before == after && model.q_max == q_before && grads_clean;
    return {ok, "IACA blob " + std::string(before == after ? "byte-identical" : "CHANGED") + " (" +
                    std::to_string(before.size()) + " bytes) after enhancer training" +
                    (grads_clean ? "" : "; gradients leaked into the frozen model")};
}

} // namespace

int main(int argc, char** argv)
{
    struct Criterion {
        const char* id;
        const char* title;
        double budget_s;
        Outcome (*fn)();
    };
    const std::vector<Criterion> all = {
        {"A1", "opinion-score table reproduction", 1, a1},
        {"A2", "aggregation conservation", 10, a2},
        {"A3", "correlation oracles", 5, a3},
        {"A4", "SSIM contract", 10, a4},
        {"A5", "gradient correctness", 120, a5},
        {"A6", "IACA overfit and illumination toggle", 300, a6},
        {"A7", "Norm-in-Norm affine invariance", 1, a7},
        {"A8", "quality prior improves frozen-IQA score", 1800, a8},
        {"A9", "determinism of corpus, IQA and enhancer runs", 600, a9},
        {"A10", "frozen IQA blob unchanged by enhancer training", 120, a10},
    };
    std::set<std::string> only(argv + 1, argv + argc);
    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.id))
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs < c.budget_s;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::cout << (pass ? "PASS " : "FAIL ") << c.id << " " << c.title << ": " << o.detail << " [" << fmt(secs, 2)
                  << " s, budget " << c.budget_s << " s" << (in_time ? "" : ", OVER BUDGET") << "]" << std::endl;
    }
    fs::remove_all(fs::temp_directory_path() / ("percept_acceptance_" + std::to_string(::getpid())));
    std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criterion(s) failed" : "acceptance: all passed")
              << std::endl;
    return failed ? 1 : 0;
}
