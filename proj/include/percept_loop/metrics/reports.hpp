#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "percept_loop/core/util.hpp"
#include "percept_loop/dataio/image.hpp"
#include "percept_loop/iqa/model.hpp"
#include "percept_loop/study/vote.hpp"

namespace percept_loop::metrics {

struct MetricReport {
    std::string name;
    std::vector<std::pair<std::string, double>> per_item;
    std::map<std::string, double> summary;
};

inline double mean_of(const std::vector<double>& v)
{
    if (v.empty())
        throw ValidationError("mean of empty sequence");
    double s = 0.0;
    for (double x : v)
        s += x;
    return s / static_cast<double>(v.size());
}

inline double median_of(std::vector<double> v)
{
    if (v.empty())
        throw ValidationError("median of empty sequence");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double fraction_above(const std::vector<double>& v, double threshold)
{
    if (v.empty())
        return 0.0;
    const auto n = std::count_if(v.begin(), v.end(), [&](double x) { return x > threshold; });
    return static_cast<double>(n) / static_cast<double>(v.size());
}

inline std::vector<double> values_of(const MetricReport& r)
{
    std::vector<double> out;
    out.reserve(r.per_item.size());
    for (const auto& [id, v] : r.per_item)
        out.push_back(v);
    return out;
}

struct ScorePair {
    ImageBuffer baseline;
    ImageBuffer optimized;
    std::string id;
};

/// Per item: score(optimized) - score(baseline) under the given quality model.
template <typename T>
MetricReport score_diff_report(const iqa::QualityModel<T>& model, const std::vector<ScorePair>& pairs)
{
    if (pairs.empty())
        throw ValidationError("score_diff_report: no pairs");
    MetricReport r;
    r.name = "score_diff";
    for (const auto& p : pairs) {
        const double d = iqa::iaca_forward(p.optimized, model).score - iqa::iaca_forward(p.baseline, model).score;
        r.per_item.emplace_back(p.id, d);
    }
    const auto v = values_of(r);
    r.summary = {{"mean", mean_of(v)}, {"median", median_of(v)}, {"fraction_positive", fraction_above(v, 0.0)}};
    return r;
}

/// Share of votes preferring `ours` over the single other method, per image
/// ("image:<content>") and per subject ("subject:<study>/<subject>").
/// Sanity repeats are skipped. "overall" pools all votes, so it weights
/// images by their vote count.
inline MetricReport preference_report(const std::vector<study::VoteRecord>& votes, const std::string& ours = "ours")
{
    std::set<std::string> methods;
    for (const auto& v : votes) {
        methods.insert(v.method_a);
        methods.insert(v.method_b);
    }
    if (methods.size() > 2)
        throw ValidationError("preference_report: votes span more than two methods");
    if (!methods.count(ours))
        throw ValidationError("preference_report: no votes involve method '" + ours + "'");

    std::map<std::string, std::pair<long, long>> by_image, by_subject; // (favouring, total)
    long favour = 0, total = 0;
    for (const auto& v : votes) {
        if (v.is_sanity)
            continue;
        const long win = v.preferred() == ours ? 1 : 0;
        auto& im = by_image[v.content_id];
        auto& su = by_subject[v.study_id + "/" + v.subject_id];
        im.first += win, ++im.second;
        su.first += win, ++su.second;
        favour += win, ++total;
    }
    if (total == 0)
        throw ValidationError("preference_report: no non-sanity votes");

    MetricReport r;
    r.name = "preference";
    std::vector<double> subject_values;
    for (const auto& [id, c] : by_image)
        r.per_item.emplace_back("image:" + id, static_cast<double>(c.first) / static_cast<double>(c.second));
    for (const auto& [id, c] : by_subject) {
        const double p = static_cast<double>(c.first) / static_cast<double>(c.second);
        r.per_item.emplace_back("subject:" + id, p);
        subject_values.push_back(p);
    }
    r.summary = {{"overall", static_cast<double>(favour) / static_cast<double>(total)},
                 {"fraction_subjects_above_half", fraction_above(subject_values, 0.5)},
                 {"votes", static_cast<double>(total)}};
    return r;
}

inline nlohmann::ordered_json to_json(const MetricReport& r)
{
    nlohmann::ordered_json items = nlohmann::ordered_json::array();
    for (const auto& [id, v] : r.per_item)
        items.push_back({{"id", id}, {"value", v}});
    nlohmann::ordered_json summary = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.summary)
        summary[k] = v;
    return {{"name", r.name}, {"per_item", items}, {"summary", summary}};
}

inline std::string report_csv(const MetricReport& r)
{
    std::ostringstream os;
    os << "id,value\n";
    for (const auto& [id, v] : r.per_item)
        os << id << ',' << fixed(v, 6) << '\n';
    return os.str();
}

} // namespace percept_loop::metrics
