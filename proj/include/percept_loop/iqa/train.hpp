#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "percept_loop/dataio/corpus.hpp"
#include "percept_loop/iqa/model.hpp"
#include "percept_loop/iqa/model_io.hpp"
#include "percept_loop/iqa/norm_in_norm.hpp"

namespace percept_loop::iqa {

struct IqaTrainConfig {
    int epochs = 100;
    int batch_size = 32;
    double learning_rate = 1e-4;
    int crop_size = 224; // 0 trains on whole images
    int max_steps = 0;   // 0 = no cap beyond epochs
};

inline nlohmann::json to_json(const IqaTrainConfig& c)
{
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"crop_size", c.crop_size},
            {"max_steps", c.max_steps}};
}

inline IqaTrainConfig iqa_train_config_from_json(const nlohmann::json& j, IqaTrainConfig c = {})
{
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.crop_size = j.value("crop_size", c.crop_size);
    c.max_steps = j.value("max_steps", c.max_steps);
    if (c.epochs < 1 || c.batch_size < 2 || !(c.learning_rate > 0.0) || c.crop_size < 0 || c.max_steps < 0)
        throw ValidationError("iqa training config: epochs >= 1, batch_size >= 2, learning_rate > 0 required");
    return c;
}

struct TrainItem {
    ImageBuffer image;
    double score = 0.0;
    std::string id;
};

struct IqaStepLog {
    long long step = 0;
    int epoch = 0;
    double loss = 0.0;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Sum of Norm-in-Norm losses on the final score and both sub-scale scores,
/// weighted by `aux_loss_weights`. Single-scale models drop the stage-4 term.
template <typename T>
Var<T> iqa_training_loss(const QualityModel<T>& model, const std::vector<Var<T>>& images, std::span<const double> targets)
{
    std::vector<Var<T>> final_s, s1, s2;
    for (const auto& img : images) {
        auto out = iaca_forward_graph(img, model);
        final_s.push_back(out.score);
        s1.push_back(out.score_s1);
        s2.push_back(out.score_s2);
    }
    const auto& w = model.config.aux_loss_weights;
    auto loss = ad::scale(norm_in_norm_loss(ad::stack(final_s), targets), static_cast<T>(w[0]));
    if (model.config.use_multi_scale)
        loss = ad::add(loss, ad::scale(norm_in_norm_loss(ad::stack(s1), targets), static_cast<T>(w[1])));
    loss = ad::add(loss, ad::scale(norm_in_norm_loss(ad::stack(s2), targets), static_cast<T>(w[2])));
    return loss;
}

/// Continues training an initialised model; see train_iqa.
/// Least-squares fit of opinion scores on raw predictions over `items`.
/// A non-positive slope would flip rankings, so the identity is kept then.
template <typename T>
void calibrate_scores(QualityModel<T>& model, const std::vector<TrainItem>& items)
{
    model.calibration = {};
    const auto n = static_cast<double>(items.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& item : items) {
        const double x = iaca_forward(item.image, model).score;
        sx += x;
        sy += item.score;
        sxx += x * x;
        sxy += x * item.score;
    }
    const double vx = sxx - sx * sx / n;
    const double cxy = sxy - sx * sy / n;
    if (!(vx > 0.0) || !(cxy > 0.0))
        return;
    const double a = cxy / vx;
    model.calibration = {a, (sy - a * sx) / n};
}

template <typename T>
QualityModel<T> train_iqa_from(QualityModel<T> model, const std::vector<TrainItem>& items, const IqaTrainConfig& hyper,
                               std::uint64_t seed, const std::function<void(const IqaStepLog&)>& on_step = {})
{
    if (items.size() < 2)
        throw ValidationError("train_iqa: need at least two training items");
    model.params.set_trainable(true);
    Adam<T> adam(model.params);
    auto rng = make_rng(seed, {0x7a17});
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(hyper.batch_size), items.size());

    long long step = 0;
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start + 2 <= order.size(); start += batch) {
            if (hyper.max_steps > 0 && step >= hyper.max_steps)
                break;
            const std::size_t end = std::min(order.size(), start + batch);
            std::vector<Var<T>> images;
            std::vector<double> targets;
            for (std::size_t k = start; k < end; ++k) {
                const auto& item = items[order[k]];
                const ImageBuffer& src = item.image;
                const bool whole = hyper.crop_size == 0 ||
                                   (hyper.crop_size == src.height() && hyper.crop_size == src.width());
                ImageBuffer patch = whole ? src
                                          : crop_patch(src, hyper.crop_size,
                                                       derive_seed(seed, {static_cast<std::uint64_t>(step), k}));
                images.push_back(Var<T>::constant(patch.to_tensor<T>()));
                targets.push_back(item.score);
            }
            if (std::all_of(targets.begin(), targets.end(), [&](double t) { return t == targets[0]; }))
                continue; // no ranking signal in this batch
            model.params.zero_grad();
            auto loss = iqa_training_loss(model, images, targets);
            const double lv = static_cast<double>(loss.item());
            if (!std::isfinite(lv)) {
                std::ostringstream os;
                os << "train_iqa: non-finite loss at step " << step << " (epoch " << epoch << ")";
                throw TrainingError(os.str());
            }
            loss.backward();
            adam.step(hyper.learning_rate);
            if (on_step)
                on_step({step, epoch, lv});
            ++step;
        }
        if (hyper.max_steps > 0 && step >= hyper.max_steps)
            break;
    }

    calibrate_scores(model, items);
    double q_max = -std::numeric_limits<double>::infinity();
    for (const auto& item : items)
        q_max = std::max(q_max, iaca_forward(item.image, model).score);
    model.q_max = q_max;
    return model;
}

/// Mini-batch Adam on the combined Norm-in-Norm loss over seeded random crops.
/// After training, q_max is the largest final score over the full-size
/// training images. Single-threaded and deterministic given the seed.
template <typename T>
QualityModel<T> train_iqa(const std::vector<TrainItem>& items, const IacaConfig& config, const IqaTrainConfig& hyper,
                          std::uint64_t seed, const std::string& split_digest = "",
                          const std::function<void(const IqaStepLog&)>& on_step = {})
{
    if (items.size() < 2)
        throw ValidationError("train_iqa: need at least two training items");
    QualityModel<T> model = init_quality_model<T>(config, seed);
    model.train_split_digest = split_digest;
    if (config.backbone.pretrained_weights_path)
        load_backbone_weights(model, *config.backbone.pretrained_weights_path);
    return train_iqa_from(std::move(model), items, hyper, seed, on_step);
}

/// Training items for the given contents: every enhanced entry paired with its
/// opinion score. Images are loaded relative to `root`.
inline std::vector<TrainItem> training_items(const CorpusManifest& manifest, const std::filesystem::path& root,
                                             const std::map<std::pair<std::string, std::string>, double>& scores,
                                             const std::set<std::string>& contents)
{
    std::vector<TrainItem> items;
    for (const auto& e : manifest.entries) {
        if (e.role != Role::enhanced || !contents.count(e.content_id))
            continue;
        auto it = scores.find({e.content_id, *e.method_id});
        if (it == scores.end())
            continue;
        items.push_back({load_image(root / e.path), it->second, e.content_id + "/" + *e.method_id});
    }
    return items;
}

} // namespace percept_loop::iqa
