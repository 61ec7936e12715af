#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <sstream>
#include <utility>
#include <vector>

#include "percept_loop/dataio/corpus.hpp"
#include "percept_loop/enhance/loss.hpp"
#include "percept_loop/iqa/train.hpp"

namespace percept_loop::enhance {

struct EnhanceTrainConfig {
    double lambda = 5e-3;
    int epochs = 200;
    double initial_lr = 1e-4;
    double lr_decay_factor = 0.5;
    int decay_epoch = 100;
    int crop_size = 256;
    int batch_size = 16;
    int max_steps = 0; // 0 = no cap beyond epochs
    EnhancerArch arch;

    void validate() const
    {
        if (!(lambda >= 0.0))
            throw ValidationError("enhance config: lambda must be non-negative");
        if (epochs < 1 || batch_size < 1 || crop_size < 1 || max_steps < 0)
            throw ValidationError("enhance config: epochs, batch_size and crop_size must be positive");
        if (!(initial_lr > 0.0))
            throw ValidationError("enhance config: initial_lr must be positive");
        if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
            throw ValidationError("enhance config: lr_decay_factor must be in (0,1]");
        if (decay_epoch < 1 || decay_epoch > epochs)
            throw ValidationError("enhance config: decay_epoch must be in [1, epochs]");
        arch.validate();
    }

    double learning_rate(int epoch) const { return epoch >= decay_epoch ? initial_lr * lr_decay_factor : initial_lr; }
};

inline nlohmann::json to_json(const EnhanceTrainConfig& c)
{
    return {{"lambda", c.lambda},           {"epochs", c.epochs},       {"initial_lr", c.initial_lr},
            {"lr_decay_factor", c.lr_decay_factor}, {"decay_epoch", c.decay_epoch}, {"crop_size", c.crop_size},
            {"batch_size", c.batch_size},   {"max_steps", c.max_steps}, {"arch", to_json(c.arch)}};
}

/// Missing decay_epoch defaults to half of epochs.
inline EnhanceTrainConfig enhance_train_config_from_json(const nlohmann::json& j, EnhanceTrainConfig c = {})
{
    try {
        c.lambda = j.value("lambda", c.lambda);
        c.epochs = j.value("epochs", c.epochs);
        c.initial_lr = j.value("initial_lr", c.initial_lr);
        c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
        c.decay_epoch = j.value("decay_epoch", std::max(1, c.epochs / 2));
        c.crop_size = j.value("crop_size", c.crop_size);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.max_steps = j.value("max_steps", c.max_steps);
        if (j.contains("arch"))
            c.arch = enhancer_arch_from_json(j.at("arch"));
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("enhance config: ") + e.what());
    }
}

struct EnhancePair {
    ImageBuffer low;
    ImageBuffer reference;
    std::string id;
};

struct EnhanceStepLog {
    long long step = 0;
    int epoch = 0;
    double loss = 0.0;
    double lr = 0.0;
};

/// Returns a quality model whose parameters are private copies with
/// gradients disabled, leaving the caller's model untouched.
template <typename T>
iqa::QualityModel<T> frozen_copy(const iqa::QualityModel<T>& m)
{
    iqa::QualityModel<T> f;
    f.config = m.config;
    f.params = m.params.clone();
    f.params.set_trainable(false);
    f.normalization = m.normalization;
    f.calibration = m.calibration;
    f.q_max = m.q_max;
    f.train_split_digest = m.train_split_digest;
    f.seed = m.seed;
    return f;
}

/// Adam on the batch-mean combined loss over seeded aligned crops of
/// (low, reference) pairs. Initialisation, crops and batch order depend only
/// on the seed, so runs that differ in lambda differ only in the loss.
template <typename T>
EnhancerModel<T> train_enhancer(const std::vector<EnhancePair>& pairs, const iqa::QualityModel<T>& iqa_model,
                                const EnhanceTrainConfig& config, std::uint64_t seed,
                                const std::function<void(const EnhanceStepLog&)>& on_step = {})
{
    if (pairs.empty())
        throw ValidationError("train_enhancer: no training pairs");
    config.validate();
    if (config.lambda > 0.0 && !iqa_model.has_q_max())
        throw ValidationError("train_enhancer: quality model has no q_max");
    if (config.lambda > 0.0 && config.crop_size < iqa::kMinInputSide)
        throw ValidationError("train_enhancer: crop_size " + std::to_string(config.crop_size) +
                              " is below the quality model's minimum input side");
    for (const auto& p : pairs)
        if (p.low.height() != p.reference.height() || p.low.width() != p.reference.width())
            throw ValidationError("train_enhancer: pair " + p.id + " has mismatched sizes");

    const auto frozen = frozen_copy(iqa_model);
    EnhancerModel<T> model = init_enhancer<T>(config.arch, seed);
    model.lambda = config.lambda;
    model.config_digest = fnv1a_hex(to_json(config).dump());
    Adam<T> adam(model.params);

    auto rng = make_rng(seed, {0xe7a1});
    std::vector<std::size_t> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    const auto batch = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), pairs.size());
    long long step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = config.learning_rate(epoch);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            if (config.max_steps > 0 && step >= config.max_steps)
                break;
            const std::size_t end = std::min(order.size(), start + batch);
            model.params.zero_grad();
            Var<T> total;
            for (std::size_t k = start; k < end; ++k) {
                const auto& pair = pairs[order[k]];
                const int size = std::min({config.crop_size, pair.low.height(), pair.low.width()});
                const auto off = crop_offset(pair.low.height(), pair.low.width(), size,
                                             derive_seed(seed, {static_cast<std::uint64_t>(step), k}));
                auto low = Var<T>::constant(crop_at(pair.low, off, size).to_tensor<T>());
                auto ref = Var<T>::constant(crop_at(pair.reference, off, size).to_tensor<T>());
                auto l = combined_loss(low, ref, model, frozen, config.lambda);
                total = total.valid() ? ad::add(total, l) : l;
            }
            auto loss = ad::scale(total, T(1) / static_cast<T>(end - start));
            const double lv = static_cast<double>(loss.item());
            if (!std::isfinite(lv)) {
                std::ostringstream os;
                os << "train_enhancer: non-finite loss at step " << step << " (epoch " << epoch << ", lr " << lr
                   << ", lambda " << config.lambda << ")";
                throw iqa::TrainingError(os.str());
            }
            loss.backward();
            adam.step(lr);
            if (on_step)
                on_step({step, epoch, lv, lr});
            ++step;
        }
        if (config.max_steps > 0 && step >= config.max_steps)
            break;
    }
    return model;
}

/// (low-light, reference) pairs for the given contents.
inline std::vector<EnhancePair> enhancement_pairs(const CorpusManifest& manifest, const std::filesystem::path& root,
                                                  const std::set<std::string>& contents)
{
    std::vector<EnhancePair> out;
    for (const auto& cid : manifest.content_ids()) {
        if (!contents.count(cid))
            continue;
        const auto* low = manifest.find(cid, Role::low_light);
        const auto* ref = manifest.find(cid, Role::reference);
        if (!low || !ref)
            continue;
        out.push_back({load_image(root / low->path), load_image(root / ref->path), cid});
    }
    return out;
}

} // namespace percept_loop::enhance
