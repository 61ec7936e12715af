#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "percept_loop/core/ops.hpp"
#include "percept_loop/core/params.hpp"
#include "percept_loop/dataio/image.hpp"
#include "percept_loop/iqa/config.hpp"

namespace percept_loop::iqa {

using ad::Var;

/// Per-channel input standardisation applied before the backbone.
struct InputNormalization {
    std::array<double, 3> mean{0.485, 0.456, 0.406};
    std::array<double, 3> std{0.229, 0.224, 0.225};
};

/// Affine map from the raw regressor output to opinion-score units. The
/// training loss ignores scale and shift, so this is fitted afterwards.
struct ScoreCalibration {
    double scale = 1.0;
    double offset = 0.0;

    bool operator==(const ScoreCalibration&) const = default;
};

template <typename T>
struct QualityModel {
    IacaConfig config;
    ParamStore<T> params;
    InputNormalization normalization;
    ScoreCalibration calibration;
    double q_max = std::numeric_limits<double>::quiet_NaN();
    std::string train_split_digest;
    std::uint64_t seed = 0;

    bool has_q_max() const { return std::isfinite(q_max); }
};

struct QualityPrediction {
    double score = 0.0;
    double score_s1 = 0.0;
    double score_s2 = 0.0;

    bool operator==(const QualityPrediction&) const = default;
};

template <typename T>
struct FeatureBundle {
    Var<T> s1; // (C4, ~H/16, ~W/16), illumination-merged when enabled
    Var<T> s2; // (C5, ~H/32, ~W/32)
    Var<T> s1_mean, s1_std;
    Var<T> s2_mean, s2_std;
};

template <typename T>
struct ScoreVars {
    Var<T> score;
    Var<T> score_s1;
    Var<T> score_s2;
};

/// Smallest accepted input side.
inline constexpr int kMinInputSide = 32;

namespace detail {

template <typename T>
void add_conv(ParamStore<T>& ps, const std::string& name, int cin, int cout, int kernel, int groups, std::mt19937_64& rng)
{
    const int fan_in = cin / groups * kernel * kernel;
    ps.add(name + ".w", fan_in_uniform<T>(cout, fan_in, rng));
    ps.add(name + ".b", Tensor<T>(cout, 1, 1));
}

template <typename T>
void add_linear(ParamStore<T>& ps, const std::string& name, int in, int out, std::mt19937_64& rng)
{
    ps.add(name + ".w", fan_in_uniform<T>(out, in, rng));
    ps.add(name + ".b", Tensor<T>(out, 1, 1));
}

template <typename T>
Var<T> conv(const ParamStore<T>& ps, const std::string& name, const Var<T>& x, ad::ConvGeometry g)
{
    return ad::conv2d(x, ps.get(name + ".w"), ps.get(name + ".b"), g);
}

template <typename T>
Var<T> fc(const ParamStore<T>& ps, const std::string& name, const Var<T>& x)
{
    return ad::linear(x, ps.get(name + ".w"), ps.get(name + ".b"));
}

inline std::array<int, 4> stage_outputs(const BackboneConfig& b)
{
    return {b.stage2_channels, b.stage3_channels, b.stage4_channels, b.stage5_channels};
}

} // namespace detail

/// Residual grouped-convolution block: 1x1 reduce, grouped 3x3 at `stride`,
/// 1x1 expand, plus a strided 1x1 projection shortcut; rectified output.
template <typename T>
Var<T> residual_block(const ParamStore<T>& ps, const std::string& name, const Var<T>& x, int groups, int stride)
{
    using ad::ConvGeometry;
    auto h = ad::relu(detail::conv(ps, name + ".reduce", x, ConvGeometry{1, 1, 0, 1}));
    h = ad::relu(detail::conv(ps, name + ".group", h, ConvGeometry{3, stride, 1, groups}));
    h = detail::conv(ps, name + ".expand", h, ConvGeometry{1, 1, 0, 1});
    auto shortcut = detail::conv(ps, name + ".short", x, ConvGeometry{1, stride, 0, 1});
    return ad::relu(ad::add(h, shortcut));
}

/// Parameter layout for a configuration, initialised from `seed`.
template <typename T>
QualityModel<T> init_quality_model(const IacaConfig& config, std::uint64_t seed)
{
    config.validate();
    QualityModel<T> m;
    m.config = config;
    m.seed = seed;
    auto rng = make_rng(seed, {0x1aca});
    auto& ps = m.params;
    const auto& b = config.backbone;

    detail::add_conv(ps, "stem", 3, b.stem_channels, 3, 1, rng);
    int cin = b.stem_channels;
    const auto outs = detail::stage_outputs(b);
    for (int k = 0; k < 4; ++k) {
        const std::string name = "block" + std::to_string(k + 2);
        const int mid = b.bottleneck(outs[k]);
        detail::add_conv(ps, name + ".reduce", cin, mid, 1, 1, rng);
        detail::add_conv(ps, name + ".group", mid, mid, 3, b.groups, rng);
        detail::add_conv(ps, name + ".expand", mid, outs[k], 1, 1, rng);
        detail::add_conv(ps, name + ".short", cin, outs[k], 1, 1, rng);
        cin = outs[k];
    }

    std::vector<std::pair<std::string, int>> scales;
    if (config.use_multi_scale)
        scales.emplace_back("s1", b.stage4_channels);
    scales.emplace_back("s2", b.stage5_channels);
    for (const auto& [s, channels] : scales) {
        if (config.use_illumination) {
            detail::add_conv(ps, "illum_" + s + ".conv1", 1, b.illumination_hidden, 3, 1, rng);
            detail::add_conv(ps, "illum_" + s + ".conv2", b.illumination_hidden, b.illumination_hidden, 3, 1, rng);
            detail::add_conv(ps, "illum_" + s + ".conv3", b.illumination_hidden, channels, 3, 1, rng);
        }
        if (config.attention_active()) {
            const auto units = config.attention_units(channels);
            int in = channels;
            for (int l = 0; l < 4; ++l) {
                detail::add_linear(ps, "attn_" + s + ".fc" + std::to_string(l + 1), in, units[l], rng);
                in = units[l];
            }
        }
        int in = channels;
        for (int l = 0; l < 3; ++l) {
            detail::add_linear(ps, "enc_" + s + ".fc" + std::to_string(l + 1), in, config.encoder_units[l], rng);
            in = config.encoder_units[l];
        }
        detail::add_linear(ps, "head_" + s, config.encoder_units[2], 1, rng);
    }
    const int concat = static_cast<int>(scales.size()) * config.encoder_units[2];
    detail::add_linear(ps, "head", concat, 1, rng);
    return m;
}

// ---- illumination modulation ---------------------------------------------

/// Max-RGB luminance: per-pixel maximum over the colour channels.
template <typename T>
Var<T> max_rgb(const Var<T>& image)
{
    if (image.value().channels() != 3)
        throw ShapeError("max_rgb: expected a 3-channel image");
    return ad::max_over_channels(image);
}

inline Tensor<float> max_rgb(const ImageBuffer& image)
{
    return max_rgb(Var<float>::constant(image.pixels())).value();
}

/// Max pooling of a luminance map to exactly target_h x target_w.
template <typename T>
Var<T> pool_luminance(const Var<T>& lum, int target_h, int target_w)
{
    return ad::adaptive_max_pool(lum, target_h, target_w);
}

/// Three stride-1 3x3 convolutions (rectified after the first two) mapping a
/// pooled luminance map to the channel count of the modulated feature map.
template <typename T>
Var<T> illumination_branch(const Var<T>& pooled_lum, const ParamStore<T>& ps, const std::string& prefix, int out_channels)
{
    if (pooled_lum.value().channels() != 1)
        throw ShapeError("illumination_branch: expected a single-channel luminance map");
    if (ps.get(prefix + ".conv3.b").value().channels() != out_channels)
        throw ShapeError("illumination_branch: parameter width does not match " + std::to_string(out_channels));
    const ad::ConvGeometry same{3, 1, 1, 1};
    auto h = ad::relu(detail::conv(ps, prefix + ".conv1", pooled_lum, same));
    h = ad::relu(detail::conv(ps, prefix + ".conv2", h, same));
    return detail::conv(ps, prefix + ".conv3", h, same);
}

/// Element-wise sum of backbone and illumination features.
template <typename T>
Var<T> merge_features(const Var<T>& backbone_feats, const Var<T>& illum_feats)
{
    require_same_shape(backbone_feats.value(), illum_feats.value(), "merge_features");
    return ad::add(backbone_feats, illum_feats);
}

// ---- backbone ---------------------------------------------------------------

template <typename T>
Var<T> normalize_input(const Var<T>& image, const InputNormalization& n)
{
    std::array<T, 3> gain{}, offset{};
    for (int c = 0; c < 3; ++c) {
        gain[c] = static_cast<T>(1.0 / n.std[c]);
        offset[c] = static_cast<T>(-n.mean[c] / n.std[c]);
    }
    return ad::channel_affine(image, std::span<const T>(gain), std::span<const T>(offset));
}

/// Stage-4/stage-5 features with their mean and std poolings. Illumination
/// features are merged into each scale before pooling; stage 5 is computed
/// from the unmodulated stage-4 map.
template <typename T>
FeatureBundle<T> backbone_forward(const Var<T>& image, const QualityModel<T>& model, bool use_illumination)
{
    const auto& x = image.value();
    if (x.channels() != 3)
        throw ShapeError("backbone_forward: expected a 3-channel image");
    if (x.height() < kMinInputSide || x.width() < kMinInputSide)
        throw ShapeError("backbone_forward: image " + std::to_string(x.height()) + "x" + std::to_string(x.width()) +
                         " smaller than " + std::to_string(kMinInputSide) + "x" + std::to_string(kMinInputSide));
    const auto& ps = model.params;
    const auto& b = model.config.backbone;
    if (use_illumination && !ps.contains("illum_s2.conv1.w"))
        throw ValidationError("backbone_forward: model has no illumination branch");

    auto h = ad::relu(detail::conv(ps, "stem", normalize_input(image, model.normalization), ad::ConvGeometry{3, 2, 1, 1}));
    h = residual_block(ps, "block2", h, b.groups, 2);
    h = residual_block(ps, "block3", h, b.groups, 2);
    auto s1 = residual_block(ps, "block4", h, b.groups, 2);
    auto s2 = residual_block(ps, "block5", s1, b.groups, 2);

    if (use_illumination) {
        auto lum = max_rgb(image);
        auto modulate = [&](const Var<T>& feat, const std::string& scale) {
            auto pooled = pool_luminance(lum, feat.value().height(), feat.value().width());
            return merge_features(feat, illumination_branch(pooled, ps, "illum_" + scale, feat.value().channels()));
        };
        if (ps.contains("illum_s1.conv1.w"))
            s1 = modulate(s1, "s1");
        s2 = modulate(s2, "s2");
    }
    FeatureBundle<T> fb;
    fb.s1 = s1;
    fb.s2 = s2;
    fb.s1_mean = ad::channel_mean(s1);
    fb.s1_std = ad::channel_std(s1, T(1e-8));
    fb.s2_mean = ad::channel_mean(s2);
    fb.s2_std = ad::channel_std(s2, T(1e-8));
    return fb;
}

// ---- content adaptation and regression -------------------------------------

/// Four fully connected layers (ReLU, ReLU, ReLU, sigmoid) over the mean
/// statistics, yielding one weight in (0,1) per channel.
template <typename T>
Var<T> content_attention(const Var<T>& mean_vec, const ParamStore<T>& ps, const std::string& prefix)
{
    const int channels = ps.get(prefix + ".fc4.b").value().channels();
    if (mean_vec.value().channels() != channels || mean_vec.value().plane() != 1)
        throw ShapeError("content_attention: input " + mean_vec.value().shape_string() + " for " +
                         std::to_string(channels) + " channels");
    auto h = ad::relu(detail::fc(ps, prefix + ".fc1", mean_vec));
    h = ad::relu(detail::fc(ps, prefix + ".fc2", h));
    h = ad::relu(detail::fc(ps, prefix + ".fc3", h));
    return ad::sigmoid(detail::fc(ps, prefix + ".fc4", h));
}

template <typename T>
Var<T> encode_scale(const Var<T>& pooled, const ParamStore<T>& ps, const std::string& prefix)
{
    auto h = ad::relu(detail::fc(ps, prefix + ".fc1", pooled));
    h = ad::relu(detail::fc(ps, prefix + ".fc2", h));
    return ad::relu(detail::fc(ps, prefix + ".fc3", h));
}

/// Pooled statistic fed to a scale's encoder, per the pooling configuration.
template <typename T>
Var<T> scale_statistic(const Var<T>& mean, const Var<T>& std_vec, const QualityModel<T>& model, const std::string& scale)
{
    const auto& cfg = model.config;
    if (cfg.attention_active())
        return ad::mul(content_attention(mean, model.params, "attn_" + scale), std_vec);
    if (cfg.pooling_mode == PoolingMode::mean_only)
        return mean;
    return std_vec;
}

/// Per-scale encoders and heads plus the final regressor on the concatenated
/// encodings. Single-scale models report the stage-5 head as both sub-scores.
template <typename T>
ScoreVars<T> quality_head(const FeatureBundle<T>& fb, const QualityModel<T>& model)
{
    const auto& ps = model.params;
    const auto& cfg = model.config;
    if (fb.s2_std.value().channels() != cfg.backbone.stage5_channels ||
        fb.s1_std.value().channels() != cfg.backbone.stage4_channels)
        throw ShapeError("quality_head: feature bundle does not match the configuration");
    auto enc2 = encode_scale(scale_statistic(fb.s2_mean, fb.s2_std, model, "s2"), ps, "enc_s2");
    ScoreVars<T> out;
    out.score_s2 = detail::fc(ps, "head_s2", enc2);
    if (cfg.use_multi_scale) {
        auto enc1 = encode_scale(scale_statistic(fb.s1_mean, fb.s1_std, model, "s1"), ps, "enc_s1");
        out.score_s1 = detail::fc(ps, "head_s1", enc1);
        out.score = detail::fc(ps, "head", ad::concat_channels(enc1, enc2));
    } else {
        out.score_s1 = out.score_s2;
        out.score = detail::fc(ps, "head", enc2);
    }
    return out;
}

template <typename T>
ScoreVars<T> iaca_forward_graph(const Var<T>& image, const QualityModel<T>& model)
{
    auto out = quality_head(backbone_forward(image, model, model.config.use_illumination), model);
    const auto& c = model.calibration;
    if (c != ScoreCalibration{})
        out.score = ad::add_scalar(ad::scale(out.score, static_cast<T>(c.scale)), static_cast<T>(c.offset));
    return out;
}

/// Scores one image at its native size.
template <typename T>
QualityPrediction iaca_forward(const ImageBuffer& image, const QualityModel<T>& model)
{
    auto out = iaca_forward_graph(Var<T>::constant(image.to_tensor<T>()), model);
    QualityPrediction p{static_cast<double>(out.score.item()), static_cast<double>(out.score_s1.item()),
                        static_cast<double>(out.score_s2.item())};
    if (!std::isfinite(p.score) || !std::isfinite(p.score_s1) || !std::isfinite(p.score_s2))
        throw std::runtime_error("iaca_forward: non-finite prediction");
    return p;
}

} // namespace percept_loop::iqa
