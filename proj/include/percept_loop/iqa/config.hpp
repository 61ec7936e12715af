#pragma once

#include <array>
#include <optional>
#include <string>

#include <json.hpp>

#include "percept_loop/core/util.hpp"

namespace percept_loop::iqa {

/// Two-stage feature contract: stage 4 at stride 16 with C4 channels and
/// stage 5 at stride 32 with C5 = 2 * C4 channels. The stem and the first
/// two residual stages are free parameters of the built-in backbone.
struct BackboneConfig {
    int stage4_channels = 1024;
    int stage5_channels = 2048;
    int stem_channels = 64;
    int stage2_channels = 256;
    int stage3_channels = 512;
    int groups = 32;
    int illumination_hidden = 16;
    std::optional<std::string> pretrained_weights_path;

    static constexpr int stage4_stride = 16;
    static constexpr int stage5_stride = 32;

    /// Bottleneck width of a residual block producing `out` channels.
    int bottleneck(int out) const
    {
        int mid = std::max(groups, out / 2);
        return ((mid + groups - 1) / groups) * groups;
    }

    void validate() const
    {
        for (int v : {stage4_channels, stage5_channels, stem_channels, stage2_channels, stage3_channels, groups,
                      illumination_hidden})
            if (v < 1)
                throw ValidationError("backbone: channel counts and groups must be positive");
        if (stage5_channels != 2 * stage4_channels)
            throw ValidationError("backbone: stage5_channels must equal 2 * stage4_channels");
    }
};

enum class PoolingMode { content_adaptive, std_only, mean_only };

inline std::string to_string(PoolingMode m)
{
    switch (m) {
    case PoolingMode::content_adaptive: return "content_adaptive";
    case PoolingMode::std_only: return "std_only";
    case PoolingMode::mean_only: return "mean_only";
    }
    return "?";
}

inline PoolingMode pooling_mode_from_string(const std::string& s)
{
    if (s == "content_adaptive")
        return PoolingMode::content_adaptive;
    if (s == "std_only")
        return PoolingMode::std_only;
    if (s == "mean_only")
        return PoolingMode::mean_only;
    throw ValidationError("unknown pooling_mode '" + s + "'");
}

struct IacaConfig {
    BackboneConfig backbone;
    bool use_multi_scale = true;
    bool use_illumination = true;
    bool use_content_adaptation = true;
    PoolingMode pooling_mode = PoolingMode::content_adaptive;
    // Hidden units of the attention MLP; its last layer has one unit per channel.
    std::array<int, 3> attention_hidden{256, 64, 256};
    std::array<int, 3> encoder_units{256, 128, 64};
    // Loss weights for (final, stage-4 head, stage-5 head).
    std::array<double, 3> aux_loss_weights{1.0, 1.0, 1.0};

    /// Channel attention is active only in content-adaptive mode with the
    /// toggle on; otherwise the pooling mode picks std or mean statistics.
    bool attention_active() const
    {
        return use_content_adaptation && pooling_mode == PoolingMode::content_adaptive;
    }

    std::array<int, 4> attention_units(int channels) const
    {
        return {attention_hidden[0], attention_hidden[1], attention_hidden[2], channels};
    }

    void validate() const
    {
        backbone.validate();
        for (int v : attention_hidden)
            if (v < 1)
                throw ValidationError("iaca: attention units must be positive");
        for (int v : encoder_units)
            if (v < 1)
                throw ValidationError("iaca: encoder units must be positive");
        for (double w : aux_loss_weights)
            if (!(w >= 0.0))
                throw ValidationError("iaca: loss weights must be non-negative");
    }

    /// Full-width configuration (C4 = 1024, C5 = 2048).
    static IacaConfig full() { return {}; }

    /// Desk-scale configuration (C4 = 8, C5 = 16).
    static IacaConfig tiny()
    {
        IacaConfig c;
        c.backbone.stage4_channels = 8;
        c.backbone.stage5_channels = 16;
        c.backbone.stem_channels = 4;
        c.backbone.stage2_channels = 8;
        c.backbone.stage3_channels = 8;
        c.backbone.groups = 2;
        c.backbone.illumination_hidden = 4;
        c.attention_hidden = {4, 2, 4};
        c.encoder_units = {8, 8, 8};
        return c;
    }
};

inline nlohmann::json to_json(const IacaConfig& c)
{
    nlohmann::json b = {{"stage4_channels", c.backbone.stage4_channels},
                        {"stage5_channels", c.backbone.stage5_channels},
                        {"stage4_stride", BackboneConfig::stage4_stride},
                        {"stage5_stride", BackboneConfig::stage5_stride},
                        {"stem_channels", c.backbone.stem_channels},
                        {"stage2_channels", c.backbone.stage2_channels},
                        {"stage3_channels", c.backbone.stage3_channels},
                        {"groups", c.backbone.groups},
                        {"illumination_hidden", c.backbone.illumination_hidden},
                        {"pretrained_weights_path", c.backbone.pretrained_weights_path
                                                        ? nlohmann::json(*c.backbone.pretrained_weights_path)
                                                        : nlohmann::json(nullptr)}};
    return {{"backbone", b},
            {"use_multi_scale", c.use_multi_scale},
            {"use_illumination", c.use_illumination},
            {"use_content_adaptation", c.use_content_adaptation},
            {"pooling_mode", to_string(c.pooling_mode)},
            {"attention_hidden", c.attention_hidden},
            {"encoder_units", c.encoder_units},
            {"aux_loss_weights", c.aux_loss_weights}};
}

/// Missing fields fall back to `base`, so partial configs refine a preset.
inline IacaConfig iaca_config_from_json(const nlohmann::json& j, IacaConfig base = IacaConfig::tiny())
{
    try {
        IacaConfig c = base;
        if (j.contains("backbone")) {
            const auto& b = j.at("backbone");
            c.backbone.stage4_channels = b.value("stage4_channels", c.backbone.stage4_channels);
            c.backbone.stage5_channels = b.value("stage5_channels", c.backbone.stage5_channels);
            c.backbone.stem_channels = b.value("stem_channels", c.backbone.stem_channels);
            c.backbone.stage2_channels = b.value("stage2_channels", c.backbone.stage2_channels);
            c.backbone.stage3_channels = b.value("stage3_channels", c.backbone.stage3_channels);
            c.backbone.groups = b.value("groups", c.backbone.groups);
            c.backbone.illumination_hidden = b.value("illumination_hidden", c.backbone.illumination_hidden);
            if (b.contains("stage4_stride") && b.at("stage4_stride").get<int>() != BackboneConfig::stage4_stride)
                throw ValidationError("backbone: stage4_stride is fixed at 16");
            if (b.contains("stage5_stride") && b.at("stage5_stride").get<int>() != BackboneConfig::stage5_stride)
                throw ValidationError("backbone: stage5_stride is fixed at 32");
            if (b.contains("pretrained_weights_path") && !b.at("pretrained_weights_path").is_null())
                c.backbone.pretrained_weights_path = b.at("pretrained_weights_path").get<std::string>();
        }
        c.use_multi_scale = j.value("use_multi_scale", c.use_multi_scale);
        c.use_illumination = j.value("use_illumination", c.use_illumination);
        c.use_content_adaptation = j.value("use_content_adaptation", c.use_content_adaptation);
        if (j.contains("pooling_mode"))
            c.pooling_mode = pooling_mode_from_string(j.at("pooling_mode").get<std::string>());
        if (j.contains("attention_hidden"))
            c.attention_hidden = j.at("attention_hidden").get<std::array<int, 3>>();
        if (j.contains("encoder_units"))
            c.encoder_units = j.at("encoder_units").get<std::array<int, 3>>();
        if (j.contains("aux_loss_weights"))
            c.aux_loss_weights = j.at("aux_loss_weights").get<std::array<double, 3>>();
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("iaca config: ") + e.what());
    }
}

} // namespace percept_loop::iqa
