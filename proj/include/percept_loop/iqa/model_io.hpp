#pragma once

#include <filesystem>
#include <string>

#include "percept_loop/core/blob.hpp"
#include "percept_loop/iqa/model.hpp"

namespace percept_loop::iqa {

template <typename T>
nlohmann::json quality_model_manifest(const QualityModel<T>& m)
{
    return {{"format_version", kModelFormatVersion},
            {"kind", "iaca"},
            {"config", to_json(m.config)},
            {"q_max", m.has_q_max() ? nlohmann::json(m.q_max) : nlohmann::json(nullptr)},
            {"score_calibration", {{"scale", m.calibration.scale}, {"offset", m.calibration.offset}}},
            {"seed", m.seed},
            {"train_split_digest", m.train_split_digest},
            {"input_normalization", {{"mean", m.normalization.mean}, {"std", m.normalization.std}}},
            {"parameters", parameter_layout(m.params)},
            {"blob", "params.bin"},
            {"blob_dtype", "float64-le"}};
}

/// Writes `dir/params.bin` and `dir/manifest.json`.
template <typename T>
void save_quality_model(const QualityModel<T>& m, const std::filesystem::path& dir, bool force = false)
{
    prepare_model_dir(dir, force);
    write_text_file(dir / "params.bin", parameter_blob(m.params));
    write_text_file(dir / "manifest.json", quality_model_manifest(m).dump(2) + "\n");
}

template <typename T>
QualityModel<T> load_quality_model(const std::filesystem::path& dir)
{
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("model manifest: " + std::string(e.what()));
    }
    try {
        if (manifest.at("format_version").get<int>() != kModelFormatVersion)
            throw ValidationError("model manifest: unsupported format_version");
        if (manifest.value("kind", std::string("iaca")) != "iaca")
            throw ValidationError("model manifest: not a quality model");
        const IacaConfig config = iaca_config_from_json(manifest.at("config"), IacaConfig::full());
        QualityModel<T> m = init_quality_model<T>(config, manifest.at("seed").get<std::uint64_t>());
        m.train_split_digest = manifest.at("train_split_digest").get<std::string>();
        if (!manifest.at("q_max").is_null())
            m.q_max = manifest.at("q_max").get<double>();
        if (manifest.contains("score_calibration")) {
            m.calibration.scale = manifest.at("score_calibration").at("scale").get<double>();
            m.calibration.offset = manifest.at("score_calibration").at("offset").get<double>();
        }
        if (manifest.contains("input_normalization")) {
            m.normalization.mean = manifest.at("input_normalization").at("mean").get<std::array<double, 3>>();
            m.normalization.std = manifest.at("input_normalization").at("std").get<std::array<double, 3>>();
        }
        load_parameter_blob(m.params, manifest.at("parameters"), read_text_file(dir / "params.bin"));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("model manifest: " + std::string(e.what()));
    }
}

/// Copies externally supplied backbone weights (stem and residual stages)
/// from a model directory in the same blob format. Shapes must match the
/// configured widths exactly.
template <typename T>
void load_backbone_weights(QualityModel<T>& m, const std::filesystem::path& dir)
{
    const auto manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
    const std::string blob = read_text_file(dir / "params.bin");
    load_parameter_blob(m.params, manifest.at("parameters"), blob, false, "stem.");
    for (const char* block : {"block2.", "block3.", "block4.", "block5."})
        load_parameter_blob(m.params, manifest.at("parameters"), blob, false, block);
}

} // namespace percept_loop::iqa
