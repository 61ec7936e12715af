#pragma once

#include <concepts>
#include <cstdint>
#include <string>

#include <json.hpp>

#include "percept_loop/core/blob.hpp"
#include "percept_loop/core/ops.hpp"
#include "percept_loop/core/params.hpp"
#include "percept_loop/dataio/image.hpp"

namespace percept_loop::enhance {

using ad::Var;

/// Three-layer convolutional enhancer (patch extraction, non-linear mapping,
/// reconstruction); "same" padding keeps the spatial size.
struct EnhancerArch {
    int width1 = 64;
    int width2 = 32;
    int kernel1 = 9;
    int kernel2 = 1;
    int kernel3 = 5;

    void validate() const
    {
        if (width1 < 1 || width2 < 1)
            throw ValidationError("enhancer: widths must be positive");
        for (int k : {kernel1, kernel2, kernel3})
            if (k < 1 || k % 2 == 0)
                throw ValidationError("enhancer: kernel sizes must be odd and positive");
    }

    bool operator==(const EnhancerArch&) const = default;
};

inline constexpr const char* kSrcnnArch = "srcnn_style";

template <typename T>
struct EnhancerModel {
    EnhancerArch arch;
    ParamStore<T> params;
    std::string config_digest;
    double lambda = 0.0;
    std::uint64_t seed = 0;

    /// Raw (unclamped) output, used during training.
    Var<T> forward(const Var<T>& image) const
    {
        if (image.value().channels() != 3)
            throw ShapeError("enhancer_forward: expected a 3-channel image");
        auto layer = [&](const std::string& name, const Var<T>& x, int k) {
            return ad::conv2d(x, params.get(name + ".w"), params.get(name + ".b"), ad::ConvGeometry{k, 1, k / 2, 1});
        };
        auto h = ad::relu(layer("conv1", image, arch.kernel1));
        h = ad::relu(layer("conv2", h, arch.kernel2));
        return layer("conv3", h, arch.kernel3);
    }

    ParamStore<T>& parameters() { return params; }
};

/// Anything with a trainable ParamStore and a shape-preserving forward pass.
template <typename N, typename T>
concept EnhancerNetwork = requires(N& net, const N& cnet, const Var<T>& x) {
    { cnet.forward(x) } -> std::same_as<Var<T>>;
    { net.parameters() } -> std::same_as<ParamStore<T>&>;
};

static_assert(EnhancerNetwork<EnhancerModel<float>, float>);

template <typename T>
EnhancerModel<T> init_enhancer(const EnhancerArch& arch, std::uint64_t seed)
{
    arch.validate();
    EnhancerModel<T> m;
    m.arch = arch;
    m.seed = seed;
    auto rng = make_rng(seed, {0xe4a});
    auto add = [&](const std::string& name, int cin, int cout, int k) {
        m.params.add(name + ".w", fan_in_uniform<T>(cout, cin * k * k, rng));
        m.params.add(name + ".b", Tensor<T>(cout, 1, 1));
    };
    add("conv1", 3, arch.width1, arch.kernel1);
    add("conv2", arch.width1, arch.width2, arch.kernel2);
    add("conv3", arch.width2, 3, arch.kernel3);
    return m;
}

/// Inference: the raw output clamped to [0,1].
template <typename T>
ImageBuffer enhancer_forward(const ImageBuffer& low, const EnhancerModel<T>& model)
{
    auto out = model.forward(Var<T>::constant(low.to_tensor<T>()));
    return ImageBuffer::from_clamped(out.value());
}

inline nlohmann::json to_json(const EnhancerArch& a)
{
    return {{"width1", a.width1}, {"width2", a.width2}, {"kernel1", a.kernel1}, {"kernel2", a.kernel2}, {"kernel3", a.kernel3}};
}

inline EnhancerArch enhancer_arch_from_json(const nlohmann::json& j)
{
    EnhancerArch a;
    a.width1 = j.value("width1", a.width1);
    a.width2 = j.value("width2", a.width2);
    a.kernel1 = j.value("kernel1", a.kernel1);
    a.kernel2 = j.value("kernel2", a.kernel2);
    a.kernel3 = j.value("kernel3", a.kernel3);
    a.validate();
    return a;
}

template <typename T>
void save_enhancer(const EnhancerModel<T>& m, const std::filesystem::path& dir, bool force = false,
                   const nlohmann::json& train_config = nullptr)
{
    prepare_model_dir(dir, force);
    nlohmann::json manifest = {{"format_version", kModelFormatVersion},
                               {"kind", "enhancer"},
                               {"arch", kSrcnnArch},
                               {"arch_params", to_json(m.arch)},
                               {"lambda", m.lambda},
                               {"seed", m.seed},
                               {"config_digest", m.config_digest},
                               {"train_config", train_config},
                               {"parameters", parameter_layout(m.params)},
                               {"blob", "params.bin"},
                               {"blob_dtype", "float64-le"}};
    write_text_file(dir / "params.bin", parameter_blob(m.params));
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

template <typename T>
EnhancerModel<T> load_enhancer(const std::filesystem::path& dir)
{
    try {
        const auto manifest = nlohmann::json::parse(read_text_file(dir / "manifest.json"));
        if (manifest.at("format_version").get<int>() != kModelFormatVersion)
            throw ValidationError("enhancer manifest: unsupported format_version");
        if (manifest.at("arch").get<std::string>() != kSrcnnArch)
            throw ValidationError("enhancer manifest: unsupported arch " + manifest.at("arch").get<std::string>());
        auto m = init_enhancer<T>(enhancer_arch_from_json(manifest.at("arch_params")), manifest.at("seed").get<std::uint64_t>());
        m.lambda = manifest.at("lambda").get<double>();
        m.config_digest = manifest.at("config_digest").get<std::string>();
        load_parameter_blob(m.params, manifest.at("parameters"), read_text_file(dir / "params.bin"));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("enhancer manifest: " + std::string(e.what()));
    }
}

} // namespace percept_loop::enhance
