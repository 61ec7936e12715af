#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "percept_loop/core/params.hpp"
#include "percept_loop/core/util.hpp"

namespace percept_loop {

static_assert(std::endian::native == std::endian::little, "parameter blobs are written in host order");

inline constexpr int kModelFormatVersion = 1;

/// Parameters as consecutive little-endian float64 values in store order.
template <typename T>
std::string parameter_blob(const ParamStore<T>& ps)
{
    std::string out;
    out.reserve(ps.scalar_count() * sizeof(double));
    for (const auto& p : ps.entries())
        for (T v : p.var.value().data()) {
            const double d = static_cast<double>(v);
            char buf[sizeof(double)];
            std::memcpy(buf, &d, sizeof d);
            out.append(buf, sizeof buf);
        }
    return out;
}

template <typename T>
nlohmann::json parameter_layout(const ParamStore<T>& ps)
{
    nlohmann::json layout = nlohmann::json::array();
    for (const auto& p : ps.entries())
        layout.push_back({{"name", p.name},
                          {"shape", {p.var.value().channels(), p.var.value().height(), p.var.value().width()}}});
    return layout;
}

/// Overwrites every parameter named in `layout` from `blob`. Names absent
/// from the store are rejected, as are shape mismatches; when `require_all`
/// every store entry must be covered.
template <typename T>
void load_parameter_blob(ParamStore<T>& ps, const nlohmann::json& layout, const std::string& blob, bool require_all = true,
                         const std::string& name_prefix_filter = "")
{
    std::size_t offset = 0;
    std::size_t covered = 0;
    for (const auto& entry : layout) {
        const auto name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<int>>();
        if (shape.size() != 3)
            throw ValidationError("parameter " + name + ": shape must have three dimensions");
        const std::size_t count = static_cast<std::size_t>(shape[0]) * shape[1] * shape[2];
        if (offset + count * sizeof(double) > blob.size())
            throw ValidationError("parameter blob truncated at " + name);
        const bool wanted = name_prefix_filter.empty() || name.rfind(name_prefix_filter, 0) == 0;
        if (wanted) {
            if (!ps.contains(name))
                throw ValidationError("parameter blob contains unknown parameter " + name);
            auto var = ps.get(name);
            auto& value = var.mutable_value();
            if (value.channels() != shape[0] || value.height() != shape[1] || value.width() != shape[2])
                throw ValidationError("parameter " + name + ": shape mismatch with configuration");
            for (std::size_t i = 0; i < count; ++i) {
                double d;
                std::memcpy(&d, blob.data() + offset + i * sizeof(double), sizeof d);
                value[i] = static_cast<T>(d);
            }
            ++covered;
        }
        offset += count * sizeof(double);
    }
    if (offset != blob.size())
        throw ValidationError("parameter blob has trailing bytes");
    if (require_all && covered != ps.entries().size())
        throw ValidationError("parameter blob does not cover every parameter");
}

/// Refuses to replace an existing model unless `force` is set.
inline void prepare_model_dir(const std::filesystem::path& dir, bool force)
{
    if (std::filesystem::exists(dir / "manifest.json") || std::filesystem::exists(dir / "params.bin")) {
        if (!force)
            throw ValidationError("model already exists at " + dir.string() + " (pass --force to overwrite)");
    }
    std::filesystem::create_directories(dir);
}

} // namespace percept_loop
