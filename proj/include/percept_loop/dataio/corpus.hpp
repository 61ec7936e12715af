#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "percept_loop/dataio/degrade.hpp"

namespace percept_loop {

enum class Role { reference, low_light, enhanced };

inline std::string to_string(Role r)
{
    switch (r) {
    case Role::reference: return "reference";
    case Role::low_light: return "low_light";
    case Role::enhanced: return "enhanced";
    }
    return "?";
}

inline Role role_from_string(const std::string& s)
{
    if (s == "reference")
        return Role::reference;
    if (s == "low_light")
        return Role::low_light;
    if (s == "enhanced")
        return Role::enhanced;
    throw ValidationError("unknown corpus role '" + s + "'");
}

/// Method id carried by every low-light entry.
inline constexpr const char* kLowLightMethod = "low_light";

struct ManifestEntry {
    std::string content_id;
    Role role = Role::reference;
    std::optional<std::string> method_id;
    std::string path; // relative to the manifest's directory
    std::optional<DegradationRecipe> degradation_params;
};

struct CorpusManifest {
    std::vector<ManifestEntry> entries;
    std::uint64_t seed = 0;

    /// Sorted, de-duplicated content ids.
    std::vector<std::string> content_ids() const
    {
        std::set<std::string> ids;
        for (const auto& e : entries)
            ids.insert(e.content_id);
        return {ids.begin(), ids.end()};
    }

    /// Enhanced-role method ids in first-appearance order.
    std::vector<std::string> enhanced_methods() const
    {
        std::vector<std::string> out;
        for (const auto& e : entries)
            if (e.role == Role::enhanced && e.method_id &&
                std::find(out.begin(), out.end(), *e.method_id) == out.end())
                out.push_back(*e.method_id);
        return out;
    }

    const ManifestEntry* find(const std::string& content_id, Role role, const std::optional<std::string>& method = {}) const
    {
        for (const auto& e : entries)
            if (e.content_id == content_id && e.role == role && (!method || e.method_id == method))
                return &e;
        return nullptr;
    }

    void validate() const
    {
        std::set<std::pair<std::string, std::string>> keys;
        std::set<std::string> with_reference;
        for (const auto& e : entries) {
            if (!keys.insert({e.content_id, e.method_id.value_or("\x01none")}).second)
                throw ValidationError("manifest: duplicate (content_id, method_id) for " + e.content_id);
            if (e.role == Role::reference)
                with_reference.insert(e.content_id);
            if (e.role != Role::reference && !e.method_id)
                throw ValidationError("manifest: non-reference entry without method_id in " + e.content_id);
        }
        for (const auto& e : entries)
            if (e.role != Role::reference && !with_reference.count(e.content_id))
                throw ValidationError("manifest: content " + e.content_id + " has no reference entry");
    }
};

// ---- JSON -----------------------------------------------------------------

inline nlohmann::json to_json(const DegradationRecipe& r)
{
    return {{"gamma", r.gamma},       {"noise_sigma", r.noise_sigma}, {"blur_sigma", r.blur_sigma},
            {"gains", r.gains},       {"contrast", r.contrast},       {"exposure", r.exposure}};
}

inline DegradationRecipe recipe_from_json(const nlohmann::json& j)
{
    DegradationRecipe r;
    r.gamma = j.value("gamma", 1.0);
    r.noise_sigma = j.value("noise_sigma", 0.0);
    r.blur_sigma = j.value("blur_sigma", 0.0);
    if (j.contains("gains"))
        r.gains = j.at("gains").get<std::array<double, 3>>();
    r.contrast = j.value("contrast", 1.0);
    r.exposure = j.value("exposure", 0.0);
    return r;
}

inline nlohmann::json to_json(const CorpusManifest& m)
{
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : m.entries) {
        nlohmann::json je;
        je["content_id"] = e.content_id;
        je["role"] = to_string(e.role);
        je["method_id"] = e.method_id ? nlohmann::json(*e.method_id) : nlohmann::json(nullptr);
        je["path"] = e.path;
        je["degradation_params"] = e.degradation_params ? to_json(*e.degradation_params) : nlohmann::json(nullptr);
        entries.push_back(std::move(je));
    }
    return {{"entries", std::move(entries)}, {"seed", m.seed}};
}

inline CorpusManifest manifest_from_json(const nlohmann::json& j)
{
    try {
        CorpusManifest m;
        m.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& je : j.at("entries")) {
            ManifestEntry e;
            e.content_id = je.at("content_id").get<std::string>();
            e.role = role_from_string(je.at("role").get<std::string>());
            if (!je.at("method_id").is_null())
                e.method_id = je.at("method_id").get<std::string>();
            e.path = je.at("path").get<std::string>();
            if (je.contains("degradation_params") && !je.at("degradation_params").is_null())
                e.degradation_params = recipe_from_json(je.at("degradation_params"));
            m.entries.push_back(std::move(e));
        }
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& ex) {
        throw ValidationError(std::string("manifest: ") + ex.what());
    }
}

inline void save_manifest(const CorpusManifest& m, const std::filesystem::path& path)
{
    write_text_file(path, to_json(m).dump(2) + "\n");
}

inline CorpusManifest load_manifest(const std::filesystem::path& path)
{
    try {
        return manifest_from_json(nlohmann::json::parse(read_text_file(path)));
    } catch (const nlohmann::json::parse_error& ex) {
        throw ValidationError("manifest " + path.string() + ": " + ex.what());
    }
}

// ---- degradation config ---------------------------------------------------

/// A scalar parameter that is either fixed or drawn uniformly per content.
struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;

    static ParamRange fixed(double v) { return {v, v}; }
    double sample(std::mt19937_64& rng) const
    {
        if (lo == hi)
            return lo;
        return std::uniform_real_distribution<double>(lo, hi)(rng);
    }
};

struct RecipeSpec {
    std::string method_id;
    ParamRange gamma = ParamRange::fixed(1.0);
    ParamRange noise_sigma = ParamRange::fixed(0.0);
    ParamRange blur_sigma = ParamRange::fixed(0.0);
    std::array<double, 3> gains{1.0, 1.0, 1.0};
    ParamRange contrast = ParamRange::fixed(1.0);
    ParamRange exposure = ParamRange::fixed(0.0);

    DegradationRecipe sample(std::mt19937_64& rng) const
    {
        DegradationRecipe r;
        r.gamma = gamma.sample(rng);
        r.noise_sigma = noise_sigma.sample(rng);
        r.blur_sigma = blur_sigma.sample(rng);
        r.gains = gains;
        r.contrast = contrast.sample(rng);
        r.exposure = exposure.sample(rng);
        return r;
    }
};

struct SyntheticBaseSpec {
    int count = 0;
    int height = 64;
    int width = 64;
};

struct DegradationConfig {
    RecipeSpec low_light;
    std::vector<RecipeSpec> methods;
    SyntheticBaseSpec synthetic;
    std::vector<std::string> base_image_paths;

    /// Every reachable parameter value must be inside the accepted limits.
    void validate() const
    {
        auto check_spec = [](const RecipeSpec& s, const RecipeLimits& lim) {
            for (const ParamRange* r : {&s.gamma, &s.noise_sigma, &s.blur_sigma, &s.contrast, &s.exposure})
                if (r->lo > r->hi)
                    throw ValidationError("degradation range for " + s.method_id + " has lo > hi");
            DegradationRecipe lo{s.gamma.lo, s.noise_sigma.lo, s.blur_sigma.lo, s.gains, s.contrast.lo, s.exposure.lo};
            DegradationRecipe hi{s.gamma.hi, s.noise_sigma.hi, s.blur_sigma.hi, s.gains, s.contrast.hi, s.exposure.hi};
            try {
                validate_recipe(lo, lim);
                validate_recipe(hi, lim);
            } catch (const ValidationError& e) {
                throw ValidationError("method " + s.method_id + ": " + e.what());
            }
        };
        RecipeLimits low_lim;
        low_lim.gamma_min = 1.5;
        check_spec(low_light, low_lim);
        if (methods.empty())
            throw ValidationError("degradation config: no methods");
        std::set<std::string> ids;
        for (const auto& m : methods) {
            if (m.method_id.empty() || m.method_id == kLowLightMethod)
                throw ValidationError("degradation config: invalid method id '" + m.method_id + "'");
            if (!ids.insert(m.method_id).second)
                throw ValidationError("degradation config: duplicate method id " + m.method_id);
            check_spec(m, RecipeLimits{});
        }
    }
};

inline ParamRange range_from_json(const nlohmann::json& j, const char* key, double dflt)
{
    if (!j.contains(key))
        return ParamRange::fixed(dflt);
    const auto& v = j.at(key);
    if (v.is_number())
        return ParamRange::fixed(v.get<double>());
    if (v.is_array() && v.size() == 2)
        return {v[0].get<double>(), v[1].get<double>()};
    throw ValidationError(std::string("degradation field '") + key + "' must be a number or [lo, hi]");
}

inline RecipeSpec recipe_spec_from_json(const nlohmann::json& j, std::string default_id)
{
    RecipeSpec s;
    s.method_id = j.value("id", std::move(default_id));
    s.gamma = range_from_json(j, "gamma", 1.0);
    s.noise_sigma = range_from_json(j, "noise_sigma", 0.0);
    s.blur_sigma = range_from_json(j, "blur_sigma", 0.0);
    if (j.contains("gains"))
        s.gains = j.at("gains").get<std::array<double, 3>>();
    s.contrast = range_from_json(j, "contrast", 1.0);
    s.exposure = range_from_json(j, "exposure", 0.0);
    return s;
}

inline DegradationConfig degradation_config_from_json(const nlohmann::json& j)
{
    try {
        DegradationConfig c;
        c.low_light = recipe_spec_from_json(j.at("low_light"), kLowLightMethod);
        c.low_light.method_id = kLowLightMethod;
        for (const auto& m : j.at("methods"))
            c.methods.push_back(recipe_spec_from_json(m, ""));
        if (j.contains("synthetic_bases")) {
            const auto& s = j.at("synthetic_bases");
            c.synthetic.count = s.value("count", 0);
            c.synthetic.height = s.value("height", 64);
            c.synthetic.width = s.value("width", 64);
        }
        if (j.contains("base_images"))
            c.base_image_paths = j.at("base_images").get<std::vector<std::string>>();
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& ex) {
        throw ValidationError(std::string("degradation config: ") + ex.what());
    }
}

/// A spread of recipes spanning noise, blur, exposure, contrast and colour
/// cast; used by tests and as the CLI default.
inline DegradationConfig default_degradation_config()
{
    DegradationConfig c;
    c.low_light.method_id = kLowLightMethod;
    c.low_light.gamma = {2.0, 3.0};
    c.low_light.noise_sigma = {0.005, 0.02};
    auto spec = [](std::string id) {
        RecipeSpec s;
        s.method_id = std::move(id);
        return s;
    };
    RecipeSpec a = spec("mild_noise");
    a.noise_sigma = {0.005, 0.02};
    RecipeSpec b = spec("heavy_noise");
    b.noise_sigma = {0.04, 0.08};
    b.gamma = {1.0, 1.3};
    RecipeSpec d = spec("blurry");
    d.blur_sigma = {1.0, 2.0};
    RecipeSpec e = spec("under_exposed");
    e.gamma = {1.6, 2.4};
    e.noise_sigma = {0.0, 0.01};
    RecipeSpec f = spec("over_exposed");
    f.exposure = {0.15, 0.3};
    f.contrast = {0.8, 1.0};
    RecipeSpec g = spec("color_cast");
    g.gains = {1.25, 1.0, 0.75};
    g.contrast = {0.5, 0.7};
    c.methods = {a, b, d, e, f, g};
    c.synthetic = {60, 64, 64};
    return c;
}

// ---- synthetic content ------------------------------------------------------

/// Procedural scene: a colour gradient with a sinusoidal texture and a few
/// flat shapes. Kept inside [0.05, 0.95] so degradations remain visible.
inline ImageBuffer synthesize_base_image(int height, int width, std::uint64_t seed)
{
    auto rng = make_rng(seed, {0x5eed});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::array<double, 3> c0{u(rng), u(rng), u(rng)};
    std::array<double, 3> c1{u(rng), u(rng), u(rng)};
    const double angle = u(rng) * 3.14159265358979;
    const double freq = 0.05 + 0.3 * u(rng);
    const double amp = 0.05 + 0.15 * u(rng);
    const double phase = u(rng) * 6.28318530717959;

    Tensor<float> p(3, height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double t = (std::cos(angle) * x / width + std::sin(angle) * y / height + 1.0) / 2.0;
            const double tex = amp * std::sin(freq * (x * std::cos(angle + 1.3) + y * std::sin(angle + 1.3)) + phase);
            for (int c = 0; c < 3; ++c)
                p(c, y, x) = static_cast<float>(c0[c] * (1.0 - t) + c1[c] * t + tex);
        }
    const int shapes = 3 + static_cast<int>(u(rng) * 4);
    for (int s = 0; s < shapes; ++s) {
        std::array<double, 3> col{u(rng), u(rng), u(rng)};
        const double cx = u(rng) * width;
        const double cy = u(rng) * height;
        const double rad = (0.08 + 0.2 * u(rng)) * std::min(height, width);
        const bool circle = u(rng) < 0.5;
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                const bool inside = circle ? ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= rad * rad)
                                           : (std::abs(x - cx) <= rad && std::abs(y - cy) <= 0.6 * rad);
                if (inside)
                    for (int c = 0; c < 3; ++c)
                        p(c, y, x) = static_cast<float>(col[c]);
            }
    }
    for (float& v : p.data())
        v = std::clamp(v, 0.05f, 0.95f);
    return ImageBuffer(std::move(p));
}

inline std::vector<ImageBuffer> synthesize_base_images(const SyntheticBaseSpec& spec, std::uint64_t seed)
{
    std::vector<ImageBuffer> out;
    for (int i = 0; i < spec.count; ++i)
        out.push_back(quantize_image(synthesize_base_image(spec.height, spec.width, derive_seed(seed, {7, static_cast<std::uint64_t>(i)}))));
    return out;
}

inline std::string content_id_for(std::size_t index)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "c%04zu", index);
    return buf;
}

/// Writes reference, low-light and one pseudo-enhanced image per configured
/// method for every base image under `out_dir`, returning the manifest.
/// Output does not depend on the number of worker threads.
inline CorpusManifest generate_degraded_corpus(const std::vector<ImageBuffer>& base_images,
                                               const DegradationConfig& config, std::uint64_t seed,
                                               const std::filesystem::path& out_dir, unsigned threads = 1)
{
    if (base_images.empty())
        throw ValidationError("generate_degraded_corpus: empty base image set");
    config.validate();

    std::vector<std::vector<ManifestEntry>> per_content(base_images.size());
    auto work = [&](std::size_t i) {
        const std::string cid = content_id_for(i);
        auto& entries = per_content[i];
        const auto& ref = base_images[i];
        const std::string ref_path = cid + "/reference.png";
        save_image(ref, out_dir / ref_path);
        entries.push_back({cid, Role::reference, std::nullopt, ref_path, std::nullopt});

        auto emit = [&](const RecipeSpec& spec, std::size_t slot, Role role) {
            auto param_rng = make_rng(seed, {i, slot, 0});
            auto noise_rng = make_rng(seed, {i, slot, 1});
            const DegradationRecipe r = spec.sample(param_rng);
            const ImageBuffer img = apply_recipe(ref, r, noise_rng);
            const std::string rel = cid + "/" + spec.method_id + ".png";
            save_image(img, out_dir / rel);
            entries.push_back({cid, role, spec.method_id, rel, r});
        };
        emit(config.low_light, 0, Role::low_light);
        for (std::size_t m = 0; m < config.methods.size(); ++m)
            emit(config.methods[m], m + 1, Role::enhanced);
    };

    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(base_images.size())));
    if (threads == 1) {
        for (std::size_t i = 0; i < base_images.size(); ++i)
            work(i);
    } else {
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        std::mutex failure_mu;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = t; i < base_images.size(); i += threads)
                        work(i);
                } catch (...) {
                    std::lock_guard lock(failure_mu);
                    if (!failure)
                        failure = std::current_exception();
                }
            });
        for (auto& th : pool)
            th.join();
        if (failure)
            std::rethrow_exception(failure);
    }

    CorpusManifest manifest;
    manifest.seed = seed;
    for (auto& entries : per_content)
        for (auto& e : entries)
            manifest.entries.push_back(std::move(e));
    manifest.validate();
    return manifest;
}

// ---- splits -----------------------------------------------------------------

struct SplitSpec {
    std::set<std::string> train_content_ids;
    std::set<std::string> test_content_ids;

    /// Digest of the sorted train ids; stored with trained models.
    std::string digest() const
    {
        std::string joined;
        for (const auto& id : train_content_ids)
            joined += id + "\n";
        return fnv1a_hex(joined);
    }
};

/// Random content-level partition; every entry of a content lands on one side.
inline SplitSpec split_by_content(const CorpusManifest& manifest, double test_fraction, std::uint64_t seed)
{
    if (manifest.entries.empty())
        throw ValidationError("split_by_content: empty manifest");
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ValidationError("split_by_content: test_fraction must be in (0,1)");
    std::vector<std::string> ids = manifest.content_ids();
    const auto n = ids.size();
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    if (n_test == 0 || n_test >= n)
        throw ValidationError("split_by_content: fraction " + std::to_string(test_fraction) + " of " +
                              std::to_string(n) + " contents leaves one side empty");
    auto rng = make_rng(seed, {0x5b117});
    std::shuffle(ids.begin(), ids.end(), rng);
    SplitSpec s;
    s.test_content_ids.insert(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.train_content_ids.insert(ids.begin() + static_cast<std::ptrdiff_t>(n_test), ids.end());
    return s;
}

inline nlohmann::json to_json(const SplitSpec& s)
{
    return {{"train_content_ids", std::vector<std::string>(s.train_content_ids.begin(), s.train_content_ids.end())},
            {"test_content_ids", std::vector<std::string>(s.test_content_ids.begin(), s.test_content_ids.end())}};
}

inline SplitSpec split_from_json(const nlohmann::json& j)
{
    SplitSpec s;
    for (const auto& id : j.at("train_content_ids"))
        s.train_content_ids.insert(id.get<std::string>());
    for (const auto& id : j.at("test_content_ids"))
        s.test_content_ids.insert(id.get<std::string>());
    for (const auto& id : s.test_content_ids)
        if (s.train_content_ids.count(id))
            throw ValidationError("split: content " + id + " on both sides");
    return s;
}

// ---- cropping ---------------------------------------------------------------

struct CropOffset {
    int y = 0;
    int x = 0;
};

inline CropOffset crop_offset(int height, int width, int size, std::uint64_t seed)
{
    if (size < 1 || height < size || width < size)
        throw ValidationError("crop_patch: image " + std::to_string(height) + "x" + std::to_string(width) +
                              " smaller than patch size " + std::to_string(size));
    auto rng = make_rng(seed, {0xc209});
    CropOffset o;
    o.y = std::uniform_int_distribution<int>(0, height - size)(rng);
    o.x = std::uniform_int_distribution<int>(0, width - size)(rng);
    return o;
}

inline ImageBuffer crop_at(const ImageBuffer& image, CropOffset o, int size)
{
    Tensor<float> p(3, size, size);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                p(c, y, x) = image(c, o.y + y, o.x + x);
    return ImageBuffer(std::move(p));
}

/// Seeded uniform-random size x size window; no padding or resampling.
inline ImageBuffer crop_patch(const ImageBuffer& image, int size, std::uint64_t seed)
{
    return crop_at(image, crop_offset(image.height(), image.width(), size, seed), size);
}

} // namespace percept_loop
