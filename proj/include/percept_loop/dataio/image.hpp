#pragma once

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "percept_loop/core/tensor.hpp"
#include "percept_loop/core/util.hpp"

namespace percept_loop {

/// RGB image with float intensities in [0,1], stored planar (3, H, W).
class ImageBuffer {
public:
    ImageBuffer() = default;

    ImageBuffer(int height, int width, float fill = 0.0f) : pixels_(3, height, width, fill)
    {
        if (height < 1 || width < 1)
            throw ValidationError("ImageBuffer: dimensions must be positive");
        if (!(fill >= 0.0f && fill <= 1.0f))
            throw ValidationError("ImageBuffer: fill outside [0,1]");
    }

    /// Takes ownership of a (3, H, W) tensor; every value must lie in [0,1].
    explicit ImageBuffer(Tensor<float> pixels) : pixels_(std::move(pixels))
    {
        if (pixels_.channels() != 3)
            throw ValidationError("ImageBuffer: expected 3 channels, got " + std::to_string(pixels_.channels()));
        if (pixels_.height() < 1 || pixels_.width() < 1)
            throw ValidationError("ImageBuffer: dimensions must be positive");
        for (float v : pixels_.data())
            if (!(v >= 0.0f && v <= 1.0f))
                throw ValidationError("ImageBuffer: pixel value outside [0,1]");
    }

    int height() const noexcept { return pixels_.height(); }
    int width() const noexcept { return pixels_.width(); }
    bool empty() const noexcept { return pixels_.empty(); }

    float operator()(int c, int y, int x) const noexcept { return pixels_(c, y, x); }
    const Tensor<float>& pixels() const noexcept { return pixels_; }

    /// Writes a value clipped to [0,1].
    void set(int c, int y, int x, float v) noexcept { pixels_(c, y, x) = std::clamp(v, 0.0f, 1.0f); }

    template <typename T>
    Tensor<T> to_tensor() const
    {
        return pixels_.template cast<T>();
    }

    /// Builds an image from arbitrary values by clamping into [0,1].
    template <typename T>
    static ImageBuffer from_clamped(const Tensor<T>& t)
    {
        Tensor<float> p(t.channels(), t.height(), t.width());
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double v = static_cast<double>(t[i]);
            p[i] = std::isnan(v) ? 0.0f : static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
        return ImageBuffer(std::move(p));
    }

    bool operator==(const ImageBuffer&) const = default;

private:
    Tensor<float> pixels_;
};

/// Quantises [0,1] to 8 bits, rounding half away from zero.
inline unsigned char quantize8(float v)
{
    const double scaled = static_cast<double>(std::clamp(v, 0.0f, 1.0f)) * 255.0;
    return static_cast<unsigned char>(std::lround(scaled));
}

namespace detail {

struct PngReadGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReadGuard() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct PngWriteGuard {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriteGuard() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};

[[noreturn]] inline void png_error_fn(png_structp, png_const_charp msg) { throw ValidationError(std::string("png: ") + msg); }
inline void png_warning_fn(png_structp, png_const_charp) {}

} // namespace detail

/// Loads an 8- or 16-bit RGB PNG. Palette and alpha images are rejected
/// rather than silently converted.
inline ImageBuffer load_image(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw ValidationError("load_image: missing file " + path.string());
    std::unique_ptr<std::FILE, detail::FileCloser> file(std::fopen(path.c_str(), "rb"));
    if (!file)
        throw ValidationError("load_image: cannot open " + path.string());
    unsigned char sig[8] = {};
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw ValidationError("load_image: unsupported format (not PNG): " + path.string());

    detail::PngReadGuard g;
    g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_fn, detail::png_warning_fn);
    if (!g.png)
        throw std::runtime_error("load_image: png_create_read_struct failed");
    g.info = png_create_info_struct(g.png);
    png_init_io(g.png, file.get());
    png_set_sig_bytes(g.png, 8);
    png_read_info(g.png, g.info);

    const png_uint_32 width = png_get_image_width(g.png, g.info);
    const png_uint_32 height = png_get_image_height(g.png, g.info);
    const int bit_depth = png_get_bit_depth(g.png, g.info);
    const int color_type = png_get_color_type(g.png, g.info);
    if (color_type != PNG_COLOR_TYPE_RGB)
        throw ValidationError("load_image: non-RGB channel layout in " + path.string());
    if (bit_depth != 8 && bit_depth != 16)
        throw ValidationError("load_image: unsupported bit depth " + std::to_string(bit_depth));
    if (bit_depth == 16)
        png_set_swap(g.png); // little-endian host order for the 16-bit words
    png_read_update_info(g.png, g.info);

    const std::size_t row_bytes = png_get_rowbytes(g.png, g.info);
    std::vector<unsigned char> buffer(row_bytes * height);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y)
        rows[y] = buffer.data() + y * row_bytes;
    png_read_image(g.png, rows.data());
    png_read_end(g.png, nullptr);

    Tensor<float> pixels(3, static_cast<int>(height), static_cast<int>(width));
    for (png_uint_32 y = 0; y < height; ++y)
        for (png_uint_32 x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) {
                float v;
                if (bit_depth == 8) {
                    v = static_cast<float>(rows[y][x * 3 + c]) / 255.0f;
                } else {
                    const auto* p16 = reinterpret_cast<const std::uint16_t*>(rows[y]);
                    v = static_cast<float>(p16[x * 3 + c]) / 65535.0f;
                }
                pixels(c, static_cast<int>(y), static_cast<int>(x)) = v;
            }
    return ImageBuffer(std::move(pixels));
}

/// Writes an 8-bit RGB PNG without alpha. Output bytes depend only on pixels.
inline void save_image(const ImageBuffer& image, const std::filesystem::path& path)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::unique_ptr<std::FILE, detail::FileCloser> file(std::fopen(path.c_str(), "wb"));
    if (!file)
        throw std::runtime_error("save_image: cannot open " + path.string());

    detail::PngWriteGuard g;
    g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_fn, detail::png_warning_fn);
    if (!g.png)
        throw std::runtime_error("save_image: png_create_write_struct failed");
    g.info = png_create_info_struct(g.png);
    png_init_io(g.png, file.get());
    png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(image.width()), static_cast<png_uint_32>(image.height()), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(g.png, g.info);
    std::vector<unsigned char> row(static_cast<std::size_t>(image.width()) * 3);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<std::size_t>(x) * 3 + c] = quantize8(image(c, y, x));
        png_write_row(g.png, row.data());
    }
    png_write_end(g.png, nullptr);
}

/// Round-trips an image through 8-bit quantisation without touching disk.
inline ImageBuffer quantize_image(const ImageBuffer& image)
{
    Tensor<float> p = image.pixels();
    for (auto& v : p.data())
        v = static_cast<float>(quantize8(v)) / 255.0f;
    return ImageBuffer(std::move(p));
}

} // namespace percept_loop
