#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace percept_loop {

/// Dense planar tensor laid out as (channels, height, width), row-major within
/// each channel. Vectors are stored as (n, 1, 1) and scalars as (1, 1, 1).
template <typename T>
class Tensor {
public:
    Tensor() = default;

    Tensor(int channels, int height, int width, T fill = T(0))
        : channels_(channels), height_(height), width_(width)
    {
        if (channels < 0 || height < 0 || width < 0)
            throw std::invalid_argument("Tensor: negative dimension");
        data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
    }

    static Tensor vector(std::span<const T> values)
    {
        Tensor t(static_cast<int>(values.size()), 1, 1);
        std::copy(values.begin(), values.end(), t.data_.begin());
        return t;
    }

    static Tensor scalar(T value) { return Tensor(1, 1, 1, value); }

    int channels() const noexcept { return channels_; }
    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t plane() const noexcept { return static_cast<std::size_t>(height_) * width_; }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(int c, int y, int x) noexcept
    {
        assert(c < channels_ && y < height_ && x < width_);
        return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
    }
    const T& operator()(int c, int y, int x) const noexcept
    {
        assert(c < channels_ && y < height_ && x < width_);
        return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
    }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T item() const
    {
        if (data_.size() != 1)
            throw std::logic_error("Tensor::item: tensor is not a scalar");
        return data_[0];
    }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    T* raw() noexcept { return data_.data(); }
    const T* raw() const noexcept { return data_.data(); }

    std::span<T> channel(int c) noexcept { return std::span<T>(data_).subspan(c * plane(), plane()); }
    std::span<const T> channel(int c) const noexcept
    {
        return std::span<const T>(data_).subspan(c * plane(), plane());
    }

    bool same_shape(const Tensor& other) const noexcept
    {
        return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    template <typename U>
    Tensor<U> cast() const
    {
        Tensor<U> out(channels_, height_, width_);
        std::transform(data_.begin(), data_.end(), out.data().begin(), [](T v) { return static_cast<U>(v); });
        return out;
    }

    std::string shape_string() const
    {
        std::ostringstream os;
        os << '(' << channels_ << ", " << height_ << ", " << width_ << ')';
        return os.str();
    }

    bool operator==(const Tensor&) const = default;

private:
    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<T> data_;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what)
{
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

} // namespace percept_loop
