#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace skinres {

/// Planar (channel-major) float image, shape (channels, height, width).
/// Values are on the 0-255 scale when decoded from disk; processing keeps them unclamped.
class Image {
public:
    Image() = default;
    Image(int channels, int height, int width, float fill = 0.0f);
    Image(int channels, int height, int width, std::vector<float> data);

    int channels() const noexcept { return channels_; }
    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    bool empty() const noexcept { return data_.empty(); }
    bool is_square() const noexcept { return height_ == width_; }
    std::size_t plane_size() const noexcept {
        return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
    }

    float& at(int c, int y, int x) noexcept { return data_[index(c, y, x)]; }
    float at(int c, int y, int x) const noexcept { return data_[index(c, y, x)]; }

    std::span<float> plane(int c) noexcept { return {data_.data() + c * plane_size(), plane_size()}; }
    std::span<const float> plane(int c) const noexcept {
        return {data_.data() + c * plane_size(), plane_size()};
    }

    std::span<float> values() noexcept { return data_; }
    std::span<const float> values() const noexcept { return data_; }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int c, int y, int x) const noexcept {
        return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
    }

    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<float> data_;
};

/// Decodes an 8-bit image file into RGB planar floats. Throws Error(io) when the file
/// cannot be decoded and Error(shape) when it is not a 3-channel image.
Image load_rgb(const std::filesystem::path& path);

/// Writes an 8-bit RGB image (values rounded and saturated to 0-255).
void save_rgb(const std::filesystem::path& path, const Image& image);

}  // namespace skinres
