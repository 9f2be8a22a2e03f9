#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace anomsynth {

/// Row-major luminance image with values in [0,1].
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int width, int height, float fill = 0.0f);
    GrayImage(int width, int height, std::vector<float> values);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    float& at(int x, int y) { return values_[static_cast<std::size_t>(y) * width_ + x]; }
    float at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }

    std::span<float> values() noexcept { return values_; }
    std::span<const float> values() const noexcept { return values_; }

    bool operator==(const GrayImage&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<float> values_;
};

/// Interleaved multi-channel image (1 or 3 channels), values in [0,1].
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, float fill = 0.0f);
    Image(int width, int height, int channels, std::vector<float> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    bool empty() const noexcept { return data_.empty(); }

    float& at(int x, int y, int c) {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    float at(int x, int y, int c) const {
        return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    bool operator==(const Image&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
};

/// Row-major boolean mask. Bits are stored one per byte (0 or 1).
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height, bool fill = false);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return bits_.size(); }

    bool at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    void set(int x, int y, bool v = true) {
        bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
    }
    bool operator[](std::size_t i) const { return bits_[i] != 0; }

    std::span<std::uint8_t> bits() noexcept { return bits_; }
    std::span<const std::uint8_t> bits() const noexcept { return bits_; }

    std::size_t count() const noexcept;
    bool same_shape(const BinaryMask& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_;
    }

    bool operator==(const BinaryMask&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

BinaryMask operator&(const BinaryMask& a, const BinaryMask& b);
BinaryMask operator|(const BinaryMask& a, const BinaryMask& b);
BinaryMask operator~(const BinaryMask& m);

/// True when every set bit of `inner` is also set in `outer`.
bool is_subset(const BinaryMask& inner, const BinaryMask& outer);

/// BT.601 luminance; single-channel images pass through.
GrayImage to_gray(const Image& img);
Image to_image(const GrayImage& gray);

/// Area-average resample for downscaling, bilinear for upscaling.
Image resize(const Image& img, int width, int height);
GrayImage resize(const GrayImage& img, int width, int height);

/// Pixels where `mask` is false are set to zero.
Image apply_mask(const Image& img, const BinaryMask& mask);
GrayImage apply_mask(const GrayImage& img, const BinaryMask& mask);

}  // namespace anomsynth
