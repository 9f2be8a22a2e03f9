#include "anomsynth/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "anomsynth/error.hpp"

namespace anomsynth {

namespace {

void check_dims(int width, int height) {
    if (width <= 0 || height <= 0) {
        throw_invalid("image dimensions must be positive, got " + std::to_string(width) +
                      "x" + std::to_string(height));
    }
}

void check_same(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_shape(b)) throw_invalid("mask dimension mismatch");
}

// One output sample's contribution list along one axis.
struct Tap {
    int index;
    double weight;
};

std::vector<std::vector<Tap>> axis_weights(int in, int out) {
    std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    if (out <= in) {
        // Box integral of the source interval covered by each output sample.
        for (int o = 0; o < out; ++o) {
            const double lo = o * scale;
            const double hi = (o + 1) * scale;
            double total = 0.0;
            for (int i = static_cast<int>(std::floor(lo)); i < static_cast<int>(std::ceil(hi)); ++i) {
                const double w = std::min<double>(hi, i + 1) - std::max<double>(lo, i);
                if (w > 1e-12) {
                    taps[o].push_back({std::clamp(i, 0, in - 1), w});
                    total += w;
                }
            }
            for (auto& t : taps[o]) t.weight /= total;
        }
    } else {
        for (int o = 0; o < out; ++o) {
            const double src = (o + 0.5) * scale - 0.5;
            const int i0 = static_cast<int>(std::floor(src));
            const double f = src - i0;
            taps[o].push_back({std::clamp(i0, 0, in - 1), 1.0 - f});
            if (f > 0.0) taps[o].push_back({std::clamp(i0 + 1, 0, in - 1), f});
        }
    }
    return taps;
}

}  // namespace

GrayImage::GrayImage(int width, int height, float fill) : width_(width), height_(height) {
    check_dims(width, height);
    values_.assign(static_cast<std::size_t>(width) * height, fill);
}

GrayImage::GrayImage(int width, int height, std::vector<float> values)
    : width_(width), height_(height), values_(std::move(values)) {
    check_dims(width, height);
    if (values_.size() != static_cast<std::size_t>(width) * height) {
        throw_invalid("gray image value count does not match dimensions");
    }
}

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
    check_dims(width, height);
    if (channels != 1 && channels != 3) throw_invalid("images must have 1 or 3 channels");
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image::Image(int width, int height, int channels, std::vector<float> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    check_dims(width, height);
    if (channels != 1 && channels != 3) throw_invalid("images must have 1 or 3 channels");
    if (data_.size() != static_cast<std::size_t>(width) * height * channels) {
        throw_invalid("image sample count does not match dimensions");
    }
}

BinaryMask::BinaryMask(int width, int height, bool fill) : width_(width), height_(height) {
    check_dims(width, height);
    bits_.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
}

std::size_t BinaryMask::count() const noexcept {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask operator&(const BinaryMask& a, const BinaryMask& b) {
    check_same(a, b);
    BinaryMask out(a.width(), a.height());
    auto o = out.bits();
    auto x = a.bits();
    auto y = b.bits();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] & y[i];
    return out;
}

BinaryMask operator|(const BinaryMask& a, const BinaryMask& b) {
    check_same(a, b);
    BinaryMask out(a.width(), a.height());
    auto o = out.bits();
    auto x = a.bits();
    auto y = b.bits();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] | y[i];
    return out;
}

BinaryMask operator~(const BinaryMask& m) {
    BinaryMask out(m.width(), m.height());
    auto o = out.bits();
    auto x = m.bits();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] ? 0 : 1;
    return out;
}

bool is_subset(const BinaryMask& inner, const BinaryMask& outer) {
    check_same(inner, outer);
    auto a = inner.bits();
    auto b = outer.bits();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] && !b[i]) return false;
    }
    return true;
}

GrayImage to_gray(const Image& img) {
    GrayImage out(img.width(), img.height());
    auto dst = out.values();
    auto src = img.data();
    if (img.channels() == 1) {
        std::copy(src.begin(), src.end(), dst.begin());
        return out;
    }
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const float r = src[3 * i];
        const float g = src[3 * i + 1];
        const float b = src[3 * i + 2];
        dst[i] = std::clamp(0.299f * r + 0.587f * g + 0.114f * b, 0.0f, 1.0f);
    }
    return out;
}

Image to_image(const GrayImage& gray) {
    std::vector<float> data(gray.values().begin(), gray.values().end());
    return Image(gray.width(), gray.height(), 1, std::move(data));
}

Image resize(const Image& img, int width, int height) {
    check_dims(width, height);
    if (width == img.width() && height == img.height()) return img;
    const auto wx = axis_weights(img.width(), width);
    const auto wy = axis_weights(img.height(), height);
    const int ch = img.channels();

    // Horizontal pass then vertical pass.
    std::vector<double> tmp(static_cast<std::size_t>(width) * img.height() * ch, 0.0);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < width; ++x) {
            for (const auto& t : wx[x]) {
                for (int c = 0; c < ch; ++c) {
                    tmp[(static_cast<std::size_t>(y) * width + x) * ch + c] +=
                        t.weight * img.at(t.index, y, c);
                }
            }
        }
    }
    Image out(width, height, ch);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < ch; ++c) {
                double acc = 0.0;
                for (const auto& t : wy[y]) {
                    acc += t.weight * tmp[(static_cast<std::size_t>(t.index) * width + x) * ch + c];
                }
                out.at(x, y, c) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
            }
        }
    }
    return out;
}

GrayImage resize(const GrayImage& img, int width, int height) {
    return to_gray(resize(to_image(img), width, height));
}

Image apply_mask(const Image& img, const BinaryMask& mask) {
    if (img.width() != mask.width() || img.height() != mask.height()) {
        throw_invalid("mask and image dimensions differ");
    }
    Image out = img;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            if (mask.at(x, y)) continue;
            for (int c = 0; c < img.channels(); ++c) out.at(x, y, c) = 0.0f;
        }
    }
    return out;
}

GrayImage apply_mask(const GrayImage& img, const BinaryMask& mask) {
    if (img.width() != mask.width() || img.height() != mask.height()) {
        throw_invalid("mask and image dimensions differ");
    }
    GrayImage out = img;
    auto v = out.values();
    auto m = mask.bits();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!m[i]) v[i] = 0.0f;
    }
    return out;
}

}  // namespace anomsynth
