#pragma once

#include <optional>

#include "anomsynth/image.hpp"

namespace anomsynth::imageops {

struct CannyThresholds {
    double low = 0.1;   ///< fraction of the maximum gradient magnitude
    double high = 0.3;  ///< fraction of the maximum gradient magnitude
};

/// Edge mask via 5x5 Gaussian blur (sigma 1.4), Sobel gradients, non-maximum
/// suppression and 8-connected double-threshold hysteresis. Thresholds are
/// fractions of the image's maximum gradient magnitude; a flat image has no
/// edges. Requires both dimensions >= 5.
BinaryMask canny(const GrayImage& img, double low_thresh, double high_thresh);
inline BinaryMask canny(const GrayImage& img, const CannyThresholds& t = {}) {
    return canny(img, t.low, t.high);
}

/// Exposed for tests and diagnostics.
GrayImage gaussian_blur5(const GrayImage& img);
std::vector<double> sobel_magnitude(const GrayImage& img);

BinaryMask dilate5(const BinaryMask& mask);
BinaryMask erode5(const BinaryMask& mask);
/// Dilation followed by erosion with a 5x5 square.
BinaryMask closing5(const BinaryMask& mask);

/// invert, then 5x5 closing. Fills thin gaps between the inverted regions.
BinaryMask close_texture(const BinaryMask& mask);

/// Number of 8-connected components of set bits.
int count_components(const BinaryMask& mask);

/// Per-pixel SSIM (11x11 Gaussian window, sigma 1.5, L = 1), clamped to [0,1].
GrayImage ssim_map(const GrayImage& a, const GrayImage& b);

/// count(mask & base) / count(base); a null base means the whole image.
double area_fraction(const BinaryMask& mask, const BinaryMask& base);
double area_fraction(const BinaryMask& mask);

/// Index into [0, n) with reflect-101 border handling (…2 1 | 0 1 2 … n-1 | n-2…).
int reflect(int i, int n);

}  // namespace anomsynth::imageops
