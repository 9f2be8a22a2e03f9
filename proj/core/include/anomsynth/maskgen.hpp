#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "anomsynth/image.hpp"
#include "anomsynth/imageops.hpp"

namespace anomsynth::maskgen {

struct MaskGenConfig {
    double l_rate = 0.1;   ///< smallest rectangle side as a fraction of the image side
    double h_rate = 0.3;   ///< largest rectangle side as a fraction of the image side
    double thresh1 = 0.3;  ///< minimum foreground share of the rectangle
    double thresh2 = 0.05; ///< minimum texture-edge share of the overlap region
    int max_retries = 200;
    imageops::CannyThresholds canny{};
    int latent_factor = 8;

    /// Throws Error(Config) when a field is out of range.
    void validate() const;
};

void to_json(nlohmann::json& j, const MaskGenConfig& c);
void from_json(const nlohmann::json& j, MaskGenConfig& c);

struct Rect {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;

    bool operator==(const Rect&) const = default;
    BinaryMask to_mask(int image_width, int image_height) const;
};

struct MaskBundle {
    BinaryMask m_in;              ///< inpainting mask: rectangle & foreground
    Image x_texture;              ///< adaptive texture, zero outside texture_support
    BinaryMask texture_support;   ///< pixels of x_texture taken from the texture
    BinaryMask m_texture_latent;  ///< texture_support pooled (any-true) per latent block
    Rect rect;
    int retries_used = 0;         ///< rejected draws before the accepted one
};

using Rng = std::mt19937_64;

/// Side lengths drawn uniformly from [ceil(l_rate*N), floor(h_rate*N)],
/// position uniform over all placements that fit.
Rect sample_rect(int height, int width, const MaskGenConfig& config, Rng& rng);

/// Any-true pooling over factor x factor blocks.
BinaryMask pool_any(const BinaryMask& mask, int factor);

/// Rejection-samples rectangles until the foreground and texture-edge overlap
/// tests both pass. `texture` is resized to the normal image's size first.
/// Throws GenerationFailed carrying the last rejection reason
/// ("foreground overlap" or "texture overlap").
MaskBundle generate(const Image& normal_image, const BinaryMask& foreground, const Image& texture,
                    const MaskGenConfig& config, Rng& rng);

}  // namespace anomsynth::maskgen
