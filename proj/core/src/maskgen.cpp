#include "anomsynth/maskgen.hpp"

#include <cmath>

#include "anomsynth/error.hpp"

namespace anomsynth::maskgen {

using nlohmann::json;

void MaskGenConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, "maskgen: " + m); };
    if (!(l_rate > 0.0 && l_rate <= h_rate && h_rate <= 1.0)) fail("need 0 < l_rate <= h_rate <= 1");
    if (!(thresh1 > 0.0 && thresh1 < 1.0)) fail("thresh1 must lie in (0,1)");
    if (!(thresh2 > 0.0 && thresh2 < 1.0)) fail("thresh2 must lie in (0,1)");
    if (max_retries < 1) fail("max_retries must be positive");
    if (latent_factor < 1) fail("latent_factor must be positive");
}

void to_json(json& j, const MaskGenConfig& c) {
    j = json{{"l_rate", c.l_rate},
             {"h_rate", c.h_rate},
             {"thresh1", c.thresh1},
             {"thresh2", c.thresh2},
             {"max_retries", c.max_retries},
             {"canny_low", c.canny.low},
             {"canny_high", c.canny.high},
             {"latent_factor", c.latent_factor},
             {"thresh1_base", "rect"},
             {"thresh2_base", "overlap"}};
}

void from_json(const json& j, MaskGenConfig& c) {
    c.l_rate = j.value("l_rate", c.l_rate);
    c.h_rate = j.value("h_rate", c.h_rate);
    c.thresh1 = j.value("thresh1", c.thresh1);
    c.thresh2 = j.value("thresh2", c.thresh2);
    c.max_retries = j.value("max_retries", c.max_retries);
    c.canny.low = j.value("canny_low", c.canny.low);
    c.canny.high = j.value("canny_high", c.canny.high);
    c.latent_factor = j.value("latent_factor", c.latent_factor);
}

BinaryMask Rect::to_mask(int image_width, int image_height) const {
    BinaryMask m(image_width, image_height);
    for (int yy = y; yy < y + height; ++yy) {
        for (int xx = x; xx < x + width; ++xx) m.set(xx, yy);
    }
    return m;
}

namespace {

// Inclusive side-length range for one axis.
std::pair<int, int> side_range(int n, const MaskGenConfig& c) {
    const int lo = static_cast<int>(std::ceil(c.l_rate * n - 1e-9));
    const int hi = static_cast<int>(std::floor(c.h_rate * n + 1e-9));
    if (c.l_rate * n < 1.0 - 1e-9 || lo > hi || hi > n) {
        throw_invalid("image side " + std::to_string(n) + " is too small for the rectangle size range");
    }
    return {lo, hi};
}

}  // namespace

Rect sample_rect(int height, int width, const MaskGenConfig& config, Rng& rng) {
    config.validate();
    const auto [hlo, hhi] = side_range(height, config);
    const auto [wlo, whi] = side_range(width, config);
    Rect r;
    r.height = std::uniform_int_distribution<int>(hlo, hhi)(rng);
    r.width = std::uniform_int_distribution<int>(wlo, whi)(rng);
    r.y = std::uniform_int_distribution<int>(0, height - r.height)(rng);
    r.x = std::uniform_int_distribution<int>(0, width - r.width)(rng);
    return r;
}

BinaryMask pool_any(const BinaryMask& mask, int factor) {
    if (factor < 1 || mask.width() % factor != 0 || mask.height() % factor != 0) {
        throw_invalid("mask dimensions are not divisible by the latent factor");
    }
    BinaryMask out(mask.width() / factor, mask.height() / factor);
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.at(x, y)) out.set(x / factor, y / factor);
        }
    }
    return out;
}

MaskBundle generate(const Image& normal_image, const BinaryMask& foreground, const Image& texture,
                    const MaskGenConfig& config, Rng& rng) {
    config.validate();
    const int w = normal_image.width();
    const int h = normal_image.height();
    if (foreground.width() != w || foreground.height() != h) {
        throw_invalid("foreground mask does not match the normal image");
    }
    if (w % config.latent_factor != 0 || h % config.latent_factor != 0) {
        throw_invalid("image dimensions are not divisible by the latent factor");
    }
    const Image registered = resize(texture, w, h);
    const BinaryMask texture_edges = imageops::canny(to_gray(registered), config.canny);

    std::string reason;
    for (int attempt = 0; attempt < config.max_retries; ++attempt) {
        const Rect rect = sample_rect(h, w, config, rng);
        const BinaryMask m_r = rect.to_mask(w, h);
        if (!(imageops::area_fraction(foreground, m_r) > config.thresh1)) {
            reason = "foreground overlap";
            continue;
        }
        const BinaryMask m_ov = m_r & foreground;
        if (!(imageops::area_fraction(texture_edges, m_ov) > config.thresh2)) {
            reason = "texture overlap";
            continue;
        }

        MaskBundle bundle;
        bundle.m_in = m_ov;
        bundle.texture_support = imageops::close_texture(m_ov & texture_edges) & m_ov;
        bundle.x_texture = apply_mask(registered, bundle.texture_support);
        bundle.m_texture_latent = pool_any(bundle.texture_support, config.latent_factor);
        bundle.rect = rect;
        bundle.retries_used = attempt;
        return bundle;
    }
    throw GenerationFailed(reason, config.max_retries);
}

}  // namespace anomsynth::maskgen
