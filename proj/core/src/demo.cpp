#include "anomsynth/demo.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "anomsynth/error.hpp"
#include "anomsynth/png_io.hpp"
#include "anomsynth/texlib.hpp"

namespace anomsynth::demo {

namespace fs = std::filesystem;

namespace {

Image from_gray(int size, const std::array<float, 3>& tint, const auto& f) {
    Image img(size, size, 3);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const float v = std::clamp(static_cast<float>(f(x, y)), 0.0f, 1.0f);
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = std::clamp(v * tint[c], 0.0f, 1.0f);
        }
    }
    return img;
}

}  // namespace

Image normal_image(int size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> grain(-0.03f, 0.03f);
    const double cx = size / 2.0;
    const double cy = size / 2.0;
    const double rx = size * 0.36;
    const double ry = size * 0.28;
    Image img(size, size, 3);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double dx = (x - cx) / rx;
            const double dy = (y - cy) / ry;
            const bool inside = dx * dx + dy * dy <= 1.0;
            const float g = grain(rng);
            if (inside) {
                const float shade = 0.78f - 0.12f * static_cast<float>(dx * dx + dy * dy) + g;
                img.at(x, y, 0) = shade + 0.08f;
                img.at(x, y, 1) = shade;
                img.at(x, y, 2) = shade - 0.12f;
            } else {
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = 0.12f + 0.5f * g;
            }
        }
    }
    return img;
}

Image texture(Pattern pattern, int size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::array<float, 3> tint{static_cast<float>(0.8 + 0.2 * u(rng)), static_cast<float>(0.7 + 0.3 * u(rng)),
                                    static_cast<float>(0.6 + 0.4 * u(rng))};
    switch (pattern) {
        case Pattern::Waves: {
            const double f = 0.5 + 0.7 * u(rng);
            const double g = 0.5 + 0.7 * u(rng);
            return from_gray(size, tint, [&](int x, int y) { return 0.5 + 0.25 * (std::sin(f * x) + std::sin(g * y)); });
        }
        case Pattern::Checker: {
            const int p = 6 + static_cast<int>(u(rng) * 10);
            return from_gray(size, tint, [&](int x, int y) { return ((x / p) + (y / p)) % 2 ? 0.85 : 0.2; });
        }
        case Pattern::Spots: {
            std::vector<std::array<double, 3>> spots(40 + static_cast<int>(u(rng) * 40));
            for (auto& s : spots) s = {u(rng) * size, u(rng) * size, 3.0 + 6.0 * u(rng)};
            return from_gray(size, tint, [&](int x, int y) {
                for (const auto& s : spots) {
                    if (std::hypot(x - s[0], y - s[1]) < s[2]) return 0.15;
                }
                return 0.8;
            });
        }
        case Pattern::Lines: {
            const double angle = u(rng) * std::numbers::pi;
            const double period = 5.0 + 6.0 * u(rng);
            const double ca = std::cos(angle);
            const double sa = std::sin(angle);
            return from_gray(size, tint, [&](int x, int y) {
                const double t = std::fmod(std::abs(x * ca + y * sa), period);
                return t < 1.5 ? 0.1 : 0.75;
            });
        }
        case Pattern::BlockNoise: {
            const int p = 3 + static_cast<int>(u(rng) * 4);
            const int cells = size / p + 1;
            std::vector<double> v(static_cast<std::size_t>(cells) * cells);
            for (auto& x : v) x = u(rng);
            return from_gray(size, tint, [&](int x, int y) { return 0.2 + 0.6 * v[(y / p) * cells + x / p]; });
        }
    }
    throw_invalid("unknown pattern");
}

std::vector<Image> density_ladder(int size) {
    const std::array<float, 3> gray{1.0f, 1.0f, 1.0f};
    const double half = std::numbers::pi / 2.0;
    const double r = size * 0.3;
    return {
        from_gray(size, gray, [&](int x, int y) { return std::hypot(x - size / 2.0, y - size / 2.0) < r ? 0.8 : 0.2; }),
        from_gray(size, gray, [](int x, int y) { return ((x / 16) + (y / 16)) % 2 ? 0.8 : 0.2; }),
        from_gray(size, gray, [](int x, int y) { return 0.5 + 0.25 * (std::sin(1.1 * x) + std::sin(1.1 * y)); }),
        from_gray(size, gray, [&](int x, int y) { return 0.5 + 0.25 * (std::sin(half * x) + std::sin(half * y)); }),
    };
}

Fixture build_fixture(const fs::path& root, std::uint64_t seed, int count) {
    Fixture fx;
    fx.root = fs::absolute(root);
    fx.library = fx.root / "library";
    fx.normal_image = fx.root / "normal.png";
    fx.config = fx.root / "config.json";
    fs::create_directories(fx.root);
    png::write(fx.normal_image, normal_image(256, seed));

    const std::vector<std::pair<std::string, Pattern>> categories = {
        {"cracked", Pattern::Lines},   {"moldy", Pattern::Spots},       {"scratched", Pattern::Lines},
        {"stained", Pattern::Waves},   {"corroded", Pattern::BlockNoise}, {"discolored", Pattern::Checker},
    };
    auto library = texlib::TextureLibrary::create(fx.library, texlib::Taxonomy::default_taxonomy());
    std::uint64_t k = 0;
    for (const auto& [category, pattern] : categories) {
        const fs::path dir = fx.root / "textures" / category;
        fs::create_directories(dir);
        for (int i = 0; i < 3; ++i) {
            png::write(dir / (category + "-" + std::to_string(i) + ".png"),
                       texture(pattern, 128, seed * 1000 + (++k)));
        }
        library.ingest(category, dir);
    }
    for (const auto& a : library.queue(texlib::CurationState::Pending, std::nullopt, 1000, 0).items) {
        library.decide(a.asset_id, texlib::Decision::Accept, std::nullopt, "fixture");
    }

    orchestrator::RunConfig& cfg = fx.run_config;
    cfg.seed = seed;
    cfg.paths.library = fx.library.string();
    cfg.paths.out = (fx.root / "out").string();
    cfg.objects["cashew"] = orchestrator::ObjectSpec{{fx.normal_image.string()}, count, {}};
    BackendSet backends = make_backends(cfg.backends);
    library.build_embedding_cache(*backends.image_embedder);
    library.record_backends(backends.descriptors());
    library.save();

    std::ofstream out(fx.config);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + fx.config.string());
    out << nlohmann::json(cfg).dump(2) << '\n';
    return fx;
}

}  // namespace anomsynth::demo
