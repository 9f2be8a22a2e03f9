#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "anomsynth/image.hpp"
#include "anomsynth/orchestrator.hpp"

namespace anomsynth::demo {

/// Dark background with a bright, lightly textured ellipse in the middle, so
/// a luminance-threshold segmenter finds the object.
Image normal_image(int size = 256, std::uint64_t seed = 0);

enum class Pattern { Waves, Checker, Spots, Lines, BlockNoise };

/// Synthetic RGB texture of the given family.
Image texture(Pattern pattern, int size, std::uint64_t seed);

/// Four textures whose edge densities fall below, inside, inside and above
/// the default cleaning bounds (roughly 0.01, 0.12, 0.5, 0.74).
std::vector<Image> density_ladder(int size = 256);

struct Fixture {
    std::filesystem::path root;
    std::filesystem::path library;
    std::filesystem::path normal_image;
    std::filesystem::path config;
    orchestrator::RunConfig run_config;
};

/// Writes a small ready-to-synthesize workspace under `root`:
/// normal.png, textures/<category>/*.png, a library with every clean texture
/// accepted and embedded, and config.json for object "cashew".
Fixture build_fixture(const std::filesystem::path& root, std::uint64_t seed = 0, int count = 10);

}  // namespace anomsynth::demo
