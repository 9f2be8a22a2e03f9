#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "anomsynth/backends.hpp"
#include "anomsynth/descmatch.hpp"
#include "anomsynth/maskgen.hpp"
#include "anomsynth/image.hpp"

namespace testsupport {

using anomsynth::BinaryMask;
using anomsynth::GrayImage;
using anomsynth::Image;
using anomsynth::LatentTensor;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

GrayImage random_gray(int w, int h, std::mt19937_64& rng);
Image random_image(int w, int h, int channels, std::mt19937_64& rng);
BinaryMask random_mask(int w, int h, double p, std::mt19937_64& rng);
LatentTensor random_latent(int c, int h, int w, std::mt19937_64& rng);
/// Image constant over factor x factor blocks.
Image block_image(int w, int h, int channels, int factor, std::mt19937_64& rng);

/// Independent Canny: direct 2-D 5x5 convolution, Sobel, NMS, hysteresis by
/// repeated sweeps until nothing changes.
BinaryMask reference_canny(const GrayImage& img, double low, double high);

/// Direct 11x11 Gaussian-window SSIM (sigma 1.5, L = 1, reflect-101), clamped to [0,1].
std::vector<double> reference_ssim(const GrayImage& a, const GrayImage& b);

/// Brute-force 5x5 morphology: every output pixel scans its full window.
BinaryMask brute_dilate5(const BinaryMask& m);
BinaryMask brute_erode5(const BinaryMask& m);

/// Components by repeated label propagation (no stack, no union-find).
int brute_components(const BinaryMask& m);

std::size_t brute_count(const BinaryMask& m);

/// Mask with a prescribed number of set bits at random positions.
BinaryMask mask_with_count(int w, int h, std::size_t count, std::mt19937_64& rng);

/// Byte-for-byte comparison of two directory trees; returns the first
/// difference or an empty string.
std::string diff_trees(const std::filesystem::path& a, const std::filesystem::path& b);

/// Random matching instance: up to 64 pool entries with planted ties and
/// occasional exact self-matches.
struct MatchCase {
    anomsynth::descmatch::AnomalyDescriptor descriptor;
    anomsynth::EmbeddingVector query;
    std::vector<anomsynth::texlib::PoolEntry> pool;
};
MatchCase random_match_case(std::mt19937_64& rng, std::size_t max_pool = 64);

/// Exhaustive scan: highest dot product, ties to the smallest id.
std::pair<std::string, double> brute_force_match(const anomsynth::EmbeddingVector& query,
                                                 const std::vector<anomsynth::texlib::PoolEntry>& pool);

/// Random mask-generation input: an elliptical foreground of random size on
/// a 64..128 px image and a texture from a random pattern family.
struct MaskCase {
    Image normal;
    BinaryMask foreground;
    Image texture;
};
MaskCase random_mask_case(std::mt19937_64& rng);

/// Recounts every documented property of an accepted bundle by hand.
/// Returns an empty string when the bundle is sound, else what failed.
std::string check_bundle(const anomsynth::maskgen::MaskBundle& bundle, const MaskCase& input,
                         const anomsynth::maskgen::MaskGenConfig& config);

std::string read_file(const std::filesystem::path& p);

/// n checkerboard textures that pass the default density bounds, each with
/// distinct bytes, named tex-<offset+i>.png.
void write_passing_textures(const std::filesystem::path& dir, int n, int offset = 0);
/// The four density-ladder textures at 256 px: sparse, pass, pass, dense.
void write_ladder(const std::filesystem::path& dir);

struct CommandResult {
    int exit_code = -1;
    std::string output;  ///< stdout and stderr interleaved
};

/// Runs a shell command and waits for it.
CommandResult run_command(const std::string& command);

/// Single-quoted for /bin/sh.
std::string shell_quote(const std::string& s);

}  // namespace testsupport
