#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anomsynth/backends.hpp"
#include "anomsynth/error.hpp"
#include "anomsynth/descmatch.hpp"
#include "anomsynth/maskgen.hpp"

namespace anomsynth::synthpipe {

/// Cumulative signal fractions alpha_bar_0..alpha_bar_T with alpha_bar_0 = 1,
/// strictly decreasing, all in (0,1].
class NoiseSchedule {
public:
    NoiseSchedule() : NoiseSchedule(cosine(20)) {}

    /// alpha_bar_t = cos^2(pi/2 * c * t/T), with c chosen so alpha_bar_T == final_alpha_bar.
    static NoiseSchedule cosine(int steps = 20, double final_alpha_bar = 5e-3);
    /// `values` holds alpha_bar_1..alpha_bar_T; throws InvalidInput on a non-monotone list.
    static NoiseSchedule from_values(std::string kind, std::vector<double> values);

    int steps() const noexcept { return static_cast<int>(alpha_bar_.size()) - 1; }
    /// t in [0, T].
    double alpha_bar(int t) const;
    const std::vector<double>& values() const noexcept { return alpha_bar_; }
    const std::string& kind() const noexcept { return kind_; }

    bool operator==(const NoiseSchedule&) const = default;

private:
    NoiseSchedule(std::string kind, std::vector<double> with_zero);

    std::string kind_;
    std::vector<double> alpha_bar_;
};

void to_json(nlohmann::json& j, const NoiseSchedule& s);
void from_json(const nlohmann::json& j, NoiseSchedule& s);

/// sqrt(a)*z + sqrt(1-a)*eps, elementwise.
LatentTensor add_noise(const LatentTensor& z, double alpha_bar, const LatentTensor& eps);
LatentTensor add_noise(const LatentTensor& z, int t, const LatentTensor& eps, const NoiseSchedule& schedule);

/// Texture latent where the latent mask is set, normal latent elsewhere; the
/// mask applies to every channel.
LatentTensor tali_blend(const LatentTensor& normal, const LatentTensor& texture, const BinaryMask& latent_mask);

/// Deterministic (eta = 0) DDIM update from alpha_bar_t to alpha_bar_prev.
LatentTensor ddim_step(const LatentTensor& z_t, double alpha_bar_t, double alpha_bar_prev, const LatentTensor& eps_hat);
LatentTensor ddim_step(const LatentTensor& z_t, int t, const LatentTensor& eps_hat, const NoiseSchedule& schedule);

/// Standard normal draws in the shape of `like`.
LatentTensor sample_noise(const LatentTensor& like, std::mt19937_64& rng);

enum class RefinePolarity { Dissimilarity, Similarity };

struct SynthesisConfig {
    int t_star = 16;
    NoiseSchedule schedule = NoiseSchedule::cosine(20);
    std::string prompt_template = "A photo of {description} {object}";
    RefinePolarity refine_polarity = RefinePolarity::Dissimilarity;
    nlohmann::json backend_knobs = nlohmann::json::object();
    /// Ablation only: also admits t_star == T (start from the noisiest step).
    bool allow_full_noise = false;

    /// Throws Error(Config) unless 0 < t_star < T (or <= T with allow_full_noise).
    void validate() const;
};

void to_json(nlohmann::json& j, const SynthesisConfig& c);
void from_json(const nlohmann::json& j, SynthesisConfig& c);

/// Substitutes `{description}` and `{object}`.
std::string fill_prompt(const std::string& tmpl, const std::string& description, const std::string& object_name);

/// Keeps the pixels of `m_in` that changed more than the region's average,
/// measured as 1 - SSIM of the two luminance images masked to `m_in`.
/// The similarity polarity instead keeps pixels whose SSIM exceeds its mean.
BinaryMask refine_mask(const Image& x_normal, const Image& x_result, const BinaryMask& m_in,
                       RefinePolarity polarity = RefinePolarity::Dissimilarity);

struct SynthesisRecord {
    std::string object_name;
    std::string description;
    std::string asset_id;
    std::string prompt;
    Image x_result;
    BinaryMask m_result;
    BinaryMask m_in;
    maskgen::Rect rect;
    int mask_retries = 0;
    std::uint64_t seed = 0;
    int t_star = 0;
    NoiseSchedule schedule;
    std::vector<BackendDescriptor> backends;
    std::map<std::string, double> timings_ms;
};

/// Record metadata (no pixel data). Timings are included only on request
/// because they vary run to run.
nlohmann::json record_metadata(const SynthesisRecord& r, bool include_timings = false);

/// Stage-tagged failure inside synthesize().
class StageError : public Error {
public:
    StageError(std::string stage, const Error& cause)
        : Error(cause.kind(), "[" + stage + "] " + cause.what()), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// Encodes both images, noises them to T* with one shared noise sample,
/// blends, denoises T*..1 with the inpainter, decodes, and refines the mask.
SynthesisRecord synthesize(const std::string& object_name, const Image& normal_image,
                           const descmatch::MatchResult& match, const maskgen::MaskBundle& bundle,
                           const SynthesisConfig& config, Inpainter& inpainter, std::mt19937_64& rng,
                           std::uint64_t seed = 0);

}  // namespace anomsynth::synthpipe
