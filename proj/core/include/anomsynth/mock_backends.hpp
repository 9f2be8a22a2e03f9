#pragma once

#include <map>
#include <optional>

#include "anomsynth/backends.hpp"

namespace anomsynth::mocks {

/// Answers from a fixed object table; unknown objects get a seeded pick from
/// a small defect vocabulary. The answer goes through the same parser as a
/// live backend's.
class MockVllm final : public Vllm {
public:
    explicit MockVllm(std::map<std::string, std::string> answers = default_answers());

    BackendDescriptor descriptor() const override;
    std::string ask(const VllmRequest& request) override;

    static std::map<std::string, std::string> default_answers();

private:
    std::map<std::string, std::string> answers_;
};

/// Seeded hash-to-vector embedder for both text and images.
class HashEmbedder final : public TextEmbedder, public ImageEmbedder {
public:
    explicit HashEmbedder(std::size_t dim = 64, std::uint64_t seed = 0, std::string name = "mock-hash-embedder");

    BackendDescriptor descriptor() const override;
    std::size_t dim() const override { return dim_; }
    EmbeddingVector embed_text(const std::string& text) override;
    EmbeddingVector embed_image(const Image& image) override;

private:
    EmbeddingVector from_hash(std::uint64_t h) const;

    std::size_t dim_;
    std::uint64_t seed_;
    std::string name_;
};

/// Foreground = luminance strictly above a threshold.
class ThresholdSegmenter final : public Segmenter {
public:
    explicit ThresholdSegmenter(double threshold = 0.5) : threshold_(threshold) {}

    BackendDescriptor descriptor() const override;
    BinaryMask segment_foreground(const Image& image) override;

private:
    double threshold_;
};

/// Area-average 8x8 encoder, nearest-neighbour decoder, and one of two noise
/// predictors: all-zeros, or the exact noise handed to begin_trajectory().
class MockInpainter final : public Inpainter {
public:
    enum class Mode { ZeroNoise, Oracle };

    explicit MockInpainter(Mode mode = Mode::Oracle, int factor = 8);

    BackendDescriptor descriptor() const override;
    int downscale_factor() const override { return factor_; }

    LatentTensor encode(const Image& image) override;
    Image decode(const LatentTensor& latent) override;
    void begin_trajectory(const LatentTensor& noise) override;
    LatentTensor predict_noise(const LatentTensor& z_t, int t, const BinaryMask& inpaint_mask,
                               const Image& condition, const std::string& prompt) override;

private:
    Mode mode_;
    int factor_;
    std::optional<LatentTensor> recorded_;
};

/// "texture: <category>" captions.
class MockCaptioner final : public Captioner {
public:
    BackendDescriptor descriptor() const override;
    std::string caption(const Image& image, const std::string& category) override;
};

/// Perceptual features are an 8x8 grid of mean luminance plus per-channel
/// means; class probabilities are a softmax over a seeded linear map of them.
class MockFeatureExtractor final : public FeatureExtractor {
public:
    explicit MockFeatureExtractor(int classes = 10, std::uint64_t seed = 0, double temperature = 0.05);

    BackendDescriptor descriptor() const override;
    FeatureBatch extract(const std::vector<Image>& images) override;

    static constexpr int grid = 8;

private:
    int classes_;
    std::uint64_t seed_;
    double temperature_;
};

/// Seeded linear projection to two dimensions.
class RandomProjector final : public Projector {
public:
    explicit RandomProjector(std::uint64_t seed = 0) : seed_(seed) {}

    BackendDescriptor descriptor() const override;
    std::vector<std::array<double, 2>> project(const std::vector<std::vector<double>>& points) override;

private:
    std::uint64_t seed_;
};

}  // namespace anomsynth::mocks
