#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anomsynth/image.hpp"

namespace anomsynth {

/// L2-normalized real vector. Construction normalizes; a zero vector is rejected.
class EmbeddingVector {
public:
    EmbeddingVector() = default;
    explicit EmbeddingVector(std::vector<float> raw);

    /// Adopts values that are already unit length (within 1e-4) unchanged.
    static EmbeddingVector from_normalized(std::vector<float> values);

    std::size_t dim() const noexcept { return values_.size(); }
    const std::vector<float>& values() const noexcept { return values_; }

    /// Cosine similarity; both vectors are unit length so this is a dot product.
    double dot(const EmbeddingVector& other) const;

    bool operator==(const EmbeddingVector&) const = default;

private:
    std::vector<float> values_;
};

/// Channel-planar latent. Spatial dims are the image dims divided by the
/// codec's downscale factor.
class LatentTensor {
public:
    LatentTensor() = default;
    LatentTensor(int channels, int height, int width, double fill = 0.0);
    LatentTensor(int channels, int height, int width, std::vector<double> values);

    int channels() const noexcept { return channels_; }
    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    std::size_t size() const noexcept { return values_.size(); }

    double& at(int c, int y, int x) {
        return values_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
    }
    double at(int c, int y, int x) const {
        return values_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
    }
    std::vector<double>& values() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    bool same_shape(const LatentTensor& o) const noexcept {
        return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
    }

    bool operator==(const LatentTensor&) const = default;

private:
    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<double> values_;
};

enum class BackendKind {
    Vllm,
    TextEmbedder,
    ImageEmbedder,
    Segmenter,
    Inpainter,
    Captioner,
    FeatureExtractor,
    Projector,
};

const char* to_string(BackendKind kind);
BackendKind backend_kind_from_string(const std::string& s);

struct BackendDescriptor {
    BackendKind kind = BackendKind::Vllm;
    std::string name;
    bool deterministic = true;
    /// False means callers must not share one instance across threads.
    bool concurrent_safe = true;
    nlohmann::json config = nlohmann::json::object();

    bool operator==(const BackendDescriptor&) const = default;
};

void to_json(nlohmann::json& j, const BackendDescriptor& d);
void from_json(const nlohmann::json& j, BackendDescriptor& d);

// ---------------------------------------------------------------------------
// Model boundaries

struct VllmRequest {
    std::string object_name;
    std::string question;
    const Image* image = nullptr;
    std::uint64_t seed = 0;
};

class Vllm {
public:
    virtual ~Vllm() = default;
    virtual BackendDescriptor descriptor() const = 0;
    /// Raw free-text answer.
    virtual std::string ask(const VllmRequest& request) = 0;
};

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual BackendDescriptor descriptor() const = 0;
    virtual std::size_t dim() const = 0;
    virtual EmbeddingVector embed_text(const std::string& text) = 0;
};

class ImageEmbedder {
public:
    virtual ~ImageEmbedder() = default;
    virtual BackendDescriptor descriptor() const = 0;
    virtual std::size_t dim() const = 0;
    virtual EmbeddingVector embed_image(const Image& image) = 0;
};

class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual BackendDescriptor descriptor() const = 0;
    virtual BinaryMask segment_foreground(const Image& image) = 0;
};

/// Which form of the adaptive texture the denoiser consumes as its condition.
enum class ConditionForm { RawTexture, EdgeMap };

/// Latent codec plus conditioned noise predictor.
class Inpainter {
public:
    virtual ~Inpainter() = default;
    virtual BackendDescriptor descriptor() const = 0;
    virtual int downscale_factor() const { return 8; }
    virtual ConditionForm condition_form() const { return ConditionForm::RawTexture; }

    virtual LatentTensor encode(const Image& image) = 0;
    virtual Image decode(const LatentTensor& latent) = 0;

    /// Called once per trajectory with the noise sampled at the start point.
    virtual void begin_trajectory(const LatentTensor& /*noise*/) {}

    virtual LatentTensor predict_noise(const LatentTensor& z_t, int t, const BinaryMask& inpaint_mask,
                                       const Image& condition, const std::string& prompt) = 0;
};

class Captioner {
public:
    virtual ~Captioner() = default;
    virtual BackendDescriptor descriptor() const = 0;
    virtual std::string caption(const Image& image, const std::string& category) = 0;
};

struct FeatureBatch {
    std::vector<std::vector<double>> probabilities;  ///< one class-probability row per image
    std::vector<std::vector<double>> features;       ///< one perceptual feature vector per image
};

class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual BackendDescriptor descriptor() const = 0;
    virtual FeatureBatch extract(const std::vector<Image>& images) = 0;
};

class Projector {
public:
    virtual ~Projector() = default;
    virtual BackendDescriptor descriptor() const = 0;
    virtual std::vector<std::array<double, 2>> project(const std::vector<std::vector<double>>& points) = 0;
};

// ---------------------------------------------------------------------------
// Prompt templates and answer parsing

class PromptTemplates {
public:
    /// Registry pre-populated with the built-in "anomaly-engineer" template.
    PromptTemplates();

    /// Adds every `<id>.txt` in `dir`; existing ids are overwritten.
    void load_directory(const std::filesystem::path& dir);
    void add(const std::string& id, std::string text);

    bool contains(const std::string& id) const { return templates_.count(id) != 0; }
    const std::string& text(const std::string& id) const;
    /// Substitutes `{object}`.
    std::string render(const std::string& id, const std::string& object_name) const;

    static constexpr const char* default_id = "anomaly-engineer";

private:
    std::map<std::string, std::string> templates_;
};

/// Splits on commas, semicolons and newlines; trims whitespace and stray
/// punctuation; lowercases; drops empties and duplicates (first wins).
/// Throws ParseError when nothing usable remains.
std::vector<std::string> parse_vllm_answer(const std::string& raw);

struct VllmAnswer {
    std::string question;
    std::string raw;
    std::vector<std::string> descriptions;
};

VllmAnswer vllm_query(Vllm& vllm, const PromptTemplates& templates, const std::string& object_name,
                      const Image& normal_image, const std::string& template_id, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Construction from configuration

/// One backend selection: `{"name": "...", "config": {...}}`.
struct BackendChoice {
    std::string name;
    nlohmann::json config = nlohmann::json::object();
};

struct BackendsConfig {
    BackendChoice vllm{"mock-vllm", nlohmann::json::object()};
    BackendChoice embedder{"mock-hash-embedder", nlohmann::json::object()};
    BackendChoice segmenter{"mock-threshold-segmenter", nlohmann::json::object()};
    BackendChoice inpainter{"mock-oracle-inpainter", nlohmann::json::object()};
    BackendChoice captioner{"mock-captioner", nlohmann::json::object()};
    BackendChoice feature_extractor{"mock-features", nlohmann::json::object()};
    BackendChoice projector{"mock-random-projector", nlohmann::json::object()};
};

void to_json(nlohmann::json& j, const BackendsConfig& c);
void from_json(const nlohmann::json& j, BackendsConfig& c);

/// A full set of backend instances. Each worker owns its own set.
struct BackendSet {
    std::unique_ptr<Vllm> vllm;
    std::unique_ptr<TextEmbedder> text_embedder;
    std::unique_ptr<ImageEmbedder> image_embedder;
    std::unique_ptr<Segmenter> segmenter;
    std::unique_ptr<Inpainter> inpainter;
    std::unique_ptr<Captioner> captioner;
    std::unique_ptr<FeatureExtractor> feature_extractor;
    std::unique_ptr<Projector> projector;

    std::vector<BackendDescriptor> descriptors() const;
};

/// Throws Error(Config) for an unknown backend name.
BackendSet make_backends(const BackendsConfig& config);

}  // namespace anomsynth
