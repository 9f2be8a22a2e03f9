#include "anomsynth/mock_backends.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "anomsynth/error.hpp"
#include "anomsynth/hashing.hpp"

namespace anomsynth::mocks {

namespace {

// Symmetric uniform in [-1, 1) for counter `i` of stream `h`.
double signed_unit(std::uint64_t h, std::uint64_t i) {
    return 2.0 * unit_double(splitmix64(h ^ splitmix64(i))) - 1.0;
}

std::uint64_t image_hash(const Image& image) {
    std::uint64_t h = fnv1a64(std::to_string(image.width()) + "x" + std::to_string(image.height()) + "x" +
                              std::to_string(image.channels()));
    for (float v : image.data()) {
        const auto q = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
        h ^= q;
        h *= 0x100000001b3ULL;
    }
    return h;
}

BackendDescriptor describe(BackendKind kind, std::string name, nlohmann::json config = nlohmann::json::object(),
                           bool concurrent_safe = true) {
    BackendDescriptor d;
    d.kind = kind;
    d.name = std::move(name);
    d.deterministic = true;
    d.concurrent_safe = concurrent_safe;
    d.config = std::move(config);
    return d;
}

}  // namespace

// ---------------------------------------------------------------------------

MockVllm::MockVllm(std::map<std::string, std::string> answers) : answers_(std::move(answers)) {}

std::map<std::string, std::string> MockVllm::default_answers() {
    return {
        {"cashew", "cracked, moldy"},
        {"candle", "melted, cracked, stained"},
        {"capsules", "dented, discolored"},
        {"chewinggum", "torn, stained"},
        {"fryum", "broken, burnt"},
        {"macaroni1", "cracked, discolored"},
        {"macaroni2", "scratched, chipped"},
        {"pcb1", "scratched, corroded, burnt"},
        {"pcb2", "scratched, corroded"},
        {"pcb3", "bent, burnt"},
        {"pcb4", "scratched, melted"},
        {"pipe_fryum", "broken, burnt"},
        {"wood", "cracked, scratched"},
    };
}

BackendDescriptor MockVllm::descriptor() const { return describe(BackendKind::Vllm, "mock-vllm"); }

std::string MockVllm::ask(const VllmRequest& request) {
    if (auto it = answers_.find(request.object_name); it != answers_.end()) return it->second;
    static const char* vocabulary[] = {"cracked", "scratched", "stained", "corroded", "faded",
                                       "dented",  "moldy",     "burnt",   "chipped",  "torn"};
    constexpr std::uint64_t n = std::size(vocabulary);
    const std::uint64_t h = fnv1a64(request.object_name) ^ splitmix64(request.seed);
    const std::uint64_t first = splitmix64(h) % n;
    const std::uint64_t second = (first + 1 + splitmix64(h + 1) % (n - 1)) % n;
    return std::string(vocabulary[first]) + ", " + vocabulary[second];
}

// ---------------------------------------------------------------------------

HashEmbedder::HashEmbedder(std::size_t dim, std::uint64_t seed, std::string name)
    : dim_(dim), seed_(seed), name_(std::move(name)) {
    if (dim_ == 0) throw_invalid("embedding dimension must be positive");
}

BackendDescriptor HashEmbedder::descriptor() const {
    return describe(BackendKind::TextEmbedder, name_, {{"dim", dim_}, {"seed", seed_}});
}

EmbeddingVector HashEmbedder::from_hash(std::uint64_t h) const {
    std::vector<float> raw(dim_);
    for (std::size_t i = 0; i < dim_; ++i) raw[i] = static_cast<float>(signed_unit(h, i));
    return EmbeddingVector(std::move(raw));
}

EmbeddingVector HashEmbedder::embed_text(const std::string& text) {
    if (text.empty()) throw_invalid("cannot embed empty text");
    return from_hash(fnv1a64(text, fnv1a64("text")) ^ splitmix64(seed_));
}

EmbeddingVector HashEmbedder::embed_image(const Image& image) {
    if (image.empty()) throw_invalid("cannot embed an empty image");
    return from_hash(image_hash(image) ^ splitmix64(seed_ + 1));
}

// ---------------------------------------------------------------------------

BackendDescriptor ThresholdSegmenter::descriptor() const {
    return describe(BackendKind::Segmenter, "mock-threshold-segmenter", {{"threshold", threshold_}});
}

BinaryMask ThresholdSegmenter::segment_foreground(const Image& image) {
    const GrayImage gray = to_gray(image);
    BinaryMask mask(gray.width(), gray.height());
    auto v = gray.values();
    auto bits = mask.bits();
    for (std::size_t i = 0; i < v.size(); ++i) bits[i] = v[i] > threshold_ ? 1 : 0;
    return mask;
}

// ---------------------------------------------------------------------------

MockInpainter::MockInpainter(Mode mode, int factor) : mode_(mode), factor_(factor) {
    if (factor_ <= 0) throw_invalid("downscale factor must be positive");
}

BackendDescriptor MockInpainter::descriptor() const {
    return describe(BackendKind::Inpainter,
                    mode_ == Mode::Oracle ? "mock-oracle-inpainter" : "mock-zero-noise-inpainter",
                    {{"downscale_factor", factor_}}, mode_ != Mode::Oracle);
}

LatentTensor MockInpainter::encode(const Image& image) {
    if (image.width() % factor_ != 0 || image.height() % factor_ != 0) {
        throw_invalid("image dimensions " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                      " are not divisible by the latent factor " + std::to_string(factor_));
    }
    const int lw = image.width() / factor_;
    const int lh = image.height() / factor_;
    LatentTensor z(image.channels(), lh, lw);
    const double inv = 1.0 / (static_cast<double>(factor_) * factor_);
    for (int c = 0; c < image.channels(); ++c) {
        for (int by = 0; by < lh; ++by) {
            for (int bx = 0; bx < lw; ++bx) {
                double acc = 0.0;
                for (int y = 0; y < factor_; ++y) {
                    for (int x = 0; x < factor_; ++x) acc += image.at(bx * factor_ + x, by * factor_ + y, c);
                }
                z.at(c, by, bx) = acc * inv;
            }
        }
    }
    return z;
}

Image MockInpainter::decode(const LatentTensor& latent) {
    if (latent.channels() != 1 && latent.channels() != 3) {
        throw_invalid("mock decoder supports 1 or 3 latent channels");
    }
    Image out(latent.width() * factor_, latent.height() * factor_, latent.channels());
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            for (int c = 0; c < out.channels(); ++c) {
                out.at(x, y, c) = static_cast<float>(std::clamp(latent.at(c, y / factor_, x / factor_), 0.0, 1.0));
            }
        }
    }
    return out;
}

void MockInpainter::begin_trajectory(const LatentTensor& noise) { recorded_ = noise; }

LatentTensor MockInpainter::predict_noise(const LatentTensor& z_t, int t, const BinaryMask& inpaint_mask,
                                          const Image& condition, const std::string& /*prompt*/) {
    if (t < 1) throw_invalid("predict_noise timestep must be >= 1");
    const int w = z_t.width() * factor_;
    const int h = z_t.height() * factor_;
    if (inpaint_mask.width() != w || inpaint_mask.height() != h) {
        throw_invalid("inpainting mask does not match the latent's image space");
    }
    if (condition.width() != w || condition.height() != h) {
        throw_invalid("condition image does not match the latent's image space");
    }
    if (mode_ == Mode::ZeroNoise) return LatentTensor(z_t.channels(), z_t.height(), z_t.width(), 0.0);
    if (!recorded_) throw_invalid("oracle noise predictor has no recorded noise");
    if (!recorded_->same_shape(z_t)) throw_invalid("recorded noise shape differs from z_t");
    return *recorded_;
}

// ---------------------------------------------------------------------------

BackendDescriptor MockCaptioner::descriptor() const { return describe(BackendKind::Captioner, "mock-captioner"); }

std::string MockCaptioner::caption(const Image& image, const std::string& category) {
    if (image.empty()) throw_invalid("cannot caption an empty image");
    return "texture: " + category;
}

// ---------------------------------------------------------------------------

MockFeatureExtractor::MockFeatureExtractor(int classes, std::uint64_t seed, double temperature)
    : classes_(classes), seed_(seed), temperature_(temperature) {
    if (classes_ < 1) throw_invalid("feature extractor needs at least one class");
    if (!(temperature_ > 0.0)) throw_invalid("temperature must be positive");
}

BackendDescriptor MockFeatureExtractor::descriptor() const {
    return describe(BackendKind::FeatureExtractor, "mock-features",
                    {{"classes", classes_}, {"seed", seed_}, {"temperature", temperature_}});
}

FeatureBatch MockFeatureExtractor::extract(const std::vector<Image>& images) {
    if (images.empty()) throw_invalid("feature extraction needs at least one image");
    FeatureBatch batch;
    const std::size_t dim = grid * grid + 3;
    const std::uint64_t stream = splitmix64(seed_ ^ 0x5eedf00dULL);
    for (const Image& img : images) {
        const GrayImage small = resize(to_gray(img), grid, grid);
        std::vector<double> f(small.values().begin(), small.values().end());
        for (int c = 0; c < 3; ++c) {
            double acc = 0.0;
            const int ch = std::min(c, img.channels() - 1);
            for (int y = 0; y < img.height(); ++y) {
                for (int x = 0; x < img.width(); ++x) acc += img.at(x, y, ch);
            }
            f.push_back(acc / (static_cast<double>(img.width()) * img.height()));
        }

        std::vector<double> logits(static_cast<std::size_t>(classes_));
        for (int k = 0; k < classes_; ++k) {
            double acc = 0.0;
            for (std::size_t i = 0; i < dim; ++i) acc += signed_unit(stream, static_cast<std::uint64_t>(k) * dim + i) * f[i];
            logits[k] = acc / (temperature_ * std::sqrt(static_cast<double>(dim)));
        }
        const double top = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (auto& l : logits) {
            l = std::exp(l - top);
            sum += l;
        }
        for (auto& l : logits) l /= sum;
        batch.probabilities.push_back(std::move(logits));
        batch.features.push_back(std::move(f));
    }
    return batch;
}

// ---------------------------------------------------------------------------

BackendDescriptor RandomProjector::descriptor() const {
    return describe(BackendKind::Projector, "mock-random-projector", {{"seed", seed_}});
}

std::vector<std::array<double, 2>> RandomProjector::project(const std::vector<std::vector<double>>& points) {
    std::vector<std::array<double, 2>> out;
    out.reserve(points.size());
    const std::uint64_t stream = splitmix64(seed_ ^ 0x9a0ec7ULL);
    for (const auto& p : points) {
        std::array<double, 2> xy{0.0, 0.0};
        for (std::size_t i = 0; i < p.size(); ++i) {
            xy[0] += signed_unit(stream, 2 * i) * p[i];
            xy[1] += signed_unit(stream, 2 * i + 1) * p[i];
        }
        out.push_back(xy);
    }
    return out;
}

}  // namespace anomsynth::mocks
