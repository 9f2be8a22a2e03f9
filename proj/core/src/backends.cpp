#include "anomsynth/backends.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "anomsynth/error.hpp"
#include "anomsynth/live_backends.hpp"
#include "anomsynth/mock_backends.hpp"

namespace anomsynth {

EmbeddingVector::EmbeddingVector(std::vector<float> raw) : values_(std::move(raw)) {
    if (values_.empty()) throw_invalid("embedding must have at least one dimension");
    double norm = 0.0;
    for (float v : values_) norm += static_cast<double>(v) * v;
    norm = std::sqrt(norm);
    if (!(norm > 0.0) || !std::isfinite(norm)) throw_invalid("embedding has zero or non-finite norm");
    for (float& v : values_) v = static_cast<float>(v / norm);
}

EmbeddingVector EmbeddingVector::from_normalized(std::vector<float> values) {
    double norm = 0.0;
    for (float v : values) norm += static_cast<double>(v) * v;
    if (values.empty() || std::abs(std::sqrt(norm) - 1.0) > 1e-4) {
        throw_invalid("stored embedding is not unit length");
    }
    EmbeddingVector out;
    out.values_ = std::move(values);
    return out;
}

double EmbeddingVector::dot(const EmbeddingVector& other) const {
    if (other.dim() != dim()) {
        throw_invalid("embedding dimension mismatch: " + std::to_string(dim()) + " vs " +
                      std::to_string(other.dim()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) acc += static_cast<double>(values_[i]) * other.values_[i];
    return acc;
}

LatentTensor::LatentTensor(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
    if (channels <= 0 || height <= 0 || width <= 0) throw_invalid("latent dimensions must be positive");
    values_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

LatentTensor::LatentTensor(int channels, int height, int width, std::vector<double> values)
    : channels_(channels), height_(height), width_(width), values_(std::move(values)) {
    if (channels <= 0 || height <= 0 || width <= 0) throw_invalid("latent dimensions must be positive");
    if (values_.size() != static_cast<std::size_t>(channels) * height * width) {
        throw_invalid("latent value count does not match its shape");
    }
}

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidInput: return "invalid-input";
        case ErrorKind::UndefinedBase: return "undefined-base";
        case ErrorKind::Transport: return "transport";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Taxonomy: return "taxonomy";
        case ErrorKind::NotFound: return "not-found";
        case ErrorKind::StateConflict: return "state-conflict";
        case ErrorKind::NoCandidates: return "no-candidates";
        case ErrorKind::GenerationFailed: return "generation-failed";
        case ErrorKind::UndefinedDistance: return "undefined-distance";
        case ErrorKind::Config: return "config";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

const char* to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::Vllm: return "vllm";
        case BackendKind::TextEmbedder: return "text-embedder";
        case BackendKind::ImageEmbedder: return "image-embedder";
        case BackendKind::Segmenter: return "segmenter";
        case BackendKind::Inpainter: return "inpainter";
        case BackendKind::Captioner: return "captioner";
        case BackendKind::FeatureExtractor: return "feature-extractor";
        case BackendKind::Projector: return "projector";
    }
    return "unknown";
}

BackendKind backend_kind_from_string(const std::string& s) {
    for (auto k : {BackendKind::Vllm, BackendKind::TextEmbedder, BackendKind::ImageEmbedder,
                   BackendKind::Segmenter, BackendKind::Inpainter, BackendKind::Captioner,
                   BackendKind::FeatureExtractor, BackendKind::Projector}) {
        if (s == to_string(k)) return k;
    }
    throw Error(ErrorKind::Config, "unknown backend kind '" + s + "'");
}

void to_json(nlohmann::json& j, const BackendDescriptor& d) {
    j = nlohmann::json{{"kind", to_string(d.kind)},
                       {"name", d.name},
                       {"deterministic", d.deterministic},
                       {"concurrent_safe", d.concurrent_safe},
                       {"config", d.config}};
}

void from_json(const nlohmann::json& j, BackendDescriptor& d) {
    d.kind = backend_kind_from_string(j.at("kind").get<std::string>());
    d.name = j.at("name").get<std::string>();
    d.deterministic = j.value("deterministic", true);
    d.concurrent_safe = j.value("concurrent_safe", true);
    d.config = j.value("config", nlohmann::json::object());
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kAnomalyEngineerTemplate =
    "You are a professional industrial anomaly engineer. Now I am doing some tasks on industrial "
    "defect photo generation. Please carefully analyze the material of the object {object} in the "
    "image and provide possible defects that could occur on it. I don't need that much explanation, "
    "just give me the brief answer like \"cracked, faded\". Please make a specific analysis "
    "according to the specific situation.";

std::string trim_answer_token(std::string_view s) {
    auto strip = [](unsigned char c) {
        return std::isspace(c) || c == '.' || c == '"' || c == '\'' || c == '`' || c == '*' ||
               c == '-' || c == '!' || c == ':';
    };
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && strip(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && strip(static_cast<unsigned char>(s[e - 1]))) --e;
    std::string out(s.substr(b, e - b));
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

PromptTemplates::PromptTemplates() { templates_[default_id] = kAnomalyEngineerTemplate; }

void PromptTemplates::load_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw Error(ErrorKind::Config, "template directory not found: " + dir.string());
    }
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        std::ifstream in(entry.path());
        std::stringstream ss;
        ss << in.rdbuf();
        std::string text = ss.str();
        while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
        add(entry.path().stem().string(), std::move(text));
    }
}

void PromptTemplates::add(const std::string& id, std::string text) { templates_[id] = std::move(text); }

const std::string& PromptTemplates::text(const std::string& id) const {
    auto it = templates_.find(id);
    if (it == templates_.end()) throw Error(ErrorKind::Config, "unknown prompt template '" + id + "'");
    return it->second;
}

std::string PromptTemplates::render(const std::string& id, const std::string& object_name) const {
    std::string out = text(id);
    static constexpr std::string_view placeholder = "{object}";
    for (auto pos = out.find(placeholder); pos != std::string::npos; pos = out.find(placeholder, pos)) {
        out.replace(pos, placeholder.size(), object_name);
        pos += object_name.size();
    }
    return out;
}

std::vector<std::string> parse_vllm_answer(const std::string& raw) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    std::string current;
    auto flush = [&] {
        std::string token = trim_answer_token(current);
        current.clear();
        if (token.empty() || !seen.insert(token).second) return;
        out.push_back(std::move(token));
    };
    for (char c : raw) {
        if (c == ',' || c == ';' || c == '\n' || c == '\r') {
            flush();
        } else {
            current.push_back(c);
        }
    }
    flush();
    if (out.empty()) throw ParseError("VLLM answer contains no descriptions", raw);
    return out;
}

VllmAnswer vllm_query(Vllm& vllm, const PromptTemplates& templates, const std::string& object_name,
                      const Image& normal_image, const std::string& template_id, std::uint64_t seed) {
    VllmAnswer answer;
    answer.question = templates.render(template_id, object_name);
    VllmRequest request{object_name, answer.question, &normal_image, seed};
    answer.raw = vllm.ask(request);
    answer.descriptions = parse_vllm_answer(answer.raw);
    return answer;
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const BackendChoice& c) {
    j = nlohmann::json{{"name", c.name}, {"config", c.config}};
}

void from_json(const nlohmann::json& j, BackendChoice& c) {
    if (j.is_string()) {
        c.name = j.get<std::string>();
        c.config = nlohmann::json::object();
        return;
    }
    c.name = j.at("name").get<std::string>();
    c.config = j.value("config", nlohmann::json::object());
}

static std::uint64_t seed_of(const nlohmann::json& config) { return config.value("seed", std::uint64_t{0}); }

void to_json(nlohmann::json& j, const BackendsConfig& c) {
    j = nlohmann::json{{"vllm", c.vllm},
                       {"embedder", c.embedder},
                       {"segmenter", c.segmenter},
                       {"inpainter", c.inpainter},
                       {"captioner", c.captioner},
                       {"feature_extractor", c.feature_extractor},
                       {"projector", c.projector}};
}

void from_json(const nlohmann::json& j, BackendsConfig& c) {
    if (j.contains("vllm")) c.vllm = j.at("vllm").get<BackendChoice>();
    if (j.contains("embedder")) c.embedder = j.at("embedder").get<BackendChoice>();
    if (j.contains("segmenter")) c.segmenter = j.at("segmenter").get<BackendChoice>();
    if (j.contains("inpainter")) c.inpainter = j.at("inpainter").get<BackendChoice>();
    if (j.contains("captioner")) c.captioner = j.at("captioner").get<BackendChoice>();
    if (j.contains("feature_extractor")) c.feature_extractor = j.at("feature_extractor").get<BackendChoice>();
    if (j.contains("projector")) c.projector = j.at("projector").get<BackendChoice>();
}

std::vector<BackendDescriptor> BackendSet::descriptors() const {
    std::vector<BackendDescriptor> out;
    if (vllm) out.push_back(vllm->descriptor());
    if (text_embedder) out.push_back(text_embedder->descriptor());
    if (image_embedder) {
        auto d = image_embedder->descriptor();
        d.kind = BackendKind::ImageEmbedder;
        out.push_back(std::move(d));
    }
    if (segmenter) out.push_back(segmenter->descriptor());
    if (inpainter) out.push_back(inpainter->descriptor());
    if (captioner) out.push_back(captioner->descriptor());
    if (feature_extractor) out.push_back(feature_extractor->descriptor());
    if (projector) out.push_back(projector->descriptor());
    return out;
}

BackendSet make_backends(const BackendsConfig& config) {
    auto unknown = [](const char* kind, const std::string& name) {
        return Error(ErrorKind::Config, std::string("unknown ") + kind + " backend '" + name + "'");
    };
    BackendSet set;

    if (config.vllm.name == "mock-vllm") {
        set.vllm = std::make_unique<mocks::MockVllm>();
    } else if (config.vllm.name == "http-vllm") {
        set.vllm = std::make_unique<live::HttpVllm>(live::HttpVllm::options_from_json(config.vllm.config));
    } else {
        throw unknown("vllm", config.vllm.name);
    }

    if (config.embedder.name == "mock-hash-embedder") {
        const auto dim = config.embedder.config.value("dim", std::size_t{64});
        const auto name = config.embedder.config.value("instance_name", std::string("mock-hash-embedder"));
        set.text_embedder = std::make_unique<mocks::HashEmbedder>(dim, seed_of(config.embedder.config), name);
        set.image_embedder = std::make_unique<mocks::HashEmbedder>(dim, seed_of(config.embedder.config), name);
    } else {
        throw unknown("embedder", config.embedder.name);
    }

    if (config.segmenter.name == "mock-threshold-segmenter") {
        set.segmenter = std::make_unique<mocks::ThresholdSegmenter>(config.segmenter.config.value("threshold", 0.5));
    } else {
        throw unknown("segmenter", config.segmenter.name);
    }

    if (config.inpainter.name == "mock-oracle-inpainter") {
        set.inpainter = std::make_unique<mocks::MockInpainter>(mocks::MockInpainter::Mode::Oracle);
    } else if (config.inpainter.name == "mock-zero-noise-inpainter") {
        set.inpainter = std::make_unique<mocks::MockInpainter>(mocks::MockInpainter::Mode::ZeroNoise);
    } else {
        throw unknown("inpainter", config.inpainter.name);
    }

    if (config.captioner.name == "mock-captioner") {
        set.captioner = std::make_unique<mocks::MockCaptioner>();
    } else {
        throw unknown("captioner", config.captioner.name);
    }

    if (config.feature_extractor.name == "mock-features") {
        const auto& c = config.feature_extractor.config;
        set.feature_extractor =
            std::make_unique<mocks::MockFeatureExtractor>(c.value("classes", 10), seed_of(c), c.value("temperature", 0.05));
    } else {
        throw unknown("feature-extractor", config.feature_extractor.name);
    }

    if (config.projector.name == "mock-random-projector") {
        set.projector = std::make_unique<mocks::RandomProjector>(seed_of(config.projector.config));
    } else {
        throw unknown("projector", config.projector.name);
    }
    return set;
}

}  // namespace anomsynth
