#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anomsynth/backends.hpp"
#include "anomsynth/texlib.hpp"

namespace anomsynth::descmatch {

enum class DescriptorSource { Vllm, Manual };

struct AnomalyDescriptor {
    std::string object_name;
    std::string description;  ///< lowercase, trimmed, nonempty
    DescriptorSource source = DescriptorSource::Vllm;
    std::optional<std::string> raw_answer_ref;

    bool operator==(const AnomalyDescriptor&) const = default;
};

/// Normalizes the description and rejects empty ones.
AnomalyDescriptor make_descriptor(std::string object_name, std::string description,
                                  DescriptorSource source = DescriptorSource::Manual);

struct ScoredAsset {
    std::string asset_id;
    double similarity = 0.0;

    bool operator==(const ScoredAsset&) const = default;
};

struct MatchResult {
    AnomalyDescriptor descriptor;
    std::string asset_id;
    double similarity = 0.0;
    std::vector<ScoredAsset> runner_ups;  ///< best candidates after the winner, descending

    bool operator==(const MatchResult&) const = default;
};

void to_json(nlohmann::json& j, const AnomalyDescriptor& d);
void from_json(const nlohmann::json& j, AnomalyDescriptor& d);
void to_json(nlohmann::json& j, const MatchResult& r);
void from_json(const nlohmann::json& j, MatchResult& r);

struct MatchOptions {
    std::size_t top_k = 5;
    std::optional<std::string> restrict_category;
    std::string template_id = PromptTemplates::default_id;
    /// Number of VLLM queries per object; answers are unioned in order.
    int repeats = 1;
};

/// One question/answer exchange, kept for audit.
struct Transcript {
    std::string object_name;
    std::string question;
    std::string raw_answer;
};

struct DescriptionSet {
    std::vector<AnomalyDescriptor> descriptors;
    std::vector<Transcript> transcripts;
};

/// Asks the VLLM about `object_name` and turns the answer into descriptors.
/// Transport and parse errors propagate; a ParseError's raw text is the answer.
DescriptionSet generate_descriptions(Vllm& vllm, const PromptTemplates& templates, const std::string& object_name,
                                     const Image& normal_image, const MatchOptions& options = {},
                                     std::uint64_t seed = 0);

/// Exact argmax of cosine similarity over the pool; ties go to the smallest
/// asset_id. Throws NoCandidates on an empty pool, InvalidInput on a
/// dimension mismatch.
MatchResult match(const AnomalyDescriptor& descriptor, const EmbeddingVector& description_embedding,
                  const std::vector<texlib::PoolEntry>& pool, std::size_t top_k = 5);

MatchResult match(const AnomalyDescriptor& descriptor, TextEmbedder& embedder,
                  const std::vector<texlib::PoolEntry>& pool, std::size_t top_k = 5);

struct DescriptorError {
    AnomalyDescriptor descriptor;
    std::string message;
};

struct MatchBatch {
    std::vector<MatchResult> results;   ///< descriptor order, failures omitted
    std::vector<DescriptorError> errors;
};

/// Matches every descriptor independently; one failure does not stop the rest.
MatchBatch match_all(const std::vector<AnomalyDescriptor>& descriptors, TextEmbedder& embedder,
                     const std::vector<texlib::PoolEntry>& pool, std::size_t top_k = 5);

/// Full flow for one object: describe, then match against the pool.
struct ObjectMatches {
    DescriptionSet descriptions;
    MatchBatch matches;
};

ObjectMatches match_all(Vllm& vllm, TextEmbedder& embedder, const PromptTemplates& templates,
                        const std::string& object_name, const Image& normal_image,
                        const std::vector<texlib::PoolEntry>& pool, const MatchOptions& options = {},
                        std::uint64_t seed = 0);

}  // namespace anomsynth::descmatch
