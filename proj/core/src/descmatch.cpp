#include "anomsynth/descmatch.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "anomsynth/error.hpp"

namespace anomsynth::descmatch {

using nlohmann::json;

AnomalyDescriptor make_descriptor(std::string object_name, std::string description, DescriptorSource source) {
    const auto b = description.find_first_not_of(" \t\r\n");
    const auto e = description.find_last_not_of(" \t\r\n");
    description = b == std::string::npos ? std::string{} : description.substr(b, e - b + 1);
    std::transform(description.begin(), description.end(), description.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (description.empty()) throw_invalid("anomaly description must not be empty");
    return AnomalyDescriptor{std::move(object_name), std::move(description), source, std::nullopt};
}

void to_json(json& j, const AnomalyDescriptor& d) {
    j = json{{"object_name", d.object_name},
             {"description", d.description},
             {"source", d.source == DescriptorSource::Vllm ? "vllm" : "manual"},
             {"raw_answer_ref", d.raw_answer_ref ? json(*d.raw_answer_ref) : json(nullptr)}};
}

void from_json(const json& j, AnomalyDescriptor& d) {
    d.object_name = j.at("object_name").get<std::string>();
    d.description = j.at("description").get<std::string>();
    d.source = j.value("source", std::string("manual")) == "vllm" ? DescriptorSource::Vllm : DescriptorSource::Manual;
    if (j.contains("raw_answer_ref") && !j.at("raw_answer_ref").is_null()) {
        d.raw_answer_ref = j.at("raw_answer_ref").get<std::string>();
    } else {
        d.raw_answer_ref.reset();
    }
}

void to_json(json& j, const MatchResult& r) {
    json runners = json::array();
    for (const auto& s : r.runner_ups) runners.push_back({{"asset_id", s.asset_id}, {"similarity", s.similarity}});
    j = json{{"descriptor", r.descriptor}, {"asset_id", r.asset_id}, {"similarity", r.similarity},
             {"runner_ups", std::move(runners)}};
}

void from_json(const json& j, MatchResult& r) {
    r.descriptor = j.at("descriptor").get<AnomalyDescriptor>();
    r.asset_id = j.at("asset_id").get<std::string>();
    r.similarity = j.at("similarity").get<double>();
    r.runner_ups.clear();
    for (const auto& s : j.at("runner_ups")) {
        r.runner_ups.push_back({s.at("asset_id").get<std::string>(), s.at("similarity").get<double>()});
    }
}

DescriptionSet generate_descriptions(Vllm& vllm, const PromptTemplates& templates, const std::string& object_name,
                                     const Image& normal_image, const MatchOptions& options, std::uint64_t seed) {
    if (!templates.contains(options.template_id)) {
        throw Error(ErrorKind::Config, "prompt template '" + options.template_id + "' is not registered");
    }
    DescriptionSet out;
    std::set<std::string> seen;
    const int repeats = std::max(1, options.repeats);
    for (int r = 0; r < repeats; ++r) {
        const VllmAnswer answer =
            vllm_query(vllm, templates, object_name, normal_image, options.template_id, seed + static_cast<std::uint64_t>(r));
        const std::string ref = "transcript:" + std::to_string(out.transcripts.size());
        out.transcripts.push_back({object_name, answer.question, answer.raw});
        for (const auto& d : answer.descriptions) {
            if (!seen.insert(d).second) continue;
            AnomalyDescriptor desc = make_descriptor(object_name, d, DescriptorSource::Vllm);
            desc.raw_answer_ref = ref;
            out.descriptors.push_back(std::move(desc));
        }
    }
    return out;
}

MatchResult match(const AnomalyDescriptor& descriptor, const EmbeddingVector& description_embedding,
                  const std::vector<texlib::PoolEntry>& pool, std::size_t top_k) {
    if (pool.empty()) throw Error(ErrorKind::NoCandidates, "matching pool is empty");
    std::vector<ScoredAsset> scored;
    scored.reserve(pool.size());
    for (const auto& entry : pool) {
        const double sim = std::clamp(description_embedding.dot(entry.embedding), -1.0, 1.0);
        scored.push_back({entry.asset_id, sim});
    }
    auto better = [](const ScoredAsset& a, const ScoredAsset& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.asset_id < b.asset_id;
    };
    const std::size_t keep = std::min(scored.size(), top_k + 1);
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), better);

    MatchResult result;
    result.descriptor = descriptor;
    result.asset_id = scored.front().asset_id;
    result.similarity = scored.front().similarity;
    result.runner_ups.assign(scored.begin() + 1, scored.begin() + static_cast<std::ptrdiff_t>(keep));
    return result;
}

MatchResult match(const AnomalyDescriptor& descriptor, TextEmbedder& embedder,
                  const std::vector<texlib::PoolEntry>& pool, std::size_t top_k) {
    if (pool.empty()) throw Error(ErrorKind::NoCandidates, "matching pool is empty");
    return match(descriptor, embedder.embed_text(descriptor.description), pool, top_k);
}

MatchBatch match_all(const std::vector<AnomalyDescriptor>& descriptors, TextEmbedder& embedder,
                     const std::vector<texlib::PoolEntry>& pool, std::size_t top_k) {
    MatchBatch batch;
    for (const auto& d : descriptors) {
        try {
            batch.results.push_back(match(d, embedder, pool, top_k));
        } catch (const Error& e) {
            batch.errors.push_back({d, std::string(to_string(e.kind())) + ": " + e.what()});
        }
    }
    return batch;
}

ObjectMatches match_all(Vllm& vllm, TextEmbedder& embedder, const PromptTemplates& templates,
                        const std::string& object_name, const Image& normal_image,
                        const std::vector<texlib::PoolEntry>& pool, const MatchOptions& options, std::uint64_t seed) {
    ObjectMatches out;
    out.descriptions = generate_descriptions(vllm, templates, object_name, normal_image, options, seed);
    out.matches = match_all(out.descriptions.descriptors, embedder, pool, options.top_k);
    return out;
}

}  // namespace anomsynth::descmatch
