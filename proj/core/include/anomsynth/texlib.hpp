#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anomsynth/backends.hpp"
#include "anomsynth/embedding_cache.hpp"
#include "anomsynth/imageops.hpp"

namespace anomsynth::texlib {

enum class CurationState { Pending, Accepted, Rejected, AutoRejected };

const char* to_string(CurationState s);
CurationState curation_state_from_string(const std::string& s);

struct TextureAsset {
    std::string asset_id;
    std::string category;
    std::string image_path;
    std::string content_hash;
    double edge_density = 0.0;
    std::optional<std::string> caption;
    CurationState curation_state = CurationState::Pending;
    std::optional<std::string> decision_note;
    std::optional<std::string> embedding_ref;

    bool operator==(const TextureAsset&) const = default;
};

void to_json(nlohmann::json& j, const TextureAsset& a);
void from_json(const nlohmann::json& j, TextureAsset& a);

class Taxonomy {
public:
    Taxonomy() = default;
    /// Throws Error(Taxonomy) when empty or when names repeat.
    explicit Taxonomy(std::vector<std::string> categories);

    /// Stand-in list of 75 defect-texture categories.
    static Taxonomy default_taxonomy();
    /// One name per line; blank lines and `#` comments are ignored.
    static Taxonomy load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    bool contains(const std::string& name) const;
    const std::vector<std::string>& categories() const noexcept { return categories_; }
    std::size_t size() const noexcept { return categories_.size(); }

    bool operator==(const Taxonomy&) const = default;

private:
    std::vector<std::string> categories_;
};

// ---------------------------------------------------------------------------
// Automatic cleaning

struct CleaningBounds {
    double min_density = 0.02;
    double max_density = 0.70;
};

enum class CleanVerdict { Pass, Dense, Sparse };
const char* to_string(CleanVerdict v);

/// Pass iff min <= density <= max; the bounds themselves pass.
CleanVerdict classify_density(double edge_density, const CleaningBounds& bounds = {});

/// Applies the verdict to a pending or auto-rejected asset and returns it.
CleanVerdict auto_clean(TextureAsset& asset, const CleaningBounds& bounds = {});

struct DensityOptions {
    int resolution = 512;  ///< images larger than this are resampled to resolution x resolution
    imageops::CannyThresholds canny{};
};

BinaryMask edge_mask_for_density(const Image& img, const DensityOptions& options);
double edge_density(const Image& img, const DensityOptions& options);

// ---------------------------------------------------------------------------
// Persistent library

struct DecisionRecord {
    std::uint64_t seq = 0;
    std::string asset_id;
    std::string decision;  ///< accept | reject | auto_pass | auto_reject_dense | auto_reject_sparse
    CurationState from = CurationState::Pending;
    CurationState to = CurationState::Pending;
    std::optional<std::string> note;
    std::string actor;
    std::string timestamp;

    bool operator==(const DecisionRecord&) const = default;
};

void to_json(nlohmann::json& j, const DecisionRecord& r);
void from_json(const nlohmann::json& j, DecisionRecord& r);

struct LibraryManifest {
    int schema_version = 1;
    Taxonomy taxonomy;
    DensityOptions density;
    CleaningBounds bounds;
    std::uint64_t decisions_applied = 0;
    std::vector<TextureAsset> assets;
    std::vector<BackendDescriptor> backend_descriptors;

    const TextureAsset* find(const std::string& asset_id) const;
    bool operator==(const LibraryManifest& o) const;
};

void to_json(nlohmann::json& j, const LibraryManifest& m);
void from_json(const nlohmann::json& j, LibraryManifest& m);

/// Applies a decision log in order to a manifest's asset states.
void replay(LibraryManifest& manifest, const std::vector<DecisionRecord>& history);

struct IngestReport {
    std::size_t added_pending = 0;
    std::size_t auto_rejected = 0;
    std::size_t duplicates = 0;
    std::size_t skipped = 0;  ///< files that are not decodable images
};

struct CleanReport {
    std::size_t passed = 0;
    std::size_t dense = 0;
    std::size_t sparse = 0;
};

struct CacheStats {
    std::size_t computed = 0;
    std::size_t hits = 0;
};

struct StateCounts {
    std::size_t pending = 0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t auto_rejected = 0;

    std::size_t& of(CurationState s);
};

struct LibraryStats {
    StateCounts total;
    std::vector<std::pair<std::string, StateCounts>> by_category;  ///< taxonomy order, nonempty categories only
};

nlohmann::json to_json(const LibraryStats& s);

struct PoolEntry {
    std::string asset_id;
    std::string category;
    EmbeddingVector embedding;
};

struct QueuePage {
    std::size_t total = 0;
    std::vector<TextureAsset> items;
};

enum class Decision { Accept, Reject };

/// A texture library rooted at a directory:
///   manifest.json, decisions.jsonl, categories.txt, embeddings.{bin,idx}
///
/// Mutations are serialized through one writer lock and published as
/// immutable snapshots; readers never observe a half-applied change.
/// Curation decisions reach decisions.jsonl (flushed and synced) before
/// decide() returns, so a crash after acknowledgement loses nothing.
class TextureLibrary {
public:
    /// Opens an existing library, or initializes one with the default taxonomy.
    static TextureLibrary open(const std::filesystem::path& dir);
    static TextureLibrary create(const std::filesystem::path& dir, Taxonomy taxonomy,
                                 DensityOptions density = {}, CleaningBounds bounds = {});

    TextureLibrary(TextureLibrary&&) noexcept;
    TextureLibrary& operator=(TextureLibrary&&) noexcept;
    ~TextureLibrary();

    const std::filesystem::path& dir() const noexcept;
    std::shared_ptr<const LibraryManifest> snapshot() const;

    IngestReport ingest(const std::string& category, const std::filesystem::path& source_dir);
    CleanReport clean();
    TextureAsset decide(const std::string& asset_id, Decision decision, std::optional<std::string> note = {},
                        const std::string& actor = "curator");
    /// Throws Error(Transport) naming the remaining count on backend failure;
    /// captions obtained before the failure are kept.
    std::size_t caption_accepted(Captioner& captioner);
    CacheStats build_embedding_cache(ImageEmbedder& embedder);

    /// Accepted assets with an embedding from `backend_name`.
    std::vector<PoolEntry> matching_pool(const std::string& backend_name,
                                         const std::optional<std::string>& category = {}) const;

    LibraryStats stats() const;
    QueuePage queue(std::optional<CurationState> state, const std::optional<std::string>& category,
                    std::size_t limit, std::size_t offset) const;
    /// Throws Error(NotFound).
    TextureAsset asset(const std::string& asset_id) const;
    Image load_image(const std::string& asset_id) const;
    BinaryMask edge_mask(const std::string& asset_id) const;

    std::vector<DecisionRecord> history() const;
    void record_backends(const std::vector<BackendDescriptor>& descriptors);
    /// Rewrites manifest.json (atomically) including all applied decisions.
    void save();

    static constexpr const char* manifest_name = "manifest.json";
    static constexpr const char* decisions_name = "decisions.jsonl";
    static constexpr const char* taxonomy_name = "categories.txt";

private:
    struct Impl;
    explicit TextureLibrary(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

}  // namespace anomsynth::texlib
