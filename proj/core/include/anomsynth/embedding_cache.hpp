#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "anomsynth/backends.hpp"

namespace anomsynth {

/// Append-only persistent store of embeddings keyed by
/// "<content sha256>:<backend name>".
///
/// On disk: `embeddings.bin` holds an 8-byte magic followed by records of
/// (u32 key length, key bytes, u32 dim, dim x f32), native endianness;
/// `embeddings.idx` is plain text, one `key<TAB>offset<TAB>dim` line per record.
/// A key written twice resolves to its last record.
class EmbeddingCache {
public:
    EmbeddingCache() = default;
    explicit EmbeddingCache(std::filesystem::path dir);

    static std::string make_key(const std::string& content_hash, const std::string& backend_name);

    bool contains(const std::string& key) const { return entries_.count(key) != 0; }
    std::optional<EmbeddingVector> find(const std::string& key) const;
    std::size_t size() const noexcept { return entries_.size(); }

    /// Writes the record to disk before returning.
    void put(const std::string& key, const EmbeddingVector& vec);

    static constexpr const char* bin_name = "embeddings.bin";
    static constexpr const char* index_name = "embeddings.idx";

private:
    void load();

    std::filesystem::path dir_;
    std::map<std::string, EmbeddingVector> entries_;
};

}  // namespace anomsynth
