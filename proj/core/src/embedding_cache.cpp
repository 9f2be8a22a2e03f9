#include "anomsynth/embedding_cache.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "anomsynth/error.hpp"

namespace anomsynth {

namespace {

constexpr char kMagic[8] = {'A', 'S', 'E', 'M', 'B', 'C', '0', '1'};

}  // namespace

EmbeddingCache::EmbeddingCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    load();
}

std::string EmbeddingCache::make_key(const std::string& content_hash, const std::string& backend_name) {
    return content_hash + ":" + backend_name;
}

std::optional<EmbeddingVector> EmbeddingCache::find(const std::string& key) const {
    if (auto it = entries_.find(key); it != entries_.end()) return it->second;
    return std::nullopt;
}

void EmbeddingCache::load() {
    const auto idx_path = dir_ / index_name;
    const auto bin_path = dir_ / bin_name;
    if (!std::filesystem::exists(idx_path) || !std::filesystem::exists(bin_path)) return;

    std::ifstream bin(bin_path, std::ios::binary);
    char magic[8];
    if (!bin.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw Error(ErrorKind::Io, "embedding cache has a bad header: " + bin_path.string());
    }

    std::ifstream idx(idx_path);
    std::string line;
    while (std::getline(idx, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string key;
        std::uint64_t offset = 0;
        std::uint32_t dim = 0;
        if (!std::getline(fields, key, '\t') || !(fields >> offset >> dim)) {
            throw Error(ErrorKind::Io, "malformed embedding index line: " + line);
        }
        bin.seekg(static_cast<std::streamoff>(offset));
        std::uint32_t key_len = 0;
        bin.read(reinterpret_cast<char*>(&key_len), sizeof(key_len));
        std::string stored_key(key_len, '\0');
        bin.read(stored_key.data(), key_len);
        std::uint32_t stored_dim = 0;
        bin.read(reinterpret_cast<char*>(&stored_dim), sizeof(stored_dim));
        if (!bin || stored_key != key || stored_dim != dim) {
            throw Error(ErrorKind::Io, "embedding index disagrees with data file for key " + key);
        }
        std::vector<float> values(dim);
        bin.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(dim * sizeof(float)));
        if (!bin) throw Error(ErrorKind::Io, "truncated embedding record for key " + key);
        entries_.insert_or_assign(key, EmbeddingVector::from_normalized(std::move(values)));
    }
}

void EmbeddingCache::put(const std::string& key, const EmbeddingVector& vec) {
    if (dir_.empty()) {
        entries_.insert_or_assign(key, vec);
        return;
    }
    const auto bin_path = dir_ / bin_name;
    const bool fresh = !std::filesystem::exists(bin_path) || std::filesystem::file_size(bin_path) == 0;
    std::ofstream bin(bin_path, std::ios::binary | std::ios::app);
    if (!bin) throw Error(ErrorKind::Io, "cannot open " + bin_path.string());
    if (fresh) bin.write(kMagic, sizeof(kMagic));
    bin.flush();
    const auto offset = static_cast<std::uint64_t>(std::filesystem::file_size(bin_path));

    const auto key_len = static_cast<std::uint32_t>(key.size());
    const auto dim = static_cast<std::uint32_t>(vec.dim());
    bin.write(reinterpret_cast<const char*>(&key_len), sizeof(key_len));
    bin.write(key.data(), key_len);
    bin.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
    bin.write(reinterpret_cast<const char*>(vec.values().data()), static_cast<std::streamsize>(dim * sizeof(float)));
    bin.flush();
    if (!bin) throw Error(ErrorKind::Io, "failed writing embedding record");

    std::ofstream idx(dir_ / index_name, std::ios::app);
    idx << key << '\t' << offset << '\t' << dim << '\n';
    idx.flush();
    if (!idx) throw Error(ErrorKind::Io, "failed writing embedding index");
    entries_.insert_or_assign(key, vec);
}

}  // namespace anomsynth
