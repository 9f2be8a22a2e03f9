#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "anomsynth/texlib.hpp"

namespace anomsynth::server {

struct ServerOptions {
    std::string host = "127.0.0.1";
    /// 0 picks a free port.
    int port = 8080;
    /// Served under `/` when set (the curation UI bundle).
    std::optional<std::filesystem::path> static_dir;
    std::size_t max_page = 500;
};

/// HTTP front end for curation. Every state change goes through
/// TextureLibrary::decide(); the server never writes the manifest itself.
///
///   GET  /api/queue?state=&category=&limit=&offset=
///   GET  /api/assets/{id}
///   GET  /api/assets/{id}/image
///   GET  /api/assets/{id}/edges
///   POST /api/assets/{id}/decision   {"decision": "accept"|"reject", "note": "..."}
///   GET  /api/stats
class CurationServer {
public:
    CurationServer(texlib::TextureLibrary& library, ServerOptions options = {});
    ~CurationServer();

    CurationServer(const CurationServer&) = delete;
    CurationServer& operator=(const CurationServer&) = delete;

    /// Binds and serves on a background thread; returns the bound port.
    /// Throws Error(Config) when the address cannot be bound.
    int start();
    /// Binds and serves on the calling thread until stop().
    void run();
    void stop();
    int port() const;
    bool running() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace anomsynth::server
