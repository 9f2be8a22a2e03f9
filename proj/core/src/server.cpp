#include "anomsynth/server.hpp"

#include <httplib.h>

#include <thread>

#include "anomsynth/error.hpp"
#include "anomsynth/png_io.hpp"

namespace anomsynth::server {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, json{{"error", message}});
}

int status_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NotFound:
            return 404;
        case ErrorKind::StateConflict:
            return 409;
        case ErrorKind::InvalidInput:
        case ErrorKind::Parse:
            return 400;
        default:
            return 500;
    }
}

json asset_summary(const texlib::TextureAsset& a) {
    json j = a;
    j.erase("image_path");
    j["image_url"] = "/api/assets/" + a.asset_id + "/image";
    j["edges_url"] = "/api/assets/" + a.asset_id + "/edges";
    return j;
}

std::optional<std::size_t> parse_count(const std::string& s) {
    if (s.empty() || s.size() > 9 || s.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
    return static_cast<std::size_t>(std::stoul(s));
}

}  // namespace

struct CurationServer::Impl {
    texlib::TextureLibrary& library;
    ServerOptions options;
    httplib::Server http;
    std::thread thread;
    int bound_port = -1;

    Impl(texlib::TextureLibrary& lib, ServerOptions opts) : library(lib), options(std::move(opts)) {
        // SO_REUSEADDR only: the library default adds SO_REUSEPORT, which lets
        // a second server silently share a port that is already serving.
        http.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
        });
        routes();
    }

    // Wraps a handler so library errors become JSON error responses.
    template <typename F>
    httplib::Server::Handler guarded(F f) {
        return [f](const httplib::Request& req, httplib::Response& res) {
            try {
                f(req, res);
            } catch (const Error& e) {
                send_error(res, status_for(e.kind()), e.what());
            } catch (const std::exception& e) {
                send_error(res, 500, e.what());
            }
        };
    }

    void routes() {
        http.Get("/api/queue", guarded([this](const httplib::Request& req, httplib::Response& res) {
            std::optional<texlib::CurationState> state = texlib::CurationState::Pending;
            if (req.has_param("state")) {
                const std::string s = req.get_param_value("state");
                if (s == "all") {
                    state.reset();
                } else if (!s.empty()) {
                    try {
                        state = texlib::curation_state_from_string(s);
                    } catch (const Error&) {
                        return send_error(res, 400, "unknown state '" + s + "'");
                    }
                }
            }
            std::optional<std::string> category;
            if (req.has_param("category") && !req.get_param_value("category").empty()) {
                category = req.get_param_value("category");
            }
            std::size_t limit = 50;
            std::size_t offset = 0;
            if (req.has_param("limit")) {
                const auto v = parse_count(req.get_param_value("limit"));
                if (!v || *v == 0) return send_error(res, 400, "limit must be a positive integer");
                limit = std::min(*v, options.max_page);
            }
            if (req.has_param("offset")) {
                const auto v = parse_count(req.get_param_value("offset"));
                if (!v) return send_error(res, 400, "offset must be a non-negative integer");
                offset = *v;
            }
            const texlib::QueuePage page = library.queue(state, category, limit, offset);
            json items = json::array();
            for (const auto& a : page.items) items.push_back(asset_summary(a));
            send_json(res, 200,
                      json{{"total", page.total}, {"limit", limit}, {"offset", offset}, {"items", std::move(items)}});
        }));

        http.Get(R"(/api/assets/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, asset_summary(library.asset(req.matches[1])));
        }));

        http.Get(R"(/api/assets/([^/]+)/image)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto bytes = png::encode(library.load_image(req.matches[1]));
            res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), "image/png");
        }));

        http.Get(R"(/api/assets/([^/]+)/edges)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto bytes = png::encode_mask(library.edge_mask(req.matches[1]));
            res.set_content(reinterpret_cast<const char*>(bytes.data()), bytes.size(), "image/png");
        }));

        http.Post(R"(/api/assets/([^/]+)/decision)",
                  guarded([this](const httplib::Request& req, httplib::Response& res) {
                      json body;
                      try {
                          body = json::parse(req.body);
                      } catch (const json::exception&) {
                          return send_error(res, 400, "body is not valid JSON");
                      }
                      if (!body.is_object() || !body.contains("decision") || !body.at("decision").is_string()) {
                          return send_error(res, 400, "body must be an object with a string 'decision'");
                      }
                      const std::string d = body.at("decision").get<std::string>();
                      texlib::Decision decision;
                      if (d == "accept") {
                          decision = texlib::Decision::Accept;
                      } else if (d == "reject") {
                          decision = texlib::Decision::Reject;
                      } else {
                          return send_error(res, 400, "decision must be 'accept' or 'reject'");
                      }
                      std::optional<std::string> note;
                      if (body.contains("note") && !body.at("note").is_null()) {
                          if (!body.at("note").is_string()) return send_error(res, 400, "note must be a string");
                          note = body.at("note").get<std::string>();
                      }
                      send_json(res, 200, asset_summary(library.decide(req.matches[1], decision, note, "curator")));
                  }));

        http.Get("/api/stats", guarded([this](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, texlib::to_json(library.stats()));
        }));

        if (options.static_dir) {
            if (!http.set_mount_point("/", options.static_dir->string())) {
                throw Error(ErrorKind::Config, "static directory not found: " + options.static_dir->string());
            }
        } else {
            http.Get("/", [](const httplib::Request&, httplib::Response& res) {
                res.set_content("curation service: see /api/queue and /api/stats\n", "text/plain");
            });
        }
    }

    void bind() {
        if (options.port == 0) {
            bound_port = http.bind_to_any_port(options.host);
        } else {
            bound_port = http.bind_to_port(options.host, options.port) ? options.port : -1;
        }
        if (bound_port < 0) {
            throw Error(ErrorKind::Config, "cannot bind " + options.host + ":" + std::to_string(options.port));
        }
    }
};

CurationServer::CurationServer(texlib::TextureLibrary& library, ServerOptions options)
    : impl_(std::make_unique<Impl>(library, std::move(options))) {}

CurationServer::~CurationServer() { stop(); }

int CurationServer::start() {
    impl_->bind();
    impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
    return impl_->bound_port;
}

void CurationServer::run() {
    impl_->bind();
    impl_->http.listen_after_bind();
}

void CurationServer::stop() {
    if (!impl_) return;
    impl_->http.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

int CurationServer::port() const { return impl_->bound_port; }

bool CurationServer::running() const { return impl_->http.is_running(); }

}  // namespace anomsynth::server
