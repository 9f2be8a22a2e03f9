// Command-line front end: texture library upkeep, description/matching,
// synthesis runs, evaluation, and the curation service.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <thread>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "anomsynth/demo.hpp"
#include "anomsynth/descmatch.hpp"
#include "anomsynth/error.hpp"
#include "anomsynth/metrics.hpp"
#include "anomsynth/orchestrator.hpp"
#include "anomsynth/png_io.hpp"
#include "anomsynth/server.hpp"
#include "anomsynth/texlib.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace anomsynth;

namespace {

struct Common {
    std::string config_path;
    std::string library;
    std::string templates;
};

orchestrator::RunConfig load_config(const Common& common) {
    orchestrator::RunConfig cfg;
    if (!common.config_path.empty()) cfg = orchestrator::load_run_config(common.config_path);
    if (!common.library.empty()) cfg.paths.library = common.library;
    if (!common.templates.empty()) cfg.paths.templates = common.templates;
    return cfg;
}

PromptTemplates load_templates(const orchestrator::RunConfig& cfg) {
    PromptTemplates t;
    if (!cfg.paths.templates.empty()) t.load_directory(cfg.paths.templates);
    return t;
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

std::vector<int> parse_values(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw Error(ErrorKind::Config, "not an integer list: '" + csv + "'");
        }
    }
    return out;
}

// Narrows the configured objects to `object` and applies command-line overrides.
void select_object(orchestrator::RunConfig& cfg, const std::string& object, const std::vector<std::string>& images,
                   const std::vector<std::string>& descriptions, int count) {
    if (!object.empty()) {
        orchestrator::ObjectSpec spec;
        if (auto it = cfg.objects.find(object); it != cfg.objects.end()) spec = it->second;
        cfg.objects.clear();
        cfg.objects[object] = spec;
    }
    for (auto& [name, spec] : cfg.objects) {
        if (!images.empty()) spec.normal_images = images;
        if (!descriptions.empty()) spec.descriptions = descriptions;
        if (count >= 0) spec.count = count;
    }
}

std::atomic<server::CurationServer*> g_server{nullptr};

extern "C" void on_signal(int) {
    if (auto* s = g_server.load()) s->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"anomsynth: zero-shot anomaly synthesis toolkit"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--config", common.config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
    app.add_option("--library", common.library, "Texture library directory (default: library)");
    app.add_option("--templates", common.templates, "Extra prompt-template directory")->check(CLI::ExistingDirectory);

    std::function<int()> action;

    // texlib ------------------------------------------------------------------
    auto* texlib_cmd = app.add_subcommand("texlib", "Texture library maintenance");
    texlib_cmd->require_subcommand(1);

    auto with_library = [&](auto&& f) {
        return [&, f] {
            const auto cfg = load_config(common);
            auto lib = texlib::TextureLibrary::open(cfg.paths.library);
            return f(cfg, lib);
        };
    };

    std::string category;
    std::string src;
    auto* ingest = texlib_cmd->add_subcommand("ingest", "Add a directory of PNG textures under one category");
    ingest->add_option("--category", category, "Taxonomy category")->required();
    ingest->add_option("--src", src, "Source directory")->required()->check(CLI::ExistingDirectory);
    ingest->callback([&] {
        action = with_library([&](const orchestrator::RunConfig&, texlib::TextureLibrary& lib) {
            const auto r = lib.ingest(category, src);
            print({{"added_pending", r.added_pending},
                   {"auto_rejected", r.auto_rejected},
                   {"duplicates", r.duplicates},
                   {"skipped", r.skipped}});
            return 0;
        });
    });

    texlib_cmd->add_subcommand("clean", "Re-apply the edge-density bounds to pending and auto-rejected textures")
        ->callback([&] {
            action = with_library([](const orchestrator::RunConfig&, texlib::TextureLibrary& lib) {
                const auto r = lib.clean();
                print({{"pass", r.passed}, {"dense", r.dense}, {"sparse", r.sparse}});
                return 0;
            });
        });

    texlib_cmd->add_subcommand("embed", "Compute missing embeddings for accepted textures")->callback([&] {
        action = with_library([](const orchestrator::RunConfig& cfg, texlib::TextureLibrary& lib) {
            BackendSet b = make_backends(cfg.backends);
            const auto s = lib.build_embedding_cache(*b.image_embedder);
            lib.record_backends(b.descriptors());
            lib.save();
            print({{"computed", s.computed}, {"cached", s.hits}, {"backend", b.image_embedder->descriptor().name}});
            return 0;
        });
    });

    texlib_cmd->add_subcommand("caption", "Caption accepted textures that have none")->callback([&] {
        action = with_library([](const orchestrator::RunConfig& cfg, texlib::TextureLibrary& lib) {
            BackendSet b = make_backends(cfg.backends);
            print({{"captioned", lib.caption_accepted(*b.captioner)}});
            return 0;
        });
    });

    texlib_cmd->add_subcommand("stats", "Counts by curation state and category")->callback([&] {
        action = with_library([](const orchestrator::RunConfig&, texlib::TextureLibrary& lib) {
            print(texlib::to_json(lib.stats()));
            return 0;
        });
    });

    std::string decide_asset;
    std::string decide_value;
    std::string decide_note;
    auto* decide = texlib_cmd->add_subcommand("decide", "Record a curation decision for one pending texture");
    decide->add_option("--asset", decide_asset)->required();
    decide->add_option("--decision", decide_value)->required()->check(CLI::IsMember({"accept", "reject"}));
    decide->add_option("--note", decide_note);
    decide->callback([&] {
        action = with_library([&](const orchestrator::RunConfig&, texlib::TextureLibrary& lib) {
            const auto a = lib.decide(decide_asset, decide_value == "accept" ? texlib::Decision::Accept : texlib::Decision::Reject,
                                      decide_note.empty() ? std::nullopt : std::optional<std::string>(decide_note), "cli");
            print(json(a));
            return 0;
        });
    });

    // describe / match ---------------------------------------------------------
    std::string object;
    std::string image;
    int repeats = 1;
    std::uint64_t seed = 0;
    auto* describe = app.add_subcommand("describe", "Ask the VLLM for anomaly descriptions (JSONL on stdout)");
    describe->add_option("--object", object)->required();
    describe->add_option("--image", image, "Normal image (PNG)")->required()->check(CLI::ExistingFile);
    describe->add_option("--repeats", repeats, "Number of queries to union")->check(CLI::PositiveNumber);
    describe->add_option("--seed", seed);
    describe->callback([&] {
        action = [&] {
            auto cfg = load_config(common);
            cfg.matching.repeats = repeats;
            BackendSet b = make_backends(cfg.backends);
            const auto set = descmatch::generate_descriptions(*b.vllm, load_templates(cfg), object, png::read(image),
                                                              cfg.matching, seed);
            for (const auto& d : set.descriptors) std::cout << json(d).dump() << '\n';
            return 0;
        };
    });

    std::vector<std::string> descriptions;
    std::size_t top_k = 5;
    std::string match_category;
    auto* match_cmd = app.add_subcommand(
        "match", "Match descriptions to accepted textures (MatchResult JSONL); reads descriptor JSONL from stdin "
                 "unless --image or --description is given");
    match_cmd->add_option("--object", object)->required();
    match_cmd->add_option("--image", image, "Normal image; descriptions come from the VLLM")->check(CLI::ExistingFile);
    match_cmd->add_option("--description", descriptions, "Manual description (repeatable)");
    match_cmd->add_option("--top-k", top_k);
    match_cmd->add_option("--category", match_category, "Only consider this texture category");
    match_cmd->add_option("--seed", seed);
    match_cmd->callback([&] {
        action = [&] {
            auto cfg = load_config(common);
            BackendSet b = make_backends(cfg.backends);
            std::vector<descmatch::AnomalyDescriptor> ds;
            if (!descriptions.empty()) {
                for (const auto& d : descriptions) ds.push_back(descmatch::make_descriptor(object, d));
            } else if (!image.empty()) {
                ds = descmatch::generate_descriptions(*b.vllm, load_templates(cfg), object, png::read(image), cfg.matching, seed)
                         .descriptors;
            } else {
                std::string line;
                while (std::getline(std::cin, line)) {
                    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                    try {
                        ds.push_back(json::parse(line).get<descmatch::AnomalyDescriptor>());
                    } catch (const json::exception& e) {
                        throw Error(ErrorKind::Parse, std::string("bad descriptor line: ") + e.what());
                    }
                }
            }
            auto lib = texlib::TextureLibrary::open(cfg.paths.library);
            const auto pool = lib.matching_pool(b.text_embedder->descriptor().name,
                                                match_category.empty() ? cfg.matching.restrict_category
                                                                       : std::optional<std::string>(match_category));
            const auto batch = descmatch::match_all(ds, *b.text_embedder, pool, top_k);
            for (const auto& r : batch.results) std::cout << json(r).dump() << '\n';
            for (const auto& e : batch.errors) std::cerr << "match failed for '" << e.descriptor.description << "': " << e.message << '\n';
            if (batch.results.empty() && !batch.errors.empty()) return static_cast<int>(orchestrator::ConfigFailure);
            return 0;
        };
    });

    // synth / sweep -----------------------------------------------------------------
    int count = -1;
    int t_star = -1;
    int steps = -1;
    int workers = -1;
    std::string out_dir;
    std::vector<std::string> images;
    bool seed_set = false;
    auto apply_run_flags = [&](orchestrator::RunConfig& cfg) {
        select_object(cfg, object, images, descriptions, count);
        if (seed_set) cfg.seed = seed;
        if (steps > 0) cfg.synthesis.schedule = synthpipe::NoiseSchedule::cosine(steps);
        if (t_star >= 0) cfg.synthesis.t_star = t_star;
        if (workers > 0) cfg.workers = workers;
        if (!out_dir.empty()) cfg.paths.out = out_dir;
    };
    auto add_run_flags = [&](CLI::App* cmd, bool sweep) {
        cmd->add_option("--object", object, "Object name (restricts or extends the configured objects)");
        cmd->add_option("--image", images, "Normal image(s) for the object")->check(CLI::ExistingFile);
        cmd->add_option("--description", descriptions, "Skip the VLLM and use these descriptions");
        cmd->add_option("--count", count, "Images per object (default 500)")->check(CLI::NonNegativeNumber);
        cmd->add_option("--seed", seed, "Run seed")->each([&](const std::string&) { seed_set = true; });
        if (!sweep) cmd->add_option("--t-star", t_star, "Denoising start step (default 16)");
        cmd->add_option("--steps", steps, "Sampler steps T (default 20)")->check(CLI::PositiveNumber);
        cmd->add_option("--workers", workers, "Parallel synthesis workers")->check(CLI::PositiveNumber);
        cmd->add_option("--out", out_dir, "Output directory");
    };

    auto* synth = app.add_subcommand("synth", "Generate anomaly images and masks into a run directory");
    add_run_flags(synth, false);
    synth->callback([&] {
        action = [&] {
            auto cfg = load_config(common);
            apply_run_flags(cfg);
            const auto summary = orchestrator::run_synthesis(cfg);
            for (const auto& f : summary.failures) {
                std::cerr << "synthesis failed (" << f.object_name << "/" << f.description << " #" << f.seq
                          << "): " << f.message << '\n';
            }
            print({{"run_dir", summary.run_dir.string()}, {"records", summary.records}, {"failures", summary.failures.size()}});
            return summary.exit_code();
        };
    });

    std::string values = "12,14,16,18,20";
    auto* sweep = app.add_subcommand("sweep-tstar", "Run and evaluate once per T* value");
    add_run_flags(sweep, true);
    sweep->add_option("--values", values, "Comma-separated T* values");
    sweep->callback([&] {
        action = [&] {
            auto cfg = load_config(common);
            apply_run_flags(cfg);
            const fs::path root = out_dir.empty() ? fs::path("sweep") : fs::path(out_dir);
            const auto rows = orchestrator::run_tstar_sweep(cfg, parse_values(values), root);
            const std::string csv = orchestrator::sweep_csv(rows);
            const std::string table = orchestrator::sweep_table(rows);
            std::ofstream(root / "sweep.csv") << csv;
            std::ofstream(root / "sweep.md") << table;
            std::cout << csv << '\n' << table;
            return 0;
        };
    });

    // eval / viz --------------------------------------------------------------
    std::string run_dir;
    std::string report_path;
    auto* eval = app.add_subcommand("eval", "IS / IL report for a run directory");
    eval->add_option("--run", run_dir)->required()->check(CLI::ExistingDirectory);
    eval->add_option("--out", report_path, "Also write the report to this file");
    eval->callback([&] {
        action = [&] {
            const auto cfg = load_config(common);
            BackendSet b = make_backends(cfg.backends);
            const json report = metrics::to_json(orchestrator::evaluate_run(run_dir, *b.feature_extractor));
            if (!report_path.empty()) std::ofstream(report_path) << report.dump(2) << '\n';
            print(report);
            return 0;
        };
    });

    std::vector<std::string> runs;
    std::size_t reduce_to = 0;
    auto* viz = app.add_subcommand("viz", "Projection artifact (points.csv, ellipses.json), one group per run");
    viz->add_option("--runs", runs)->required()->check(CLI::ExistingDirectory);
    viz->add_option("--out", out_dir, "Output directory (default: viz)");
    viz->add_option("--reduce", reduce_to, "k-means reduce each group to this many points first");
    viz->add_option("--seed", seed);
    viz->callback([&] {
        action = [&] {
            const auto cfg = load_config(common);
            BackendSet b = make_backends(cfg.backends);
            std::vector<metrics::FeatureGroup> groups;
            for (const auto& r : runs) {
                std::vector<Image> all;
                for (auto& [obj, batches] : orchestrator::load_run_images(r)) {
                    for (auto& [desc, imgs] : batches) all.insert(all.end(), imgs.begin(), imgs.end());
                }
                groups.push_back({fs::path(r).lexically_normal().filename().string(),
                                  b.feature_extractor->extract(all).features});
                if (groups.back().label.empty()) groups.back().label = r;
            }
            std::mt19937_64 rng(seed);
            const auto artifact = metrics::export_projection(
                groups, *b.projector, reduce_to > 0 ? std::optional<std::size_t>(reduce_to) : std::nullopt, rng);
            const fs::path dir = out_dir.empty() ? fs::path("viz") : fs::path(out_dir);
            metrics::write_projection(artifact, dir);
            print({{"rows", artifact.rows.size()}, {"groups", groups.size()}, {"dir", dir.string()}});
            return 0;
        };
    });

    // serve -------------------------------------------------------------------
    int port = 8080;
    std::string host = "127.0.0.1";
    std::string manifest;
    std::string static_dir;
    auto* serve = app.add_subcommand("serve", "Curation HTTP service");
    serve->add_option("--port", port)->check(CLI::Range(0, 65535));
    serve->add_option("--host", host);
    serve->add_option("--manifest", manifest, "Library directory or its manifest.json");
    serve->add_option("--static", static_dir, "UI bundle served under /")->check(CLI::ExistingDirectory);
    serve->callback([&] {
        action = [&] {
            auto cfg = load_config(common);
            fs::path lib_dir = manifest.empty() ? fs::path(cfg.paths.library) : fs::path(manifest);
            if (lib_dir.filename() == texlib::TextureLibrary::manifest_name) lib_dir = lib_dir.parent_path();
            if (!fs::exists(lib_dir / texlib::TextureLibrary::manifest_name)) {
                throw Error(ErrorKind::Config, "no library manifest at " + lib_dir.string());
            }
            auto lib = texlib::TextureLibrary::open(lib_dir);
            server::ServerOptions opts;
            opts.host = host;
            opts.port = port;
            if (!static_dir.empty()) opts.static_dir = static_dir;
            server::CurationServer srv(lib, opts);
            g_server = &srv;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            const int bound = srv.start();
            std::cout << "serving " << lib_dir.string() << " on http://" << host << ":" << bound << std::endl;
            while (srv.running()) std::this_thread::sleep_for(std::chrono::milliseconds(200));
            g_server = nullptr;
            return 0;
        };
    });

    // demo-fixture --------------------------------------------------------------
    std::string fixture_dir;
    int fixture_count = 10;
    auto* fixture = app.add_subcommand("demo-fixture", "Write a synthetic library, normal image and config.json");
    fixture->add_option("--dir", fixture_dir)->required();
    fixture->add_option("--seed", seed);
    fixture->add_option("--count", fixture_count)->check(CLI::NonNegativeNumber);
    fixture->callback([&] {
        action = [&] {
            const auto fx = demo::build_fixture(fixture_dir, seed, fixture_count);
            print({{"library", fx.library.string()}, {"normal_image", fx.normal_image.string()}, {"config", fx.config.string()}});
            return 0;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : orchestrator::ConfigFailure;
    }

    try {
        return action();
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return orchestrator::exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
