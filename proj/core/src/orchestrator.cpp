#include "anomsynth/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "anomsynth/error.hpp"
#include "anomsynth/hashing.hpp"
#include "anomsynth/png_io.hpp"
#include "anomsynth/texlib.hpp"

namespace anomsynth::orchestrator {

namespace fs = std::filesystem;
using nlohmann::json;

void RunConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorKind::Config, m); };
    if (workers < 1) fail("workers must be at least 1");
    if (image_size < 0) fail("image_size must not be negative");
    if (image_size > 0 && image_size % maskgen.latent_factor != 0) fail("image_size must be a multiple of the latent factor");
    if (objects.empty()) fail("no objects configured");
    for (const auto& [name, spec] : objects) {
        if (name.empty()) fail("object names must not be empty");
        if (spec.normal_images.empty()) fail("object '" + name + "' has no normal images");
        if (spec.count < 0) fail("object '" + name + "' has a negative count");
    }
    synthesis.validate();
    maskgen.validate();
}

void to_json(json& j, const RunConfig& c) {
    json objects = json::object();
    for (const auto& [name, spec] : c.objects) {
        objects[name] = {{"normal_images", spec.normal_images}, {"count", spec.count}, {"descriptions", spec.descriptions}};
    }
    j = json{{"seed", c.seed},
             {"workers", c.workers},
             {"image_size", c.image_size},
             {"dump_triptych", c.dump_triptych},
             {"paths", {{"library", c.paths.library}, {"out", c.paths.out}, {"templates", c.paths.templates}}},
             {"objects", std::move(objects)},
             {"synthesis", c.synthesis},
             {"maskgen", c.maskgen},
             {"matching",
              {{"top_k", c.matching.top_k},
               {"restrict_category", c.matching.restrict_category ? json(*c.matching.restrict_category) : json(nullptr)},
               {"template_id", c.matching.template_id},
               {"repeats", c.matching.repeats}}},
             {"backends", c.backends}};
}

void from_json(const json& j, RunConfig& c) {
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    c.image_size = j.value("image_size", c.image_size);
    c.dump_triptych = j.value("dump_triptych", c.dump_triptych);
    if (j.contains("paths")) {
        const json& p = j.at("paths");
        c.paths.library = p.value("library", c.paths.library);
        c.paths.out = p.value("out", c.paths.out);
        c.paths.templates = p.value("templates", c.paths.templates);
    }
    c.objects.clear();
    if (j.contains("objects")) {
        for (const auto& [name, spec] : j.at("objects").items()) {
            ObjectSpec s;
            s.normal_images = spec.value("normal_images", std::vector<std::string>{});
            s.count = spec.value("count", s.count);
            s.descriptions = spec.value("descriptions", std::vector<std::string>{});
            c.objects[name] = std::move(s);
        }
    }
    if (j.contains("synthesis")) c.synthesis = j.at("synthesis").get<synthpipe::SynthesisConfig>();
    if (j.contains("maskgen")) c.maskgen = j.at("maskgen").get<maskgen::MaskGenConfig>();
    if (j.contains("matching")) {
        const json& m = j.at("matching");
        c.matching.top_k = m.value("top_k", c.matching.top_k);
        if (m.contains("restrict_category") && !m.at("restrict_category").is_null()) {
            c.matching.restrict_category = m.at("restrict_category").get<std::string>();
        }
        c.matching.template_id = m.value("template_id", c.matching.template_id);
        c.matching.repeats = m.value("repeats", c.matching.repeats);
    }
    if (j.contains("backends")) c.backends = j.at("backends").get<BackendsConfig>();
}

RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot open config file " + path.string());
    try {
        return json::parse(in).get<RunConfig>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, "malformed config " + path.string() + ": " + e.what());
    }
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Transport:
        case ErrorKind::Parse:
            return BackendFailure;
        case ErrorKind::GenerationFailed:
            return GenerationFailure;
        default:
            return ConfigFailure;
    }
}

int RunSummary::exit_code() const {
    if (failures.empty()) return Success;
    const bool backend = std::any_of(failures.begin(), failures.end(),
                                     [](const TaskFailure& f) { return exit_code_for(f.kind) == BackendFailure; });
    return backend ? BackendFailure : exit_code_for(failures.front().kind);
}

std::string slug(const std::string& description) {
    std::string out;
    for (unsigned char ch : description) {
        const char c = static_cast<char>(std::tolower(ch));
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
    }
    return out.empty() ? std::string("_") : out;
}

// ---------------------------------------------------------------------------

namespace {

struct ObjectPlan {
    std::string name;
    std::vector<Image> normals;
    std::vector<BinaryMask> foregrounds;
    descmatch::DescriptionSet descriptions;
    std::vector<descmatch::MatchResult> matches;
    std::vector<descmatch::DescriptorError> match_errors;
    std::map<std::string, Image> textures;  ///< by asset id
};

struct Task {
    std::size_t object = 0;
    std::size_t match = 0;
    std::size_t normal = 0;
    int seq = 0;
    std::uint64_t seed = 0;
};

struct TaskOutcome {
    bool ok = false;
    ErrorKind kind = ErrorKind::InvalidInput;
    std::string message;
};

std::string seq_name(int seq) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", seq);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << text;
}

ObjectPlan plan_object(const std::string& name, const ObjectSpec& spec, const RunConfig& config, BackendSet& backends,
                       const PromptTemplates& templates, const texlib::TextureLibrary& library) {
    ObjectPlan plan;
    plan.name = name;
    for (const auto& p : spec.normal_images) {
        Image img;
        try {
            img = png::read(p);
        } catch (const Error& e) {
            throw Error(ErrorKind::Config, "object '" + name + "': " + e.what());
        }
        if (config.image_size > 0) img = resize(img, config.image_size, config.image_size);
        plan.foregrounds.push_back(backends.segmenter->segment_foreground(img));
        plan.normals.push_back(std::move(img));
    }

    const std::uint64_t describe_seed = config.seed ^ fnv1a64(name);
    if (spec.descriptions.empty()) {
        plan.descriptions = descmatch::generate_descriptions(*backends.vllm, templates, name, plan.normals.front(),
                                                             config.matching, describe_seed);
    } else {
        for (const auto& d : spec.descriptions) {
            plan.descriptions.descriptors.push_back(
                descmatch::make_descriptor(name, d, descmatch::DescriptorSource::Manual));
        }
    }

    const auto pool = library.matching_pool(backends.text_embedder->descriptor().name, config.matching.restrict_category);
    if (pool.empty()) {
        throw Error(ErrorKind::NoCandidates, "no accepted textures with embeddings from '" +
                                                 backends.text_embedder->descriptor().name +
                                                 "' in " + library.dir().string() + " (run texlib embed)");
    }
    auto batch = descmatch::match_all(plan.descriptions.descriptors, *backends.text_embedder, pool, config.matching.top_k);
    plan.matches = std::move(batch.results);
    plan.match_errors = std::move(batch.errors);
    if (plan.matches.empty()) throw Error(ErrorKind::NoCandidates, "object '" + name + "': no description could be matched");
    for (const auto& m : plan.matches) {
        if (!plan.textures.count(m.asset_id)) plan.textures.emplace(m.asset_id, library.load_image(m.asset_id));
    }
    return plan;
}

json plan_json(const ObjectPlan& plan) {
    json transcripts = json::array();
    for (const auto& t : plan.descriptions.transcripts) {
        transcripts.push_back({{"question", t.question}, {"raw_answer", t.raw_answer}});
    }
    json errors = json::array();
    for (const auto& e : plan.match_errors) errors.push_back({{"descriptor", e.descriptor}, {"message", e.message}});
    return json{{"descriptors", plan.descriptions.descriptors},
                {"transcripts", std::move(transcripts)},
                {"matches", plan.matches},
                {"match_errors", std::move(errors)}};
}

// M_in | x_texture | normal image with M_in tinted red.
Image triptych(const Image& normal, const maskgen::MaskBundle& bundle) {
    const int w = normal.width();
    const int h = normal.height();
    Image out(3 * w, h, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const bool in = bundle.m_in.at(x, y);
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) = in ? 1.0f : 0.0f;
                out.at(w + x, y, c) = bundle.x_texture.at(x, y, std::min(c, bundle.x_texture.channels() - 1));
                const float v = normal.at(x, y, std::min(c, normal.channels() - 1));
                out.at(2 * w + x, y, c) = in ? (c == 0 ? 0.5f + 0.5f * v : 0.5f * v) : v;
            }
        }
    }
    return out;
}

TaskOutcome run_task(const Task& task, const ObjectPlan& plan, const RunConfig& config, BackendSet& backends,
                     const fs::path& out_root) {
    const auto& match = plan.matches[task.match];
    try {
        maskgen::Rng rng(task.seed);
        const Image& normal = plan.normals[task.normal];
        const maskgen::MaskBundle bundle = [&] {
            try {
                return maskgen::generate(normal, plan.foregrounds[task.normal], plan.textures.at(match.asset_id),
                                         config.maskgen, rng);
            } catch (const GenerationFailed&) {
                throw;
            } catch (const Error& e) {
                throw synthpipe::StageError("maskgen", e);
            }
        }();
        synthpipe::SynthesisRecord rec = synthpipe::synthesize(plan.name, normal, match, bundle, config.synthesis,
                                                               *backends.inpainter, rng, task.seed);

        const fs::path dir = out_root / slug(plan.name) / slug(match.descriptor.description);
        fs::create_directories(dir);
        const std::string base = seq_name(task.seq);
        png::write(dir / (base + ".png"), rec.x_result);
        png::write_mask(dir / (base + "_mask.png"), rec.m_result);
        if (config.dump_triptych) png::write(dir / (base + "_triptych.png"), triptych(normal, bundle));
        json meta = synthpipe::record_metadata(rec);
        meta["seq"] = task.seq;
        meta["normal_image"] = config.objects.at(plan.name).normal_images[task.normal];
        meta["match_similarity"] = match.similarity;
        meta["files"] = {{"image", base + ".png"}, {"mask", base + "_mask.png"}};
        write_text(dir / (base + ".json"), meta.dump(2) + "\n");
        return {true, ErrorKind::InvalidInput, {}};
    } catch (const Error& e) {
        return {false, e.kind(), e.what()};
    } catch (const std::exception& e) {
        return {false, ErrorKind::Io, e.what()};
    }
}

}  // namespace

RunSummary run_synthesis(const RunConfig& config) {
    config.validate();
    const fs::path out_root = config.paths.out;
    fs::create_directories(out_root);

    PromptTemplates templates;
    if (!config.paths.templates.empty()) templates.load_directory(config.paths.templates);
    auto library = texlib::TextureLibrary::open(config.paths.library);
    const auto snapshot = library.snapshot();

    BackendSet main_backends = make_backends(config.backends);
    std::vector<ObjectPlan> plans;
    for (const auto& [name, spec] : config.objects) {
        plans.push_back(plan_object(name, spec, config, main_backends, templates, library));
    }

    std::vector<Task> tasks;
    for (std::size_t o = 0; o < plans.size(); ++o) {
        const auto& spec = config.objects.at(plans[o].name);
        const std::size_t d = plans[o].matches.size();
        for (int i = 0; i < spec.count; ++i) {
            Task t;
            t.object = o;
            t.match = static_cast<std::size_t>(i) % d;
            t.normal = static_cast<std::size_t>(i) % plans[o].normals.size();
            t.seq = static_cast<int>(static_cast<std::size_t>(i) / d);
            t.seed = config.seed ^ static_cast<std::uint64_t>(tasks.size());
            tasks.push_back(t);
        }
    }

    std::vector<TaskOutcome> outcomes(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex backend_error_mutex;
    std::optional<Error> worker_setup_error;
    auto worker = [&](BackendSet* shared) {
        std::optional<BackendSet> own;
        BackendSet* backends = shared;
        if (!backends) {
            try {
                own.emplace(make_backends(config.backends));
            } catch (const Error& e) {
                std::lock_guard lock(backend_error_mutex);
                if (!worker_setup_error) worker_setup_error = e;
                return;
            }
            backends = &*own;
        }
        for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
            outcomes[i] = run_task(tasks[i], plans[tasks[i].object], config, *backends, out_root);
        }
    };
    const int pool_size = std::max(1, std::min<int>(config.workers, static_cast<int>(tasks.size())));
    if (pool_size == 1) {
        worker(&main_backends);
    } else {
        std::vector<std::jthread> threads;
        for (int w = 0; w < pool_size; ++w) threads.emplace_back(worker, nullptr);
    }
    if (worker_setup_error) throw *worker_setup_error;

    RunSummary summary;
    summary.run_dir = out_root;
    json task_log = json::array();
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const Task& t = tasks[i];
        const auto& plan = plans[t.object];
        const auto& desc = plan.matches[t.match].descriptor.description;
        json entry{{"object", plan.name}, {"description", desc}, {"seq", t.seq}, {"seed", t.seed}};
        if (outcomes[i].ok) {
            ++summary.records;
            entry["status"] = "ok";
        } else {
            entry["status"] = "failed";
            entry["error"] = {{"kind", to_string(outcomes[i].kind)}, {"message", outcomes[i].message}};
            summary.failures.push_back({plan.name, desc, t.seq, outcomes[i].kind, outcomes[i].message});
        }
        task_log.push_back(std::move(entry));
    }

    RunConfig recorded = config;
    recorded.paths.out = ".";
    json objects = json::object();
    for (const auto& p : plans) objects[p.name] = plan_json(p);
    const std::string manifest_text = json(*snapshot).dump();
    const std::vector<std::uint8_t> manifest_bytes(manifest_text.begin(), manifest_text.end());
    json run{{"config", recorded},
             {"library", {{"dir", config.paths.library}, {"manifest_sha256", sha256_hex(manifest_bytes)}}},
             {"backends", main_backends.descriptors()},
             {"objects", std::move(objects)},
             {"tasks", std::move(task_log)},
             {"records", summary.records},
             {"failures", summary.failures.size()}};
    write_text(out_root / "run.json", run.dump(2) + "\n");

    std::string transcripts;
    std::string descriptors;
    std::string matches;
    for (const auto& p : plans) {
        for (const auto& t : p.descriptions.transcripts) {
            transcripts += "## " + p.name + "\nQ: " + t.question + "\nA: " + t.raw_answer + "\n\n";
        }
        for (const auto& d : p.descriptions.descriptors) descriptors += json(d).dump() + "\n";
        for (const auto& m : p.matches) matches += json(m).dump() + "\n";
    }
    write_text(out_root / "transcripts.txt", transcripts);
    write_text(out_root / "descriptors.jsonl", descriptors);
    write_text(out_root / "matches.jsonl", matches);
    return summary;
}

// ---------------------------------------------------------------------------

metrics::RunImages load_run_images(const fs::path& run_dir) {
    if (!fs::is_directory(run_dir)) throw Error(ErrorKind::Config, "run directory not found: " + run_dir.string());
    std::vector<fs::path> records;
    for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
        if (entry.path().filename() == "run.json") continue;
        records.push_back(entry.path());
    }
    std::sort(records.begin(), records.end());

    metrics::RunImages images;
    for (const auto& path : records) {
        std::ifstream in(path);
        json meta;
        try {
            meta = json::parse(in);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Parse, "malformed record " + path.string() + ": " + e.what());
        }
        if (!meta.contains("files") || !meta.contains("object_name")) continue;
        const fs::path image = path.parent_path() / meta.at("files").at("image").get<std::string>();
        images[meta.at("object_name").get<std::string>()][meta.at("description").get<std::string>()].push_back(
            png::read(image));
    }
    if (images.empty()) throw Error(ErrorKind::Config, "no synthesis records under " + run_dir.string());
    return images;
}

metrics::MetricReport evaluate_run(const fs::path& run_dir, FeatureExtractor& extractor) {
    return metrics::evaluate(load_run_images(run_dir), extractor);
}

std::vector<SweepRow> run_tstar_sweep(const RunConfig& config, const std::vector<int>& values, const fs::path& out_root) {
    if (values.empty()) throw Error(ErrorKind::Config, "sweep needs at least one T* value");
    BackendSet eval_backends = make_backends(config.backends);
    std::vector<SweepRow> rows;
    for (int v : values) {
        RunConfig c = config;
        c.synthesis.t_star = v;
        c.synthesis.allow_full_noise = true;
        c.paths.out = (out_root / ("tstar-" + std::to_string(v))).string();
        const RunSummary summary = run_synthesis(c);
        if (summary.records == 0) {
            const auto& f = summary.failures.front();
            throw Error(f.kind, "T*=" + std::to_string(v) + " produced no images: " + f.message);
        }
        const auto report = evaluate_run(c.paths.out, *eval_backends.feature_extractor);
        std::size_t images = 0;
        for (const auto& cat : report.categories) images += cat.images;
        rows.push_back({v, images, report.average_is, report.average_il});
    }
    return rows;
}

namespace {

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", metrics::round2(v));
    return buf;
}

}  // namespace

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "t_star,images,is,il\n";
    for (const auto& r : rows) {
        out << r.t_star << ',' << r.images << ',' << fixed2(r.is) << ',' << (r.il ? fixed2(*r.il) : "") << '\n';
    }
    return out.str();
}

std::string sweep_table(const std::vector<SweepRow>& rows) {
    std::ostringstream head;
    std::ostringstream rule;
    std::ostringstream body;
    head << "| Choice |";
    rule << "|---|";
    body << "| IS/IL |";
    for (const auto& r : rows) {
        head << " T*=" << r.t_star << " |";
        rule << "---|";
        body << ' ' << fixed2(r.is) << " / " << (r.il ? fixed2(*r.il) : "n/a") << " |";
    }
    return head.str() + "\n" + rule.str() + "\n" + body.str() + "\n";
}

}  // namespace anomsynth::orchestrator
