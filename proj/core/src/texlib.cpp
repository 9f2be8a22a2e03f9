#include "anomsynth/texlib.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "anomsynth/error.hpp"
#include "anomsynth/hashing.hpp"
#include "anomsynth/png_io.hpp"

namespace anomsynth::texlib {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(CurationState s) {
    switch (s) {
        case CurationState::Pending: return "pending";
        case CurationState::Accepted: return "accepted";
        case CurationState::Rejected: return "rejected";
        case CurationState::AutoRejected: return "auto_rejected";
    }
    return "pending";
}

CurationState curation_state_from_string(const std::string& s) {
    if (s == "pending") return CurationState::Pending;
    if (s == "accepted") return CurationState::Accepted;
    if (s == "rejected") return CurationState::Rejected;
    if (s == "auto_rejected") return CurationState::AutoRejected;
    throw_invalid("unknown curation state '" + s + "'");
}

const char* to_string(CleanVerdict v) {
    switch (v) {
        case CleanVerdict::Pass: return "pass";
        case CleanVerdict::Dense: return "auto_rejected(dense)";
        case CleanVerdict::Sparse: return "auto_rejected(sparse)";
    }
    return "pass";
}

namespace {

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
    j[key] = v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> get_optional(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
    char out[40];
    std::snprintf(out, sizeof(out), "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

void write_atomically(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw Error(ErrorKind::Io, "failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

// Appends one line and syncs it to stable storage.
void append_durable(const fs::path& path, const std::string& line) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd < 0) throw Error(ErrorKind::Io, "cannot open " + path.string());
    const std::string data = line + "\n";
    std::size_t written = 0;
    while (written < data.size()) {
        const ssize_t n = ::write(fd, data.data() + written, data.size() - written);
        if (n < 0) {
            ::close(fd);
            throw Error(ErrorKind::Io, "failed appending to " + path.string());
        }
        written += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);
}

}  // namespace

void to_json(json& j, const TextureAsset& a) {
    j = json{{"asset_id", a.asset_id},
             {"category", a.category},
             {"image_path", a.image_path},
             {"content_hash", a.content_hash},
             {"edge_density", a.edge_density},
             {"curation_state", to_string(a.curation_state)}};
    put_optional(j, "caption", a.caption);
    put_optional(j, "decision_note", a.decision_note);
    put_optional(j, "embedding_ref", a.embedding_ref);
}

void from_json(const json& j, TextureAsset& a) {
    a.asset_id = j.at("asset_id").get<std::string>();
    a.category = j.at("category").get<std::string>();
    a.image_path = j.at("image_path").get<std::string>();
    a.content_hash = j.at("content_hash").get<std::string>();
    a.edge_density = j.at("edge_density").get<double>();
    a.curation_state = curation_state_from_string(j.at("curation_state").get<std::string>());
    a.caption = get_optional<std::string>(j, "caption");
    a.decision_note = get_optional<std::string>(j, "decision_note");
    a.embedding_ref = get_optional<std::string>(j, "embedding_ref");
}

void to_json(json& j, const DecisionRecord& r) {
    j = json{{"seq", r.seq},
             {"asset_id", r.asset_id},
             {"decision", r.decision},
             {"from", to_string(r.from)},
             {"to", to_string(r.to)},
             {"actor", r.actor},
             {"timestamp", r.timestamp}};
    put_optional(j, "note", r.note);
}

void from_json(const json& j, DecisionRecord& r) {
    r.seq = j.at("seq").get<std::uint64_t>();
    r.asset_id = j.at("asset_id").get<std::string>();
    r.decision = j.at("decision").get<std::string>();
    r.from = curation_state_from_string(j.at("from").get<std::string>());
    r.to = curation_state_from_string(j.at("to").get<std::string>());
    r.actor = j.value("actor", std::string{});
    r.timestamp = j.value("timestamp", std::string{});
    r.note = get_optional<std::string>(j, "note");
}

// ---------------------------------------------------------------------------

Taxonomy::Taxonomy(std::vector<std::string> categories) : categories_(std::move(categories)) {
    if (categories_.empty()) throw Error(ErrorKind::Taxonomy, "taxonomy must not be empty");
    std::set<std::string> seen;
    for (const auto& c : categories_) {
        if (c.empty()) throw Error(ErrorKind::Taxonomy, "taxonomy contains an empty category name");
        if (!seen.insert(c).second) throw Error(ErrorKind::Taxonomy, "duplicate taxonomy category '" + c + "'");
    }
}

Taxonomy Taxonomy::default_taxonomy() {
    // Reconstructed stand-in; the reference collection's full list is unpublished.
    return Taxonomy({
        "cracked",    "moldy",      "scratched",  "faded",      "broken",     "burnt",      "bent",
        "chipped",    "corroded",   "rusty",      "dented",     "stained",    "torn",       "melted",
        "discolored", "peeling",    "blistered",  "frayed",     "pitted",     "worn",       "abraded",
        "bubbled",    "cut",        "crushed",    "contaminated", "dirty",    "dusty",      "oily",
        "wet",        "wrinkled",   "creased",    "folded",     "holed",      "punctured",  "fractured",
        "shattered",  "split",      "splintered", "warped",     "deformed",   "swollen",    "shrunken",
        "misprinted", "missing",    "flaked",     "crumbled",   "eroded",     "oxidized",   "tarnished",
        "scorched",   "charred",    "sooty",      "speckled",   "spotted",    "streaked",   "smeared",
        "smudged",    "blotchy",    "mottled",    "grainy",     "porous",     "rough",      "bumpy",
        "lumpy",      "scaly",      "fibrous",    "fuzzy",      "frosted",    "crazed",     "delaminated",
        "glued",      "knotted",    "marbled",    "veined",     "webbed",
    });
}

Taxonomy Taxonomy::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Taxonomy, "cannot read taxonomy file " + path.string());
    std::vector<std::string> names;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        names.push_back(line.substr(first));
    }
    return Taxonomy(std::move(names));
}

void Taxonomy::save(const fs::path& path) const {
    std::ostringstream out;
    for (const auto& c : categories_) out << c << '\n';
    write_atomically(path, out.str());
}

bool Taxonomy::contains(const std::string& name) const {
    return std::find(categories_.begin(), categories_.end(), name) != categories_.end();
}

// ---------------------------------------------------------------------------

CleanVerdict classify_density(double edge_density, const CleaningBounds& bounds) {
    if (edge_density > bounds.max_density) return CleanVerdict::Dense;
    if (edge_density < bounds.min_density) return CleanVerdict::Sparse;
    return CleanVerdict::Pass;
}

CleanVerdict auto_clean(TextureAsset& asset, const CleaningBounds& bounds) {
    const CleanVerdict v = classify_density(asset.edge_density, bounds);
    if (asset.curation_state == CurationState::Pending || asset.curation_state == CurationState::AutoRejected) {
        asset.curation_state = v == CleanVerdict::Pass ? CurationState::Pending : CurationState::AutoRejected;
    }
    return v;
}

BinaryMask edge_mask_for_density(const Image& img, const DensityOptions& options) {
    GrayImage gray = to_gray(img);
    if (gray.width() > options.resolution || gray.height() > options.resolution) {
        gray = resize(gray, options.resolution, options.resolution);
    }
    return imageops::canny(gray, options.canny);
}

double edge_density(const Image& img, const DensityOptions& options) {
    return imageops::area_fraction(edge_mask_for_density(img, options));
}

// ---------------------------------------------------------------------------

const TextureAsset* LibraryManifest::find(const std::string& asset_id) const {
    for (const auto& a : assets) {
        if (a.asset_id == asset_id) return &a;
    }
    return nullptr;
}

bool LibraryManifest::operator==(const LibraryManifest& o) const {
    return schema_version == o.schema_version && taxonomy == o.taxonomy &&
           density.resolution == o.density.resolution && density.canny.low == o.density.canny.low &&
           density.canny.high == o.density.canny.high && bounds.min_density == o.bounds.min_density &&
           bounds.max_density == o.bounds.max_density && decisions_applied == o.decisions_applied &&
           assets == o.assets && backend_descriptors == o.backend_descriptors;
}

void to_json(json& j, const LibraryManifest& m) {
    j = json{{"schema_version", m.schema_version},
             {"taxonomy", m.taxonomy.categories()},
             {"density", {{"resolution", m.density.resolution},
                          {"canny_low", m.density.canny.low},
                          {"canny_high", m.density.canny.high}}},
             {"cleaning_bounds", {{"min_density", m.bounds.min_density}, {"max_density", m.bounds.max_density}}},
             {"decisions_applied", m.decisions_applied},
             {"backend_descriptors", m.backend_descriptors},
             {"assets", m.assets}};
}

void from_json(const json& j, LibraryManifest& m) {
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != 1) {
        throw Error(ErrorKind::Config, "unsupported manifest schema_version " + std::to_string(m.schema_version));
    }
    m.taxonomy = Taxonomy(j.at("taxonomy").get<std::vector<std::string>>());
    const auto& d = j.at("density");
    m.density.resolution = d.at("resolution").get<int>();
    m.density.canny.low = d.at("canny_low").get<double>();
    m.density.canny.high = d.at("canny_high").get<double>();
    const auto& b = j.at("cleaning_bounds");
    m.bounds.min_density = b.at("min_density").get<double>();
    m.bounds.max_density = b.at("max_density").get<double>();
    m.decisions_applied = j.at("decisions_applied").get<std::uint64_t>();
    m.backend_descriptors = j.at("backend_descriptors").get<std::vector<BackendDescriptor>>();
    m.assets = j.at("assets").get<std::vector<TextureAsset>>();
}

void replay(LibraryManifest& manifest, const std::vector<DecisionRecord>& history) {
    std::map<std::string, TextureAsset*> by_id;
    for (auto& a : manifest.assets) by_id[a.asset_id] = &a;
    for (const auto& r : history) {
        auto it = by_id.find(r.asset_id);
        if (it == by_id.end()) {
            throw Error(ErrorKind::NotFound, "decision log references unknown asset " + r.asset_id);
        }
        it->second->curation_state = r.to;
        if (r.decision == "accept" || r.decision == "reject") it->second->decision_note = r.note;
        manifest.decisions_applied = std::max(manifest.decisions_applied, r.seq);
    }
}

std::size_t& StateCounts::of(CurationState s) {
    switch (s) {
        case CurationState::Pending: return pending;
        case CurationState::Accepted: return accepted;
        case CurationState::Rejected: return rejected;
        case CurationState::AutoRejected: return auto_rejected;
    }
    return pending;
}

nlohmann::json to_json(const LibraryStats& s) {
    auto counts = [](const StateCounts& c) {
        return json{{"pending", c.pending},
                    {"accepted", c.accepted},
                    {"rejected", c.rejected},
                    {"auto_rejected", c.auto_rejected},
                    {"total", c.pending + c.accepted + c.rejected + c.auto_rejected}};
    };
    json by_cat = json::object();
    for (const auto& [name, c] : s.by_category) by_cat[name] = counts(c);
    json out = counts(s.total);
    out["by_category"] = std::move(by_cat);
    return out;
}

// ---------------------------------------------------------------------------

struct TextureLibrary::Impl {
    fs::path dir;
    mutable std::mutex snapshot_mutex;
    std::shared_ptr<const LibraryManifest> current;
    std::mutex write_mutex;
    std::vector<DecisionRecord> history;
    EmbeddingCache cache;

    std::shared_ptr<const LibraryManifest> load_snapshot() const {
        std::lock_guard lock(snapshot_mutex);
        return current;
    }

    void publish(std::shared_ptr<const LibraryManifest> next) {
        std::lock_guard lock(snapshot_mutex);
        current = std::move(next);
    }

    // Caller holds write_mutex.
    void append_decision(LibraryManifest& m, TextureAsset& asset, const std::string& decision, CurationState to,
                         std::optional<std::string> note, const std::string& actor) {
        DecisionRecord r;
        r.seq = m.decisions_applied + 1;
        r.asset_id = asset.asset_id;
        r.decision = decision;
        r.from = asset.curation_state;
        r.to = to;
        r.note = std::move(note);
        r.actor = actor;
        r.timestamp = utc_timestamp();
        append_durable(dir / decisions_name, json(r).dump());
        asset.curation_state = to;
        if (decision == "accept" || decision == "reject") asset.decision_note = r.note;
        m.decisions_applied = r.seq;
        history.push_back(std::move(r));
    }

    // Caller holds write_mutex.
    void save_locked(const LibraryManifest& m) {
        write_atomically(dir / manifest_name, json(m).dump(2) + "\n");
        m.taxonomy.save(dir / taxonomy_name);
    }

    std::shared_ptr<LibraryManifest> mutable_copy() const {
        return std::make_shared<LibraryManifest>(*load_snapshot());
    }
};

TextureLibrary::TextureLibrary(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
TextureLibrary::TextureLibrary(TextureLibrary&&) noexcept = default;
TextureLibrary& TextureLibrary::operator=(TextureLibrary&&) noexcept = default;
TextureLibrary::~TextureLibrary() = default;

TextureLibrary TextureLibrary::create(const fs::path& dir, Taxonomy taxonomy, DensityOptions density,
                                      CleaningBounds bounds) {
    fs::create_directories(dir);
    if (fs::exists(dir / manifest_name)) {
        throw Error(ErrorKind::Config, "a library already exists at " + dir.string());
    }
    auto impl = std::make_unique<Impl>();
    impl->dir = dir;
    auto m = std::make_shared<LibraryManifest>();
    m->taxonomy = std::move(taxonomy);
    m->density = density;
    m->bounds = bounds;
    impl->cache = EmbeddingCache(dir);
    impl->save_locked(*m);
    impl->current = std::move(m);
    return TextureLibrary(std::move(impl));
}

TextureLibrary TextureLibrary::open(const fs::path& dir) {
    if (!fs::exists(dir / manifest_name)) return create(dir, Taxonomy::default_taxonomy());

    auto impl = std::make_unique<Impl>();
    impl->dir = dir;
    auto m = std::make_shared<LibraryManifest>();
    {
        std::ifstream in(dir / manifest_name);
        try {
            *m = json::parse(in).get<LibraryManifest>();
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Config, "malformed manifest " + (dir / manifest_name).string() + ": " + e.what());
        }
    }
    if (fs::exists(dir / taxonomy_name)) m->taxonomy = Taxonomy::load(dir / taxonomy_name);

    // Decisions acknowledged after the last manifest write are replayed.
    if (std::ifstream log(dir / decisions_name); log) {
        std::string line;
        std::vector<DecisionRecord> tail;
        while (std::getline(log, line)) {
            if (line.empty()) continue;
            DecisionRecord r;
            try {
                r = json::parse(line).get<DecisionRecord>();
            } catch (const json::exception&) {
                // A torn final line from a crash mid-append was never acknowledged.
                continue;
            }
            if (r.seq > m->decisions_applied) tail.push_back(r);
            impl->history.push_back(std::move(r));
        }
        replay(*m, tail);
    }
    impl->cache = EmbeddingCache(dir);
    impl->current = std::move(m);
    return TextureLibrary(std::move(impl));
}

const fs::path& TextureLibrary::dir() const noexcept { return impl_->dir; }

std::shared_ptr<const LibraryManifest> TextureLibrary::snapshot() const { return impl_->load_snapshot(); }

IngestReport TextureLibrary::ingest(const std::string& category, const fs::path& source_dir) {
    std::lock_guard lock(impl_->write_mutex);
    auto m = impl_->mutable_copy();
    if (!m->taxonomy.contains(category)) {
        throw Error(ErrorKind::Taxonomy, "category '" + category + "' is not in the taxonomy");
    }
    if (!fs::is_directory(source_dir)) {
        throw Error(ErrorKind::Io, "source directory is not readable: " + source_dir.string());
    }

    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(source_dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    std::set<std::string> known;
    for (const auto& a : m->assets) known.insert(a.content_hash);

    IngestReport report;
    for (const auto& file : files) {
        std::vector<std::uint8_t> bytes;
        {
            std::ifstream in(file, std::ios::binary);
            bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        }
        if (!png::has_png_signature(bytes)) {
            ++report.skipped;
            continue;
        }
        const std::string hash = sha256_hex(bytes);
        if (known.count(hash)) {
            ++report.duplicates;
            continue;
        }
        TextureAsset asset;
        try {
            const Image img = png::decode(bytes);
            asset.edge_density = edge_density(img, m->density);
        } catch (const Error&) {
            ++report.skipped;
            continue;
        }
        known.insert(hash);
        asset.asset_id = category + "-" + hash.substr(0, 12);
        asset.category = category;
        asset.image_path = fs::absolute(file).lexically_normal().string();
        asset.content_hash = hash;
        m->assets.push_back(asset);

        TextureAsset& stored = m->assets.back();
        const CleanVerdict verdict = classify_density(stored.edge_density, m->bounds);
        if (verdict == CleanVerdict::Pass) {
            ++report.added_pending;
        } else {
            impl_->append_decision(*m, stored,
                                   verdict == CleanVerdict::Dense ? "auto_reject_dense" : "auto_reject_sparse",
                                   CurationState::AutoRejected, std::nullopt, "auto-clean");
            ++report.auto_rejected;
        }
    }
    impl_->save_locked(*m);
    impl_->publish(std::move(m));
    return report;
}

CleanReport TextureLibrary::clean() {
    std::lock_guard lock(impl_->write_mutex);
    auto m = impl_->mutable_copy();
    CleanReport report;
    for (auto& asset : m->assets) {
        if (asset.curation_state != CurationState::Pending && asset.curation_state != CurationState::AutoRejected) {
            continue;
        }
        const CleanVerdict v = classify_density(asset.edge_density, m->bounds);
        switch (v) {
            case CleanVerdict::Pass: ++report.passed; break;
            case CleanVerdict::Dense: ++report.dense; break;
            case CleanVerdict::Sparse: ++report.sparse; break;
        }
        const CurationState target = v == CleanVerdict::Pass ? CurationState::Pending : CurationState::AutoRejected;
        if (target == asset.curation_state) continue;
        const char* decision = v == CleanVerdict::Pass    ? "auto_pass"
                               : v == CleanVerdict::Dense ? "auto_reject_dense"
                                                          : "auto_reject_sparse";
        impl_->append_decision(*m, asset, decision, target, std::nullopt, "auto-clean");
    }
    impl_->save_locked(*m);
    impl_->publish(std::move(m));
    return report;
}

TextureAsset TextureLibrary::decide(const std::string& asset_id, Decision decision, std::optional<std::string> note,
                                    const std::string& actor) {
    std::lock_guard lock(impl_->write_mutex);
    auto m = impl_->mutable_copy();
    auto it = std::find_if(m->assets.begin(), m->assets.end(),
                           [&](const TextureAsset& a) { return a.asset_id == asset_id; });
    if (it == m->assets.end()) throw Error(ErrorKind::NotFound, "unknown asset '" + asset_id + "'");
    if (it->curation_state != CurationState::Pending) {
        throw Error(ErrorKind::StateConflict,
                    "asset '" + asset_id + "' is already " + to_string(it->curation_state));
    }
    const bool accept = decision == Decision::Accept;
    impl_->append_decision(*m, *it, accept ? "accept" : "reject",
                           accept ? CurationState::Accepted : CurationState::Rejected, std::move(note), actor);
    TextureAsset updated = *it;
    impl_->publish(std::move(m));
    return updated;
}

std::size_t TextureLibrary::caption_accepted(Captioner& captioner) {
    std::lock_guard lock(impl_->write_mutex);
    auto m = impl_->mutable_copy();
    std::size_t done = 0;
    std::size_t remaining = 0;
    for (const auto& a : m->assets) {
        if (a.curation_state == CurationState::Accepted && !a.caption) ++remaining;
    }
    for (auto& a : m->assets) {
        if (a.curation_state != CurationState::Accepted || a.caption) continue;
        try {
            a.caption = captioner.caption(png::read(a.image_path), a.category);
        } catch (const std::exception& e) {
            impl_->save_locked(*m);
            impl_->publish(std::move(m));
            throw TransportError("captioning stopped with " + std::to_string(remaining) +
                                     " accepted assets still uncaptioned: " + e.what(),
                                 0);
        }
        ++done;
        --remaining;
    }
    impl_->save_locked(*m);
    impl_->publish(std::move(m));
    return done;
}

CacheStats TextureLibrary::build_embedding_cache(ImageEmbedder& embedder) {
    std::lock_guard lock(impl_->write_mutex);
    auto m = impl_->mutable_copy();
    const std::string backend = embedder.descriptor().name;
    CacheStats stats;
    for (auto& a : m->assets) {
        if (a.curation_state != CurationState::Accepted) continue;
        const std::string key = EmbeddingCache::make_key(a.content_hash, backend);
        if (impl_->cache.contains(key)) {
            ++stats.hits;
        } else {
            try {
                impl_->cache.put(key, embedder.embed_image(png::read(a.image_path)));
            } catch (const std::exception& e) {
                impl_->save_locked(*m);
                impl_->publish(std::move(m));
                throw TransportError(std::string("embedding cache build interrupted: ") + e.what(), 0);
            }
            ++stats.computed;
        }
        a.embedding_ref = key;
    }
    impl_->save_locked(*m);
    impl_->publish(std::move(m));
    return stats;
}

std::vector<PoolEntry> TextureLibrary::matching_pool(const std::string& backend_name,
                                                     const std::optional<std::string>& category) const {
    const auto m = snapshot();
    std::lock_guard lock(impl_->write_mutex);
    const std::string suffix = ":" + backend_name;
    std::vector<PoolEntry> pool;
    for (const auto& a : m->assets) {
        if (a.curation_state != CurationState::Accepted || !a.embedding_ref) continue;
        if (category && a.category != *category) continue;
        const auto& ref = *a.embedding_ref;
        if (ref.size() < suffix.size() || ref.compare(ref.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
        if (auto vec = impl_->cache.find(ref)) pool.push_back({a.asset_id, a.category, std::move(*vec)});
    }
    return pool;
}

LibraryStats TextureLibrary::stats() const {
    const auto m = snapshot();
    LibraryStats s;
    std::map<std::string, StateCounts> per;
    for (const auto& a : m->assets) {
        s.total.of(a.curation_state) += 1;
        per[a.category].of(a.curation_state) += 1;
    }
    for (const auto& c : m->taxonomy.categories()) {
        if (auto it = per.find(c); it != per.end()) s.by_category.emplace_back(c, it->second);
    }
    return s;
}

QueuePage TextureLibrary::queue(std::optional<CurationState> state, const std::optional<std::string>& category,
                                std::size_t limit, std::size_t offset) const {
    const auto m = snapshot();
    std::vector<const TextureAsset*> matches;
    for (const auto& a : m->assets) {
        if (state && a.curation_state != *state) continue;
        if (category && a.category != *category) continue;
        matches.push_back(&a);
    }
    std::sort(matches.begin(), matches.end(),
              [](const TextureAsset* x, const TextureAsset* y) { return x->asset_id < y->asset_id; });
    QueuePage page;
    page.total = matches.size();
    for (std::size_t i = offset; i < matches.size() && page.items.size() < limit; ++i) page.items.push_back(*matches[i]);
    return page;
}

TextureAsset TextureLibrary::asset(const std::string& asset_id) const {
    const auto m = snapshot();
    if (const auto* a = m->find(asset_id)) return *a;
    throw Error(ErrorKind::NotFound, "unknown asset '" + asset_id + "'");
}

Image TextureLibrary::load_image(const std::string& asset_id) const { return png::read(asset(asset_id).image_path); }

BinaryMask TextureLibrary::edge_mask(const std::string& asset_id) const {
    const auto m = snapshot();
    return edge_mask_for_density(load_image(asset_id), m->density);
}

std::vector<DecisionRecord> TextureLibrary::history() const {
    std::lock_guard lock(impl_->write_mutex);
    return impl_->history;
}

void TextureLibrary::record_backends(const std::vector<BackendDescriptor>& descriptors) {
    std::lock_guard lock(impl_->write_mutex);
    auto m = impl_->mutable_copy();
    for (const auto& d : descriptors) {
        auto it = std::find_if(m->backend_descriptors.begin(), m->backend_descriptors.end(),
                               [&](const BackendDescriptor& x) { return x.kind == d.kind; });
        if (it == m->backend_descriptors.end()) {
            m->backend_descriptors.push_back(d);
        } else {
            *it = d;
        }
    }
    impl_->save_locked(*m);
    impl_->publish(std::move(m));
}

void TextureLibrary::save() {
    std::lock_guard lock(impl_->write_mutex);
    impl_->save_locked(*impl_->load_snapshot());
}

}  // namespace anomsynth::texlib
