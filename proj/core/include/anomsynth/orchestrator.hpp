#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anomsynth/backends.hpp"
#include "anomsynth/error.hpp"
#include "anomsynth/descmatch.hpp"
#include "anomsynth/maskgen.hpp"
#include "anomsynth/metrics.hpp"
#include "anomsynth/synthpipe.hpp"

namespace anomsynth::orchestrator {

struct ObjectSpec {
    std::vector<std::string> normal_images;
    int count = 500;
    /// When nonempty these replace the VLLM's answer.
    std::vector<std::string> descriptions;
};

struct Paths {
    std::string library = "library";
    std::string out = "out";
    std::string templates;  ///< extra prompt-template directory, optional
};

struct RunConfig {
    std::uint64_t seed = 0;
    int workers = 1;
    /// Square side the normal images are resampled to; 0 keeps their size.
    int image_size = 0;
    /// Also write <seq>_triptych.png (M_in, adaptive texture, overlay) per record.
    bool dump_triptych = false;
    Paths paths;
    std::map<std::string, ObjectSpec> objects;
    synthpipe::SynthesisConfig synthesis;
    maskgen::MaskGenConfig maskgen;
    descmatch::MatchOptions matching;
    BackendsConfig backends;

    /// Throws Error(Config).
    void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Throws Error(Config) on a missing file or malformed document.
RunConfig load_run_config(const std::filesystem::path& path);

enum ExitCode : int { Success = 0, ConfigFailure = 2, BackendFailure = 3, GenerationFailure = 4 };

int exit_code_for(ErrorKind kind);

struct TaskFailure {
    std::string object_name;
    std::string description;
    int seq = 0;
    ErrorKind kind = ErrorKind::InvalidInput;
    std::string message;
};

struct RunSummary {
    std::filesystem::path run_dir;
    std::size_t records = 0;
    std::vector<TaskFailure> failures;

    int exit_code() const;
};

/// Directory-safe form of a description: lowercase alphanumerics, '-' and
/// '_' kept, everything else becomes '_'.
std::string slug(const std::string& description);

/// Generates every object's images into paths.out:
///   <object>/<description slug>/<seq>.png, <seq>_mask.png, <seq>.json
/// plus run.json, transcripts.txt, descriptors.jsonl and matches.jsonl.
/// Outputs depend only on the config, the library state and the backends;
/// worker count and timing do not affect them.
RunSummary run_synthesis(const RunConfig& config);

/// Reads a run directory back into per-object, per-description images.
metrics::RunImages load_run_images(const std::filesystem::path& run_dir);

metrics::MetricReport evaluate_run(const std::filesystem::path& run_dir, FeatureExtractor& extractor);

struct SweepRow {
    int t_star = 0;
    std::size_t images = 0;
    double is = 0.0;
    std::optional<double> il;
};

/// Runs the config once per T* value into out_root/tstar-<v> and evaluates
/// each run. T* may equal T here.
std::vector<SweepRow> run_tstar_sweep(const RunConfig& config, const std::vector<int>& values,
                                      const std::filesystem::path& out_root);

/// One CSV row per value: t_star,images,is,il.
std::string sweep_csv(const std::vector<SweepRow>& rows);
/// Columns per T* value, one "IS/IL" row, two decimals.
std::string sweep_table(const std::vector<SweepRow>& rows);

}  // namespace anomsynth::orchestrator
