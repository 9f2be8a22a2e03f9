#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "anomsynth/backends.hpp"

namespace anomsynth::metrics {

using Row = std::vector<double>;
using Points = std::vector<std::vector<double>>;

/// Throws InvalidInput unless every row has the same length, entries in
/// [0,1] and sums within 1e-6 of 1.
void validate_rows(const std::vector<Row>& rows);

/// exp(mean KL(p(y|x) || p(y))) over all rows, with 0 log 0 = 0.
double inception_score(const std::vector<Row>& rows);

/// Mean squared difference between two feature vectors.
double perceptual_distance(const std::vector<double>& a, const std::vector<double>& b);

/// Mean of distance(i, j) over all unordered pairs i < j of n members.
/// Throws UndefinedDistance when n < 2.
double intra_cluster_distance(std::size_t n, const std::function<double(std::size_t, std::size_t)>& distance);
double intra_cluster_distance(const Points& features);

/// Mean of per-cluster values. Throws UndefinedDistance when empty.
double dataset_il(const std::vector<double>& cluster_values);

struct KMeansResult {
    Points centroids;
    std::vector<std::size_t> assignments;
    /// Inertia after each assignment step, starting with the seeding.
    std::vector<double> inertia_history;
    int iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding; stops when assignments settle
/// or after max_iterations. Throws InvalidInput unless points.size() >= k >= 1.
KMeansResult kmeans_reduce(const Points& points, std::size_t k, std::mt19937_64& rng, int max_iterations = 100);

struct FeatureGroup {
    std::string label;
    Points features;
};

struct Ellipse {
    std::array<double, 2> mean{};
    std::array<std::array<double, 2>, 2> covariance{};
    std::size_t count = 0;

    bool operator==(const Ellipse&) const = default;
};

struct ProjectedPoint {
    std::string group;
    double x = 0.0;
    double y = 0.0;
};

struct ProjectionArtifact {
    std::vector<ProjectedPoint> rows;
    std::vector<std::pair<std::string, Ellipse>> ellipses;  ///< group order
};

/// Projects every group's features to 2-D (one projector call for all
/// groups) and fits a mean/covariance ellipse per group. With `reduce_to`,
/// groups larger than that are first replaced by their k-means centroids.
ProjectionArtifact export_projection(const std::vector<FeatureGroup>& groups, Projector& projector,
                                     std::optional<std::size_t> reduce_to, std::mt19937_64& rng);

/// `points.csv` (group,x,y) and `ellipses.json` in `dir`.
void write_projection(const ProjectionArtifact& artifact, const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Run-level report

struct ClusterMetric {
    std::string description;
    std::size_t members = 0;
    std::optional<double> il;  ///< absent for singleton clusters
};

struct CategoryMetric {
    std::string category;
    std::size_t images = 0;
    double is = 0.0;
    std::optional<double> il;
    std::vector<ClusterMetric> clusters;
};

struct MetricReport {
    std::vector<CategoryMetric> categories;
    double average_is = 0.0;
    std::optional<double> average_il;
    BackendDescriptor feature_backend;
};

/// images[category][description] = the generated images of that batch.
using RunImages = std::map<std::string, std::map<std::string, std::vector<Image>>>;

MetricReport evaluate(const RunImages& images, FeatureExtractor& extractor);

/// Numbers rounded to two decimals; unrounded values under "raw".
nlohmann::json to_json(const MetricReport& report);

double round2(double v);

}  // namespace anomsynth::metrics
