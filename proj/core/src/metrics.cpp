#include "anomsynth/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "anomsynth/error.hpp"

namespace anomsynth::metrics {

using nlohmann::json;

void validate_rows(const std::vector<Row>& rows) {
    if (rows.empty()) throw_invalid("inception score needs at least one row");
    const std::size_t classes = rows.front().size();
    if (classes == 0) throw_invalid("probability rows must not be empty");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const Row& r = rows[i];
        if (r.size() != classes) throw_invalid("probability row " + std::to_string(i) + " has the wrong length");
        double sum = 0.0;
        for (double p : r) {
            if (!(p >= 0.0 && p <= 1.0)) throw_invalid("probability row " + std::to_string(i) + " has an entry outside [0,1]");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-6) throw_invalid("probability row " + std::to_string(i) + " does not sum to 1");
    }
}

double inception_score(const std::vector<Row>& rows) {
    validate_rows(rows);
    const std::size_t classes = rows.front().size();
    std::vector<double> marginal(classes, 0.0);
    for (const Row& r : rows) {
        for (std::size_t c = 0; c < classes; ++c) marginal[c] += r[c];
    }
    for (double& m : marginal) m /= static_cast<double>(rows.size());

    double total_kl = 0.0;
    for (const Row& r : rows) {
        double kl = 0.0;
        for (std::size_t c = 0; c < classes; ++c) {
            if (r[c] > 0.0) kl += r[c] * std::log(r[c] / marginal[c]);
        }
        total_kl += kl;
    }
    return std::exp(total_kl / static_cast<double>(rows.size()));
}

double perceptual_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw_invalid("feature vectors must be nonempty and of equal length");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.size());
}

double intra_cluster_distance(std::size_t n, const std::function<double(std::size_t, std::size_t)>& distance) {
    if (n < 2) throw Error(ErrorKind::UndefinedDistance, "intra-cluster distance needs at least two members");
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            sum += distance(i, j);
            ++pairs;
        }
    }
    return sum / static_cast<double>(pairs);
}

double intra_cluster_distance(const Points& features) {
    return intra_cluster_distance(features.size(), [&features](std::size_t i, std::size_t j) {
        return perceptual_distance(features[i], features[j]);
    });
}

double dataset_il(const std::vector<double>& cluster_values) {
    if (cluster_values.empty()) throw Error(ErrorKind::UndefinedDistance, "no clusters with a defined distance");
    double sum = 0.0;
    for (double v : cluster_values) sum += v;
    return sum / static_cast<double>(cluster_values.size());
}

// ---------------------------------------------------------------------------

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// Returns inertia; ties go to the lowest centroid index.
double assign(const Points& points, const Points& centroids, std::vector<std::size_t>& assignments) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centroids.size(); ++c) {
            const double d = squared_distance(points[i], centroids[c]);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        assignments[i] = best;
        inertia += best_d;
    }
    return inertia;
}

Points seed_plus_plus(const Points& points, std::size_t k, std::mt19937_64& rng) {
    const std::size_t n = points.size();
    Points centroids;
    centroids.reserve(k);
    std::vector<bool> chosen(n, false);
    const std::size_t first = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    centroids.push_back(points[first]);
    chosen[first] = true;

    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points[i], centroids.back());
    while (centroids.size() < k) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick = n;
        if (total > 0.0) {
            double r = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (std::size_t i = 0; i < n; ++i) {
                if (d2[i] <= 0.0) continue;
                pick = i;
                r -= d2[i];
                if (r < 0.0) break;
            }
        } else {
            // Every remaining point duplicates a centroid; take the first unused one.
            for (std::size_t i = 0; i < n && pick == n; ++i) {
                if (!chosen[i]) pick = i;
            }
        }
        chosen[pick] = true;
        centroids.push_back(points[pick]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
    }
    return centroids;
}

}  // namespace

KMeansResult kmeans_reduce(const Points& points, std::size_t k, std::mt19937_64& rng, int max_iterations) {
    if (k < 1) throw_invalid("k must be at least 1");
    if (points.size() < k) {
        throw_invalid("k-means needs at least k points (" + std::to_string(points.size()) + " < " + std::to_string(k) + ")");
    }
    const std::size_t dim = points.front().size();
    for (const auto& p : points) {
        if (p.size() != dim) throw_invalid("k-means points must share one dimension");
    }

    KMeansResult result;
    result.centroids = seed_plus_plus(points, k, rng);
    result.assignments.assign(points.size(), 0);
    result.inertia_history.push_back(assign(points, result.centroids, result.assignments));

    std::vector<std::size_t> next(points.size());
    for (int iter = 0; iter < max_iterations; ++iter) {
        Points sums(k, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            const std::size_t c = result.assignments[i];
            ++counts[c];
            for (std::size_t d = 0; d < dim; ++d) sums[c][d] += points[i][d];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;  // an empty cluster keeps its centroid
            for (std::size_t d = 0; d < dim; ++d) result.centroids[c][d] = sums[c][d] / static_cast<double>(counts[c]);
        }
        const double inertia = assign(points, result.centroids, next);
        result.inertia_history.push_back(inertia);
        ++result.iterations;
        if (next == result.assignments) break;
        result.assignments.swap(next);
    }
    return result;
}

// ---------------------------------------------------------------------------

namespace {

Ellipse fit_ellipse(const std::vector<std::array<double, 2>>& pts) {
    Ellipse e;
    e.count = pts.size();
    if (pts.empty()) return e;
    for (const auto& p : pts) {
        e.mean[0] += p[0];
        e.mean[1] += p[1];
    }
    e.mean[0] /= static_cast<double>(pts.size());
    e.mean[1] /= static_cast<double>(pts.size());
    if (pts.size() < 2) return e;
    for (const auto& p : pts) {
        const double dx = p[0] - e.mean[0];
        const double dy = p[1] - e.mean[1];
        e.covariance[0][0] += dx * dx;
        e.covariance[0][1] += dx * dy;
        e.covariance[1][1] += dy * dy;
    }
    const double denom = static_cast<double>(pts.size() - 1);
    e.covariance[0][0] /= denom;
    e.covariance[0][1] /= denom;
    e.covariance[1][1] /= denom;
    e.covariance[1][0] = e.covariance[0][1];
    return e;
}

}  // namespace

ProjectionArtifact export_projection(const std::vector<FeatureGroup>& groups, Projector& projector,
                                     std::optional<std::size_t> reduce_to, std::mt19937_64& rng) {
    Points all;
    std::vector<std::size_t> sizes;
    for (const auto& g : groups) {
        if (g.features.empty()) throw_invalid("projection group '" + g.label + "' has no features");
        if (reduce_to && g.features.size() > *reduce_to) {
            Points centroids = kmeans_reduce(g.features, *reduce_to, rng).centroids;
            sizes.push_back(centroids.size());
            all.insert(all.end(), centroids.begin(), centroids.end());
        } else {
            sizes.push_back(g.features.size());
            all.insert(all.end(), g.features.begin(), g.features.end());
        }
    }

    std::vector<std::array<double, 2>> projected;
    try {
        projected = projector.project(all);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw TransportError(std::string("projector failed: ") + e.what(), 0);
    }
    if (projected.size() != all.size()) throw TransportError("projector returned the wrong number of points", 0);

    ProjectionArtifact out;
    std::size_t offset = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        std::vector<std::array<double, 2>> pts(projected.begin() + static_cast<std::ptrdiff_t>(offset),
                                               projected.begin() + static_cast<std::ptrdiff_t>(offset + sizes[g]));
        for (const auto& p : pts) out.rows.push_back({groups[g].label, p[0], p[1]});
        out.ellipses.emplace_back(groups[g].label, fit_ellipse(pts));
        offset += sizes[g];
    }
    return out;
}

void write_projection(const ProjectionArtifact& artifact, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir / "points.csv");
    if (!csv) throw Error(ErrorKind::Io, "cannot write " + (dir / "points.csv").string());
    csv.precision(17);
    csv << "group,x,y\n";
    for (const auto& r : artifact.rows) csv << r.group << ',' << r.x << ',' << r.y << '\n';

    json ellipses = json::array();
    for (const auto& [label, e] : artifact.ellipses) {
        ellipses.push_back({{"group", label},
                            {"count", e.count},
                            {"mean", e.mean},
                            {"covariance", {e.covariance[0], e.covariance[1]}}});
    }
    std::ofstream js(dir / "ellipses.json");
    if (!js) throw Error(ErrorKind::Io, "cannot write " + (dir / "ellipses.json").string());
    js << ellipses.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

double round2(double v) { return std::round(v * 100.0) / 100.0; }

MetricReport evaluate(const RunImages& images, FeatureExtractor& extractor) {
    MetricReport report;
    report.feature_backend = extractor.descriptor();
    std::vector<double> category_il;
    double is_sum = 0.0;
    for (const auto& [category, batches] : images) {
        std::vector<Image> all;
        std::vector<std::pair<std::string, std::size_t>> spans;
        for (const auto& [description, imgs] : batches) {
            spans.emplace_back(description, imgs.size());
            all.insert(all.end(), imgs.begin(), imgs.end());
        }
        if (all.empty()) continue;
        const FeatureBatch batch = extractor.extract(all);
        if (batch.probabilities.size() != all.size() || batch.features.size() != all.size()) {
            throw TransportError("feature extractor returned the wrong number of rows", 0);
        }

        CategoryMetric cm;
        cm.category = category;
        cm.images = all.size();
        cm.is = inception_score(batch.probabilities);
        std::vector<double> ils;
        std::size_t offset = 0;
        for (const auto& [description, n] : spans) {
            ClusterMetric cl{description, n, std::nullopt};
            if (n >= 2) {
                const Points members(batch.features.begin() + static_cast<std::ptrdiff_t>(offset),
                                     batch.features.begin() + static_cast<std::ptrdiff_t>(offset + n));
                cl.il = intra_cluster_distance(members);
                ils.push_back(*cl.il);
            }
            cm.clusters.push_back(std::move(cl));
            offset += n;
        }
        if (!ils.empty()) {
            cm.il = dataset_il(ils);
            category_il.push_back(*cm.il);
        }
        is_sum += cm.is;
        report.categories.push_back(std::move(cm));
    }
    if (report.categories.empty()) throw_invalid("no images to evaluate");
    report.average_is = is_sum / static_cast<double>(report.categories.size());
    if (!category_il.empty()) report.average_il = dataset_il(category_il);
    return report;
}

json to_json(const MetricReport& report) {
    auto opt = [](const std::optional<double>& v, bool rounded) {
        return v ? json(rounded ? round2(*v) : *v) : json(nullptr);
    };
    json cats = json::array();
    for (const auto& c : report.categories) {
        json clusters = json::array();
        for (const auto& cl : c.clusters) {
            clusters.push_back({{"description", cl.description}, {"members", cl.members}, {"il", opt(cl.il, true)}});
        }
        cats.push_back({{"category", c.category},
                        {"images", c.images},
                        {"is", round2(c.is)},
                        {"il", opt(c.il, true)},
                        {"clusters", std::move(clusters)},
                        {"raw", {{"is", c.is}, {"il", opt(c.il, false)}}}});
    }
    return json{{"categories", std::move(cats)},
                {"average", {{"is", round2(report.average_is)}, {"il", opt(report.average_il, true)}}},
                {"raw_average", {{"is", report.average_is}, {"il", opt(report.average_il, false)}}},
                {"il_grouping", "object/description batch"},
                {"il_distance", "mean squared feature difference"},
                {"feature_backend", report.feature_backend}};
}

}  // namespace anomsynth::metrics
