#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "anomsynth/error.hpp"
#include "anomsynth/metrics.hpp"
#include "anomsynth/mock_backends.hpp"
#include "support.hpp"

using namespace anomsynth;
using namespace anomsynth::metrics;

namespace {

std::vector<Row> random_rows(std::mt19937_64& rng, std::size_t n, std::size_t classes) {
    std::gamma_distribution<double> g(0.3, 1.0);
    std::vector<Row> rows(n, Row(classes));
    for (auto& r : rows) {
        double sum = 0;
        for (auto& v : r) sum += (v = g(rng) + 1e-12);
        for (auto& v : r) v /= sum;
    }
    return rows;
}

Points blobs(std::mt19937_64& rng, const Points& centers, std::size_t per, double spread) {
    std::normal_distribution<double> n(0.0, spread);
    Points out;
    for (const auto& c : centers)
        for (std::size_t i = 0; i < per; ++i) {
            auto p = c;
            for (auto& v : p) v += n(rng);
            out.push_back(p);
        }
    return out;
}

double inertia(const Points& pts, const KMeansResult& r) {
    double s = 0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t d = 0; d < pts[i].size(); ++d) {
            const double diff = pts[i][d] - r.centroids[r.assignments[i]][d];
            s += diff * diff;
        }
    return s;
}

}  // namespace

TEST_CASE("inception score closed forms") {
    const std::vector<Row> same(7, Row{0.2, 0.3, 0.5});
    CHECK(inception_score(same) == doctest::Approx(1.0));
    for (std::size_t k = 1; k <= 6; ++k) {
        std::vector<Row> onehot(k, Row(k, 0.0));
        for (std::size_t i = 0; i < k; ++i) onehot[i][i] = 1.0;
        CHECK(inception_score(onehot) == doctest::Approx(static_cast<double>(k)));
    }
    const double kl1 = std::log(1.0 / 0.75);
    const double kl2 = 0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25);
    CHECK(inception_score({{1.0, 0.0}, {0.5, 0.5}}) == doctest::Approx(std::exp((kl1 + kl2) / 2)));
}

TEST_CASE("inception score stays within [1, C]") {
    std::mt19937_64 rng(1);
    for (int k = 0; k < 200; ++k) {
        const std::size_t c = 2 + rng() % 20;
        const double is = inception_score(random_rows(rng, 1 + rng() % 50, c));
        CHECK(is >= 1.0 - 1e-9);
        CHECK(is <= static_cast<double>(c) + 1e-9);
    }
}

TEST_CASE("row validation") {
    CHECK_THROWS_AS(inception_score({}), Error);
    CHECK_THROWS_AS(inception_score({{0.5, 0.6}}), Error);
    CHECK_THROWS_AS(inception_score({{1.2, -0.2}}), Error);
    CHECK_THROWS_AS(inception_score({{0.5, 0.5}, {1.0}}), Error);
    CHECK_NOTHROW(validate_rows({{0.5, 0.5 + 5e-7}}));
}

TEST_CASE("intra-cluster distance") {
    const std::vector<double> d{0.2, 0.4, 0.6};
    auto pairwise = [&](std::size_t i, std::size_t j) { return d[i + j - 1]; };
    CHECK(intra_cluster_distance(3, pairwise) == doctest::Approx(0.4));
    CHECK(dataset_il({0.4, 0.2}) == doctest::Approx(0.3));
    CHECK(intra_cluster_distance(Points(5, {0.1, 0.7, 0.3})) == 0.0);
    CHECK(perceptual_distance({0, 0}, {1, 3}) == doctest::Approx(5.0));
    try {
        intra_cluster_distance(Points{{1.0}});
        FAIL("expected UndefinedDistance");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::UndefinedDistance);
    }
    CHECK_THROWS_AS(dataset_il({}), Error);
}

TEST_CASE("k-means: N == k returns the points") {
    std::mt19937_64 rng(2);
    const Points pts = blobs(rng, {{0, 0}, {5, 5}, {9, 1}}, 3, 1.0);
    const KMeansResult r = kmeans_reduce(pts, pts.size(), rng);
    Points sorted_in = pts;
    Points sorted_out = r.centroids;
    std::sort(sorted_in.begin(), sorted_in.end());
    std::sort(sorted_out.begin(), sorted_out.end());
    CHECK(sorted_in == sorted_out);
    CHECK_THROWS_AS(kmeans_reduce(pts, pts.size() + 1, rng), Error);
    CHECK_THROWS_AS(kmeans_reduce(pts, 0, rng), Error);
}

TEST_CASE("k-means: separated blobs") {
    std::mt19937_64 rng(3);
    const Points centers{{0, 0, 0}, {10, 0, 0}, {0, 10, 0}, {0, 0, 10}};
    for (int k = 0; k < 20; ++k) {
        const Points pts = blobs(rng, centers, 50, 0.1);
        const KMeansResult r = kmeans_reduce(pts, 4, rng);
        for (std::size_t b = 0; b < centers.size(); ++b) {
            std::vector<double> mean(3, 0.0);
            for (std::size_t i = 0; i < 50; ++i)
                for (int d = 0; d < 3; ++d) mean[d] += pts[b * 50 + i][d] / 50.0;
            double best = 1e9;
            double to_mean = 1e9;
            for (const auto& m : r.centroids) {
                best = std::min(best, std::sqrt(perceptual_distance(centers[b], m) * 3));
                to_mean = std::min(to_mean, std::sqrt(perceptual_distance(mean, m) * 3));
            }
            CHECK(best < 0.1);
            CHECK(to_mean < 1e-9);
        }
    }
}

TEST_CASE("k-means: inertia non-increasing and assignments partition") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int k = 0; k < 50; ++k) {
        Points pts(20 + rng() % 200, std::vector<double>(1 + rng() % 6));
        for (auto& p : pts)
            for (auto& v : p) v = u(rng);
        const std::size_t clusters = 1 + rng() % 10;
        const KMeansResult r = kmeans_reduce(pts, clusters, rng);
        CHECK(r.centroids.size() == clusters);
        REQUIRE(r.assignments.size() == pts.size());
        for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
            CHECK(r.inertia_history[i] <= r.inertia_history[i - 1] + 1e-9);
        CHECK(inertia(pts, r) == doctest::Approx(r.inertia_history.back()));
        for (std::size_t i = 0; i < pts.size(); ++i) {
            CHECK(r.assignments[i] < clusters);
            const double own = perceptual_distance(pts[i], r.centroids[r.assignments[i]]);
            for (const auto& c : r.centroids) CHECK(own <= perceptual_distance(pts[i], c) + 1e-12);
        }
    }
}

TEST_CASE("projection export") {
    std::mt19937_64 rng(5);
    mocks::RandomProjector projector(9);
    const std::vector<FeatureGroup> groups{{"real", blobs(rng, {{0, 0, 0, 0}}, 1000, 1.0)},
                                           {"ours", blobs(rng, {{3, 3, 3, 3}}, 1500, 1.0)}};
    const ProjectionArtifact full = export_projection(groups, projector, std::nullopt, rng);
    CHECK(full.rows.size() == 2500);
    REQUIRE(full.ellipses.size() == 2);
    CHECK(full.ellipses[0].first == "real");
    CHECK(full.ellipses[0].second.count == 1000);
    CHECK(full.ellipses[1].second.covariance[0][1] == full.ellipses[1].second.covariance[1][0]);

    const ProjectionArtifact reduced = export_projection(groups, projector, 250, rng);
    CHECK(reduced.rows.size() == 500);

    const std::vector<FeatureGroup> twins{{"a", groups[0].features}, {"b", groups[0].features}};
    const ProjectionArtifact t = export_projection(twins, projector, std::nullopt, rng);
    CHECK(t.ellipses[0].second == t.ellipses[1].second);

    testsupport::TempDir dir;
    write_projection(full, dir.path());
    std::ifstream csv(dir / "points.csv");
    std::string line;
    std::size_t lines = 0;
    std::getline(csv, line);
    CHECK(line == "group,x,y");
    while (std::getline(csv, line)) ++lines;
    CHECK(lines == 2500);
    const auto ell = nlohmann::json::parse(testsupport::read_file(dir / "ellipses.json"));
    CHECK(ell.size() == 2);
    CHECK(ell[1]["count"] == 1500);

    CHECK_THROWS_AS(export_projection({{"empty", {}}}, projector, std::nullopt, rng), Error);
}

TEST_CASE("evaluate on identical images") {
    mocks::MockFeatureExtractor fx;
    std::mt19937_64 rng(6);
    const Image img = testsupport::random_image(32, 32, 3, rng);
    RunImages images;
    images["cashew"]["cracked"] = {img, img, img};
    images["cashew"]["moldy"] = {img};
    const MetricReport r = evaluate(images, fx);
    REQUIRE(r.categories.size() == 1);
    CHECK(r.categories[0].images == 4);
    CHECK(r.categories[0].is == doctest::Approx(1.0));
    CHECK(*r.categories[0].il == 0.0);
    CHECK(!r.categories[0].clusters[1].il);
    const nlohmann::json j = to_json(r);
    CHECK(j["average"]["il"] == 0.0);
    CHECK(j["categories"][0]["clusters"][1]["il"].is_null());
    CHECK_THROWS_AS(evaluate({}, fx), Error);
}

TEST_CASE("report rounding") {
    CHECK(round2(1.2345) == 1.23);
    CHECK(round2(0.005001) == 0.01);
    MetricReport r;
    r.categories.push_back({"cashew", 4, 1.23456, 0.98765, {}});
    r.average_is = 1.23456;
    r.average_il = 0.98765;
    const nlohmann::json j = to_json(r);
    CHECK(j["average"]["is"] == 1.23);
    CHECK(j["average"]["il"] == 0.99);
    CHECK(j["raw_average"]["is"] == 1.23456);
    CHECK(j["categories"][0]["raw"]["il"] == 0.98765);
}
