#include <doctest.h>

#include <algorithm>
#include <random>

#include "anomsynth/descmatch.hpp"
#include "anomsynth/error.hpp"
#include "anomsynth/mock_backends.hpp"
#include "support.hpp"

using namespace anomsynth;
using namespace anomsynth::descmatch;
using texlib::PoolEntry;

namespace {

PoolEntry entry(const std::string& id, std::vector<float> v) { return {id, "cracked", EmbeddingVector(std::move(v))}; }

// Embeds every text with the mock except one designated failure.
class PickyEmbedder final : public TextEmbedder {
public:
    BackendDescriptor descriptor() const override { return inner_.descriptor(); }
    std::size_t dim() const override { return inner_.dim(); }
    EmbeddingVector embed_text(const std::string& text) override {
        if (text == "unembeddable") throw TransportError("embedder unavailable", 3);
        return inner_.embed_text(text);
    }

private:
    mocks::HashEmbedder inner_{16};
};

}  // namespace

TEST_CASE("descriptor normalization") {
    const auto d = make_descriptor("cashew", "  Cracked \n");
    CHECK(d.description == "cracked");
    CHECK(d.source == DescriptorSource::Manual);
    CHECK_THROWS_AS(make_descriptor("cashew", "   "), Error);
    const nlohmann::json j = d;
    CHECK(j.get<AnomalyDescriptor>() == d);
}

TEST_CASE("generate descriptions from the mock VLLM") {
    mocks::MockVllm vllm;
    PromptTemplates templates;
    const Image img(16, 16, 3, 0.5f);
    const DescriptionSet a = generate_descriptions(vllm, templates, "cashew", img);
    REQUIRE(a.descriptors.size() == 2);
    CHECK(a.descriptors[0].description == "cracked");
    CHECK(a.descriptors[1].description == "moldy");
    CHECK(a.descriptors[0].source == DescriptorSource::Vllm);
    CHECK(a.descriptors[0].raw_answer_ref == std::optional<std::string>("transcript:0"));
    REQUIRE(a.transcripts.size() == 1);
    CHECK(a.transcripts[0].raw_answer == "cracked, moldy");
    const DescriptionSet b = generate_descriptions(vllm, templates, "cashew", img);
    CHECK(a.descriptors == b.descriptors);

    mocks::MockVllm faded(std::map<std::string, std::string>{{"tile", "Cracked, faded"}});
    const DescriptionSet c = generate_descriptions(faded, templates, "tile", img);
    REQUIRE(c.descriptors.size() == 2);
    CHECK(c.descriptors[1].description == "faded");

    MatchOptions twice;
    twice.repeats = 3;
    const DescriptionSet u = generate_descriptions(vllm, templates, "widget", img, twice, 5);
    CHECK(u.transcripts.size() == 3);
    CHECK(u.descriptors.size() >= 2);

    mocks::MockVllm junk(std::map<std::string, std::string>{{"x", " ; , "}});
    CHECK_THROWS_AS(generate_descriptions(junk, templates, "x", img), ParseError);
}

TEST_CASE("self-match and orthogonal pool") {
    const auto d = make_descriptor("o", "cracked");
    const std::vector<PoolEntry> pool = {entry("a", {1, 0, 0}), entry("b", {0, 1, 0}), entry("c", {0, 0, 1})};
    const MatchResult r = match(d, EmbeddingVector({0, 1, 0}), pool, 5);
    CHECK(r.asset_id == "b");
    CHECK(r.similarity == 1.0);
    REQUIRE(r.runner_ups.size() == 2);
    for (const auto& s : r.runner_ups) CHECK(s.similarity == 0.0);
    CHECK(r.runner_ups[0].asset_id == "a");
}

TEST_CASE("ties go to the smallest id regardless of pool order") {
    const auto d = make_descriptor("o", "cracked");
    std::vector<PoolEntry> pool = {entry("zeta", {1, 1}), entry("alpha", {1, 1}), entry("mid", {1, 0})};
    const EmbeddingVector q({1, 1});
    CHECK(match(d, q, pool).asset_id == "alpha");
    std::reverse(pool.begin(), pool.end());
    CHECK(match(d, q, pool).asset_id == "alpha");
}

TEST_CASE("errors") {
    const auto d = make_descriptor("o", "cracked");
    try {
        match(d, EmbeddingVector({1, 0}), {});
        FAIL("expected no-candidates");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NoCandidates);
    }
    try {
        match(d, EmbeddingVector({1, 0}), {entry("a", {1, 0, 0})});
        FAIL("expected invalid input");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidInput);
    }
}

TEST_CASE("match equals the brute-force argmax") {
    std::mt19937_64 rng(21);
    for (int k = 0; k < 1000; ++k) {
        const auto c = testsupport::random_match_case(rng);
        const MatchResult r = match(c.descriptor, c.query, c.pool, 5);
        const auto [id, sim] = testsupport::brute_force_match(c.query, c.pool);
        CHECK(r.asset_id == id);
        CHECK(r.similarity == sim);
        for (const auto& s : r.runner_ups) CHECK(s.similarity <= r.similarity);
        CHECK(std::is_sorted(r.runner_ups.begin(), r.runner_ups.end(),
                             [](const ScoredAsset& a, const ScoredAsset& b) { return a.similarity > b.similarity; }));
        CHECK(r.runner_ups.size() == std::min<std::size_t>(5, c.pool.size() - 1));
    }
}

TEST_CASE("match is invariant to rescaling and permutation") {
    std::mt19937_64 rng(22);
    std::uniform_real_distribution<float> scale(0.01f, 100.0f);
    for (int k = 0; k < 200; ++k) {
        auto c = testsupport::random_match_case(rng, 32);
        const MatchResult base = match(c.descriptor, c.query, c.pool);
        std::shuffle(c.pool.begin(), c.pool.end(), rng);
        CHECK(match(c.descriptor, c.query, c.pool).asset_id == base.asset_id);

        std::vector<PoolEntry> scaled;
        for (const auto& e : c.pool) {
            std::vector<float> v = e.embedding.values();
            const float s = scale(rng);
            for (auto& x : v) x *= s;
            scaled.push_back({e.asset_id, e.category, EmbeddingVector(std::move(v))});
        }
        const MatchResult r = match(c.descriptor, c.query, scaled);
        CHECK(r.similarity == doctest::Approx(base.similarity).epsilon(1e-5));
        // Rescaling can perturb float rounding; the winner must stay an argmax within that noise.
        const auto [id, sim] = testsupport::brute_force_match(c.query, scaled);
        CHECK(r.asset_id == id);
    }
}

TEST_CASE("match_all against the mock pool") {
    mocks::HashEmbedder emb(16);
    std::vector<PoolEntry> pool;
    for (int i = 0; i < 5; ++i) {
        pool.push_back({"t" + std::to_string(i), "cracked", emb.embed_text("texture " + std::to_string(i))});
    }
    const std::vector<AnomalyDescriptor> ds = {make_descriptor("cashew", "cracked"),
                                               make_descriptor("cashew", "moldy")};
    const MatchBatch b = match_all(ds, emb, pool);
    REQUIRE(b.results.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(b.results[i].descriptor == ds[i]);
        CHECK(b.results[i].asset_id == testsupport::brute_force_match(emb.embed_text(ds[i].description), pool).first);
    }
    CHECK(match_all({}, emb, pool).results.empty());

    PickyEmbedder picky;
    std::vector<PoolEntry> pool16;
    for (int i = 0; i < 5; ++i) pool16.push_back({"t" + std::to_string(i), "c", picky.embed_text("p" + std::to_string(i))});
    const MatchBatch partial = match_all({make_descriptor("o", "cracked"), make_descriptor("o", "unembeddable"),
                                          make_descriptor("o", "moldy")},
                                         picky, pool16);
    CHECK(partial.results.size() == 2);
    REQUIRE(partial.errors.size() == 1);
    CHECK(partial.errors[0].descriptor.description == "unembeddable");

    mocks::MockVllm vllm;
    const ObjectMatches om = match_all(vllm, emb, PromptTemplates{}, "cashew", Image(8, 8, 3, 0.5f), pool);
    CHECK(om.matches.results.size() == 2);
}

TEST_CASE("match results serialize") {
    const auto d = make_descriptor("o", "cracked");
    const MatchResult r = match(d, EmbeddingVector({1, 0}), {entry("a", {1, 0}), entry("b", {0, 1})});
    const nlohmann::json j = r;
    CHECK(j.get<MatchResult>() == r);
}
