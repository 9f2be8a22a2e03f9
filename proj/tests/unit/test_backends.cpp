#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <thread>

#include "anomsynth/backends.hpp"
#include "anomsynth/error.hpp"
#include "anomsynth/hashing.hpp"
#include "anomsynth/live_backends.hpp"
#include "anomsynth/mock_backends.hpp"
#include "anomsynth/png_io.hpp"
#include "support.hpp"

using namespace anomsynth;

namespace {

double norm(const EmbeddingVector& v) {
    double s = 0;
    for (float x : v.values()) s += static_cast<double>(x) * x;
    return std::sqrt(s);
}

// Recomputes the mock text embedding straight from the hash definitions.
std::vector<double> oracle_text_embedding(const std::string& text, std::size_t dim, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : std::string("text")) h = (h ^ static_cast<std::uint8_t>(c)) * 0x100000001b3ULL;
    for (char c : text) h = (h ^ static_cast<std::uint8_t>(c)) * 0x100000001b3ULL;
    h ^= splitmix64(seed);
    std::vector<double> raw(dim);
    double n = 0;
    for (std::size_t i = 0; i < dim; ++i) {
        const std::uint64_t bits = splitmix64(h ^ splitmix64(i));
        raw[i] = static_cast<float>(2.0 * (static_cast<double>(bits >> 11) / 9007199254740992.0) - 1.0);
        n += raw[i] * raw[i];
    }
    for (auto& v : raw) v /= std::sqrt(n);
    return raw;
}

struct FakeVllmServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> calls{0};
    std::string last_auth;

    template <typename F>
    explicit FakeVllmServer(F handler) {
        server.Post("/v1/chat/completions", [this, handler](const httplib::Request& req, httplib::Response& res) {
            last_auth = req.get_header_value("Authorization");
            handler(++calls, req, res);
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~FakeVllmServer() {
        server.stop();
        thread.join();
    }
    live::HttpVllmOptions options() const {
        live::HttpVllmOptions o;
        o.base_url = "http://127.0.0.1:" + std::to_string(port);
        o.initial_backoff = std::chrono::milliseconds(1);
        o.timeout = std::chrono::seconds(5);
        o.max_retries = 3;
        o.api_key_env = "ANOMSYNTH_TEST_VLLM_KEY";
        return o;
    }
};

std::string chat_reply(const std::string& content) {
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

}  // namespace

TEST_CASE("answer parser normalizes delimiters and case") {
    CHECK(parse_vllm_answer("Scratched; discolored.") == std::vector<std::string>{"scratched", "discolored"});
    CHECK(parse_vllm_answer("Cracked, faded") == std::vector<std::string>{"cracked", "faded"});
    CHECK(parse_vllm_answer("  Moldy\n\ncracked ,moldy, ") == std::vector<std::string>{"moldy", "cracked"});
    CHECK(parse_vllm_answer("\"Burnt\", 'bent'") == std::vector<std::string>{"burnt", "bent"});
    try {
        parse_vllm_answer(" , ;\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.raw() == " , ;\n");
        CHECK(e.kind() == ErrorKind::Parse);
    }
}

TEST_CASE("mock VLLM") {
    mocks::MockVllm vllm;
    PromptTemplates templates;
    const Image img(16, 16, 3, 0.5f);
    const auto a = vllm_query(vllm, templates, "cashew", img, PromptTemplates::default_id);
    CHECK(a.descriptions == std::vector<std::string>{"cracked", "moldy"});
    CHECK(a.question.find("professional industrial anomaly engineer") != std::string::npos);
    CHECK(a.question.find("cashew") != std::string::npos);
    const auto b = vllm_query(vllm, templates, "widget", img, PromptTemplates::default_id, 9);
    const auto c = vllm_query(vllm, templates, "widget", img, PromptTemplates::default_id, 9);
    CHECK(b.descriptions == c.descriptions);
    CHECK(b.descriptions.size() == 2);
    CHECK(vllm.descriptor().deterministic);
    CHECK_THROWS_AS(vllm_query(vllm, templates, "cashew", img, "no-such-template"), Error);
}

TEST_CASE("prompt templates load from a directory") {
    testsupport::TempDir dir("tmpl");
    std::ofstream(dir / "short.txt") << "Defects of {object}?";
    PromptTemplates t;
    t.load_directory(dir.path());
    CHECK(t.contains("short"));
    CHECK(t.contains(PromptTemplates::default_id));
    CHECK(t.render("short", "wood") == "Defects of wood?");
}

TEST_CASE("hash embedder contract") {
    mocks::HashEmbedder e(64, 3);
    CHECK(e.embed_text("cracked") == e.embed_text("cracked"));
    CHECK(!(e.embed_text("cracked") == e.embed_text("moldy")));
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> ch('a', 'z');
    for (int k = 0; k < 200; ++k) {
        std::string s(1 + k % 17, 'x');
        for (auto& c : s) c = static_cast<char>(ch(rng));
        const auto v = e.embed_text(s);
        CHECK(v.dim() == 64);
        CHECK(norm(v) == doctest::Approx(1.0).epsilon(1e-6));
    }
    CHECK_THROWS_AS(e.embed_text(""), Error);
    CHECK_THROWS_AS(e.embed_image(Image()), Error);
    const Image img = testsupport::random_image(8, 8, 3, rng);
    CHECK(norm(e.embed_image(img)) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(e.embed_image(img) == e.embed_image(img));
}

TEST_CASE("hash embedder golden vector") {
    mocks::HashEmbedder e(8, 0);
    const auto v = e.embed_text("cracked");
    const float golden[8] = {-0.218917087f, -0.0782535076f, 0.335579902f, -0.0825972632f,
                             -0.368512779f, 0.458232105f,   -0.482453167f, -0.497971982f};
    const auto oracle = oracle_text_embedding("cracked", 8, 0);
    REQUIRE(v.dim() == 8);
    for (int i = 0; i < 8; ++i) {
        CHECK(v.values()[i] == doctest::Approx(golden[i]).epsilon(1e-6));
        CHECK(v.values()[i] == doctest::Approx(oracle[i]).epsilon(1e-6));
    }
}

TEST_CASE("embedding vectors normalize on construction") {
    const EmbeddingVector v(std::vector<float>{3.0f, 4.0f});
    CHECK(v.values()[0] == doctest::Approx(0.6));
    CHECK(v.values()[1] == doctest::Approx(0.8));
    CHECK_THROWS_AS(EmbeddingVector(std::vector<float>{0.0f, 0.0f}), Error);
    CHECK_THROWS_AS(EmbeddingVector::from_normalized({1.0f, 1.0f}), Error);
    CHECK_THROWS_AS(v.dot(EmbeddingVector(std::vector<float>{1, 0, 0})), Error);
}

TEST_CASE("threshold segmenter") {
    mocks::ThresholdSegmenter seg(0.5);
    Image img(20, 12, 3, 0.0f);
    for (int y = 3; y < 9; ++y)
        for (int x = 5; x < 15; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = 0.9f;
    const BinaryMask m = seg.segment_foreground(img);
    CHECK(m.width() == 20);
    CHECK(m.height() == 12);
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 20; ++x) CHECK(m.at(x, y) == (x >= 5 && x < 15 && y >= 3 && y < 9));
    CHECK(seg.segment_foreground(Image(20, 12, 3, 0.0f)).count() == 0);
}

TEST_CASE("mock codec") {
    mocks::MockInpainter inp(mocks::MockInpainter::Mode::ZeroNoise);
    std::mt19937_64 rng(2);
    const Image blocks = testsupport::block_image(64, 40, 3, 8, rng);
    CHECK(inp.decode(inp.encode(blocks)) == blocks);

    const LatentTensor big = inp.encode(Image(1024, 1024, 3, 0.25f));
    CHECK(big.height() == 128);
    CHECK(big.width() == 128);
    CHECK(big.channels() == 3);
    CHECK_THROWS_AS(inp.encode(Image(30, 32, 3)), Error);

    for (int k = 0; k < 10; ++k) {
        const Image img = testsupport::random_image(32, 24, 3, rng);
        const auto [lo, hi] = std::minmax_element(img.data().begin(), img.data().end());
        for (float v : inp.decode(inp.encode(img)).data()) {
            CHECK(v >= *lo);
            CHECK(v <= *hi);
        }
    }
}

TEST_CASE("mock noise predictors") {
    std::mt19937_64 rng(4);
    const LatentTensor z = testsupport::random_latent(3, 4, 5, rng);
    const BinaryMask mask(40, 32);
    const Image cond(40, 32, 3);

    mocks::MockInpainter zero(mocks::MockInpainter::Mode::ZeroNoise);
    const LatentTensor zeros = zero.predict_noise(z, 5, mask, cond, "p");
    CHECK(zeros.same_shape(z));
    for (double v : zeros.values()) CHECK(v == 0.0);

    mocks::MockInpainter oracle(mocks::MockInpainter::Mode::Oracle);
    CHECK_THROWS_AS(oracle.predict_noise(z, 5, mask, cond, "p"), Error);
    const LatentTensor eps = testsupport::random_latent(3, 4, 5, rng);
    oracle.begin_trajectory(eps);
    CHECK(oracle.predict_noise(z, 5, mask, cond, "p") == eps);
    CHECK(!oracle.descriptor().concurrent_safe);
    CHECK_THROWS_AS(oracle.predict_noise(z, 0, mask, cond, "p"), Error);
    CHECK_THROWS_AS(oracle.predict_noise(z, 5, BinaryMask(8, 8), cond, "p"), Error);
}

TEST_CASE("mock feature extractor") {
    mocks::MockFeatureExtractor fx(3, 0, 0.05);
    std::vector<Image> imgs;
    for (float v : {0.2f, 0.5f, 0.8f}) {
        Image im(16, 16, 3, v);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 8; ++x) im.at(x, y, 0) = 1.0f - v;
        imgs.push_back(im);
    }
    const FeatureBatch b = fx.extract(imgs);
    const double golden[3][3] = {{0.415469623115, 0.0208580681413, 0.563672308744},
                                 {0.50143843916, 0.000793190013724, 0.497768370826},
                                 {0.5792480174, 2.88701372735e-05, 0.420723112463}};
    REQUIRE(b.probabilities.size() == 3);
    for (int i = 0; i < 3; ++i) {
        double sum = 0;
        for (int k = 0; k < 3; ++k) {
            CHECK(b.probabilities[i][k] == doctest::Approx(golden[i][k]).epsilon(1e-9));
            sum += b.probabilities[i][k];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(b.features[i].size() == 67);
    }
    const FeatureBatch same = fx.extract({imgs[1], imgs[1]});
    CHECK(same.probabilities[0] == same.probabilities[1]);
    CHECK(same.features[0] == same.features[1]);
    CHECK_THROWS_AS(fx.extract({}), Error);
}

TEST_CASE("backend factory") {
    BackendSet set = make_backends(BackendsConfig{});
    CHECK(set.descriptors().size() == 8);
    for (const auto& d : set.descriptors()) CHECK(d.deterministic);
    BackendsConfig bad;
    bad.inpainter.name = "nope";
    try {
        make_backends(bad);
        FAIL("expected config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
    }
    const nlohmann::json j = BackendsConfig{};
    CHECK(j.get<BackendsConfig>().inpainter.name == "mock-oracle-inpainter");
}

TEST_CASE("hashing helpers") {
    const std::string abc = "abc";
    const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size());
    CHECK(sha256_hex(bytes) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    const std::string foobar = "foobar";
    CHECK(base64_encode({reinterpret_cast<const std::uint8_t*>(foobar.data()), foobar.size()}) == "Zm9vYmFy");
    CHECK(base64_encode({reinterpret_cast<const std::uint8_t*>(foobar.data()), 4}) == "Zm9vYg==");
}

TEST_CASE("png round trip") {
    testsupport::TempDir dir("png");
    std::mt19937_64 rng(8);
    Image img(13, 7, 3);
    std::uniform_int_distribution<int> level(0, 255);
    for (auto& v : img.data()) v = static_cast<float>(level(rng)) / 255.0f;
    png::write(dir / "a.png", img);
    const Image back = png::read(dir / "a.png");
    REQUIRE(back.channels() == 3);
    for (std::size_t i = 0; i < img.data().size(); ++i) CHECK(back.data()[i] == doctest::Approx(img.data()[i]).epsilon(1e-6));
    const BinaryMask m = testsupport::random_mask(13, 7, 0.4, rng);
    png::write_mask(dir / "m.png", m);
    CHECK(png::read_mask(dir / "m.png") == m);
    std::ofstream(dir / "junk.png") << "not a png";
    CHECK_THROWS_AS(png::read(dir / "junk.png"), Error);
}

TEST_CASE("http VLLM retries server errors then parses the answer") {
    FakeVllmServer fake([](int call, const httplib::Request& req, httplib::Response& res) {
        if (call == 1) {
            res.status = 500;
            return;
        }
        const auto body = nlohmann::json::parse(req.body);
        CHECK(body.at("model") == "gpt-4-vision-preview");
        CHECK(body.at("messages").at(0).at("content").size() == 2);
        res.set_content(chat_reply("Scratched; discolored."), "application/json");
    });
    ::setenv("ANOMSYNTH_TEST_VLLM_KEY", "sekret", 1);
    live::HttpVllm vllm(fake.options());
    PromptTemplates templates;
    const Image img(8, 8, 3, 0.5f);
    const auto answer = vllm_query(vllm, templates, "pcb1", img, PromptTemplates::default_id);
    CHECK(answer.descriptions == std::vector<std::string>{"scratched", "discolored"});
    CHECK(fake.calls == 2);
    CHECK(fake.last_auth == "Bearer sekret");
    ::unsetenv("ANOMSYNTH_TEST_VLLM_KEY");
    CHECK(!vllm.descriptor().deterministic);
}

TEST_CASE("http VLLM malformed payload is a parse error carrying the raw body") {
    FakeVllmServer fake([](int, const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"unexpected\": true}", "application/json");
    });
    live::HttpVllm vllm(fake.options());
    const Image img(8, 8, 3, 0.5f);
    try {
        vllm.ask({"pcb1", "q", &img, 0});
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.raw() == "{\"unexpected\": true}");
    }
}

TEST_CASE("http VLLM gives up with a transport error") {
    FakeVllmServer fake([](int, const httplib::Request&, httplib::Response& res) { res.status = 503; });
    live::HttpVllm vllm(fake.options());
    try {
        vllm.ask({"pcb1", "q", nullptr, 0});
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(e.retries() == 3);
        CHECK(fake.calls == 4);
    }

    FakeVllmServer client_error([](int, const httplib::Request&, httplib::Response& res) { res.status = 401; });
    live::HttpVllm rejected(client_error.options());
    CHECK_THROWS_AS(rejected.ask({"pcb1", "q", nullptr, 0}), TransportError);
    CHECK(client_error.calls == 1);
}
