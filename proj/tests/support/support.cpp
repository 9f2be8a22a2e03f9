#include "support.hpp"

#include "anomsynth/demo.hpp"
#include "anomsynth/imageops.hpp"
#include "anomsynth/png_io.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

namespace testsupport {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("anomsynth-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

GrayImage random_gray(int w, int h, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    GrayImage g(w, h);
    for (auto& v : g.values()) v = u(rng);
    return g;
}

Image random_image(int w, int h, int channels, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image img(w, h, channels);
    for (auto& v : img.data()) v = u(rng);
    return img;
}

BinaryMask random_mask(int w, int h, double p, std::mt19937_64& rng) {
    std::bernoulli_distribution b(p);
    BinaryMask m(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.set(x, y, b(rng));
    return m;
}

LatentTensor random_latent(int c, int h, int w, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    LatentTensor t(c, h, w);
    for (auto& v : t.values()) v = n(rng);
    return t;
}

Image block_image(int w, int h, int channels, int factor, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> level(0, 255);
    Image img(w, h, channels);
    for (int by = 0; by < h / factor; ++by) {
        for (int bx = 0; bx < w / factor; ++bx) {
            for (int c = 0; c < channels; ++c) {
                // Multiples of 1/256 so block averages stay exact in float.
                const float v = static_cast<float>(level(rng)) / 256.0f;
                for (int y = 0; y < factor; ++y)
                    for (int x = 0; x < factor; ++x) img.at(bx * factor + x, by * factor + y, c) = v;
            }
        }
    }
    return img;
}

namespace {

int mirror(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
}

}  // namespace

BinaryMask reference_canny(const GrayImage& img, double low, double high) {
    const int w = img.width();
    const int h = img.height();
    double k1[5];
    double s = 0;
    for (int i = 0; i < 5; ++i) {
        k1[i] = std::exp(-((i - 2) * (i - 2)) / (2 * 1.4 * 1.4));
        s += k1[i];
    }
    double k2[5][5];
    for (int j = 0; j < 5; ++j)
        for (int i = 0; i < 5; ++i) k2[j][i] = k1[j] * k1[i] / (s * s);

    std::vector<std::vector<double>> blur(h, std::vector<double>(w));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0;
            for (int j = -2; j <= 2; ++j)
                for (int i = -2; i <= 2; ++i) acc += k2[j + 2][i + 2] * img.at(mirror(x + i, w), mirror(y + j, h));
            blur[y][x] = acc;
        }

    const int sx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    const int sy[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    std::vector<std::vector<double>> mag(h, std::vector<double>(w)), gxs = mag, gys = mag;
    double maxm = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double gx = 0, gy = 0;
            for (int j = -1; j <= 1; ++j)
                for (int i = -1; i <= 1; ++i) {
                    const double v = blur[mirror(y + j, h)][mirror(x + i, w)];
                    gx += sx[j + 1][i + 1] * v;
                    gy += sy[j + 1][i + 1] * v;
                }
            gxs[y][x] = gx;
            gys[y][x] = gy;
            mag[y][x] = std::sqrt(gx * gx + gy * gy);
            maxm = std::max(maxm, mag[y][x]);
        }
    BinaryMask out(w, h);
    if (maxm <= 1e-12) return out;

    auto M = [&](int x, int y) { return mag[mirror(y, h)][mirror(x, w)]; };
    std::vector<std::vector<double>> nms(h, std::vector<double>(w, 0.0));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double m = mag[y][x];
            if (m <= 0) continue;
            double deg = std::atan2(gys[y][x], gxs[y][x]) * 180.0 / std::numbers::pi;
            if (deg < 0) deg += 180.0;
            const int sector = deg < 22.5 || deg >= 157.5 ? 0 : deg < 67.5 ? 1 : deg < 112.5 ? 2 : 3;
            static const int off[4][2] = {{1, 0}, {1, 1}, {0, 1}, {-1, 1}};
            const int dx = off[sector][0];
            const int dy = off[sector][1];
            if (m >= M(x + dx, y + dy) && m > M(x - dx, y - dy)) nms[y][x] = m;
        }

    const double hi = high * maxm;
    const double lo = low * maxm;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.set(x, y, nms[y][x] > 0 && nms[y][x] >= hi);
    bool changed = true;
    while (changed) {
        changed = false;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (out.at(x, y) || nms[y][x] <= 0 || nms[y][x] < lo) continue;
                for (int j = -1; j <= 1 && !out.at(x, y); ++j)
                    for (int i = -1; i <= 1; ++i) {
                        const int nx = x + i, ny = y + j;
                        if (nx >= 0 && ny >= 0 && nx < w && ny < h && out.at(nx, ny)) {
                            out.set(x, y);
                            changed = true;
                            break;
                        }
                    }
            }
    }
    return out;
}

std::vector<double> reference_ssim(const GrayImage& a, const GrayImage& b) {
    const int w = a.width();
    const int h = a.height();
    double k[11][11];
    double total = 0;
    for (int j = 0; j < 11; ++j)
        for (int i = 0; i < 11; ++i) {
            k[j][i] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
            total += k[j][i];
        }
    std::vector<double> out(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
            for (int j = -5; j <= 5; ++j)
                for (int i = -5; i <= 5; ++i) {
                    const double wt = k[j + 5][i + 5] / total;
                    const double va = a.at(mirror(x + i, w), mirror(y + j, h));
                    const double vb = b.at(mirror(x + i, w), mirror(y + j, h));
                    ma += wt * va;
                    mb += wt * vb;
                    aa += wt * va * va;
                    bb += wt * vb * vb;
                    ab += wt * va * vb;
                }
            const double c1 = 1e-4, c2 = 9e-4;
            const double s = ((2 * ma * mb + c1) * (2 * (ab - ma * mb) + c2)) /
                             ((ma * ma + mb * mb + c1) * ((aa - ma * ma) + (bb - mb * mb) + c2));
            out[static_cast<std::size_t>(y) * w + x] = std::clamp(s, 0.0, 1.0);
        }
    return out;
}

namespace {

BinaryMask brute_morph(const BinaryMask& m, bool dilate) {
    const int w = m.width();
    const int h = m.height();
    BinaryMask out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool any = false, all = true;
            for (int j = -2; j <= 2; ++j)
                for (int i = -2; i <= 2; ++i) {
                    const bool b = m.at(mirror(x + i, w), mirror(y + j, h));
                    any = any || b;
                    all = all && b;
                }
            out.set(x, y, dilate ? any : all);
        }
    return out;
}

}  // namespace

BinaryMask brute_dilate5(const BinaryMask& m) { return brute_morph(m, true); }
BinaryMask brute_erode5(const BinaryMask& m) { return brute_morph(m, false); }

int brute_components(const BinaryMask& m) {
    const int w = m.width();
    const int h = m.height();
    std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (m.at(x, y)) label[y * w + x] = y * w + x;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int& l = label[y * w + x];
                if (l < 0) continue;
                for (int j = -1; j <= 1; ++j)
                    for (int i = -1; i <= 1; ++i) {
                        const int nx = x + i, ny = y + j;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                        const int o = label[ny * w + nx];
                        if (o >= 0 && o < l) {
                            l = o;
                            changed = true;
                        }
                    }
            }
    }
    std::set<int> distinct;
    for (int l : label)
        if (l >= 0) distinct.insert(l);
    return static_cast<int>(distinct.size());
}

std::size_t brute_count(const BinaryMask& m) {
    std::size_t n = 0;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x) n += m.at(x, y) ? 1 : 0;
    return n;
}

BinaryMask mask_with_count(int w, int h, std::size_t count, std::mt19937_64& rng) {
    std::vector<int> idx(static_cast<std::size_t>(w) * h);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    BinaryMask m(w, h);
    for (std::size_t i = 0; i < count; ++i) m.set(idx[i] % w, idx[i] / w);
    return m;
}

MatchCase random_match_case(std::mt19937_64& rng, std::size_t max_pool) {
    std::uniform_int_distribution<std::size_t> size(1, max_pool);
    std::uniform_int_distribution<int> dim_pick(2, 24);
    std::normal_distribution<float> n(0.0f, 1.0f);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t dim = static_cast<std::size_t>(dim_pick(rng));
    auto vec = [&] {
        std::vector<float> v(dim);
        for (auto& x : v) x = n(rng);
        return anomsynth::EmbeddingVector(std::move(v));
    };
    MatchCase c;
    c.descriptor = anomsynth::descmatch::make_descriptor("object", "defect " + std::to_string(rng() % 1000));
    c.query = vec();
    const std::size_t count = size(rng);
    for (std::size_t i = 0; i < count; ++i) {
        anomsynth::texlib::PoolEntry e;
        // Ids are shuffled so pool order and id order disagree.
        e.asset_id = "asset-" + std::to_string(rng() % 100000);
        e.category = "cracked";
        const double r = u(rng);
        if (r < 0.1 && !c.pool.empty()) {
            e.embedding = c.pool[rng() % c.pool.size()].embedding;  // planted tie
        } else if (r < 0.15) {
            e.embedding = c.query;  // exact self-match
        } else {
            e.embedding = vec();
        }
        c.pool.push_back(std::move(e));
    }
    return c;
}

std::pair<std::string, double> brute_force_match(const anomsynth::EmbeddingVector& query,
                                                 const std::vector<anomsynth::texlib::PoolEntry>& pool) {
    std::string best_id;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& e : pool) {
        double dot = 0.0;
        for (std::size_t i = 0; i < query.dim(); ++i) {
            dot += static_cast<double>(query.values()[i]) * e.embedding.values()[i];
        }
        dot = std::clamp(dot, -1.0, 1.0);
        if (dot > best || (dot == best && e.asset_id < best_id)) {
            best = dot;
            best_id = e.asset_id;
        }
    }
    return {best_id, best};
}

MaskCase random_mask_case(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> blocks(8, 16);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int w = blocks(rng) * 8;
    const int h = blocks(rng) * 8;
    MaskCase c;
    c.normal = Image(w, h, 3, 0.1f);
    c.foreground = BinaryMask(w, h);
    const double cx = w * (0.3 + 0.4 * u(rng));
    const double cy = h * (0.3 + 0.4 * u(rng));
    const double rx = w * (0.1 + 0.5 * u(rng));
    const double ry = h * (0.1 + 0.5 * u(rng));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double dx = (x - cx) / rx, dy = (y - cy) / ry;
            if (dx * dx + dy * dy <= 1.0) {
                c.foreground.set(x, y);
                for (int ch = 0; ch < 3; ++ch) c.normal.at(x, y, ch) = 0.8f;
            }
        }
    const auto pattern = static_cast<anomsynth::demo::Pattern>(rng() % 5);
    c.texture = anomsynth::demo::texture(pattern, 48 + static_cast<int>(rng() % 100), rng());
    return c;
}

std::string check_bundle(const anomsynth::maskgen::MaskBundle& b, const MaskCase& in,
                         const anomsynth::maskgen::MaskGenConfig& config) {
    const int w = in.normal.width();
    const int h = in.normal.height();
    const auto& r = b.rect;
    if (r.height < std::ceil(config.l_rate * h - 1e-9) || r.height > std::floor(config.h_rate * h + 1e-9))
        return "rectangle height out of range";
    if (r.width < std::ceil(config.l_rate * w - 1e-9) || r.width > std::floor(config.h_rate * w + 1e-9))
        return "rectangle width out of range";
    if (r.x < 0 || r.y < 0 || r.x + r.width > w || r.y + r.height > h) return "rectangle outside the image";

    const Image registered = anomsynth::resize(in.texture, w, h);
    const BinaryMask edges = anomsynth::imageops::canny(anomsynth::to_gray(registered), config.canny);
    std::size_t rect_area = 0, on_fg = 0, ov_edges = 0;
    for (int y = r.y; y < r.y + r.height; ++y)
        for (int x = r.x; x < r.x + r.width; ++x) {
            ++rect_area;
            if (in.foreground.at(x, y)) {
                ++on_fg;
                if (edges.at(x, y)) ++ov_edges;
            }
        }
    if (!(static_cast<double>(on_fg) / rect_area > config.thresh1)) return "foreground predicate fails on recount";
    if (on_fg == 0 || !(static_cast<double>(ov_edges) / on_fg > config.thresh2)) return "texture predicate fails on recount";

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool in_rect = x >= r.x && x < r.x + r.width && y >= r.y && y < r.y + r.height;
            if (b.m_in.at(x, y) != (in_rect && in.foreground.at(x, y))) return "m_in is not rect & foreground";
            if (b.m_in.at(x, y) && !in.foreground.at(x, y)) return "m_in leaves the foreground";
            bool nonzero = false;
            for (int c = 0; c < b.x_texture.channels(); ++c) nonzero = nonzero || b.x_texture.at(x, y, c) != 0.0f;
            if (nonzero && !b.m_in.at(x, y)) return "adaptive texture outside m_in";
            if (b.texture_support.at(x, y) && !b.m_in.at(x, y)) return "texture support outside m_in";
        }
    const int f = config.latent_factor;
    if (b.m_texture_latent.width() != w / f || b.m_texture_latent.height() != h / f) return "latent mask shape";
    for (int by = 0; by < h / f; ++by)
        for (int bx = 0; bx < w / f; ++bx) {
            bool any = false;
            for (int y = 0; y < f; ++y)
                for (int x = 0; x < f; ++x) any = any || b.texture_support.at(bx * f + x, by * f + y);
            if (b.m_texture_latent.at(bx, by) != any) return "latent mask is not the any-true pooling";
        }
    return {};
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string diff_trees(const fs::path& a, const fs::path& b) {
    auto listing = [](const fs::path& root) {
        std::set<std::string> files;
        for (const auto& e : fs::recursive_directory_iterator(root)) {
            if (e.is_regular_file()) files.insert(fs::relative(e.path(), root).generic_string());
        }
        return files;
    };
    const auto fa = listing(a);
    const auto fb = listing(b);
    if (fa != fb) return "file lists differ (" + std::to_string(fa.size()) + " vs " + std::to_string(fb.size()) + ")";
    for (const auto& f : fa) {
        if (read_file(a / f) != read_file(b / f)) return "contents differ: " + f;
    }
    return {};
}


CommandResult run_command(const std::string& command) {
    CommandResult r;
    FILE* pipe = popen((command + " 2>&1").c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.output.append(buf.data(), n);
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    return out + "'";
}

void write_passing_textures(const std::filesystem::path& dir, int n, int offset) {
    std::filesystem::create_directories(dir);
    for (int i = 0; i < n; ++i) {
        anomsynth::Image img(64, 64, 3);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = ((x / 8) + (y / 8)) % 2 ? 0.8f : 0.2f;
        // Distinct bytes per texture: the id goes into two channels of one pixel.
        img.at(0, 0, 1) = static_cast<float>((i + offset) % 256) / 255.0f;
        img.at(0, 0, 2) = static_cast<float>((i + offset) / 256) / 255.0f;
        anomsynth::png::write(dir / ("tex-" + std::to_string(i + offset) + ".png"), img);
    }
}

void write_ladder(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    int i = 0;
    for (const Image& img : anomsynth::demo::density_ladder(256)) {
        anomsynth::png::write(dir / ("ladder-" + std::to_string(i++) + ".png"), img);
    }
}

}  // namespace testsupport
