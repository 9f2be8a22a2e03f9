#include "anomsynth/imageops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "anomsynth/error.hpp"

namespace anomsynth::imageops {

namespace {

template <std::size_t N>
std::array<double, N> gaussian_kernel(double sigma) {
    std::array<double, N> k{};
    const int r = static_cast<int>(N) / 2;
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        k[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += k[i + r];
    }
    for (auto& v : k) v /= sum;
    return k;
}

// Separable convolution of a double plane with reflect-101 borders.
template <std::size_t N>
std::vector<double> convolve_separable(const std::vector<double>& src, int w, int h,
                                       const std::array<double, N>& k) {
    const int r = static_cast<int>(N) / 2;
    std::vector<double> tmp(src.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) acc += k[i + r] * src[static_cast<std::size_t>(y) * w + reflect(x + i, w)];
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    std::vector<double> out(src.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[static_cast<std::size_t>(reflect(y + i, h)) * w + x];
            out[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    return out;
}

std::vector<double> to_plane(const GrayImage& img) {
    return {img.values().begin(), img.values().end()};
}

struct Gradients {
    std::vector<double> gx, gy, mag;
};

Gradients sobel(const std::vector<double>& p, int w, int h) {
    Gradients g;
    g.gx.resize(p.size());
    g.gy.resize(p.size());
    g.mag.resize(p.size());
    auto at = [&](int x, int y) { return p[static_cast<std::size_t>(reflect(y, h)) * w + reflect(x, w)]; };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)) -
                              (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            const double gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)) -
                              (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            const auto i = static_cast<std::size_t>(y) * w + x;
            g.gx[i] = gx;
            g.gy[i] = gy;
            g.mag[i] = std::hypot(gx, gy);
        }
    }
    return g;
}

// Row pass then column pass of a 5-wide OR (dilate) or AND (erode).
BinaryMask morph5(const BinaryMask& mask, bool dilate) {
    const int w = mask.width();
    const int h = mask.height();
    BinaryMask tmp(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool v = !dilate;
            for (int i = -2; i <= 2; ++i) {
                const bool b = mask.at(reflect(x + i, w), y);
                v = dilate ? (v || b) : (v && b);
            }
            tmp.set(x, y, v);
        }
    }
    BinaryMask out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            bool v = !dilate;
            for (int i = -2; i <= 2; ++i) {
                const bool b = tmp.at(x, reflect(y + i, h));
                v = dilate ? (v || b) : (v && b);
            }
            out.set(x, y, v);
        }
    }
    return out;
}

}  // namespace

int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

GrayImage gaussian_blur5(const GrayImage& img) {
    static const auto kernel = gaussian_kernel<5>(1.4);
    const auto out = convolve_separable(to_plane(img), img.width(), img.height(), kernel);
    return GrayImage(img.width(), img.height(), std::vector<float>(out.begin(), out.end()));
}

std::vector<double> sobel_magnitude(const GrayImage& img) {
    return sobel(to_plane(img), img.width(), img.height()).mag;
}

BinaryMask canny(const GrayImage& img, double low_thresh, double high_thresh) {
    if (img.width() < 5 || img.height() < 5) {
        throw_invalid("canny needs an image of at least 5x5 pixels");
    }
    if (!(low_thresh > 0.0 && low_thresh < high_thresh && high_thresh <= 1.0)) {
        throw_invalid("canny thresholds must satisfy 0 < low < high <= 1");
    }
    const int w = img.width();
    const int h = img.height();
    static const auto kernel = gaussian_kernel<5>(1.4);
    const auto blurred = convolve_separable(to_plane(img), w, h, kernel);
    const auto g = sobel(blurred, w, h);

    const double max_mag = *std::max_element(g.mag.begin(), g.mag.end());
    BinaryMask edges(w, h);
    if (max_mag <= 1e-12) return edges;

    auto mag_at = [&](int x, int y) {
        return g.mag[static_cast<std::size_t>(reflect(y, h)) * w + reflect(x, w)];
    };

    // Non-maximum suppression along the quantized gradient direction. The
    // asymmetric comparison keeps exactly one pixel of a two-pixel plateau.
    std::vector<double> thin(g.mag.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto i = static_cast<std::size_t>(y) * w + x;
            const double m = g.mag[i];
            if (m <= 0.0) continue;
            double angle = std::atan2(g.gy[i], g.gx[i]) * 180.0 / std::numbers::pi;
            if (angle < 0.0) angle += 180.0;
            double a, b;
            if (angle < 22.5 || angle >= 157.5) {
                a = mag_at(x + 1, y);
                b = mag_at(x - 1, y);
            } else if (angle < 67.5) {
                a = mag_at(x + 1, y + 1);
                b = mag_at(x - 1, y - 1);
            } else if (angle < 112.5) {
                a = mag_at(x, y + 1);
                b = mag_at(x, y - 1);
            } else {
                a = mag_at(x - 1, y + 1);
                b = mag_at(x + 1, y - 1);
            }
            if (m >= a && m > b) thin[i] = m;
        }
    }

    const double hi = high_thresh * max_mag;
    const double lo = low_thresh * max_mag;
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < thin.size(); ++i) {
        if (thin[i] >= hi && thin[i] > 0.0) {
            edges.bits()[i] = 1;
            stack.push_back(i);
        }
    }
    while (!stack.empty()) {
        const std::size_t i = stack.back();
        stack.pop_back();
        const int x = static_cast<int>(i % w);
        const int y = static_cast<int>(i / w);
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx;
                const int ny = y + dy;
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                const auto j = static_cast<std::size_t>(ny) * w + nx;
                if (edges.bits()[j] || thin[j] < lo || thin[j] <= 0.0) continue;
                edges.bits()[j] = 1;
                stack.push_back(j);
            }
        }
    }
    return edges;
}

BinaryMask dilate5(const BinaryMask& mask) { return morph5(mask, true); }
BinaryMask erode5(const BinaryMask& mask) { return morph5(mask, false); }
BinaryMask closing5(const BinaryMask& mask) { return erode5(dilate5(mask)); }

BinaryMask close_texture(const BinaryMask& mask) { return closing5(~mask); }

int count_components(const BinaryMask& mask) {
    const int w = mask.width();
    const int h = mask.height();
    std::vector<std::uint8_t> seen(mask.size(), 0);
    std::vector<std::size_t> stack;
    int components = 0;
    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (!mask[start] || seen[start]) continue;
        ++components;
        seen[start] = 1;
        stack.push_back(start);
        while (!stack.empty()) {
            const std::size_t i = stack.back();
            stack.pop_back();
            const int x = static_cast<int>(i % w);
            const int y = static_cast<int>(i / w);
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    const int nx = x + dx;
                    const int ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    const auto j = static_cast<std::size_t>(ny) * w + nx;
                    if (mask[j] && !seen[j]) {
                        seen[j] = 1;
                        stack.push_back(j);
                    }
                }
            }
        }
    }
    return components;
}

GrayImage ssim_map(const GrayImage& a, const GrayImage& b) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw_invalid("ssim_map inputs must have identical dimensions");
    }
    const int w = a.width();
    const int h = a.height();
    static const auto kernel = gaussian_kernel<11>(1.5);
    constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
    constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);

    const auto pa = to_plane(a);
    const auto pb = to_plane(b);
    std::vector<double> aa(pa.size()), bb(pa.size()), ab(pa.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        aa[i] = pa[i] * pa[i];
        bb[i] = pb[i] * pb[i];
        ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = convolve_separable(pa, w, h, kernel);
    const auto mu_b = convolve_separable(pb, w, h, kernel);
    const auto e_aa = convolve_separable(aa, w, h, kernel);
    const auto e_bb = convolve_separable(bb, w, h, kernel);
    const auto e_ab = convolve_separable(ab, w, h, kernel);

    GrayImage out(w, h);
    auto v = out.values();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
        const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
        const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2);
        v[i] = static_cast<float>(std::clamp(num / den, 0.0, 1.0));
    }
    return out;
}

double area_fraction(const BinaryMask& mask, const BinaryMask& base) {
    if (!mask.same_shape(base)) throw_invalid("area_fraction: mask and base dimensions differ");
    const std::size_t denom = base.count();
    if (denom == 0) throw Error(ErrorKind::UndefinedBase, "area_fraction: base mask is empty");
    return static_cast<double>((mask & base).count()) / static_cast<double>(denom);
}

double area_fraction(const BinaryMask& mask) {
    return static_cast<double>(mask.count()) / static_cast<double>(mask.size());
}

}  // namespace anomsynth::imageops
