#include "anomsynth/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "anomsynth/error.hpp"

namespace anomsynth::png {

namespace {

std::uint8_t quantize(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> encode_raw(const std::vector<std::uint8_t>& pixels, int w, int h,
                                     int channels) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels.data(), 0, nullptr)) {
        throw Error(ErrorKind::Io, std::string("png sizing failed: ") + image.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels.data(), 0, nullptr)) {
        throw Error(ErrorKind::Io, std::string("png encoding failed: ") + image.message);
    }
    out.resize(size);
    return out;
}

}  // namespace

bool has_png_signature(std::span<const std::uint8_t> bytes) {
    return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

Image decode(std::span<const std::uint8_t> bytes) {
    if (!has_png_signature(bytes)) throw_invalid("not a PNG stream");
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        throw_invalid(std::string("png header unreadable: ") + image.message);
    }
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const int channels = color ? 3 : 1;
    std::vector<std::uint8_t> raw(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, raw.data(), 0, nullptr)) {
        png_image_free(&image);
        throw_invalid(std::string("png decode failed: ") + image.message);
    }
    std::vector<float> data(raw.size());
    std::transform(raw.begin(), raw.end(), data.begin(),
                   [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
    return Image(static_cast<int>(image.width), static_cast<int>(image.height), channels,
                 std::move(data));
}

Image read(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    return decode(bytes);
}

std::vector<std::uint8_t> encode(const Image& img) {
    std::vector<std::uint8_t> pixels(img.data().size());
    std::transform(img.data().begin(), img.data().end(), pixels.begin(), quantize);
    return encode_raw(pixels, img.width(), img.height(), img.channels());
}

void write(const std::filesystem::path& path, const Image& img) { write_bytes(path, encode(img)); }

std::vector<std::uint8_t> encode_mask(const BinaryMask& mask) {
    std::vector<std::uint8_t> pixels(mask.size());
    std::transform(mask.bits().begin(), mask.bits().end(), pixels.begin(),
                   [](std::uint8_t b) { return static_cast<std::uint8_t>(b ? 255 : 0); });
    return encode_raw(pixels, mask.width(), mask.height(), 1);
}

void write_mask(const std::filesystem::path& path, const BinaryMask& mask) {
    write_bytes(path, encode_mask(mask));
}

BinaryMask read_mask(const std::filesystem::path& path) {
    const Image img = read(path);
    BinaryMask mask(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            bool any = false;
            for (int c = 0; c < img.channels(); ++c) any = any || img.at(x, y, c) > 0.0f;
            mask.set(x, y, any);
        }
    }
    return mask;
}

}  // namespace anomsynth::png
