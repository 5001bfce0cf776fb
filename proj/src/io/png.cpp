// Copyright 2026 The carimirror Authors.
// SPDX-License-Identifier: Apache-2.0

#include <carimirror/error.hpp>
#include <carimirror/io/png.hpp>

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace carimirror::io {

namespace {

struct FileCloser
{
    void operator()(std::FILE* f) const
    {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode)
{
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) throw FormatError("cannot open '" + path.string() + "'");
    return f;
}

[[noreturn]] void png_error_fn(png_structp, png_const_charp msg)
{
    throw FormatError(std::string("libpng: ") + msg);
}

void png_warning_fn(png_structp, png_const_charp) {}

class PngWriter
{
public:
    explicit PngWriter(std::FILE* f)
    {
        m_png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
        m_info = png_create_info_struct(m_png);
        png_init_io(m_png, f);
    }
    ~PngWriter() { png_destroy_write_struct(&m_png, &m_info); }
    PngWriter(const PngWriter&) = delete;
    PngWriter& operator=(const PngWriter&) = delete;

    png_structp png() const { return m_png; }
    png_infop info() const { return m_info; }

private:
    png_structp m_png = nullptr;
    png_infop m_info = nullptr;
};

class PngReader
{
public:
    explicit PngReader(std::FILE* f)
    {
        m_png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
        m_info = png_create_info_struct(m_png);
        png_init_io(m_png, f);
    }
    ~PngReader() { png_destroy_read_struct(&m_png, &m_info, nullptr); }
    PngReader(const PngReader&) = delete;
    PngReader& operator=(const PngReader&) = delete;

    png_structp png() const { return m_png; }
    png_infop info() const { return m_info; }

private:
    png_structp m_png = nullptr;
    png_infop m_info = nullptr;
};

} // namespace

double srgb_to_linear(double c)
{
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double c)
{
    c = std::clamp(c, 0.0, 1.0);
    return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

Image read_png(const std::filesystem::path& path, Transfer transfer)
{
    auto f = open_file(path, "rb");
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) throw FormatError("'" + path.string() + "' is not a PNG file");
    PngReader r(f.get());
    png_set_sig_bytes(r.png(), 8);
    png_read_info(r.png(), r.info());
    const auto colorType = png_get_color_type(r.png(), r.info());
    const int bitDepth = png_get_bit_depth(r.png(), r.info());
    if (colorType == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png());
    if (colorType == PNG_COLOR_TYPE_GRAY && bitDepth < 8) png_set_expand_gray_1_2_4_to_8(r.png());
    if (bitDepth == 16) png_set_swap(r.png());
    png_read_update_info(r.png(), r.info());

    const int w = static_cast<int>(png_get_image_width(r.png(), r.info()));
    const int h = static_cast<int>(png_get_image_height(r.png(), r.info()));
    const int channels = png_get_channels(r.png(), r.info());
    const int depth = png_get_bit_depth(r.png(), r.info());
    const size_t rowBytes = png_get_rowbytes(r.png(), r.info());
    std::vector<unsigned char> buf(rowBytes * static_cast<size_t>(h));
    std::vector<png_bytep> rows(static_cast<size_t>(h));
    for (int y = 0; y < h; ++y) rows[static_cast<size_t>(y)] = buf.data() + static_cast<size_t>(y) * rowBytes;
    png_read_image(r.png(), rows.data());

    const bool hasAlpha = channels == 2 || channels == 4;
    Image img(w, h, channels);
    const double maxVal = depth == 16 ? 65535.0 : 255.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < channels; ++c) {
                const size_t k = static_cast<size_t>(x * channels + c);
                double raw = 0.0;
                if (depth == 16) {
                    const auto* p = reinterpret_cast<const std::uint16_t*>(rows[static_cast<size_t>(y)]);
                    raw = p[k] / maxVal;
                } else {
                    raw = rows[static_cast<size_t>(y)][k] / maxVal;
                }
                const bool isAlpha = hasAlpha && c == channels - 1;
                img.at(x, y, c) = (transfer == Transfer::Srgb && !isAlpha) ? srgb_to_linear(raw) : raw;
            }
        }
    }
    return img;
}

void write_png(const std::filesystem::path& path, const Image& image, Transfer transfer, int bitDepth)
{
    if (bitDepth != 8 && bitDepth != 16) throw InvalidInput("PNG bit depth must be 8 or 16");
    const int ch = image.channels();
    int colorType = 0;
    switch (ch) {
    case 1: colorType = PNG_COLOR_TYPE_GRAY; break;
    case 2: colorType = PNG_COLOR_TYPE_GRAY_ALPHA; break;
    case 3: colorType = PNG_COLOR_TYPE_RGB; break;
    case 4: colorType = PNG_COLOR_TYPE_RGB_ALPHA; break;
    default: throw InvalidInput("PNG supports 1-4 channels");
    }
    auto f = open_file(path, "wb");
    PngWriter wr(f.get());
    png_set_IHDR(wr.png(), wr.info(), static_cast<png_uint_32>(image.width()), static_cast<png_uint_32>(image.height()), bitDepth, colorType,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wr.png(), wr.info());
    if (bitDepth == 16) png_set_swap(wr.png());

    const bool hasAlpha = ch == 2 || ch == 4;
    const double maxVal = bitDepth == 16 ? 65535.0 : 255.0;
    const size_t bytesPer = bitDepth == 16 ? 2 : 1;
    std::vector<unsigned char> row(static_cast<size_t>(image.width() * ch) * bytesPer);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            for (int c = 0; c < ch; ++c) {
                double v = std::clamp(image.at(x, y, c), 0.0, 1.0);
                const bool isAlpha = hasAlpha && c == ch - 1;
                if (transfer == Transfer::Srgb && !isAlpha) v = linear_to_srgb(v);
                const auto q = static_cast<unsigned>(std::lround(v * maxVal));
                const size_t k = static_cast<size_t>(x * ch + c);
                if (bitDepth == 16) {
                    reinterpret_cast<std::uint16_t*>(row.data())[k] = static_cast<std::uint16_t>(q);
                } else {
                    row[k] = static_cast<unsigned char>(q);
                }
            }
        }
        png_write_row(wr.png(), row.data());
    }
    png_write_end(wr.png(), nullptr);
}

void write_indexed_png(const std::filesystem::path& path, int width, int height,
                       const std::vector<std::uint8_t>& indices,
                       const std::vector<std::array<std::uint8_t, 3>>& palette)
{
    if (indices.size() != static_cast<size_t>(width) * static_cast<size_t>(height)) throw InvalidInput("index buffer size mismatch");
    if (palette.empty() || palette.size() > 256) throw InvalidInput("palette must have 1..256 entries");
    auto f = open_file(path, "wb");
    PngWriter wr(f.get());
    png_set_IHDR(wr.png(), wr.info(), static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_PALETTE,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    std::vector<png_color> pal(palette.size());
    for (size_t i = 0; i < palette.size(); ++i) pal[i] = {palette[i][0], palette[i][1], palette[i][2]};
    png_set_PLTE(wr.png(), wr.info(), pal.data(), static_cast<int>(pal.size()));
    png_write_info(wr.png(), wr.info());
    for (int y = 0; y < height; ++y) {
        png_write_row(wr.png(), const_cast<png_bytep>(indices.data() + static_cast<size_t>(y) * static_cast<size_t>(width)));
    }
    png_write_end(wr.png(), nullptr);
}

std::vector<std::uint8_t> read_indexed_png(const std::filesystem::path& path, int& width, int& height)
{
    auto f = open_file(path, "rb");
    PngReader r(f.get());
    png_read_info(r.png(), r.info());
    if (png_get_color_type(r.png(), r.info()) != PNG_COLOR_TYPE_PALETTE || png_get_bit_depth(r.png(), r.info()) != 8) {
        throw FormatError("'" + path.string() + "' is not an 8-bit indexed PNG");
    }
    width = static_cast<int>(png_get_image_width(r.png(), r.info()));
    height = static_cast<int>(png_get_image_height(r.png(), r.info()));
    std::vector<std::uint8_t> out(static_cast<size_t>(width) * static_cast<size_t>(height));
    for (int y = 0; y < height; ++y) png_read_row(r.png(), out.data() + static_cast<size_t>(y) * static_cast<size_t>(width), nullptr);
    return out;
}

} // namespace carimirror::io
