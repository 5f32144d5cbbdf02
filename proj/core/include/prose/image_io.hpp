#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "prose/data.hpp"

namespace prose {

// Interleaved (y, x, channel) pixels in [0, 1].
struct Image {
    ImageShape shape;
    std::vector<double> pixels;

    Image() = default;
    explicit Image(ImageShape s) : shape(s), pixels(s.pixels(), 0.0) {}
    Image(ImageShape s, std::span<const double> values);

    double& at(std::size_t y, std::size_t x, std::size_t c) {
        return pixels[(y * shape.width + x) * shape.channels + c];
    }
    double at(std::size_t y, std::size_t x, std::size_t c) const {
        return pixels[(y * shape.width + x) * shape.channels + c];
    }
};

// Tiles equally-sized cells row-major into one image; empty cells stay black.
Image tile_images(const std::vector<std::vector<Image>>& cells, ImageShape cell);

// Binary PPM (P6) for 3 channels, PGM (P5) for 1: "P6\n<w> <h>\n255\n" then
// raw bytes, each pixel rounded from [0, 1] to [0, 255].
std::vector<std::uint8_t> encode_pnm(const Image& image);
void write_pnm(const Image& image, const std::filesystem::path& path);

}  // namespace prose
