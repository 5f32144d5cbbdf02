#include "prose/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "prose/error.hpp"
#include "prose/tensor_io.hpp"

namespace prose {

Image::Image(ImageShape s, std::span<const double> values)
    : shape(s), pixels(values.begin(), values.end()) {
    if (pixels.size() != shape.pixels()) throw ShapeError("Image: pixel count does not match shape");
}

Image tile_images(const std::vector<std::vector<Image>>& cells, ImageShape cell) {
    std::size_t cols = 0;
    for (const auto& row : cells) cols = std::max(cols, row.size());
    Image out({cell.height * cells.size(), cell.width * cols, cell.channels});
    for (std::size_t r = 0; r < cells.size(); ++r) {
        for (std::size_t c = 0; c < cells[r].size(); ++c) {
            const Image& img = cells[r][c];
            if (img.pixels.empty()) continue;
            if (img.shape != cell) throw ShapeError("tile_images: cell shape mismatch");
            for (std::size_t y = 0; y < cell.height; ++y)
                for (std::size_t x = 0; x < cell.width; ++x)
                    for (std::size_t ch = 0; ch < cell.channels; ++ch)
                        out.at(r * cell.height + y, c * cell.width + x, ch) = img.at(y, x, ch);
        }
    }
    return out;
}

std::vector<std::uint8_t> encode_pnm(const Image& image) {
    const auto& s = image.shape;
    if (s.channels != 1 && s.channels != 3) {
        throw ShapeError("encode_pnm: only 1- or 3-channel images are supported");
    }
    const std::string header = std::string(s.channels == 3 ? "P6" : "P5") + "\n" +
                               std::to_string(s.width) + " " + std::to_string(s.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + image.pixels.size());
    for (double v : image.pixels) {
        const double clamped = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
        out.push_back(static_cast<std::uint8_t>(std::lround(clamped * 255.0)));
    }
    return out;
}

void write_pnm(const Image& image, const std::filesystem::path& path) {
    write_file_bytes(path, encode_pnm(image));
}

}  // namespace prose
