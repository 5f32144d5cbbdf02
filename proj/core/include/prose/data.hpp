#pragma once

// Factor-labelled image datasets: the synthetic Quads generator, the MNIST
// IDX reader, and the PROSEDAT container for exporting either.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "prose/linalg.hpp"

namespace prose {

struct Factor {
    std::string name;
    std::size_t cardinality = 0;

    friend bool operator==(const Factor&, const Factor&) = default;
};

struct ImageShape {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;

    std::size_t pixels() const noexcept { return height * width * channels; }
    friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

struct FactorSpec {
    std::string name;
    std::vector<Factor> factors;
    ImageShape image;
    double noise_sigma = 0.0;
    std::size_t replicas = 1;        // copies of every factor combination
    double train_fraction = 0.8;

    // 16×16 RGB, shape(3) × color(3) × x(4) × y(4), 40 noisy copies each.
    static FactorSpec quads();

    std::size_t combinations() const noexcept;
    void validate() const;
    std::string to_text() const;
    static FactorSpec from_text(const std::string& text);

    friend bool operator==(const FactorSpec&, const FactorSpec&) = default;
};

enum class Split : std::uint8_t { train = 0, test = 1 };

// One image per row, pixels interleaved as (y, x, channel) in [0, 1].
struct FactorDataset {
    FactorSpec spec;
    Matrix images;
    std::vector<std::int32_t> labels;   // size × factor_count, row-major
    std::vector<Split> split;

    std::size_t size() const noexcept { return images.rows(); }
    std::size_t factor_count() const noexcept { return spec.factors.size(); }
    std::int32_t label(std::size_t example, std::size_t factor) const {
        return labels[example * factor_count() + factor];
    }
    std::vector<std::size_t> indices(Split s) const;

    // Checks alignment, label ranges and pixel range; throws on violation.
    void validate() const;

    friend bool operator==(const FactorDataset&, const FactorDataset&) = default;
};

// Noise-free Quads rendering of one label vector (shape, color, x, y).
Matrix render_quads(const FactorSpec& spec, const std::vector<std::int32_t>& labels);

FactorDataset generate_toy(const FactorSpec& spec, std::uint64_t seed);

// MNIST IDX pair. Every image is tagged train; use split_dataset to carve a
// test split.
FactorDataset load_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path);

// Re-tags examples so that the trailing (1 − train_fraction) of a seeded
// permutation becomes the test split.
void split_dataset(FactorDataset& dataset, double train_fraction, std::uint64_t seed);

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows);

void save_dataset(const FactorDataset& dataset, const std::filesystem::path& path);
FactorDataset load_dataset(const std::filesystem::path& path);

}  // namespace prose
