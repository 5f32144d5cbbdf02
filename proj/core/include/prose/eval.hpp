#pragma once

// Disentanglement measurements on frozen latent codes: per-partition linear
// probes scored by mean average precision, held-out-factor leakage, the
// orthonormality deviation of test codes, block interpolation, attribute
// transfer grids and a 2-D PCA projection.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "prose/checkpoint.hpp"
#include "prose/data.hpp"
#include "prose/image_io.hpp"
#include "prose/linalg.hpp"

namespace prose {

// Ranks by descending score; equal scores keep their original order.
// AP = (1/P) Σ precision@r over the ranks r holding a positive.
double average_precision(std::span<const double> scores, const std::vector<bool>& positives);

struct ProbeSettings {
    std::size_t iterations = 500;
    double learning_rate = 0.1;
    std::uint64_t seed = 0;
};

// One-vs-rest logistic regression fitted by full-batch gradient descent on
// standardized features. Returns test-set scores, one column per class.
Matrix fit_probe_scores(const Matrix& train_features, const std::vector<std::int32_t>& train_labels,
                        const Matrix& test_features, std::size_t classes,
                        const ProbeSettings& settings);

// Codes for one split with the matching factor labels.
struct LabelledCodes {
    Matrix codes;                       // n × d·k
    std::vector<std::int32_t> labels;   // n × factor_count
    std::size_t factor_count = 0;

    std::vector<std::int32_t> factor_labels(std::size_t factor) const;
};

struct CodeSplits {
    LabelledCodes train;
    LabelledCodes test;
    std::vector<Factor> factors;
    std::size_t d = 0;
    std::size_t k = 0;
};

// Posterior-mean / deterministic codes for both splits (no Cayley step).
CodeSplits encode_splits(const Checkpoint& ckpt, const FactorDataset& dataset);

// Columns of the d·k code that belong to the listed partitions.
Matrix partition_features(const Matrix& codes, std::size_t d, std::size_t k,
                          const std::vector<std::size_t>& partitions);

struct MapResult {
    Matrix table;                        // k × factors, mean AP over classes
    std::vector<std::size_t> assignment; // factor → partition

    double matched_map() const;
};

MapResult map_per_partition(const CodeSplits& splits, std::uint64_t seed);
MapResult map_per_partition(const Checkpoint& ckpt, const FactorDataset& dataset, std::uint64_t seed);

// Test accuracy of a probe that predicts `heldout_factor` from every
// partition except the one assigned to it.
double leakage_score(const CodeSplits& splits, const std::vector<std::size_t>& assignment,
                     std::size_t heldout_factor, std::uint64_t seed);
double leakage_score(const Checkpoint& ckpt, const FactorDataset& dataset,
                     std::size_t heldout_factor, std::uint64_t seed);

// Mean over test codes of ‖ZᵀZ − I‖_F (not squared).
double orth_deviation(const Matrix& codes, std::size_t d, std::size_t k);
double orth_deviation(const Checkpoint& ckpt, const FactorDataset& dataset);

enum class Interpolation : std::uint8_t { slerp, lerp };

// Great-circle interpolation of direction with linearly interpolated radius.
// Nearly parallel or antipodal endpoints (angle within 1e-6 of 0 or π) fall
// back to linear interpolation.
std::vector<double> slerp_block(std::span<const double> za, std::span<const double> zb, double t);
std::vector<double> interpolate_block(std::span<const double> za, std::span<const double> zb,
                                      double t, Interpolation mode);

// Decodes example a with block `block` moved from a's code toward b's in
// `steps` evenly spaced stops (both endpoints included).
std::vector<Image> interpolation_strip(const Checkpoint& ckpt, std::span<const double> image_a,
                                       std::span<const double> image_b, std::size_t block,
                                       std::size_t steps, Interpolation mode);

// Grid of (rows+1) × (cols+1) cells. Cell (r+1, c+1) decodes the row image's
// code with block `block` taken from the column image; the first row holds
// the column images, the first column the row images.
struct TransferGrid {
    std::vector<std::vector<Image>> cells;
    Image composite;
};

TransferGrid attribute_transfer_grid(const Checkpoint& ckpt, const Matrix& row_images,
                                     const Matrix& col_images, std::size_t block);

struct Pca2d {
    Matrix coords;        // n × 2
    Matrix components;    // 2 × dim, unit rows
    std::vector<double> mean;
};

// Power iteration with deflation (200 iterations, tolerance 1e-9) from a
// seeded start. Each component's largest-magnitude loading is positive.
Pca2d pca_2d(const Matrix& points, std::uint64_t seed = 0);

struct EvalReport {
    MapResult map;
    std::vector<Factor> factors;
    std::vector<double> leakage;       // per factor
    double mean_orth_deviation = 0.0;
    std::string checkpoint_id;
    std::string dataset_id;
    std::uint64_t seed = 0;

    double mean_leakage() const;
};

EvalReport evaluate(const Checkpoint& ckpt, const FactorDataset& dataset, std::uint64_t seed);

// map.csv, assignment.csv, leakage.csv and summary.txt under `dir`.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace prose
