#include "prose/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include "prose/error.hpp"
#include "prose/keyvalue.hpp"
#include "prose/manifold.hpp"

namespace prose {

namespace {

constexpr double kParallelAngle = 1e-6;

std::uint64_t probe_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
    std::uint64_t out[1];
    seq.generate(reinterpret_cast<std::uint32_t*>(out), reinterpret_cast<std::uint32_t*>(out + 1));
    return out[0];
}

struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    explicit Standardizer(const Matrix& x) : mean(x.cols(), 0.0), scale(x.cols(), 0.0) {
        const double inv = 1.0 / static_cast<double>(x.rows());
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < x.cols(); ++c) mean[c] += x(r, c) * inv;
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < x.cols(); ++c) {
                const double e = x(r, c) - mean[c];
                scale[c] += e * e * inv;
            }
        for (double& s : scale) s = s > 1e-24 ? 1.0 / std::sqrt(s) : 0.0;
    }

    Matrix apply(const Matrix& x) const {
        Matrix out(x.rows(), x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = (x(r, c) - mean[c]) * scale[c];
        return out;
    }
};

double mean_class_ap(const Matrix& scores, const std::vector<std::int32_t>& labels,
                     std::size_t classes) {
    double sum = 0.0;
    std::size_t counted = 0;
    std::vector<double> column(scores.rows());
    std::vector<bool> positives(scores.rows());
    for (std::size_t c = 0; c < classes; ++c) {
        bool any = false;
        for (std::size_t i = 0; i < scores.rows(); ++i) {
            column[i] = scores(i, c);
            positives[i] = labels[i] == static_cast<std::int32_t>(c);
            any = any || positives[i];
        }
        if (!any) continue;
        sum += average_precision(column, positives);
        ++counted;
    }
    if (counted == 0) throw UndefinedApError("no class has a positive example in the test split");
    return sum / static_cast<double>(counted);
}

void require_splits(const CodeSplits& s) {
    if (s.train.codes.rows() == 0 || s.test.codes.rows() == 0) {
        throw ProbeError("probe evaluation needs non-empty train and test splits");
    }
    if (s.train.codes.cols() != s.d * s.k || s.test.codes.cols() != s.d * s.k) {
        throw ShapeError("code width does not match d*k");
    }
    if (s.factors.size() != s.train.factor_count || s.factors.size() != s.test.factor_count) {
        throw ShapeError("factor count mismatch between splits");
    }
}

std::string fmt(double v) { return format_double(v); }

}  // namespace

double average_precision(std::span<const double> scores, const std::vector<bool>& positives) {
    if (scores.size() != positives.size()) {
        throw ShapeError("average_precision: scores and labels differ in length");
    }
    const auto total = static_cast<std::size_t>(std::count(positives.begin(), positives.end(), true));
    if (total == 0) throw UndefinedApError("average_precision: no positive examples");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    // Extended accumulation keeps short rankings correctly rounded (5/6 stays 5/6).
    long double sum = 0.0L;
    std::size_t hits = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (!positives[order[rank]]) continue;
        ++hits;
        sum += static_cast<long double>(hits) / static_cast<long double>(rank + 1);
    }
    return static_cast<double>(sum / static_cast<long double>(total));
}

Matrix fit_probe_scores(const Matrix& train_features, const std::vector<std::int32_t>& train_labels,
                        const Matrix& test_features, std::size_t classes,
                        const ProbeSettings& settings) {
    if (train_features.rows() != train_labels.size()) {
        throw ShapeError("fit_probe_scores: features and labels differ in length");
    }
    if (train_features.cols() != test_features.cols()) {
        throw ShapeError("fit_probe_scores: train and test feature widths differ");
    }
    if (train_features.rows() == 0) throw ProbeError("fit_probe_scores: no training examples");
    const Standardizer standardizer(train_features);
    const Matrix x = standardizer.apply(train_features);
    const std::size_t n = x.rows();
    const std::size_t p = x.cols();

    Matrix targets(n, classes);
    for (std::size_t i = 0; i < n; ++i) {
        const auto l = train_labels[i];
        if (l < 0 || static_cast<std::size_t>(l) >= classes) throw IndexError("probe label out of range");
        targets(i, static_cast<std::size_t>(l)) = 1.0;
    }

    std::mt19937_64 rng(settings.seed);
    std::uniform_real_distribution<double> init(-0.01, 0.01);
    Matrix w(p, classes);
    for (double& v : w.data()) v = init(rng);
    std::vector<double> bias(classes, 0.0);

    const double step = settings.learning_rate / static_cast<double>(n);
    for (std::size_t it = 0; it < settings.iterations; ++it) {
        Matrix residual = matmul(x, w);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < classes; ++c) {
                const double s = residual(i, c) + bias[c];
                residual(i, c) = 1.0 / (1.0 + std::exp(-s)) - targets(i, c);
            }
        const Matrix gw = matmul_tn(x, residual);
        for (std::size_t j = 0; j < w.size(); ++j) w.data()[j] -= step * gw.data()[j];
        for (std::size_t c = 0; c < classes; ++c) {
            double g = 0.0;
            for (std::size_t i = 0; i < n; ++i) g += residual(i, c);
            bias[c] -= step * g;
        }
    }
    if (!all_finite(w.data()) || !all_finite(bias)) throw ProbeError("linear probe diverged");

    Matrix scores = matmul(standardizer.apply(test_features), w);
    for (std::size_t i = 0; i < scores.rows(); ++i)
        for (std::size_t c = 0; c < classes; ++c) scores(i, c) += bias[c];
    return scores;
}

std::vector<std::int32_t> LabelledCodes::factor_labels(std::size_t factor) const {
    if (factor >= factor_count) throw IndexError("factor index out of range");
    std::vector<std::int32_t> out(codes.rows());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = labels[i * factor_count + factor];
    return out;
}

CodeSplits encode_splits(const Checkpoint& ckpt, const FactorDataset& dataset) {
    if (dataset.spec.image != ckpt.image) {
        throw ShapeError("dataset image shape does not match the checkpoint");
    }
    CodeSplits out;
    out.factors = dataset.spec.factors;
    out.d = ckpt.config.d;
    out.k = ckpt.config.k;
    for (const Split s : {Split::train, Split::test}) {
        const auto idx = dataset.indices(s);
        LabelledCodes& dst = s == Split::train ? out.train : out.test;
        dst.factor_count = dataset.factor_count();
        // Without a noise source the β-VAE code is its posterior mean.
        dst.codes = encode(ckpt, gather_rows(dataset.images, idx), nullptr).codes;
        dst.labels.reserve(idx.size() * dst.factor_count);
        for (auto i : idx)
            for (std::size_t f = 0; f < dst.factor_count; ++f) dst.labels.push_back(dataset.label(i, f));
    }
    return out;
}

Matrix partition_features(const Matrix& codes, std::size_t d, std::size_t k,
                          const std::vector<std::size_t>& partitions) {
    if (codes.cols() != d * k) throw ShapeError("partition_features: code width is not d*k");
    Matrix out(codes.rows(), d * partitions.size());
    for (std::size_t n = 0; n < codes.rows(); ++n) {
        std::size_t col = 0;
        for (auto p : partitions) {
            if (p >= k) throw IndexError("partition index out of range");
            for (std::size_t r = 0; r < d; ++r) out(n, col++) = codes(n, r * k + p);
        }
    }
    return out;
}

double MapResult::matched_map() const {
    if (assignment.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t f = 0; f < assignment.size(); ++f) s += table(assignment[f], f);
    return s / static_cast<double>(assignment.size());
}

MapResult map_per_partition(const CodeSplits& splits, std::uint64_t seed) {
    require_splits(splits);
    const std::size_t k = splits.k;
    const std::size_t factors = splits.factors.size();
    MapResult result;
    result.table = Matrix(k, factors);
    for (std::size_t p = 0; p < k; ++p) {
        const Matrix train = partition_features(splits.train.codes, splits.d, k, {p});
        const Matrix test = partition_features(splits.test.codes, splits.d, k, {p});
        for (std::size_t f = 0; f < factors; ++f) {
            const std::size_t classes = splits.factors[f].cardinality;
            // Keyed by factor only, so relabelling partitions permutes the table exactly.
            ProbeSettings settings;
            settings.seed = probe_seed(seed, 0, f);
            const Matrix scores =
                fit_probe_scores(train, splits.train.factor_labels(f), test, classes, settings);
            result.table(p, f) = mean_class_ap(scores, splits.test.factor_labels(f), classes);
        }
    }

    // Greedy matching: highest AP first, ties to the lower partition index,
    // then the lower factor index.
    struct Candidate {
        double ap;
        std::size_t partition;
        std::size_t factor;
    };
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t f = 0; f < factors; ++f) candidates.push_back({result.table(p, f), p, f});
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.ap != b.ap) return a.ap > b.ap;
        if (a.partition != b.partition) return a.partition < b.partition;
        return a.factor < b.factor;
    });
    constexpr std::size_t kUnassigned = static_cast<std::size_t>(-1);
    result.assignment.assign(factors, kUnassigned);
    std::vector<bool> used(k, false);
    for (const auto& c : candidates) {
        if (result.assignment[c.factor] != kUnassigned || used[c.partition]) continue;
        result.assignment[c.factor] = c.partition;
        used[c.partition] = true;
    }
    // More factors than partitions: the leftovers share their best partition.
    for (std::size_t f = 0; f < factors; ++f) {
        if (result.assignment[f] != kUnassigned) continue;
        std::size_t best = 0;
        for (std::size_t p = 1; p < k; ++p)
            if (result.table(p, f) > result.table(best, f)) best = p;
        result.assignment[f] = best;
    }
    return result;
}

MapResult map_per_partition(const Checkpoint& ckpt, const FactorDataset& dataset, std::uint64_t seed) {
    return map_per_partition(encode_splits(ckpt, dataset), seed);
}

double leakage_score(const CodeSplits& splits, const std::vector<std::size_t>& assignment,
                     std::size_t heldout_factor, std::uint64_t seed) {
    require_splits(splits);
    if (heldout_factor >= splits.factors.size()) throw IndexError("held-out factor out of range");
    if (assignment.size() != splits.factors.size()) {
        throw ShapeError("leakage_score: assignment does not cover every factor");
    }
    const std::size_t excluded = assignment[heldout_factor];
    std::vector<std::size_t> kept;
    for (std::size_t p = 0; p < splits.k; ++p)
        if (p != excluded) kept.push_back(p);

    const std::size_t classes = splits.factors[heldout_factor].cardinality;
    ProbeSettings settings;
    settings.seed = probe_seed(seed, 0xffff, heldout_factor);
    const Matrix scores = fit_probe_scores(
        partition_features(splits.train.codes, splits.d, splits.k, kept),
        splits.train.factor_labels(heldout_factor),
        partition_features(splits.test.codes, splits.d, splits.k, kept), classes, settings);

    const auto truth = splits.test.factor_labels(heldout_factor);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        const auto row = scores.row(i);
        const auto best = static_cast<std::int32_t>(std::max_element(row.begin(), row.end()) - row.begin());
        if (best == truth[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.rows());
}

double leakage_score(const Checkpoint& ckpt, const FactorDataset& dataset,
                     std::size_t heldout_factor, std::uint64_t seed) {
    const CodeSplits splits = encode_splits(ckpt, dataset);
    const MapResult map = map_per_partition(splits, seed);
    return leakage_score(splits, map.assignment, heldout_factor, seed);
}

double orth_deviation(const Matrix& codes, std::size_t d, std::size_t k) {
    if (codes.rows() == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t n = 0; n < codes.rows(); ++n) sum += orth_deviation(code_block(codes, n, d, k));
    return sum / static_cast<double>(codes.rows());
}

double orth_deviation(const Checkpoint& ckpt, const FactorDataset& dataset) {
    const auto idx = dataset.indices(Split::test);
    const Matrix codes = encode(ckpt, gather_rows(dataset.images, idx), nullptr).codes;
    return orth_deviation(codes, ckpt.config.d, ckpt.config.k);
}

std::vector<double> slerp_block(std::span<const double> za, std::span<const double> zb, double t) {
    return interpolate_block(za, zb, t, Interpolation::slerp);
}

std::vector<double> interpolate_block(std::span<const double> za, std::span<const double> zb,
                                      double t, Interpolation mode) {
    if (za.size() != zb.size() || za.empty()) throw ShapeError("interpolate_block: size mismatch");
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("interpolate_block: t must lie in [0, 1]");
    double na = 0.0;
    double nb = 0.0;
    double dot = 0.0;
    for (std::size_t i = 0; i < za.size(); ++i) {
        na += za[i] * za[i];
        nb += zb[i] * zb[i];
        dot += za[i] * zb[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na == 0.0 || nb == 0.0) throw DegeneracyError("interpolate_block: zero-norm endpoint");
    if (t == 0.0) return {za.begin(), za.end()};
    if (t == 1.0) return {zb.begin(), zb.end()};

    std::vector<double> out(za.size());
    const double theta = std::acos(std::clamp(dot / (na * nb), -1.0, 1.0));
    if (mode == Interpolation::lerp || theta < kParallelAngle ||
        theta > std::numbers::pi - kParallelAngle) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - t) * za[i] + t * zb[i];
        return out;
    }
    const double radius = (1.0 - t) * na + t * nb;
    const double sin_theta = std::sin(theta);
    const double wa = std::sin((1.0 - t) * theta) / sin_theta / na;
    const double wb = std::sin(t * theta) / sin_theta / nb;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = wa * za[i] + wb * zb[i];
    // Renormalize the slerped direction so the radius is exact.
    double norm = 0.0;
    for (double v : out) norm += v * v;
    const double fix = radius / std::sqrt(norm);
    for (double& v : out) v *= fix;
    return out;
}

std::vector<Image> interpolation_strip(const Checkpoint& ckpt, std::span<const double> image_a,
                                       std::span<const double> image_b, std::size_t block,
                                       std::size_t steps, Interpolation mode) {
    const auto& cfg = ckpt.config;
    if (block >= cfg.k) throw IndexError("interpolation_strip: block out of range");
    if (steps < 2) throw ConfigError("interpolation_strip: need at least 2 steps");
    const std::size_t width = ckpt.input_width();
    if (image_a.size() != width || image_b.size() != width) {
        throw ShapeError("interpolation_strip: image size does not match the model");
    }
    Matrix pair(2, width);
    std::copy(image_a.begin(), image_a.end(), pair.row(0).begin());
    std::copy(image_b.begin(), image_b.end(), pair.row(1).begin());
    const Matrix codes = encode(ckpt, pair, nullptr).codes;
    std::vector<double> a(cfg.d);
    std::vector<double> b(cfg.d);
    for (std::size_t r = 0; r < cfg.d; ++r) {
        a[r] = codes(0, r * cfg.k + block);
        b[r] = codes(1, r * cfg.k + block);
    }
    Matrix stops(steps, cfg.latent_width());
    for (std::size_t s = 0; s < steps; ++s) {
        const double t = static_cast<double>(s) / static_cast<double>(steps - 1);
        const auto v = interpolate_block(a, b, t, mode);
        std::copy(codes.row(0).begin(), codes.row(0).end(), stops.row(s).begin());
        for (std::size_t r = 0; r < cfg.d; ++r) stops(s, r * cfg.k + block) = v[r];
    }
    const Matrix decoded = decode(ckpt, stops);
    std::vector<Image> out;
    for (std::size_t s = 0; s < steps; ++s) out.emplace_back(ckpt.image, decoded.row(s));
    return out;
}

TransferGrid attribute_transfer_grid(const Checkpoint& ckpt, const Matrix& row_images,
                                     const Matrix& col_images, std::size_t block) {
    const auto& cfg = ckpt.config;
    if (block >= cfg.k) throw IndexError("attribute_transfer_grid: block out of range");
    const Matrix row_codes = encode(ckpt, row_images, nullptr).codes;
    const Matrix col_codes = encode(ckpt, col_images, nullptr).codes;
    const std::size_t rows = row_images.rows();
    const std::size_t cols = col_images.rows();

    Matrix mixed(rows * cols, cfg.latent_width());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const auto z = swap_blocks(code_block(col_codes, c, cfg.d, cfg.k),
                                       code_block(row_codes, r, cfg.d, cfg.k), block);
            store_code(mixed, r * cols + c, z.matrix());
        }
    }
    const Matrix decoded = rows * cols > 0 ? decode(ckpt, mixed) : Matrix();

    TransferGrid grid;
    grid.cells.assign(rows + 1, std::vector<Image>(cols + 1));
    for (std::size_t c = 0; c < cols; ++c) grid.cells[0][c + 1] = Image(ckpt.image, col_images.row(c));
    for (std::size_t r = 0; r < rows; ++r) {
        grid.cells[r + 1][0] = Image(ckpt.image, row_images.row(r));
        for (std::size_t c = 0; c < cols; ++c) {
            grid.cells[r + 1][c + 1] = Image(ckpt.image, decoded.row(r * cols + c));
        }
    }
    grid.composite = tile_images(grid.cells, ckpt.image);
    return grid;
}

Pca2d pca_2d(const Matrix& points, std::uint64_t seed) {
    const std::size_t n = points.rows();
    const std::size_t dim = points.cols();
    if (n < 3) throw DegeneracyError("pca_2d: need at least 3 points");
    if (dim < 2) throw ShapeError("pca_2d: need at least 2 dimensions");

    Pca2d out;
    out.mean.assign(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dim; ++j) out.mean[j] += points(i, j);
    for (double& m : out.mean) m /= static_cast<double>(n);
    Matrix centered = points;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dim; ++j) centered(i, j) -= out.mean[j];
    const double spread = frobenius_norm(centered);
    double scale = 0.0;
    for (double v : points.data()) scale = std::max(scale, std::abs(v));
    if (!(spread > 1e-12 * std::max(1.0, scale))) throw DegeneracyError("pca_2d: all points are equal");

    // Scatter matrix; power iteration runs on it directly.
    const Matrix scatter = matmul_tn(centered, centered);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    out.components = Matrix(2, dim);

    for (std::size_t comp = 0; comp < 2; ++comp) {
        Matrix v(dim, 1);
        for (double& x : v.data()) x = normal(rng);
        auto deflate = [&](Matrix& vec) {
            for (std::size_t prev = 0; prev < comp; ++prev) {
                double proj = 0.0;
                for (std::size_t j = 0; j < dim; ++j) proj += out.components(prev, j) * vec(j, 0);
                for (std::size_t j = 0; j < dim; ++j) vec(j, 0) -= proj * out.components(prev, j);
            }
        };
        auto normalize = [](Matrix& vec) {
            const double norm = frobenius_norm(vec);
            if (norm > 0.0) vec *= 1.0 / norm;
            return norm;
        };
        deflate(v);
        normalize(v);
        for (int it = 0; it < 200; ++it) {
            Matrix next = matmul(scatter, v);
            deflate(next);
            deflate(next);
            if (normalize(next) <= 1e-300) break;   // no variance left in this direction
            const double change = frobenius_norm(next - v);
            v = std::move(next);
            if (change < 1e-9) break;
        }
        std::size_t largest = 0;
        for (std::size_t j = 1; j < dim; ++j)
            if (std::abs(v(j, 0)) > std::abs(v(largest, 0))) largest = j;
        if (v(largest, 0) < 0.0) v *= -1.0;
        for (std::size_t j = 0; j < dim; ++j) out.components(comp, j) = v(j, 0);
    }
    out.coords = matmul_nt(centered, out.components);
    return out;
}

double EvalReport::mean_leakage() const {
    if (leakage.empty()) return 0.0;
    return std::accumulate(leakage.begin(), leakage.end(), 0.0) / static_cast<double>(leakage.size());
}

EvalReport evaluate(const Checkpoint& ckpt, const FactorDataset& dataset, std::uint64_t seed) {
    EvalReport report;
    const CodeSplits splits = encode_splits(ckpt, dataset);
    report.map = map_per_partition(splits, seed);
    report.factors = splits.factors;
    for (std::size_t f = 0; f < splits.factors.size(); ++f) {
        report.leakage.push_back(leakage_score(splits, report.map.assignment, f, seed));
    }
    report.mean_orth_deviation = orth_deviation(splits.test.codes, splits.d, splits.k);
    report.seed = seed;
    report.dataset_id = dataset.spec.name;
    return report;
}

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name, std::ios::trunc);
        if (!out) throw IoError("cannot write " + (dir / name).string());
        return out;
    };
    {
        auto out = open("map.csv");
        out << "partition";
        for (const auto& f : report.factors) out << ',' << f.name;
        out << '\n';
        for (std::size_t p = 0; p < report.map.table.rows(); ++p) {
            out << p;
            for (std::size_t f = 0; f < report.factors.size(); ++f) out << ',' << fmt(report.map.table(p, f));
            out << '\n';
        }
    }
    {
        auto out = open("assignment.csv");
        out << "factor,partition,ap\n";
        for (std::size_t f = 0; f < report.factors.size(); ++f) {
            const auto p = report.map.assignment[f];
            out << report.factors[f].name << ',' << p << ',' << fmt(report.map.table(p, f)) << '\n';
        }
    }
    {
        auto out = open("leakage.csv");
        out << "factor,excluded_partition,accuracy,chance\n";
        for (std::size_t f = 0; f < report.factors.size(); ++f) {
            out << report.factors[f].name << ',' << report.map.assignment[f] << ','
                << fmt(report.leakage[f]) << ','
                << fmt(1.0 / static_cast<double>(report.factors[f].cardinality)) << '\n';
        }
    }
    {
        auto out = open("summary.txt");
        out << "checkpoint: " << report.checkpoint_id << '\n'
            << "dataset: " << report.dataset_id << '\n'
            << "seed: " << report.seed << '\n'
            << "matched_map: " << fmt(report.map.matched_map()) << '\n'
            << "mean_leakage_accuracy: " << fmt(report.mean_leakage()) << '\n'
            << "mean_orth_deviation: " << fmt(report.mean_orth_deviation) << '\n';
    }
}

}  // namespace prose
