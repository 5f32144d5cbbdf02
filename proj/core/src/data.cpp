#include "prose/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "prose/error.hpp"
#include "prose/keyvalue.hpp"
#include "prose/tensor_io.hpp"

namespace prose {

namespace {

constexpr std::size_t kGlyph = 4;

// 4×4 glyph bitmaps, row by row: filled square, diagonal cross, diamond.
constexpr std::array<std::array<const char*, kGlyph>, 3> kGlyphs{{
    {"1111", "1111", "1111", "1111"},
    {"1001", "0110", "0110", "1001"},
    {"0110", "1111", "1111", "0110"},
}};

constexpr std::array<const char*, 4> kQuadsFactors{"shape", "color", "x", "y"};

constexpr char kDatasetMagic[] = "PROSEDAT";
constexpr std::uint32_t kDatasetVersion = 1;

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                        const std::string& what) {
    if (bytes.size() < offset + 4) throw TruncationError(what + ": truncated IDX header");
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void check_quads_layout(const FactorSpec& spec) {
    if (spec.factors.size() != kQuadsFactors.size()) {
        throw RenderError("quads renderer needs factors shape, color, x, y");
    }
    for (std::size_t i = 0; i < kQuadsFactors.size(); ++i) {
        if (spec.factors[i].name != kQuadsFactors[i]) {
            throw RenderError("quads renderer: factor " + std::to_string(i) + " must be '" +
                              kQuadsFactors[i] + "', got '" + spec.factors[i].name + "'");
        }
    }
    if (spec.factors[0].cardinality > kGlyphs.size()) {
        throw RenderError("quads renderer knows only " + std::to_string(kGlyphs.size()) + " shapes");
    }
    if (spec.factors[1].cardinality > spec.image.channels) {
        throw RenderError("image has fewer channels than colors");
    }
    if (spec.image.width < kGlyph * spec.factors[2].cardinality ||
        spec.image.height < kGlyph * spec.factors[3].cardinality) {
        throw RenderError("image " + std::to_string(spec.image.width) + "x" +
                          std::to_string(spec.image.height) + " too small for the position grid");
    }
}

}  // namespace

FactorSpec FactorSpec::quads() {
    FactorSpec spec;
    spec.name = "quads";
    spec.factors = {{"shape", 3}, {"color", 3}, {"x", 4}, {"y", 4}};
    spec.image = {16, 16, 3};
    spec.noise_sigma = 0.02;
    spec.replicas = 40;
    spec.train_fraction = 0.8;
    return spec;
}

std::size_t FactorSpec::combinations() const noexcept {
    std::size_t n = 1;
    for (const auto& f : factors) n *= f.cardinality;
    return n;
}

void FactorSpec::validate() const {
    if (factors.empty()) throw ConfigError("FactorSpec: no factors");
    for (const auto& f : factors) {
        if (f.cardinality < 2) {
            throw ConfigError("FactorSpec: factor '" + f.name + "' needs cardinality >= 2");
        }
        if (f.name.empty() || f.name.find_first_of(":,= \t\n") != std::string::npos) {
            throw ConfigError("FactorSpec: invalid factor name '" + f.name + "'");
        }
    }
    if (image.pixels() == 0) throw ConfigError("FactorSpec: empty image shape");
    if (!(noise_sigma >= 0.0)) throw ConfigError("FactorSpec: negative noise");
    if (replicas == 0) throw ConfigError("FactorSpec: replicas must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("FactorSpec: train_fraction must lie in (0, 1)");
    }
}

std::string FactorSpec::to_text() const {
    std::string factor_list;
    for (const auto& f : factors) {
        if (!factor_list.empty()) factor_list += ",";
        factor_list += f.name + ":" + std::to_string(f.cardinality);
    }
    return format_key_values({
        {"name", name},
        {"factors", factor_list},
        {"height", std::to_string(image.height)},
        {"width", std::to_string(image.width)},
        {"channels", std::to_string(image.channels)},
        {"noise_sigma", format_double(noise_sigma)},
        {"replicas", std::to_string(replicas)},
        {"train_fraction", format_double(train_fraction)},
    });
}

FactorSpec FactorSpec::from_text(const std::string& text) {
    FactorSpec spec;
    spec.factors.clear();
    for (const auto& [key, value] : parse_key_values(text)) {
        if (key == "name") {
            spec.name = value;
        } else if (key == "factors") {
            std::size_t start = 0;
            while (start <= value.size()) {
                const auto comma = std::min(value.find(',', start), value.size());
                const std::string item = value.substr(start, comma - start);
                const auto colon = item.find(':');
                if (colon == std::string::npos) throw ConfigError("factors: expected name:cardinality");
                spec.factors.push_back(
                    {item.substr(0, colon), parse_u64("factors", item.substr(colon + 1))});
                start = comma + 1;
            }
        } else if (key == "height") {
            spec.image.height = parse_u64(key, value);
        } else if (key == "width") {
            spec.image.width = parse_u64(key, value);
        } else if (key == "channels") {
            spec.image.channels = parse_u64(key, value);
        } else if (key == "noise_sigma") {
            spec.noise_sigma = parse_double(key, value);
        } else if (key == "replicas") {
            spec.replicas = parse_u64(key, value);
        } else if (key == "train_fraction") {
            spec.train_fraction = parse_double(key, value);
        } else {
            throw ConfigError("FactorSpec: unknown key '" + key + "'");
        }
    }
    spec.validate();
    return spec;
}

std::vector<std::size_t> FactorDataset::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == s) out.push_back(i);
    return out;
}

void FactorDataset::validate() const {
    spec.validate();
    const std::size_t n = images.rows();
    if (images.cols() != spec.image.pixels()) {
        throw ShapeError("FactorDataset: image width does not match its factor spec");
    }
    if (labels.size() != n * spec.factors.size() || split.size() != n) {
        throw ShapeError("FactorDataset: images, labels and split tags are misaligned");
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t f = 0; f < spec.factors.size(); ++f) {
            const auto l = label(i, f);
            if (l < 0 || static_cast<std::size_t>(l) >= spec.factors[f].cardinality) {
                throw FormatError("FactorDataset: label out of range at example " +
                                  std::to_string(i));
            }
        }
    }
    for (double v : images.data()) {
        if (!(v >= 0.0 && v <= 1.0)) throw FormatError("FactorDataset: pixel outside [0, 1]");
    }
}

Matrix render_quads(const FactorSpec& spec, const std::vector<std::int32_t>& labels) {
    check_quads_layout(spec);
    if (labels.size() != spec.factors.size()) throw ShapeError("render_quads: wrong label count");
    for (std::size_t f = 0; f < labels.size(); ++f) {
        if (labels[f] < 0 || static_cast<std::size_t>(labels[f]) >= spec.factors[f].cardinality) {
            throw IndexError("render_quads: label out of range for factor " + spec.factors[f].name);
        }
    }
    const auto& img = spec.image;
    const std::size_t cell_w = img.width / spec.factors[2].cardinality;
    const std::size_t cell_h = img.height / spec.factors[3].cardinality;
    const auto& glyph = kGlyphs[static_cast<std::size_t>(labels[0])];
    const auto channel = static_cast<std::size_t>(labels[1]);
    const std::size_t x0 = static_cast<std::size_t>(labels[2]) * cell_w;
    const std::size_t y0 = static_cast<std::size_t>(labels[3]) * cell_h;

    Matrix out(1, img.pixels());
    for (std::size_t gy = 0; gy < kGlyph; ++gy) {
        for (std::size_t gx = 0; gx < kGlyph; ++gx) {
            if (glyph[gy][gx] != '1') continue;
            const std::size_t y = y0 + gy;
            const std::size_t x = x0 + gx;
            out(0, (y * img.width + x) * img.channels + channel) = 1.0;
        }
    }
    return out;
}

FactorDataset generate_toy(const FactorSpec& spec, std::uint64_t seed) {
    spec.validate();
    check_quads_layout(spec);

    FactorDataset ds;
    ds.spec = spec;
    const std::size_t combos = spec.combinations();
    const std::size_t n = combos * spec.replicas;
    const std::size_t pixels = spec.image.pixels();
    const auto train_copies = static_cast<std::size_t>(
        std::llround(spec.train_fraction * static_cast<double>(spec.replicas)));
    if (train_copies == 0 || train_copies >= spec.replicas) {
        throw ConfigError("generate_toy: replicas too few to place every combination in both splits");
    }

    ds.images = Matrix(n, pixels);
    ds.labels.reserve(n * spec.factors.size());
    ds.split.reserve(n);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<std::int32_t> labels(spec.factors.size());
    std::size_t row = 0;
    for (std::size_t combo = 0; combo < combos; ++combo) {
        // Mixed-radix decode with the last factor varying fastest.
        std::size_t rest = combo;
        for (std::size_t f = spec.factors.size(); f-- > 0;) {
            labels[f] = static_cast<std::int32_t>(rest % spec.factors[f].cardinality);
            rest /= spec.factors[f].cardinality;
        }
        const Matrix clean = render_quads(spec, labels);
        for (std::size_t copy = 0; copy < spec.replicas; ++copy, ++row) {
            auto dst = ds.images.row(row);
            const auto src = clean.row(0);
            for (std::size_t p = 0; p < pixels; ++p) {
                double v = src[p];
                if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(rng);
                dst[p] = std::clamp(v, 0.0, 1.0);
            }
            ds.labels.insert(ds.labels.end(), labels.begin(), labels.end());
            ds.split.push_back(copy < train_copies ? Split::train : Split::test);
        }
    }
    return ds;
}

FactorDataset load_idx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path) {
    const auto img = read_file_bytes(images_path);
    const auto lab = read_file_bytes(labels_path);

    if (read_be32(img, 0, "images") != kIdxImagesMagic) {
        throw MagicError("images: bad IDX magic (expected 0x00000803)");
    }
    if (read_be32(lab, 0, "labels") != kIdxLabelsMagic) {
        throw MagicError("labels: bad IDX magic (expected 0x00000801)");
    }
    const std::uint32_t count = read_be32(img, 4, "images");
    const std::uint32_t rows = read_be32(img, 8, "images");
    const std::uint32_t cols = read_be32(img, 12, "images");
    const std::uint32_t label_count = read_be32(lab, 4, "labels");
    if (rows == 0 || cols == 0) throw DimensionError("images: zero-sized image dimensions");
    if (count != label_count) {
        throw CountMismatchError("image count " + std::to_string(count) + " != label count " +
                                 std::to_string(label_count));
    }
    const std::size_t pixels = std::size_t{rows} * cols;
    const std::size_t image_bytes = 16 + std::size_t{count} * pixels;
    if (img.size() < image_bytes) throw TruncationError("images: payload truncated");
    if (img.size() > image_bytes) throw DimensionError("images: payload longer than declared dims");
    if (lab.size() < 8 + std::size_t{count}) throw TruncationError("labels: payload truncated");
    if (lab.size() > 8 + std::size_t{count}) throw DimensionError("labels: payload longer than declared count");

    FactorDataset ds;
    ds.spec.name = "mnist";
    ds.spec.factors = {{"digit", 10}};
    ds.spec.image = {rows, cols, 1};
    ds.spec.noise_sigma = 0.0;
    ds.spec.replicas = 1;
    ds.images = Matrix(count, pixels);
    auto dst = ds.images.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<double>(img[16 + i]) / 255.0;
    ds.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint8_t l = lab[8 + i];
        if (l >= 10) throw FormatError("labels: digit label " + std::to_string(l) + " out of range");
        ds.labels[i] = l;
    }
    ds.split.assign(count, Split::train);
    return ds;
}

void split_dataset(FactorDataset& dataset, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("split_dataset: train_fraction must lie in (0, 1)");
    }
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(order.size())));
    for (std::size_t i = 0; i < order.size(); ++i) {
        dataset.split[order[i]] = i < train ? Split::train : Split::test;
    }
    dataset.spec.train_fraction = train_fraction;
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= m.rows()) throw IndexError("gather_rows: row index out of range");
        std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
    }
    return out;
}

void save_dataset(const FactorDataset& dataset, const std::filesystem::path& path) {
    dataset.validate();
    const auto n = static_cast<std::uint32_t>(dataset.size());
    const auto& img = dataset.spec.image;
    TensorFile file;
    file.text = dataset.spec.to_text();
    file.tensors.push_back({"images",
                            {n, static_cast<std::uint32_t>(img.height),
                             static_cast<std::uint32_t>(img.width),
                             static_cast<std::uint32_t>(img.channels)},
                            {dataset.images.data().begin(), dataset.images.data().end()}});
    file.tensors.push_back({"labels",
                            {n, static_cast<std::uint32_t>(dataset.factor_count())},
                            {dataset.labels.begin(), dataset.labels.end()}});
    std::vector<double> split(dataset.split.size());
    std::transform(dataset.split.begin(), dataset.split.end(), split.begin(),
                   [](Split s) { return static_cast<double>(s); });
    file.tensors.push_back({"split", {n}, std::move(split)});
    write_file_bytes(path, encode_tensor_file(kDatasetMagic, kDatasetVersion, file));
}

FactorDataset load_dataset(const std::filesystem::path& path) {
    const TensorFile file = decode_tensor_file(kDatasetMagic, kDatasetVersion, read_file_bytes(path));
    FactorDataset ds;
    ds.spec = FactorSpec::from_text(file.text);
    const auto& images = file.find("images");
    const auto& labels = file.find("labels");
    const auto& split = file.find("split");
    const auto& img = ds.spec.image;
    if (images.dims.size() != 4 || images.dims[1] != img.height || images.dims[2] != img.width ||
        images.dims[3] != img.channels) {
        throw ShapeTableError("dataset: images tensor does not match the spec's image shape");
    }
    const std::size_t n = images.dims[0];
    if (labels.dims != std::vector<std::uint32_t>{static_cast<std::uint32_t>(n),
                                                  static_cast<std::uint32_t>(ds.spec.factors.size())} ||
        split.dims != std::vector<std::uint32_t>{static_cast<std::uint32_t>(n)}) {
        throw ShapeTableError("dataset: label or split tensor shape is inconsistent");
    }
    ds.images = Matrix(n, img.pixels(), images.values);
    ds.labels.reserve(labels.values.size());
    for (double v : labels.values) ds.labels.push_back(static_cast<std::int32_t>(v));
    for (double v : split.values) {
        if (v != 0.0 && v != 1.0) throw ShapeTableError("dataset: bad split tag");
        ds.split.push_back(v == 0.0 ? Split::train : Split::test);
    }
    ds.validate();
    return ds;
}

}  // namespace prose
