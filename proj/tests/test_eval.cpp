#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "prose/disentangle.hpp"
#include "prose/error.hpp"
#include "prose/eval.hpp"
#include "prose/image_io.hpp"
#include "test_support.hpp"

using namespace prose;
using prose::testing::gaussian_matrix;

namespace {

// Codes for n examples with one factor per column block, the rest noise.
// `place(f)` names the partition carrying factor f one-hot, or k for none.
struct Fixture {
    std::size_t d = 3;
    std::size_t k = 3;
    std::vector<std::size_t> cardinality{3, 2};
};

LabelledCodes fixture_codes(const Fixture& fx, std::size_t n, const std::vector<std::size_t>& place,
                            std::mt19937_64& rng) {
    LabelledCodes out;
    out.factor_count = fx.cardinality.size();
    out.codes = gaussian_matrix(n, fx.d * fx.k, rng);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t f = 0; f < fx.cardinality.size(); ++f) {
            const auto label = static_cast<std::int32_t>(rng() % fx.cardinality[f]);
            out.labels.push_back(label);
            const std::size_t p = place[f];
            if (p >= fx.k) continue;
            for (std::size_t r = 0; r < fx.d; ++r)
                out.codes(i, r * fx.k + p) = static_cast<std::int32_t>(r) == label ? 1.0 : 0.0;
        }
    }
    return out;
}

CodeSplits fixture_splits(const Fixture& fx, const std::vector<std::size_t>& place, std::uint64_t seed,
                          std::size_t n_train = 600, std::size_t n_test = 400) {
    std::mt19937_64 rng(seed);
    CodeSplits s;
    s.d = fx.d;
    s.k = fx.k;
    for (std::size_t f = 0; f < fx.cardinality.size(); ++f)
        s.factors.push_back(Factor{"f" + std::to_string(f), fx.cardinality[f]});
    s.train = fixture_codes(fx, n_train, place, rng);
    s.test = fixture_codes(fx, n_test, place, rng);
    return s;
}

// Moves partition p of every code to position perm[p].
Matrix permute_partitions(const Matrix& codes, std::size_t d, std::size_t k,
                          const std::vector<std::size_t>& perm) {
    Matrix out(codes.rows(), codes.cols());
    for (std::size_t i = 0; i < codes.rows(); ++i)
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t p = 0; p < k; ++p) out(i, r * k + perm[p]) = codes(i, r * k + p);
    return out;
}

std::vector<double> row_of(const Matrix& m, std::size_t r) {
    const auto row = m.row(r);
    return {row.begin(), row.end()};
}

double norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

std::vector<double> unit_gaussian(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    std::vector<double> v(n);
    for (double& x : v) x = g(rng);
    const double len = norm(v);
    for (double& x : v) x /= len;
    return v;
}

}  // namespace

TEST_CASE("average_precision golden values") {
    const std::vector<double> perfect{0.9, 0.8, 0.1, 0.0};
    CHECK(average_precision(perfect, {true, true, false, false}) == 1.0);
    const std::vector<double> s{0.9, 0.8, 0.7};
    CHECK(average_precision(s, {true, false, true}) == 5.0 / 6.0);
    for (std::size_t n : {1u, 2u, 7u, 50u}) {
        std::vector<double> scores(n);
        std::vector<bool> pos(n, false);
        for (std::size_t i = 0; i < n; ++i) scores[i] = static_cast<double>(n - i);
        pos[n - 1] = true;
        CHECK(average_precision(scores, pos) == 1.0 / static_cast<double>(n));
    }
}

TEST_CASE("average_precision ties keep original order and errors are distinct") {
    const std::vector<double> tied{0.5, 0.5};
    CHECK(average_precision(tied, {false, true}) == 0.5);
    CHECK(average_precision(tied, {true, false}) == 1.0);
    CHECK_THROWS_AS(average_precision(tied, {false, false}), UndefinedApError);
    CHECK_THROWS_AS(average_precision(tied, {true}), ShapeError);
}

TEST_CASE("average_precision lies in [0,1] and is 1 exactly for separated rankings") {
    std::mt19937_64 rng(60);
    std::uniform_real_distribution<double> u;
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> scores(12);
        std::vector<bool> pos(12);
        bool any = false;
        for (std::size_t i = 0; i < 12; ++i) {
            scores[i] = std::floor(u(rng) * 6.0);
            pos[i] = u(rng) < 0.4;
            any = any || pos[i];
        }
        if (!any) pos[0] = true;
        const double ap = average_precision(scores, pos);
        CHECK(ap >= 0.0);
        CHECK(ap <= 1.0);
        // Separated under the tie-break: in rank order no positive follows a negative.
        std::vector<std::size_t> order(12);
        for (std::size_t i = 0; i < 12; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
        bool seen_negative = false, separated = true;
        for (std::size_t i : order) {
            if (!pos[i]) seen_negative = true;
            else if (seen_negative) separated = false;
        }
        CHECK((ap == 1.0) == separated);
    }
}

TEST_CASE("map: a factor embedded one-hot in a partition is found there with AP 1") {
    const Fixture fx;
    const CodeSplits s = fixture_splits(fx, {1, 2}, 61);
    const MapResult r = map_per_partition(s, 5);
    CHECK(r.table.rows() == 3);
    CHECK(r.table.cols() == 2);
    CHECK(r.table(1, 0) == 1.0);
    CHECK(r.table(2, 1) == 1.0);
    CHECK(r.assignment == std::vector<std::size_t>{1, 2});
    CHECK(r.matched_map() == 1.0);
    for (double v : r.table.data()) CHECK((v >= 0.0 && v <= 1.0));

    const MapResult again = map_per_partition(s, 5);
    CHECK(again.table == r.table);
}

TEST_CASE("map: random codes give chance-level AP for a balanced binary factor") {
    Fixture fx;
    fx.cardinality = {2};
    const CodeSplits s = fixture_splits(fx, {3}, 62, 1000, 1000);
    const MapResult r = map_per_partition(s, 6);
    for (std::size_t p = 0; p < 3; ++p) CHECK(std::abs(r.table(p, 0) - 0.5) <= 0.1);
}

TEST_CASE("map: permuting partitions permutes the table rows") {
    const Fixture fx;
    const CodeSplits s = fixture_splits(fx, {0, 2}, 63);
    const std::vector<std::size_t> perm{2, 0, 1};
    CodeSplits p = s;
    p.train.codes = permute_partitions(s.train.codes, fx.d, fx.k, perm);
    p.test.codes = permute_partitions(s.test.codes, fx.d, fx.k, perm);
    const MapResult a = map_per_partition(s, 7);
    const MapResult b = map_per_partition(p, 7);
    for (std::size_t part = 0; part < fx.k; ++part)
        for (std::size_t f = 0; f < 2; ++f) CHECK(b.table(perm[part], f) == a.table(part, f));
    for (std::size_t f = 0; f < 2; ++f) {
        CHECK(b.assignment[f] == perm[a.assignment[f]]);
        CHECK(b.table(b.assignment[f], f) == a.table(a.assignment[f], f));
    }
}

TEST_CASE("leakage: total and absent leakage") {
    const Fixture fx;
    // Factor 0 copied into every partition: the remaining partitions still predict it.
    CodeSplits everywhere = fixture_splits(fx, {0, 3}, 64);
    for (LabelledCodes* lc : {&everywhere.train, &everywhere.test})
        for (std::size_t i = 0; i < lc->codes.rows(); ++i)
            for (std::size_t p = 0; p < fx.k; ++p)
                for (std::size_t r = 0; r < fx.d; ++r)
                    lc->codes(i, r * fx.k + p) = lc->labels[i * 2] == static_cast<std::int32_t>(r) ? 1.0 : 0.0;
    CHECK(leakage_score(everywhere, {0, 1}, 0, 8) >= 0.99);

    // Factor 0 lives only in partition 0, which is excluded.
    const CodeSplits isolated = fixture_splits(fx, {0, 3}, 65, 1000, 1000);
    CHECK(std::abs(leakage_score(isolated, {0, 1}, 0, 8) - 1.0 / 3.0) <= 0.1);
}

TEST_CASE("leakage ignores any rotation of the excluded partition") {
    const Fixture fx;
    const CodeSplits s = fixture_splits(fx, {1, 2}, 66);
    std::mt19937_64 rng(67);
    const Matrix q = qr_orthonormalize(gaussian_matrix(3, 3, rng));
    CodeSplits rotated = s;
    for (LabelledCodes* lc : {&rotated.train, &rotated.test})
        for (std::size_t i = 0; i < lc->codes.rows(); ++i) {
            std::vector<double> col(3);
            for (std::size_t r = 0; r < 3; ++r) col[r] = lc->codes(i, r * 3 + 1);
            for (std::size_t r = 0; r < 3; ++r) {
                double v = 0.0;
                for (std::size_t c = 0; c < 3; ++c) v += q(r, c) * col[c];
                lc->codes(i, r * 3 + 1) = v;
            }
        }
    CHECK(leakage_score(rotated, {1, 2}, 0, 9) == leakage_score(s, {1, 2}, 0, 9));
}

TEST_CASE("orth_deviation examples") {
    std::mt19937_64 rng(68);
    const std::size_t d = 5, k = 3;
    Matrix codes(4, d * k);
    Matrix doubled(4, d * k);
    for (std::size_t i = 0; i < 4; ++i) {
        const Matrix q = qr_orthonormalize(gaussian_matrix(d, k, rng));
        Matrix q2 = q;
        q2 *= 2.0;
        store_code(codes, i, q);
        store_code(doubled, i, q2);
    }
    CHECK(orth_deviation(codes, d, k) <= 1e-12);
    CHECK(std::abs(orth_deviation(doubled, d, k) - 3.0 * std::sqrt(3.0)) <= 1e-12);
}

TEST_CASE("slerp examples") {
    const std::vector<double> a{3.0, 0.0};
    const std::vector<double> b{0.0, 0.5};
    CHECK(slerp_block(a, b, 0.0) == a);
    CHECK(slerp_block(a, b, 1.0) == b);

    const std::vector<double> e1{1.0, 0.0};
    const std::vector<double> e2{0.0, 1.0};
    const auto mid = slerp_block(e1, e2, 0.5);
    CHECK(std::abs(mid[0] - 1.0 / std::numbers::sqrt2) <= 1e-15);
    CHECK(std::abs(mid[1] - 1.0 / std::numbers::sqrt2) <= 1e-15);

    const auto radius = slerp_block(a, b, 0.25);
    CHECK(std::abs(norm(radius) - (0.75 * 3.0 + 0.25 * 0.5)) <= 1e-12);

    const std::vector<double> anti{-1.0, 0.0};
    CHECK(interpolate_block(e1, anti, 0.25, Interpolation::slerp) ==
          interpolate_block(e1, anti, 0.25, Interpolation::lerp));
    CHECK(interpolate_block(e1, e2, 0.5, Interpolation::lerp) == std::vector<double>{0.5, 0.5});

    const std::vector<double> zero{0.0, 0.0};
    CHECK_THROWS_AS(slerp_block(zero, e1, 0.5), DegeneracyError);
    CHECK_THROWS_AS(slerp_block(e1, e2, 1.5), ConfigError);
}

TEST_CASE("slerp keeps unit endpoints on the sphere") {
    std::mt19937_64 rng(69);
    std::uniform_real_distribution<double> t(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto a = unit_gaussian(6, rng);
        const auto b = unit_gaussian(6, rng);
        worst = std::max(worst, std::abs(norm(slerp_block(a, b, t(rng))) - 1.0));
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("attribute transfer grid layout and self-swap diagonal") {
    ProseConfig cfg;
    cfg.k = 2;
    cfg.d = 2;
    const ProseModel model = make_model(cfg, ImageShape{2, 3, 3});
    std::mt19937_64 rng(70);
    std::uniform_real_distribution<double> u;
    Matrix images(3, 18);
    for (double& v : images.data()) v = u(rng);

    const TransferGrid g = attribute_transfer_grid(model, images, images, 1);
    REQUIRE(g.cells.size() == 4);
    for (const auto& row : g.cells) CHECK(row.size() == 4);
    CHECK(g.composite.shape == ImageShape{8, 12, 3});
    const Matrix recon = decode(model, encode(model, images, nullptr).codes);
    for (std::size_t r = 0; r < 3; ++r) {
        const auto diag = g.cells[r + 1][r + 1].pixels;
        const auto want = row_of(recon, r);
        REQUIRE(diag.size() == want.size());
        for (std::size_t i = 0; i < diag.size(); ++i) CHECK(std::abs(diag[i] - want[i]) <= 1e-12);
        CHECK(g.cells[r + 1][0].pixels == row_of(images, r));
        CHECK(g.cells[0][r + 1].pixels == row_of(images, r));
    }
    CHECK_THROWS_AS(attribute_transfer_grid(model, images, images, 2), IndexError);
}

TEST_CASE("interpolation strip endpoints") {
    ProseConfig cfg;
    cfg.k = 2;
    cfg.d = 2;
    const ProseModel model = make_model(cfg, ImageShape{2, 2, 1});
    const std::vector<double> a{0.1, 0.9, 0.4, 0.2};
    const std::vector<double> b{0.8, 0.3, 0.6, 0.7};
    const auto strip = interpolation_strip(model, a, b, 0, 5, Interpolation::slerp);
    REQUIRE(strip.size() == 5);
    Matrix xa(1, 4);
    for (std::size_t i = 0; i < 4; ++i) xa(0, i) = a[i];
    CHECK(strip.front().pixels == row_of(decode(model, encode(model, xa, nullptr).codes), 0));
}

TEST_CASE("pca_2d examples") {
    std::mt19937_64 rng(71);
    // Rank-2 data in 10 dimensions.
    const Matrix basis = qr_orthonormalize(gaussian_matrix(10, 2, rng));
    const Matrix weights = gaussian_matrix(50, 2, rng, 3.0);
    Matrix points = matmul_nt(weights, basis);
    for (std::size_t i = 0; i < 50; ++i)
        for (std::size_t j = 0; j < 10; ++j) points(i, j) += 1.5;
    const Pca2d p = pca_2d(points);
    Matrix rebuilt = matmul(p.coords, p.components);
    double worst = 0.0;
    for (std::size_t i = 0; i < 50; ++i)
        for (std::size_t j = 0; j < 10; ++j) worst = std::max(worst, std::abs(rebuilt(i, j) + p.mean[j] - points(i, j)));
    CHECK(worst <= 1e-8);

    Matrix twice(100, 10);
    for (std::size_t i = 0; i < 100; ++i)
        for (std::size_t j = 0; j < 10; ++j) twice(i, j) = points(i % 50, j);
    const Pca2d q = pca_2d(twice);
    CHECK(frobenius_norm(q.components - p.components) <= 1e-9);

    const Matrix cloud = gaussian_matrix(5000, 2, rng);
    const Pca2d c = pca_2d(cloud);
    double v0 = 0.0, v1 = 0.0;
    for (std::size_t i = 0; i < 5000; ++i) {
        v0 += c.coords(i, 0) * c.coords(i, 0);
        v1 += c.coords(i, 1) * c.coords(i, 1);
    }
    CHECK(v1 / v0 >= 0.8);
    CHECK(v1 / v0 <= 1.0 + 1e-12);

    CHECK_THROWS_AS(pca_2d(Matrix(5, 3, 2.0)), DegeneracyError);
}

TEST_CASE("image encoding headers") {
    Image rgb(ImageShape{1, 2, 3});
    rgb.at(0, 1, 0) = 1.0;
    rgb.at(0, 1, 2) = 0.5;
    const auto bytes = encode_pnm(rgb);
    const std::string header = "P6\n2 1\n255\n";
    REQUIRE(bytes.size() == header.size() + 6);
    CHECK(std::string(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(header.size())) == header);
    CHECK(bytes[header.size() + 3] == 255);
    CHECK(bytes[header.size() + 5] == 128);

    Image gray(ImageShape{2, 1, 1});
    const auto g = encode_pnm(gray);
    CHECK(std::string(g.begin(), g.begin() + 3) == "P5\n");
}
