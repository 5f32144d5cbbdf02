// Acceptance run: one PASS/FAIL line per criterion, measured values inline.
// Exits non-zero if any criterion fails, except those named with
// --known-unmet (comma separated); those still print FAIL but are
// documented in the README rather than gating the build.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "prose/checkpoint.hpp"
#include "prose/data.hpp"
#include "prose/disentangle.hpp"
#include "prose/error.hpp"
#include "prose/eval.hpp"
#include "prose/manifold.hpp"
#include "prose/nn.hpp"
#include "prose/tensor_io.hpp"
#include "test_support.hpp"

using namespace prose;
using prose::testing::finite_difference;
using prose::testing::gaussian_matrix;
using prose::testing::gram_distance_to_identity;
using prose::testing::relative_error;
namespace fs = std::filesystem;

namespace {

int failures = 0;
int known_failures = 0;
std::set<int> known_unmet;

void report(int id, bool pass, const std::string& detail) {
    const bool known = !pass && known_unmet.count(id) > 0;
    std::printf("criterion %2d %s  %s%s\n", id, pass ? "PASS" : "FAIL", detail.c_str(),
                known ? "  [known unmet, see README]" : "");
    std::fflush(stdout);
    if (known) ++known_failures;
    else if (!pass) ++failures;
}

void info(const std::string& detail) {
    std::printf("info           %s\n", detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Runs one criterion; an exception counts as a failure with its message.
void guarded(int id, const std::function<void()>& body) {
    try {
        body();
    } catch (const std::exception& e) {
        report(id, false, std::string("threw: ") + e.what());
    }
}

void criterion_1_2() {
    std::mt19937_64 rng(101);
    const CayleyConfig cfg{0.1, 1e-10};
    const auto t0 = std::chrono::steady_clock::now();
    double worst_orth = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const LatentBlocks z(qr_orthonormalize(gaussian_matrix(64, 8, rng)));
        const LatentBlocks next = cayley_step(z, gaussian_matrix(64, 8, rng), cfg);
        worst_orth = std::max(worst_orth, gram_distance_to_identity(next.matrix()));
    }
    const double t1 = seconds_since(t0);
    report(1, worst_orth <= 1e-10 && t1 < 10.0,
           fmt("max ||Z'^T Z' - I||_F = %.3e over 1000 trials (tol 1e-10), %.2f s (limit 10 s)", worst_orth, t1));

    double worst_gram = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const LatentBlocks z(gaussian_matrix(64, 8, rng));
        const LatentBlocks next = cayley_step(z, gaussian_matrix(64, 8, rng), cfg);
        worst_gram = std::max(worst_gram, frobenius_norm(matmul_tn(next.matrix(), next.matrix()) -
                                                         matmul_tn(z.matrix(), z.matrix())));
    }
    report(2, worst_gram <= 1e-10,
           fmt("max ||Z'^T Z' - Z^T Z||_F = %.3e over 1000 non-orthonormal trials (tol 1e-10)", worst_gram));
}

void criterion_3() {
    std::mt19937_64 rng(103);
    std::uniform_int_distribution<std::size_t> kd(1, 8);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = kd(rng);
        std::uniform_int_distribution<std::size_t> dd(k, 16);
        const Matrix z = gaussian_matrix(dd(rng), k, rng, 0.5);
        const Matrix fd =
            finite_difference([](const Matrix& m) { return orth_penalty(LatentBlocks(m)); }, z, 1e-5);
        worst = std::max(worst, relative_error(orth_penalty_grad(LatentBlocks(z)), fd));
    }
    report(3, worst <= 1e-6, fmt("max relative error %.3e over 100 instances (tol 1e-6)", worst));
}

void criterion_4() {
    std::mt19937_64 rng(104);
    std::uniform_int_distribution<std::size_t> kd(1, 3);
    const CayleyConfig cfg{0.1, 1e-10};
    double worst_z = 0.0, worst_j = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t k = kd(rng);
        std::uniform_int_distribution<std::size_t> dd(std::max<std::size_t>(k, 2), 8);
        const std::size_t d = dd(rng);
        const Matrix z = gaussian_matrix(d, k, rng);
        const Matrix j = gaussian_matrix(d, k, rng);
        const Matrix up = gaussian_matrix(d, k, rng);
        const CayleyVjp vjp = cayley_vjp(LatentBlocks(z), j, cfg, up);
        const Matrix fd_z = finite_difference(
            [&](const Matrix& m) { return frobenius_dot(up, cayley_step(LatentBlocks(m), j, cfg).matrix()); }, z,
            1e-6);
        const Matrix fd_j = finite_difference(
            [&](const Matrix& m) { return frobenius_dot(up, cayley_step(LatentBlocks(z), m, cfg).matrix()); }, j,
            1e-6);
        worst_z = std::max(worst_z, relative_error(vjp.grad_wrt_z, fd_z));
        worst_j = std::max(worst_j, relative_error(vjp.grad_wrt_j, fd_j));
    }
    report(4, worst_z <= 1e-5 && worst_j <= 1e-5,
           fmt("max relative error dZ %.3e, dJ %.3e over 50 instances (tol 1e-5)", worst_z, worst_j));
}

void criterion_5() {
    std::mt19937_64 rng(105);
    double lo = 1e300, hi = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const LatentBlocks z(qr_orthonormalize(gaussian_matrix(8, 3, rng)));
        const Matrix j = gaussian_matrix(8, 3, rng);
        std::vector<double> moved;
        for (double tau : {1e-1, 1e-2, 1e-3})
            moved.push_back(frobenius_norm(cayley_step(z, j, {tau, 1e-10}).matrix() - z.matrix()));
        for (std::size_t i = 0; i + 1 < moved.size(); ++i) {
            lo = std::min(lo, moved[i] / moved[i + 1]);
            hi = std::max(hi, moved[i] / moved[i + 1]);
        }
    }
    report(5, lo >= 8.0 && hi <= 12.0, fmt("per-decade ratios in [%.4f, %.4f] (required [8, 12])", lo, hi));
}

double probe(const Mlp& model, const Matrix& x, const Matrix& u) { return frobenius_dot(u, predict(model, x)); }

void criterion_6() {
    std::mt19937_64 rng(106);
    std::uniform_int_distribution<std::size_t> depth(1, 3);
    std::uniform_int_distribution<std::size_t> width(1, 32);
    std::uniform_int_distribution<int> act(0, 3);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t layers = depth(rng);
        std::vector<std::size_t> widths{width(rng)};
        std::vector<Activation> acts;
        for (std::size_t l = 0; l < layers; ++l) {
            widths.push_back(width(rng));
            acts.push_back(static_cast<Activation>(act(rng)));
        }
        Mlp model = Mlp::glorot(widths, acts, rng);
        for (auto& ly : model.layers())
            for (double& b : ly.bias) b = std::normal_distribution<double>(0.0, 0.1)(rng);
        const Matrix x = gaussian_matrix(3, widths.front(), rng);
        const Matrix u = gaussian_matrix(3, widths.back(), rng);
        const BackwardResult r = backward(model, forward(model, x), u);
        for (std::size_t l = 0; l < layers; ++l) {
            const Matrix fd_w = finite_difference(
                [&](const Matrix& w) {
                    Mlp m = model;
                    m.layers()[l].weights = w;
                    return probe(m, x, u);
                },
                model.layers()[l].weights, 1e-5);
            Matrix bias(1, model.layers()[l].bias.size());
            std::copy(model.layers()[l].bias.begin(), model.layers()[l].bias.end(), bias.data().begin());
            const Matrix fd_b = finite_difference(
                [&](const Matrix& b) {
                    Mlp m = model;
                    m.layers()[l].bias.assign(b.data().begin(), b.data().end());
                    return probe(m, x, u);
                },
                bias, 1e-5);
            Matrix got_b(1, bias.cols());
            std::copy(r.grads[l].bias.begin(), r.grads[l].bias.end(), got_b.data().begin());
            worst = std::max(worst, relative_error(r.grads[l].weights, fd_w));
            worst = std::max(worst, relative_error(got_b, fd_b));
        }
    }
    report(6, worst <= 1e-5, fmt("max parameter-gradient relative error %.3e over 50 architectures (tol 1e-5)", worst));
}

// Fraction of transfer-grid cells whose dominant colour channel matches the
// column (donor) image when the colour-assigned block is transferred.
double colour_transfer_rate(const Checkpoint& ckpt, const FactorDataset& ds, std::size_t colour_block) {
    std::vector<std::size_t> test = ds.indices(Split::test);
    std::mt19937_64 rng(11);
    std::shuffle(test.begin(), test.end(), rng);
    test.resize(16);
    const Matrix rows = gather_rows(ds.images, {test.begin(), test.begin() + 8});
    const Matrix cols = gather_rows(ds.images, {test.begin() + 8, test.end()});
    const TransferGrid grid = attribute_transfer_grid(ckpt, rows, cols, colour_block);
    auto dominant = [](const Image& img) {
        double sum[3] = {0, 0, 0};
        for (std::size_t i = 0; i < img.pixels.size(); ++i) sum[i % 3] += img.pixels[i];
        return std::max_element(sum, sum + 3) - sum;
    };
    std::size_t hit = 0, total = 0;
    for (std::size_t r = 1; r < grid.cells.size(); ++r)
        for (std::size_t c = 1; c < grid.cells[r].size(); ++c) {
            hit += dominant(grid.cells[r][c]) == dominant(grid.cells[0][c]);
            ++total;
        }
    return static_cast<double>(hit) / static_cast<double>(total);
}

double test_recon_mse(const Checkpoint& ckpt, const FactorDataset& ds) {
    const Matrix x = gather_rows(ds.images, ds.indices(Split::test));
    const Matrix y = decode(ckpt, encode(ckpt, x, nullptr).codes);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x.data()[i] - y.data()[i]) * (x.data()[i] - y.data()[i]);
    return s / static_cast<double>(x.size());
}

void criterion_7() {
    const FactorDataset ds = generate_toy(FactorSpec::quads(), 7);
    ProseConfig prose_cfg = ProseConfig::quads();
    prose_cfg.seed = 7;
    prose_cfg.epochs = 50;
    prose_cfg.lambda_orth = 1.0;
    prose_cfg.tau = 0.1;
    prose_cfg.cayley_enabled = true;
    ProseConfig base_cfg = prose_cfg;
    base_cfg.lambda_orth = 0.0;
    base_cfg.cayley_enabled = false;

    const auto t0 = std::chrono::steady_clock::now();
    const Checkpoint with = train(prose_cfg, ds);
    const Checkpoint without = train(base_cfg, ds);
    const double train_s = seconds_since(t0);
    const EvalReport a = evaluate(with, ds, 7);
    const EvalReport b = evaluate(without, ds, 7);
    const double total_s = seconds_since(t0);

    const bool pass_a = a.mean_orth_deviation <= 0.1 * b.mean_orth_deviation;
    const bool pass_b = a.map.matched_map() >= b.map.matched_map();
    const bool pass_c = a.mean_leakage() <= b.mean_leakage();
    report(7, pass_a && pass_b && pass_c,
           fmt("(a) %s orth dev %.4g vs baseline %.4g; (b) %s mAP %.4f vs %.4f; (c) %s leakage %.4f vs %.4f; "
               "%.0f s train, %.0f s total (target 600 s)",
               pass_a ? "ok" : "MISS", a.mean_orth_deviation, b.mean_orth_deviation, pass_b ? "ok" : "MISS",
               a.map.matched_map(), b.map.matched_map(), pass_c ? "ok" : "MISS", a.mean_leakage(), b.mean_leakage(),
               train_s, total_s));

    for (const auto* r : {&a, &b}) {
        std::string assign;
        for (std::size_t f = 0; f < r->factors.size(); ++f)
            assign += fmt("%s%s->%zu", f ? " " : "", r->factors[f].name.c_str(), r->map.assignment[f]);
        std::string leak;
        for (double l : r->leakage) leak += fmt(" %.3f", l);
        info(fmt("%s: assignment %s; leakage%s", r == &a ? "orthonormal" : "baseline", assign.c_str(), leak.c_str()));
    }
    info(fmt("test reconstruction MSE per pixel: orthonormal %.5f, baseline %.5f", test_recon_mse(with, ds),
             test_recon_mse(without, ds)));
    info(fmt("colour-block transfer moves the dominant channel to the donor's in %.0f%% of cells (orthonormal model)",
             100.0 * colour_transfer_rate(with, ds, a.map.assignment[1])));
}

void criterion_8() {
    const FactorDataset ds = generate_toy(FactorSpec::quads(), 7);
    ProseConfig cfg = ProseConfig::beta_vae();
    cfg.epochs = 20;
    std::vector<EpochMetrics> rows;
    train(cfg, ds, [&](const EpochMetrics& m) { rows.push_back(m); });
    bool finite = rows.size() == 20;
    for (const auto& r : rows) finite = finite && std::isfinite(r.total);
    const bool lower = !rows.empty() && rows.back().total < rows.front().total;
    report(8, finite && lower,
           fmt("k=%zu d=%zu, %zu epochs without divergence; total loss epoch 1 %.5f -> epoch %zu %.5f", cfg.k, cfg.d,
               rows.size(), rows.empty() ? 0.0 : rows.front().total, rows.size(),
               rows.empty() ? 0.0 : rows.back().total));
}

void criterion_9() {
    const std::vector<double> perfect{0.9, 0.8, 0.1};
    const double ap1 = average_precision(perfect, {true, true, false});
    const std::vector<double> s{0.9, 0.8, 0.7};
    const double ap2 = average_precision(s, {true, false, true});
    bool last_ok = true;
    for (std::size_t n : {1u, 3u, 10u, 97u}) {
        std::vector<double> scores(n);
        std::vector<bool> pos(n, false);
        for (std::size_t i = 0; i < n; ++i) scores[i] = static_cast<double>(n - i);
        pos[n - 1] = true;
        last_ok = last_ok && average_precision(scores, pos) == 1.0 / static_cast<double>(n);
    }
    report(9, ap1 == 1.0 && ap2 == 5.0 / 6.0 && last_ok,
           fmt("perfect %.17g, mixed %.17g (5/6 = %.17g), last-of-n exact: %s", ap1, ap2, 5.0 / 6.0,
               last_ok ? "yes" : "no"));
}

void push_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void criterion_10() {
    const fs::path dir = fs::temp_directory_path() / "prose_acceptance_idx";
    fs::create_directories(dir);
    std::vector<std::uint8_t> images;
    push_be32(images, 0x803);
    push_be32(images, 2);
    push_be32(images, 2);
    push_be32(images, 2);
    for (std::uint8_t v : {0, 255, 255, 0, 255, 255, 0, 0}) images.push_back(v);
    std::vector<std::uint8_t> labels;
    push_be32(labels, 0x801);
    push_be32(labels, 2);
    labels.push_back(3);
    labels.push_back(9);
    auto load = [&](const std::vector<std::uint8_t>& im, const std::vector<std::uint8_t>& lb) {
        write_file_bytes(dir / "i.idx", im);
        write_file_bytes(dir / "l.idx", lb);
        return load_idx(dir / "i.idx", dir / "l.idx");
    };
    auto error_name = [&](const std::vector<std::uint8_t>& im, const std::vector<std::uint8_t>& lb) -> std::string {
        try {
            load(im, lb);
        } catch (const MagicError&) {
            return "magic";
        } catch (const CountMismatchError&) {
            return "count";
        } catch (const TruncationError&) {
            return "truncation";
        } catch (const std::exception&) {
            return "other";
        }
        return "none";
    };

    const FactorDataset ds = load(images, labels);
    const bool golden = ds.images == Matrix::from_rows({{0, 1, 1, 0}, {1, 1, 0, 0}}) && ds.label(0, 0) == 3 &&
                        ds.label(1, 0) == 9;
    auto bad_magic = labels;
    bad_magic[3] = 0x03;
    auto bad_count = labels;
    bad_count[7] = 3;
    bad_count.push_back(1);
    auto truncated = images;
    truncated.resize(truncated.size() - 2);
    const std::string e1 = error_name(images, bad_magic);
    const std::string e2 = error_name(images, bad_count);
    const std::string e3 = error_name(truncated, labels);
    fs::remove_all(dir);
    report(10, golden && e1 == "magic" && e2 == "count" && e3 == "truncation",
           fmt("golden pixels/labels %s; corruptions -> %s, %s, %s", golden ? "exact" : "WRONG", e1.c_str(),
               e2.c_str(), e3.c_str()));
}

void criterion_11() {
    FactorSpec spec = FactorSpec::quads();
    spec.replicas = 2;
    spec.train_fraction = 0.5;
    const FactorDataset ds = generate_toy(spec, 3);
    ProseConfig cfg = ProseConfig::quads();
    cfg.epochs = 2;
    cfg.batch_size = 32;
    const Checkpoint ckpt = train(cfg, ds);
    const fs::path path = fs::temp_directory_path() / "prose_acceptance.prose";
    save_checkpoint(ckpt, path);
    const bool equal = load_checkpoint(path) == ckpt;
    auto bytes = read_file_bytes(path);
    bytes[bytes.size() / 2] ^= 0x10;
    write_file_bytes(path, bytes);
    bool crc_caught = false;
    try {
        load_checkpoint(path);
    } catch (const ChecksumError&) {
        crc_caught = true;
    }
    fs::remove(path);
    report(11, equal && crc_caught,
           fmt("round trip after %zu training steps %s; flipped byte -> %s", static_cast<std::size_t>(ckpt.optimizer.step),
               equal ? "bit-exact" : "DIFFERS", crc_caught ? "checksum error" : "NOT DETECTED"));
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

void criterion_12() {
    const fs::path root = fs::temp_directory_path() / "prose_acceptance_cli";
    fs::remove_all(root);
    std::ostringstream out, err;
    int rc = cli::run({"prose", "gen-data", "--seed", "7", "--out", (root / "data").string()}, out, err);
    const std::string data = (root / "data" / "dataset.prosedat").string();
    for (const char* run : {"a", "b"}) {
        rc |= cli::run({"prose", "train", "--preset", "quads", "--data", data, "--seed", "7", "--epochs", "2",
                        "--out", (root / run).string()},
                       out, err);
    }
    const std::string ca = slurp(root / "a" / "checkpoint.prose");
    const std::string cb = slurp(root / "b" / "checkpoint.prose");
    const std::string ma = slurp(root / "a" / "metrics.csv");
    const std::string mb = slurp(root / "b" / "metrics.csv");
    fs::remove_all(root);
    report(12, rc == 0 && !ca.empty() && ca == cb && ma == mb,
           fmt("exit codes %s; checkpoints %zu bytes %s; metrics CSV %s", rc == 0 ? "0" : "NONZERO", ca.size(),
               ca == cb ? "identical" : "DIFFER", ma == mb ? "identical" : "DIFFER"));
}

void criterion_13() {
    std::mt19937_64 rng(113);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 2 + trial % 15;
        std::vector<double> a(n), b(n);
        for (auto* v : {&a, &b}) {
            double s = 0.0;
            for (double& x : *v) {
                x = g(rng);
                s += x * x;
            }
            for (double& x : *v) x /= std::sqrt(s);
        }
        const auto r = slerp_block(a, b, u(rng));
        double s = 0.0;
        for (double x : r) s += x * x;
        worst = std::max(worst, std::abs(std::sqrt(s) - 1.0));
    }
    report(13, worst <= 1e-12, fmt("max | ||slerp|| - 1 | = %.3e over 1000 draws (tol 1e-12)", worst));
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) != "--known-unmet") continue;
        std::stringstream list(argv[i + 1]);
        for (std::string item; std::getline(list, item, ',');) known_unmet.insert(std::stoi(item));
    }
    guarded(1, criterion_1_2);
    guarded(3, criterion_3);
    guarded(4, criterion_4);
    guarded(5, criterion_5);
    guarded(6, criterion_6);
    guarded(7, criterion_7);
    guarded(8, criterion_8);
    guarded(9, criterion_9);
    guarded(10, criterion_10);
    guarded(11, criterion_11);
    guarded(12, criterion_12);
    guarded(13, criterion_13);
    std::printf("%d criterion failure(s), %d known unmet\n", failures, known_failures);
    return failures == 0 ? 0 : 1;
}
