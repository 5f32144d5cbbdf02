#include "prose/disentangle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "prose/error.hpp"

namespace prose {

namespace {

constexpr std::size_t kHidden1 = 256;
constexpr std::size_t kHidden2 = 128;

double mse_with_grad(const Matrix& pred, const Matrix& target, Matrix* grad) {
    require_same_shape(pred, target, "mse");
    const double scale = 1.0 / static_cast<double>(pred.size());
    const auto p = pred.data();
    const auto t = target.data();
    double s = 0.0;
    if (grad != nullptr) *grad = Matrix(pred.rows(), pred.cols());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double e = p[i] - t[i];
        s += e * e;
        if (grad != nullptr) grad->data()[i] = 2.0 * e * scale;
    }
    return s * scale;
}

void copy_block(const Matrix& from, std::size_t from_row, Matrix& to, std::size_t to_row,
                std::size_t d, std::size_t k, std::size_t block) {
    for (std::size_t r = 0; r < d; ++r) to(to_row, r * k + block) = from(from_row, r * k + block);
}

void add_block(const Matrix& from, std::size_t from_row, Matrix& to, std::size_t to_row,
               std::size_t d, std::size_t k, std::size_t block) {
    for (std::size_t r = 0; r < d; ++r) to(to_row, r * k + block) += from(from_row, r * k + block);
}

void check_finite_metric(double v, const char* component) {
    if (!std::isfinite(v)) {
        throw DivergenceError(std::string("training diverged: non-finite ") + component + " loss",
                              component);
    }
}

std::vector<std::span<double>> model_parameters(ProseModel& model) {
    auto views = parameter_views(model.encoder);
    auto dec = parameter_views(model.decoder);
    views.insert(views.end(), dec.begin(), dec.end());
    return views;
}

}  // namespace

std::string to_string(Backbone b) {
    return b == Backbone::swap_autoencoder ? "swap" : "bvae";
}

Backbone backbone_from_string(const std::string& s) {
    if (s == "swap" || s == "swap_autoencoder") return Backbone::swap_autoencoder;
    if (s == "bvae" || s == "beta_vae") return Backbone::beta_vae;
    throw ConfigError("unknown backbone '" + s + "' (expected swap or bvae)");
}

ProseConfig ProseConfig::quads() { return ProseConfig{}; }

ProseConfig ProseConfig::mnist() {
    ProseConfig cfg;
    cfg.k = 3;
    cfg.d = 8;
    return cfg;
}

ProseConfig ProseConfig::beta_vae() {
    ProseConfig cfg;
    cfg.k = 3;
    cfg.d = 4;
    cfg.backbone = Backbone::beta_vae;
    cfg.beta = 4.0;
    return cfg;
}

void ProseConfig::validate() const {
    if (k < 2) throw ConfigError("k must be at least 2, got " + std::to_string(k));
    if (d < k) {
        throw ConfigError("d=" + std::to_string(d) + " < k=" + std::to_string(k) +
                          ": orthonormal blocks are infeasible");
    }
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be >= 0");
    if (!(lambda_orth >= 0.0) || !std::isfinite(lambda_orth)) {
        throw ConfigError("lambda_orth must be >= 0");
    }
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be > 0");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be > 0");
    }
}

KeyValues ProseConfig::to_key_values() const {
    return {
        {"k", std::to_string(k)},
        {"d", std::to_string(d)},
        {"backbone", to_string(backbone)},
        {"beta", format_double(beta)},
        {"lambda_orth", format_double(lambda_orth)},
        {"tau", format_double(tau)},
        {"cayley", cayley_enabled ? "true" : "false"},
        {"epochs", std::to_string(epochs)},
        {"batch_size", std::to_string(batch_size)},
        {"learning_rate", format_double(learning_rate)},
        {"seed", std::to_string(seed)},
    };
}

bool ProseConfig::apply(const std::string& key, const std::string& value) {
    if (key == "k") {
        k = parse_u64(key, value);
    } else if (key == "d") {
        d = parse_u64(key, value);
    } else if (key == "backbone") {
        backbone = backbone_from_string(value);
    } else if (key == "beta") {
        beta = parse_double(key, value);
    } else if (key == "lambda_orth") {
        lambda_orth = parse_double(key, value);
    } else if (key == "tau") {
        tau = parse_double(key, value);
    } else if (key == "cayley") {
        cayley_enabled = parse_bool(key, value);
    } else if (key == "epochs") {
        epochs = parse_u64(key, value);
    } else if (key == "batch_size") {
        batch_size = parse_u64(key, value);
    } else if (key == "learning_rate") {
        learning_rate = parse_double(key, value);
    } else if (key == "seed") {
        seed = parse_u64(key, value);
    } else {
        return false;
    }
    return true;
}

ProseModel make_model(const ProseConfig& cfg, const ImageShape& image) {
    cfg.validate();
    if (image.pixels() == 0) throw ShapeError("make_model: empty image shape");
    ProseModel model;
    model.config = cfg;
    model.image = image;
    model.rng.seed(cfg.seed);

    const std::size_t latent = cfg.latent_width();
    const std::size_t enc_out = cfg.backbone == Backbone::beta_vae ? 2 * latent : latent;
    const std::size_t enc_widths[] = {image.pixels(), kHidden1, kHidden2, enc_out};
    const Activation enc_acts[] = {Activation::tanh, Activation::tanh, Activation::identity};
    const std::size_t dec_widths[] = {latent, kHidden2, kHidden1, image.pixels()};
    const Activation dec_acts[] = {Activation::tanh, Activation::tanh, Activation::sigmoid};
    model.encoder = Mlp::glorot(enc_widths, enc_acts, model.rng);
    model.decoder = Mlp::glorot(dec_widths, dec_acts, model.rng);

    AdamHyper hyper;
    hyper.learning_rate = cfg.learning_rate;
    model.optimizer = AdamState::for_parameters(model_parameters(model), hyper);
    return model;
}

LatentBlocks code_block(const Matrix& codes, std::size_t example, std::size_t d, std::size_t k) {
    if (codes.cols() != d * k) throw ShapeError("code_block: code width is not d*k");
    if (example >= codes.rows()) throw IndexError("code_block: example index out of range");
    const auto row = codes.row(example);
    return LatentBlocks(Matrix(d, k, std::vector<double>(row.begin(), row.end())));
}

void store_code(Matrix& codes, std::size_t example, const Matrix& z) {
    if (codes.cols() != z.size()) throw ShapeError("store_code: code width mismatch");
    std::copy(z.data().begin(), z.data().end(), codes.row(example).begin());
}

Encoding encode(const ProseModel& model, const Matrix& images, std::mt19937_64* noise_source) {
    if (images.cols() != model.input_width()) {
        throw ShapeError("encode: images " + images.shape_string() + " but model expects width " +
                         std::to_string(model.input_width()));
    }
    Encoding enc;
    enc.trace = forward(model.encoder, images);
    const Matrix& out = enc.trace.output();
    if (model.config.backbone == Backbone::swap_autoencoder) {
        enc.codes = out;
        return enc;
    }
    const std::size_t latent = model.config.latent_width();
    const std::size_t n = images.rows();
    enc.mu = Matrix(n, latent);
    enc.logvar = Matrix(n, latent);
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = out.row(r);
        std::copy(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(latent), enc.mu.row(r).begin());
        std::copy(row.begin() + static_cast<std::ptrdiff_t>(latent), row.end(), enc.logvar.row(r).begin());
    }
    enc.noise = Matrix(n, latent);
    if (noise_source != nullptr) {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (double& v : enc.noise.data()) v = normal(*noise_source);
    }
    enc.codes = gaussian_reparameterize(enc.mu, enc.logvar, enc.noise);
    return enc;
}

std::vector<LatentBlocks> encode_blocks(const ProseModel& model, const Matrix& images) {
    const Encoding enc = encode(model, images, nullptr);
    std::vector<LatentBlocks> out;
    out.reserve(images.rows());
    for (std::size_t n = 0; n < images.rows(); ++n) {
        out.push_back(code_block(enc.codes, n, model.config.d, model.config.k));
    }
    return out;
}

Matrix decode(const ProseModel& model, const Matrix& codes) {
    if (codes.cols() != model.config.latent_width()) {
        throw ShapeError("decode: codes " + codes.shape_string() + " but latent width is " +
                         std::to_string(model.config.latent_width()));
    }
    return predict(model.decoder, codes);
}

Matrix decode(const ProseModel& model, const LatentBlocks& z) {
    if (z.d() != model.config.d || z.k() != model.config.k) {
        throw ShapeError("decode: latent " + z.matrix().shape_string() + " does not match config");
    }
    const auto data = z.matrix().data();
    return decode(model, Matrix(1, data.size(), std::vector<double>(data.begin(), data.end())));
}

LatentBlocks swap_blocks(const LatentBlocks& za, const LatentBlocks& zb, std::size_t i) {
    if (za.d() != zb.d() || za.k() != zb.k()) {
        throw ShapeError("swap_blocks: latent shapes differ");
    }
    if (i >= zb.k()) {
        throw IndexError("swap_blocks: block " + std::to_string(i) + " out of range for k=" +
                         std::to_string(zb.k()));
    }
    Matrix out = zb.matrix();
    for (std::size_t r = 0; r < out.rows(); ++r) out(r, i) = za.matrix()(r, i);
    return LatentBlocks(std::move(out));
}

SwapPlan draw_swap_plan(std::size_t batch, std::size_t k, std::mt19937_64& rng) {
    if (batch < 2) throw BatchError("swap pairing needs a batch of at least 2");
    SwapPlan plan;
    plan.partner.resize(batch);
    plan.block.resize(batch);
    std::uniform_int_distribution<std::size_t> offset(1, batch - 1);
    std::uniform_int_distribution<std::size_t> block(0, k - 1);
    for (std::size_t b = 0; b < batch; ++b) {
        plan.partner[b] = (b + offset(rng)) % batch;
        plan.block[b] = block(rng);
    }
    return plan;
}

ModelGrads zero_grads(const ProseModel& model) {
    return {zero_grads(model.encoder), zero_grads(model.decoder)};
}

LossTerms disentangle_loss(const ProseModel& model, const Matrix& images,
                           const Encoding& encoding, const Matrix& codes, const SwapPlan& plan,
                           ModelGrads* grads) {
    const auto& cfg = model.config;
    const std::size_t n = images.rows();
    const std::size_t d = cfg.d;
    const std::size_t k = cfg.k;
    if (codes.rows() != n || codes.cols() != cfg.latent_width()) {
        throw ShapeError("disentangle_loss: codes " + codes.shape_string() + " do not match batch");
    }
    MlpGrads* dec_grads = grads != nullptr ? &grads->decoder : nullptr;
    MlpGrads* enc_grads = grads != nullptr ? &grads->encoder : nullptr;

    LossTerms terms;
    const Trace recon_trace = forward(model.decoder, codes);
    Matrix g_out;
    terms.recon = mse_with_grad(recon_trace.output(), images, &g_out);
    terms.grad_codes = backward_accumulate(model.decoder, recon_trace, g_out, dec_grads);

    if (cfg.backbone == Backbone::beta_vae) {
        require_same_shape(encoding.mu, codes, "disentangle_loss");
        require_same_shape(encoding.logvar, codes, "disentangle_loss");
        const double scale = cfg.beta / static_cast<double>(n * model.input_width());
        terms.aux = scale * kl_to_standard_normal(encoding.mu, encoding.logvar);
        terms.grad_mu = scale * encoding.mu;
        terms.grad_logvar = Matrix(n, codes.cols());
        const auto lv = encoding.logvar.data();
        auto g = terms.grad_logvar.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = scale * 0.5 * std::expm1(lv[i]);
        return terms;
    }

    if (n < 2) throw BatchError("disentangle_loss: swap backbone needs at least 2 examples");
    if (plan.partner.size() != n || plan.block.size() != n) {
        throw ShapeError("disentangle_loss: swap plan does not match batch");
    }
    for (std::size_t b = 0; b < n; ++b) {
        if (plan.partner[b] >= n || plan.block[b] >= k) {
            throw IndexError("disentangle_loss: swap plan index out of range");
        }
    }

    // Forward: mix one block in from the partner, decode, re-encode, put the
    // original block back and decode again.
    Matrix mixed = codes;
    for (std::size_t b = 0; b < n; ++b) copy_block(codes, plan.partner[b], mixed, b, d, k, plan.block[b]);
    const Trace mixed_decode = forward(model.decoder, mixed);
    const Trace reencode = forward(model.encoder, mixed_decode.output());
    if (reencode.output().cols() != codes.cols()) {
        throw ShapeError("disentangle_loss: encoder output width does not match codes");
    }
    Matrix restored = reencode.output();
    for (std::size_t b = 0; b < n; ++b) copy_block(codes, b, restored, b, d, k, plan.block[b]);
    const Trace restored_decode = forward(model.decoder, restored);
    terms.aux = mse_with_grad(restored_decode.output(), images, &g_out);

    // Backward through the cycle.
    Matrix g_restored = backward_accumulate(model.decoder, restored_decode, g_out, dec_grads);
    for (std::size_t b = 0; b < n; ++b) {
        add_block(g_restored, b, terms.grad_codes, b, d, k, plan.block[b]);
        for (std::size_t r = 0; r < d; ++r) g_restored(b, r * k + plan.block[b]) = 0.0;
    }
    const Matrix g_decoded = backward_accumulate(model.encoder, reencode, g_restored, enc_grads);
    Matrix g_mixed = backward_accumulate(model.decoder, mixed_decode, g_decoded, dec_grads);
    for (std::size_t b = 0; b < n; ++b) {
        add_block(g_mixed, b, terms.grad_codes, plan.partner[b], d, k, plan.block[b]);
        for (std::size_t r = 0; r < d; ++r) g_mixed(b, r * k + plan.block[b]) = 0.0;
    }
    terms.grad_codes += g_mixed;
    return terms;
}

StepMetrics train_step(ProseModel& model, const Matrix& images) {
    const auto& cfg = model.config;
    const std::size_t n = images.rows();
    const std::size_t d = cfg.d;
    const std::size_t k = cfg.k;
    if (n == 0) throw BatchError("train_step: empty batch");

    const Encoding enc = encode(model, images, &model.rng);
    if (!all_finite(enc.codes.data())) {
        throw DivergenceError("training diverged: non-finite latent codes", "codes");
    }
    SwapPlan plan;
    if (cfg.backbone == Backbone::swap_autoencoder) plan = draw_swap_plan(n, k, model.rng);

    const CayleyConfig cayley{cfg.tau, 1e-10};
    StepMetrics metrics;
    Matrix stepped = enc.codes;
    std::vector<Matrix> jacobians;
    if (cfg.cayley_enabled) {
        // J is the per-example gradient of the disentangling loss at the
        // unstepped codes; the batch-mean loss scales it by 1/n.
        const LossTerms probe = disentangle_loss(model, images, enc, enc.codes, plan, nullptr);
        jacobians.reserve(n);
        for (std::size_t b = 0; b < n; ++b) {
            const LatentBlocks z = code_block(enc.codes, b, d, k);
            Matrix j = code_block(probe.grad_codes, b, d, k).matrix();
            j *= static_cast<double>(n);
            const LatentBlocks next = cayley_step(z, j, cayley);
            const double drift = frobenius_norm(matmul_tn(next.matrix(), next.matrix()) -
                                                matmul_tn(z.matrix(), z.matrix()));
            metrics.max_gram_drift = std::max(metrics.max_gram_drift, drift);
            store_code(stepped, b, next.matrix());
            jacobians.push_back(std::move(j));
        }
    }

    ModelGrads grads = zero_grads(model);
    const LossTerms terms = disentangle_loss(model, images, enc, stepped, plan, &grads);

    Matrix g_codes(n, cfg.latent_width());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t b = 0; b < n; ++b) {
        const LatentBlocks z = code_block(enc.codes, b, d, k);
        metrics.orth += orth_penalty(z) * inv_n;
        Matrix up = code_block(terms.grad_codes, b, d, k).matrix();
        if (cfg.cayley_enabled) up = cayley_vjp(z, jacobians[b], cayley, up).grad_wrt_z;
        if (cfg.lambda_orth != 0.0) up += (cfg.lambda_orth * inv_n) * orth_penalty_grad(z);
        store_code(g_codes, b, up);
    }

    metrics.recon = terms.recon;
    metrics.aux = terms.aux;
    metrics.total = terms.recon + terms.aux + cfg.lambda_orth * metrics.orth;
    check_finite_metric(metrics.recon, "recon");
    check_finite_metric(metrics.aux, cfg.backbone == Backbone::beta_vae ? "kl" : "swap");
    check_finite_metric(metrics.orth, "orth");
    check_finite_metric(metrics.total, "total");

    Matrix g_encoder;
    if (cfg.backbone == Backbone::swap_autoencoder) {
        g_encoder = std::move(g_codes);
    } else {
        const std::size_t latent = cfg.latent_width();
        g_encoder = Matrix(n, 2 * latent);
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t c = 0; c < latent; ++c) {
                const double g = g_codes(b, c);
                const double sd_noise = 0.5 * std::exp(0.5 * enc.logvar(b, c)) * enc.noise(b, c);
                g_encoder(b, c) = g + terms.grad_mu(b, c);
                g_encoder(b, latent + c) = g * sd_noise + terms.grad_logvar(b, c);
            }
        }
    }
    backward_accumulate(model.encoder, enc.trace, g_encoder, &grads.encoder);

    auto grad_views = gradient_views(grads.encoder);
    const auto dec_views = gradient_views(grads.decoder);
    grad_views.insert(grad_views.end(), dec_views.begin(), dec_views.end());
    for (const auto& g : grad_views) {
        if (!all_finite(g)) throw DivergenceError("training diverged: non-finite gradient", "gradient");
    }
    const auto params = model_parameters(model);
    adam_step(params, grad_views, model.optimizer);
    return metrics;
}

void train_epochs(ProseModel& model, const FactorDataset& dataset, std::size_t epochs,
                  const EpochCallback& on_epoch) {
    if (dataset.spec.image != model.image) {
        throw ShapeError("train: dataset image shape does not match the model");
    }
    std::vector<std::size_t> order = dataset.indices(Split::train);
    if (order.size() < 2) throw BatchError("train: need at least two training examples");
    const std::size_t batch = model.config.batch_size;

    for (std::size_t e = 0; e < epochs; ++e) {
        std::shuffle(order.begin(), order.end(), model.rng);
        EpochMetrics sum;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            if (end - start < 2) break;
            const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(end));
            const StepMetrics m = train_step(model, gather_rows(dataset.images, rows));
            sum.recon += m.recon;
            sum.aux += m.aux;
            sum.orth += m.orth;
            sum.total += m.total;
            ++steps;
        }
        ++model.epoch;
        const double inv = 1.0 / static_cast<double>(steps);
        EpochMetrics row{model.epoch, model.optimizer.step, sum.recon * inv, sum.aux * inv,
                         sum.orth * inv, sum.total * inv};
        if (on_epoch) on_epoch(row);
    }
}

Checkpoint train(const ProseConfig& cfg, const FactorDataset& dataset, const EpochCallback& on_epoch) {
    if (dataset.size() == 0) throw BatchError("train: empty dataset");
    ProseModel model = make_model(cfg, dataset.spec.image);
    train_epochs(model, dataset, cfg.epochs, on_epoch);
    return model;
}

std::string metrics_csv_header() { return "epoch,step,recon,aux,orth,total"; }

std::string metrics_csv_row(const EpochMetrics& m) {
    std::ostringstream os;
    os << m.epoch << ',' << m.step << ',' << format_double(m.recon) << ',' << format_double(m.aux)
       << ',' << format_double(m.orth) << ',' << format_double(m.total);
    return os.str();
}

}  // namespace prose
