#pragma once

// Block-partitioned autoencoder training with the orthonormal-block
// constraint: soft penalty λ·‖ZᵀZ − I‖²_F in the objective plus one Cayley
// retraction of each latent code per training step. The retraction is a
// training-time device only; encode() never applies it.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "prose/data.hpp"
#include "prose/keyvalue.hpp"
#include "prose/linalg.hpp"
#include "prose/manifold.hpp"
#include "prose/nn.hpp"

namespace prose {

enum class Backbone : std::uint8_t { swap_autoencoder, beta_vae };

std::string to_string(Backbone b);
Backbone backbone_from_string(const std::string& s);

struct ProseConfig {
    std::size_t k = 4;
    std::size_t d = 16;
    Backbone backbone = Backbone::swap_autoencoder;
    double beta = 4.0;
    double lambda_orth = 1.0;
    double tau = 0.1;
    bool cayley_enabled = true;
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    std::uint64_t seed = 7;

    // Quads: k=4, d=16, swap backbone.
    static ProseConfig quads();
    // MNIST: k=3, d=8.
    static ProseConfig mnist();
    // β-VAE smoke preset: 12 latent dimensions as k=3 blocks of d=4, β=4.
    static ProseConfig beta_vae();

    std::size_t latent_width() const noexcept { return d * k; }
    void validate() const;

    KeyValues to_key_values() const;
    // Applies known keys; returns false for keys it does not recognise.
    bool apply(const std::string& key, const std::string& value);

    friend bool operator==(const ProseConfig&, const ProseConfig&) = default;
};

// Everything a training run needs to resume: configuration, both networks,
// optimizer moments, epoch counter and generator state.
struct ProseModel {
    ProseConfig config;
    ImageShape image;
    Mlp encoder;
    Mlp decoder;
    AdamState optimizer;
    std::uint64_t epoch = 0;
    std::mt19937_64 rng;

    std::size_t input_width() const noexcept { return image.pixels(); }
    friend bool operator==(const ProseModel&, const ProseModel&) = default;
};

using Checkpoint = ProseModel;

// Encoder  [input → 256 tanh → 128 tanh → d·k (×2 for β-VAE) identity],
// decoder  [d·k → 128 tanh → 256 tanh → input sigmoid], seeded from cfg.seed.
ProseModel make_model(const ProseConfig& cfg, const ImageShape& image);

// Latent codes are stored one example per row; row n holds Z_n ∈ R^{d×k}
// flattened row-major, so block i of example n is entries {r·k + i}.
LatentBlocks code_block(const Matrix& codes, std::size_t example, std::size_t d, std::size_t k);
void store_code(Matrix& codes, std::size_t example, const Matrix& z);

struct Encoding {
    Matrix codes;     // batch × d·k, the Z fed to the decoder
    Matrix mu;        // β-VAE only
    Matrix logvar;    // β-VAE only
    Matrix noise;     // β-VAE only
    Trace trace;
};

// Deterministic for the swap backbone. For β-VAE, codes are sampled with
// noise drawn from `noise_source`; when it is null the posterior mean is used.
Encoding encode(const ProseModel& model, const Matrix& images, std::mt19937_64* noise_source);
std::vector<LatentBlocks> encode_blocks(const ProseModel& model, const Matrix& images);

Matrix decode(const ProseModel& model, const Matrix& codes);
Matrix decode(const ProseModel& model, const LatentBlocks& z);

// zb with column i taken from za.
LatentBlocks swap_blocks(const LatentBlocks& za, const LatentBlocks& zb, std::size_t i);

// For each example b: swap block[b] in from example partner[b].
struct SwapPlan {
    std::vector<std::size_t> partner;
    std::vector<std::size_t> block;
};

SwapPlan draw_swap_plan(std::size_t batch, std::size_t k, std::mt19937_64& rng);

struct ModelGrads {
    MlpGrads encoder;
    MlpGrads decoder;
};

ModelGrads zero_grads(const ProseModel& model);

struct LossTerms {
    double recon = 0.0;
    double aux = 0.0;        // swap-cycle MSE or β·KL (per input dimension)
    Matrix grad_codes;       // ∂(recon + aux)/∂codes
    Matrix grad_mu;          // β-VAE: ∂aux/∂mu from the KL term
    Matrix grad_logvar;      // β-VAE: ∂aux/∂logvar from the KL term

    double value() const noexcept { return recon + aux; }
};

// Swap backbone: recon = MSE(decode(Z), x); aux = MSE of the swap cycle
// decode(swap(encode(decode(swap(Z_a, Z_b, i))) ↩ Z_b, i)) against x_b.
// β-VAE backbone: recon = MSE(decode(Z), x); aux = β·KL/(input width),
// using `encoding.mu`/`encoding.logvar`.
// MSEs average over batch and pixels. Parameter gradients of the decoder and
// of the re-encoding pass are added into `grads` when it is non-null.
LossTerms disentangle_loss(const ProseModel& model, const Matrix& images,
                           const Encoding& encoding, const Matrix& codes, const SwapPlan& plan,
                           ModelGrads* grads);

struct StepMetrics {
    double recon = 0.0;
    double aux = 0.0;
    double orth = 0.0;    // batch-mean ‖ZᵀZ − I‖²_F, unweighted
    double total = 0.0;   // recon + aux + lambda_orth · orth
    double max_gram_drift = 0.0;   // largest ‖Z_newᵀZ_new − ZᵀZ‖_F across the batch
};

// One optimizer step on a batch of images.
StepMetrics train_step(ProseModel& model, const Matrix& images);

struct EpochMetrics {
    std::uint64_t epoch = 0;
    std::uint64_t step = 0;   // global step count at the end of the epoch
    double recon = 0.0;
    double aux = 0.0;
    double orth = 0.0;
    double total = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Runs cfg.epochs epochs over the train split from a freshly initialised model.
Checkpoint train(const ProseConfig& cfg, const FactorDataset& dataset,
                 const EpochCallback& on_epoch = {});

// Continues an existing model for `epochs` more epochs.
void train_epochs(ProseModel& model, const FactorDataset& dataset, std::size_t epochs,
                  const EpochCallback& on_epoch = {});

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

}  // namespace prose
