#pragma once

// Small fully connected networks with hand-written reverse mode and Adam.
// Batches are stored one example per row.

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "prose/linalg.hpp"

namespace prose {

enum class Activation : std::uint8_t { identity, tanh, sigmoid, relu };

std::string_view to_string(Activation a) noexcept;
Activation activation_from_string(std::string_view s);

struct DenseLayer {
    Matrix weights;             // out × in
    std::vector<double> bias;   // out
    Activation activation = Activation::identity;

    std::size_t in_width() const noexcept { return weights.cols(); }
    std::size_t out_width() const noexcept { return weights.rows(); }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<DenseLayer> layers);

    // Glorot-uniform weights in ±sqrt(6/(fan_in+fan_out)), zero biases.
    static Mlp glorot(std::span<const std::size_t> widths, std::span<const Activation> activations,
                      std::mt19937_64& rng);

    std::size_t input_width() const;
    std::size_t output_width() const;
    std::size_t parameter_count() const noexcept;

    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    std::vector<DenseLayer>& layers() noexcept { return layers_; }

    friend bool operator==(const Mlp&, const Mlp&) = default;

private:
    std::vector<DenseLayer> layers_;
};

// activations[0] is the input; activations[l + 1] is the post-activation
// output of layer l.
struct Trace {
    std::vector<Matrix> activations;

    const Matrix& output() const { return activations.back(); }
};

Trace forward(const Mlp& model, const Matrix& x);
Matrix predict(const Mlp& model, const Matrix& x);

struct LayerGrads {
    Matrix weights;
    std::vector<double> bias;
};

using MlpGrads = std::vector<LayerGrads>;

MlpGrads zero_grads(const Mlp& model);

struct BackwardResult {
    MlpGrads grads;
    Matrix grad_in;
};

BackwardResult backward(const Mlp& model, const Trace& trace, const Matrix& grad_out);

// Adds this trace's parameter gradients into `acc` (skipped when null) and
// returns the gradient with respect to the input. Throws TraceError if the
// trace was not produced by a model of this shape.
Matrix backward_accumulate(const Mlp& model, const Trace& trace, const Matrix& grad_out,
                           MlpGrads* acc);

std::vector<std::span<double>> parameter_views(Mlp& model);
std::vector<std::span<const double>> gradient_views(const MlpGrads& grads);

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    friend bool operator==(const AdamHyper&, const AdamHyper&) = default;
};

struct AdamState {
    AdamHyper hyper;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;

    static AdamState for_parameters(std::span<const std::span<double>> params, AdamHyper hyper);

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One bias-corrected Adam update of every parameter block in place.
void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state);

// mu + exp(logvar / 2) ⊙ noise
Matrix gaussian_reparameterize(const Matrix& mu, const Matrix& logvar, const Matrix& noise);

// ½ Σ (exp(logvar) + mu² − 1 − logvar), summed over every entry.
double kl_to_standard_normal(const Matrix& mu, const Matrix& logvar);

}  // namespace prose
