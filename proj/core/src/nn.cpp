#include "prose/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "prose/error.hpp"

namespace prose {

namespace {

double activate(Activation a, double v) noexcept {
    switch (a) {
        case Activation::identity: return v;
        case Activation::tanh: return std::tanh(v);
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-v));
        case Activation::relu: return v > 0.0 ? v : 0.0;
    }
    return v;
}

// Derivative expressed through the post-activation value y.
double activate_grad(Activation a, double y) noexcept {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::tanh: return 1.0 - y * y;
        case Activation::sigmoid: return y * (1.0 - y);
        case Activation::relu: return y > 0.0 ? 1.0 : 0.0;
    }
    return 1.0;
}

void check_trace(const Mlp& model, const Trace& trace, const Matrix& grad_out) {
    const auto& layers = model.layers();
    if (trace.activations.size() != layers.size() + 1) {
        throw TraceError("backward: trace has " + std::to_string(trace.activations.size()) +
                         " activations for a " + std::to_string(layers.size()) + "-layer model");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (trace.activations[l].cols() != layers[l].in_width() ||
            trace.activations[l + 1].cols() != layers[l].out_width()) {
            throw TraceError("backward: trace shape drift at layer " + std::to_string(l));
        }
    }
    const Matrix& out = trace.output();
    if (grad_out.rows() != out.rows() || grad_out.cols() != out.cols()) {
        throw ShapeError("backward: grad_out " + grad_out.shape_string() + " vs output " +
                         out.shape_string());
    }
}

}  // namespace

std::string_view to_string(Activation a) noexcept {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::relu: return "relu";
    }
    return "identity";
}

Activation activation_from_string(std::string_view s) {
    if (s == "identity") return Activation::identity;
    if (s == "tanh") return Activation::tanh;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "relu") return Activation::relu;
    throw ConfigError("unknown activation '" + std::string(s) + "'");
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ShapeError("Mlp: no layers");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        if (layer.bias.size() != layer.out_width()) {
            throw ShapeError("Mlp: bias length mismatch at layer " + std::to_string(l));
        }
        if (l > 0 && layers_[l - 1].out_width() != layer.in_width()) {
            throw ShapeError("Mlp: width mismatch between layers " + std::to_string(l - 1) +
                             " and " + std::to_string(l));
        }
    }
}

Mlp Mlp::glorot(std::span<const std::size_t> widths, std::span<const Activation> activations,
                std::mt19937_64& rng) {
    if (widths.size() < 2 || activations.size() + 1 != widths.size()) {
        throw ShapeError("Mlp::glorot: need one activation per layer");
    }
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t in = widths[l];
        const std::size_t out = widths[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0), activations[l]};
        for (double& w : layer.weights.data()) w = dist(rng);
        layers.push_back(std::move(layer));
    }
    return Mlp(std::move(layers));
}

std::size_t Mlp::input_width() const { return layers_.front().in_width(); }
std::size_t Mlp::output_width() const { return layers_.back().out_width(); }

std::size_t Mlp::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += layer.weights.size() + layer.bias.size();
    return n;
}

Trace forward(const Mlp& model, const Matrix& x) {
    if (model.layers().empty()) throw ShapeError("forward: empty model");
    if (x.cols() != model.input_width()) {
        throw ShapeError("forward: input " + x.shape_string() + " but model expects width " +
                         std::to_string(model.input_width()));
    }
    Trace trace;
    trace.activations.reserve(model.layers().size() + 1);
    trace.activations.push_back(x);
    for (const auto& layer : model.layers()) {
        Matrix y = matmul_nt(trace.activations.back(), layer.weights);
        for (std::size_t r = 0; r < y.rows(); ++r) {
            auto row = y.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) {
                row[c] = activate(layer.activation, row[c] + layer.bias[c]);
            }
        }
        trace.activations.push_back(std::move(y));
    }
    return trace;
}

Matrix predict(const Mlp& model, const Matrix& x) {
    return std::move(forward(model, x).activations.back());
}

MlpGrads zero_grads(const Mlp& model) {
    MlpGrads grads;
    grads.reserve(model.layers().size());
    for (const auto& layer : model.layers()) {
        grads.push_back({Matrix(layer.out_width(), layer.in_width()),
                         std::vector<double>(layer.out_width(), 0.0)});
    }
    return grads;
}

Matrix backward_accumulate(const Mlp& model, const Trace& trace, const Matrix& grad_out,
                           MlpGrads* acc) {
    check_trace(model, trace, grad_out);
    const auto& layers = model.layers();
    if (acc != nullptr && acc->size() != layers.size()) {
        throw ShapeError("backward: gradient accumulator mismatch");
    }

    Matrix delta = grad_out;
    for (std::size_t l = layers.size(); l-- > 0;) {
        const auto& layer = layers[l];
        const Matrix& y = trace.activations[l + 1];
        if (layer.activation != Activation::identity) {
            auto d = delta.data();
            const auto yv = y.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] *= activate_grad(layer.activation, yv[i]);
        }
        if (acc != nullptr) {
            auto& g = (*acc)[l];
            g.weights += matmul_tn(delta, trace.activations[l]);
            for (std::size_t r = 0; r < delta.rows(); ++r) {
                const auto row = delta.row(r);
                for (std::size_t c = 0; c < row.size(); ++c) g.bias[c] += row[c];
            }
        }
        delta = matmul(delta, layer.weights);
    }
    return delta;
}

BackwardResult backward(const Mlp& model, const Trace& trace, const Matrix& grad_out) {
    BackwardResult result{zero_grads(model), Matrix()};
    result.grad_in = backward_accumulate(model, trace, grad_out, &result.grads);
    return result;
}

std::vector<std::span<double>> parameter_views(Mlp& model) {
    std::vector<std::span<double>> views;
    for (auto& layer : model.layers()) {
        views.push_back(layer.weights.data());
        views.push_back(layer.bias);
    }
    return views;
}

std::vector<std::span<const double>> gradient_views(const MlpGrads& grads) {
    std::vector<std::span<const double>> views;
    for (const auto& g : grads) {
        views.push_back(g.weights.data());
        views.push_back(g.bias);
    }
    return views;
}

AdamState AdamState::for_parameters(std::span<const std::span<double>> params, AdamHyper hyper) {
    AdamState state;
    state.hyper = hyper;
    for (const auto& p : params) {
        state.first_moment.emplace_back(p.size(), 0.0);
        state.second_moment.emplace_back(p.size(), 0.0);
    }
    return state;
}

void adam_step(std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
        params.size() != state.second_moment.size()) {
        throw ShapeError("adam_step: parameter, gradient and moment block counts differ");
    }
    for (std::size_t b = 0; b < params.size(); ++b) {
        if (params[b].size() != grads[b].size() ||
            params[b].size() != state.first_moment[b].size() ||
            params[b].size() != state.second_moment[b].size()) {
            throw ShapeError("adam_step: size mismatch in parameter block " + std::to_string(b));
        }
    }
    const auto& h = state.hyper;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(h.beta1, t);
    const double correction2 = 1.0 - std::pow(h.beta2, t);
    for (std::size_t b = 0; b < params.size(); ++b) {
        auto& m = state.first_moment[b];
        auto& v = state.second_moment[b];
        auto p = params[b];
        const auto g = grads[b];
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
            v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            p[i] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
        }
    }
}

Matrix gaussian_reparameterize(const Matrix& mu, const Matrix& logvar, const Matrix& noise) {
    require_same_shape(mu, logvar, "gaussian_reparameterize");
    require_same_shape(mu, noise, "gaussian_reparameterize");
    Matrix out = mu;
    auto o = out.data();
    const auto lv = logvar.data();
    const auto n = noise.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += std::exp(0.5 * lv[i]) * n[i];
    return out;
}

double kl_to_standard_normal(const Matrix& mu, const Matrix& logvar) {
    require_same_shape(mu, logvar, "kl_to_standard_normal");
    const auto m = mu.data();
    const auto lv = logvar.data();
    double s = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        // expm1(x) − x is the accurate form of exp(x) − 1 − x near zero.
        s += std::max(0.0, std::expm1(lv[i]) - lv[i]) + m[i] * m[i];
    }
    return 0.5 * s;
}

}  // namespace prose
