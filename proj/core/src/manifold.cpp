#include "prose/manifold.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "prose/error.hpp"

namespace prose {

namespace {

Matrix gram_minus_identity(const Matrix& z) {
    Matrix g = matmul_tn(z, z);
    for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
    return g;
}

void check_jacobian_shape(const Matrix& j, const LatentBlocks& z, const char* op) {
    if (j.rows() != z.d() || j.cols() != z.k()) {
        throw ShapeError(std::string(op) + ": jacobian " + j.shape_string() +
                         " does not match latent " + z.matrix().shape_string());
    }
}

// I + s·A
Matrix shifted(const Matrix& a, double s) {
    Matrix out = s * a;
    for (std::size_t i = 0; i < out.rows(); ++i) out(i, i) += 1.0;
    return out;
}

}  // namespace

LatentBlocks::LatentBlocks(Matrix z) : z_(std::move(z)) {
    if (z_.rows() == 0 || z_.cols() == 0) {
        throw ShapeError("LatentBlocks: empty latent " + z_.shape_string());
    }
    if (z_.rows() < z_.cols()) {
        throw ShapeError("LatentBlocks: block dimension d=" + std::to_string(z_.rows()) +
                         " is smaller than partition count k=" + std::to_string(z_.cols()));
    }
    require_finite(z_, "LatentBlocks");
}

void CayleyConfig::validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw ConfigError("CayleyConfig: tau must be positive, got " + std::to_string(tau));
    }
    if (!(solve_tolerance > 0.0)) throw ConfigError("CayleyConfig: solve_tolerance must be positive");
}

double orth_penalty(const LatentBlocks& z) {
    const Matrix g = gram_minus_identity(z.matrix());
    double s = 0.0;
    for (double v : g.data()) s += v * v;
    return s;
}

Matrix orth_penalty_grad(const LatentBlocks& z) {
    return 4.0 * matmul(z.matrix(), gram_minus_identity(z.matrix()));
}

Matrix orth_penalty_grad_vjp(const LatentBlocks& z, const Matrix& upstream) {
    check_jacobian_shape(upstream, z, "orth_penalty_grad_vjp");
    const Matrix& zm = z.matrix();
    // d/dZ ⟨U, 4(Z ZᵀZ − Z)⟩ = 4(U ZᵀZ + Z Uᵀ Z + Z Zᵀ U − U)
    Matrix out = matmul(upstream, matmul_tn(zm, zm));
    out += matmul(zm, matmul_tn(upstream, zm));
    out += matmul(zm, matmul_tn(zm, upstream));
    out -= upstream;
    out *= 4.0;
    return out;
}

Matrix skew_from_jacobian(const Matrix& j, const LatentBlocks& z) {
    check_jacobian_shape(j, z, "skew_from_jacobian");
    const Matrix jz = matmul_nt(j, z.matrix());
    const std::size_t d = jz.rows();
    Matrix a(d, d);
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = r + 1; c < d; ++c) {
            const double v = jz(r, c) - jz(c, r);
            a(r, c) = v;
            a(c, r) = -v;
        }
    }
    return a;
}

LatentBlocks cayley_step(const LatentBlocks& z, const Matrix& j, const CayleyConfig& cfg) {
    cfg.validate();
    const Matrix a = skew_from_jacobian(j, z);
    const double half = 0.5 * cfg.tau;
    const Matrix lhs = shifted(a, half);
    const Matrix rhs = matmul(shifted(a, -half), z.matrix());

    Matrix next;
    try {
        next = solve_linear(lhs, rhs);
    } catch (const SingularError& e) {
        throw SingularError(std::string("cayley_step: (I + tau/2 A) is singular, which cannot "
                                        "happen for a skew A; ") + e.what() +
                                "; ‖A‖_F=" + std::to_string(frobenius_norm(a)),
                            e.pivot());
    }
    const double residual = frobenius_norm(matmul(lhs, next) - rhs);
    if (!(residual <= cfg.solve_tolerance * (1.0 + frobenius_norm(rhs)))) {
        throw SingularError("cayley_step: solve residual " + std::to_string(residual) +
                                " exceeds tolerance",
                            0);
    }
    return LatentBlocks(std::move(next));
}

CayleyVjp cayley_vjp(const LatentBlocks& z, const Matrix& j, const CayleyConfig& cfg,
                     const Matrix& upstream_grad) {
    cfg.validate();
    check_jacobian_shape(upstream_grad, z, "cayley_vjp");
    const Matrix& zm = z.matrix();
    const Matrix a = skew_from_jacobian(j, z);
    const double half = 0.5 * cfg.tau;
    const Matrix lhs = shifted(a, half);
    const Matrix rhs_factor = shifted(a, -half);
    const Matrix next = solve_linear(lhs, matmul(rhs_factor, zm));

    // With L Y = R Z and W = L⁻ᵀ G:
    //   ∂/∂Z (direct)  = Rᵀ W
    //   ∂/∂A           = −τ/2 · W (Z + Y)ᵀ
    const Matrix w = solve_linear(transpose(lhs), upstream_grad);
    Matrix grad_a = matmul_nt(w, zm + next);
    grad_a *= -half;

    // A = J Zᵀ − Z Jᵀ pulls grad_a back as (G_A − G_Aᵀ) Z onto J and
    // (G_Aᵀ − G_A) J onto Z.
    const Matrix antisym = grad_a - transpose(grad_a);
    Matrix grad_z = matmul_tn(rhs_factor, w);
    grad_z -= matmul(antisym, j);
    return {std::move(grad_z), matmul(antisym, zm)};
}

LatentBlocks stiefel_project(const Matrix& m) { return LatentBlocks(qr_orthonormalize(m)); }

double orth_deviation(const LatentBlocks& z) { return std::sqrt(orth_penalty(z)); }

}  // namespace prose
