#pragma once

// Orthonormality geometry of the latent block matrix Z ∈ R^{d×k}: the soft
// penalty ‖ZᵀZ − I‖²_F with its derivatives, and the Cayley retraction
//     Z_new = (I + τ/2·A)⁻¹ (I − τ/2·A) Z,   A = J Zᵀ − Z Jᵀ,
// together with its vector-Jacobian product so training can backpropagate
// through the step.

#include <cstddef>

#include "prose/linalg.hpp"

namespace prose {

// A d×k latent code. Column i is the code vector of partition i.
class LatentBlocks {
public:
    // Throws ShapeError when d < k (orthonormal columns are infeasible) or
    // either dimension is zero, NonFiniteError on NaN/Inf entries.
    explicit LatentBlocks(Matrix z);

    std::size_t d() const noexcept { return z_.rows(); }
    std::size_t k() const noexcept { return z_.cols(); }
    const Matrix& matrix() const noexcept { return z_; }

    friend bool operator==(const LatentBlocks&, const LatentBlocks&) = default;

private:
    Matrix z_;
};

struct CayleyConfig {
    double tau = 0.1;
    // Bound on ‖(I + τ/2 A) Z_new − (I − τ/2 A) Z‖_F checked after every solve.
    double solve_tolerance = 1e-10;

    void validate() const;
};

// ‖ZᵀZ − I‖²_F
double orth_penalty(const LatentBlocks& z);

// ∂/∂Z of orth_penalty: 4·Z·(ZᵀZ − I).
Matrix orth_penalty_grad(const LatentBlocks& z);

// Reverse-mode product through orth_penalty_grad: given an upstream gradient
// U on its output, returns ∂⟨U, 4Z(ZᵀZ − I)⟩/∂Z.
Matrix orth_penalty_grad_vjp(const LatentBlocks& z, const Matrix& upstream);

// A = J Zᵀ − Z Jᵀ. J Zᵀ is formed once and antisymmetrized, so A + Aᵀ is
// exactly zero in floating point.
Matrix skew_from_jacobian(const Matrix& j, const LatentBlocks& z);

LatentBlocks cayley_step(const LatentBlocks& z, const Matrix& j, const CayleyConfig& cfg);

struct CayleyVjp {
    Matrix grad_wrt_z;
    Matrix grad_wrt_j;
};

// Gradients of ⟨upstream, cayley_step(z, j)⟩ with respect to z and j, from
// the implicit relation (I + τ/2 A) Z_new = (I − τ/2 A) Z.
CayleyVjp cayley_vjp(const LatentBlocks& z, const Matrix& j, const CayleyConfig& cfg,
                     const Matrix& upstream_grad);

// QR-based projection onto the Stiefel manifold.
LatentBlocks stiefel_project(const Matrix& m);

// ‖ZᵀZ − I‖_F (unsquared), used as a per-example evaluation statistic.
double orth_deviation(const LatentBlocks& z);

}  // namespace prose
