#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <vector>

#include "kmf/geometry.hpp"
#include "kmf/state.hpp"

namespace kmf {

struct Gradient2 {
    double fx = 0.0;
    double fy = 0.0;
};

class DegenerateStencil : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConditioningError : public std::runtime_error {
public:
    ConditioningError(const std::string& what, double condition)
        : std::runtime_error(what), condition_(condition) {}
    double condition() const noexcept { return condition_; }

private:
    double condition_;
};

/// Solves [s11 s12; s12 s22] d = (r1, r2) by the determinant ratios of
/// Cramer's rule. Every derivative operator here goes through this.
inline Vec2 solve_normal_equations(const StencilSums& m, double r1, double r2) {
    return {(r1 * m.s22 - r2 * m.s12) / m.det, (r2 * m.s11 - r1 * m.s12) / m.det};
}

// Stencil-level operators on explicit offsets (x_i - x_0) and differences.

Gradient2 lsq_gradient(std::span<const Vec2> offsets, std::span<const double> deltas);

/// Same normal matrix as lsq_gradient; differences are replaced by
/// df_i - (dx_i (fx_i - fx_0) + dy_i (fy_i - fy_0)) / 2.
Gradient2 defect_corrected_gradient(std::span<const Vec2> offsets, std::span<const double> deltas,
                                    std::span<const Gradient2> neighbor_grads, Gradient2 center_grad);

/// (fx, fy, fxx, fxy, fyy) from the 5x5 normal equations of the quadratic
/// Taylor model. Throws ConditioningError when the column-scaled normal
/// matrix has condition number above max_condition.
std::array<double, 5> quadratic_derivatives(std::span<const Vec2> offsets, std::span<const double> deltas,
                                            double max_condition = 1e12);

/// 2-norm condition number of the column-scaled quadratic normal matrix.
double quadratic_condition(std::span<const Vec2> offsets);

// Connectivity-based operators. Split stencils are solved in the point's
// frame and rotated back, so results are always Cartesian.

Gradient2 lsq_gradient_first_order(std::size_t center, std::span<const double> field,
                                   const Connectivity& conn, StencilKind stencil = StencilKind::full);

std::array<double, 5> lsq_gradient_quadratic(std::size_t center, std::span<const double> field,
                                             const Connectivity& conn, double max_condition = 1e12);

Gradient2 defect_corrected_gradient(std::size_t center, std::span<const double> field,
                                    std::span<const Gradient2> nodal_grads, const Connectivity& conn,
                                    StencilKind stencil = StencilKind::full);

/// Cartesian q-derivatives per point, component blocks as in FieldBlock4.
struct QGradients {
    FieldBlock4 qx;
    FieldBlock4 qy;

    QGradients() = default;
    explicit QGradients(std::size_t n) : qx(n), qy(n) {}
    std::size_t size() const noexcept { return qx.size(); }
    bool operator==(const QGradients&) const = default;
};

/// First-order full-stencil gradients of every q component.
QGradients first_order_q_gradients(const FieldBlock4& q, const Connectivity& conn, int threads = 1);

/// One Jacobi sweep of the implicit q-derivative formulae: `next` is the
/// defect-corrected full-stencil gradient using `current` as nodal
/// gradients. Returns max |next - current| over all entries.
double q_derivative_sweep(const FieldBlock4& q, const Connectivity& conn, const QGradients& current,
                          QGradients& next, int threads = 1);

struct QDerivativeResult {
    QGradients grads;
    std::vector<double> sweep_change;  ///< max |change| per inner iteration
};

/// n_inner Jacobi sweeps starting from `prev`. Throws std::invalid_argument
/// for n_inner < 1.
QDerivativeResult compute_q_derivatives(const FieldBlock4& q, const Connectivity& conn, int n_inner,
                                        const QGradients& prev, int threads = 1);

/// In-place variant used by the solver: `grads` holds the starting iterate
/// on entry and the result on exit; `scratch` is resized as needed.
void compute_q_derivatives(const FieldBlock4& q, const Connectivity& conn, int n_inner, QGradients& grads,
                           QGradients& scratch, int threads = 1);

}  // namespace kmf
