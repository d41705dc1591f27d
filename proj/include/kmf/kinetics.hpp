#pragma once

#include "kmf/state.hpp"

namespace kmf {

enum class Axis { x, y };
enum class Sign { plus, minus };

/// Flux of (mass, x-momentum, y-momentum, energy) across a line normal to
/// the named axis.
using FluxVector = Vector4<struct FluxTag>;

FluxVector full_flux(const Primitives& prim, Axis axis, double gamma = default_gamma);

/// Kinetic split flux: the Psi-moment of v_axis^{+/-} F over the half-range
/// of molecular velocity along `axis` (v > 0 for plus, v < 0 for minus).
///
/// With s = u_n sqrt(beta), A = erfc(-/+ s) / 2 and
/// B = exp(-s^2) / (2 sqrt(pi beta)), the half-range velocity moments are
///   M1 = u_n A +/- B
///   M2 = (u_n^2 + 1/(2 beta)) A +/- u_n B
///   M3 = (u_n^3 + 3 u_n/(2 beta)) A +/- (u_n^2 + 1/beta) B
/// and the flux is rho (M1, M2, u_t M1, I0 M1 + M3/2 + M1 (u_t^2 + 1/(2 beta))/2)
/// with normal/tangential momentum slots placed according to `axis`.
FluxVector split_flux(const Primitives& prim, Axis axis, Sign sign,
                      double gamma = default_gamma);

/// Gx+, Gx-, Gy+, Gy- at one state.
struct SplitFluxTable {
    FluxVector gx_plus;
    FluxVector gx_minus;
    FluxVector gy_plus;
    FluxVector gy_minus;
};

SplitFluxTable split_flux_table(const Primitives& prim, double gamma = default_gamma);

/// Mean internal energy of the non-translational degrees of freedom,
/// I0 = (2 - gamma) / ((gamma - 1) 2 beta).
inline double internal_energy_scale(double beta, double gamma) {
    return (2.0 - gamma) / ((gamma - 1.0) * 2.0 * beta);
}

// ---------------------------------------------------------------------------
// Quadrature oracle for Maxwellian moments. Used by the validation suites to
// certify the closed forms above; not on the solver path.

enum class VelocityRange { full, v1_pos, v1_neg, v2_pos, v2_neg };
enum class Multiplier { one, v1, v2 };

struct MomentEstimate {
    double value = 0.0;
    double error = 0.0;  ///< |coarse - fine| between two panel counts
};

struct MomentVectorEstimate {
    std::array<double, 4> value{};
    double error = 0.0;  ///< max over components
};

class QuadratureError : public std::runtime_error {
public:
    QuadratureError(const std::string& what, double estimate)
        : std::runtime_error(what), estimate_(estimate) {}
    double estimate() const noexcept { return estimate_; }

private:
    double estimate_;
};

/// Integrates <Psi, m F> over the requested velocity range for all four
/// Psi components. The internal-energy integral is done analytically; the
/// two velocity axes use composite Gauss-Legendre on u +/- 12 / sqrt(2 beta).
/// Throws QuadratureError if the estimated error exceeds
/// tolerance * max(1, |value|) for any component.
MomentVectorEstimate moment_oracle(const Primitives& prim, VelocityRange range,
                                   Multiplier multiplier, double gamma = default_gamma,
                                   double tolerance = 1e-10);

/// Single Psi component (0..3) of the above.
MomentEstimate moment_oracle(const Primitives& prim, int psi_component, VelocityRange range,
                             Multiplier multiplier, double gamma = default_gamma,
                             double tolerance = 1e-10);

}  // namespace kmf
