#include "kmf/kinetics.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <numbers>
#include <vector>

namespace kmf {

FluxVector full_flux(const Primitives& prim, Axis axis, double gamma) {
    const Conserved u = primitives_to_conserved(prim, gamma);
    const double un = axis == Axis::x ? prim.u1 : prim.u2;
    const double enthalpy_flux = (prim.p + u[3]) * un;
    if (axis == Axis::x) {
        return FluxVector{{prim.rho * prim.u1, prim.p + prim.rho * prim.u1 * prim.u1,
                           prim.rho * prim.u1 * prim.u2, enthalpy_flux}};
    }
    return FluxVector{{prim.rho * prim.u2, prim.rho * prim.u1 * prim.u2,
                       prim.p + prim.rho * prim.u2 * prim.u2, enthalpy_flux}};
}

FluxVector split_flux(const Primitives& prim, Axis axis, Sign sign, double gamma) {
    const double beta = beta_of(prim);
    const double un = axis == Axis::x ? prim.u1 : prim.u2;
    const double ut = axis == Axis::x ? prim.u2 : prim.u1;
    const double sqrt_beta = std::sqrt(beta);
    const double s = un * sqrt_beta;
    const double pm = sign == Sign::plus ? 1.0 : -1.0;

    // erfc keeps the vanishing half-range accurate for large |s|.
    const double a = 0.5 * std::erfc(-pm * s);
    const double b = pm * std::exp(-s * s) / (2.0 * std::sqrt(std::numbers::pi * beta));
    const double half_inv_beta = 0.5 / beta;

    const double m1 = un * a + b;
    const double m2 = (un * un + half_inv_beta) * a + un * b;
    const double m3 = (un * un * un + 3.0 * un * half_inv_beta) * a + (un * un + 2.0 * half_inv_beta) * b;
    const double i0 = internal_energy_scale(beta, gamma);

    const double mass = prim.rho * m1;
    const double normal_mom = prim.rho * m2;
    const double tangent_mom = prim.rho * ut * m1;
    const double energy = prim.rho * (i0 * m1 + 0.5 * m3 + 0.5 * m1 * (ut * ut + half_inv_beta));

    if (axis == Axis::x) return FluxVector{{mass, normal_mom, tangent_mom, energy}};
    return FluxVector{{mass, tangent_mom, normal_mom, energy}};
}

SplitFluxTable split_flux_table(const Primitives& prim, double gamma) {
    return {split_flux(prim, Axis::x, Sign::plus, gamma), split_flux(prim, Axis::x, Sign::minus, gamma),
            split_flux(prim, Axis::y, Sign::plus, gamma), split_flux(prim, Axis::y, Sign::minus, gamma)};
}

// ---------------------------------------------------------------------------

namespace {

using Rule = boost::math::quadrature::gauss<double, 30>;

struct Node {
    double x;
    double w;
};

// Composite Gauss-Legendre nodes on [lo, hi] with `panels` equal panels.
std::vector<Node> composite_nodes(double lo, double hi, int panels) {
    std::vector<Node> nodes;
    if (!(hi > lo)) return nodes;
    const auto& abscissa = Rule::abscissa();
    const auto& weights = Rule::weights();
    const double width = (hi - lo) / panels;
    for (int k = 0; k < panels; ++k) {
        const double mid = lo + (k + 0.5) * width;
        const double half = 0.5 * width;
        for (std::size_t j = 0; j < abscissa.size(); ++j) {
            // Boost stores the non-negative half of a symmetric rule.
            nodes.push_back({mid + half * abscissa[j], half * weights[j]});
            if (abscissa[j] != 0.0) nodes.push_back({mid - half * abscissa[j], half * weights[j]});
        }
    }
    return nodes;
}

std::array<double, 4> integrate(const Primitives& prim, VelocityRange range, Multiplier mult,
                                double gamma, int panels) {
    const double beta = beta_of(prim);
    const double reach = 12.0 / std::sqrt(2.0 * beta);
    double lo1 = prim.u1 - reach, hi1 = prim.u1 + reach;
    double lo2 = prim.u2 - reach, hi2 = prim.u2 + reach;
    switch (range) {
        case VelocityRange::full: break;
        case VelocityRange::v1_pos: lo1 = std::max(lo1, 0.0); break;
        case VelocityRange::v1_neg: hi1 = std::min(hi1, 0.0); break;
        case VelocityRange::v2_pos: lo2 = std::max(lo2, 0.0); break;
        case VelocityRange::v2_neg: hi2 = std::min(hi2, 0.0); break;
    }
    const auto n1 = composite_nodes(lo1, hi1, panels);
    const auto n2 = composite_nodes(lo2, hi2, panels);
    const double i0 = internal_energy_scale(beta, gamma);
    const double prefactor = prim.rho * beta / std::numbers::pi;

    std::array<double, 4> sum{};
    for (const Node& a : n1) {
        const double g1 = std::exp(-beta * (a.x - prim.u1) * (a.x - prim.u1));
        for (const Node& b : n2) {
            const double f = prefactor * g1 * std::exp(-beta * (b.x - prim.u2) * (b.x - prim.u2));
            double m = 1.0;
            if (mult == Multiplier::v1) m = a.x;
            if (mult == Multiplier::v2) m = b.x;
            const double wf = a.w * b.w * f * m;
            sum[0] += wf;
            sum[1] += wf * a.x;
            sum[2] += wf * b.x;
            sum[3] += wf * (i0 + 0.5 * (a.x * a.x + b.x * b.x));
        }
    }
    return sum;
}

}  // namespace

MomentVectorEstimate moment_oracle(const Primitives& prim, VelocityRange range,
                                   Multiplier multiplier, double gamma, double tolerance) {
    if (!(prim.rho > 0.0) || !(prim.p > 0.0)) throw DomainError("moment_oracle: invalid state");
    const auto coarse = integrate(prim, range, multiplier, gamma, 8);
    const auto fine = integrate(prim, range, multiplier, gamma, 16);
    MomentVectorEstimate out;
    out.value = fine;
    double worst = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
        const double err = std::fabs(fine[c] - coarse[c]);
        out.error = std::max(out.error, err);
        worst = std::max(worst, err / std::max(1.0, std::fabs(fine[c])));
    }
    if (worst > tolerance) {
        throw QuadratureError("moment_oracle: requested tolerance not reached", worst);
    }
    return out;
}

MomentEstimate moment_oracle(const Primitives& prim, int psi_component, VelocityRange range,
                             Multiplier multiplier, double gamma, double tolerance) {
    if (psi_component < 0 || psi_component > 3) throw DomainError("psi component must be 0..3");
    const auto all = moment_oracle(prim, range, multiplier, gamma, tolerance);
    return {all.value[static_cast<std::size_t>(psi_component)], all.error};
}

}  // namespace kmf
