#include "kmf/state.hpp"

#include <cmath>
#include <sstream>

namespace kmf {

namespace {

void require_gamma(double gamma) {
    if (!(gamma > 1.0)) throw DomainError("gamma must exceed 1");
}

void require_positive(const Primitives& prim) {
    if (!(prim.rho > 0.0) || !(prim.p > 0.0)) {
        std::ostringstream os;
        os << "nonpositive state: rho=" << prim.rho << " p=" << prim.p;
        throw DomainError(os.str());
    }
}

}  // namespace

PrimitiveField::PrimitiveField(std::size_t n, const Primitives& uniform) : block_(n) {
    for (std::size_t i = 0; i < n; ++i) set(i, uniform);
}

Conserved primitives_to_conserved(const Primitives& prim, double gamma) {
    require_gamma(gamma);
    require_positive(prim);
    const double ke = 0.5 * (prim.u1 * prim.u1 + prim.u2 * prim.u2);
    const double rho_e = prim.p / (gamma - 1.0) + prim.rho * ke;
    return Conserved{{prim.rho, prim.rho * prim.u1, prim.rho * prim.u2, rho_e}};
}

Primitives conserved_to_primitives(const Conserved& u, double gamma, std::size_t point) {
    require_gamma(gamma);
    const double rho = u[0];
    if (!(rho > 0.0)) {
        std::ostringstream os;
        os << "nonpositive density " << rho;
        if (point != PositivityError::no_point) os << " at point " << point;
        throw PositivityError(os.str(), point);
    }
    const double u1 = u[1] / rho;
    const double u2 = u[2] / rho;
    const double p = (gamma - 1.0) * (u[3] - 0.5 * rho * (u1 * u1 + u2 * u2));
    if (!(p > 0.0)) {
        std::ostringstream os;
        os << "nonpositive pressure " << p;
        if (point != PositivityError::no_point) os << " at point " << point;
        throw PositivityError(os.str(), point);
    }
    return {rho, u1, u2, p};
}

QVector primitives_to_q(const Primitives& prim, double gamma) {
    require_gamma(gamma);
    require_positive(prim);
    const double beta = beta_of(prim);
    const double two_beta = 2.0 * beta;
    return QVector{{std::log(prim.rho) + std::log(beta) / (gamma - 1.0) -
                        beta * (prim.u1 * prim.u1 + prim.u2 * prim.u2),
                    two_beta * prim.u1, two_beta * prim.u2, -two_beta}};
}

Primitives q_to_primitives(const QVector& q, double gamma) {
    require_gamma(gamma);
    if (!(q[3] < 0.0)) {
        std::ostringstream os;
        os << "q4 must be negative, got " << q[3];
        throw DomainError(os.str());
    }
    const double beta = -0.5 * q[3];
    const double u1 = q[1] / (2.0 * beta);
    const double u2 = q[2] / (2.0 * beta);
    const double rho =
        std::exp(q[0] - std::log(beta) / (gamma - 1.0) + beta * (u1 * u1 + u2 * u2));
    return {rho, u1, u2, rho / (2.0 * beta)};
}

}  // namespace kmf
