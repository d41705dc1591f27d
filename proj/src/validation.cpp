#include "kmf/validation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kmf/kinetics.hpp"
#include "kmf/lsq.hpp"

namespace kmf {

std::string SuiteResult::summary() const {
    std::ostringstream out;
    out.precision(3);
    out << name << ": " << (passed ? "PASS" : "FAIL") << " (" << cases << " cases, worst " << worst
        << ", tol " << tolerance << ")";
    if (!detail.empty()) out << " " << detail;
    return out.str();
}

namespace {

double rel_err(double got, double want) { return std::fabs(got - want) / std::max(1.0, std::fabs(want)); }

/// Tracks the worst error and the first failing case.
class Tally {
public:
    Tally(std::string name, double tol) { r_.name = std::move(name); r_.tolerance = tol; }

    void check(double err, const std::string& where) {
        ++r_.cases;
        if (!(err <= r_.worst)) r_.worst = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
        if (!(err <= r_.tolerance) && r_.detail.empty()) {
            std::ostringstream out;
            out.precision(17);
            out << "first failure: " << where << " err=" << err;
            r_.detail = out.str();
        }
    }
    void fail(const std::string& what) {
        ++r_.cases;
        r_.worst = std::numeric_limits<double>::infinity();
        if (r_.detail.empty()) r_.detail = "first failure: " + what;
    }
    SuiteResult finish() {
        r_.passed = r_.detail.empty();
        return r_;
    }

private:
    SuiteResult r_;
};

std::string describe(const Primitives& s) {
    std::ostringstream out;
    out.precision(17);
    out << "(rho=" << s.rho << ", u1=" << s.u1 << ", u2=" << s.u2 << ", p=" << s.p << ")";
    return out.str();
}

template <class V>
double worst_rel(const std::array<double, 4>& oracle, const V& closed) {
    double w = 0.0;
    for (std::size_t c = 0; c < 4; ++c) w = std::max(w, rel_err(closed[c], oracle[c]));
    return w;
}

}  // namespace

Primitives random_state(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> pos(0.1, 10.0), vel(-3.0, 3.0);
    Primitives s;
    s.rho = pos(rng);
    s.p = pos(rng);
    s.u1 = vel(rng);
    s.u2 = vel(rng);
    return s;
}

Primitives random_state_with_speed_ratio(std::mt19937_64& rng, Axis axis, double s) {
    Primitives st = random_state(rng);
    const double un = s / std::sqrt(beta_of(st));
    (axis == Axis::x ? st.u1 : st.u2) = un;
    return st;
}

SuiteResult moment_suite(int states, std::uint64_t seed, double tolerance, double gamma) {
    Tally t("moments", tolerance);
    std::mt19937_64 rng(seed);
    for (int k = 0; k < states; ++k) {
        const Primitives s = random_state(rng);
        try {
            const auto u = moment_oracle(s, VelocityRange::full, Multiplier::one, gamma);
            t.check(worst_rel(u.value, primitives_to_conserved(s, gamma)), "U at " + describe(s));
            const auto gx = moment_oracle(s, VelocityRange::full, Multiplier::v1, gamma);
            t.check(worst_rel(gx.value, full_flux(s, Axis::x, gamma)), "Gx at " + describe(s));
            const auto gy = moment_oracle(s, VelocityRange::full, Multiplier::v2, gamma);
            t.check(worst_rel(gy.value, full_flux(s, Axis::y, gamma)), "Gy at " + describe(s));
        } catch (const std::exception& e) {
            t.fail(std::string(e.what()) + " at " + describe(s));
        }
    }
    return t.finish();
}

SuiteResult split_flux_suite(int states, std::uint64_t seed, double tolerance, double identity_tolerance,
                             double gamma) {
    Tally t("split fluxes", tolerance);
    Tally id("splitting identity", identity_tolerance);
    std::mt19937_64 rng(seed);
    std::vector<Primitives> cases;
    for (int k = 0; k < states; ++k) cases.push_back(random_state(rng));
    for (double s : {0.0, 0.5, -0.5, 2.0, -2.0, 8.0, -8.0}) {
        cases.push_back(random_state_with_speed_ratio(rng, Axis::x, s));
        cases.push_back(random_state_with_speed_ratio(rng, Axis::y, s));
    }
    struct Half {
        Axis axis;
        Sign sign;
        VelocityRange range;
        Multiplier mult;
    };
    const Half halves[] = {{Axis::x, Sign::plus, VelocityRange::v1_pos, Multiplier::v1},
                           {Axis::x, Sign::minus, VelocityRange::v1_neg, Multiplier::v1},
                           {Axis::y, Sign::plus, VelocityRange::v2_pos, Multiplier::v2},
                           {Axis::y, Sign::minus, VelocityRange::v2_neg, Multiplier::v2}};
    for (const Primitives& s : cases) {
        for (const Half& h : halves) {
            try {
                const auto oracle = moment_oracle(s, h.range, h.mult, gamma);
                t.check(worst_rel(oracle.value, split_flux(s, h.axis, h.sign, gamma)), "at " + describe(s));
            } catch (const std::exception& e) {
                t.fail(std::string(e.what()) + " at " + describe(s));
            }
        }
        for (Axis a : {Axis::x, Axis::y}) {
            const FluxVector g = full_flux(s, a, gamma);
            const FluxVector sum = split_flux(s, a, Sign::plus, gamma) + split_flux(s, a, Sign::minus, gamma);
            double w = 0.0;
            for (std::size_t c = 0; c < 4; ++c) w = std::max(w, rel_err(sum[c], g[c]));
            id.check(w, "at " + describe(s));
        }
    }
    SuiteResult r = t.finish();
    const SuiteResult ri = id.finish();
    std::ostringstream extra;
    extra.precision(3);
    extra << "identity worst " << ri.worst << " (tol " << identity_tolerance << ")";
    r.passed = r.passed && ri.passed;
    r.detail = r.detail.empty() ? (ri.detail.empty() ? extra.str() : "identity " + ri.detail)
                                : r.detail + "; " + extra.str();
    return r;
}

SuiteResult q_roundtrip_suite(int states, std::uint64_t seed, double tolerance, double gamma) {
    Tally t("q round trip", tolerance);
    std::mt19937_64 rng(seed);
    for (int k = 0; k < states; ++k) {
        const Primitives s = random_state(rng);
        const Primitives a = q_to_primitives(primitives_to_q(s, gamma), gamma);
        const Primitives b = conserved_to_primitives(primitives_to_conserved(s, gamma), gamma);
        double w = 0.0;
        for (const Primitives& r : {a, b}) {
            w = std::max({w, std::fabs(r.rho - s.rho) / s.rho, std::fabs(r.p - s.p) / s.p,
                          std::fabs(r.u1 - s.u1) / std::max(1.0, std::fabs(s.u1)),
                          std::fabs(r.u2 - s.u2) / std::max(1.0, std::fabs(s.u2))});
        }
        t.check(w, describe(s));
    }
    return t.finish();
}

namespace {

struct Quadratic {
    double c0, cx, cy, cxx, cxy, cyy;  ///< f = c0 + cx x + cy y + cxx x^2 + cxy x y + cyy y^2

    double operator()(Vec2 p) const {
        return c0 + cx * p.x + cy * p.y + cxx * p.x * p.x + cxy * p.x * p.y + cyy * p.y * p.y;
    }
    Gradient2 grad(Vec2 p) const { return {cx + 2.0 * cxx * p.x + cxy * p.y, cy + cxy * p.x + 2.0 * cyy * p.y}; }
};

Quadratic random_quadratic(std::mt19937_64& rng, bool linear) {
    std::uniform_real_distribution<double> c(-2.0, 2.0);
    Quadratic q{c(rng), c(rng), c(rng), c(rng), c(rng), c(rng)};
    if (linear) q.cxx = q.cxy = q.cyy = 0.0;
    return q;
}

double grad_err(Gradient2 got, Gradient2 want) {
    const double scale = std::max({1.0, std::fabs(want.fx), std::fabs(want.fy)});
    return std::max(std::fabs(got.fx - want.fx), std::fabs(got.fy - want.fy)) / scale;
}

/// Errors of the three operators on one stencil; the centre is x0.
std::array<double, 3> stencil_errors(Vec2 x0, std::span<const Vec2> offsets, const Quadratic& lin,
                                     const Quadratic& quad, bool with_quadratic_fit) {
    std::vector<double> dl(offsets.size()), dq(offsets.size());
    std::vector<Gradient2> nodal(offsets.size());
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        const Vec2 xi = x0 + offsets[i];
        dl[i] = lin(xi) - lin(x0);
        dq[i] = quad(xi) - quad(x0);
        nodal[i] = quad.grad(xi);
    }
    std::array<double, 3> e{};
    e[0] = grad_err(lsq_gradient(offsets, dl), lin.grad(x0));
    e[1] = grad_err(defect_corrected_gradient(offsets, dq, nodal, quad.grad(x0)), quad.grad(x0));
    if (with_quadratic_fit) {
        const auto d = quadratic_derivatives(offsets, dq);
        e[2] = grad_err({d[0], d[1]}, quad.grad(x0));
    }
    return e;
}

}  // namespace

SuiteResult k_exactness_suite(int stencils, std::uint64_t seed, double tolerance) {
    Tally t("k-exactness", tolerance);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0), centre(-5.0, 5.0);
    std::uniform_int_distribution<int> count(6, 16);
    int made = 0;
    while (made < stencils) {
        const double h = std::pow(10.0, -3.0 + 3.0 * unit(rng));
        const Vec2 x0{centre(rng), centre(rng)};
        std::vector<Vec2> offsets(static_cast<std::size_t>(count(rng)));
        for (auto& d : offsets) {
            const double r = h * (0.2 + 0.8 * unit(rng)), th = 2.0 * M_PI * unit(rng);
            d = {r * std::cos(th), r * std::sin(th)};
        }
        if (!(quadratic_condition(offsets) < 1e8)) continue;
        ++made;
        const Quadratic lin = random_quadratic(rng, true), quad = random_quadratic(rng, false);
        std::ostringstream where;
        where << "stencil " << made << " (h=" << h << ", n=" << offsets.size() << ")";
        try {
            const auto e = stencil_errors(x0, offsets, lin, quad, true);
            t.check(std::max({e[0], e[1], e[2]}), where.str());
        } catch (const std::exception& ex) {
            t.fail(std::string(ex.what()) + " at " + where.str());
        }
    }
    return t.finish();
}

SuiteResult k_exactness_suite(const PointCloud& cloud, const Connectivity& conn, std::uint64_t seed,
                              double tolerance) {
    Tally t("k-exactness (cloud)", tolerance);
    std::mt19937_64 rng(seed);
    const Quadratic lin = random_quadratic(rng, true), quad = random_quadratic(rng, false);
    for (std::size_t p = 0; p < cloud.size(); ++p) {
        const auto full = conn.neighbors(p, StencilKind::full);
        const auto off = conn.offsets(p);
        const auto masks = conn.masks(p);
        std::vector<StencilKind> kinds{StencilKind::full};
        for (StencilKind k : Connectivity::required_splits(cloud.kind[p])) kinds.push_back(k);
        for (StencilKind k : kinds) {
            std::vector<Vec2> sub;
            for (std::size_t j = 0; j < full.size(); ++j) {
                if (k == StencilKind::full || (masks[j] & stencil_bit(k))) sub.push_back(off[j]);
            }
            std::ostringstream where;
            where << "point " << p << " stencil " << to_string(k);
            try {
                const auto e = stencil_errors(cloud.position[p], sub, lin, quad, false);
                t.check(std::max(e[0], e[1]), where.str());
            } catch (const std::exception& ex) {
                t.fail(std::string(ex.what()) + " at " + where.str());
            }
        }
    }
    return t.finish();
}

SuiteResult free_stream_suite(const PointCloud& cloud, const Connectivity& conn, const SolverConfig& config,
                              double tolerance) {
    Tally t("free stream", tolerance);
    Solver solver(config, cloud, conn);
    const FieldBlock4 r = solver.current_residual();
    for (std::size_t p = 0; p < cloud.size(); ++p) {
        double w = 0.0;
        for (std::size_t c = 0; c < 4; ++c) w = std::max(w, std::fabs(r.at(c, p)));
        t.check(w, std::string(to_string(cloud.kind[p])) + " point " + std::to_string(p));
    }
    return t.finish();
}

PrimitiveField perturbed_free_stream(const PointCloud& cloud, const SolverConfig& config, double amp,
                                     std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI), wave(0.5, 2.0);
    std::array<double, 8> ph{}, k{};
    for (std::size_t i = 0; i < ph.size(); ++i) {
        ph[i] = phase(rng);
        k[i] = wave(rng);
    }
    const Primitives fs = free_stream(config);
    PrimitiveField out(cloud.size());
    for (std::size_t p = 0; p < cloud.size(); ++p) {
        const Vec2 x = cloud.position[p];
        const auto bump = [&](std::size_t c) {
            return amp * std::sin(k[2 * c] * x.x + ph[2 * c]) * std::cos(k[2 * c + 1] * x.y + ph[2 * c + 1]);
        };
        out.set(p, {fs.rho * (1.0 + bump(0)), fs.u1 + config.mach * bump(1), fs.u2 + config.mach * bump(2),
                    fs.p * (1.0 + bump(3))});
    }
    return out;
}

SuiteResult mode_equivalence_suite(const PointCloud& cloud, const Connectivity& conn, const SolverConfig& config,
                                   std::uint64_t seed, double tolerance) {
    Tally t("mode equivalence", tolerance);
    const PrimitiveField state = perturbed_free_stream(cloud, config, 0.05, seed);
    std::array<FieldBlock4, 2> r;
    for (ExecutionMode m : {ExecutionMode::fused, ExecutionMode::split4}) {
        SolverConfig c = config;
        c.mode = m;
        Solver solver(c, cloud, conn);
        solver.set_state(state);
        r[m == ExecutionMode::fused ? 0 : 1] = solver.current_residual();
    }
    for (std::size_t p = 0; p < cloud.size(); ++p) {
        double w = 0.0;
        for (std::size_t c = 0; c < 4; ++c) w = std::max(w, std::fabs(r[0].at(c, p) - r[1].at(c, p)));
        t.check(w, "point " + std::to_string(p));
    }
    return t.finish();
}

}  // namespace kmf
