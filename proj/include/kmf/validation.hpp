#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "kmf/geometry.hpp"
#include "kmf/solver.hpp"
#include "kmf/state.hpp"

namespace kmf {

/// Outcome of one validation suite. `worst` is the largest error seen, in
/// the units the tolerance is stated in.
struct SuiteResult {
    std::string name;
    bool passed = false;
    std::size_t cases = 0;
    double worst = 0.0;
    double tolerance = 0.0;
    std::string detail;  ///< first failing case, if any

    std::string summary() const;
};

/// Random valid state: rho, p in [0.1, 10], velocity components in [-3, 3].
Primitives random_state(std::mt19937_64& rng);
/// Random valid state whose velocity along `axis` gives u_n sqrt(beta) = s.
Primitives random_state_with_speed_ratio(std::mt19937_64& rng, Axis axis, double s);

/// <Psi, F> = U and <Psi, v_k F> = G_k against the quadrature oracle,
/// relative to max(1, |value|).
SuiteResult moment_suite(int states, std::uint64_t seed, double tolerance = 1e-8, double gamma = default_gamma);

/// Closed-form split fluxes against half-range quadrature (relative, as
/// above) on `states` random states plus the listed speed ratios along both
/// axes, and |G+ + G- - G| / max(1, |G|) <= identity_tolerance.
SuiteResult split_flux_suite(int states, std::uint64_t seed, double tolerance = 1e-8,
                             double identity_tolerance = 1e-13, double gamma = default_gamma);

/// primitives -> q -> primitives and primitives -> conserved -> primitives,
/// componentwise relative error.
SuiteResult q_roundtrip_suite(int states, std::uint64_t seed, double tolerance = 1e-13,
                              double gamma = default_gamma);

/// Random nondegenerate stencils: first-order gradient exact on linear
/// fields, defect-corrected gradient (exact nodal gradients) and quadratic
/// least squares exact on quadratic fields. Error relative to max(1, |grad|).
SuiteResult k_exactness_suite(int stencils, std::uint64_t seed, double tolerance = 1e-10);

/// The same exactness checks on every full and split stencil of a cloud.
SuiteResult k_exactness_suite(const PointCloud& cloud, const Connectivity& conn, std::uint64_t seed,
                              double tolerance = 1e-10);

/// Residual of uniform free stream at every point, boundaries included.
SuiteResult free_stream_suite(const PointCloud& cloud, const Connectivity& conn, const SolverConfig& config,
                              double tolerance = 1e-12);

/// fused vs split4 residual on a randomly perturbed free stream.
SuiteResult mode_equivalence_suite(const PointCloud& cloud, const Connectivity& conn, const SolverConfig& config,
                                   std::uint64_t seed, double tolerance = 1e-14);

/// Free stream with small smooth perturbations (relative amplitude `amp`).
PrimitiveField perturbed_free_stream(const PointCloud& cloud, const SolverConfig& config, double amp,
                                     std::uint64_t seed);

}  // namespace kmf
