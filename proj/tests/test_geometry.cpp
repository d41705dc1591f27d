#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "kmf/geometry.hpp"

using namespace kmf;

namespace {

PointCloud parse(const std::string& text) {
    std::istringstream in(text);
    return read_point_cloud(in);
}

std::size_t centre_index(const PointCloud& c, Vec2 p) {
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c.position[i] == p) return i;
    }
    FAIL("point not found");
    return 0;
}

}  // namespace

TEST_CASE("text grid: four interior points") {
    const PointCloud c = parse("# square\n4\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n");
    CHECK(c.size() == 4);
    CHECK(c.count(PointKind::interior) == 4);
    for (const auto& n : c.normal) CHECK(n == Vec2{});
}

TEST_CASE("text grid: unit normals accepted, others rejected") {
    const PointCloud c = parse("2\n0 0 1 0.6 0.8\n1 1 0\n");
    CHECK(c.kind[0] == PointKind::wall);
    CHECK(std::fabs(norm(c.normal[0]) - 1.0) <= 1e-12);
    CHECK_THROWS_AS(parse("2\n0 0 1 1 1\n1 1 0\n"), GridError);
}

TEST_CASE("text grid: errors carry the line number") {
    try {
        parse("# header\n2\n0 0 0\n1 1 7\n");
        FAIL("expected GridError");
    } catch (const GridError& e) {
        CHECK(e.line() == 4);
    }
    CHECK_THROWS_AS(parse("3\n0 0 0\n"), GridError);
    CHECK_THROWS_AS(parse("1\n0 0 2\n"), GridError);
    CHECK_THROWS_AS(parse("2\n0 x 0\n1 1 0\n"), GridError);
}

TEST_CASE("text and binary grids round-trip exactly") {
    const PointCloud c = generate_naca_cloud({40, 10, 1.2, 5.0});
    for (bool binary : {false, true}) {
        std::stringstream s;
        binary ? write_point_cloud_binary(s, c) : write_point_cloud_text(s, c);
        const PointCloud r = read_point_cloud(s);
        CHECK(r.position == c.position);
        CHECK(r.kind == c.kind);
        CHECK(r.normal == c.normal);
    }
}

TEST_CASE("3x3 lattice: centre stencil") {
    const double h = 0.1;
    const PointCloud c = generate_lattice_cloud(3, 3, h);
    StencilOptions opt;
    opt.radius = 1.5 * h;
    const Connectivity conn = build_stencils(c, opt);
    const std::size_t centre = centre_index(c, {h, h});
    CHECK(conn.neighbors(centre, StencilKind::full).size() == 8);
    // Three points with dx > 0 plus the two on the vertical axis.
    CHECK(conn.neighbors(centre, StencilKind::x_pos).size() == 5);
    CHECK(conn.neighbors(centre, StencilKind::x_neg).size() == 5);
    CHECK(conn.sums(centre, StencilKind::full).s12 == 0.0);
    CHECK(conn.min_distance(centre) == doctest::Approx(h).epsilon(1e-15));
}

TEST_CASE("collinear points are deficient") {
    PointCloud c;
    for (int i = 0; i < 12; ++i) c.add({0.1 * i, 0.0}, PointKind::interior);
    CHECK_THROWS_AS(build_stencils(c), StencilDeficiency);
    try {
        build_stencils(c);
    } catch (const StencilDeficiency& e) {
        CHECK(e.entries.size() >= c.size());
    }
}

TEST_CASE("cached sums match recomputation; splits cover the full stencil") {
    const PointCloud c = generate_naca_cloud({60, 20, 1.1, 6.0});
    const Connectivity conn = build_stencils(c);
    for (std::size_t p = 0; p < c.size(); ++p) {
        const auto full = conn.neighbors(p, StencilKind::full);
        const auto off = conn.offsets(p);
        const Frame& f = conn.frame(p);
        std::set<std::uint32_t> all(full.begin(), full.end());
        std::set<std::uint32_t> covered;
        for (StencilKind k : split_kinds) {
            const auto members = conn.neighbors(p, k);
            covered.insert(members.begin(), members.end());
            std::vector<Vec2> local;
            for (std::size_t j = 0; j < full.size(); ++j) {
                if (conn.masks(p)[j] & stencil_bit(k)) local.push_back(f.to_local(off[j]));
            }
            CHECK(local.size() == members.size());
            const StencilSums direct = stencil_sums(local);
            const StencilSums& cached = conn.sums(p, k);
            const double scale = direct.s11 + direct.s22;
            CHECK(std::fabs(direct.s11 - cached.s11) <= 1e-14 * scale);
            CHECK(std::fabs(direct.s12 - cached.s12) <= 1e-14 * scale);
            CHECK(std::fabs(direct.s22 - cached.s22) <= 1e-14 * scale);
        }
        CHECK(covered == all);
        for (std::size_t j = 0; j < full.size(); ++j) CHECK(norm(off[j] - (c.position[full[j]] - c.position[p])) == 0.0);
    }
}

TEST_CASE("split halves overlap only on the axis") {
    const PointCloud c = generate_naca_cloud({60, 20, 1.1, 6.0});
    const Connectivity conn = build_stencils(c);
    for (std::size_t p = 0; p < c.size(); ++p) {
        const auto off = conn.offsets(p);
        const auto masks = conn.masks(p);
        for (std::size_t j = 0; j < off.size(); ++j) {
            const Vec2 l = conn.frame(p).to_local(off[j]);
            const bool xn = masks[j] & stencil_bit(StencilKind::x_neg), xp = masks[j] & stencil_bit(StencilKind::x_pos);
            if (xn && xp && conn.tangent_fallbacks() == 0) CHECK(l.x == 0.0);
            if (!xn && !xp) CHECK(conn.tangent_fallbacks() > 0);
        }
    }
}

TEST_CASE("NACA cloud counts") {
    const PointCloud c = generate_naca_cloud({80, 30, 1.15, 20.0});
    CHECK(c.size() == 2400);
    CHECK(c.count(PointKind::wall) == 80);
    CHECK(c.count(PointKind::outer) == 80);
    CHECK_NOTHROW(c.validate());
    CHECK_THROWS_AS(generate_naca_cloud({38, 30, 1.15, 20.0}), std::invalid_argument);
    CHECK_THROWS_AS(generate_naca_cloud({80, 9, 1.15, 20.0}), std::invalid_argument);
}

TEST_CASE("NACA wall normals are perpendicular to the finite-difference tangent") {
    const PointCloud c = generate_naca_cloud({});
    const double delta = 1e-7;
    int checked = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (c.kind[i] != PointKind::wall) continue;
        const Vec2 p = c.position[i];
        if (p.x < 1e-3 || p.x > 1.0 - 1e-6) continue;
        const double slope =
            (naca0012_half_thickness(p.x + delta) - naca0012_half_thickness(p.x - delta)) / (2.0 * delta);
        const Vec2 t{1.0, p.y >= 0.0 ? slope : -slope};
        CHECK(std::fabs(dot(c.normal[i], t)) / norm(t) <= 1e-6);
        CHECK(c.normal[i].y * p.y > 0.0);
        ++checked;
    }
    CHECK(checked > 90);
}

TEST_CASE("NACA cloud is symmetric about y = 0") {
    const PointCloud c = generate_naca_cloud({});
    for (std::size_t i = 0; i < c.size(); ++i) {
        const Vec2 m{c.position[i].x, -c.position[i].y};
        double best = 1e300;
        std::size_t match = 0;
        for (std::size_t j = 0; j < c.size(); ++j) {
            const double d = norm(c.position[j] - m);
            if (d < best) best = d, match = j;
        }
        CHECK(best <= 1e-12);
        CHECK(c.kind[match] == c.kind[i]);
    }
}

TEST_CASE("NACA surface closes at the trailing edge") {
    CHECK(naca0012_half_thickness(0.0) == 0.0);
    CHECK(std::fabs(naca0012_half_thickness(1.0)) <= 1e-15);
    CHECK(naca0012_half_thickness(0.3) == doctest::Approx(0.06).epsilon(2e-3));
}

TEST_CASE("desk NACA cloud builds stencils without fallbacks") {
    const PointCloud c = generate_naca_cloud({});
    CHECK(c.size() == 5800);
    const Connectivity conn = build_stencils(c);
    CHECK(conn.size() == c.size());
    const CloudStats s = cloud_stats(c, &conn);
    CHECK(s.wall == 100);
    CHECK(s.outer == 100);
    CHECK(s.min_spacing > 0.0);
}

TEST_CASE("parameters for a target point count") {
    for (std::size_t target : {2500u, 6000u, 10000u, 40000u}) {
        const NacaParams p = naca_params_for_points(target);
        const double n = static_cast<double>(p.chord_points) * p.layers;
        CHECK(std::fabs(n - static_cast<double>(target)) <= 0.05 * static_cast<double>(target));
        CHECK(p.chord_points % 2 == 0);
    }
}

TEST_CASE("spatial hash agrees with brute force") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Vec2> pts(500);
    for (auto& p : pts) p = {u(rng), u(rng)};
    const SpatialHash hash(pts, 0.1);
    for (std::size_t i = 0; i < 50; ++i) {
        std::vector<std::uint32_t> got;
        hash.within(pts[i], 0.17, i, got);
        std::sort(got.begin(), got.end());
        std::vector<std::uint32_t> want;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (j != i && norm(pts[j] - pts[i]) < 0.17) want.push_back(static_cast<std::uint32_t>(j));
        }
        CHECK(got == want);

        const auto near = hash.nearest(pts[i], 10, 25, i);
        std::vector<std::pair<double, std::uint32_t>> all;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (j != i) all.push_back({norm(pts[j] - pts[i]), static_cast<std::uint32_t>(j)});
        }
        std::sort(all.begin(), all.end());
        REQUIRE(near.size() == 10);
        for (std::size_t k = 0; k < 10; ++k) CHECK(near[k] == all[k].second);
    }
}

TEST_CASE("radius stencils on a lattice have the expected size") {
    const double h = 0.05;
    const PointCloud c = generate_lattice_cloud(20, 20, h);
    StencilOptions opt;
    opt.radius = 2.1 * h;
    const Connectivity conn = build_stencils(c, opt);
    const std::size_t p = centre_index(c, {10 * h, 10 * h});
    CHECK(conn.neighbors(p, StencilKind::full).size() == 12);
}
