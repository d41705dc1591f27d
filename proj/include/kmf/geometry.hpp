#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmf/vec.hpp"

namespace kmf {

enum class PointKind : std::uint8_t { interior = 0, wall = 1, outer = 2 };

const char* to_string(PointKind kind);

/// Thrown by the grid readers. `line` is 1-based for the text format and 0
/// for the binary format or for whole-cloud validation failures.
class GridError : public std::runtime_error {
public:
    GridError(const std::string& what, std::size_t line) : std::runtime_error(what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Points with classification. Boundary points carry a unit normal: outward
/// from the domain on the outer boundary, pointing away from the body (into
/// the fluid) on walls. Interior normals are zero.
struct PointCloud {
    std::vector<Vec2> position;
    std::vector<PointKind> kind;
    std::vector<Vec2> normal;

    std::size_t size() const noexcept { return position.size(); }
    void add(Vec2 pos, PointKind k, Vec2 n = {});
    std::size_t count(PointKind k) const;

    /// Throws GridError if an invariant fails.
    void validate() const;
};

/// Text grid: `n_points`, then `x y flag [nx ny]` per point, '#' comments.
PointCloud read_point_cloud_text(std::istream& in);
/// Binary grid with the KMF1 header (see README).
PointCloud read_point_cloud_binary(std::istream& in);
/// Dispatches on the leading magic bytes.
PointCloud read_point_cloud(std::istream& in);
PointCloud read_point_cloud(const std::string& path);

void write_point_cloud_text(std::ostream& out, const PointCloud& cloud);
void write_point_cloud_binary(std::ostream& out, const PointCloud& cloud);
/// Binary if the path ends in ".kmf", text otherwise.
void write_point_cloud(const std::string& path, const PointCloud& cloud);

struct NacaParams {
    int chord_points = 100;   ///< points per ring (even)
    int layers = 58;          ///< rings including wall and outer
    double growth = 1.063;    ///< ratio of successive ring offsets
    double far_field = 10.0;  ///< outer radius in chords, centred at mid-chord
};

/// Parameters whose cloud has close to `target` points: growth 1 + 2 pi / N
/// keeps cells near-isotropic and the first layer matches the surface
/// spacing. Among even N, the one giving the nearest count is chosen.
NacaParams naca_params_for_points(std::size_t target, double far_field = 10.0);

/// Closed-trailing-edge NACA 0012 half thickness at chord station x in [0, 1].
double naca0012_half_thickness(double x);
double naca0012_half_thickness_slope(double x);

/// O-type cloud: ring 0 is the airfoil surface (wall), ring layers-1 is a
/// circle of radius far_field (outer); rings in between are offset curves of
/// the surface at geometrically growing distances. Exactly symmetric about y = 0.
PointCloud generate_naca_cloud(const NacaParams& params);

/// nx by ny lattice with spacing h. Edge points become outer boundary
/// points with outward normals (diagonal at corners) unless all_interior.
PointCloud generate_lattice_cloud(int nx, int ny, double h, Vec2 origin = {},
                                  bool all_interior = false);

// ---------------------------------------------------------------------------

/// Uniform-bin spatial hash over the bounding box of a point set.
class SpatialHash {
public:
    SpatialHash(std::span<const Vec2> points, double cell_size);

    /// Indices j != self with |p_j - p| < radius, unordered.
    void within(Vec2 p, double radius, std::size_t self, std::vector<std::uint32_t>& out) const;

    /// The k nearest points to p (excluding self), plus any further points
    /// tied with the k-th distance, up to `cap`. Ordered by (distance, index).
    std::vector<std::uint32_t> nearest(Vec2 p, int k, int cap, std::size_t self) const;

    double cell_size() const noexcept { return cell_; }

private:
    std::int64_t cell_x(double x) const;
    std::int64_t cell_y(double y) const;

    std::span<const Vec2> points_;
    Vec2 lo_{};
    double cell_ = 1.0;
    std::int64_t nx_ = 1;
    std::int64_t ny_ = 1;
    std::vector<std::uint32_t> bin_start_;
    std::vector<std::uint32_t> bin_items_;
};

// ---------------------------------------------------------------------------

/// Stencil selector. Split stencils are taken in the point's local frame
/// (e1, e2): the Cartesian axes for interior points, (tangent, normal) for
/// boundary points. Offsets exactly zero along an axis belong to both halves.
enum class StencilKind : std::uint8_t { full = 0, x_neg = 1, x_pos = 2, y_neg = 3, y_pos = 4 };

inline constexpr std::array<StencilKind, 4> split_kinds{StencilKind::x_neg, StencilKind::x_pos,
                                                        StencilKind::y_neg, StencilKind::y_pos};

const char* to_string(StencilKind kind);

/// Bit in a neighbor's membership mask for the given split stencil.
constexpr std::uint8_t stencil_bit(StencilKind kind) {
    return static_cast<std::uint8_t>(1u << (static_cast<unsigned>(kind) - 1u));
}

/// Least-squares geometry of one stencil in its frame:
/// s11 = sum d1^2, s12 = sum d1 d2, s22 = sum d2^2, det = s11 s22 - s12^2.
struct StencilSums {
    double s11 = 0.0;
    double s12 = 0.0;
    double s22 = 0.0;
    double det = 0.0;
};

struct Frame {
    Vec2 e1{1.0, 0.0};
    Vec2 e2{0.0, 1.0};

    Vec2 to_local(Vec2 d) const { return {dot(d, e1), dot(d, e2)}; }
    Vec2 to_global(Vec2 l) const { return e1 * l.x + e2 * l.y; }
};

/// Frame used for a point: Cartesian for interior points, (tangent, normal)
/// with e2 = stored normal for boundary points.
Frame frame_for(PointKind kind, Vec2 normal);

struct StencilDeficiency : std::runtime_error {
    struct Entry {
        std::size_t point;
        StencilKind kind;
        std::size_t size;
        double det;
    };
    explicit StencilDeficiency(std::vector<Entry> entries);
    std::vector<Entry> entries;
};

struct StencilOptions {
    double radius = 0.0;          ///< <= 0 selects k-nearest for every point
    int k = 15;                   ///< k-nearest fallback size
    int k_cap = 25;               ///< maximum stencil size including distance ties
    int k_max = 64;               ///< k is doubled up to this while a required split is deficient
    int min_radius_neighbors = 8; ///< radius stencils smaller than this fall back to k-nearest
    int min_split_size = 3;
    double det_tolerance = 1e-12; ///< relative to (local scale)^4
};

/// Immutable full and split stencils with cached least-squares sums.
class Connectivity {
public:
    std::size_t size() const noexcept { return min_distance_.size(); }

    std::span<const std::uint32_t> neighbors(std::size_t p, StencilKind kind) const;
    /// Cartesian offsets x_j - x_p of the full stencil, aligned with neighbors(p, full).
    std::span<const Vec2> offsets(std::size_t p) const;
    /// Split-stencil membership bits of each full-stencil entry.
    std::span<const std::uint8_t> masks(std::size_t p) const;

    const StencilSums& sums(std::size_t p, StencilKind kind) const {
        return sums_[static_cast<std::size_t>(kind)][p];
    }
    const Frame& frame(std::size_t p) const { return frame_[p]; }
    PointKind kind(std::size_t p) const { return kind_[p]; }
    double min_distance(std::size_t p) const { return min_distance_[p]; }
    /// Wall points whose tangential split stencils were replaced by the full stencil.
    std::size_t tangent_fallbacks() const noexcept { return tangent_fallbacks_; }

    /// Split stencils each point must have for the flux residual.
    static std::vector<StencilKind> required_splits(PointKind kind);

private:
    friend Connectivity build_stencils(const PointCloud&, const StencilOptions&);

    struct Csr {
        std::vector<std::uint32_t> start{0};
        std::vector<std::uint32_t> index;
    };

    std::array<Csr, 5> stencils_;
    std::vector<Vec2> offsets_;
    std::vector<std::uint8_t> masks_;
    std::array<std::vector<StencilSums>, 5> sums_;
    std::vector<Frame> frame_;
    std::vector<PointKind> kind_;
    std::vector<double> min_distance_;
    std::size_t tangent_fallbacks_ = 0;
};

/// Sums of a stencil given local offsets.
StencilSums stencil_sums(std::span<const Vec2> local_offsets);

/// Full stencils by radius (k-nearest fallback), split stencils by offset
/// sign in each point's frame, and their least-squares sums. Throws
/// StencilDeficiency listing every offending (point, stencil) pair.
Connectivity build_stencils(const PointCloud& cloud, const StencilOptions& options = {});

struct CloudStats {
    std::size_t points = 0;
    std::size_t interior = 0;
    std::size_t wall = 0;
    std::size_t outer = 0;
    Vec2 lo{};
    Vec2 hi{};
    double min_spacing = 0.0;
    double max_spacing = 0.0;
    double mean_stencil = 0.0;
    std::size_t max_stencil = 0;
};

CloudStats cloud_stats(const PointCloud& cloud, const Connectivity* conn = nullptr);

}  // namespace kmf
