#include "kmf/geometry.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace kmf {

const char* to_string(PointKind kind) {
    switch (kind) {
        case PointKind::interior: return "interior";
        case PointKind::wall: return "wall";
        case PointKind::outer: return "outer";
    }
    return "?";
}

const char* to_string(StencilKind kind) {
    switch (kind) {
        case StencilKind::full: return "full";
        case StencilKind::x_neg: return "x-";
        case StencilKind::x_pos: return "x+";
        case StencilKind::y_neg: return "y-";
        case StencilKind::y_pos: return "y+";
    }
    return "?";
}

void PointCloud::add(Vec2 pos, PointKind k, Vec2 n) {
    position.push_back(pos);
    kind.push_back(k);
    normal.push_back(k == PointKind::interior ? Vec2{} : n);
}

std::size_t PointCloud::count(PointKind k) const {
    return static_cast<std::size_t>(std::count(kind.begin(), kind.end(), k));
}

void PointCloud::validate() const {
    if (kind.size() != position.size() || normal.size() != position.size()) {
        throw GridError("point cloud arrays have inconsistent lengths", 0);
    }
    for (std::size_t i = 0; i < size(); ++i) {
        if (!std::isfinite(position[i].x) || !std::isfinite(position[i].y)) {
            throw GridError("non-finite coordinate at point " + std::to_string(i), 0);
        }
        if (kind[i] != PointKind::interior && std::fabs(norm(normal[i]) - 1.0) > 1e-12) {
            throw GridError("normal of boundary point " + std::to_string(i) + " is not unit length", 0);
        }
    }
    if (count(PointKind::interior) == 0) throw GridError("cloud has no interior point", 0);
}

// ---------------------------------------------------------------------------
// Text and binary grid formats

namespace {

std::string strip_comment(const std::string& line) {
    const auto hash = line.find('#');
    return hash == std::string::npos ? line : line.substr(0, hash);
}

bool blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

PointKind parse_flag(long flag, std::size_t line) {
    switch (flag) {
        case 0: return PointKind::interior;
        case 1: return PointKind::wall;
        case 2: return PointKind::outer;
        default: throw GridError("unknown point flag " + std::to_string(flag), line);
    }
}

constexpr char magic[4] = {'K', 'M', 'F', '1'};

template <class T>
void put_le(std::ostream& out, T value) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), bytes.size());
}

template <class T>
T get_le(std::istream& in) {
    std::array<char, sizeof(T)> bytes{};
    if (!in.read(bytes.data(), bytes.size())) throw GridError("truncated binary grid", 0);
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
}

}  // namespace

PointCloud read_point_cloud_text(std::istream& in) {
    PointCloud cloud;
    std::string raw;
    std::size_t line_no = 0;
    long long expected = -1;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = strip_comment(raw);
        if (blank(line)) continue;
        std::istringstream ls(line);
        if (expected < 0) {
            if (!(ls >> expected) || expected < 0) throw GridError("expected point count", line_no);
            std::string rest;
            if (ls >> rest) throw GridError("trailing tokens after point count", line_no);
            cloud.position.reserve(static_cast<std::size_t>(expected));
            continue;
        }
        if (static_cast<long long>(cloud.size()) == expected) {
            throw GridError("more point lines than declared", line_no);
        }
        std::vector<std::string> tokens;
        for (std::string t; ls >> t;) tokens.push_back(t);
        if (tokens.size() != 3 && tokens.size() != 5) {
            throw GridError("expected 'x y flag [nx ny]'", line_no);
        }
        auto number = [&](const std::string& t) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(t, &used);
            } catch (const std::exception&) {
                throw GridError("malformed number '" + t + "'", line_no);
            }
            if (used != t.size()) throw GridError("malformed number '" + t + "'", line_no);
            return v;
        };
        const Vec2 pos{number(tokens[0]), number(tokens[1])};
        long flag = 0;
        {
            std::size_t used = 0;
            try {
                flag = std::stol(tokens[2], &used);
            } catch (const std::exception&) {
                throw GridError("malformed flag '" + tokens[2] + "'", line_no);
            }
            if (used != tokens[2].size()) throw GridError("malformed flag '" + tokens[2] + "'", line_no);
        }
        const PointKind kind = parse_flag(flag, line_no);
        Vec2 n{};
        if (kind == PointKind::interior) {
            if (tokens.size() == 5) throw GridError("interior point must not carry a normal", line_no);
        } else {
            if (tokens.size() != 5) throw GridError("boundary point requires a normal", line_no);
            n = {number(tokens[3]), number(tokens[4])};
            if (std::fabs(norm(n) - 1.0) > 1e-12) throw GridError("normal is not unit length", line_no);
        }
        cloud.add(pos, kind, n);
    }
    if (expected < 0) throw GridError("empty grid", line_no);
    if (static_cast<long long>(cloud.size()) != expected) {
        throw GridError("declared " + std::to_string(expected) + " points, found " +
                            std::to_string(cloud.size()),
                        line_no);
    }
    cloud.validate();
    return cloud;
}

PointCloud read_point_cloud_binary(std::istream& in) {
    char head[4];
    if (!in.read(head, 4) || std::memcmp(head, magic, 4) != 0) {
        throw GridError("missing KMF1 magic", 0);
    }
    const auto n = get_le<std::uint64_t>(in);
    PointCloud cloud;
    std::vector<std::uint8_t> flags(n);
    for (auto& f : flags) f = get_le<std::uint8_t>(in);
    std::vector<double> fields(4 * n);
    for (auto& v : fields) v = get_le<double>(in);
    for (std::uint64_t i = 0; i < n; ++i) {
        const PointKind kind = parse_flag(flags[i], 0);
        cloud.add({fields[i], fields[n + i]}, kind, {fields[2 * n + i], fields[3 * n + i]});
    }
    cloud.validate();
    return cloud;
}

PointCloud read_point_cloud(std::istream& in) {
    char head[4] = {};
    in.read(head, 4);
    const bool binary = in.gcount() == 4 && std::memcmp(head, magic, 4) == 0;
    in.clear();
    in.seekg(0);
    return binary ? read_point_cloud_binary(in) : read_point_cloud_text(in);
}

PointCloud read_point_cloud(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw GridError("cannot open grid file " + path, 0);
    return read_point_cloud(in);
}

void write_point_cloud_text(std::ostream& out, const PointCloud& cloud) {
    out << "# x y flag [nx ny]; flag 0 interior, 1 wall, 2 outer\n";
    out << cloud.size() << '\n';
    out << std::setprecision(17);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        out << cloud.position[i].x << ' ' << cloud.position[i].y << ' '
            << static_cast<int>(cloud.kind[i]);
        if (cloud.kind[i] != PointKind::interior) {
            out << ' ' << cloud.normal[i].x << ' ' << cloud.normal[i].y;
        }
        out << '\n';
    }
}

void write_point_cloud_binary(std::ostream& out, const PointCloud& cloud) {
    out.write(magic, 4);
    put_le<std::uint64_t>(out, cloud.size());
    for (auto k : cloud.kind) put_le<std::uint8_t>(out, static_cast<std::uint8_t>(k));
    for (const auto& p : cloud.position) put_le(out, p.x);
    for (const auto& p : cloud.position) put_le(out, p.y);
    for (const auto& n : cloud.normal) put_le(out, n.x);
    for (const auto& n : cloud.normal) put_le(out, n.y);
}

void write_point_cloud(const std::string& path, const PointCloud& cloud) {
    const bool binary = path.size() >= 4 && path.compare(path.size() - 4, 4, ".kmf") == 0;
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw GridError("cannot write grid file " + path, 0);
    if (binary) {
        write_point_cloud_binary(out, cloud);
    } else {
        write_point_cloud_text(out, cloud);
    }
}

// ---------------------------------------------------------------------------
// Generators

double naca0012_half_thickness(double x) {
    constexpr double t = 0.12;
    return 5.0 * t *
           (0.2969 * std::sqrt(x) + x * (-0.1260 + x * (-0.3516 + x * (0.2843 + x * -0.1036))));
}

double naca0012_half_thickness_slope(double x) {
    constexpr double t = 0.12;
    return 5.0 * t *
           (0.5 * 0.2969 / std::sqrt(x) - 0.1260 + x * (-2.0 * 0.3516 + x * (3.0 * 0.2843 + x * 4.0 * -0.1036)));
}

namespace {

struct Station {
    Vec2 surface, circle, wall_normal, radial;
};

// Points are placed at equal steps of sigma = (s / L + c phi / Phi) / (1 + c),
// mixing arclength s with accumulated turning phi so that curved regions get
// proportionally more points. The trailing-edge corner does not count as
// turning.
constexpr double turning_weight = 0.03;

struct Parametrised {
    std::vector<Vec2> poly;
    std::vector<double> sigma;

    void push(Vec2 p, double turn) {
        poly.push_back(p);
        arc.push_back(arc.empty() ? 0.0 : arc.back() + norm(p - poly[poly.size() - 2]));
        phi.push_back(phi.empty() ? 0.0 : phi.back() + turn);
    }
    void finish() {
        const double l = arc.back(), t = phi.back();
        sigma.resize(poly.size());
        for (std::size_t i = 0; i < poly.size(); ++i) {
            sigma[i] = (arc[i] / l + turning_weight * (t > 0.0 ? phi[i] / t : 0.0)) / (1.0 + turning_weight);
        }
    }
    Vec2 at(double target) const {
        const auto it = std::upper_bound(sigma.begin(), sigma.end(), target);
        const auto hi = std::min<std::size_t>(static_cast<std::size_t>(it - sigma.begin()), sigma.size() - 1);
        const std::size_t lo = hi == 0 ? 0 : hi - 1;
        const double len = sigma[hi] - sigma[lo];
        const double f = len > 0.0 ? (target - sigma[lo]) / len : 0.0;
        return poly[lo] * (1.0 - f) + poly[hi] * f;
    }

private:
    std::vector<double> arc;
    std::vector<double> phi;
};

double wrap_angle(double a) {
    const double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    return a < 0.0 ? a + two_pi : a;
}

// Chord stations of the upper surface from the trailing edge (j = 0) to the
// leading edge (j = half).
std::vector<double> surface_stations(int half) {
    constexpr int dense = 20000;
    Parametrised curve;
    double prev_angle = 0.0;
    for (int i = 0; i <= dense; ++i) {
        const double x = 0.5 * (1.0 + std::cos(std::numbers::pi * i / dense));
        const Vec2 p{x, naca0012_half_thickness(x)};
        double turn = 0.0;
        if (i > 0) {
            const Vec2 t = p - curve.poly.back();
            const double angle = std::atan2(t.y, t.x);
            if (i > 1) turn = std::fabs(std::remainder(angle - prev_angle, 2.0 * std::numbers::pi));
            prev_angle = angle;
        }
        curve.push(p, turn);
    }
    curve.finish();
    std::vector<double> x(static_cast<std::size_t>(half) + 1);
    for (int j = 0; j <= half; ++j) x[static_cast<std::size_t>(j)] = curve.at(static_cast<double>(j) / half).x;
    x.front() = 1.0;
    x.back() = 0.0;
    return x;
}

// Ring at distance h from the convex surface polygon (its Minkowski offset),
// distributed like the surface. The upper half is computed, the lower mirrored.
std::vector<Vec2> offset_ring(const std::vector<Station>& st, double h) {
    const std::size_t n = st.size();
    auto angle_of = [](Vec2 v) { return std::atan2(v.y, v.x); };
    auto edge_normal = [&](std::size_t j) {  // outward normal of edge j -> j+1
        const Vec2 t = st[(j + 1) % n].surface - st[j].surface;
        return Vec2{t.y, -t.x} * (1.0 / norm(t));
    };

    // Starts at the trailing-edge normal point and runs once around.
    Parametrised curve;
    constexpr double max_step = 0.05;  // radians per arc sample
    for (std::size_t j = 0; j <= n; ++j) {
        const std::size_t v = j % n;
        const Vec2 c = st[v].surface;
        const double a_in = angle_of(edge_normal((v + n - 1) % n));
        const double a_out = angle_of(edge_normal(v));
        const double a_n = angle_of(st[v].wall_normal);
        const double sweep = wrap_angle(a_out - a_in);
        const double to_normal = std::min(wrap_angle(a_n - a_in), sweep);
        const double weight = v == 0 ? 0.0 : 1.0;
        auto at = [&](double a) { return c + Vec2{std::cos(a), std::sin(a)} * h; };
        if (j > 0) {
            const int m = std::max(1, static_cast<int>(std::ceil(to_normal / max_step)));
            curve.push(at(a_in), 0.0);
            for (int i = 1; i <= m; ++i) curve.push(at(a_in + to_normal * i / m), weight * to_normal / m);
        } else {
            curve.push(at(a_n), 0.0);
        }
        if (j == n) break;
        const double rest = sweep - to_normal;
        const int m = std::max(1, static_cast<int>(std::ceil(rest / max_step)));
        for (int i = 1; i <= m; ++i) curve.push(at(a_n + rest * i / m), weight * rest / m);
    }
    curve.finish();

    std::vector<Vec2> ring(n);
    for (std::size_t j = 0; 2 * j <= n; ++j) {
        Vec2 p = curve.at(static_cast<double>(j) / static_cast<double>(n));
        if (j == 0 || 2 * j == n) p.y = 0.0;
        ring[j] = p;
    }
    for (std::size_t j = n / 2 + 1; j < n; ++j) ring[j] = {ring[n - j].x, -ring[n - j].y};
    return ring;
}

}  // namespace

NacaParams naca_params_for_points(std::size_t target, double far_field) {
    if (!(far_field > 1.0)) throw std::invalid_argument("far_field must exceed one chord");
    constexpr double perimeter = 2.04;  // NACA 0012, unit chord
    NacaParams best;
    double best_miss = std::numeric_limits<double>::infinity();
    for (int n = 40; n <= 4000; n += 2) {
        const double g = 1.0 + 2.0 * std::numbers::pi / n;
        const double first = perimeter / n;
        const int layers = std::max(
            10, static_cast<int>(std::lround(1.0 + std::log1p((g - 1.0) * (far_field - 0.5) / first) / std::log(g))));
        const double miss = std::fabs(static_cast<double>(n) * layers - static_cast<double>(target));
        if (miss < best_miss) {
            best_miss = miss;
            best = {n, layers, g, far_field};
        }
    }
    return best;
}

PointCloud generate_naca_cloud(const NacaParams& params) {
    if (params.chord_points < 40 || params.chord_points % 2 != 0) {
        throw std::invalid_argument("chord_points must be even and at least 40");
    }
    if (params.layers < 10) throw std::invalid_argument("layers must be at least 10");
    if (!(params.growth >= 1.0)) throw std::invalid_argument("growth must be >= 1");
    if (!(params.far_field > 1.0)) throw std::invalid_argument("far_field must exceed one chord");

    const int n = params.chord_points;
    const int layers = params.layers;

    // Upper half computed directly, lower half mirrored.
    std::vector<Station> st(static_cast<std::size_t>(n));
    const std::vector<double> chord = surface_stations(n / 2);
    for (int j = 0; 2 * j <= n; ++j) {
        const double theta = 2.0 * std::numbers::pi * j / n;
        Station s;
        const double x = chord[static_cast<std::size_t>(j)];
        const double y = naca0012_half_thickness(x);
        s.surface = {x, (j == 0 || 2 * j == n) ? 0.0 : y};
        if (j == 0) {
            s.wall_normal = {1.0, 0.0};
        } else if (2 * j == n) {
            s.wall_normal = {-1.0, 0.0};
        } else {
            const double slope = naca0012_half_thickness_slope(x);
            const double len = std::sqrt(1.0 + slope * slope);
            s.wall_normal = {-slope / len, 1.0 / len};
        }
        const double c = std::cos(theta);
        const double sn = (j == 0 || 2 * j == n) ? 0.0 : std::sin(theta);
        s.radial = {c, sn};
        s.circle = Vec2{0.5, 0.0} + s.radial * params.far_field;
        st[static_cast<std::size_t>(j)] = s;
    }
    auto mirror = [](Vec2 v) { return Vec2{v.x, -v.y}; };
    for (int j = n / 2 + 1; j < n; ++j) {
        const Station& up = st[static_cast<std::size_t>(n - j)];
        st[static_cast<std::size_t>(j)] = {mirror(up.surface), mirror(up.circle),
                                           mirror(up.wall_normal), mirror(up.radial)};
    }

    const double span = params.growth == 1.0 ? layers - 1.0 : std::pow(params.growth, layers - 1) - 1.0;
    const double gap = params.far_field - 0.5;
    std::vector<std::vector<Vec2>> rings(static_cast<std::size_t>(layers));
    for (int k = 1; k < layers - 1; ++k) {
        const double w = (params.growth == 1.0 ? k : std::pow(params.growth, k) - 1.0) / span;
        rings[static_cast<std::size_t>(k)] = offset_ring(st, w * gap);
    }

    PointCloud cloud;
    cloud.position.reserve(static_cast<std::size_t>(n * layers));
    for (int k = 0; k < layers; ++k) {
        for (int j = 0; j < n; ++j) {
            const Station& s = st[static_cast<std::size_t>(j)];
            if (k == 0) {
                cloud.add(s.surface, PointKind::wall, s.wall_normal);
            } else if (k == layers - 1) {
                cloud.add(s.circle, PointKind::outer, s.radial);
            } else {
                cloud.add(rings[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)], PointKind::interior);
            }
        }
    }
    return cloud;
}

PointCloud generate_lattice_cloud(int nx, int ny, double h, Vec2 origin, bool all_interior) {
    if (nx < 2 || ny < 2 || !(h > 0.0)) throw std::invalid_argument("lattice needs nx, ny >= 2, h > 0");
    PointCloud cloud;
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            const Vec2 pos{origin.x + i * h, origin.y + j * h};
            const double ox = i == 0 ? -1.0 : (i == nx - 1 ? 1.0 : 0.0);
            const double oy = j == 0 ? -1.0 : (j == ny - 1 ? 1.0 : 0.0);
            if (all_interior || (ox == 0.0 && oy == 0.0)) {
                cloud.add(pos, PointKind::interior);
            } else {
                const double len = std::sqrt(ox * ox + oy * oy);
                cloud.add(pos, PointKind::outer, {ox / len, oy / len});
            }
        }
    }
    return cloud;
}

// ---------------------------------------------------------------------------
// Spatial hash

SpatialHash::SpatialHash(std::span<const Vec2> points, double cell_size) : points_(points) {
    if (points.empty()) throw std::invalid_argument("spatial hash needs points");
    Vec2 lo = points[0], hi = points[0];
    for (const auto& p : points) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
    }
    lo_ = lo;
    const double extent = std::max({hi.x - lo.x, hi.y - lo.y, std::numeric_limits<double>::min()});
    cell_ = cell_size > 0.0 ? cell_size : extent;
    // Bound the bin count to a few per point.
    const double max_bins = 4.0 * static_cast<double>(points.size()) + 16.0;
    while (std::floor((hi.x - lo.x) / cell_ + 1.0) * std::floor((hi.y - lo.y) / cell_ + 1.0) > max_bins) {
        cell_ *= 2.0;
    }
    nx_ = static_cast<std::int64_t>(std::floor((hi.x - lo.x) / cell_)) + 1;
    ny_ = static_cast<std::int64_t>(std::floor((hi.y - lo.y) / cell_)) + 1;

    const auto bins = static_cast<std::size_t>(nx_ * ny_);
    std::vector<std::uint32_t> counts(bins + 1, 0);
    std::vector<std::size_t> bin_of(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        bin_of[i] = static_cast<std::size_t>(cell_y(points[i].y) * nx_ + cell_x(points[i].x));
        ++counts[bin_of[i] + 1];
    }
    for (std::size_t b = 0; b < bins; ++b) counts[b + 1] += counts[b];
    bin_start_ = counts;
    bin_items_.resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        bin_items_[counts[bin_of[i]]++] = static_cast<std::uint32_t>(i);
    }
}

std::int64_t SpatialHash::cell_x(double x) const {
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((x - lo_.x) / cell_)), 0, nx_ - 1);
}

std::int64_t SpatialHash::cell_y(double y) const {
    return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((y - lo_.y) / cell_)), 0, ny_ - 1);
}

void SpatialHash::within(Vec2 p, double radius, std::size_t self, std::vector<std::uint32_t>& out) const {
    out.clear();
    const double r2 = radius * radius;
    const auto x0 = cell_x(p.x - radius), x1 = cell_x(p.x + radius);
    const auto y0 = cell_y(p.y - radius), y1 = cell_y(p.y + radius);
    for (auto cy = y0; cy <= y1; ++cy) {
        for (auto cx = x0; cx <= x1; ++cx) {
            const auto b = static_cast<std::size_t>(cy * nx_ + cx);
            for (auto k = bin_start_[b]; k < bin_start_[b + 1]; ++k) {
                const auto j = bin_items_[k];
                if (j == self) continue;
                const Vec2 d = points_[j] - p;
                if (dot(d, d) < r2) out.push_back(j);
            }
        }
    }
}

std::vector<std::uint32_t> SpatialHash::nearest(Vec2 p, int k, int cap, std::size_t self) const {
    struct Cand {
        double d2;
        std::uint32_t j;
        bool operator<(const Cand& o) const { return d2 < o.d2 || (d2 == o.d2 && j < o.j); }
    };
    const std::size_t want = static_cast<std::size_t>(k);
    const auto cx = cell_x(p.x), cy = cell_y(p.y);
    std::vector<Cand> cand;
    const std::int64_t max_ring = std::max(nx_, ny_);
    for (std::int64_t ring = 0; ring <= max_ring; ++ring) {
        for (auto y = cy - ring; y <= cy + ring; ++y) {
            if (y < 0 || y >= ny_) continue;
            const bool edge_row = y == cy - ring || y == cy + ring;
            for (auto x = cx - ring; x <= cx + ring; x += (edge_row ? 1 : 2 * ring)) {
                if (x >= 0 && x < nx_) {
                    const auto b = static_cast<std::size_t>(y * nx_ + x);
                    for (auto i = bin_start_[b]; i < bin_start_[b + 1]; ++i) {
                        const auto j = bin_items_[i];
                        if (j == self) continue;
                        const Vec2 d = points_[j] - p;
                        cand.push_back({dot(d, d), j});
                    }
                }
                if (ring == 0) break;
            }
        }
        if (cand.size() < want) continue;
        std::sort(cand.begin(), cand.end());
        // Everything outside the searched square is at least `covered` away.
        const double covered =
            std::min({p.x - (lo_.x + (cx - ring) * cell_), lo_.x + (cx + ring + 1) * cell_ - p.x,
                      p.y - (lo_.y + (cy - ring) * cell_), lo_.y + (cy + ring + 1) * cell_ - p.y});
        const double kth = std::sqrt(cand[want - 1].d2);
        if (kth * (1.0 + 1e-9) < covered || ring == max_ring) break;
    }
    std::sort(cand.begin(), cand.end());
    std::vector<std::uint32_t> out;
    if (cand.empty()) return out;
    const double kth2 = cand[std::min(want, cand.size()) - 1].d2;
    for (const auto& c : cand) {
        if (out.size() >= static_cast<std::size_t>(cap)) break;
        if (out.size() >= want && c.d2 > kth2 * (1.0 + 1e-12)) break;
        out.push_back(c.j);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stencils

Frame frame_for(PointKind kind, Vec2 normal) {
    if (kind == PointKind::interior) return {};
    return {{-normal.y, normal.x}, normal};
}

StencilDeficiency::StencilDeficiency(std::vector<Entry> e)
    : std::runtime_error([&] {
          std::ostringstream os;
          os << "stencil deficiency at " << e.size() << " stencil(s)";
          for (std::size_t i = 0; i < std::min<std::size_t>(e.size(), 8); ++i) {
              os << (i ? ", " : ": ") << "point " << e[i].point << ' ' << to_string(e[i].kind)
                 << " (n=" << e[i].size << ", det=" << e[i].det << ')';
          }
          if (e.size() > 8) os << ", ...";
          return os.str();
      }()),
      entries(std::move(e)) {}

StencilSums stencil_sums(std::span<const Vec2> local) {
    StencilSums s;
    for (const auto& d : local) {
        s.s11 += d.x * d.x;
        s.s12 += d.x * d.y;
        s.s22 += d.y * d.y;
    }
    s.det = s.s11 * s.s22 - s.s12 * s.s12;
    return s;
}

std::vector<StencilKind> Connectivity::required_splits(PointKind kind) {
    switch (kind) {
        case PointKind::interior: return {split_kinds.begin(), split_kinds.end()};
        case PointKind::wall: return {StencilKind::x_neg, StencilKind::x_pos, StencilKind::y_pos};
        case PointKind::outer: return {StencilKind::x_neg, StencilKind::x_pos, StencilKind::y_neg};
    }
    return {};
}

std::span<const std::uint32_t> Connectivity::neighbors(std::size_t p, StencilKind kind) const {
    const Csr& c = stencils_[static_cast<std::size_t>(kind)];
    return {c.index.data() + c.start[p], c.start[p + 1] - c.start[p]};
}

std::span<const Vec2> Connectivity::offsets(std::size_t p) const {
    const Csr& c = stencils_[0];
    return {offsets_.data() + c.start[p], c.start[p + 1] - c.start[p]};
}

std::span<const std::uint8_t> Connectivity::masks(std::size_t p) const {
    const Csr& c = stencils_[0];
    return {masks_.data() + c.start[p], c.start[p + 1] - c.start[p]};
}

Connectivity build_stencils(const PointCloud& cloud, const StencilOptions& options) {
    cloud.validate();
    if (options.radius <= 0.0 && options.k < 6) throw std::invalid_argument("k-nearest stencils need k >= 6");
    const std::size_t n = cloud.size();

    double cell = options.radius;
    if (cell <= 0.0) {
        Vec2 lo = cloud.position[0], hi = cloud.position[0];
        for (const auto& p : cloud.position) {
            lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
            hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
        }
        const double area = (hi.x - lo.x) * (hi.y - lo.y);
        const double extent = std::max(hi.x - lo.x, hi.y - lo.y);
        cell = area > 0.0 ? 2.0 * std::sqrt(area / static_cast<double>(n))
                          : extent / std::sqrt(static_cast<double>(n));
    }
    const SpatialHash hash(cloud.position, cell);

    Connectivity conn;
    conn.frame_.resize(n);
    conn.kind_ = cloud.kind;
    conn.min_distance_.resize(n);
    for (auto& s : conn.sums_) s.resize(n);

    std::vector<StencilDeficiency::Entry> bad;
    std::vector<std::uint32_t> found;
    std::vector<Vec2> local;
    std::array<std::vector<std::uint32_t>, 4> split;
    std::array<std::vector<Vec2>, 4> split_local;

    for (std::size_t p = 0; p < n; ++p) {
        const Vec2 x0 = cloud.position[p];
        const Frame frame = frame_for(cloud.kind[p], cloud.normal[p]);
        conn.frame_[p] = frame;
        const auto required = Connectivity::required_splits(cloud.kind[p]);

        std::vector<std::uint32_t> full;
        double dmin = 0.0, det_floor = 0.0;
        auto deficient = [&](std::size_t size, const StencilSums& s) {
            return static_cast<int>(size) < options.min_split_size || !(std::fabs(s.det) > det_floor);
        };
        // Splits the candidate stencil; true when every required split is usable.
        auto classify = [&]() {
            local.clear();
            for (auto& s : split) s.clear();
            for (auto& s : split_local) s.clear();
            dmin = std::numeric_limits<double>::infinity();
            double scale = 0.0;
            for (const auto j : full) {
                const Vec2 d = cloud.position[j] - x0;
                const Vec2 l = frame.to_local(d);
                const double r = norm(d);
                dmin = std::min(dmin, r);
                scale = std::max(scale, r);
                std::uint8_t mask = 0;
                if (l.x <= 0.0) mask |= stencil_bit(StencilKind::x_neg);
                if (l.x >= 0.0) mask |= stencil_bit(StencilKind::x_pos);
                if (l.y <= 0.0) mask |= stencil_bit(StencilKind::y_neg);
                if (l.y >= 0.0) mask |= stencil_bit(StencilKind::y_pos);
                for (std::size_t s = 0; s < 4; ++s) {
                    if (mask & stencil_bit(split_kinds[s])) {
                        split[s].push_back(j);
                        split_local[s].push_back(l);
                    }
                }
                local.push_back(d);
            }
            det_floor = options.det_tolerance * scale * scale * scale * scale;
            for (const auto kind : required) {
                const auto s = static_cast<std::size_t>(kind) - 1;
                if (deficient(split[s].size(), stencil_sums(split_local[s]))) return false;
            }
            return !deficient(full.size(), stencil_sums(local));
        };

        bool knn = true;
        if (options.radius > 0.0) {
            hash.within(x0, options.radius, p, found);
            std::sort(found.begin(), found.end(), [&](std::uint32_t a, std::uint32_t b) {
                const Vec2 da = cloud.position[a] - x0, db = cloud.position[b] - x0;
                const double ra = dot(da, da), rb = dot(db, db);
                return ra < rb || (ra == rb && a < b);
            });
            full = found;
            knn = static_cast<int>(full.size()) < options.min_radius_neighbors || !classify();
        }
        if (knn) {
            // Anisotropic regions (clustered surface points) may need a wider
            // search before every required half-plane is populated.
            for (int k = options.k, cap = options.k_cap;; k *= 2, cap *= 2) {
                k = std::min(k, options.k_max);
                cap = std::max(k, std::min(cap, 2 * options.k_max));
                full = hash.nearest(x0, k, cap, p);
                if (classify() || k >= options.k_max) break;
            }
        }
        conn.min_distance_[p] = full.empty() ? 0.0 : dmin;

        const StencilSums full_sums = stencil_sums(local);
        conn.sums_[0][p] = full_sums;
        if (deficient(full.size(), full_sums)) {
            bad.push_back({p, StencilKind::full, full.size(), full_sums.det});
        }

        std::vector<Vec2> full_local;
        full_local.reserve(full.size());
        for (const auto& d : local) full_local.push_back(frame.to_local(d));

        bool fell_back = false;
        for (std::size_t s = 0; s < 4; ++s) {
            const StencilKind kind = split_kinds[s];
            StencilSums sums = stencil_sums(split_local[s]);
            const bool needed = std::find(required.begin(), required.end(), kind) != required.end();
            if (needed && deficient(split[s].size(), sums)) {
                const bool tangent = kind == StencilKind::x_neg || kind == StencilKind::x_pos;
                if (cloud.kind[p] == PointKind::wall && tangent) {
                    split[s] = full;
                    sums = stencil_sums(full_local);
                    fell_back = true;
                    if (deficient(split[s].size(), sums)) bad.push_back({p, kind, split[s].size(), sums.det});
                } else {
                    bad.push_back({p, kind, split[s].size(), sums.det});
                }
            }
            conn.sums_[s + 1][p] = sums;
        }
        if (fell_back) ++conn.tangent_fallbacks_;

        // Masks follow the final split lists, including fallbacks.
        std::vector<std::uint8_t> masks(full.size(), 0);
        for (std::size_t s = 0; s < 4; ++s) {
            std::size_t cursor = 0;
            for (const auto j : split[s]) {
                while (full[cursor] != j) ++cursor;
                masks[cursor] |= stencil_bit(split_kinds[s]);
            }
        }

        auto& f = conn.stencils_[0];
        f.index.insert(f.index.end(), full.begin(), full.end());
        f.start.push_back(static_cast<std::uint32_t>(f.index.size()));
        conn.offsets_.insert(conn.offsets_.end(), local.begin(), local.end());
        conn.masks_.insert(conn.masks_.end(), masks.begin(), masks.end());
        for (std::size_t s = 0; s < 4; ++s) {
            auto& c = conn.stencils_[s + 1];
            c.index.insert(c.index.end(), split[s].begin(), split[s].end());
            c.start.push_back(static_cast<std::uint32_t>(c.index.size()));
        }
    }
    if (!bad.empty()) throw StencilDeficiency(std::move(bad));
    return conn;
}

CloudStats cloud_stats(const PointCloud& cloud, const Connectivity* conn) {
    CloudStats s;
    s.points = cloud.size();
    s.interior = cloud.count(PointKind::interior);
    s.wall = cloud.count(PointKind::wall);
    s.outer = cloud.count(PointKind::outer);
    if (cloud.size() == 0) return s;
    s.lo = s.hi = cloud.position[0];
    for (const auto& p : cloud.position) {
        s.lo = {std::min(s.lo.x, p.x), std::min(s.lo.y, p.y)};
        s.hi = {std::max(s.hi.x, p.x), std::max(s.hi.y, p.y)};
    }
    if (conn != nullptr) {
        s.min_spacing = std::numeric_limits<double>::infinity();
        double total = 0.0;
        for (std::size_t p = 0; p < conn->size(); ++p) {
            s.min_spacing = std::min(s.min_spacing, conn->min_distance(p));
            s.max_spacing = std::max(s.max_spacing, conn->min_distance(p));
            const auto size = conn->neighbors(p, StencilKind::full).size();
            total += static_cast<double>(size);
            s.max_stencil = std::max(s.max_stencil, size);
        }
        s.mean_stencil = total / static_cast<double>(conn->size());
    }
    return s;
}

}  // namespace kmf
