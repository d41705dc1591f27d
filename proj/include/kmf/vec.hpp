#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace kmf {

/// Point or offset in the plane.
struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
    constexpr bool operator==(const Vec2&) const = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

/// Four-component vector with a tag so that conserved, q and flux vectors
/// cannot be mixed by accident. Cross-tag arithmetic goes through raw().
template <class Tag>
struct Vector4 {
    std::array<double, 4> v{};

    constexpr double& operator[](std::size_t i) { return v[i]; }
    constexpr double operator[](std::size_t i) const { return v[i]; }

    constexpr Vector4& operator+=(const Vector4& o) {
        for (std::size_t i = 0; i < 4; ++i) v[i] += o.v[i];
        return *this;
    }
    constexpr Vector4& operator-=(const Vector4& o) {
        for (std::size_t i = 0; i < 4; ++i) v[i] -= o.v[i];
        return *this;
    }
    constexpr Vector4 operator+(const Vector4& o) const { return Vector4(*this) += o; }
    constexpr Vector4 operator-(const Vector4& o) const { return Vector4(*this) -= o; }
    constexpr Vector4 operator*(double s) const {
        return Vector4{{v[0] * s, v[1] * s, v[2] * s, v[3] * s}};
    }
    constexpr bool operator==(const Vector4&) const = default;

    constexpr const std::array<double, 4>& raw() const { return v; }
};

template <class Tag>
double max_abs_diff(const Vector4<Tag>& a, const Vector4<Tag>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < 4; ++i) m = std::fmax(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace kmf
