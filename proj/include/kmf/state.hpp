#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kmf/vec.hpp"

namespace kmf {

inline constexpr double default_gamma = 1.4;

/// Thrown when an input lies outside the domain of a transform
/// (nonpositive density or pressure, q4 >= 0, gamma <= 1).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Loss of positivity while recovering primitives; carries the point index
/// when the failure happened inside a per-point kernel.
class PositivityError : public std::runtime_error {
public:
    static constexpr std::size_t no_point = static_cast<std::size_t>(-1);

    explicit PositivityError(const std::string& what, std::size_t point = no_point)
        : std::runtime_error(what), point_(point) {}

    std::size_t point() const noexcept { return point_; }

private:
    std::size_t point_;
};

struct Primitives {
    double rho = 1.0;
    double u1 = 0.0;
    double u2 = 0.0;
    double p = 1.0;

    bool operator==(const Primitives&) const = default;
};

using Conserved = Vector4<struct ConservedTag>;
using QVector = Vector4<struct QTag>;

/// (rho, rho u1, rho u2, rho e) with e = p / (rho (gamma - 1)) + |u|^2 / 2.
Conserved primitives_to_conserved(const Primitives& prim, double gamma = default_gamma);

/// Inverse of primitives_to_conserved. Throws PositivityError (tagged with
/// `point`) when density or recovered pressure is not positive.
Primitives conserved_to_primitives(const Conserved& u, double gamma = default_gamma,
                                   std::size_t point = PositivityError::no_point);

/// Entropy variables q = (ln rho + ln beta / (gamma - 1) - beta |u|^2,
/// 2 beta u1, 2 beta u2, -2 beta) with beta = rho / (2p).
QVector primitives_to_q(const Primitives& prim, double gamma = default_gamma);

Primitives q_to_primitives(const QVector& q, double gamma = default_gamma);

/// beta = 1 / (2RT) = rho / (2p).
inline double beta_of(const Primitives& prim) { return 0.5 * prim.rho / prim.p; }

inline double sound_speed(const Primitives& prim, double gamma = default_gamma) {
    return std::sqrt(gamma * prim.p / prim.rho);
}

/// Four scalar fields over n points, stored as contiguous component blocks:
/// all of component 0, then all of component 1, and so on.
class FieldBlock4 {
public:
    FieldBlock4() = default;
    explicit FieldBlock4(std::size_t n) : n_(n), data_(4 * n, 0.0) {}

    std::size_t size() const noexcept { return n_; }

    std::span<double> component(std::size_t c) { return {data_.data() + c * n_, n_}; }
    std::span<const double> component(std::size_t c) const {
        return {data_.data() + c * n_, n_};
    }

    double& at(std::size_t c, std::size_t i) { return data_[c * n_ + i]; }
    double at(std::size_t c, std::size_t i) const { return data_[c * n_ + i]; }

    template <class Tag>
    Vector4<Tag> get(std::size_t i) const {
        return Vector4<Tag>{{data_[i], data_[n_ + i], data_[2 * n_ + i], data_[3 * n_ + i]}};
    }
    template <class Tag>
    void set(std::size_t i, const Vector4<Tag>& v) {
        for (std::size_t c = 0; c < 4; ++c) data_[c * n_ + i] = v[c];
    }

    bool operator==(const FieldBlock4&) const = default;

private:
    std::size_t n_ = 0;
    std::vector<double> data_;
};

/// Primitive variables for every point (blocks rho, u1, u2, p).
class PrimitiveField {
public:
    PrimitiveField() = default;
    explicit PrimitiveField(std::size_t n) : block_(n) {}
    PrimitiveField(std::size_t n, const Primitives& uniform);

    std::size_t size() const noexcept { return block_.size(); }

    Primitives get(std::size_t i) const {
        return {block_.at(0, i), block_.at(1, i), block_.at(2, i), block_.at(3, i)};
    }
    void set(std::size_t i, const Primitives& s) {
        block_.at(0, i) = s.rho;
        block_.at(1, i) = s.u1;
        block_.at(2, i) = s.u2;
        block_.at(3, i) = s.p;
    }

    std::span<const double> rho() const { return block_.component(0); }
    std::span<const double> u1() const { return block_.component(1); }
    std::span<const double> u2() const { return block_.component(2); }
    std::span<const double> p() const { return block_.component(3); }

    bool operator==(const PrimitiveField&) const = default;

private:
    FieldBlock4 block_;
};

}  // namespace kmf
