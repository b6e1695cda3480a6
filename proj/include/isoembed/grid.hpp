#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "isoembed/error.hpp"

namespace isoembed {

struct Point2 {
    double u = 0.0;
    double v = 0.0;
};

/// Uniform rectangular grid. Node (i, j) sits at (u0 + i*du, v0 + j*dv);
/// storage is row-major with u varying fastest.
struct Grid2D {
    double u0 = 0.0;
    double v0 = 0.0;
    double du = 1.0;
    double dv = 1.0;
    int nu = 3;
    int nv = 3;

    static Grid2D span(double u_min, double u_max, double v_min, double v_max, int nu, int nv) {
        if (nu < 3 || nv < 3) throw Error(ErrorKind::GridTooSmall, "grid needs at least 3 nodes per axis");
        if (!(u_max > u_min) || !(v_max > v_min))
            throw Error(ErrorKind::BadParameter, "grid extent must be positive");
        Grid2D g;
        g.u0 = u_min;
        g.v0 = v_min;
        g.du = (u_max - u_min) / (nu - 1);
        g.dv = (v_max - v_min) / (nv - 1);
        g.nu = nu;
        g.nv = nv;
        return g;
    }

    void check() const {
        if (nu < 3 || nv < 3) throw Error(ErrorKind::GridTooSmall, "grid needs at least 3 nodes per axis");
        if (!(du > 0.0) || !(dv > 0.0)) throw Error(ErrorKind::BadParameter, "grid spacing must be positive");
    }

    std::size_t size() const noexcept { return static_cast<std::size_t>(nu) * static_cast<std::size_t>(nv); }
    std::size_t index(int i, int j) const noexcept {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(nu) + static_cast<std::size_t>(i);
    }
    double u(int i) const noexcept { return u0 + i * du; }
    double v(int j) const noexcept { return v0 + j * dv; }
    double u_max() const noexcept { return u(nu - 1); }
    double v_max() const noexcept { return v(nv - 1); }

    bool contains(double uu, double vv, double slack = 1e-12) const noexcept {
        const double su = slack * std::max(1.0, std::abs(u_max() - u0));
        const double sv = slack * std::max(1.0, std::abs(v_max() - v0));
        return uu >= u0 - su && uu <= u_max() + su && vv >= v0 - sv && vv <= v_max() + sv;
    }

    /// Row index of v = value, or -1 when no row lies there.
    int row_at(double value, double rel_tol = 1e-9) const noexcept {
        const double x = (value - v0) / dv;
        const double r = std::round(x);
        if (r < 0 || r > nv - 1 || std::abs(x - r) > rel_tol) return -1;
        return static_cast<int>(r);
    }

    int nearest_col(double value) const noexcept {
        const int i = static_cast<int>(std::lround((value - u0) / du));
        return std::clamp(i, 0, nu - 1);
    }

    friend bool operator==(const Grid2D&, const Grid2D&) = default;
};

/// Per-node boolean flags over a grid.
struct Mask {
    Grid2D grid;
    std::vector<std::uint8_t> bits;

    Mask() = default;
    Mask(const Grid2D& g, bool value) : grid(g), bits(g.size(), value ? 1 : 0) {}

    bool operator()(int i, int j) const noexcept { return bits[grid.index(i, j)] != 0; }
    void set(int i, int j, bool value) noexcept { bits[grid.index(i, j)] = value ? 1 : 0; }
    std::size_t count() const noexcept {
        return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
    }
    Mask operator&(const Mask& other) const {
        Mask out = *this;
        for (std::size_t k = 0; k < bits.size(); ++k) out.bits[k] = bits[k] && other.bits[k];
        return out;
    }
};

/// Sampled scalar function on a Grid2D with finite-difference accessors.
/// First derivatives: second-order central in the interior, second-order
/// one-sided at the boundary.
class ScalarField2D {
public:
    ScalarField2D() = default;
    explicit ScalarField2D(const Grid2D& g, double fill = 0.0) : grid_(g), values_(g.size(), fill) { g.check(); }
    ScalarField2D(const Grid2D& g, std::vector<double> values) : grid_(g), values_(std::move(values)) {
        g.check();
        if (values_.size() != g.size()) throw Error(ErrorKind::ShapeMismatch, "values length must equal nu*nv");
    }

    template <class Fn>
    static ScalarField2D from_function(const Grid2D& g, Fn&& fn) {
        ScalarField2D out(g);
        for (int j = 0; j < g.nv; ++j)
            for (int i = 0; i < g.nu; ++i) out(i, j) = fn(g.u(i), g.v(j));
        return out;
    }

    const Grid2D& grid() const noexcept { return grid_; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }

    double operator()(int i, int j) const noexcept { return values_[grid_.index(i, j)]; }
    double& operator()(int i, int j) noexcept { return values_[grid_.index(i, j)]; }

    double d_u(int i, int j) const noexcept {
        return first_diff([&](int k) { return (*this)(k, j); }, i, grid_.nu, grid_.du);
    }
    double d_v(int i, int j) const noexcept {
        return first_diff([&](int k) { return (*this)(i, k); }, j, grid_.nv, grid_.dv);
    }
    double d_uu(int i, int j) const noexcept {
        return second_diff([&](int k) { return (*this)(k, j); }, i, grid_.nu, grid_.du);
    }
    double d_vv(int i, int j) const noexcept {
        return second_diff([&](int k) { return (*this)(i, k); }, j, grid_.nv, grid_.dv);
    }

    ScalarField2D derivative_u() const {
        ScalarField2D out(grid_);
        for (int j = 0; j < grid_.nv; ++j)
            for (int i = 0; i < grid_.nu; ++i) out(i, j) = d_u(i, j);
        return out;
    }
    ScalarField2D derivative_v() const {
        ScalarField2D out(grid_);
        for (int j = 0; j < grid_.nv; ++j)
            for (int i = 0; i < grid_.nu; ++i) out(i, j) = d_v(i, j);
        return out;
    }

    /// Bilinear interpolation; throws OutOfDomain outside the grid rectangle.
    double sample(double u, double v) const {
        if (!grid_.contains(u, v)) throw Error(ErrorKind::OutOfDomain, "sample point outside field grid");
        const auto [i, a] = locate(u, grid_.u0, grid_.du, grid_.nu);
        const auto [j, b] = locate(v, grid_.v0, grid_.dv, grid_.nv);
        const double f00 = (*this)(i, j), f10 = (*this)(i + 1, j);
        const double f01 = (*this)(i, j + 1), f11 = (*this)(i + 1, j + 1);
        return (1 - a) * (1 - b) * f00 + a * (1 - b) * f10 + (1 - a) * b * f01 + a * b * f11;
    }

    /// Cell containing (u, v) as lower-left node index and local coordinates in [0, 1].
    static std::pair<int, double> locate(double x, double x0, double h, int n) noexcept {
        const double t = (x - x0) / h;
        int k = static_cast<int>(std::floor(t));
        k = std::clamp(k, 0, n - 2);
        return {k, std::clamp(t - k, 0.0, 1.0)};
    }

private:
    template <class At>
    static double first_diff(At&& at, int k, int n, double h) noexcept {
        if (k == 0) return (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h);
        if (k == n - 1) return (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h);
        return (at(k + 1) - at(k - 1)) / (2.0 * h);
    }

    template <class At>
    static double second_diff(At&& at, int k, int n, double h) noexcept {
        const double h2 = h * h;
        if (k == 0) {
            if (n >= 4) return (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / h2;
            return (at(0) - 2.0 * at(1) + at(2)) / h2;
        }
        if (k == n - 1) {
            if (n >= 4) return (2.0 * at(n - 1) - 5.0 * at(n - 2) + 4.0 * at(n - 3) - at(n - 4)) / h2;
            return (at(n - 1) - 2.0 * at(n - 2) + at(n - 3)) / h2;
        }
        return (at(k - 1) - 2.0 * at(k) + at(k + 1)) / h2;
    }

    Grid2D grid_;
    std::vector<double> values_;
};

/// A field together with the nodes on which its values are claimed.
struct MaskedField {
    ScalarField2D field;
    Mask mask;
};

struct Summary {
    double sup = 0.0;
    double mean = 0.0;
    std::size_t count = 0;
    std::size_t masked = 0;
};

/// Sup and mean of |field| over nodes where mask is set and the value is finite.
inline Summary summarize_abs(const ScalarField2D& field, const Mask& mask) {
    Summary s;
    double total = 0.0;
    const auto& g = field.grid();
    for (int j = 0; j < g.nv; ++j)
        for (int i = 0; i < g.nu; ++i) {
            const double x = field(i, j);
            if (!mask(i, j) || !std::isfinite(x)) {
                ++s.masked;
                continue;
            }
            s.sup = std::max(s.sup, std::abs(x));
            total += std::abs(x);
            ++s.count;
        }
    s.mean = s.count ? total / static_cast<double>(s.count) : 0.0;
    return s;
}

}  // namespace isoembed
