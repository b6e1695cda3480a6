#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "isoembed/error.hpp"
#include "isoembed/grid.hpp"
#include "isoembed/plane_geodesics.hpp"
#include "isoembed/reparam.hpp"

namespace isoembed {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
    friend double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

enum class Provenance { Lifted, Composite, External };

/// Sampled map of a parameter grid into E^3 (coordinates in the frame i, j, k).
struct EmbeddedSurface {
    Grid2D grid;
    std::vector<Vec3> position;  ///< NaN where the surface is not defined
    Provenance provenance = Provenance::External;
    /// Exact (X_u, X_v) when the surface comes from a closed-form construction.
    std::function<std::pair<Vec3, Vec3>(double, double)> tangents;

    Vec3 operator()(int i, int j) const { return position[grid.index(i, j)]; }
    ScalarField2D component(int c) const {
        ScalarField2D out(grid);
        for (std::size_t k = 0; k < position.size(); ++k)
            out.values()[k] = c == 0 ? position[k].x : (c == 1 ? position[k].y : position[k].z);
        return out;
    }
};

/// X(u, v) = x(u, v) i + y(u, v) j + v k.
inline EmbeddedSurface lift(const PlaneChart& chart) {
    EmbeddedSurface s;
    s.grid = chart.grid;
    s.provenance = Provenance::Lifted;
    s.position.resize(chart.grid.size());
    for (int j = 0; j < chart.grid.nv; ++j)
        for (int i = 0; i < chart.grid.nu; ++i)
            s.position[chart.grid.index(i, j)] = {chart.x(i, j), chart.y(i, j), chart.grid.v(j)};
    s.tangents = [chart](double u, double v) {
        const Vec2 a = chart.d_u(u, v), b = chart.d_v(u, v);
        return std::pair<Vec3, Vec3>{{a.x, a.y, 0.0}, {b.x, b.y, 1.0}};
    };
    return s;
}

struct InducedMetric {
    ScalarField2D E, F, G;
};

/// First fundamental form E = X_u.X_u, F = X_u.X_v, G = X_v.X_v.
inline InducedMetric induced_metric(const EmbeddedSurface& s, Derivatives mode = Derivatives::Numeric) {
    const auto& g = s.grid;
    InducedMetric m{ScalarField2D(g), ScalarField2D(g), ScalarField2D(g)};
    if (mode == Derivatives::Analytic) {
        if (!s.tangents) throw Error(ErrorKind::BadParameter, "surface has no analytic tangents");
        for (int j = 0; j < g.nv; ++j)
            for (int i = 0; i < g.nu; ++i) {
                const auto [xu, xv] = s.tangents(g.u(i), g.v(j));
                m.E(i, j) = dot(xu, xu);
                m.F(i, j) = dot(xu, xv);
                m.G(i, j) = dot(xv, xv);
            }
        return m;
    }
    const ScalarField2D X = s.component(0), Y = s.component(1), Z = s.component(2);
    for (int j = 0; j < g.nv; ++j)
        for (int i = 0; i < g.nu; ++i) {
            const Vec3 xu{X.d_u(i, j), Y.d_u(i, j), Z.d_u(i, j)};
            const Vec3 xv{X.d_v(i, j), Y.d_v(i, j), Z.d_v(i, j)};
            m.E(i, j) = dot(xu, xu);
            m.F(i, j) = dot(xu, xv);
            m.G(i, j) = dot(xv, xv);
        }
    return m;
}

/// Xbar(ubar, vbar) = X(f, g) by bilinear interpolation of the surface positions.
/// Nodes whose image misses the surface grid get NaN; a certified node doing so
/// is an error.
inline EmbeddedSurface compose(const EmbeddedSurface& s, const ParamChange& pc) {
    const auto& grid = pc.grid();
    EmbeddedSurface out;
    out.grid = grid;
    out.provenance = Provenance::Composite;
    out.position.assign(grid.size(), Vec3{NAN, NAN, NAN});
    const ScalarField2D X = s.component(0), Y = s.component(1), Z = s.component(2);
    std::size_t outside = 0;
    std::string first;
    for (int j = 0; j < grid.nv; ++j)
        for (int i = 0; i < grid.nu; ++i) {
            const double u = pc.f(i, j), v = pc.g(i, j);
            if (!std::isfinite(u) || !std::isfinite(v) || !s.grid.contains(u, v)) {
                if (pc.certified(i, j)) {
                    if (outside++ == 0) first = "(" + std::to_string(i) + "," + std::to_string(j) + ")";
                }
                continue;
            }
            // Images that land on a node take the node value exactly.
            const double a = (u - s.grid.u0) / s.grid.du, b = (v - s.grid.v0) / s.grid.dv;
            const double ra = std::round(a), rb = std::round(b);
            if (std::abs(a - ra) < 1e-9 && std::abs(b - rb) < 1e-9) {
                out.position[grid.index(i, j)] = s(static_cast<int>(ra), static_cast<int>(rb));
                continue;
            }
            out.position[grid.index(i, j)] = {X.sample(u, v), Y.sample(u, v), Z.sample(u, v)};
        }
    if (outside)
        throw Error(ErrorKind::ImageOutsideChart,
                    std::to_string(outside) + " certified nodes map outside the chart, first at node " + first);
    return out;
}

/// Nodes where EG - F^2 > tol.
inline Mask regularity_check(const ScalarField2D& E, const ScalarField2D& F, const ScalarField2D& G, double tol = 0.0) {
    Mask m(E.grid(), false);
    for (int j = 0; j < E.grid().nv; ++j)
        for (int i = 0; i < E.grid().nu; ++i) m.set(i, j, E(i, j) * G(i, j) - F(i, j) * F(i, j) > tol);
    return m;
}

/// Bounding box of (f, g) over the certified region, widened by `margin` of its extent.
inline Grid2D fit_chart_grid(const ParamChange& pc, int nu, int nv, double margin = 0.1) {
    double u_lo = INFINITY, u_hi = -INFINITY, v_lo = INFINITY, v_hi = -INFINITY;
    const auto& g = pc.grid();
    for (int j = 0; j < g.nv; ++j)
        for (int i = 0; i < g.nu; ++i) {
            if (!pc.certified(i, j)) continue;
            u_lo = std::min(u_lo, pc.f(i, j)), u_hi = std::max(u_hi, pc.f(i, j));
            v_lo = std::min(v_lo, pc.g(i, j)), v_hi = std::max(v_hi, pc.g(i, j));
        }
    if (!(u_hi > u_lo) || !(v_hi > v_lo)) throw Error(ErrorKind::NoCertifiedRegion, "certified image is degenerate");
    const double mu = margin * (u_hi - u_lo), mv = margin * (v_hi - v_lo);
    return Grid2D::span(u_lo - mu, u_hi + mu, v_lo - mv, v_hi + mv, nu, nv);
}

/// Base curve whose lift has G0 + 1 as close as possible (least squares) to a
/// target G over the image of the certified nodes: sqrt(G0) = a(v) + b(v) u with
/// a, b polynomials of the given degree.
inline BaseCurve fit_base_curve(const ParamChange& pc, const ScalarField2D& G_target, const Mask& nodes,
                                int degree = 2) {
    const auto& g = pc.grid();
    std::vector<std::array<double, 3>> samples;  // (u, v, sqrt(G - 1))
    double v_scale = 0.0;
    for (int j = 0; j < g.nv; ++j)
        for (int i = 0; i < g.nu; ++i) {
            if (!nodes(i, j) || !std::isfinite(G_target(i, j))) continue;
            const double v = pc.g(i, j);
            samples.push_back({pc.f(i, j), v, std::sqrt(std::max(G_target(i, j) - 1.0, 0.0))});
            v_scale = std::max(v_scale, std::abs(v));
        }
    const int terms = degree + 1;
    if (samples.size() < static_cast<std::size_t>(2 * terms))
        throw Error(ErrorKind::NoCertifiedRegion, "too few nodes to fit a base curve");
    if (v_scale == 0.0) v_scale = 1.0;
    Eigen::MatrixXd A(samples.size(), 2 * terms);
    Eigen::VectorXd rhs(samples.size());
    for (std::size_t r = 0; r < samples.size(); ++r) {
        const auto [u, v, target] = samples[r];
        double p = 1.0;
        for (int k = 0; k < terms; ++k, p *= v / v_scale) {
            A(r, k) = p;
            A(r, terms + k) = u * p;
        }
        rhs(r) = target;
    }
    const Eigen::VectorXd c = A.colPivHouseholderQr().solve(rhs);
    std::vector<double> a(terms), b(terms);
    for (int k = 0; k < terms; ++k) {
        a[k] = c(k) / std::pow(v_scale, k);
        b[k] = c(terms + k) / std::pow(v_scale, k);
    }
    return BaseCurve::from_speed_profile(a, b);
}

namespace detail {
inline std::string format_g17(double x) {
    if (!std::isfinite(x)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}
}  // namespace detail

/// OBJ text: one vertex per grid node (row-major), two triangles per cell whose
/// corners are all defined.
inline void write_obj(const EmbeddedSurface& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path);
    const auto& g = s.grid;
    out << "# isoembed surface " << g.nu << " x " << g.nv << "\n";
    for (const auto& p : s.position)
        out << "v " << detail::format_g17(p.x) << ' ' << detail::format_g17(p.y) << ' ' << detail::format_g17(p.z)
            << '\n';
    for (int j = 0; j + 1 < g.nv; ++j)
        for (int i = 0; i + 1 < g.nu; ++i) {
            const std::size_t a = g.index(i, j) + 1, b = g.index(i + 1, j) + 1;
            const std::size_t c = g.index(i + 1, j + 1) + 1, d = g.index(i, j + 1) + 1;
            if (!(s.position[a - 1].finite() && s.position[b - 1].finite() && s.position[c - 1].finite() &&
                  s.position[d - 1].finite()))
                continue;
            out << "f " << a << ' ' << b << ' ' << c << '\n';
            out << "f " << a << ' ' << c << ' ' << d << '\n';
        }
    if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path);
}

/// Vertex list of an OBJ file (faces are ignored).
inline std::vector<Vec3> read_obj_vertices(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path);
    std::vector<Vec3> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.size() < 2 || line[0] != 'v' || line[1] != ' ') continue;
        std::istringstream ss(line.substr(2));
        std::string a, b, c;
        if (!(ss >> a >> b >> c))
            throw Error(ErrorKind::ParseError, path + ":" + std::to_string(lineno) + ": vertex needs 3 coordinates");
        try {
            out.push_back({std::stod(a), std::stod(b), std::stod(c)});
        } catch (const std::exception&) {
            throw Error(ErrorKind::ParseError, path + ":" + std::to_string(lineno) + ": bad vertex coordinate");
        }
    }
    return out;
}

}  // namespace isoembed
