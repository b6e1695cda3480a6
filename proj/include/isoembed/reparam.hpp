#pragma once

#include <cmath>
#include <deque>

#include "isoembed/error.hpp"
#include "isoembed/grid.hpp"
#include "isoembed/ivp_solver.hpp"

namespace isoembed {

/// J = f_u g_v - f_v g_u by finite differences.
inline ScalarField2D jacobian(const ScalarField2D& f, const ScalarField2D& g) {
    if (!(f.grid() == g.grid())) throw Error(ErrorKind::ShapeMismatch, "f and g live on different grids");
    const auto& grid = f.grid();
    ScalarField2D J(grid);
    for (int j = 0; j < grid.nv; ++j)
        for (int i = 0; i < grid.nu; ++i) J(i, j) = f.d_u(i, j) * g.d_v(i, j) - f.d_v(i, j) * g.d_u(i, j);
    return J;
}

/// Closed-form J(u, 0) from the initial data, factored as
/// sqrt(1 - h'^2) * | h'  -sqrt(G0) ; k'  h' k' G0 / (1 - h'^2) |.
inline double jacobian_initial_closed_form(double h_prime, double k_prime, double G0) {
    if (!(h_prime > 0.0 && h_prime < 1.0)) throw Error(ErrorKind::BadParameter, "need 0 < h' < 1");
    if (!(k_prime > 0.0)) throw Error(ErrorKind::BadParameter, "need k' > 0");
    if (!(G0 > 0.0)) throw Error(ErrorKind::BadParameter, "need G(u,0) > 0");
    const double c = 1.0 - h_prime * h_prime;
    return std::sqrt(c) * (h_prime * (h_prime * k_prime * G0 / c) + std::sqrt(G0) * k_prime);
}

/// J(u, 0) assembled from the initial slopes f_v = -sqrt(G0) sqrt(1 - h'^2) and
/// g_v = lambda k' sqrt(G0); equals sqrt(G0) k' / sqrt(1 - h'^2).
inline double jacobian_initial_from_slopes(double h_prime, double k_prime, double G0) {
    if (!(h_prime > 0.0 && h_prime < 1.0)) throw Error(ErrorKind::BadParameter, "need 0 < h' < 1");
    const double root = std::sqrt(G0);
    const double f_v = -root * std::sqrt(1.0 - h_prime * h_prime);
    const double g_v = lambda_of(h_prime) * k_prime * root;
    return h_prime * g_v - f_v * k_prime;
}

struct Certificate {
    Mask mask;
    int orientation = 0;
};

/// Largest 4-connected region around `seed` where the node is admissible,
/// |J| > tol, and J keeps the seed's sign.
inline Certificate certify_invertible(const ScalarField2D& J, const Mask& admissible, int seed_i, int seed_j,
                                      double tol = 1e-8) {
    const auto& g = J.grid();
    const double j0 = J(seed_i, seed_j);
    if (!admissible(seed_i, seed_j) || !(std::abs(j0) > tol))
        throw Error(ErrorKind::NoCertifiedRegion, "|J| <= tol at the initial point");
    Certificate c{Mask(g, false), j0 > 0 ? 1 : -1};
    auto ok = [&](int i, int j) {
        const double x = J(i, j);
        return admissible(i, j) && std::abs(x) > tol && (x > 0 ? 1 : -1) == c.orientation;
    };
    std::deque<std::pair<int, int>> queue{{seed_i, seed_j}};
    c.mask.set(seed_i, seed_j, true);
    while (!queue.empty()) {
        const auto [i, j] = queue.front();
        queue.pop_front();
        const int di[] = {1, -1, 0, 0}, dj[] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
            const int a = i + di[k], b = j + dj[k];
            if (a < 0 || b < 0 || a >= g.nu || b >= g.nv || c.mask(a, b) || !ok(a, b)) continue;
            c.mask.set(a, b, true);
            queue.emplace_back(a, b);
        }
    }
    return c;
}

inline Certificate certify_invertible(const ScalarField2D& J, int seed_i, int seed_j, double tol = 1e-8) {
    return certify_invertible(J, Mask(J.grid(), true), seed_i, seed_j, tol);
}

/// The parameter change u = f(ubar, vbar), v = g(ubar, vbar) with its Jacobian certificate.
struct ParamChange {
    ScalarField2D f, g;
    ScalarField2D f_u, f_v, g_u, g_v;
    ScalarField2D J;
    Mask solver_valid;
    Mask certified;
    int orientation = 0;
    int seed_i = 0;
    int seed_j = 0;

    const Grid2D& grid() const noexcept { return f.grid(); }
};

inline ParamChange make_param_change(ScalarField2D f, ScalarField2D g, Mask solver_valid, Point2 initial_point,
                                     double j_tol = 1e-8) {
    if (!(f.grid() == g.grid()) || !(solver_valid.grid == f.grid()))
        throw Error(ErrorKind::ShapeMismatch, "parameter-change fields live on different grids");
    ParamChange pc;
    const auto& grid = f.grid();
    pc.seed_i = grid.nearest_col(initial_point.u);
    pc.seed_j = std::clamp(static_cast<int>(std::lround((initial_point.v - grid.v0) / grid.dv)), 0, grid.nv - 1);
    pc.f_u = f.derivative_u();
    pc.f_v = f.derivative_v();
    pc.g_u = g.derivative_u();
    pc.g_v = g.derivative_v();
    pc.J = jacobian(f, g);
    auto cert = certify_invertible(pc.J, solver_valid, pc.seed_i, pc.seed_j, j_tol);
    pc.certified = std::move(cert.mask);
    pc.orientation = cert.orientation;
    pc.f = std::move(f);
    pc.g = std::move(g);
    pc.solver_valid = std::move(solver_valid);
    return pc;
}

inline ParamChange make_param_change(const SolveReport& f, const SolveReport& g, Point2 initial_point,
                                     double j_tol = 1e-8) {
    return make_param_change(f.field, g.field, f.valid & g.valid, initial_point, j_tol);
}

struct InvertOptions {
    double tol = 1e-10;
    int max_iter = 50;
};

/// Newton iteration for (ubar, vbar) with f = u, g = v, using bilinear
/// interpolation of f, g and of their derivative fields.
inline Point2 invert(const ParamChange& pc, Point2 target, Point2 seed, const InvertOptions& opts = {}) {
    const auto& grid = pc.grid();
    auto inside = [&](Point2 p) {
        if (!grid.contains(p.u, p.v, 0.0)) return false;
        const auto [i, a] = ScalarField2D::locate(p.u, grid.u0, grid.du, grid.nu);
        const auto [j, b] = ScalarField2D::locate(p.v, grid.v0, grid.dv, grid.nv);
        return pc.certified(i, j) || pc.certified(i + 1, j) || pc.certified(i, j + 1) || pc.certified(i + 1, j + 1);
    };
    if (!inside(seed)) throw Error(ErrorKind::LeftRegion, "seed outside the certified region");
    Point2 p = seed;
    for (int it = 0; it < opts.max_iter; ++it) {
        const double ru = pc.f.sample(p.u, p.v) - target.u;
        const double rv = pc.g.sample(p.u, p.v) - target.v;
        if (std::abs(ru) + std::abs(rv) < opts.tol) return p;
        const double a = pc.f_u.sample(p.u, p.v), b = pc.f_v.sample(p.u, p.v);
        const double c = pc.g_u.sample(p.u, p.v), d = pc.g_v.sample(p.u, p.v);
        const double det = a * d - b * c;
        if (det == 0.0) break;
        p.u -= (d * ru - b * rv) / det;
        p.v -= (-c * ru + a * rv) / det;
        if (!std::isfinite(p.u) || !std::isfinite(p.v) || !inside(p))
            throw Error(ErrorKind::LeftRegion, "Newton iterate left the certified region");
    }
    const double ru = pc.f.sample(p.u, p.v) - target.u;
    const double rv = pc.g.sample(p.u, p.v) - target.v;
    if (std::abs(ru) + std::abs(rv) < opts.tol) return p;
    throw Error(ErrorKind::NoConvergence, "Newton inversion did not converge");
}

}  // namespace isoembed
