#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "isoembed/error.hpp"
#include "isoembed/grid.hpp"
#include "isoembed/initial_data.hpp"
#include "isoembed/metric.hpp"

namespace isoembed {

struct SolveOptions {
    double residual_tol = 1e-6;
    double cfl = 0.5;
    double guard = 1e-6;
};

struct SolveReport {
    ScalarField2D field;
    Mask valid;
    double max_residual = 0.0;
    bool residual_ok = true;
    int steps = 0;
    std::size_t guard_masked = 0;  ///< nodes lost to the f_u guard band or branch violations
    int initial_row = 0;
};

/// lambda = f_u / sqrt(1 - f_u^2), the positive root for 0 < f_u < 1.
inline double lambda_of(double f_u) noexcept { return f_u / std::sqrt(1.0 - f_u * f_u); }

/// lambda over a field of f_u values. Nodes with f_u >= 1 - guard are masked;
/// f_u <= 0 on a claimed node is a BranchViolation.
inline MaskedField lambda_field(const ScalarField2D& f_u, const Mask& valid, double guard = 1e-6) {
    const auto& g = f_u.grid();
    MaskedField out{ScalarField2D(g, 0.0), valid};
    for (int j = 0; j < g.nv; ++j)
        for (int i = 0; i < g.nu; ++i) {
            if (!valid(i, j)) continue;
            const double p = f_u(i, j);
            if (!(p > 0.0)) throw Error(ErrorKind::BranchViolation, "f_u <= 0: negative lambda branch");
            if (p >= 1.0 - guard) {
                out.mask.set(i, j, false);
                continue;
            }
            out.field(i, j) = lambda_of(p);
        }
    return out;
}

inline MaskedField lambda_field(const ScalarField2D& f_u, double guard = 1e-6) {
    return lambda_field(f_u, Mask(f_u.grid(), true), guard);
}

namespace detail {

inline void row_slope(const std::vector<double>& y, double h, std::vector<double>& out) {
    const std::size_t n = y.size();
    out[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h);
    out[n - 1] = (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * h);
    for (std::size_t i = 1; i + 1 < n; ++i) out[i] = (y[i + 1] - y[i - 1]) / (2.0 * h);
}

/// Right-hand sides of the marched normal forms at one level:
///   f_v = -sqrt(G) sqrt(1 - f_u^2),   g_v = lambda(f_u) sqrt(G) g_u.
class LevelRhs {
public:
    LevelRhs(const GeodesicMetric2D& m, const Grid2D& grid, double guard)
        : m_(m), grid_(grid), guard_(guard), p_(grid.nu), q_(grid.nu), root_g_(grid.nu) {}

    /// Fills f_rhs and the characteristic speed lambda*sqrt(G); flags out-of-branch nodes.
    void f_rhs(double v, const std::vector<double>& f, std::vector<double>& rhs, std::vector<double>& speed,
               std::vector<std::uint8_t>& bad) {
        row_slope(f, grid_.du, p_);
        for (int i = 0; i < grid_.nu; ++i) {
            const double root = std::sqrt(m_(grid_.u(i), v));
            root_g_[i] = root;
            double p = p_[i];
            if (!(p > 0.0) || p >= 1.0 - guard_) {
                bad[i] = 1;
                p = std::clamp(p, 0.0, 1.0 - guard_);
            }
            rhs[i] = -root * std::sqrt(1.0 - p * p);
            speed[i] = lambda_of(p) * root;
        }
    }

    void g_rhs(const std::vector<double>& g, const std::vector<double>& speed, std::vector<double>& rhs) {
        row_slope(g, grid_.du, q_);
        for (int i = 0; i < grid_.nu; ++i) rhs[i] = speed[i] * q_[i];
    }

private:
    const GeodesicMetric2D& m_;
    const Grid2D& grid_;
    double guard_;
    std::vector<double> p_, q_, root_g_;
};

struct MarchResult {
    ScalarField2D f;
    ScalarField2D g;
    Mask valid;
    int steps = 0;
    std::size_t guard_masked = 0;
    int initial_row = 0;
};

inline int initial_row_of(const Grid2D& grid) {
    const int j0 = grid.row_at(0.0);
    if (j0 < 0) throw Error(ErrorKind::BadParameter, "grid has no row on the initial line vbar = 0");
    return j0;
}

inline void check_metric_covers(const GeodesicMetric2D& m, const Grid2D& grid) {
    const auto& d = m.domain();
    if (!d.contains(grid.u0, grid.v0, 1e-12) || !d.contains(grid.u_max(), grid.v_max(), 1e-12))
        throw Error(ErrorKind::OutOfDomain, "grid does not fit inside the metric domain");
}

/// Explicit RK4 marching away from vbar = 0 in both directions. When `f_given`
/// is set, every level restarts f from that field (so lambda is frozen from it)
/// and g is transported alongside.
inline MarchResult march(const GeodesicMetric2D& m, const InitialData& init, const Grid2D& grid,
                         const SolveOptions& opts, const ScalarField2D* f_given, bool with_g) {
    grid.check();
    if (!(opts.cfl > 0.0)) throw Error(ErrorKind::BadParameter, "cfl must be positive");
    check_metric_covers(m, grid);
    const int j0 = initial_row_of(grid);
    const int n = grid.nu;

    MarchResult out;
    out.f = ScalarField2D(grid, 0.0);
    out.g = ScalarField2D(grid, 0.0);
    out.valid = Mask(grid, false);
    out.initial_row = j0;

    Mask fan(grid, false);
    for (int i = 0; i < n; ++i) {
        const double u = grid.u(i);
        const double hp = init.h_prime(u);
        if (!(hp > 0.0)) throw Error(ErrorKind::BranchViolation, "initial data needs h' > 0");
        out.f(i, j0) = init.h(u);
        if (with_g) {
            if (!(init.k_prime(u) != 0.0)) throw Error(ErrorKind::BadParameter, "initial data needs k' != 0");
            out.g(i, j0) = init.k(u);
        }
        const bool ok = hp < 1.0 - opts.guard;
        fan.set(i, j0, ok);
        out.valid.set(i, j0, ok);
        if (!ok) ++out.guard_masked;
    }
    if (f_given) {
        for (int i = 0; i < n; ++i) out.f(i, j0) = (*f_given)(i, j0);
    }

    LevelRhs rhs(m, grid, opts.guard);
    std::vector<double> y(n), z(n), ys(n), zs(n), k1(n), k2(n), k3(n), k4(n), l1(n), l2(n), l3(n), l4(n);
    std::vector<double> s1(n), s2(n), s3(n), s4(n);
    std::vector<std::uint8_t> bad(n);

    const double span_tol = 1e-12 * std::max(1.0, grid.u_max() - grid.u0);
    for (const int dir : {+1, -1}) {
        double reach_min = 0.0, reach_max = 0.0;
        for (int jp = j0; jp + dir >= 0 && jp + dir < grid.nv; jp += dir) {
            const int jn = jp + dir;
            for (int i = 0; i < n; ++i) {
                y[i] = f_given ? (*f_given)(i, jp) : out.f(i, jp);
                z[i] = out.g(i, jp);
            }
            std::fill(bad.begin(), bad.end(), 0);

            // Substep count from the current row's characteristic speeds.
            std::vector<std::uint8_t> scratch(n, 0);
            rhs.f_rhs(grid.v(jp), y, k1, s1, scratch);
            double smax = 0.0;
            for (int i = 0; i < n; ++i)
                if (fan(i, jp)) smax = std::max(smax, s1[i]);
            const int sub = std::max(1, static_cast<int>(std::ceil(grid.dv * smax / (opts.cfl * grid.du) - 1e-12)));
            const double h = dir * grid.dv / sub;

            double lvl_min = std::numeric_limits<double>::infinity(), lvl_max = 0.0;
            auto track = [&](const std::vector<double>& s) {
                for (int i = 0; i < n; ++i)
                    if (fan(i, jp)) {
                        lvl_min = std::min(lvl_min, s[i]);
                        lvl_max = std::max(lvl_max, s[i]);
                    }
            };

            for (int step = 0; step < sub; ++step) {
                const double v = grid.v(jp) + step * h;
                rhs.f_rhs(v, y, k1, s1, bad);
                for (int i = 0; i < n; ++i) ys[i] = y[i] + 0.5 * h * k1[i];
                rhs.f_rhs(v + 0.5 * h, ys, k2, s2, bad);
                for (int i = 0; i < n; ++i) ys[i] = y[i] + 0.5 * h * k2[i];
                rhs.f_rhs(v + 0.5 * h, ys, k3, s3, bad);
                for (int i = 0; i < n; ++i) ys[i] = y[i] + h * k3[i];
                rhs.f_rhs(v + h, ys, k4, s4, bad);
                track(s1), track(s2), track(s3), track(s4);

                if (with_g) {
                    rhs.g_rhs(z, s1, l1);
                    for (int i = 0; i < n; ++i) zs[i] = z[i] + 0.5 * h * l1[i];
                    rhs.g_rhs(zs, s2, l2);
                    for (int i = 0; i < n; ++i) zs[i] = z[i] + 0.5 * h * l2[i];
                    rhs.g_rhs(zs, s3, l3);
                    for (int i = 0; i < n; ++i) zs[i] = z[i] + h * l3[i];
                    rhs.g_rhs(zs, s4, l4);
                    for (int i = 0; i < n; ++i) z[i] += h / 6.0 * (l1[i] + 2.0 * l2[i] + 2.0 * l3[i] + l4[i]);
                }
                for (int i = 0; i < n; ++i) y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                ++out.steps;
            }
            if (!std::isfinite(lvl_min)) lvl_min = 0.0;
            reach_min += lvl_min * grid.dv;
            reach_max += lvl_max * grid.dv;

            // Characteristics run toward -u as vbar grows; the foot of node i on the
            // initial line lies in [u + dir*reach_min, u + dir*reach_max] (ordered).
            const int radius = 4 * sub;
            for (int i = 0; i < n; ++i) {
                bool fan_ok = !bad[i];
                for (int q = std::max(0, i - radius); fan_ok && q <= std::min(n - 1, i + radius); ++q)
                    fan_ok = fan(q, jp);
                fan.set(i, jn, fan_ok);
                const double u = grid.u(i);
                const double a = u + dir * reach_min, b = u + dir * reach_max;
                const bool cone_ok =
                    std::min(a, b) >= grid.u0 - span_tol && std::max(a, b) <= grid.u_max() + span_tol;
                out.valid.set(i, jn, fan_ok && cone_ok);
                if (!fan_ok && fan(i, jp)) ++out.guard_masked;
                out.f(i, jn) = y[i];
                if (with_g) out.g(i, jn) = z[i];
            }
            if (f_given) {
                for (int i = 0; i < n; ++i) out.f(i, jn) = (*f_given)(i, jn);
            }
        }
    }
    return out;
}

}  // namespace detail

/// Solves sqrt(G) f_u + lambda f_v = 0 with f(u, 0) = h(u) by marching the
/// normal form f_v = -sqrt(G) sqrt(1 - f_u^2).
inline SolveReport solve_f(const GeodesicMetric2D& m, const InitialData& init, const Grid2D& grid,
                           const SolveOptions& opts = {}) {
    auto r = detail::march(m, init, grid, opts, nullptr, false);
    SolveReport rep;
    rep.field = std::move(r.f);
    rep.valid = std::move(r.valid);
    rep.steps = r.steps;
    rep.guard_masked = r.guard_masked;
    rep.initial_row = r.initial_row;
    for (int j = 0; j < grid.nv; ++j)
        for (int i = 0; i < grid.nu; ++i) {
            if (!rep.valid(i, j)) continue;
            const double p = rep.field.d_u(i, j);
            const double res = std::sqrt(m(grid.u(i), grid.v(j))) * p + lambda_of(p) * rep.field.d_v(i, j);
            rep.max_residual = std::max(rep.max_residual, std::abs(res));
        }
    rep.residual_ok = rep.max_residual < opts.residual_tol;
    return rep;
}

/// Solves lambda sqrt(G) g_u - g_v = 0 with g(u, 0) = k(u), lambda taken from f.
inline SolveReport solve_g(const GeodesicMetric2D& m, const SolveReport& f_report, const InitialData& init,
                           const Grid2D& grid, const SolveOptions& opts = {}) {
    if (!(f_report.field.grid() == grid)) throw Error(ErrorKind::ShapeMismatch, "f solution lives on another grid");
    auto r = detail::march(m, init, grid, opts, &f_report.field, true);
    SolveReport rep;
    rep.field = std::move(r.g);
    rep.valid = r.valid & f_report.valid;
    rep.steps = r.steps;
    rep.guard_masked = f_report.guard_masked;
    rep.initial_row = r.initial_row;
    for (int j = 0; j < grid.nv; ++j)
        for (int i = 0; i < grid.nu; ++i) {
            if (!rep.valid(i, j)) continue;
            const double lam = lambda_of(f_report.field.d_u(i, j));
            const double res =
                lam * std::sqrt(m(grid.u(i), grid.v(j))) * rep.field.d_u(i, j) - rep.field.d_v(i, j);
            rep.max_residual = std::max(rep.max_residual, std::abs(res));
        }
    rep.residual_ok = rep.max_residual < opts.residual_tol;
    return rep;
}

struct C2Defect {
    int i = 0;
    int j = 0;
    double jump = 0.0;
};

struct C2DefectReport {
    double tol = 0.0;
    std::vector<C2Defect> nodes;
    std::size_t rows_flagged = 0;

    bool empty() const noexcept { return nodes.empty(); }

    /// Flagged u positions on row j.
    std::vector<double> locus_on_row(const Grid2D& grid, int j) const {
        std::vector<double> out;
        for (const auto& d : nodes)
            if (d.j == j) out.push_back(grid.u(d.i));
        return out;
    }
};

/// Flags nodes where the one-sided second differences of f in u disagree by more
/// than tol: a jump in f_uu, i.e. a C^2 defect.
inline C2DefectReport detect_c2_defects(const ScalarField2D& f, const Mask& valid, double tol = 1e-2) {
    const auto& g = f.grid();
    C2DefectReport rep;
    rep.tol = tol;
    const double h2 = g.du * g.du;
    for (int j = 0; j < g.nv; ++j) {
        bool any = false;
        for (int i = 2; i + 2 < g.nu; ++i) {
            bool ok = true;
            for (int q = i - 2; ok && q <= i + 2; ++q) ok = valid(q, j);
            if (!ok) continue;
            const double left = (f(i, j) - 2.0 * f(i - 1, j) + f(i - 2, j)) / h2;
            const double right = (f(i + 2, j) - 2.0 * f(i + 1, j) + f(i, j)) / h2;
            const double jump = std::abs(right - left);
            if (jump > tol) {
                rep.nodes.push_back({i, j, jump});
                any = true;
            }
        }
        if (any) ++rep.rows_flagged;
    }
    return rep;
}

}  // namespace isoembed
