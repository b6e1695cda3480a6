#pragma once

#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "isoembed/error.hpp"
#include "isoembed/grid.hpp"
#include "isoembed/metric.hpp"
#include "isoembed/reparam.hpp"

namespace isoembed {

/// Per-node linear system in the unknowns (E, G):
///   E f_u^2     + G g_u^2     = 1
///   E f_u f_v   + G g_u g_v   = 0
///   E f_v^2     + G g_v^2     = Gbar
struct SystemS {
    double f_u = 0.0, f_v = 0.0, g_u = 0.0, g_v = 0.0, Gbar = 1.0;
    Eigen::Matrix<double, 3, 2> coef = Eigen::Matrix<double, 3, 2>::Zero();
    Eigen::Vector3d rhs = Eigen::Vector3d::Zero();

    Eigen::Matrix3d augmented() const {
        Eigen::Matrix3d a;
        a << coef, rhs;
        return a;
    }
    double jacobian() const noexcept { return f_u * g_v - f_v * g_u; }
};

inline SystemS assemble(double f_u, double f_v, double g_u, double g_v, double Gbar) {
    SystemS s;
    s.f_u = f_u, s.f_v = f_v, s.g_u = g_u, s.g_v = g_v, s.Gbar = Gbar;
    s.coef << f_u * f_u, g_u * g_u,
              f_u * f_v, g_u * g_v,
              f_v * f_v, g_v * g_v;
    s.rhs << 1.0, 0.0, Gbar;
    return s;
}

inline SystemS assemble(const ParamChange& pc, const GeodesicMetric2D& m, int i, int j) {
    if (!pc.certified(i, j)) throw Error(ErrorKind::UncertifiedNode, "node outside the certified region");
    const auto& grid = pc.grid();
    return assemble(pc.f_u(i, j), pc.f_v(i, j), pc.g_u(i, j), pc.g_v(i, j), m(grid.u(i), grid.v(j)));
}

/// Determinant of the 3x3 augmented matrix, expanded directly.
inline double augmented_det_residual(const SystemS& s) { return s.augmented().determinant(); }

/// The same determinant in factored form J (f_v g_v + Gbar f_u g_u); vanishes
/// when f and g satisfy their PDEs.
inline double augmented_det_factored(const SystemS& s) {
    return s.jacobian() * (s.f_v * s.g_v + s.Gbar * s.f_u * s.g_u);
}

struct RankResult {
    int coeff = 0;
    int augmented = 0;
    double top_minor = 0.0;  ///< f_u g_u J, the upper 2x2 minor of the coefficient matrix
};

namespace detail {
template <class M>
int numeric_rank(const M& a, double rtol) {
    const Eigen::MatrixXd dense = a;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(dense);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv(0) == 0.0) return 0;
    int r = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k)
        if (sv(k) > rtol * sv(0)) ++r;
    return r;
}
}  // namespace detail

/// Ranks by singular values; values below rtol * sigma_max count as zero.
inline RankResult rank_checks(const SystemS& s, double rtol = 1e-10) {
    RankResult r;
    r.coeff = detail::numeric_rank(s.coef, rtol);
    r.augmented = detail::numeric_rank(s.augmented(), rtol);
    r.top_minor = s.f_u * s.g_u * s.jacobian();
    return r;
}

struct EGSolution {
    double E = 0.0;
    double G = 0.0;
    double G_closed_form = 0.0;   ///< (Gbar - f_v^2) / g_v^2
    std::array<int, 2> rows{0, 1};
    double leftover_residual = 0.0;  ///< residual of the row not used by Cramer's rule
};

/// Cramer's rule on the two rows with the largest 2x2 minor; the third row is
/// checked as a residual.
inline EGSolution solve_for_EG(const SystemS& s, double rtol = 1e-10) {
    if (rank_checks(s, rtol).coeff < 2) throw Error(ErrorKind::RankDeficient, "coefficient matrix rank < 2");
    constexpr std::array<std::array<int, 2>, 3> pairs{{{0, 1}, {0, 2}, {1, 2}}};
    EGSolution out;
    double best = -1.0;
    for (const auto& p : pairs) {
        const double minor = s.coef(p[0], 0) * s.coef(p[1], 1) - s.coef(p[0], 1) * s.coef(p[1], 0);
        if (std::abs(minor) > best) {
            best = std::abs(minor);
            out.rows = p;
        }
    }
    const int a = out.rows[0], b = out.rows[1];
    const double det = s.coef(a, 0) * s.coef(b, 1) - s.coef(a, 1) * s.coef(b, 0);
    out.E = (s.rhs(a) * s.coef(b, 1) - s.coef(a, 1) * s.rhs(b)) / det;
    out.G = (s.coef(a, 0) * s.rhs(b) - s.rhs(a) * s.coef(b, 0)) / det;
    const int c = 3 - a - b;
    out.leftover_residual = std::abs(s.coef(c, 0) * out.E + s.coef(c, 1) * out.G - s.rhs(c));
    out.G_closed_form = (s.Gbar - s.f_v * s.f_v) / (s.g_v * s.g_v);
    return out;
}

/// System S solved on every certified node.
struct SystemSField {
    ScalarField2D E, G, G_closed_form, aug_det;
    ScalarField2D row1, row2, row3;  ///< |pullback row residual| with the Cramer (E, G)
    ScalarField2D rank_coeff, rank_aug;
    Mask solved;  ///< certified nodes with rank_coeff == 2
    Mask certified;
    std::size_t full_rank_nodes = 0;  ///< certified nodes with ranks (2, 2)
    std::size_t nonpositive_G = 0;
};

inline SystemSField solve_system_s(const ParamChange& pc, const GeodesicMetric2D& m, double rtol = 1e-10) {
    const auto& grid = pc.grid();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    SystemSField out{ScalarField2D(grid, nan), ScalarField2D(grid, nan), ScalarField2D(grid, nan),
                     ScalarField2D(grid, nan), ScalarField2D(grid, nan), ScalarField2D(grid, nan),
                     ScalarField2D(grid, nan), ScalarField2D(grid, 0.0), ScalarField2D(grid, 0.0),
                     Mask(grid, false), pc.certified, 0, 0};
    for (int j = 0; j < grid.nv; ++j)
        for (int i = 0; i < grid.nu; ++i) {
            if (!pc.certified(i, j)) continue;
            const SystemS s = assemble(pc, m, i, j);
            const RankResult r = rank_checks(s, rtol);
            out.rank_coeff(i, j) = r.coeff;
            out.rank_aug(i, j) = r.augmented;
            out.aug_det(i, j) = augmented_det_residual(s);
            if (r.coeff == 2 && r.augmented == 2) ++out.full_rank_nodes;
            if (r.coeff < 2) continue;
            const EGSolution eg = solve_for_EG(s, rtol);
            out.E(i, j) = eg.E;
            out.G(i, j) = eg.G;
            out.G_closed_form(i, j) = eg.G_closed_form;
            out.row1(i, j) = std::abs(eg.E * s.coef(0, 0) + eg.G * s.coef(0, 1) - 1.0);
            out.row2(i, j) = std::abs(eg.E * s.coef(1, 0) + eg.G * s.coef(1, 1));
            out.row3(i, j) = std::abs(eg.E * s.coef(2, 0) + eg.G * s.coef(2, 1) - s.Gbar);
            out.solved.set(i, j, true);
            if (!(eg.G > 0.0)) ++out.nonpositive_G;
        }
    return out;
}

}  // namespace isoembed
