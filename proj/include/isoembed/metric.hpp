#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "isoembed/error.hpp"
#include "isoembed/grid.hpp"

namespace isoembed {

struct Rect {
    double u_min = -0.5;
    double u_max = 0.5;
    double v_min = -0.5;
    double v_max = 0.5;

    static Rect centered(double u0, double v0, double a, double b) { return {u0 - a, u0 + a, v0 - b, v0 + b}; }
    bool contains(double u, double v, double slack = 1e-12) const noexcept {
        return u >= u_min - slack && u <= u_max + slack && v >= v_min - slack && v <= v_max + slack;
    }
    double u_center() const noexcept { return 0.5 * (u_min + u_max); }
    double v_center() const noexcept { return 0.5 * (v_min + v_max); }
};

/// A metric du^2 + G(u, v) dv^2 on a closed rectangle. E = 1 and F = 0 are implied.
/// G comes either from a closed form or from a sampled grid (bilinear between nodes).
class GeodesicMetric2D {
public:
    using Fn = std::function<double(double, double)>;

    static GeodesicMetric2D closed_form(std::string name, Rect domain, Fn g, Fn sqrt_g_uu = {}) {
        GeodesicMetric2D m;
        m.name_ = std::move(name);
        m.domain_ = domain;
        m.g_ = std::move(g);
        m.sqrt_g_uu_ = std::move(sqrt_g_uu);
        return m;
    }

    static GeodesicMetric2D sampled(std::string name, ScalarField2D samples) {
        GeodesicMetric2D m;
        m.name_ = std::move(name);
        const auto& g = samples.grid();
        m.domain_ = {g.u0, g.u_max(), g.v0, g.v_max()};
        m.samples_ = std::move(samples);
        return m;
    }

    static GeodesicMetric2D flat(Rect domain = {}) {
        return closed_form("flat", domain, [](double, double) { return 1.0; }, [](double, double) { return 0.0; });
    }
    static GeodesicMetric2D cos2(Rect domain = {}) {
        return closed_form(
            "cos2", domain, [](double u, double) { return std::cos(u) * std::cos(u); },
            [](double u, double) { return -std::cos(u); });
    }
    static GeodesicMetric2D exp2(Rect domain = {}) {
        return closed_form(
            "exp", domain, [](double u, double) { return std::exp(2.0 * u); },
            [](double u, double) { return std::exp(u); });
    }

    const std::string& name() const noexcept { return name_; }
    const Rect& domain() const noexcept { return domain_; }
    bool has_closed_form() const noexcept { return static_cast<bool>(g_); }
    bool has_analytic_curvature() const noexcept { return static_cast<bool>(sqrt_g_uu_); }

    /// G(u, v). Throws OutOfDomain / NonPositiveMetric.
    double operator()(double u, double v) const {
        if (!domain_.contains(u, v)) throw Error(ErrorKind::OutOfDomain, "point outside metric domain");
        const double value = raw(u, v);
        if (!(value > 0.0)) throw Error(ErrorKind::NonPositiveMetric, "metric coefficient G <= 0");
        return value;
    }

    /// Closed-form K = -(sqrt G)_uu / sqrt G.
    double analytic_curvature(double u, double v) const {
        if (!sqrt_g_uu_) throw Error(ErrorKind::BadParameter, "metric has no closed-form second derivative");
        return -sqrt_g_uu_(u, v) / std::sqrt((*this)(u, v));
    }

    /// Unchecked evaluation (no domain or sign checks).
    double raw(double u, double v) const {
        if (g_) return g_(u, v);
        return samples_.sample(std::clamp(u, domain_.u_min, domain_.u_max), std::clamp(v, domain_.v_min, domain_.v_max));
    }

private:
    std::string name_;
    Rect domain_;
    Fn g_;
    Fn sqrt_g_uu_;
    ScalarField2D samples_;
};

inline double eval_metric(const GeodesicMetric2D& m, Point2 p) { return m(p.u, p.v); }

/// Reads a `ubar,vbar,G` CSV describing a full rectangular grid (any row order).
inline GeodesicMetric2D read_metric_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open metric file " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::ParseError, path + ": empty file");
    if (line.rfind("ubar,vbar,G", 0) != 0) throw Error(ErrorKind::ParseError, path + ":1: expected header ubar,vbar,G");
    std::map<std::pair<double, double>, double> rows;
    std::map<double, int> us, vs;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        double u, v, g;
        char c1, c2;
        if (!(ss >> u >> c1 >> v >> c2 >> g) || c1 != ',' || c2 != ',')
            throw Error(ErrorKind::ParseError, path + ":" + std::to_string(lineno) + ": expected three numbers");
        rows[{v, u}] = g;
        us[u] = 0;
        vs[v] = 0;
    }
    const int nu = static_cast<int>(us.size()), nv = static_cast<int>(vs.size());
    if (nu < 3 || nv < 3) throw Error(ErrorKind::GridTooSmall, path + ": need at least 3x3 samples");
    if (rows.size() != us.size() * vs.size()) throw Error(ErrorKind::ShapeMismatch, path + ": samples do not form a full grid");
    const Grid2D grid = Grid2D::span(us.begin()->first, us.rbegin()->first, vs.begin()->first, vs.rbegin()->first, nu, nv);
    std::vector<double> values;
    values.reserve(rows.size());
    for (const auto& [key, g] : rows) values.push_back(g);  // ordered by (v, u): row-major
    // Spacing must be uniform for the bilinear sampler.
    int k = 0;
    for (const auto& [u, unused] : us) {
        if (std::abs(u - grid.u(k++)) > 1e-9 * std::max(1.0, std::abs(u)))
            throw Error(ErrorKind::ShapeMismatch, path + ": ubar samples are not uniformly spaced");
    }
    k = 0;
    for (const auto& [v, unused] : vs) {
        if (std::abs(v - grid.v(k++)) > 1e-9 * std::max(1.0, std::abs(v)))
            throw Error(ErrorKind::ShapeMismatch, path + ": vbar samples are not uniformly spaced");
    }
    return GeodesicMetric2D::sampled("file:" + path, ScalarField2D(grid, std::move(values)));
}

/// Registry lookup: "flat", "cos2", "exp", or "file:<path>".
inline GeodesicMetric2D make_metric(const std::string& name, Rect domain = {}) {
    if (name == "flat") return GeodesicMetric2D::flat(domain);
    if (name == "cos2") return GeodesicMetric2D::cos2(domain);
    if (name == "exp") return GeodesicMetric2D::exp2(domain);
    if (name.rfind("file:", 0) == 0) return read_metric_csv(name.substr(5));
    throw Error(ErrorKind::BadParameter, "unknown metric '" + name + "'");
}

/// G sampled on every node of `grid`.
inline ScalarField2D sample_metric(const GeodesicMetric2D& m, const Grid2D& grid) {
    return ScalarField2D::from_function(grid, [&](double u, double v) { return m(u, v); });
}

/// K = -(sqrt G)_uu / sqrt G by finite differences in u. Boundary columns are masked.
inline MaskedField gauss_curvature_geodesic(const ScalarField2D& G) {
    const auto& grid = G.grid();
    if (grid.nu - 2 < 3) throw Error(ErrorKind::GridTooSmall, "curvature needs at least 3 interior samples in u");
    ScalarField2D root(grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double g = G.values()[k];
        if (!(g > 0.0)) throw Error(ErrorKind::NonPositiveMetric, "G <= 0 on curvature grid");
        root.values()[k] = std::sqrt(g);
    }
    MaskedField out{ScalarField2D(grid, 0.0), Mask(grid, false)};
    for (int j = 0; j < grid.nv; ++j)
        for (int i = 1; i < grid.nu - 1; ++i) {
            out.field(i, j) = -root.d_uu(i, j) / root(i, j);
            out.mask.set(i, j, true);
        }
    return out;
}

/// Closed-form curvature on every node of `grid`.
inline MaskedField gauss_curvature_geodesic(const GeodesicMetric2D& m, const Grid2D& grid) {
    if (grid.nu - 2 < 3) throw Error(ErrorKind::GridTooSmall, "curvature needs at least 3 interior samples in u");
    MaskedField out{ScalarField2D(grid), Mask(grid, true)};
    for (int j = 0; j < grid.nv; ++j)
        for (int i = 0; i < grid.nu; ++i) out.field(i, j) = m.analytic_curvature(grid.u(i), grid.v(j));
    return out;
}

struct MetricViolation {
    enum class Kind { OutsideDomain, NonPositive, SteepDifference } kind;
    int i = 0;
    int j = 0;
    double value = 0.0;
};

struct ValidationReport {
    std::vector<MetricViolation> violations;
    bool ok() const noexcept { return violations.empty(); }
    std::size_t count(MetricViolation::Kind k) const noexcept {
        return static_cast<std::size_t>(
            std::count_if(violations.begin(), violations.end(), [k](const auto& v) { return v.kind == k; }));
    }
};

/// Checks G > tol at every node and |dG|/h < max_slope between neighbouring nodes
/// (a sampled stand-in for the C^1 hypothesis).
inline ValidationReport validate_metric(const GeodesicMetric2D& m, const Grid2D& grid, double tol = 1e-8,
                                        double max_slope = 1e6) {
    ValidationReport report;
    ScalarField2D G(grid, 0.0);
    for (int j = 0; j < grid.nv; ++j)
        for (int i = 0; i < grid.nu; ++i) {
            const double u = grid.u(i), v = grid.v(j);
            if (!m.domain().contains(u, v)) {
                report.violations.push_back({MetricViolation::Kind::OutsideDomain, i, j, 0.0});
                continue;
            }
            const double g = m.raw(u, v);
            G(i, j) = g;
            if (!(g > tol)) report.violations.push_back({MetricViolation::Kind::NonPositive, i, j, g});
        }
    for (int j = 0; j < grid.nv; ++j)
        for (int i = 0; i < grid.nu; ++i) {
            double slope = 0.0;
            if (i + 1 < grid.nu) slope = std::max(slope, std::abs(G(i + 1, j) - G(i, j)) / grid.du);
            if (j + 1 < grid.nv) slope = std::max(slope, std::abs(G(i, j + 1) - G(i, j)) / grid.dv);
            if (!(slope < max_slope)) report.violations.push_back({MetricViolation::Kind::SteepDifference, i, j, slope});
        }
    return report;
}

}  // namespace isoembed
