#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "isoembed/error.hpp"
#include "isoembed/grid.hpp"

namespace isoembed {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
    friend double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
    double norm() const { return std::hypot(x, y); }
};

inline Vec2 rotate90(Vec2 a) { return {-a.y, a.x}; }

enum class Regularity { Analytic, C1Only };

namespace detail {

/// 8-point Gauss-Legendre on [a, b].
template <class Fn>
double gauss_legendre(Fn&& fn, double a, double b) {
    static constexpr std::array<double, 4> x{0.1834346424956498, 0.5255324099163290, 0.7966664774136267,
                                             0.9602898564975363};
    static constexpr std::array<double, 4> w{0.3626837833783620, 0.3137066458778873, 0.2223810344533745,
                                             0.1012285362903763};
    const double c = 0.5 * (a + b), r = 0.5 * (b - a);
    double sum = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) sum += w[k] * (fn(c - r * x[k]) + fn(c + r * x[k]));
    return r * sum;
}

/// Natural cubic spline through (t_k, y_k), t strictly increasing.
class CubicSpline {
public:
    CubicSpline() = default;
    CubicSpline(std::vector<double> t, std::vector<double> y) : t_(std::move(t)), y_(std::move(y)), m_(t_.size(), 0.0) {
        const std::size_t n = t_.size();
        if (n < 3) throw Error(ErrorKind::BadParameter, "spline needs at least 3 points");
        std::vector<double> a(n, 0.0), b(n, 1.0), c(n, 0.0), d(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double h0 = t_[i] - t_[i - 1], h1 = t_[i + 1] - t_[i];
            if (!(h0 > 0.0) || !(h1 > 0.0)) throw Error(ErrorKind::BadParameter, "spline knots must increase");
            a[i] = h0 / 6.0;
            b[i] = (h0 + h1) / 3.0;
            c[i] = h1 / 6.0;
            d[i] = (y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0;
        }
        for (std::size_t i = 1; i < n; ++i) {  // Thomas algorithm
            const double w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        m_[n - 1] = d[n - 1] / b[n - 1];
        for (std::size_t i = n - 1; i-- > 0;) m_[i] = (d[i] - c[i] * m_[i + 1]) / b[i];
    }

    /// Value, first and second derivative at t (clamped to the knot range for the segment choice).
    std::array<double, 3> eval(double t) const {
        std::size_t k = std::upper_bound(t_.begin(), t_.end(), t) - t_.begin();
        k = std::clamp<std::size_t>(k, 1, t_.size() - 1) - 1;
        const double h = t_[k + 1] - t_[k];
        const double A = (t_[k + 1] - t) / h, B = (t - t_[k]) / h;
        const double val = A * y_[k] + B * y_[k + 1] + ((A * A * A - A) * m_[k] + (B * B * B - B) * m_[k + 1]) * h * h / 6.0;
        const double d1 = (y_[k + 1] - y_[k]) / h + ((1.0 - 3.0 * A * A) * m_[k] + (3.0 * B * B - 1.0) * m_[k + 1]) * h / 6.0;
        const double d2 = A * m_[k] + B * m_[k + 1];
        return {val, d1, d2};
    }
    const std::vector<double>& knots() const noexcept { return t_; }

private:
    std::vector<double> t_, y_, m_;
};

}  // namespace detail

/// Planar curve used to build geodesic parallel coordinates c(v) + u n(v).
/// The geometry is described per parameter value v: unit tangent T, signed
/// curvature kappa (with respect to arc length) and parametrization speed
/// sigma = |c'(v)|. Unit-speed curves have sigma = 1.
struct BaseCurve {
    std::string name;
    Regularity regularity = Regularity::Analytic;
    double v_min = -std::numeric_limits<double>::infinity();
    double v_max = std::numeric_limits<double>::infinity();
    std::function<Vec2(double)> position;
    std::function<Vec2(double)> tangent;
    std::function<double(double)> curvature;
    std::function<double(double)> speed = [](double) { return 1.0; };

    /// n = T rotated by +90 degrees; kappa > 0 for counterclockwise circles.
    Vec2 normal(double v) const { return rotate90(tangent(v)); }

    static BaseCurve line(double sigma = 1.0) {
        BaseCurve c;
        c.name = "line";
        c.position = [sigma](double v) { return Vec2{sigma * v, 0.0}; };
        c.tangent = [](double) { return Vec2{1.0, 0.0}; };
        c.curvature = [](double) { return 0.0; };
        c.speed = [sigma](double) { return sigma; };
        return c;
    }

    /// Counterclockwise circle of radius R through (R, 0); the normal points inward.
    static BaseCurve circle(double R, double sigma = 1.0) {
        if (!(R > 0.0)) throw Error(ErrorKind::BadParameter, "circle radius must be positive");
        BaseCurve c;
        c.name = "circle:" + format_number(R);
        c.position = [R, sigma](double v) { return Vec2{R * std::cos(sigma * v / R), R * std::sin(sigma * v / R)}; };
        c.tangent = [R, sigma](double v) { return Vec2{-std::sin(sigma * v / R), std::cos(sigma * v / R)}; };
        c.curvature = [R](double) { return 1.0 / R; };
        c.speed = [sigma](double) { return sigma; };
        return c;
    }

    /// Straight segment along the x axis for v < 0 joined with common tangent to a
    /// counterclockwise arc of radius R for v >= 0: C^1 but curvature jumps at v = 0.
    static BaseCurve kinked(double R, double sigma = 1.0) {
        if (!(R > 0.0)) throw Error(ErrorKind::BadParameter, "arc radius must be positive");
        BaseCurve c;
        c.name = "kinked:" + format_number(R);
        c.regularity = Regularity::C1Only;
        c.position = [R, sigma](double v) {
            const double s = sigma * v;
            if (s < 0.0) return Vec2{s, 0.0};
            return Vec2{R * std::sin(s / R), R * (1.0 - std::cos(s / R))};
        };
        c.tangent = [R, sigma](double v) {
            const double s = sigma * v;
            if (s < 0.0) return Vec2{1.0, 0.0};
            return Vec2{std::cos(s / R), std::sin(s / R)};
        };
        c.curvature = [R, sigma](double v) { return sigma * v < 0.0 ? 0.0 : 1.0 / R; };
        c.speed = [sigma](double) { return sigma; };
        return c;
    }

    /// Curve with speed a(v) and turning rate theta'(v) = -b(v), both polynomials
    /// in v (coefficients in increasing degree). Its parallel coordinates have
    /// sqrt(G0) = a(v) + b(v) u. Starts at the origin heading along +x.
    static BaseCurve from_speed_profile(std::vector<double> a, std::vector<double> b) {
        auto poly = [](const std::vector<double>& c, double v) {
            double r = 0.0;
            for (std::size_t k = c.size(); k-- > 0;) r = r * v + c[k];
            return r;
        };
        auto theta = [b, poly](double v) {
            std::vector<double> integral(b.size() + 1, 0.0);
            for (std::size_t k = 0; k < b.size(); ++k) integral[k + 1] = -b[k] / static_cast<double>(k + 1);
            return poly(integral, v);
        };
        BaseCurve c;
        c.name = "fitted";
        c.tangent = [theta](double v) { return Vec2{std::cos(theta(v)), std::sin(theta(v))}; };
        c.speed = [a, poly](double v) { return poly(a, v); };
        c.curvature = [a, b, poly](double v) {
            const double s = poly(a, v);
            return s > 0.0 ? -poly(b, v) / s : 0.0;
        };
        c.position = [a, theta, poly](double v) {
            auto integrand = [&](int comp) {
                return [&, comp](double t) {
                    const double s = poly(a, t), th = theta(t);
                    return s * (comp == 0 ? std::cos(th) : std::sin(th));
                };
            };
            constexpr int panels = 8;
            Vec2 p;
            for (int k = 0; k < panels; ++k) {
                const double t0 = v * k / panels, t1 = v * (k + 1) / panels;
                p.x += detail::gauss_legendre(integrand(0), t0, t1);
                p.y += detail::gauss_legendre(integrand(1), t0, t1);
            }
            return p;
        };
        return c;
    }

    /// Arc-length reparametrization of a regular parametric curve t -> c(t) on
    /// [t0, t1]. Arc length is measured from t_ref; the inverse s -> t is solved
    /// by Newton iteration to `tol`.
    static BaseCurve arc_length(std::function<std::array<Vec2, 3>(double)> c, double t0, double t1, double t_ref,
                                int panels = 256, double tol = 1e-10) {
        if (!(t1 > t0) || panels < 1) throw Error(ErrorKind::BadParameter, "bad parameter interval");
        auto speed_at = [c](double t) { return c(t)[1].norm(); };
        // Cumulative arc length at panel boundaries.
        auto table = std::make_shared<std::vector<double>>(panels + 1, 0.0);
        const double h = (t1 - t0) / panels;
        for (int k = 0; k < panels; ++k)
            (*table)[k + 1] = (*table)[k] + detail::gauss_legendre(speed_at, t0 + k * h, t0 + (k + 1) * h);
        auto arc = [=](double t) {
            const int k = std::clamp(static_cast<int>(std::floor((t - t0) / h)), 0, panels - 1);
            return (*table)[k] + detail::gauss_legendre(speed_at, t0 + k * h, t);
        };
        const double s_ref = arc(t_ref);
        auto t_of = [=](double s) {
            const double target = s + s_ref;
            // Bracket by the table, then Newton.
            auto it = std::lower_bound(table->begin(), table->end(), target);
            int k = std::clamp(static_cast<int>(it - table->begin()) - 1, 0, panels - 1);
            double t = t0 + (k + 0.5) * h;
            for (int iter = 0; iter < 50; ++iter) {
                const double r = arc(t) - target;
                if (std::abs(r) < tol) break;
                t = std::clamp(t - r / speed_at(t), t0, t1);
            }
            return t;
        };
        BaseCurve out;
        out.name = "arc_length";
        out.regularity = Regularity::C1Only;
        out.v_min = -s_ref;
        out.v_max = table->back() - s_ref;
        out.position = [c, t_of](double s) { return c(t_of(s))[0]; };
        out.tangent = [c, t_of](double s) {
            const Vec2 d = c(t_of(s))[1];
            return (1.0 / d.norm()) * d;
        };
        out.curvature = [c, t_of](double s) {
            const auto e = c(t_of(s));
            const double n = e[1].norm();
            return cross(e[1], e[2]) / (n * n * n);
        };
        return out;
    }

    /// Polyline from `v,x,y` rows, interpolated by natural cubic splines and
    /// reparametrized by arc length measured from v = 0 (or the first row).
    static BaseCurve from_polyline_csv(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorKind::IoFailure, "cannot open base curve file " + path);
        std::string line;
        std::vector<double> vs, xs, ys;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            if (lineno == 1 && line.rfind("v,x,y", 0) == 0) continue;
            std::istringstream ss(line);
            double v, x, y;
            char c1, c2;
            if (!(ss >> v >> c1 >> x >> c2 >> y) || c1 != ',' || c2 != ',')
                throw Error(ErrorKind::ParseError, path + ":" + std::to_string(lineno) + ": expected v,x,y");
            vs.push_back(v), xs.push_back(x), ys.push_back(y);
        }
        if (vs.size() < 4) throw Error(ErrorKind::ParseError, path + ": need at least 4 polyline points");
        auto sx = std::make_shared<detail::CubicSpline>(vs, xs);
        auto sy = std::make_shared<detail::CubicSpline>(vs, ys);
        const double t_ref = (vs.front() <= 0.0 && vs.back() >= 0.0) ? 0.0 : vs.front();
        auto curve = arc_length(
            [sx, sy](double t) {
                const auto a = sx->eval(t), b = sy->eval(t);
                return std::array<Vec2, 3>{Vec2{a[0], b[0]}, Vec2{a[1], b[1]}, Vec2{a[2], b[2]}};
            },
            vs.front(), vs.back(), t_ref, static_cast<int>(vs.size()) * 4);
        curve.name = "file:" + path;
        return curve;
    }

    static std::string format_number(double x) {
        std::ostringstream ss;
        ss << x;
        return ss.str();
    }
};

/// Parses "line", "circle:R", "kinked:R", "file:<path>"; sigma scales the parametrization speed.
inline BaseCurve make_base_curve(const std::string& spec, double sigma = 1.0) {
    auto radius = [&](std::size_t prefix) {
        try {
            return std::stod(spec.substr(prefix));
        } catch (const std::exception&) {
            throw Error(ErrorKind::BadParameter, "bad radius in base curve '" + spec + "'");
        }
    };
    if (spec == "line") return BaseCurve::line(sigma);
    if (spec.rfind("circle:", 0) == 0) return BaseCurve::circle(radius(7), sigma);
    if (spec.rfind("kinked:", 0) == 0) return BaseCurve::kinked(radius(7), sigma);
    if (spec.rfind("file:", 0) == 0) return BaseCurve::from_polyline_csv(spec.substr(5));
    throw Error(ErrorKind::BadParameter, "unknown base curve '" + spec + "'");
}

/// Geodesic parallel coordinates (x, y)(u, v) = c(v) + u n(v) of the plane.
struct PlaneChart {
    Grid2D grid;
    ScalarField2D x, y, G0;
    BaseCurve base;

    Vec2 position(double u, double v) const { return base.position(v) + u * base.normal(v); }
    Vec2 d_u(double, double v) const { return base.normal(v); }
    /// X_v = sigma (1 - u kappa) T, using n' = -kappa sigma T.
    Vec2 d_v(double u, double v) const {
        return (base.speed(v) * (1.0 - u * base.curvature(v))) * base.tangent(v);
    }
    double G0_exact(double u, double v) const {
        const double s = base.speed(v) * (1.0 - u * base.curvature(v));
        return s * s;
    }
};

inline PlaneChart build_chart(const BaseCurve& base, const Grid2D& grid) {
    grid.check();
    if (grid.v0 < base.v_min - 1e-12 || grid.v_max() > base.v_max + 1e-12)
        throw Error(ErrorKind::BadParameter, "chart v-range exceeds the base curve parameter range");
    PlaneChart chart{grid, ScalarField2D(grid), ScalarField2D(grid), ScalarField2D(grid), base};
    for (int j = 0; j < grid.nv; ++j) {
        const double v = grid.v(j);
        const double kappa = base.curvature(v), sigma = base.speed(v);
        const Vec2 c = base.position(v), t = base.tangent(v), n = rotate90(t);
        for (int i = 0; i < grid.nu; ++i) {
            const double u = grid.u(i);
            if (!(1.0 - u * kappa > 0.0))
                throw Error(ErrorKind::FocalPoint, "1 - u*kappa <= 0: chart reaches a focal point");
            const Vec2 p = c + u * n;
            const Vec2 xv = (sigma * (1.0 - u * kappa)) * t;
            chart.x(i, j) = p.x;
            chart.y(i, j) = p.y;
            chart.G0(i, j) = dot(xv, xv);
        }
    }
    return chart;
}

struct S0Residuals {
    double r1 = 0.0;  ///< sup |x_u^2 + y_u^2 - 1|
    double r2 = 0.0;  ///< sup |x_u x_v + y_u y_v|
    double r3 = 0.0;  ///< sup |x_v^2 + y_v^2 - G0|
};

enum class Derivatives { Analytic, Numeric };

/// S0 residuals from finite differences of sampled x, y against a G0 field.
inline S0Residuals s0_residuals(const ScalarField2D& x, const ScalarField2D& y, const ScalarField2D& G0) {
    S0Residuals r;
    const auto& g = x.grid();
    for (int j = 0; j < g.nv; ++j)
        for (int i = 0; i < g.nu; ++i) {
            const double xu = x.d_u(i, j), yu = y.d_u(i, j), xv = x.d_v(i, j), yv = y.d_v(i, j);
            r.r1 = std::max(r.r1, std::abs(xu * xu + yu * yu - 1.0));
            r.r2 = std::max(r.r2, std::abs(xu * xv + yu * yv));
            r.r3 = std::max(r.r3, std::abs(xv * xv + yv * yv - G0(i, j)));
        }
    return r;
}

inline S0Residuals s0_residuals(const PlaneChart& chart, Derivatives mode = Derivatives::Analytic) {
    if (mode == Derivatives::Numeric) return s0_residuals(chart.x, chart.y, chart.G0);
    S0Residuals r;
    const auto& g = chart.grid;
    for (int j = 0; j < g.nv; ++j)
        for (int i = 0; i < g.nu; ++i) {
            const Vec2 xu = chart.d_u(g.u(i), g.v(j)), xv = chart.d_v(g.u(i), g.v(j));
            r.r1 = std::max(r.r1, std::abs(dot(xu, xu) - 1.0));
            r.r2 = std::max(r.r2, std::abs(dot(xu, xv)));
            r.r3 = std::max(r.r3, std::abs(dot(xv, xv) - chart.G0(i, j)));
        }
    return r;
}

/// x_u y_v - x_v y_u by finite differences; equals +-sqrt(G0) for a fold-free chart.
inline ScalarField2D chart_jacobian(const PlaneChart& chart) {
    const auto& g = chart.grid;
    ScalarField2D out(g);
    for (int j = 0; j < g.nv; ++j)
        for (int i = 0; i < g.nu; ++i)
            out(i, j) = chart.x.d_u(i, j) * chart.y.d_v(i, j) - chart.x.d_v(i, j) * chart.y.d_u(i, j);
    return out;
}

}  // namespace isoembed
