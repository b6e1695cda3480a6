#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "isoembed/embedding.hpp"
#include "isoembed/error.hpp"
#include "isoembed/grid.hpp"
#include "isoembed/metric.hpp"
#include "isoembed/reparam.hpp"

namespace isoembed {

/// Per-node |E - 1|, |F|, |G_induced - Gbar| of a composite surface.
struct IsometryResidual {
    ScalarField2D E_res, F_res, G_res;
    Summary E, F, G;
};

inline IsometryResidual isometry_residual(const EmbeddedSurface& composite, const GeodesicMetric2D& m,
                                          const Mask& nodes, Derivatives mode = Derivatives::Numeric) {
    const auto& g = composite.grid;
    const InducedMetric im = induced_metric(composite, mode);
    IsometryResidual r{ScalarField2D(g), ScalarField2D(g), ScalarField2D(g), {}, {}, {}};
    for (int j = 0; j < g.nv; ++j)
        for (int i = 0; i < g.nu; ++i) {
            r.E_res(i, j) = std::abs(im.E(i, j) - 1.0);
            r.F_res(i, j) = std::abs(im.F(i, j));
            r.G_res(i, j) = std::abs(im.G(i, j) - m.raw(g.u(i), g.v(j)));
        }
    r.E = summarize_abs(r.E_res, nodes);
    r.F = summarize_abs(r.F_res, nodes);
    r.G = summarize_abs(r.G_res, nodes);
    return r;
}

struct CurvatureMatch {
    ScalarField2D K_barred;    ///< K of Gbar on the (ubar, vbar) grid
    ScalarField2D K_unbarred;  ///< K of du^2 + G dv^2, evaluated at (f, g)(node)
    ScalarField2D difference;
    Mask mask;
    Summary summary;
};

/// Compares K of the given metric with K of the unbarred metric pulled back
/// through (f, g). The u-derivative at fixed v is (g_v d/dubar - g_u d/dvbar) / J.
inline CurvatureMatch curvature_match(const GeodesicMetric2D& m, const ScalarField2D& G_unbarred,
                                      const ParamChange& pc, const Mask& nodes) {
    const auto& g = pc.grid();
    if (g.nu - 2 < 3) throw Error(ErrorKind::GridTooSmall, "curvature needs at least 3 interior samples in u");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const MaskedField kb = gauss_curvature_geodesic(sample_metric(m, g));
    CurvatureMatch out{kb.field, ScalarField2D(g, nan), ScalarField2D(g, nan), Mask(g, false), {}};

    ScalarField2D root(g, nan);
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double G = G_unbarred.values()[k];
        if (G > 0.0) root.values()[k] = std::sqrt(G);
    }
    auto d_u = [&](const ScalarField2D& s) {
        ScalarField2D out_field(g, nan);
        for (int j = 0; j < g.nv; ++j)
            for (int i = 0; i < g.nu; ++i)
                out_field(i, j) = (pc.g_v(i, j) * s.d_u(i, j) - pc.g_u(i, j) * s.d_v(i, j)) / pc.J(i, j);
        return out_field;
    };
    const ScalarField2D s_u = d_u(root);
    const ScalarField2D s_uu = d_u(s_u);
    for (int j = 0; j < g.nv; ++j)
        for (int i = 0; i < g.nu; ++i) {
            const double ku = -s_uu(i, j) / root(i, j);
            out.K_unbarred(i, j) = ku;
            if (!nodes(i, j) || !kb.mask(i, j) || !std::isfinite(ku)) continue;
            out.difference(i, j) = std::abs(kb.field(i, j) - ku);
            out.mask.set(i, j, true);
        }
    out.summary = summarize_abs(out.difference, out.mask);
    return out;
}

/// dG = |G_cramer - (G0(f, g) + 1)| on the given nodes (NaN elsewhere).
inline ScalarField2D compatibility_residual(const ScalarField2D& G_cramer, const PlaneChart& chart,
                                            const ParamChange& pc, const Mask& nodes) {
    const auto& g = pc.grid();
    ScalarField2D out(g, std::numeric_limits<double>::quiet_NaN());
    for (int j = 0; j < g.nv; ++j)
        for (int i = 0; i < g.nu; ++i) {
            if (!nodes(i, j)) continue;
            const double u = pc.f(i, j), v = pc.g(i, j);
            if (!chart.grid.contains(u, v)) continue;
            out(i, j) = std::abs(G_cramer(i, j) - (chart.G0.sample(u, v) + 1.0));
        }
    return out;
}

/// A pass/fail check: value < limit (or value > limit for lower bounds).
struct Verdict {
    std::string name;
    double value = 0.0;
    double limit = 0.0;
    bool lower_bound = false;

    bool pass() const noexcept {
        if (!std::isfinite(value)) return false;
        return lower_bound ? value >= limit : value < limit;
    }
};

/// Columns of the per-node CSV, in output order.
struct NodeTable {
    Grid2D grid;
    Mask rows;  ///< nodes whose derived columns are written; others carry NA
    ScalarField2D f, g, J, E_res, F_res, G_res, aug_det, dG;
};

struct VerificationReport {
    nlohmann::json meta = nlohmann::json::object();
    nlohmann::json residuals = nlohmann::json::object();
    std::vector<Verdict> verdicts;
    nlohmann::json extras = nlohmann::json::object();
    std::size_t masked_count = 0;
    NodeTable nodes;

    void add_summary(const std::string& name, const Summary& s) {
        residuals[name] = {{"sup", s.sup}, {"mean", s.mean}, {"count", s.count}, {"masked", s.masked}};
    }
    void add_scalar(const std::string& name, double value) {
        if (std::isfinite(value))
            residuals[name] = {{"value", value}};
        else
            residuals[name] = "not-computed";
    }
    void add_verdict(std::string name, double value, double limit, bool lower_bound = false) {
        verdicts.push_back({std::move(name), value, limit, lower_bound});
    }
    bool all_pass() const noexcept {
        for (const auto& v : verdicts)
            if (!v.pass()) return false;
        return true;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["schema_version"] = "1";
        j["meta"] = meta;
        j["residuals"] = residuals;
        nlohmann::json v = nlohmann::json::object();
        for (const auto& x : verdicts) {
            v[x.name] = {{"value", std::isfinite(x.value) ? nlohmann::json(x.value) : nlohmann::json("not-computed")},
                         {"limit", x.limit},
                         {"relation", x.lower_bound ? ">=" : "<"},
                         {"pass", x.pass()}};
        }
        j["verdicts"] = v;
        j["masked_count"] = masked_count;
        if (!extras.empty()) j["diagnostics"] = extras;
        return j;
    }
};

inline void write_report_csv(const NodeTable& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path);
    out << "ubar,vbar,f,g,J,E_res,F_res,G_res,aug_det,dG\n";
    auto cell = [](double x) { return std::isfinite(x) ? detail::format_g17(x) : std::string("NA"); };
    const ScalarField2D* cols[] = {&t.f, &t.g, &t.J, &t.E_res, &t.F_res, &t.G_res, &t.aug_det, &t.dG};
    for (int j = 0; j < t.grid.nv; ++j)
        for (int i = 0; i < t.grid.nu; ++i) {
            out << detail::format_g17(t.grid.u(i)) << ',' << detail::format_g17(t.grid.v(j));
            const bool row = t.rows(i, j);
            for (const auto* c : cols) out << ',' << (row ? cell((*c)(i, j)) : std::string("NA"));
            out << '\n';
        }
    if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path);
}

/// Writes the JSON document and, when csv_path is non-empty, the per-node CSV.
inline void write_report(const VerificationReport& r, const std::string& json_path, const std::string& csv_path) {
    {
        std::ofstream out(json_path, std::ios::binary);
        if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + json_path);
        out << r.to_json().dump(2) << '\n';
        if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + json_path);
    }
    if (!csv_path.empty()) write_report_csv(r.nodes, csv_path);
}

}  // namespace isoembed
