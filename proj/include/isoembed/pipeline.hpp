#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "isoembed/embedding.hpp"
#include "isoembed/error.hpp"
#include "isoembed/initial_data.hpp"
#include "isoembed/ivp_solver.hpp"
#include "isoembed/metric.hpp"
#include "isoembed/plane_geodesics.hpp"
#include "isoembed/reparam.hpp"
#include "isoembed/system_s.hpp"
#include "isoembed/verify.hpp"

namespace isoembed {

struct Tolerances {
    double j_tol = 1e-8;             ///< |J| threshold for the certified region
    double rank_tol = 1e-6;          ///< relative singular-value cutoff for ranks of S
    double curvature = 1e-4;         ///< sup |K_numeric - K_exact|
    double jacobian_rel = 1e-4;      ///< initial-row J vs closed form, relative
    double aug_det = 1e-6;           ///< sup |augmented determinant|
    double rank_fraction = 0.99;     ///< share of certified nodes with ranks (2, 2)
    double pullback = 1e-4;          ///< rows of S with the Cramer (E, G)
    double e_dev = 1e-4;             ///< |E_cramer - 1|
    double g_closed_rel = 1e-6;      ///< |G_cramer - G_closed| / G_closed
    double s0_analytic = 1e-8;
    double s0_numeric = 1e-4;
    double lift = 1e-6;              ///< |G_lift - (G0 + 1)|
    double isometry = 1e-3;          ///< |Ebar - 1| and |Fbar| of the composite
    double c2_jump = 1e-2;           ///< f_uu jump flagged by the C^2 defect detector
};

struct RunConfig {
    std::string metric = "flat";
    double domain_u_center = 0.0, domain_v_center = 0.0;
    double domain_half_u = 0.5, domain_half_v = 0.5;

    std::string family = "linear_ramp";
    double epsilon = 0.1;
    double delta = 0.1;

    double u_min = -0.1, u_max = 0.1, v_min = -0.1, v_max = 0.1;
    int nu = 201, nv = 201;

    SolveOptions solver;

    std::string base_curve = "fitted";
    double base_speed = 1.0;
    int fit_degree = 2;
    double chart_margin = 0.1;

    Tolerances tol;

    std::string report_json = "report.json";
    std::string residual_csv = "residuals.csv";
    std::string mesh_out;  ///< prefix; "<prefix>_lifted.obj" and "<prefix>_composite.obj"

    /// Every recognized "section.key", mapped to its slot in set().
    static const std::map<std::string, int>& key_table() {
        static const std::map<std::string, int> table = {
            {"metric.name", 0}, {"metric.u_center", 1}, {"metric.v_center", 2}, {"metric.half_u", 3},
            {"metric.half_v", 4}, {"initial.family", 5}, {"initial.epsilon", 6}, {"initial.delta", 7},
            {"grid.u_min", 8}, {"grid.u_max", 9}, {"grid.v_min", 10}, {"grid.v_max", 11}, {"grid.nu", 12},
            {"grid.nv", 13}, {"grid.n", 14}, {"solver.residual_tol", 15}, {"solver.cfl", 16}, {"solver.guard", 17},
            {"chart.base_curve", 18}, {"chart.base_speed", 19}, {"chart.fit_degree", 20}, {"chart.margin", 21},
            {"output.report_json", 22}, {"output.residual_csv", 23}, {"output.mesh_out", 24},
            {"tolerances.j_tol", 30}, {"tolerances.rank_tol", 31}, {"tolerances.curvature", 32},
            {"tolerances.jacobian_rel", 33}, {"tolerances.aug_det", 34}, {"tolerances.rank_fraction", 35},
            {"tolerances.pullback", 36}, {"tolerances.e_dev", 37}, {"tolerances.g_closed_rel", 38},
            {"tolerances.s0_analytic", 39}, {"tolerances.s0_numeric", 40}, {"tolerances.lift", 41},
            {"tolerances.isometry", 42}, {"tolerances.c2_jump", 43}};
        return table;
    }

    /// Sets "section.key" from text. `where` prefixes diagnostics.
    void set(const std::string& key, const std::string& value, const std::string& where = "") {
        auto fail = [&](const std::string& msg) { throw Error(ErrorKind::ParseError, where + msg); };
        auto num = [&](double& out) {
            std::size_t used = 0;
            try {
                out = std::stod(value, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != value.size()) fail("'" + key + "' expects a number, got '" + value + "'");
        };
        auto integer = [&](int& out) {
            double d = 0.0;
            num(d);
            if (d != std::floor(d)) fail("'" + key + "' expects an integer");
            out = static_cast<int>(d);
        };
        const auto& known = key_table();
        const auto it = known.find(key);
        if (it == known.end()) fail("unknown key '" + key + "'");
        switch (it->second) {
            case 0: metric = value; break;
            case 1: num(domain_u_center); break;
            case 2: num(domain_v_center); break;
            case 3: num(domain_half_u); break;
            case 4: num(domain_half_v); break;
            case 5: family = value; break;
            case 6: num(epsilon); break;
            case 7: num(delta); break;
            case 8: num(u_min); break;
            case 9: num(u_max); break;
            case 10: num(v_min); break;
            case 11: num(v_max); break;
            case 12: integer(nu); break;
            case 13: integer(nv); break;
            case 14: integer(nu), nv = nu; break;
            case 15: num(solver.residual_tol); break;
            case 16: num(solver.cfl); break;
            case 17: num(solver.guard); break;
            case 18: base_curve = value; break;
            case 19: num(base_speed); break;
            case 20: integer(fit_degree); break;
            case 21: num(chart_margin); break;
            case 22: report_json = value; break;
            case 23: residual_csv = value; break;
            case 24: mesh_out = value; break;
            case 30: num(tol.j_tol); break;
            case 31: num(tol.rank_tol); break;
            case 32: num(tol.curvature); break;
            case 33: num(tol.jacobian_rel); break;
            case 34: num(tol.aug_det); break;
            case 35: num(tol.rank_fraction); break;
            case 36: num(tol.pullback); break;
            case 37: num(tol.e_dev); break;
            case 38: num(tol.g_closed_rel); break;
            case 39: num(tol.s0_analytic); break;
            case 40: num(tol.s0_numeric); break;
            case 41: num(tol.lift); break;
            case 42: num(tol.isometry); break;
            case 43: num(tol.c2_jump); break;
        }
    }

    void validate() const {
        if (!(epsilon > 0.0 && epsilon < 1.0)) throw Error(ErrorKind::BadParameter, "epsilon out of (0,1)");
        if (!(delta > 0.0)) throw Error(ErrorKind::BadParameter, "delta must be positive");
        if (nu < 3 || nv < 3) throw Error(ErrorKind::GridTooSmall, "grid counts must be >= 3");
        if (!(domain_half_u > 0.0 && domain_half_v > 0.0))
            throw Error(ErrorKind::BadParameter, "metric domain half-widths must be positive");
        if (fit_degree < 0 || fit_degree > 6) throw Error(ErrorKind::BadParameter, "fit_degree must be in [0, 6]");
        parse_family(family);
    }

    Grid2D grid() const { return Grid2D::span(u_min, u_max, v_min, v_max, nu, nv); }
};

/// Flat key-value text with [section] headers; '#' and ';' start comments.
inline RunConfig parse_config(std::istream& in, const std::string& source = "config") {
    RunConfig cfg;
    std::string line, section;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return std::string();
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = source + ":" + std::to_string(lineno) + ": ";
        const auto hash = line.find_first_of("#;");
        line = trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw Error(ErrorKind::ParseError, where + "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error(ErrorKind::ParseError, where + "expected key = value");
        if (section.empty()) throw Error(ErrorKind::ParseError, where + "key outside of a [section]");
        cfg.set(section + "." + trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open config " + path);
    return parse_config(in, path);
}

/// The built-in scenario: cos^2 metric with C^1-but-not-C^2 initial data.
inline RunConfig example_cos2_config() {
    RunConfig cfg;
    cfg.metric = "cos2";
    cfg.family = "c1_not_c2";
    cfg.report_json = "example_cos2_report.json";
    cfg.residual_csv = "example_cos2_residuals.csv";
    return cfg;
}

struct PipelineResult {
    VerificationReport report;
    SolveReport f, g;
    ParamChange pc;
    SystemSField system;
    PlaneChart chart;
    EmbeddedSurface lifted, composite;
    C2DefectReport defects;
};

namespace detail {

inline nlohmann::json defect_json(const C2DefectReport& d, const Grid2D& grid, int initial_row) {
    nlohmann::json j;
    j["tol"] = d.tol;
    j["flagged_nodes"] = d.nodes.size();
    j["rows_flagged"] = d.rows_flagged;
    const auto on_initial = d.locus_on_row(grid, initial_row);
    j["initial_row_locus"] = on_initial;
    bool through_origin = false;
    for (double u : on_initial) through_origin = through_origin || std::abs(u) <= 2.0 * grid.du + 1e-15;
    j["locus_through_ubar0"] = through_origin;
    nlohmann::json rows = nlohmann::json::array();
    const int stride = std::max(1, grid.nv / 20);
    for (int r = 0; r < grid.nv; r += stride) {
        const auto locus = d.locus_on_row(grid, r);
        if (locus.empty()) continue;
        double peak_u = 0.0, peak = -1.0;
        for (const auto& n : d.nodes)
            if (n.j == r && n.jump > peak) peak = n.jump, peak_u = grid.u(n.i);
        rows.push_back({{"vbar", grid.v(r)},
                        {"ubar_min", locus.front()},
                        {"ubar_max", locus.back()},
                        {"ubar_peak", peak_u},
                        {"peak_jump", peak}});
    }
    j["locus"] = rows;
    return j;
}

}  // namespace detail

/// solve -> reparam -> system S -> chart -> lift -> compose -> verify.
inline PipelineResult run_pipeline(const RunConfig& cfg) {
    cfg.validate();
    const Grid2D grid = cfg.grid();
    const GeodesicMetric2D metric = make_metric(
        cfg.metric, Rect::centered(cfg.domain_u_center, cfg.domain_v_center, cfg.domain_half_u, cfg.domain_half_v));
    const InitialData init = make_initial(parse_family(cfg.family), cfg.epsilon, cfg.delta);
    const Tolerances& tol = cfg.tol;

    PipelineResult out;
    VerificationReport& rep = out.report;
    rep.meta = {{"metric", metric.name()},
                {"family", cfg.family},
                {"epsilon", cfg.epsilon},
                {"delta", cfg.delta},
                {"grid", {{"u_min", cfg.u_min}, {"u_max", cfg.u_max}, {"v_min", cfg.v_min}, {"v_max", cfg.v_max},
                          {"nu", cfg.nu}, {"nv", cfg.nv}}},
                {"base_curve", cfg.base_curve},
                {"solver", {{"residual_tol", cfg.solver.residual_tol}, {"cfl", cfg.solver.cfl},
                            {"guard", cfg.solver.guard}}}};

    const ValidationReport validation = validate_metric(metric, grid);
    rep.add_verdict("metric_violations", static_cast<double>(validation.violations.size()), 1.0);

    if (metric.has_analytic_curvature()) {
        const MaskedField k_num = gauss_curvature_geodesic(sample_metric(metric, grid));
        const MaskedField k_exact = gauss_curvature_geodesic(metric, grid);
        ScalarField2D diff(grid);
        for (std::size_t k = 0; k < grid.size(); ++k)
            diff.values()[k] = k_num.field.values()[k] - k_exact.field.values()[k];
        const Summary s = summarize_abs(diff, k_num.mask);
        rep.add_summary("curvature_stencil_vs_exact", s);
        rep.add_verdict("curvature_stencil", s.sup, tol.curvature);
    }

    out.f = solve_f(metric, init, grid, cfg.solver);
    out.g = solve_g(metric, out.f, init, grid, cfg.solver);
    rep.add_scalar("pde_residual_f", out.f.max_residual);
    rep.add_scalar("pde_residual_g", out.g.max_residual);
    rep.add_verdict("pde_residual_f", out.f.max_residual, cfg.solver.residual_tol);
    rep.add_verdict("pde_residual_g", out.g.max_residual, cfg.solver.residual_tol);
    rep.extras["solver"] = {{"steps_f", out.f.steps}, {"valid_nodes", out.g.valid.count()},
                            {"guard_masked", out.f.guard_masked}};

    out.pc = make_param_change(out.f, out.g, {metric.domain().u_center(), 0.0}, tol.j_tol);
    const ParamChange& pc = out.pc;
    {
        const int j0 = out.f.initial_row;
        double worst = 0.0;
        for (int i = 0; i < grid.nu; ++i) {
            if (!pc.certified(i, j0)) continue;
            const double u = grid.u(i);
            const double closed = jacobian_initial_closed_form(init.h_prime(u), init.k_prime(u), metric(u, 0.0));
            worst = std::max(worst, std::abs(pc.J(i, j0) - closed) / std::abs(closed));
        }
        rep.add_scalar("jacobian_initial_row_rel", worst);
        rep.add_verdict("jacobian_initial_row", worst, tol.jacobian_rel);
        rep.add_verdict("jacobian_orientation", pc.orientation, 1.0, true);
        rep.extras["certificate"] = {{"certified_nodes", pc.certified.count()},
                                     {"orientation", pc.orientation},
                                     {"seed", {grid.u(pc.seed_i), grid.v(pc.seed_j)}}};
    }

    out.system = solve_system_s(pc, metric, tol.rank_tol);
    const SystemSField& S = out.system;
    {
        const std::size_t certified = pc.certified.count();
        const double fraction = certified ? static_cast<double>(S.full_rank_nodes) / certified : 0.0;
        rep.add_scalar("rank_full_fraction", fraction);
        rep.add_verdict("rank_full_fraction", fraction, tol.rank_fraction, true);
        const Summary det = summarize_abs(S.aug_det, S.solved);
        rep.add_summary("augmented_det", det);
        rep.add_verdict("augmented_det", det.sup, tol.aug_det);
        const Summary r1 = summarize_abs(S.row1, S.solved), r2 = summarize_abs(S.row2, S.solved),
                      r3 = summarize_abs(S.row3, S.solved);
        rep.add_summary("pullback_row1", r1);
        rep.add_summary("pullback_row2", r2);
        rep.add_summary("pullback_row3", r3);
        rep.add_verdict("pullback_rows", std::max({r1.sup, r2.sup, r3.sup}), tol.pullback);
        ScalarField2D e_dev(grid, NAN), g_rel(grid, NAN);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            e_dev.values()[k] = S.E.values()[k] - 1.0;
            g_rel.values()[k] = (S.G.values()[k] - S.G_closed_form.values()[k]) / S.G_closed_form.values()[k];
        }
        const Summary e = summarize_abs(e_dev, S.solved), gr = summarize_abs(g_rel, S.solved);
        rep.add_summary("E_cramer_minus_1", e);
        rep.add_summary("G_cramer_vs_closed_rel", gr);
        rep.add_verdict("E_cramer", e.sup, tol.e_dev);
        rep.add_verdict("G_cramer_vs_closed", gr.sup, tol.g_closed_rel);
        rep.extras["system_s"] = {{"solved_nodes", S.solved.count()}, {"nonpositive_G", S.nonpositive_G}};
    }

    const BaseCurve base = cfg.base_curve == "fitted" ? fit_base_curve(pc, S.G, S.solved, cfg.fit_degree)
                                                      : make_base_curve(cfg.base_curve, cfg.base_speed);
    out.chart = build_chart(base, fit_chart_grid(pc, cfg.nu, cfg.nv, cfg.chart_margin));
    const PlaneChart& chart = out.chart;
    {
        const S0Residuals a = s0_residuals(chart, Derivatives::Analytic);
        const S0Residuals n = s0_residuals(chart, Derivatives::Numeric);
        rep.residuals["s0_analytic"] = {{"r1", a.r1}, {"r2", a.r2}, {"r3", a.r3}};
        rep.residuals["s0_numeric"] = {{"r1", n.r1}, {"r2", n.r2}, {"r3", n.r3}};
        rep.add_verdict("s0_analytic", std::max({a.r1, a.r2, a.r3}), tol.s0_analytic);
        rep.add_verdict("s0_numeric", std::max({n.r1, n.r2, n.r3}), tol.s0_numeric);
    }

    out.lifted = lift(chart);
    {
        const InducedMetric im = induced_metric(out.lifted, Derivatives::Analytic);
        const Grid2D& cg = chart.grid;
        ScalarField2D lift_res(cg), e_res(cg), f_res(cg);
        double min_det = INFINITY;
        for (std::size_t k = 0; k < cg.size(); ++k) {
            lift_res.values()[k] = im.G.values()[k] - (chart.G0.values()[k] + 1.0);
            e_res.values()[k] = im.E.values()[k] - 1.0;
            f_res.values()[k] = im.F.values()[k];
            min_det = std::min(min_det, im.E.values()[k] * im.G.values()[k] - im.F.values()[k] * im.F.values()[k]);
        }
        const Mask all(cg, true);
        const double lift_sup = std::max({summarize_abs(lift_res, all).sup, summarize_abs(e_res, all).sup,
                                          summarize_abs(f_res, all).sup});
        rep.add_scalar("lift_identity", lift_sup);
        rep.add_verdict("lift_identity", lift_sup, tol.lift);
        rep.add_scalar("lift_min_EG_minus_F2", min_det);
        rep.add_verdict("lift_regularity", min_det, 1.0 - 1e-12, true);
    }

    out.composite = compose(out.lifted, pc);
    const IsometryResidual iso = isometry_residual(out.composite, metric, S.solved);
    rep.add_summary("isometry_E", iso.E);
    rep.add_summary("isometry_F", iso.F);
    rep.add_summary("isometry_G", iso.G);
    rep.add_verdict("isometry_E", iso.E.sup, tol.isometry);
    rep.add_verdict("isometry_F", iso.F.sup, tol.isometry);

    const ScalarField2D dG = compatibility_residual(S.G, chart, pc, S.solved);
    rep.add_summary("compatibility_dG", summarize_abs(dG, S.solved));

    const CurvatureMatch km = curvature_match(metric, S.G, pc, S.solved);
    rep.add_summary("curvature_match", km.summary);

    out.defects = detect_c2_defects(out.f.field, out.f.valid, tol.c2_jump);
    rep.extras["c2_defects"] = detail::defect_json(out.defects, grid, out.f.initial_row);

    rep.masked_count = grid.size() - S.solved.count();
    rep.nodes = NodeTable{grid, S.solved, pc.f, pc.g, pc.J, iso.E_res, iso.F_res, iso.G_res, S.aug_det, dG};
    return out;
}

/// Runs the pipeline and writes report, CSV and meshes. Returns 0 when every
/// verdict passes, 2 otherwise.
inline int run_and_write(const RunConfig& cfg, PipelineResult* keep = nullptr) {
    PipelineResult r = run_pipeline(cfg);
    write_report(r.report, cfg.report_json, cfg.residual_csv);
    if (!cfg.mesh_out.empty()) {
        write_obj(r.lifted, cfg.mesh_out + "_lifted.obj");
        write_obj(r.composite, cfg.mesh_out + "_composite.obj");
    }
    const int code = r.report.all_pass() ? 0 : 2;
    if (keep) *keep = std::move(r);
    return code;
}

/// Re-verifies an external surface: OBJ vertices on the grid given by the
/// `ubar,vbar,...` rows of a fields CSV (rows whose `f` column is NA are masked).
inline VerificationReport verify_surface(const std::string& mesh_path, const std::string& metric_name,
                                         const std::string& fields_path, double isometry_tol = 1e-3) {
    std::ifstream in(fields_path);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + fields_path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("ubar,vbar", 0) != 0)
        throw Error(ErrorKind::ParseError, fields_path + ":1: expected header starting with ubar,vbar");
    struct Row {
        double u, v;
        bool masked;
    };
    std::vector<Row> rows;
    std::map<double, int> us, vs;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() < 2)
            throw Error(ErrorKind::ParseError, fields_path + ":" + std::to_string(lineno) + ": too few columns");
        Row r{};
        try {
            r.u = std::stod(cells[0]);
            r.v = std::stod(cells[1]);
        } catch (const std::exception&) {
            throw Error(ErrorKind::ParseError, fields_path + ":" + std::to_string(lineno) + ": bad ubar/vbar");
        }
        r.masked = cells.size() > 2 && cells[2] == "NA";
        rows.push_back(r);
        us[r.u] = 0;
        vs[r.v] = 0;
    }
    const int nu = static_cast<int>(us.size()), nv = static_cast<int>(vs.size());
    if (nu < 3 || nv < 3 || rows.size() != us.size() * vs.size())
        throw Error(ErrorKind::ShapeMismatch, fields_path + ": rows do not form a full grid");
    const Grid2D grid = Grid2D::span(us.begin()->first, us.rbegin()->first, vs.begin()->first, vs.rbegin()->first, nu, nv);
    const std::vector<Vec3> vertices = read_obj_vertices(mesh_path);
    if (vertices.size() != grid.size())
        throw Error(ErrorKind::ShapeMismatch, "mesh has " + std::to_string(vertices.size()) + " vertices, fields grid has " +
                                                  std::to_string(grid.size()));
    // Rows are written v-major, u fastest, matching the vertex order.
    Mask mask(grid, false);
    for (std::size_t k = 0; k < rows.size(); ++k) mask.bits[k] = rows[k].masked ? 0 : 1;

    EmbeddedSurface surface{grid, vertices, Provenance::External, {}};
    const GeodesicMetric2D metric = make_metric(metric_name, Rect{grid.u0, grid.u_max(), grid.v0, grid.v_max()});
    const IsometryResidual iso = isometry_residual(surface, metric, mask);

    VerificationReport rep;
    rep.meta = {{"command", "verify"}, {"mesh", mesh_path}, {"metric", metric_name}, {"fields", fields_path},
                {"grid", {{"nu", nu}, {"nv", nv}}}};
    rep.add_summary("isometry_E", iso.E);
    rep.add_summary("isometry_F", iso.F);
    rep.add_summary("isometry_G", iso.G);
    rep.add_verdict("isometry_E", iso.E.sup, isometry_tol);
    rep.add_verdict("isometry_F", iso.F.sup, isometry_tol);
    // Location of the worst residual, to localize tampering.
    double worst = -1.0;
    int wi = 0, wj = 0;
    for (int j = 0; j < nv; ++j)
        for (int i = 0; i < nu; ++i) {
            if (!mask(i, j)) continue;
            const double r = std::max({iso.E_res(i, j), iso.F_res(i, j), iso.G_res(i, j)});
            if (std::isfinite(r) && r > worst) worst = r, wi = i, wj = j;
        }
    rep.extras["worst_node"] = {{"ubar", grid.u(wi)}, {"vbar", grid.v(wj)}, {"residual", worst}};
    rep.masked_count = grid.size() - mask.count();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rep.nodes = NodeTable{grid,          mask,      ScalarField2D(grid, nan), ScalarField2D(grid, nan),
                          ScalarField2D(grid, nan), iso.E_res, iso.F_res, iso.G_res,
                          ScalarField2D(grid, nan), ScalarField2D(grid, nan)};
    return rep;
}

}  // namespace isoembed
