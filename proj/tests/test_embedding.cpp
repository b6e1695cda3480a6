#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "isoembed/embedding.hpp"
#include "isoembed/ivp_solver.hpp"
#include "isoembed/system_s.hpp"

using namespace isoembed;

namespace {

const Grid2D kBox = Grid2D::span(-0.1, 0.1, -0.1, 0.1, 201, 201);

ParamChange identity_change(const Grid2D& g) {
    return make_param_change(ScalarField2D::from_function(g, [](double u, double) { return u; }),
                             ScalarField2D::from_function(g, [](double, double v) { return v; }), Mask(g, true),
                             {0.0, 0.0});
}

ParamChange solved(const GeodesicMetric2D& m, InitialFamily fam) {
    const auto init = make_initial(fam, 0.1, 0.1);
    const SolveReport f = solve_f(m, init, kBox);
    const SolveReport g = solve_g(m, f, init, kBox);
    return make_param_change(f, g, {0.0, 0.0});
}

double sup_dev(const ScalarField2D& a, double target, const Mask* mask = nullptr) {
    double s = 0.0;
    const auto& g = a.grid();
    for (int j = 0; j < g.nv; ++j)
        for (int i = 0; i < g.nu; ++i)
            if (!mask || (*mask)(i, j)) s = std::max(s, std::abs(a(i, j) - target));
    return s;
}

}  // namespace

TEST(Lift, TiltedPlane) {
    const EmbeddedSurface s = lift(build_chart(BaseCurve::line(), kBox));
    for (int j = 0; j < kBox.nv; j += 25)
        for (int i = 0; i < kBox.nu; i += 25) {
            const Vec3 p = s(i, j);
            EXPECT_DOUBLE_EQ(p.x, kBox.v(j));
            EXPECT_DOUBLE_EQ(p.y, kBox.u(i));
            EXPECT_DOUBLE_EQ(p.z, kBox.v(j));
        }
    for (auto mode : {Derivatives::Analytic, Derivatives::Numeric}) {
        const InducedMetric m = induced_metric(s, mode);
        EXPECT_LT(sup_dev(m.E, 1.0), 1e-12);
        EXPECT_LT(sup_dev(m.F, 0.0), 1e-12);
        EXPECT_LT(sup_dev(m.G, 2.0), 1e-12);
    }
}

TEST(Lift, CircleChartAtUPointOne) {
    const PlaneChart ch = build_chart(BaseCurve::circle(2.0), kBox);
    const InducedMetric m = induced_metric(lift(ch), Derivatives::Analytic);
    EXPECT_NEAR(m.G(kBox.nearest_col(0.1), 50), 1.9025, 1e-14);
}

TEST(Lift, ThirdCoordinateIsV) {
    for (const BaseCurve& c : {BaseCurve::circle(2.0), BaseCurve::kinked(1.0), BaseCurve::line(0.5)}) {
        const EmbeddedSurface s = lift(build_chart(c, kBox));
        for (int j = 0; j < kBox.nv; ++j)
            for (int i = 0; i < kBox.nu; ++i) ASSERT_EQ(s(i, j).z, kBox.v(j));
    }
}

TEST(Lift, IdentityGEqualsG0PlusOne) {
    for (const BaseCurve& c : {BaseCurve::circle(2.0), BaseCurve::from_speed_profile({1.0, 0.2}, {0.5})}) {
        const PlaneChart ch = build_chart(c, kBox);
        const EmbeddedSurface s = lift(ch);
        const InducedMetric a = induced_metric(s, Derivatives::Analytic), n = induced_metric(s, Derivatives::Numeric);
        double ea = 0, en = 0;
        for (std::size_t k = 0; k < kBox.size(); ++k) {
            ea = std::max(ea, std::abs(a.G.values()[k] - ch.G0.values()[k] - 1.0));
            en = std::max(en, std::abs(n.G.values()[k] - ch.G0.values()[k] - 1.0));
        }
        EXPECT_LT(ea, 1e-6);
        EXPECT_LT(en, 1e-4);
        EXPECT_LT(sup_dev(a.E, 1.0), 1e-6);
        EXPECT_LT(sup_dev(a.F, 0.0), 1e-6);
    }
}

TEST(Regularity, LiftedSurfacesHaveDetAtLeastOne) {
    for (const BaseCurve& c : {BaseCurve::line(), BaseCurve::circle(2.0), BaseCurve::line(0.0)}) {
        const InducedMetric m = induced_metric(lift(build_chart(c, kBox)), Derivatives::Analytic);
        for (std::size_t k = 0; k < kBox.size(); ++k)
            ASSERT_GE(m.E.values()[k] * m.G.values()[k] - m.F.values()[k] * m.F.values()[k], 1.0 - 1e-12);
        EXPECT_EQ(regularity_check(m.E, m.F, m.G).count(), kBox.size());
    }
}

TEST(Regularity, TiltedPlaneAndDegenerateField) {
    const InducedMetric m = induced_metric(lift(build_chart(BaseCurve::line(), kBox)), Derivatives::Analytic);
    EXPECT_EQ(regularity_check(m.E, m.F, m.G, 2.0 - 1e-12).count(), kBox.size());
    const ScalarField2D zero(kBox, 0.0);
    EXPECT_EQ(regularity_check(zero, zero, zero).count(), 0u);
}

TEST(Compose, IdentityReproducesSurfaceExactly) {
    const Grid2D g = Grid2D::span(-0.1, 0.1, -0.1, 0.1, 41, 41);
    const EmbeddedSurface s = lift(build_chart(BaseCurve::circle(2.0), g));
    const EmbeddedSurface c = compose(s, identity_change(g));
    for (std::size_t k = 0; k < g.size(); ++k) {
        ASSERT_EQ(c.position[k].x, s.position[k].x);
        ASSERT_EQ(c.position[k].y, s.position[k].y);
        ASSERT_EQ(c.position[k].z, s.position[k].z);
    }
}

TEST(Compose, IdentityOnFlatGivesCanonicalMetric) {
    // Speed-zero line: the chart collapses to x = 0, y = u and the lift is (0, u, v).
    const Grid2D g = Grid2D::span(-0.1, 0.1, -0.1, 0.1, 41, 41);
    const EmbeddedSurface c = compose(lift(build_chart(BaseCurve::line(0.0), g)), identity_change(g));
    const InducedMetric m = induced_metric(c);
    EXPECT_LT(sup_dev(m.E, 1.0), 1e-10);
    EXPECT_LT(sup_dev(m.F, 0.0), 1e-10);
    EXPECT_LT(sup_dev(m.G, 1.0), 1e-10);
}

TEST(Compose, FlatRampCoversCertifiedRegion) {
    const ParamChange pc = solved(GeodesicMetric2D::flat(), InitialFamily::LinearRamp);
    const EmbeddedSurface s = lift(build_chart(BaseCurve::line(), fit_chart_grid(pc, 101, 101)));
    const EmbeddedSurface c = compose(s, pc);
    for (int j = 0; j < kBox.nv; ++j)
        for (int i = 0; i < kBox.nu; ++i)
            if (pc.certified(i, j)) {
                ASSERT_TRUE(c(i, j).finite());
            }
}

TEST(Compose, ImageOutsideChartRejected) {
    const ParamChange pc = solved(GeodesicMetric2D::flat(), InitialFamily::LinearRamp);
    const EmbeddedSurface s = lift(build_chart(BaseCurve::line(), Grid2D::span(-0.001, 0.001, -0.001, 0.001, 5, 5)));
    try {
        compose(s, pc);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ImageOutsideChart);
    }
}

TEST(FitChartGrid, CoversImageWithMargin) {
    const ParamChange pc = solved(GeodesicMetric2D::cos2(), InitialFamily::LinearRamp);
    const Grid2D g = fit_chart_grid(pc, 51, 61, 0.1);
    EXPECT_EQ(g.nu, 51);
    EXPECT_EQ(g.nv, 61);
    for (int j = 0; j < kBox.nv; ++j)
        for (int i = 0; i < kBox.nu; ++i)
            if (pc.certified(i, j)) {
                ASSERT_TRUE(g.contains(pc.f(i, j), pc.g(i, j), 0.0));
            }
}

TEST(FitBaseCurve, RecoversSpeedProfile) {
    // Target G = (a + b u)^2 + 1 with a, b linear in v is reproduced exactly.
    const ParamChange pc = solved(GeodesicMetric2D::flat(), InitialFamily::LinearRamp);
    ScalarField2D target(kBox, NAN);
    for (int j = 0; j < kBox.nv; ++j)
        for (int i = 0; i < kBox.nu; ++i) {
            const double u = pc.f(i, j), v = pc.g(i, j), r = (3.0 + v) + (0.5 - 2.0 * v) * u;
            target(i, j) = r * r + 1.0;
        }
    const BaseCurve c = fit_base_curve(pc, target, pc.certified, 1);
    for (double v : {-0.01, 0.0, 0.01}) {
        EXPECT_NEAR(c.speed(v), 3.0 + v, 1e-9);
        EXPECT_NEAR(-c.curvature(v) * c.speed(v), 0.5 - 2.0 * v, 1e-8);
    }
}

TEST(FitBaseCurve, TooFewNodesRejected) {
    const ParamChange pc = solved(GeodesicMetric2D::flat(), InitialFamily::LinearRamp);
    EXPECT_THROW(fit_base_curve(pc, ScalarField2D(kBox, 2.0), Mask(kBox, false)), Error);
}

TEST(FlatPipeline, CompositeReproducesFlatMetric) {
    const auto m = GeodesicMetric2D::flat();
    const ParamChange pc = solved(m, InitialFamily::LinearRamp);
    const SystemSField S = solve_system_s(pc, m, 1e-6);
    const BaseCurve base = fit_base_curve(pc, S.G, S.solved);
    const EmbeddedSurface c = compose(lift(build_chart(base, fit_chart_grid(pc, 201, 201))), pc);
    const InducedMetric im = induced_metric(c);
    EXPECT_LT(sup_dev(im.E, 1.0, &S.solved), 1e-3);
    EXPECT_LT(sup_dev(im.F, 0.0, &S.solved), 1e-3);
    EXPECT_LT(sup_dev(im.G, 1.0, &S.solved), 1e-3);
}

TEST(Obj, RoundTripAndFaces) {
    const Grid2D g = Grid2D::span(-0.1, 0.1, -0.1, 0.1, 4, 3);
    EmbeddedSurface s = lift(build_chart(BaseCurve::circle(2.0), g));
    s.position[0] = {NAN, NAN, NAN};
    const auto path = std::filesystem::temp_directory_path() / "isoembed_surface.obj";
    write_obj(s, path.string());
    const std::vector<Vec3> v = read_obj_vertices(path.string());
    ASSERT_EQ(v.size(), g.size());
    EXPECT_TRUE(std::isnan(v[0].x));
    for (std::size_t k = 1; k < v.size(); ++k) {
        EXPECT_EQ(v[k].x, s.position[k].x);
        EXPECT_EQ(v[k].y, s.position[k].y);
        EXPECT_EQ(v[k].z, s.position[k].z);
    }
    std::ifstream in(path);
    std::string line;
    int faces = 0;
    while (std::getline(in, line)) faces += line.rfind("f ", 0) == 0;
    EXPECT_EQ(faces, 2 * ((g.nu - 1) * (g.nv - 1) - 1));
    std::filesystem::remove(path);
}

TEST(Obj, BadVertexReported) {
    const auto path = std::filesystem::temp_directory_path() / "isoembed_bad.obj";
    {
        std::ofstream out(path);
        out << "v 1 2 3\nv 1 2\n";
    }
    EXPECT_THROW(read_obj_vertices(path.string()), Error);
    EXPECT_THROW(read_obj_vertices("/nonexistent/file.obj"), Error);
    std::filesystem::remove(path);
}
