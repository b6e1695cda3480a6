#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "isoembed/pipeline.hpp"

using namespace isoembed;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const Verdict* find(const VerificationReport& r, const std::string& name) {
    for (const auto& v : r.verdicts)
        if (v.name == name) return &v;
    return nullptr;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const char* exe = std::getenv("ISOEMBED_CLI");
        if (!exe) GTEST_SKIP() << "ISOEMBED_CLI not set";
        cli_ = exe;
        dir_ = fs::temp_directory_path() / ("isoembed_cli_" + std::string(
            ::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override {
        if (!dir_.empty()) fs::remove_all(dir_);
    }
    int run(const std::string& args) const {
        const std::string cmd = "cd '" + dir_.string() + "' && '" + cli_ + "' " + args + " > out.txt 2> err.txt";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
    void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

    std::string cli_;
    fs::path dir_;
};

}  // namespace

TEST(Config, DefaultsReproduceAcceptanceRun) {
    const RunConfig c;
    EXPECT_EQ(c.metric, "flat");
    EXPECT_EQ(c.family, "linear_ramp");
    EXPECT_EQ(c.epsilon, 0.1);
    EXPECT_EQ(c.delta, 0.1);
    EXPECT_EQ(c.nu, 201);
    EXPECT_EQ(c.nv, 201);
    EXPECT_EQ(c.grid(), Grid2D::span(-0.1, 0.1, -0.1, 0.1, 201, 201));
    EXPECT_EQ(c.base_curve, "fitted");
}

TEST(Config, ParsesSectionsAndComments) {
    std::istringstream in(
        "# comment\n[metric]\nname = cos2 ; trailing\n\n[initial]\nfamily=c1_not_c2\nepsilon = 0.2\n"
        "[grid]\nn = 51\n[tolerances]\nisometry = 0.5\n");
    const RunConfig c = parse_config(in);
    EXPECT_EQ(c.metric, "cos2");
    EXPECT_EQ(c.family, "c1_not_c2");
    EXPECT_EQ(c.epsilon, 0.2);
    EXPECT_EQ(c.nu, 51);
    EXPECT_EQ(c.nv, 51);
    EXPECT_EQ(c.tol.isometry, 0.5);
}

TEST(Config, ErrorsCarryLineNumbers) {
    auto message = [](const std::string& text) {
        std::istringstream in(text);
        try {
            parse_config(in, "cfg");
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::ParseError);
            return std::string(e.what());
        }
        return std::string();
    };
    EXPECT_NE(message("[metric]\nname = flat\nbogus = 1\n").find("cfg:3:"), std::string::npos);
    EXPECT_NE(message("[initial]\nepsilon = abc\n").find("cfg:2:"), std::string::npos);
    EXPECT_NE(message("name = flat\n").find("cfg:1:"), std::string::npos);
    EXPECT_NE(message("[grid\n").find("cfg:1:"), std::string::npos);
    EXPECT_NE(message("[grid]\nnu = 20.5\n").find("integer"), std::string::npos);
    EXPECT_NE(message("[grid]\nnu\n").find("key = value"), std::string::npos);
}

TEST(Config, EveryKeyIsSettable) {
    for (const auto& [key, slot] : RunConfig::key_table()) {
        (void)slot;
        RunConfig c;
        const bool text = key == "metric.name" || key == "initial.family" || key == "chart.base_curve" ||
                          key.rfind("output.", 0) == 0;
        EXPECT_NO_THROW(c.set(key, text ? "flat" : "3")) << key;
    }
}

TEST(Config, ShippedConfigsLoad) {
    const RunConfig flat = load_config(std::string(ISOEMBED_SOURCE_DIR) + "/configs/flat.ini");
    EXPECT_EQ(flat.grid(), RunConfig{}.grid());
    EXPECT_EQ(flat.mesh_out, "flat");
    const RunConfig cos2 = load_config(std::string(ISOEMBED_SOURCE_DIR) + "/configs/cos2.ini");
    EXPECT_EQ(cos2.metric, "cos2");
    EXPECT_EQ(cos2.family, "c1_not_c2");
}

TEST(Config, Validation) {
    RunConfig c;
    c.epsilon = 1.5;
    try {
        c.validate();
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("epsilon out of (0,1)"), std::string::npos);
    }
    c = RunConfig{};
    c.nu = 2;
    EXPECT_THROW(c.validate(), Error);
    c = RunConfig{};
    c.delta = 0.0;
    EXPECT_THROW(c.validate(), Error);
    c = RunConfig{};
    c.family = "wavy";
    EXPECT_THROW(c.validate(), Error);
    EXPECT_THROW(load_config("/nonexistent/config.ini"), Error);
}

TEST(Pipeline, FlatDefaultPasses) {
    const PipelineResult r = run_pipeline(RunConfig{});
    for (const auto& v : r.report.verdicts) EXPECT_TRUE(v.pass()) << v.name << " = " << v.value;
    EXPECT_TRUE(r.report.all_pass());
    ASSERT_NE(find(r.report, "isometry_E"), nullptr);
    EXPECT_LT(find(r.report, "isometry_E")->value, 1e-6);
    EXPECT_TRUE(r.report.residuals.contains("isometry_G"));
    EXPECT_TRUE(r.report.residuals.contains("compatibility_dG"));
    EXPECT_TRUE(r.defects.empty());
}

TEST(Pipeline, Cos2ReportsCurvatureAndDefects) {
    const PipelineResult r = run_pipeline(example_cos2_config());
    const Verdict* k = find(r.report, "curvature_stencil");
    ASSERT_NE(k, nullptr);
    EXPECT_TRUE(k->pass());
    EXPECT_FALSE(r.defects.empty());
    const auto& d = r.report.extras["c2_defects"];
    EXPECT_TRUE(d["locus_through_ubar0"].get<bool>());
    EXPECT_GT(r.report.masked_count, 0u);
}

TEST(Pipeline, LinearRampHasNoDefects) {
    RunConfig c = example_cos2_config();
    c.family = "linear_ramp";
    const PipelineResult r = run_pipeline(c);
    EXPECT_TRUE(r.defects.empty());
    EXPECT_FALSE(r.report.extras["c2_defects"]["locus_through_ubar0"].get<bool>());
}

TEST(Pipeline, NamedBaseCurve) {
    RunConfig c;
    c.base_curve = "line";
    c.base_speed = std::sqrt(98.0);
    const PipelineResult r = run_pipeline(c);
    EXPECT_LT(find(r.report, "isometry_E")->value, 1e-6);
    c.base_curve = "circle:0.0001";
    EXPECT_THROW(run_pipeline(c), Error);
}

TEST(Pipeline, VerdictsMonotoneInTolerance) {
    RunConfig c = example_cos2_config();
    c.nu = c.nv = 61;
    const PipelineResult tight = run_pipeline(c);
    c.tol.isometry = 1.0;
    c.tol.g_closed_rel = 1.0;
    c.tol.pullback = 1.0;
    const PipelineResult loose = run_pipeline(c);
    for (const auto& v : tight.report.verdicts) {
        if (v.pass()) {
            EXPECT_TRUE(find(loose.report, v.name)->pass()) << v.name;
        }
    }
}

TEST_F(Cli, FlatRunExitsZero) {
    write("flat.ini", "[metric]\nname = flat\n");
    EXPECT_EQ(run("run flat.ini"), 0);
    EXPECT_TRUE(fs::exists(dir_ / "report.json"));
    const auto j = nlohmann::json::parse(slurp(dir_ / "report.json"));
    EXPECT_FALSE(j["verdicts"].empty());
}

TEST_F(Cli, BadEpsilonExitsOne) {
    write("bad.ini", "[initial]\nepsilon = 1.5\n");
    EXPECT_EQ(run("run bad.ini"), 1);
    EXPECT_NE(slurp(dir_ / "err.txt").find("epsilon out of (0,1)"), std::string::npos);
    write("ok.ini", "[metric]\nname = flat\n");
    EXPECT_EQ(run("run ok.ini --epsilon 1.5"), 1);
    EXPECT_EQ(run("run missing.ini"), 1);
}

TEST_F(Cli, VerdictFailureExitsTwo) {
    write("tight.ini", "[tolerances]\nisometry = 1e-30\n");
    EXPECT_EQ(run("run tight.ini --grid-n 41"), 2);
}

TEST_F(Cli, RunsAreByteIdentical) {
    write("c.ini", "[metric]\nname = cos2\n[initial]\nfamily = c1_not_c2\n");
    run("run c.ini --csv a.csv --report a.json --mesh-out a");
    run("run c.ini --csv b.csv --report b.json --mesh-out b");
    EXPECT_EQ(slurp(dir_ / "a.csv"), slurp(dir_ / "b.csv"));
    EXPECT_EQ(slurp(dir_ / "a_composite.obj"), slurp(dir_ / "b_composite.obj"));
    EXPECT_FALSE(slurp(dir_ / "a.csv").empty());
}

TEST_F(Cli, ExampleCos2) {
    EXPECT_EQ(run("example-cos2 --grid-n 101"), 2);
    const auto j = nlohmann::json::parse(slurp(dir_ / "example_cos2_report.json"));
    EXPECT_TRUE(j["verdicts"]["curvature_stencil"]["pass"].get<bool>());
    EXPECT_TRUE(j["diagnostics"]["c2_defects"]["locus_through_ubar0"].get<bool>());
    run("example-cos2 --grid-n 101 --family linear_ramp --report lin.json");
    const auto k = nlohmann::json::parse(slurp(dir_ / "lin.json"));
    EXPECT_EQ(k["diagnostics"]["c2_defects"]["flagged_nodes"], 0);
}

TEST_F(Cli, VerifyIsIdempotent) {
    write("c.ini", "[metric]\nname = cos2\n");
    run("run c.ini --grid-n 101 --mesh-out m --csv r.csv --report r.json");
    run("verify m_composite.obj cos2 r.csv --report v.json");
    const auto a = nlohmann::json::parse(slurp(dir_ / "r.json"));
    const auto b = nlohmann::json::parse(slurp(dir_ / "v.json"));
    for (const char* key : {"isometry_E", "isometry_F", "isometry_G"}) EXPECT_EQ(a["residuals"][key], b["residuals"][key]);
}

TEST_F(Cli, VerifyLocatesTamperedVertex) {
    write("f.ini", "[metric]\nname = flat\n");
    ASSERT_EQ(run("run f.ini --grid-n 41 --mesh-out m --csv r.csv"), 0);
    ASSERT_EQ(run("verify m_composite.obj flat r.csv --report clean.json"), 0);
    // Move vertex (20, 20), the parameter origin, by 1e-2 in x.
    std::istringstream obj(slurp(dir_ / "m_composite.obj"));
    std::ofstream out(dir_ / "t.obj");
    std::string line;
    int vertex = 0;
    while (std::getline(obj, line)) {
        if (line.rfind("v ", 0) == 0 && vertex++ == 20 * 41 + 20) {
            std::istringstream ss(line.substr(2));
            double x, y, z;
            ss >> x >> y >> z;
            char buf[128];
            std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g", x + 1e-2, y, z);
            line = buf;
        }
        out << line << '\n';
    }
    out.close();
    EXPECT_EQ(run("verify t.obj flat r.csv --report t.json"), 2);
    const auto j = nlohmann::json::parse(slurp(dir_ / "t.json"));
    EXPECT_NEAR(j["diagnostics"]["worst_node"]["ubar"].get<double>(), 0.0, 0.011);
    EXPECT_NEAR(j["diagnostics"]["worst_node"]["vbar"].get<double>(), 0.0, 0.011);
    EXPECT_GT(j["diagnostics"]["worst_node"]["residual"].get<double>(), 0.1);
}

TEST_F(Cli, VerifyShapeMismatchExitsOne) {
    write("f.ini", "[metric]\nname = flat\n");
    run("run f.ini --grid-n 41 --mesh-out m --csv r.csv");
    run("run f.ini --grid-n 21 --mesh-out small --csv small.csv");
    EXPECT_EQ(run("verify m_composite.obj flat small.csv"), 1);
    EXPECT_NE(slurp(dir_ / "err.txt").find("ShapeMismatch"), std::string::npos);
}
