// Command-line driver: run a config, the built-in cos^2 scenario, or re-verify a mesh.

#include <cstdio>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "isoembed/isoembed.hpp"

namespace {

// One flag per config key: "--<section>-<key>" (underscores become hyphens),
// plus short aliases for the common ones.
struct Overrides {
    std::map<std::string, std::string> values;  ///< key -> raw text

    void add_to(CLI::App* cmd) {
        static const std::map<std::string, std::string> aliases = {
            {"grid.n", "--grid-n"},           {"initial.epsilon", "--epsilon"}, {"initial.delta", "--delta"},
            {"metric.name", "--metric"},      {"initial.family", "--family"},   {"chart.base_curve", "--base-curve"},
            {"chart.base_speed", "--base-speed"}, {"output.mesh_out", "--mesh-out"},
            {"output.report_json", "--report"},   {"output.residual_csv", "--csv"}};
        for (const auto& [key, slot] : isoembed::RunConfig::key_table()) {
            (void)slot;
            std::string flag = "--" + key;
            for (char& c : flag)
                if (c == '.' || c == '_') c = '-';
            const auto alias = aliases.find(key);
            if (alias != aliases.end() && alias->second != flag) flag += "," + alias->second;
            cmd->add_option_function<std::string>(
                flag, [this, key = key](const std::string& v) { values[key] = v; }, "sets [" + key + "]");
        }
    }

    void apply(isoembed::RunConfig& cfg) const {
        for (const auto& [key, value] : values) cfg.set(key, value, "command line: ");
    }
};

void print_verdicts(const isoembed::VerificationReport& r) {
    for (const auto& v : r.verdicts)
        std::printf("%-28s %s  value=%.6g %s %.3g\n", v.name.c_str(), v.pass() ? "PASS" : "FAIL", v.value,
                    v.lower_bound ? ">=" : "<", v.limit);
}

int run_config(isoembed::RunConfig cfg, const Overrides& o) {
    o.apply(cfg);
    isoembed::PipelineResult result;
    const int code = isoembed::run_and_write(cfg, &result);
    print_verdicts(result.report);
    std::printf("report: %s\n", cfg.report_json.c_str());
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Local isometric embedding of geodesic-form 2-metrics"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides run_o, example_o;
    auto* run = app.add_subcommand("run", "run the pipeline from an INI config");
    run->add_option("config", config_path, "config file")->required();
    run_o.add_to(run);

    auto* example = app.add_subcommand("example-cos2", "cos^2 metric with C^1-not-C^2 initial data");
    example_o.add_to(example);

    std::string mesh, metric_name, fields, verify_report = "verify_report.json", verify_csv;
    double isometry_tol = 1e-3;
    auto* verify = app.add_subcommand("verify", "recompute isometry residuals of a mesh");
    verify->add_option("mesh", mesh, "OBJ mesh on the parameter grid")->required();
    verify->add_option("metric", metric_name, "flat | cos2 | exp | file:<csv>")->required();
    verify->add_option("fields", fields, "per-node CSV written by run")->required();
    verify->add_option("--report", verify_report, "JSON report path");
    verify->add_option("--csv", verify_csv, "per-node residual CSV path");
    verify->add_option("--isometry-tol", isometry_tol, "limit for |Ebar - 1| and |Fbar|");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return run_config(isoembed::load_config(config_path), run_o);
        if (*example) return run_config(isoembed::example_cos2_config(), example_o);
        const isoembed::VerificationReport r = isoembed::verify_surface(mesh, metric_name, fields, isometry_tol);
        isoembed::write_report(r, verify_report, verify_csv);
        print_verdicts(r);
        std::printf("report: %s\n", verify_report.c_str());
        return r.all_pass() ? 0 : 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
