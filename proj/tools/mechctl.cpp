// mechctl: decompose, derive, simulate and verify mechanical systems.
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "jetmech/commands.hpp"

using namespace jetmech;

namespace {

int emit(const CommandOutcome& out) {
    (out.exit_code == exit_code::usage || out.exit_code == exit_code::numeric ? std::cerr : std::cout) << out.report;
    std::cout.flush();
    return out.exit_code;
}

CommandOutcome with_system(const std::string& source, const std::function<CommandOutcome(const SystemSpec&)>& body) {
    std::string label = source;
    return run_guarded(label, [&] {
        SystemSource src = read_system_source(source);
        label = src.label;
        return body(parse_system(src.text));
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamical forms, their exact/anti-exact split, and the equations D*phi = 0."};
    app.require_subcommand(1);
    app.set_version_flag("--version", "mechctl 1.0.0");

    std::string file;
    std::string json_path;

    auto* decompose = app.add_subcommand("decompose", "Split phi into dL + phi_a and test closedness of phi_a");
    std::string mode = "auto";
    decompose->add_option("file", file, "System file or preset name")->required();
    decompose->add_option("--mode", mode, "canonical | declared (default: declared if the file has a split)")
        ->check(CLI::IsMember({"auto", "canonical", "declared"}));
    decompose->add_option("--json", json_path, "Write a JSON report");

    auto* derive = app.add_subcommand("derive", "Print the equations of motion D*phi = 0");
    derive->add_option("file", file, "System file or preset name")->required();
    derive->add_option("--json", json_path, "Write a JSON report");

    auto* simulate = app.add_subcommand("simulate", "Integrate the derived equations");
    SimulateOptions sim;
    std::string method;
    simulate->add_option("file", file, "System file or preset name")->required();
    simulate->add_option("--out", sim.out_path, "CSV output path ('-' for stdout)");
    simulate->add_flag("--audit", sim.audit, "Append energy E, power P and balance residual rho");
    simulate->add_flag("--oracle", sim.oracle, "Compare against the declared Newtonian oracle");
    simulate->add_option("--tol", sim.tol, "Oracle divergence tolerance")->capture_default_str();
    simulate->add_option("--method", method, "Override the integrator")->check(CLI::IsMember({"rk4", "rkf45"}));
    simulate->add_option("--json", json_path, "Write a JSON report");

    auto* verify = app.add_subcommand("verify", "Run the property suites (MECH_SEED fixes the seed)");
    bool builtin = false;
    verify->add_option("file", file, "System file or preset name");
    verify->add_flag("--builtin-suite", builtin, "Randomized identities plus every preset");
    verify->add_option("--json", json_path, "Write a JSON report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_code::usage;
    }

    if (*decompose) {
        DecomposeOptions opts;
        opts.mode = mode == "canonical" ? DecomposeMode::canonical
                    : mode == "declared" ? DecomposeMode::declared
                                         : DecomposeMode::automatic;
        opts.json_path = json_path;
        return emit(with_system(file, [&](const SystemSpec& sys) { return run_decompose(sys, opts); }));
    }
    if (*derive) {
        return emit(with_system(file, [&](const SystemSpec& sys) { return run_derive(sys, {json_path}); }));
    }
    if (*simulate) {
        if (!method.empty()) sim.method = method == "rk4" ? Method::rk4 : Method::rkf45;
        sim.json_path = json_path;
        return emit(with_system(file, [&](const SystemSpec& sys) { return run_simulate(sys, sim); }));
    }
    // verify
    if (builtin == !file.empty()) {
        std::cerr << "error: verify takes exactly one of FILE or --builtin-suite\n";
        return exit_code::usage;
    }
    VerifyOptions opts;
    opts.json_path = json_path;
    try {
        opts.seed = seed_from_environment();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code::usage;
    }
    if (builtin) return emit(run_guarded("builtin", [&] { return run_verify_builtin(opts); }));
    return emit(with_system(file, [&](const SystemSpec& sys) { return run_verify(sys, opts); }));
}
