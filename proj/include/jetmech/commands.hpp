#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jetmech/dsl.hpp"
#include "jetmech/dynamics.hpp"
#include "jetmech/forms.hpp"
#include "jetmech/presets.hpp"
#include "jetmech/properties.hpp"
#include "jetmech/spencer.hpp"
#include "jetmech/system.hpp"

namespace jetmech {

/// Exit codes shared by every command.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int verification_failure = 1;
inline constexpr int usage = 2;
inline constexpr int numeric = 3;
}  // namespace exit_code

/// Result of a command: exit code, human-readable report, files written.
struct CommandOutcome {
    int exit_code = exit_code::ok;
    std::string report;
    std::vector<std::string> artifacts;
};

/// Bad flags, missing files, or a system lacking a clause the command needs.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Where a system comes from: a `.mech` path or a preset name.
struct SystemSource {
    std::string label;  // shown in error messages
    std::string text;
};

inline SystemSource read_system_source(const std::string& path_or_preset) {
    const auto& table = presets::all();
    if (!std::filesystem::exists(path_or_preset)) {
        if (auto it = table.find(path_or_preset); it != table.end()) return {it->first, std::string(it->second)};
        std::string names;
        for (const auto& [name, text] : table) names += (names.empty() ? "" : ", ") + name;
        throw UsageError("no such file or preset '" + path_or_preset + "' (presets: " + names + ")");
    }
    std::ifstream in(path_or_preset, std::ios::binary);
    if (!in) throw UsageError("cannot read '" + path_or_preset + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return {path_or_preset, buf.str()};
}

namespace cli_detail {

inline std::string sci(double d) { return properties::sci(d); }

/// "m*x''" style left-hand side for a constant diagonal mass.
inline std::string mass_times_acceleration(const Expr& mass, const std::string& coordinate) {
    const std::string acc = coordinate + "''";
    if (mass == Expr(1)) return acc;
    if (mass.terms().size() == 1 && mass.terms().begin()->second == Rational(1)) return format_expr(mass) + "*" + acc;
    return "(" + format_expr(mass) + ")*" + acc;
}

/// Mass matrix M_ij = -dR_i/dx''^j.
inline std::vector<std::vector<Expr>> mass_matrix(const EquationsOfMotion& eom) {
    const int n = eom.dimension();
    std::vector<std::vector<Expr>> M(static_cast<std::size_t>(n), std::vector<Expr>(static_cast<std::size_t>(n)));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            M[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                -partial(eom.residuals[static_cast<std::size_t>(i)], Symbol::acceleration(j));
    return M;
}

inline bool state_free(const Expr& e) {
    for (SymbolKind k : {SymbolKind::time, SymbolKind::coordinate, SymbolKind::velocity, SymbolKind::acceleration,
                         SymbolKind::signal})
        if (e.contains(k)) return false;
    return true;
}

inline nlohmann::json one_form_json(const VerticalOneForm& w, const Chart& chart) {
    nlohmann::json F = nlohmann::json::array(), Pi = nlohmann::json::array();
    for (int i = 0; i < w.dimension(); ++i) {
        F.push_back(format_expr(w.F(i), chart));
        Pi.push_back(format_expr(w.Pi(i), chart));
    }
    return {{"F", F}, {"Pi", Pi}};
}

inline nlohmann::json checks_json(const std::vector<PropertyResult>& checks) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& c : checks) {
        nlohmann::json j{{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}};
        if (!c.pass) j["seed"] = c.seed;
        out.push_back(j);
    }
    return out;
}

/// {system, lagrangian, anti_exact: {F, Pi}, residuals, checks}
inline nlohmann::json report_json(const SystemSpec& sys, const std::optional<Decomposition>& dec,
                                  const std::vector<PropertyResult>& checks) {
    nlohmann::json j;
    j["system"] = sys.name;
    j["lagrangian"] = dec ? nlohmann::json(format_expr(dec->lagrangian, sys.chart)) : nlohmann::json(nullptr);
    j["anti_exact"] = dec ? one_form_json(dec->anti_exact, sys.chart) : nlohmann::json(nullptr);
    if (dec) {
        j["split"] = to_string(dec->mode);
        if (!dec->anti_exact_time.is_zero()) j["anti_exact"]["T"] = format_expr(dec->anti_exact_time, sys.chart);
    }
    nlohmann::json residuals = nlohmann::json::array();
    for (const auto& r : sys.equations().residuals) residuals.push_back(format_expr(r, sys.chart));
    j["residuals"] = residuals;
    j["checks"] = checks_json(checks);
    return j;
}

inline void write_json(const std::string& path, const nlohmann::json& j, CommandOutcome& out) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw UsageError("cannot write '" + path + "'");
    os << j.dump(2) << "\n";
    out.artifacts.push_back(path);
    out.report += "wrote " + path + "\n";
}

inline std::string check_line(const PropertyResult& c) {
    std::string line = std::string(c.pass ? "PASS" : "FAIL") + "  " + c.name;
    if (!c.detail.empty()) line += "  " + c.detail;
    if (!c.pass) line += "  (seed " + std::to_string(c.seed) + ")";
    return line + "\n";
}

}  // namespace cli_detail

/// Maps library errors onto the exit-code contract.
inline CommandOutcome run_guarded(const std::string& label, const std::function<CommandOutcome()>& body) {
    auto fail = [](int code, const std::string& msg) { return CommandOutcome{code, "error: " + msg + "\n", {}}; };
    try {
        return body();
    } catch (const ParseError& e) {
        return fail(exit_code::usage, label + ":" + std::to_string(e.line()) + ":" + std::to_string(e.column()) + ": " +
                                          e.message() + (e.token().empty() ? "" : " (near '" + e.token() + "')"));
    } catch (const UsageError& e) {
        return fail(exit_code::usage, e.what());
    } catch (const SplitReconstructionError& e) {
        return fail(exit_code::verification_failure, e.what());
    } catch (const DecompositionUnsupported& e) {
        return fail(exit_code::numeric, e.what());
    } catch (const Error& e) {
        return fail(exit_code::numeric, e.what());
    }
}

enum class DecomposeMode { automatic, canonical, declared };

struct DecomposeOptions {
    DecomposeMode mode = DecomposeMode::automatic;  // declared when the system has a split, else canonical
    std::string json_path;
};

/// Prints L, phi_a, the closedness verdict of phi_a and the reconstruction check.
inline CommandOutcome run_decompose(const SystemSpec& sys, const DecomposeOptions& opts) {
    CommandOutcome out;
    DecomposeMode mode = opts.mode;
    if (mode == DecomposeMode::automatic) mode = sys.has_user_split() ? DecomposeMode::declared : DecomposeMode::canonical;
    if (mode == DecomposeMode::declared && !sys.has_user_split())
        throw UsageError("system '" + sys.name + "' declares no lagrangian/antiexact split; use --mode canonical");

    Decomposition dec = mode == DecomposeMode::declared ? sys.user_split() : decompose(sys.phi, sys.signals);
    const Chart& chart = sys.chart;
    std::ostringstream r;
    r << "system: " << sys.name << "\n";
    r << "mode: " << to_string(dec.mode) << "\n";
    r << "L = " << format_expr(dec.lagrangian, chart) << "\n";
    r << "phi_a = " << format_one_form(dec.anti_exact_full(), chart) << "\n";

    std::vector<PropertyResult> checks;
    if (dec.anti_exact.is_zero() && dec.anti_exact_time.is_zero()) {
        r << "form is exact\n";
        checks.push_back({"closedness", true, "phi_a = 0", 0});
    } else {
        TwoForm d = d1(dec.anti_exact);
        if (d.is_zero()) {
            r << "phi_a closed: d(phi_a) = 0\n";
            checks.push_back({"closedness", true, "d(phi_a) = 0", 0});
        } else {
            r << "phi_a not closed: d(phi_a) = " << format_two_form(d, chart) << "\n";
            checks.push_back({"closedness", false, "d(phi_a) = " + format_two_form(d, chart), 0});
        }
    }
    const bool ok = reconstructs(dec, sys.phi, sys.signals);
    r << "reconstruction: dL + phi_a = phi " << (ok ? "[ok]" : "[FAILED]") << "\n";
    checks.push_back({"reconstruction", ok, ok ? "exact" : "mismatch", 0});
    out.report = r.str();
    if (!opts.json_path.empty()) cli_detail::write_json(opts.json_path, cli_detail::report_json(sys, dec, checks), out);
    out.exit_code = ok ? exit_code::ok : exit_code::verification_failure;
    return out;
}

struct DeriveOptions {
    std::string json_path;
};

/// Prints every residual R_i = 0 and, for a constant diagonal mass, m x''^i = ....
inline CommandOutcome run_derive(const SystemSpec& sys, const DeriveOptions& opts = {}) {
    CommandOutcome out;
    const Chart& chart = sys.chart;
    EquationsOfMotion eom = sys.equations();
    std::ostringstream r;
    r << "system: " << sys.name << "\n";
    const int n = eom.dimension();
    for (int i = 0; i < n; ++i)
        r << "residual " << chart.name(i) << ": " << format_expr(eom.residuals[static_cast<std::size_t>(i)], chart) << " = 0\n";

    auto M = cli_detail::mass_matrix(eom);
    bool singular = false, diagonal_constant = true;
    for (int i = 0; i < n; ++i) {
        bool row_zero = true;
        for (int j = 0; j < n; ++j) {
            const Expr& mij = M[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            row_zero = row_zero && mij.is_zero();
            if (i != j && !mij.is_zero()) diagonal_constant = false;
            if (i == j && (!cli_detail::state_free(mij) || mij.is_zero())) diagonal_constant = false;
        }
        singular = singular || row_zero;
    }
    if (singular) {
        r << "warning: mass matrix singular; equations left implicit\n";
    } else if (!diagonal_constant) {
        r << "note: mass matrix is coupled or state-dependent; equations left implicit\n";
    } else {
        for (int i = 0; i < n; ++i) {
            const auto idx = static_cast<std::size_t>(i);
            const Expr& mass = M[idx][idx];
            Expr rhs = eom.residuals[idx] + mass * Expr(Symbol::acceleration(i));
            std::string text = format_expr(rhs, chart);
            // Show the force law as written when it is the same polynomial.
            if (idx < sys.force_source.size() && !sys.force_source[idx].empty() && rhs == sys.phi.F(i))
                text = sys.force_source[idx];
            r << cli_detail::mass_times_acceleration(mass, chart.name(i)) << " = " << text << "\n";
        }
    }
    out.report = r.str();
    if (!opts.json_path.empty()) {
        std::optional<Decomposition> dec;
        if (sys.has_user_split()) dec = sys.user_split();
        std::vector<PropertyResult> checks{{"acceleration-affinity", affine_in_acceleration(eom), "", 0},
                                           {"mass-nonsingular", !singular, singular ? "mass matrix singular" : "", 0}};
        cli_detail::write_json(opts.json_path, cli_detail::report_json(sys, dec, checks), out);
    }
    return out;
}

struct SimulateOptions {
    std::string out_path;  // "-" writes the CSV to the report
    bool audit = false;
    bool oracle = false;
    double tol = 1e-8;
    std::optional<Method> method;
    std::string json_path;
};

/// Integrates the derived equations and writes the trajectory as CSV.
inline CommandOutcome run_simulate(const SystemSpec& sys, const SimulateOptions& opts) {
    if (!sys.x0 || !sys.v0) throw UsageError("simulate requires init");
    if (!sys.time) throw UsageError("simulate requires a time clause");
    if (opts.oracle && !sys.has_oracle()) throw UsageError("--oracle requires an oracle clause for every coordinate");
    if (!(opts.tol > 0)) throw UsageError("--tol must be positive");

    CommandOutcome out;
    const Method method = opts.method.value_or(sys.method);
    const TimeSettings ts = *sys.time;
    const ParameterValues params = sys.parameter_values();
    std::optional<Decomposition> split;
    if (opts.audit) {
        split = properties::preferred_split(sys);
        if (!split)
            throw AuditUnsupported("energy audit needs a declared split or polynomial signals for the canonical one");
    }

    std::ostringstream r;
    r << "system: " << sys.name << "\n";
    Trajectory traj;
    std::string failure;
    try {
        traj = integrate(sys.derived_ode(), *sys.x0, *sys.v0, ts.start, ts.end, ts.step, method);
    } catch (const SingularMass& e) {
        failure = e.what();
        traj.integrator = to_string(method);
        traj.h = traj.section.h = ts.step;
        traj.dimension = sys.dimension();
        traj.truncated = true;
        traj.truncation_reason = failure;
    }
    r << "integrator: " << traj.integrator << ", h = " << format_double(ts.step) << ", " << traj.size() << " samples over ["
      << format_double(ts.start) << ", " << format_double(ts.end) << "]\n";

    std::vector<PropertyResult> checks;
    bool verification_ok = true;
    std::optional<BalanceReport> audit;
    if (traj.size() >= 3) {
        const double spencer = max_abs(spencer_residual(traj.section));
        r << "spencer residual max " << cli_detail::sci(spencer) << "\n";
        checks.push_back({"spencer-residual", true, cli_detail::sci(spencer), 0});
        if (opts.audit) {
            audit = energy_audit(traj, *split, params, sys.signals);
            r << "energy drift " << cli_detail::sci(audit->relative_drift) << " (relative), max |dE/dt - P| "
              << cli_detail::sci(audit->max_residual) << " [" << to_string(split->mode) << " split]\n";
            checks.push_back({"energy-balance", true,
                              "drift " + cli_detail::sci(audit->relative_drift) + ", max residual " +
                                  cli_detail::sci(audit->max_residual),
                              0});
        }
    }
    if (opts.oracle && !traj.truncated) {
        Trajectory oracle = integrate(sys.oracle_ode(), *sys.x0, *sys.v0, ts.start, ts.end, ts.step, method);
        double div = oracle.size() == traj.size() ? 0.0 : INFINITY;
        for (std::size_t k = 0; k < std::min(oracle.size(), traj.size()); ++k) {
            double d = 0.0;
            for (int i = 0; i < sys.dimension(); ++i) {
                const auto idx = static_cast<std::size_t>(i);
                d += std::abs(traj.section.x[k][idx] - oracle.section.x[k][idx]) +
                     std::abs(traj.section.v[k][idx] - oracle.section.v[k][idx]);
            }
            div = std::max(div, d);
        }
        const bool ok = div <= opts.tol;
        verification_ok = verification_ok && ok;
        r << "max divergence " << cli_detail::sci(div) << " (tol " << cli_detail::sci(opts.tol) << ")"
          << (ok ? "" : " EXCEEDED") << "\n";
        checks.push_back({"oracle-divergence", ok, cli_detail::sci(div), 0});
    }

    if (!opts.out_path.empty()) {
        std::ostringstream csv;
        write_csv(csv, traj, audit ? &*audit : nullptr);
        if (opts.out_path == "-") {
            r << csv.str();
        } else {
            std::ofstream os(opts.out_path, std::ios::binary);
            if (!os) throw UsageError("cannot write '" + opts.out_path + "'");
            os << csv.str();
            out.artifacts.push_back(opts.out_path);
            r << "wrote " << opts.out_path << (traj.truncated ? " (partial)" : "") << "\n";
        }
    }
    if (traj.truncated) {
        r << "error: trajectory truncated: " << traj.truncation_reason << "\n";
        checks.push_back({"integration", false, traj.truncation_reason, 0});
    }
    out.report = r.str();
    if (!opts.json_path.empty()) cli_detail::write_json(opts.json_path, cli_detail::report_json(sys, split, checks), out);
    out.exit_code = traj.truncated ? exit_code::numeric
                                   : (verification_ok ? exit_code::ok : exit_code::verification_failure);
    return out;
}

struct VerifyOptions {
    std::uint64_t seed = default_seed;
    std::string json_path;
};

inline CommandOutcome tabulate(const std::string& title, const std::vector<PropertyResult>& checks,
                               const std::optional<SystemSpec>& sys, const std::string& json_path) {
    CommandOutcome out;
    std::ostringstream r;
    r << title << "\n";
    std::size_t passed = 0;
    for (const auto& c : checks) {
        r << cli_detail::check_line(c);
        passed += c.pass ? 1 : 0;
    }
    r << passed << "/" << checks.size() << " properties passed\n";
    out.report = r.str();
    if (!json_path.empty()) {
        nlohmann::json j;
        if (sys) {
            std::optional<Decomposition> dec;
            try {
                dec = properties::preferred_split(*sys);
            } catch (const Error&) {
            }
            j = cli_detail::report_json(*sys, dec, checks);
        } else {
            j = {{"system", "builtin-suite"}, {"lagrangian", nullptr}, {"anti_exact", nullptr},
                 {"residuals", nlohmann::json::array()}, {"checks", cli_detail::checks_json(checks)}};
        }
        cli_detail::write_json(json_path, j, out);
    }
    out.exit_code = passed == checks.size() ? exit_code::ok : exit_code::verification_failure;
    return out;
}

/// Every applicable property on one system.
inline CommandOutcome run_verify(const SystemSpec& sys, const VerifyOptions& opts) {
    return tabulate("system: " + sys.name + " (seed " + std::to_string(opts.seed) + ")",
                    properties::system_suite(sys, opts.seed), sys, opts.json_path);
}

/// Randomized identities plus every preset.
inline CommandOutcome run_verify_builtin(const VerifyOptions& opts) {
    return tabulate("builtin suite (seed " + std::to_string(opts.seed) + ")", properties::builtin_suite(opts.seed),
                    std::nullopt, opts.json_path);
}

}  // namespace jetmech
