#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "jetmech/dsl.hpp"
#include "jetmech/dynamics.hpp"
#include "jetmech/forms.hpp"
#include "jetmech/presets.hpp"
#include "jetmech/random.hpp"
#include "jetmech/spencer.hpp"
#include "jetmech/system.hpp"

namespace jetmech {

/// Outcome of one property check. `seed` reproduces the first failing case
/// when passed back as the master seed.
struct PropertyResult {
    std::string name;
    bool pass = false;
    std::string detail;
    std::uint64_t seed = 0;
};

inline constexpr std::uint64_t default_seed = 20240611;

/// MECH_SEED if set (decimal), otherwise `fallback`.
inline std::uint64_t seed_from_environment(std::uint64_t fallback = default_seed) {
    const char* env = std::getenv("MECH_SEED");
    if (!env || !*env) return fallback;
    try {
        std::size_t used = 0;
        const unsigned long long s = std::stoull(env, &used, 10);
        if (env[used] != '\0') throw std::invalid_argument(env);
        return s;
    } catch (const std::exception&) {
        throw InvalidArgument(std::string("MECH_SEED must be a nonnegative integer, got '") + env + "'");
    }
}

namespace properties {

inline std::string sci(double d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", d);
    return buf;
}

/// Runs `check` on `cases` generators seeded master, master+1, ...; stops at
/// the first failure, which reports its own seed.
inline PropertyResult run_cases(const std::string& name, std::uint64_t master, int cases,
                                const std::function<std::optional<std::string>(std::mt19937_64&, int)>& check) {
    for (int i = 0; i < cases; ++i) {
        const std::uint64_t seed = master + static_cast<std::uint64_t>(i);
        std::mt19937_64 rng(seed);
        std::optional<std::string> failure;
        try {
            failure = check(rng, i);
        } catch (const std::exception& e) {
            failure = std::string("exception: ") + e.what();
        }
        if (failure) return {name, false, *failure, seed};
    }
    return {name, true, std::to_string(cases) + " cases", master};
}

inline RandomExprOptions shape_for_case(int i) {
    RandomExprOptions o;
    o.n = 1 + i % 3;
    return o;
}

inline VerticalOneForm expand_signals(const VerticalOneForm& w, const SignalTable& signals) {
    std::vector<Expr> F, Pi;
    for (int i = 0; i < w.dimension(); ++i) {
        F.push_back(expand_polynomial_signals(w.F(i), signals));
        Pi.push_back(expand_polynomial_signals(w.Pi(i), signals));
    }
    return {F, Pi};
}

// ---------------------------------------------------------------------------
// Symbolic suites on random polynomial forms
// ---------------------------------------------------------------------------

/// phi = dL + phi_a exactly, H(phi_a) = 0 exactly, and phi_a = H(d phi).
inline PropertyResult cochain_contraction(std::uint64_t master, int cases = 200) {
    const SignalTable signals{{"g", ForcingSignal::polynomial("g", {Rational(1), Rational(-2), Rational(1, 3)})}};
    return run_cases("cochain-contraction", master, cases, [&](std::mt19937_64& rng, int i) -> std::optional<std::string> {
        RandomExprOptions o = shape_for_case(i);
        if (i % 2) o.signals = {"g"};
        VerticalOneForm phi = random_one_form(rng, o);
        Decomposition dec = decompose(phi, signals);
        if (!(d0(dec.lagrangian, o.n).vertical + dec.anti_exact == phi))
            return "reconstruction failed for phi = " + format_one_form(phi);
        if (!homotopy(dec.anti_exact_full(), signals).is_zero())
            return "H(phi_a) != 0 for phi = " + format_one_form(phi);
        GeneralOneForm hd = homotopy(d1(phi), o.n, signals);
        GeneralOneForm anti = dec.anti_exact_full();
        if (!(hd.T == expand_polynomial_signals(anti.T, signals)) || !(hd.vertical == expand_signals(anti.vertical, signals)))
            return "phi_a != H(d phi) for phi = " + format_one_form(phi);
        return std::nullopt;
    });
}

/// D*(vertical dL) = delta L / delta x.
inline PropertyResult euler_lagrange_equivalence(std::uint64_t master, int cases = 100) {
    return run_cases("euler-lagrange-equivalence", master, cases, [](std::mt19937_64& rng, int i) -> std::optional<std::string> {
        RandomExprOptions o = shape_for_case(i);
        Expr L = random_expr(rng, o);
        if (dual_spencer(d0(L, o.n).vertical).residuals != variational_derivative(L, o.n))
            return "mismatch for L = " + format_expr(L);
        return std::nullopt;
    });
}

/// Any valid split, declared or canonical, assembles to D*phi.
inline PropertyResult split_invariance(std::uint64_t master, int cases = 100) {
    return run_cases("split-invariance", master, cases, [](std::mt19937_64& rng, int i) -> std::optional<std::string> {
        RandomExprOptions o = shape_for_case(i);
        VerticalOneForm phi = random_one_form(rng, o);
        Expr L = random_expr(rng, o);
        const auto expected = dual_spencer(phi).residuals;
        Decomposition declared = accept_user_split(L, phi - d0(L, o.n).vertical, phi);
        if (assemble_with_split(declared, phi).residuals != expected)
            return "declared split changes D*phi for phi = " + format_one_form(phi);
        if (assemble_with_split(decompose(phi), phi).residuals != expected)
            return "canonical split changes D*phi for phi = " + format_one_form(phi);
        if (assemble_with_split(accept_user_split(Expr{}, phi, phi), phi).residuals != expected)
            return "degenerate split changes D*phi";
        return std::nullopt;
    });
}

/// d1 . d0 vanishes on the vertical block, and entirely when L is t-free.
inline PropertyResult d_squared_zero(std::uint64_t master, int cases = 100) {
    return run_cases("d-squared-zero", master, cases, [](std::mt19937_64& rng, int i) -> std::optional<std::string> {
        RandomExprOptions o = shape_for_case(i);
        Expr e = random_expr(rng, o);
        TwoForm dd = d1(d0(e, o.n).vertical);
        if (!dd.vertical_block_zero()) return "d d e has a vertical block for e = " + format_expr(e);
        if (!e.depends_on(Symbol::time()) && !dd.is_zero()) return "d d e != 0 for t-free e = " + format_expr(e);
        return std::nullopt;
    });
}

/// Every residual of D*phi is affine in the accelerations.
inline PropertyResult acceleration_affinity(std::uint64_t master, int cases = 100) {
    return run_cases("acceleration-affinity", master, cases, [](std::mt19937_64& rng, int i) -> std::optional<std::string> {
        RandomExprOptions o = shape_for_case(i);
        VerticalOneForm phi = random_one_form(rng, o);
        if (!affine_in_acceleration(dual_spencer(phi))) return "non-affine residual for phi = " + format_one_form(phi);
        return std::nullopt;
    });
}

/// normalize(parse(format(e))) = e.
inline PropertyResult format_round_trip(std::uint64_t master, int cases = 100) {
    return run_cases("format-round-trip", master, cases, [](std::mt19937_64& rng, int i) -> std::optional<std::string> {
        RandomExprOptions o = shape_for_case(i);
        o.signals = {"f"};
        o.coefficient_range = 40;
        Expr e = random_expr(rng, o);
        if (i % 5 == 0) e += Expr::term(Rational(3, 7), {{Symbol::signal("f", 2), 1}, {Symbol::acceleration(0), 2}});
        const Chart chart = Chart::standard(o.n);
        const std::string text = format_expr(e, chart);
        if (!(normalize(parse_expr(text), permissive_resolver(chart)) == e)) return "round trip changed '" + text + "'";
        return std::nullopt;
    });
}

// ---------------------------------------------------------------------------
// Numeric suites on a concrete system
// ---------------------------------------------------------------------------

/// Declared split if the system has one, else the canonical split when admissible.
inline std::optional<Decomposition> preferred_split(const SystemSpec& sys) {
    if (sys.has_user_split()) return sys.user_split();
    if (sys.phi.homotopy_admissible(sys.signals)) return decompose(sys.phi, sys.signals);
    return std::nullopt;
}

inline bool simulable(const SystemSpec& sys) { return sys.x0 && sys.v0 && sys.time; }

/// Derived-equation and Newtonian trajectories agree to `tol`.
inline PropertyResult oracle_equivalence(const SystemSpec& sys, double tol = 1e-10) {
    const std::string name = "oracle-equivalence[" + sys.name + "]";
    try {
        OracleReport r = oracle_compare(sys, sys.time->start, sys.time->end, sys.time->step);
        bool ok = !r.truncated && r.max_divergence <= tol;
        return {name, ok, "max divergence " + sci(r.max_divergence) + (ok ? " <= " : " > ") + sci(tol), 0};
    } catch (const std::exception& e) {
        return {name, false, e.what(), 0};
    }
}

/// phi with an extra restoring force -`stiffness` x^i in every coordinate.
inline VerticalOneForm stiffened(const VerticalOneForm& phi, Rational stiffness) {
    std::vector<Expr> F, Pi;
    for (int i = 0; i < phi.dimension(); ++i) {
        F.push_back(phi.F(i) - Expr::term(stiffness, {{Symbol::coordinate(i), 1}}));
        Pi.push_back(phi.Pi(i));
    }
    return {F, Pi};
}

/// The oracle comparison notices a stiffness change of +1.
inline PropertyResult oracle_negative_control(const SystemSpec& sys, double threshold = 1e-3) {
    const std::string name = "oracle-negative-control[" + sys.name + "]";
    try {
        ExplicitODE corrupted = assemble_explicit(dual_spencer(stiffened(sys.phi, Rational(1))), sys.parameter_values(), sys.signals);
        OracleReport r = oracle_compare(corrupted, sys.oracle_ode(), *sys.x0, *sys.v0, sys.time->start, sys.time->end,
                                        sys.time->step, sys.method);
        bool ok = r.max_divergence > threshold;
        return {name, ok, "corrupted divergence " + sci(r.max_divergence) + (ok ? " > " : " <= ") + sci(threshold), 0};
    } catch (const std::exception& e) {
        return {name, false, e.what(), 0};
    }
}

struct VariationSetup {
    Trajectory solution;
    Trajectory perturbed;
    double a = 0.0, b = 0.0;
};

/// Solution and a 10%-stiffened trajectory on the first `span` time units.
inline VariationSetup variation_setup(const SystemSpec& sys, double span = 3.0) {
    VariationSetup s;
    s.a = sys.time->start;
    s.b = std::min(sys.time->end, s.a + span);
    const ParameterValues p = sys.parameter_values();
    s.solution = integrate(sys.derived_ode(), *sys.x0, *sys.v0, s.a, s.b, sys.time->step, sys.method);
    ExplicitODE off = assemble_explicit(dual_spencer(stiffened(sys.phi, Rational(1, 10))), p, sys.signals);
    s.perturbed = integrate(off, *sys.x0, *sys.v0, s.a, s.b, sys.time->step, sys.method);
    return s;
}

/// |Sigma| <= 1e-5 |dx| on solutions for random fixed-boundary variations,
/// and at least 100 times larger on perturbed dynamics.
inline PropertyResult first_variation_extremality(const SystemSpec& sys, std::uint64_t master, int cases = 20) {
    const std::string name = "first-variation-extremality[" + sys.name + "]";
    try {
        VariationSetup s = variation_setup(sys);
        const ParameterValues p = sys.parameter_values();
        double worst_on = 0.0, worst_ratio = INFINITY;
        PropertyResult r = run_cases(name, master, cases, [&](std::mt19937_64& rng, int) -> std::optional<std::string> {
            std::uniform_real_distribution<double> amp(-1.0, 1.0);
            std::uniform_int_distribution<int> coord(0, sys.dimension() - 1);
            std::vector<double> c(4);
            for (double& ci : c) ci = amp(rng);
            VariationField dx = VariationField::sine_series(sys.dimension(), coord(rng), s.a, s.b, c);
            if (!dx.fixed_boundary(s.solution.section)) return std::string("variation does not vanish at the ends");
            const double norm = variation_norm(dx, s.solution.section);
            const double on = std::abs(first_variation(s.solution, sys.phi, dx, p, sys.signals));
            const double off = std::abs(first_variation(s.perturbed, sys.phi, dx, p, sys.signals));
            worst_on = std::max(worst_on, on / norm);
            worst_ratio = std::min(worst_ratio, off / on);
            if (on > 1e-5 * norm) return "|Sigma| = " + sci(on) + " > 1e-5 |dx| = " + sci(1e-5 * norm);
            if (off < 100 * on) return "perturbed |Sigma| = " + sci(off) + " < 100 x " + sci(on);
            return std::nullopt;
        });
        if (r.pass) r.detail += ", max |Sigma|/|dx| " + sci(worst_on) + ", min perturbed ratio " + sci(worst_ratio);
        return r;
    } catch (const std::exception& e) {
        return {name, false, e.what(), master};
    }
}

/// Sigma_pre = Sigma_post_interior + Theta(b) - Theta(a) for random cubic dx(t).
inline PropertyResult integration_by_parts(const SystemSpec& sys, std::uint64_t master, int cases = 20) {
    const std::string name = "integration-by-parts[" + sys.name + "]";
    try {
        VariationSetup s = variation_setup(sys);
        const ParameterValues p = sys.parameter_values();
        double worst = 0.0;
        PropertyResult r = run_cases(name, master, cases, [&](std::mt19937_64& rng, int) -> std::optional<std::string> {
            std::uniform_int_distribution<int> c(-4, 4);
            const Expr tt(Symbol::time());
            std::vector<Expr> comps;
            for (int i = 0; i < sys.dimension(); ++i)
                comps.push_back(Expr(c(rng)) + Expr(c(rng)) * tt + Expr(c(rng)) * tt.pow(2) + Expr(c(rng)) * tt.pow(3));
            VariationField dx = VariationField::symbolic(comps);
            for (const Trajectory* tr : {&s.solution, &s.perturbed}) {
                const double pre = first_variation(*tr, sys.phi, dx, p, sys.signals, VariationForm::pre_parts);
                const double inner = first_variation(*tr, sys.phi, dx, p, sys.signals, VariationForm::post_parts_interior);
                auto [ta, tb] = transversality_term(*tr, sys.phi, dx, p, sys.signals);
                const double scale = 1.0 + std::abs(pre) + std::abs(inner) + std::abs(ta) + std::abs(tb);
                const double gap = std::abs(pre - (inner + tb - ta));
                worst = std::max(worst, gap / scale);
                if (gap > 1e-8 * scale) return "identity gap " + sci(gap) + " > 1e-8 x " + sci(scale);
            }
            return std::nullopt;
        });
        if (r.pass) r.detail += ", max relative gap " + sci(worst);
        return r;
    } catch (const std::exception& e) {
        return {name, false, e.what(), master};
    }
}

/// Spencer residual of integrated trajectories shrinks by >= 3.5 when h halves.
inline PropertyResult spencer_convergence(const SystemSpec& sys) {
    const std::string name = "spencer-convergence[" + sys.name + "]";
    try {
        const double a = sys.time->start, b = std::min(sys.time->end, a + 10.0);
        ExplicitODE ode = sys.derived_ode();
        const double coarse = max_abs(spencer_residual(integrate(ode, *sys.x0, *sys.v0, a, b, 0.02, sys.method).section));
        const double fine = max_abs(spencer_residual(integrate(ode, *sys.x0, *sys.v0, a, b, 0.01, sys.method).section));
        const double ratio = coarse / fine;
        bool ok = ratio >= 3.5;
        return {name, ok, "residual " + sci(coarse) + " -> " + sci(fine) + ", ratio " + sci(ratio), 0};
    } catch (const std::exception& e) {
        return {name, false, e.what(), 0};
    }
}

/// The balance law dE/dt = P holds on the system's grid up to the O(h^2)
/// differencing of E: rho shrinks by >= 3.5 when h halves, unless it is
/// already at round-off. With `pointwise_tol`, also |rho| <= pointwise_tol.
/// Conservative systems must also keep E within 1e-9 relative.
inline PropertyResult energy_balance(const SystemSpec& sys, std::optional<double> pointwise_tol = std::nullopt) {
    const std::string name = "energy-balance[" + sys.name + "]";
    try {
        auto split = preferred_split(sys);
        if (!split) return {name, false, "no admissible split for the audit", 0};
        const ParameterValues p = sys.parameter_values();
        const TimeSettings& ts = *sys.time;
        auto audit = [&](double h) {
            Trajectory tr = integrate(sys.derived_ode(), *sys.x0, *sys.v0, ts.start, ts.end, h, sys.method);
            if (tr.truncated) throw InvalidArgument("trajectory truncated: " + tr.truncation_reason);
            return energy_audit(tr, *split, p, sys.signals);
        };
        BalanceReport coarse = audit(ts.step), fine = audit(ts.step / 2);
        const double ratio = coarse.max_residual / fine.max_residual;
        bool ok = coarse.max_residual <= 1e-9 || ratio >= 3.5;
        std::string detail = "max |dE/dt - P| " + sci(coarse.max_residual) + " -> " + sci(fine.max_residual) +
                             " at h/2 (ratio " + sci(ratio) + ")";
        if (pointwise_tol) {
            ok = ok && coarse.max_residual <= *pointwise_tol;
            detail += ", bound " + sci(*pointwise_tol);
        }
        // Conservative: no anti-exact part and no explicit time dependence.
        if (split->anti_exact.is_zero() && !split->lagrangian.depends_on(Symbol::time())) {
            ok = ok && coarse.relative_drift <= 1e-9;
            detail += ", energy drift " + sci(coarse.relative_drift) + " (bound 1e-09)";
        }
        return {name, ok, detail, 0};
    } catch (const std::exception& e) {
        return {name, false, e.what(), 0};
    }
}

/// The non-integrable section x = t, x' = 0 has Spencer residual 1 everywhere.
inline PropertyResult non_integrable_section() {
    NumericSection s;
    s.h = 0.01;
    for (int k = 0; k <= 100; ++k) s.push_back(0.01 * k, {0.01 * k}, {0.0});
    double worst = 0.0;
    for (const auto& r : spencer_residual(s)) worst = std::max(worst, std::abs(r[0] - 1.0));
    return {"spencer-non-integrable", worst <= 1e-12, "max |r - 1| " + sci(worst), 0};
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

/// Symbolic identities that hold for the system's own forms.
inline std::vector<PropertyResult> system_symbolic_checks(const SystemSpec& sys) {
    std::vector<PropertyResult> out;
    const int n = sys.dimension();
    auto guarded = [&](const std::string& name, const std::function<PropertyResult()>& f) {
        try {
            out.push_back(f());
        } catch (const std::exception& e) {
            out.push_back({name, false, e.what(), 0});
        }
    };
    const auto expected = dual_spencer(sys.phi).residuals;
    guarded("acceleration-affinity[" + sys.name + "]", [&] {
        return PropertyResult{"acceleration-affinity[" + sys.name + "]", affine_in_acceleration(sys.equations()), "", 0};
    });
    if (sys.has_user_split()) {
        guarded("split-reconstruction[" + sys.name + "]", [&] {
            Decomposition dec = sys.user_split();
            bool ok = reconstructs(dec, sys.phi, sys.signals);
            return PropertyResult{"split-reconstruction[" + sys.name + "]", ok, "declared split", 0};
        });
        guarded("split-invariance[" + sys.name + "]", [&] {
            bool ok = assemble_with_split(sys.user_split(), sys.phi, sys.signals).residuals == expected;
            return PropertyResult{"split-invariance[" + sys.name + "]", ok, "declared split", 0};
        });
        if (sys.lagrangian) {
            guarded("euler-lagrange-equivalence[" + sys.name + "]", [&] {
                bool ok = dual_spencer(d0(*sys.lagrangian, n).vertical).residuals == variational_derivative(*sys.lagrangian, n);
                return PropertyResult{"euler-lagrange-equivalence[" + sys.name + "]", ok, "declared lagrangian", 0};
            });
        }
    }
    if (sys.phi.homotopy_admissible(sys.signals)) {
        guarded("cochain-contraction[" + sys.name + "]", [&] {
            Decomposition dec = decompose(sys.phi, sys.signals);
            bool ok = d0(dec.lagrangian, n).vertical + dec.anti_exact == sys.phi &&
                      homotopy(dec.anti_exact_full(), sys.signals).is_zero() &&
                      assemble_with_split(dec, sys.phi, sys.signals).residuals == expected;
            return PropertyResult{"cochain-contraction[" + sys.name + "]", ok, "canonical split", 0};
        });
    }
    return out;
}

/// Numeric checks that need init and time clauses.
inline std::vector<PropertyResult> system_numeric_checks(const SystemSpec& sys, std::uint64_t master) {
    std::vector<PropertyResult> out;
    if (!simulable(sys)) return out;
    if (sys.has_oracle()) {
        out.push_back(oracle_equivalence(sys));
        out.push_back(oracle_negative_control(sys));
    }
    out.push_back(first_variation_extremality(sys, master));
    out.push_back(integration_by_parts(sys, master));
    out.push_back(spencer_convergence(sys));
    return out;
}

/// Every check that applies to one parsed system.
inline std::vector<PropertyResult> system_suite(const SystemSpec& sys, std::uint64_t master) {
    std::vector<PropertyResult> out = system_symbolic_checks(sys);
    for (auto& r : system_numeric_checks(sys, master)) out.push_back(std::move(r));
    return out;
}

/// Randomized identities plus every check on every shipped preset.
inline std::vector<PropertyResult> builtin_suite(std::uint64_t master) {
    std::vector<PropertyResult> out{cochain_contraction(master),   euler_lagrange_equivalence(master),
                                    split_invariance(master),      d_squared_zero(master),
                                    acceleration_affinity(master), format_round_trip(master),
                                    non_integrable_section()};
    for (const auto& [name, text] : presets::all()) {
        SystemSpec sys = parse_system(text);
        for (auto& r : system_suite(sys, master)) out.push_back(std::move(r));
        auto split = preferred_split(sys);
        if (split && !split->anti_exact.has_momentum_part())
            out.push_back(energy_balance(sys, name == "damped_ho" ? std::optional<double>(1e-6) : std::nullopt));
    }
    return out;
}

}  // namespace properties
}  // namespace jetmech
