#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "jetmech/dynamics.hpp"
#include "jetmech/expr.hpp"
#include "jetmech/format.hpp"
#include "jetmech/forms.hpp"
#include "jetmech/spencer.hpp"

namespace jetmech {

struct TimeSettings {
    double start = 0.0;
    double end = 0.0;
    double step = 0.0;
};

/// A mechanical system as declared in a `.mech` file: its constitutive law
/// phi = F dx + Pi dx', optional physically motivated split, optional direct
/// Newtonian oracle, and simulation settings.
struct SystemSpec {
    std::string name;
    Chart chart;
    std::vector<std::string> parameter_order;
    std::map<std::string, std::optional<double>> parameters;
    SignalTable signals;
    VerticalOneForm phi;
    std::vector<std::string> force_source;  // force clauses as written, per coordinate

    std::optional<Expr> lagrangian;
    std::optional<VerticalOneForm> anti_exact;
    std::vector<std::optional<Expr>> oracle_forces;

    std::optional<std::vector<double>> x0;
    std::optional<std::vector<double>> v0;
    std::optional<TimeSettings> time;
    Method method = Method::rk4;

    int dimension() const { return chart.dimension(); }

    bool has_user_split() const { return lagrangian.has_value() || anti_exact.has_value(); }

    bool has_oracle() const {
        if (oracle_forces.empty()) return false;
        for (const auto& f : oracle_forces)
            if (!f) return false;
        return true;
    }

    /// Declared split; throws SplitReconstructionError if it does not add up to phi.
    Decomposition user_split() const {
        if (!has_user_split()) throw InvalidArgument("system '" + name + "' declares no lagrangian/antiexact split");
        return accept_user_split(lagrangian.value_or(Expr{}), anti_exact.value_or(VerticalOneForm::zero(dimension())), phi);
    }

    /// Parameter values; throws if one was declared without a value.
    ParameterValues parameter_values() const {
        ParameterValues out;
        for (const auto& [k, v] : parameters) {
            if (!v) throw UnboundSymbol("parameter '" + k + "' has no value");
            out.emplace(k, *v);
        }
        return out;
    }

    EquationsOfMotion equations() const { return dual_spencer(phi); }

    ExplicitODE derived_ode() const { return assemble_explicit(equations(), parameter_values(), signals); }

    /// Oracle masses come from parameter `m_<coordinate>` when declared, else `m`.
    ExplicitODE oracle_ode() const {
        if (!has_oracle()) throw InvalidArgument("system '" + name + "' declares no Newtonian oracle for every coordinate");
        std::vector<Expr> forces, masses;
        for (int i = 0; i < dimension(); ++i) {
            forces.push_back(*oracle_forces[static_cast<std::size_t>(i)]);
            std::string specific = "m_" + chart.name(i);
            if (parameters.count(specific))
                masses.emplace_back(Symbol::parameter(specific));
            else if (parameters.count("m"))
                masses.emplace_back(Symbol::parameter("m"));
            else
                throw InvalidArgument("oracle for '" + chart.name(i) + "' needs a mass parameter 'm' or '" + specific + "'");
        }
        return newton_oracle(forces, masses, parameter_values(), signals);
    }
};

/// Runs the derived and oracle dynamics of a system side by side.
inline OracleReport oracle_compare(const SystemSpec& sys, double a, double b, double h) {
    if (!sys.x0 || !sys.v0) throw InvalidArgument("oracle comparison requires init");
    return oracle_compare(sys.derived_ode(), sys.oracle_ode(), *sys.x0, *sys.v0, a, b, h, sys.method);
}

}  // namespace jetmech
