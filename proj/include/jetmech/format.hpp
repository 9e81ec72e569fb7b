#pragma once

#include <algorithm>
#include <string>
#include <tuple>
#include <vector>

#include "jetmech/expr.hpp"

namespace jetmech {

/// Names of the coordinates of a system, by index.
struct Chart {
    std::vector<std::string> names;

    /// x, y, z for the first three indices, then q3, q4, ...
    static std::string default_name(int i) {
        static const char* first[] = {"x", "y", "z"};
        if (i >= 0 && i < 3) return first[i];
        return "q" + std::to_string(i);
    }

    static Chart standard(int n) {
        Chart c;
        for (int i = 0; i < n; ++i) c.names.push_back(default_name(i));
        return c;
    }

    std::string name(int i) const {
        if (i >= 0 && static_cast<std::size_t>(i) < names.size()) return names[static_cast<std::size_t>(i)];
        return default_name(i);
    }

    int dimension() const { return static_cast<int>(names.size()); }
};

inline std::string format_symbol(const Symbol& s, const Chart& chart) {
    switch (s.kind) {
        case SymbolKind::time: return "t";
        case SymbolKind::coordinate: return chart.name(s.index);
        case SymbolKind::velocity: return chart.name(s.index) + "'";
        case SymbolKind::acceleration: return chart.name(s.index) + "''";
        case SymbolKind::parameter: return s.name;
        case SymbolKind::signal:
            if (s.derivative == 0) return "sig(" + s.name + ")";
            if (s.derivative == 1) return "dsig(" + s.name + ")";
            return "dsig(" + s.name + ", " + std::to_string(s.derivative) + ")";
    }
    return "?";
}

namespace detail {

// Parameters lead a product, then signals, time and jet coordinates.
inline int render_rank(SymbolKind k) {
    switch (k) {
        case SymbolKind::parameter: return 0;
        case SymbolKind::signal: return 1;
        case SymbolKind::time: return 2;
        case SymbolKind::coordinate: return 3;
        case SymbolKind::velocity: return 4;
        case SymbolKind::acceleration: return 5;
    }
    return 6;
}

/// Renders |c| * m (sign handled by the caller).
inline std::string format_unsigned_term(const Rational& abs_coeff, const Monomial& m, const Chart& chart) {
    std::vector<std::pair<Symbol, int>> factors(m.begin(), m.end());
    std::stable_sort(factors.begin(), factors.end(), [](const auto& a, const auto& b) {
        return std::make_tuple(render_rank(a.first.kind), a.first.index, a.first.name, a.first.derivative) <
               std::make_tuple(render_rank(b.first.kind), b.first.index, b.first.name, b.first.derivative);
    });
    std::string out;
    if (!abs_coeff.is_one() || factors.empty()) out = abs_coeff.to_string();
    for (const auto& [s, e] : factors) {
        if (!out.empty()) out += "*";
        out += format_symbol(s, chart);
        if (e != 1) out += "^" + std::to_string(e);
    }
    return out;
}

}  // namespace detail

/// Deterministic rendering in the input language: "-k*x^2 + m*x'^2".
inline std::string format_expr(const Expr& e, const Chart& chart = {}) {
    if (e.is_zero()) return "0";
    std::string out;
    bool first = true;
    for (const auto& [m, c] : e.terms()) {
        const bool negative = c.sign() < 0;
        std::string body = detail::format_unsigned_term(negative ? -c : c, m, chart);
        if (first)
            out += negative ? "-" + body : body;
        else
            out += (negative ? " - " : " + ") + body;
        first = false;
    }
    return out;
}

/// A coefficient placed in front of a basis element: "b ", "(x + y) ", "-", "".
inline std::string format_coefficient_prefix(const Expr& c, const Chart& chart, bool& negative) {
    negative = false;
    if (c.terms().size() == 1) {
        const auto& [m, r] = *c.terms().begin();
        negative = r.sign() < 0;
        Rational mag = negative ? -r : r;
        if (m.empty() && mag.is_one()) return "";
        return detail::format_unsigned_term(mag, m, chart) + " ";
    }
    return "(" + format_expr(c, chart) + ") ";
}

/// Joins (coefficient, basis) pairs as "a dx + (b + c) dx' - d dt".
inline std::string format_linear_combination(const std::vector<std::pair<Expr, std::string>>& parts,
                                             const Chart& chart) {
    std::string out;
    for (const auto& [c, basis] : parts) {
        if (c.is_zero()) continue;
        bool negative = false;
        std::string prefix = format_coefficient_prefix(c, chart, negative);
        if (out.empty())
            out += (negative ? "-" : "") + prefix + basis;
        else
            out += (negative ? " - " : " + ") + prefix + basis;
    }
    return out.empty() ? "0" : out;
}

}  // namespace jetmech
