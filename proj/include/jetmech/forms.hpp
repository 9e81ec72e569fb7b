#pragma once

#include <compare>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "jetmech/errors.hpp"
#include "jetmech/expr.hpp"
#include "jetmech/format.hpp"

namespace jetmech {

/// phi = F_i dx^i + Pi_i dx'^i on the first jet space.
///
/// There is no dt component, and the coefficients never mention
/// accelerations.
class VerticalOneForm {
public:
    VerticalOneForm() = default;
    VerticalOneForm(std::vector<Expr> F, std::vector<Expr> Pi) : F_(std::move(F)), Pi_(std::move(Pi)) {
        if (F_.size() != Pi_.size()) throw InvalidArgument("one-form needs as many dx as dx' coefficients");
        const int n = dimension();
        for (const auto* side : {&F_, &Pi_})
            for (const auto& c : *side) {
                if (c.contains(SymbolKind::acceleration))
                    throw InvalidArgument("one-form coefficients must not contain accelerations");
                if (c.index_bound() > n) throw InvalidArgument("one-form coefficient refers to a coordinate beyond its dimension");
            }
    }

    static VerticalOneForm zero(int n) {
        return {std::vector<Expr>(static_cast<std::size_t>(n)), std::vector<Expr>(static_cast<std::size_t>(n))};
    }

    int dimension() const { return static_cast<int>(F_.size()); }
    const std::vector<Expr>& F() const { return F_; }
    const std::vector<Expr>& Pi() const { return Pi_; }
    const Expr& F(int i) const { return F_.at(static_cast<std::size_t>(i)); }
    const Expr& Pi(int i) const { return Pi_.at(static_cast<std::size_t>(i)); }

    bool is_zero() const {
        for (int i = 0; i < dimension(); ++i)
            if (!F(i).is_zero() || !Pi(i).is_zero()) return false;
        return true;
    }

    bool has_momentum_part() const {
        for (const auto& p : Pi_)
            if (!p.is_zero()) return true;
        return false;
    }

    /// Every signal mentioned is registered and polynomial.
    bool homotopy_admissible(const SignalTable& signals) const {
        for (const auto* side : {&F_, &Pi_})
            for (const auto& c : *side)
                for (const auto& s : c.symbols())
                    if (s.kind == SymbolKind::signal) {
                        auto it = signals.find(s.name);
                        if (it == signals.end() || !it->second.homotopy_admissible()) return false;
                    }
        return true;
    }

    friend VerticalOneForm operator+(const VerticalOneForm& a, const VerticalOneForm& b) {
        return combine(a, b, false);
    }
    friend VerticalOneForm operator-(const VerticalOneForm& a, const VerticalOneForm& b) {
        return combine(a, b, true);
    }
    friend bool operator==(const VerticalOneForm&, const VerticalOneForm&) = default;

private:
    static VerticalOneForm combine(const VerticalOneForm& a, const VerticalOneForm& b, bool subtract) {
        if (a.dimension() != b.dimension()) throw InvalidArgument("one-forms of different dimension");
        VerticalOneForm out = a;
        for (std::size_t i = 0; i < a.F_.size(); ++i) {
            if (subtract) {
                out.F_[i] -= b.F_[i];
                out.Pi_[i] -= b.Pi_[i];
            } else {
                out.F_[i] += b.F_[i];
                out.Pi_[i] += b.Pi_[i];
            }
        }
        return out;
    }

    std::vector<Expr> F_;
    std::vector<Expr> Pi_;
};

/// T dt + F_i dx^i + Pi_i dx'^i.
struct GeneralOneForm {
    Expr T;
    VerticalOneForm vertical;

    bool is_zero() const { return T.is_zero() && vertical.is_zero(); }
    friend bool operator==(const GeneralOneForm&, const GeneralOneForm&) = default;
};

/// A basis differential: dt, dx^i or dx'^i. Ordered dt < dx^0 < ... < dx'^0 < ...
struct Differential {
    enum class Kind : int { time = 0, position = 1, velocity = 2 };
    Kind kind = Kind::time;
    int index = 0;

    static Differential dt() { return {Kind::time, 0}; }
    static Differential dx(int i) { return {Kind::position, i}; }
    static Differential dv(int i) { return {Kind::velocity, i}; }

    /// The coordinate function this differential belongs to.
    Symbol coordinate_symbol() const {
        switch (kind) {
            case Kind::time: return Symbol::time();
            case Kind::position: return Symbol::coordinate(index);
            case Kind::velocity: return Symbol::velocity(index);
        }
        return Symbol::time();
    }

    friend bool operator==(const Differential&, const Differential&) = default;
    friend auto operator<=>(const Differential&, const Differential&) = default;
};

inline std::string format_differential(const Differential& d, const Chart& chart) {
    switch (d.kind) {
        case Differential::Kind::time: return "dt";
        case Differential::Kind::position: return "d" + chart.name(d.index);
        case Differential::Kind::velocity: return "d" + chart.name(d.index) + "'";
    }
    return "d?";
}

/// Two-form stored on ordered basis pairs (first < second); absent keys are zero.
class TwoForm {
public:
    using Key = std::pair<Differential, Differential>;

    /// Adds c * (a ^ b), folding b ^ a = -(a ^ b) and a ^ a = 0.
    void add(Differential a, Differential b, const Expr& c) {
        if (a == b || c.is_zero()) return;
        Expr coeff = c;
        if (b < a) {
            std::swap(a, b);
            coeff = -coeff;
        }
        auto [it, inserted] = coefficients_.try_emplace(Key{a, b}, coeff);
        if (!inserted) {
            it->second += coeff;
            if (it->second.is_zero()) coefficients_.erase(it);
        }
    }

    Expr coefficient(Differential a, Differential b) const {
        if (a == b) return {};
        bool flip = b < a;
        if (flip) std::swap(a, b);
        auto it = coefficients_.find(Key{a, b});
        if (it == coefficients_.end()) return {};
        return flip ? -it->second : it->second;
    }

    const std::map<Key, Expr>& coefficients() const { return coefficients_; }
    bool is_zero() const { return coefficients_.empty(); }

    /// True when the dx^dx, dx^dx' and dx'^dx' blocks all vanish.
    bool vertical_block_zero() const {
        for (const auto& [k, c] : coefficients_)
            if (k.first.kind != Differential::Kind::time) return false;
        return true;
    }

    friend bool operator==(const TwoForm&, const TwoForm&) = default;

private:
    std::map<Key, Expr> coefficients_;
};

// ---------------------------------------------------------------------------
// Exterior derivative and contraction
// ---------------------------------------------------------------------------

/// Full differential of a function on the first jet space.
inline GeneralOneForm d0(const Expr& e, int n) {
    if (e.contains(SymbolKind::acceleration)) throw InvalidArgument("d0: expression contains accelerations");
    if (e.index_bound() > n) throw InvalidArgument("d0: expression refers to a coordinate beyond the dimension");
    std::vector<Expr> F, Pi;
    for (int i = 0; i < n; ++i) {
        F.push_back(partial(e, Symbol::coordinate(i)));
        Pi.push_back(partial(e, Symbol::velocity(i)));
    }
    return {partial(e, Symbol::time()), VerticalOneForm(std::move(F), std::move(Pi))};
}

/// Exterior derivative of a vertical one-form.
inline TwoForm d1(const VerticalOneForm& w) {
    const int n = w.dimension();
    std::vector<Differential> basis{Differential::dt()};
    for (int j = 0; j < n; ++j) basis.push_back(Differential::dx(j));
    for (int j = 0; j < n; ++j) basis.push_back(Differential::dv(j));

    TwoForm out;
    for (int i = 0; i < n; ++i) {
        for (const auto& y : basis) {
            out.add(y, Differential::dx(i), partial(w.F(i), y.coordinate_symbol()));
            out.add(y, Differential::dv(i), partial(w.Pi(i), y.coordinate_symbol()));
        }
    }
    return out;
}

/// Contraction with the radius field: F_i x^i + Pi_i x'^i.
inline Expr interior_radius(const VerticalOneForm& w) {
    Expr out;
    for (int i = 0; i < w.dimension(); ++i)
        out += w.F(i) * Expr(Symbol::coordinate(i)) + w.Pi(i) * Expr(Symbol::velocity(i));
    return out;
}

// ---------------------------------------------------------------------------
// Homotopy operator
// ---------------------------------------------------------------------------

/// H(w) = \int_0^1 w_{s p}(R_p) ds: components evaluated at the scaled point
/// and contracted with the unscaled radius field.
inline Expr homotopy(const GeneralOneForm& w, const SignalTable& signals = {}) {
    Expr out = scaling_integral(w.T, signals) * Expr(Symbol::time());
    for (int i = 0; i < w.vertical.dimension(); ++i) {
        out += scaling_integral(w.vertical.F(i), signals) * Expr(Symbol::coordinate(i));
        out += scaling_integral(w.vertical.Pi(i), signals) * Expr(Symbol::velocity(i));
    }
    return out;
}

inline Expr homotopy(const VerticalOneForm& w, const SignalTable& signals = {}) {
    return homotopy(GeneralOneForm{Expr{}, w}, signals);
}

/// H on two-forms: \int_0^1 s (i_R w)_{s p} ds, mapping back to one-forms.
///
/// A coefficient monomial of scaling degree d picks up 1/(d+2).
inline GeneralOneForm homotopy(const TwoForm& w, int n, const SignalTable& signals = {}) {
    Expr T;
    std::vector<Expr> F(static_cast<std::size_t>(n)), Pi(static_cast<std::size_t>(n));
    auto slot = [&](const Differential& d) -> Expr& {
        switch (d.kind) {
            case Differential::Kind::time: return T;
            case Differential::Kind::position: return F.at(static_cast<std::size_t>(d.index));
            case Differential::Kind::velocity: return Pi.at(static_cast<std::size_t>(d.index));
        }
        return T;
    };
    for (const auto& [key, c] : w.coefficients()) {
        Expr expanded = expand_polynomial_signals(c, signals);
        Expr integrated;
        for (const auto& [m, r] : expanded.terms())
            integrated += Expr::term(r / Rational(scaling_degree(m) + 2), m);
        // i_R (dy ^ dz) = y dz - z dy
        slot(key.second) += integrated * Expr(key.first.coordinate_symbol());
        slot(key.first) -= integrated * Expr(key.second.coordinate_symbol());
    }
    return {T, VerticalOneForm(std::move(F), std::move(Pi))};
}

// ---------------------------------------------------------------------------
// Exact / anti-exact decomposition
// ---------------------------------------------------------------------------

enum class SplitMode { canonical_homotopy, user_declared };

inline const char* to_string(SplitMode m) {
    return m == SplitMode::canonical_homotopy ? "canonical" : "declared";
}

/// phi = vertical(dL) + phi_a.
///
/// `anti_exact_time` is the dt coefficient -dL/dt that the full anti-exact
/// form phi - dL carries; it vanishes whenever L has no explicit time
/// dependence and never enters the dynamics.
struct Decomposition {
    Expr lagrangian;
    VerticalOneForm anti_exact;
    Expr anti_exact_time;
    SplitMode mode = SplitMode::canonical_homotopy;

    GeneralOneForm anti_exact_full() const { return {anti_exact_time, anti_exact}; }
};

/// A declared split did not add back up to phi.
class SplitReconstructionError : public Error {
public:
    explicit SplitReconstructionError(VerticalOneForm residual, const Chart& chart = {})
        : Error("split reconstruction residual: " + format_residual(residual, chart)), residual_(std::move(residual)) {}

    const VerticalOneForm& residual() const { return residual_; }

    static std::string format_residual(const VerticalOneForm& r, const Chart& chart = {}) {
        std::vector<std::pair<Expr, std::string>> parts;
        for (int i = 0; i < r.dimension(); ++i) parts.emplace_back(r.F(i), format_differential(Differential::dx(i), chart));
        for (int i = 0; i < r.dimension(); ++i) parts.emplace_back(r.Pi(i), format_differential(Differential::dv(i), chart));
        return format_linear_combination(parts, chart);
    }

private:
    VerticalOneForm residual_;
};

/// Canonical split through the homotopy operator: L = H(phi), phi_a = phi - dL.
inline Decomposition decompose(const VerticalOneForm& phi, const SignalTable& signals = {}) {
    Expr L = homotopy(phi, signals);
    GeneralOneForm dL = d0(L, phi.dimension());
    // Signals stay symbolic in phi_a, so the reconstruction is structurally exact.
    return {L, phi - dL.vertical, -dL.T, SplitMode::canonical_homotopy};
}

/// Checks a physically motivated split against phi and records it.
inline Decomposition accept_user_split(const Expr& L, const VerticalOneForm& anti_exact, const VerticalOneForm& phi) {
    if (anti_exact.dimension() != phi.dimension()) throw InvalidArgument("split and form differ in dimension");
    GeneralOneForm dL = d0(L, phi.dimension());
    VerticalOneForm residual = phi - dL.vertical - anti_exact;
    if (!residual.is_zero()) throw SplitReconstructionError(residual);
    return {L, anti_exact, -dL.T, SplitMode::user_declared};
}

/// Reconstruction check: vertical(dL) + phi_a == phi, after expanding polynomial signals.
inline bool reconstructs(const Decomposition& dec, const VerticalOneForm& phi, const SignalTable& signals = {}) {
    VerticalOneForm lhs = d0(dec.lagrangian, phi.dimension()).vertical + dec.anti_exact;
    auto expand = [&](const VerticalOneForm& w) {
        std::vector<Expr> F, Pi;
        for (int i = 0; i < w.dimension(); ++i) {
            F.push_back(expand_polynomial_signals(w.F(i), signals));
            Pi.push_back(expand_polynomial_signals(w.Pi(i), signals));
        }
        return VerticalOneForm(std::move(F), std::move(Pi));
    };
    if (lhs == phi) return true;
    try {
        return expand(lhs) == expand(phi);
    } catch (const DecompositionUnsupported&) {
        return false;
    }
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline std::string format_one_form(const VerticalOneForm& w, const Chart& chart = {}) {
    return SplitReconstructionError::format_residual(w, chart);
}

inline std::string format_one_form(const GeneralOneForm& w, const Chart& chart = {}) {
    std::vector<std::pair<Expr, std::string>> parts{{w.T, "dt"}};
    for (int i = 0; i < w.vertical.dimension(); ++i)
        parts.emplace_back(w.vertical.F(i), format_differential(Differential::dx(i), chart));
    for (int i = 0; i < w.vertical.dimension(); ++i)
        parts.emplace_back(w.vertical.Pi(i), format_differential(Differential::dv(i), chart));
    return format_linear_combination(parts, chart);
}

/// "b dx∧dx' + dsig(f) dt∧dx"; vertical blocks first, dt blocks last.
inline std::string format_two_form(const TwoForm& w, const Chart& chart = {}) {
    std::vector<std::pair<Expr, std::string>> vertical, timelike;
    for (const auto& [key, c] : w.coefficients()) {
        std::string basis = format_differential(key.first, chart) + "\u2227" + format_differential(key.second, chart);
        (key.first.kind == Differential::Kind::time ? timelike : vertical).emplace_back(c, basis);
    }
    vertical.insert(vertical.end(), timelike.begin(), timelike.end());
    return format_linear_combination(vertical, chart);
}

}  // namespace jetmech
