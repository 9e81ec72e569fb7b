#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jetmech/errors.hpp"
#include "jetmech/rational.hpp"
#include "jetmech/symbol.hpp"

namespace jetmech {

/// Sorted list of (symbol, positive exponent) pairs.
using Monomial = std::vector<std::pair<Symbol, int>>;

namespace detail {

inline Monomial multiply(const Monomial& a, const Monomial& b) {
    Monomial out;
    out.reserve(a.size() + b.size());
    auto i = a.begin();
    auto j = b.begin();
    while (i != a.end() && j != b.end()) {
        if (i->first < j->first) {
            out.push_back(*i++);
        } else if (j->first < i->first) {
            out.push_back(*j++);
        } else {
            out.emplace_back(i->first, i->second + j->second);
            ++i;
            ++j;
        }
    }
    out.insert(out.end(), i, a.end());
    out.insert(out.end(), j, b.end());
    return out;
}

inline double ipow(double base, int e) {
    double r = 1.0;
    for (int k = 0; k < e; ++k) r *= base;
    return r;
}

}  // namespace detail

/// Canonical polynomial over Symbols with exact rational coefficients.
///
/// Terms live in a map keyed by monomial, so no two terms share a power
/// product, zero coefficients are never stored, and the iteration order is
/// fixed. Two Exprs are equal iff they are the same polynomial.
class Expr {
public:
    using TermMap = std::map<Monomial, Rational>;

    Expr() = default;
    Expr(Rational c) {  // NOLINT: constants promote
        if (!c.is_zero()) terms_.emplace(Monomial{}, c);
    }
    Expr(std::int64_t c) : Expr(Rational(c)) {}  // NOLINT
    Expr(int c) : Expr(Rational(c)) {}           // NOLINT
    Expr(const Symbol& s) { terms_.emplace(Monomial{{s, 1}}, Rational(1)); }  // NOLINT

    /// c * monomial; the monomial may be unsorted or contain repeats.
    static Expr term(Rational c, Monomial m) {
        std::sort(m.begin(), m.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
        Monomial merged;
        for (auto& [s, e] : m) {
            if (e < 0) throw InvalidArgument("negative exponent in monomial");
            if (e == 0) continue;
            if (!merged.empty() && merged.back().first == s)
                merged.back().second += e;
            else
                merged.emplace_back(s, e);
        }
        Expr out;
        if (!c.is_zero()) out.terms_.emplace(std::move(merged), c);
        return out;
    }

    const TermMap& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }

    std::optional<Rational> constant_value() const {
        if (terms_.empty()) return Rational(0);
        if (terms_.size() == 1 && terms_.begin()->first.empty()) return terms_.begin()->second;
        return std::nullopt;
    }

    bool contains(SymbolKind kind) const {
        for (const auto& [m, c] : terms_)
            for (const auto& [s, e] : m)
                if (s.kind == kind) return true;
        return false;
    }

    bool depends_on(const Symbol& sym) const {
        for (const auto& [m, c] : terms_)
            for (const auto& [s, e] : m)
                if (s == sym) return true;
        return false;
    }

    std::set<Symbol> symbols() const {
        std::set<Symbol> out;
        for (const auto& [m, c] : terms_)
            for (const auto& [s, e] : m) out.insert(s);
        return out;
    }

    /// One past the largest coordinate/velocity/acceleration index used (0 if none).
    int index_bound() const {
        int bound = 0;
        for (const auto& [m, c] : terms_)
            for (const auto& [s, e] : m)
                if (s.is_indexed()) bound = std::max(bound, s.index + 1);
        return bound;
    }

    /// Largest total exponent over all terms; -1 for the zero polynomial.
    int degree() const {
        int d = -1;
        for (const auto& [m, c] : terms_) {
            int td = 0;
            for (const auto& [s, e] : m) td += e;
            d = std::max(d, td);
        }
        return d;
    }

    friend Expr operator+(Expr a, const Expr& b) {
        a += b;
        return a;
    }
    Expr& operator+=(const Expr& o) {
        for (const auto& [m, c] : o.terms_) add_term(m, c);
        return *this;
    }
    friend Expr operator-(Expr a, const Expr& b) {
        a -= b;
        return a;
    }
    Expr& operator-=(const Expr& o) {
        for (const auto& [m, c] : o.terms_) add_term(m, -c);
        return *this;
    }
    Expr operator-() const {
        Expr out;
        for (const auto& [m, c] : terms_) out.terms_.emplace(m, -c);
        return out;
    }
    friend Expr operator*(const Expr& a, const Expr& b) {
        Expr out;
        for (const auto& [ma, ca] : a.terms_)
            for (const auto& [mb, cb] : b.terms_) out.add_term(detail::multiply(ma, mb), ca * cb);
        return out;
    }
    Expr& operator*=(const Expr& o) { return *this = *this * o; }

    Expr scaled(const Rational& r) const {
        Expr out;
        if (r.is_zero()) return out;
        for (const auto& [m, c] : terms_) out.terms_.emplace(m, c * r);
        return out;
    }

    Expr pow(unsigned e) const {
        Expr result(1);
        Expr base = *this;
        while (e != 0) {
            if (e & 1U) result = result * base;
            e >>= 1U;
            if (e != 0) base = base * base;
        }
        return result;
    }

    friend bool operator==(const Expr&, const Expr&) = default;

private:
    void add_term(const Monomial& m, const Rational& c) {
        if (c.is_zero()) return;
        auto [it, inserted] = terms_.try_emplace(m, c);
        if (!inserted) {
            it->second += c;
            if (it->second.is_zero()) terms_.erase(it);
        }
    }

    TermMap terms_;
};

// ---------------------------------------------------------------------------
// Raw expression trees
// ---------------------------------------------------------------------------

/// 1-based position in some source text.
struct SourcePos {
    int line = 0;
    int column = 0;
};

/// Unnormalized expression tree, as produced by the parser or built by hand.
///
/// Leaves are numbers, resolved Symbols, unresolved identifiers (`name`,
/// with the number of primes that followed it) or signal references.
struct RawExpr {
    enum class Op { number, symbol, name, signal_ref, add, sub, mul, div, neg, pow };

    Op op = Op::number;
    Rational value;
    Symbol symbol;
    std::string name;
    int primes = 0;    // name: 0 coordinate, 1 velocity, 2 acceleration; signal_ref: derivative order
    int exponent = 0;  // pow
    std::vector<RawExpr> args;
    SourcePos pos;

    static RawExpr number(Rational r) {
        RawExpr e;
        e.op = Op::number;
        e.value = r;
        return e;
    }
    static RawExpr sym(Symbol s) {
        RawExpr e;
        e.op = Op::symbol;
        e.symbol = std::move(s);
        return e;
    }
    static RawExpr binary(Op op, RawExpr l, RawExpr r) {
        RawExpr e;
        e.op = op;
        e.args.push_back(std::move(l));
        e.args.push_back(std::move(r));
        return e;
    }
    static RawExpr negate(RawExpr a) {
        RawExpr e;
        e.op = Op::neg;
        e.args.push_back(std::move(a));
        return e;
    }
    static RawExpr power(RawExpr a, int exponent) {
        RawExpr e;
        e.op = Op::pow;
        e.exponent = exponent;
        e.args.push_back(std::move(a));
        return e;
    }
};

/// Maps a `name` or `signal_ref` leaf to a Symbol (or throws).
using Resolver = std::function<Symbol(const RawExpr&)>;

/// Canonical form of a raw tree. Idempotent through Expr.
inline Expr normalize(const RawExpr& raw, const Resolver& resolve = {}) {
    using Op = RawExpr::Op;
    switch (raw.op) {
        case Op::number: return Expr(raw.value);
        case Op::symbol: return Expr(raw.symbol);
        case Op::name:
        case Op::signal_ref:
            if (!resolve) {
                if (raw.op == Op::signal_ref) return Expr(Symbol::signal(raw.name, raw.primes));
                throw InvalidArgument("unresolved identifier '" + raw.name + "'");
            }
            return Expr(resolve(raw));
        case Op::add: return normalize(raw.args.at(0), resolve) + normalize(raw.args.at(1), resolve);
        case Op::sub: return normalize(raw.args.at(0), resolve) - normalize(raw.args.at(1), resolve);
        case Op::mul: return normalize(raw.args.at(0), resolve) * normalize(raw.args.at(1), resolve);
        case Op::div: {
            Expr divisor = normalize(raw.args.at(1), resolve);
            auto c = divisor.constant_value();
            if (!c) throw InvalidArgument("division is only allowed by numeric constants");
            if (c->is_zero()) throw InvalidArgument("division by zero");
            return normalize(raw.args.at(0), resolve).scaled(Rational(1) / *c);
        }
        case Op::neg: return -normalize(raw.args.at(0), resolve);
        case Op::pow:
            if (raw.exponent < 0) throw InvalidArgument("negative exponent");
            return normalize(raw.args.at(0), resolve).pow(static_cast<unsigned>(raw.exponent));
    }
    throw InvalidArgument("unknown raw expression node");
}

// ---------------------------------------------------------------------------
// Calculus and substitution
// ---------------------------------------------------------------------------

/// Exact partial derivative with respect to a non-signal symbol.
///
/// Signals are functions of time: differentiating with respect to time maps
/// a signal factor f^(k) to f^(k+1) by the chain rule.
inline Expr partial(const Expr& e, const Symbol& s) {
    if (s.kind == SymbolKind::signal)
        throw InvalidArgument("cannot differentiate with respect to signal '" + s.name + "'; signals depend on time only");
    const bool wrt_time = s.kind == SymbolKind::time;
    Expr out;
    for (const auto& [m, c] : e.terms()) {
        for (std::size_t k = 0; k < m.size(); ++k) {
            const auto& [sym, exp] = m[k];
            const bool direct = sym == s;
            const bool chained = wrt_time && sym.kind == SymbolKind::signal;
            if (!direct && !chained) continue;
            Monomial rest = m;
            if (exp == 1)
                rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(k));
            else
                rest[k].second -= 1;
            Rational coeff = c * Rational(exp);
            if (chained) {
                rest.emplace_back(Symbol::signal(sym.name, sym.derivative + 1), 1);
                out += Expr::term(coeff, std::move(rest));
            } else {
                out += Expr::term(coeff, std::move(rest));
            }
        }
    }
    return out;
}

using Substitution = std::map<Symbol, Expr>;

/// Simultaneous substitution of symbols by expressions.
inline Expr substitute(const Expr& e, const Substitution& binding) {
    if (binding.empty()) return e;
    for (const auto& [s, v] : binding)
        if (s.kind == SymbolKind::signal) throw InvalidArgument("cannot substitute for signal '" + s.name + "'");
    Expr out;
    for (const auto& [m, c] : e.terms()) {
        Expr product(c);
        Monomial kept;
        for (const auto& [s, exp] : m) {
            auto it = binding.find(s);
            if (it == binding.end())
                kept.emplace_back(s, exp);
            else
                product = product * it->second.pow(static_cast<unsigned>(exp));
        }
        out += product * Expr::term(Rational(1), std::move(kept));
    }
    return out;
}

/// Numeric values for every kind of symbol.
struct NumericState {
    double tau = 0.0;
    std::vector<double> x;
    std::vector<double> v;
    std::vector<double> a;
    std::map<std::string, double> parameters;
    const SignalTable* signals = nullptr;
};

inline double evaluate_symbol(const Symbol& s, const NumericState& st) {
    auto pick = [&](const std::vector<double>& values, const char* what) {
        if (s.index < 0 || static_cast<std::size_t>(s.index) >= values.size())
            throw UnboundSymbol(std::string("unbound ") + what + " index " + std::to_string(s.index));
        return values[static_cast<std::size_t>(s.index)];
    };
    switch (s.kind) {
        case SymbolKind::time: return st.tau;
        case SymbolKind::coordinate: return pick(st.x, "coordinate");
        case SymbolKind::velocity: return pick(st.v, "velocity");
        case SymbolKind::acceleration: return pick(st.a, "acceleration");
        case SymbolKind::parameter: {
            auto it = st.parameters.find(s.name);
            if (it == st.parameters.end()) throw UnboundSymbol("unbound parameter '" + s.name + "'");
            return it->second;
        }
        case SymbolKind::signal: {
            if (st.signals == nullptr) throw UnboundSymbol("unbound signal '" + s.name + "'");
            auto it = st.signals->find(s.name);
            if (it == st.signals->end()) throw UnboundSymbol("unbound signal '" + s.name + "'");
            return it->second.value(st.tau, s.derivative);
        }
    }
    throw UnboundSymbol("unknown symbol kind");
}

/// Double-precision value of e; every symbol must be bound.
inline double evaluate(const Expr& e, const NumericState& st) {
    double total = 0.0;
    for (const auto& [m, c] : e.terms()) {
        double t = c.to_double();
        for (const auto& [s, exp] : m) t *= detail::ipow(evaluate_symbol(s, st), exp);
        total += t;
    }
    return total;
}

/// Polynomial c0 + c1*t + ... as an Expr in the time symbol.
inline Expr time_polynomial(const std::vector<Rational>& coefficients) {
    Expr out;
    for (std::size_t k = 0; k < coefficients.size(); ++k)
        out += Expr::term(coefficients[k], k == 0 ? Monomial{} : Monomial{{Symbol::time(), static_cast<int>(k)}});
    return out;
}

/// Replaces every polynomial signal by its expansion in t.
///
/// Throws DecompositionUnsupported naming the first sinusoid signal found.
inline Expr expand_polynomial_signals(const Expr& e, const SignalTable& signals) {
    if (!e.contains(SymbolKind::signal)) return e;
    Expr out;
    for (const auto& [m, c] : e.terms()) {
        Expr product(c);
        Monomial kept;
        for (const auto& [s, exp] : m) {
            if (s.kind != SymbolKind::signal) {
                kept.emplace_back(s, exp);
                continue;
            }
            auto it = signals.find(s.name);
            if (it == signals.end())
                throw DecompositionUnsupported("signal '" + s.name + "' is not registered");
            if (!it->second.homotopy_admissible())
                throw DecompositionUnsupported("homotopy decomposition requires polynomial signals; '" + s.name +
                                               "' is a sinusoid");
            auto shape = std::get<PolynomialShape>(it->second.derivative_shape(s.derivative));
            product = product * time_polynomial(shape.coefficients).pow(static_cast<unsigned>(exp));
        }
        out += product * Expr::term(Rational(1), std::move(kept));
    }
    return out;
}

/// Sum of exponents of time and jet coordinates (parameters are not scaled).
inline int scaling_degree(const Monomial& m) {
    int d = 0;
    for (const auto& [s, e] : m)
        if (s.is_jet()) d += e;
    return d;
}

/// \int_0^1 e(s*point) ds, where t, x, x' and x'' are all scaled by s.
///
/// Polynomial signals are expanded first; a term of scaling degree d then
/// picks up the factor 1/(d+1).
inline Expr scaling_integral(const Expr& e, const SignalTable& signals = {}) {
    Expr expanded = expand_polynomial_signals(e, signals);
    Expr out;
    for (const auto& [m, c] : expanded.terms())
        out += Expr::term(c / Rational(scaling_degree(m) + 1), m);
    return out;
}

// ---------------------------------------------------------------------------
// Fast numeric evaluation
// ---------------------------------------------------------------------------

/// An Expr with parameters folded into double coefficients, for evaluation
/// inside integrator loops.
class CompiledExpr {
public:
    CompiledExpr() = default;
    CompiledExpr(const Expr& e, const std::map<std::string, double>& parameters, const SignalTable& signals) {
        for (const auto& [m, c] : e.terms()) {
            Term t;
            t.coefficient = c.to_double();
            for (const auto& [s, exp] : m) {
                if (s.kind == SymbolKind::parameter) {
                    auto it = parameters.find(s.name);
                    if (it == parameters.end()) throw UnboundSymbol("unbound parameter '" + s.name + "'");
                    t.coefficient *= detail::ipow(it->second, exp);
                } else if (s.kind == SymbolKind::signal) {
                    auto it = signals.find(s.name);
                    if (it == signals.end()) throw UnboundSymbol("unbound signal '" + s.name + "'");
                    t.factors.push_back({s.kind, static_cast<int>(signals_.size()), s.derivative, exp});
                    signals_.push_back(it->second);
                } else {
                    t.factors.push_back({s.kind, s.index, 0, exp});
                }
            }
            terms_.push_back(std::move(t));
        }
    }

    double operator()(double tau, std::span<const double> x, std::span<const double> v,
                      std::span<const double> a = {}) const {
        double total = 0.0;
        for (const auto& t : terms_) {
            double p = t.coefficient;
            for (const auto& f : t.factors) {
                double base = 0.0;
                switch (f.kind) {
                    case SymbolKind::time: base = tau; break;
                    case SymbolKind::coordinate: base = at(x, f.slot, "coordinate"); break;
                    case SymbolKind::velocity: base = at(v, f.slot, "velocity"); break;
                    case SymbolKind::acceleration: base = at(a, f.slot, "acceleration"); break;
                    case SymbolKind::signal:
                        base = signals_[static_cast<std::size_t>(f.slot)].value(tau, f.derivative);
                        break;
                    case SymbolKind::parameter: break;
                }
                p *= detail::ipow(base, f.exponent);
            }
            total += p;
        }
        return total;
    }

private:
    struct Factor {
        SymbolKind kind;
        int slot;
        int derivative;
        int exponent;
    };
    struct Term {
        double coefficient = 0.0;
        std::vector<Factor> factors;
    };

    static double at(std::span<const double> values, int i, const char* what) {
        if (i < 0 || static_cast<std::size_t>(i) >= values.size())
            throw UnboundSymbol(std::string("unbound ") + what + " index " + std::to_string(i));
        return values[static_cast<std::size_t>(i)];
    }

    std::vector<Term> terms_;
    std::vector<ForcingSignal> signals_;
};

}  // namespace jetmech
