#pragma once

#include <cmath>
#include <compare>
#include <map>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "jetmech/errors.hpp"
#include "jetmech/rational.hpp"

namespace jetmech {

/// Kinds of symbols, in canonical order. The first four are jet coordinates
/// (scaled by the radius field); parameters and signals are not.
enum class SymbolKind : int { time = 0, coordinate, velocity, acceleration, signal, parameter };

/// A variable of a symbolic expression.
///
/// Coordinates, velocities and accelerations carry an index into the
/// system's chart; parameters carry a name; a signal carries the name of a
/// forcing signal together with how many times it has been differentiated
/// in time (0 for f itself, 1 for f', ...).
struct Symbol {
    SymbolKind kind = SymbolKind::time;
    int index = 0;
    std::string name;
    int derivative = 0;

    static Symbol time() { return {SymbolKind::time, 0, {}, 0}; }
    static Symbol coordinate(int i) { return {SymbolKind::coordinate, i, {}, 0}; }
    static Symbol velocity(int i) { return {SymbolKind::velocity, i, {}, 0}; }
    static Symbol acceleration(int i) { return {SymbolKind::acceleration, i, {}, 0}; }
    static Symbol parameter(std::string n) { return {SymbolKind::parameter, 0, std::move(n), 0}; }
    static Symbol signal(std::string n, int order = 0) { return {SymbolKind::signal, 0, std::move(n), order}; }

    bool is_jet() const { return kind <= SymbolKind::acceleration; }
    bool is_indexed() const {
        return kind == SymbolKind::coordinate || kind == SymbolKind::velocity || kind == SymbolKind::acceleration;
    }

    friend bool operator==(const Symbol&, const Symbol&) = default;
    friend std::strong_ordering operator<=>(const Symbol& a, const Symbol& b) {
        if (auto c = a.kind <=> b.kind; c != 0) return c;
        if (auto c = a.index <=> b.index; c != 0) return c;
        if (auto c = a.name.compare(b.name); c != 0) return c < 0 ? std::strong_ordering::less : std::strong_ordering::greater;
        return a.derivative <=> b.derivative;
    }
};

/// c0 + c1*t + c2*t^2 + ...
struct PolynomialShape {
    std::vector<Rational> coefficients;
};

/// amplitude * sin(frequency*t + phase + quarter_turns*pi/2)
struct SinusoidShape {
    Rational amplitude;
    Rational frequency;
    Rational phase;
    int quarter_turns = 0;
};

/// An opaque forcing function of time from one of two closed families.
///
/// Derivatives stay in the family: a polynomial differentiates to a
/// polynomial and a sinusoid to a sinusoid shifted by a quarter turn.
class ForcingSignal {
public:
    using Shape = std::variant<PolynomialShape, SinusoidShape>;

    ForcingSignal() = default;
    ForcingSignal(std::string name, Shape shape) : name_(std::move(name)), shape_(std::move(shape)) {}

    static ForcingSignal polynomial(std::string name, std::vector<Rational> coefficients) {
        return {std::move(name), PolynomialShape{std::move(coefficients)}};
    }
    static ForcingSignal sinusoid(std::string name, Rational amplitude, Rational frequency, Rational phase) {
        return {std::move(name), SinusoidShape{amplitude, frequency, phase, 0}};
    }

    const std::string& name() const { return name_; }
    const Shape& shape() const { return shape_; }

    bool is_polynomial() const { return std::holds_alternative<PolynomialShape>(shape_); }
    /// Only polynomial signals admit a closed-form homotopy integral.
    bool homotopy_admissible() const { return is_polynomial(); }

    /// Shape of the k-th time derivative.
    Shape derivative_shape(int order) const {
        if (order < 0) throw InvalidArgument("negative signal derivative order");
        if (const auto* p = std::get_if<PolynomialShape>(&shape_)) {
            std::vector<Rational> c = p->coefficients;
            for (int k = 0; k < order && !c.empty(); ++k) {
                std::vector<Rational> next;
                for (std::size_t j = 1; j < c.size(); ++j) next.push_back(c[j] * Rational(static_cast<std::int64_t>(j)));
                c = std::move(next);
            }
            return PolynomialShape{std::move(c)};
        }
        SinusoidShape s = std::get<SinusoidShape>(shape_);
        s.amplitude = s.amplitude * s.frequency.pow(static_cast<unsigned>(order));
        s.quarter_turns = (s.quarter_turns + order) % 4;
        return s;
    }

    /// Value of the k-th time derivative at t.
    double value(double t, int order = 0) const {
        Shape d = derivative_shape(order);
        if (const auto* p = std::get_if<PolynomialShape>(&d)) {
            double acc = 0.0;
            for (auto it = p->coefficients.rbegin(); it != p->coefficients.rend(); ++it) acc = acc * t + it->to_double();
            return acc;
        }
        const auto& s = std::get<SinusoidShape>(d);
        double arg = s.frequency.to_double() * t + s.phase.to_double();
        switch (s.quarter_turns) {
            case 0: return s.amplitude.to_double() * std::sin(arg);
            case 1: return s.amplitude.to_double() * std::cos(arg);
            case 2: return -s.amplitude.to_double() * std::sin(arg);
            default: return -s.amplitude.to_double() * std::cos(arg);
        }
    }

private:
    std::string name_;
    Shape shape_ = PolynomialShape{};
};

/// Registered forcing signals, by name.
using SignalTable = std::map<std::string, ForcingSignal>;

}  // namespace jetmech
