#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "jetmech/expr.hpp"
#include "jetmech/random.hpp"

using namespace jetmech;

namespace {

const Symbol t = Symbol::time();
const Symbol x = Symbol::coordinate(0);
const Symbol v = Symbol::velocity(0);
const Symbol m = Symbol::parameter("m");
const Symbol k = Symbol::parameter("k");
const Symbol b = Symbol::parameter("b");
const Symbol c = Symbol::parameter("c");

Expr E(const Symbol& s) { return Expr(s); }

// Oracle: evaluates a raw tree directly in double arithmetic, never going
// through the canonical polynomial representation.
double eval_tree(const RawExpr& r, const NumericState& st) {
    using Op = RawExpr::Op;
    switch (r.op) {
        case Op::number: return r.value.to_double();
        case Op::symbol: return evaluate_symbol(r.symbol, st);
        case Op::add: return eval_tree(r.args[0], st) + eval_tree(r.args[1], st);
        case Op::sub: return eval_tree(r.args[0], st) - eval_tree(r.args[1], st);
        case Op::mul: return eval_tree(r.args[0], st) * eval_tree(r.args[1], st);
        case Op::div: return eval_tree(r.args[0], st) / eval_tree(r.args[1], st);
        case Op::neg: return -eval_tree(r.args[0], st);
        case Op::pow: return std::pow(eval_tree(r.args[0], st), r.exponent);
        default: throw std::logic_error("unexpected node");
    }
}

// Raw tree that rebuilds a canonical Expr term by term.
RawExpr to_raw(const Expr& e) {
    RawExpr acc = RawExpr::number(Rational(0));
    for (const auto& [mono, coeff] : e.terms()) {
        RawExpr term = RawExpr::number(coeff);
        for (const auto& [s, p] : mono) term = RawExpr::binary(RawExpr::Op::mul, term, RawExpr::power(RawExpr::sym(s), p));
        acc = RawExpr::binary(RawExpr::Op::add, acc, term);
    }
    return acc;
}

NumericState random_state(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    NumericState st;
    st.tau = u(rng);
    for (int i = 0; i < n; ++i) {
        st.x.push_back(u(rng));
        st.v.push_back(u(rng));
        st.a.push_back(u(rng));
    }
    for (const char* p : {"k", "b", "m", "c"}) st.parameters[p] = u(rng);
    return st;
}

RandomExprOptions options(int n) {
    RandomExprOptions o;
    o.n = n;
    return o;
}

}  // namespace

// ---------------------------------------------------------------------------
// normalize
// ---------------------------------------------------------------------------

TEST(Normalize, IdentityElements) {
    RawExpr tree = RawExpr::binary(RawExpr::Op::mul,
                                   RawExpr::binary(RawExpr::Op::add, RawExpr::sym(x), RawExpr::number(Rational(0))),
                                   RawExpr::number(Rational(1)));
    EXPECT_EQ(normalize(tree), E(x));
}

TEST(Normalize, Cancellation) {
    Expr zero = normalize(RawExpr::binary(RawExpr::Op::sub, RawExpr::sym(x), RawExpr::sym(x)));
    EXPECT_TRUE(zero.is_zero());
    EXPECT_TRUE(zero.terms().empty());
}

TEST(Normalize, BinomialSquare) {
    // Hand expansion: x^2 + 2xv + v^2, built term by term.
    Expr expected = Expr::term(1, {{x, 2}}) + Expr::term(2, {{x, 1}, {v, 1}}) + Expr::term(1, {{v, 2}});
    RawExpr tree = RawExpr::power(RawExpr::binary(RawExpr::Op::add, RawExpr::sym(x), RawExpr::sym(v)), 2);
    EXPECT_EQ(normalize(tree), expected);
    EXPECT_EQ(expected.terms().size(), 3U);
}

TEST(Normalize, DivisionByZeroAndNonConstantRejected) {
    EXPECT_THROW(normalize(RawExpr::binary(RawExpr::Op::div, RawExpr::sym(x), RawExpr::number(Rational(0)))),
                 InvalidArgument);
    EXPECT_THROW(normalize(RawExpr::binary(RawExpr::Op::div, RawExpr::sym(x), RawExpr::sym(v))), InvalidArgument);
}

TEST(Normalize, CoefficientOverflowIsReported) {
    RawExpr big = RawExpr::number(Rational(INT64_MAX / 2));
    EXPECT_THROW(normalize(RawExpr::power(big, 3)), OverflowError);
}

TEST(Normalize, CanonicalityProperty) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 300; ++trial) {
        RandomExprOptions o = options(2);
        RawExpr tree = random_raw_tree(rng, o, 4);
        Expr once = normalize(tree);
        EXPECT_EQ(normalize(to_raw(once)), once);
        for (int s = 0; s < 5; ++s) {
            NumericState st = random_state(rng, 2);
            double direct = eval_tree(tree, st);
            EXPECT_NEAR(evaluate(once, st), direct, 1e-9 * std::max(1.0, std::abs(direct)));
        }
    }
}

TEST(Normalize, StructurallyEqualExprsEvaluateEqual) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        RandomExprOptions o = options(2);
        RawExpr tree = random_raw_tree(rng, o, 4);
        Expr a = normalize(tree);
        Expr b2 = normalize(to_raw(a));
        ASSERT_EQ(a, b2);
        for (int s = 0; s < 100; ++s) {
            NumericState st = random_state(rng, 2);
            EXPECT_EQ(evaluate(a, st), evaluate(b2, st));
        }
    }
}

// ---------------------------------------------------------------------------
// partial
// ---------------------------------------------------------------------------

TEST(Partial, KineticEnergyGivesMomentum) {
    Expr ke = Expr::term(Rational(1, 2), {{m, 1}, {v, 2}});
    EXPECT_EQ(partial(ke, v), E(m) * E(v));
}

TEST(Partial, ParameterIsConstant) {
    EXPECT_TRUE(partial(E(c), x).is_zero());
}

TEST(Partial, PowerRule) {
    Expr e = Expr::term(1, {{x, 3}, {v, 1}});
    EXPECT_EQ(partial(e, x), Expr::term(3, {{x, 2}, {v, 1}}));
}

TEST(Partial, SignalsDifferentiateThroughTime) {
    Expr f = E(Symbol::signal("f"));
    EXPECT_EQ(partial(f, t), E(Symbol::signal("f", 1)));
    EXPECT_EQ(partial(f * f, t), Expr(2) * f * E(Symbol::signal("f", 1)));
    EXPECT_TRUE(partial(f, x).is_zero());
    EXPECT_THROW(partial(f, Symbol::signal("f")), InvalidArgument);
}

TEST(Partial, LinearityAndLeibniz) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + trial % 3;
        RandomExprOptions o = options(n);
        Expr e1 = random_expr(rng, o), e2 = random_expr(rng, o);
        for (const Symbol& s : {t, Symbol::coordinate(n - 1), Symbol::velocity(0), k}) {
            EXPECT_EQ(partial(e1 + e2, s), partial(e1, s) + partial(e2, s));
            EXPECT_EQ(partial(e1 * e2, s), partial(e1, s) * e2 + e1 * partial(e2, s));
        }
    }
}

TEST(Partial, Clairaut) {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 200; ++trial) {
        RandomExprOptions o = options(3);
        Expr e = random_expr(rng, o);
        const Symbol s1 = Symbol::coordinate(trial % 3), s2 = Symbol::velocity((trial + 1) % 3);
        EXPECT_EQ(partial(partial(e, s1), s2), partial(partial(e, s2), s1));
        EXPECT_EQ(partial(partial(e, t), s1), partial(partial(e, s1), t));
    }
}

TEST(Partial, MatchesCentralDifferences) {
    std::mt19937_64 rng(23);
    const double step = 1e-5;
    for (int trial = 0; trial < 200; ++trial) {
        RandomExprOptions o = options(2);
        Expr e = random_expr(rng, o);
        NumericState st = random_state(rng, 2);
        // d/dx0
        NumericState hi = st, lo = st;
        hi.x[0] += step;
        lo.x[0] -= step;
        double fd = (evaluate(e, hi) - evaluate(e, lo)) / (2 * step);
        double scale = 1.0 + std::abs(fd);
        EXPECT_NEAR(evaluate(partial(e, Symbol::coordinate(0)), st), fd, 1e-6 * scale);
        // d/dv1
        hi = st;
        lo = st;
        hi.v[1] += step;
        lo.v[1] -= step;
        fd = (evaluate(e, hi) - evaluate(e, lo)) / (2 * step);
        EXPECT_NEAR(evaluate(partial(e, Symbol::velocity(1)), st), fd, 1e-6 * (1.0 + std::abs(fd)));
    }
}

// ---------------------------------------------------------------------------
// substitute / evaluate
// ---------------------------------------------------------------------------

TEST(Substitute, Arithmetic) {
    Expr e = E(x).pow(2) + E(v);
    EXPECT_EQ(substitute(e, {{x, Expr(2)}, {v, Expr(3)}}), Expr(7));
}

TEST(Substitute, EmptyBindingIsIdentity) {
    std::mt19937_64 rng(31);
    Expr e = random_expr(rng, options(2));
    EXPECT_EQ(substitute(e, {}), e);
}

TEST(Substitute, ProlongationOfTSquared) {
    Expr e = E(x) * E(v);
    Expr out = substitute(e, {{x, E(t).pow(2)}, {v, Expr(2) * E(t)}});
    EXPECT_EQ(out, Expr::term(2, {{t, 3}}));
}

TEST(Substitute, IsSimultaneous) {
    Expr e = E(x) - E(v);
    EXPECT_EQ(substitute(e, {{x, E(v)}, {v, E(x)}}), E(v) - E(x));
    EXPECT_THROW(substitute(e, {{Symbol::signal("f"), Expr(1)}}), InvalidArgument);
}

TEST(Evaluate, DampedSpringForce) {
    Expr force = -(E(k) * E(x)) - E(b) * E(v);
    NumericState st;
    st.x = {1.0};
    st.v = {0.0};
    st.parameters = {{"k", 1.0}, {"b", 0.1}};
    EXPECT_DOUBLE_EQ(evaluate(force, st), -1.0);
}

TEST(Evaluate, ZeroAndSinusoid) {
    EXPECT_EQ(evaluate(Expr{}, NumericState{}), 0.0);
    SignalTable sig{{"f", ForcingSignal::sinusoid("f", 1, 2, 0)}};
    NumericState st;
    st.signals = &sig;
    EXPECT_EQ(evaluate(E(Symbol::signal("f")), st), 0.0);
    st.tau = 0.3;
    EXPECT_NEAR(evaluate(E(Symbol::signal("f", 1)), st), 2.0 * std::cos(0.6), 1e-15);
    EXPECT_NEAR(evaluate(E(Symbol::signal("f", 2)), st), -4.0 * std::sin(0.6), 1e-15);
}

TEST(Evaluate, UnboundSymbolThrows) {
    EXPECT_THROW(evaluate(E(k), NumericState{}), UnboundSymbol);
    EXPECT_THROW(evaluate(E(x), NumericState{}), UnboundSymbol);
    EXPECT_THROW(evaluate(E(Symbol::signal("f")), NumericState{}), UnboundSymbol);
}

TEST(Evaluate, CompiledMatchesInterpreted) {
    std::mt19937_64 rng(32);
    SignalTable sig{{"g", ForcingSignal::polynomial("g", {1, Rational(1, 2), -2})}};
    for (int trial = 0; trial < 100; ++trial) {
        RandomExprOptions o = options(2);
        o.signals = {"g"};
        Expr e = random_expr(rng, o);
        NumericState st = random_state(rng, 2);
        st.signals = &sig;
        CompiledExpr ce(e, st.parameters, sig);
        EXPECT_NEAR(ce(st.tau, st.x, st.v, st.a), evaluate(e, st), 1e-12 * (1 + std::abs(evaluate(e, st))));
    }
}

TEST(Signals, DerivativesStayInFamily) {
    auto p = ForcingSignal::polynomial("p", {1, 2, 3});  // 1 + 2t + 3t^2
    EXPECT_DOUBLE_EQ(p.value(2.0), 17.0);
    EXPECT_DOUBLE_EQ(p.value(2.0, 1), 14.0);
    EXPECT_DOUBLE_EQ(p.value(2.0, 2), 6.0);
    EXPECT_DOUBLE_EQ(p.value(2.0, 3), 0.0);
    EXPECT_TRUE(p.homotopy_admissible());

    auto s = ForcingSignal::sinusoid("s", Rational(3, 10), Rational(6, 5), Rational(1, 4));
    EXPECT_FALSE(s.homotopy_admissible());
    const double h = 1e-5, t0 = 0.7;
    for (int order = 0; order < 4; ++order) {
        double fd = (s.value(t0 + h, order) - s.value(t0 - h, order)) / (2 * h);
        EXPECT_NEAR(s.value(t0, order + 1), fd, 1e-8);
    }
}

// ---------------------------------------------------------------------------
// scaling_integral
// ---------------------------------------------------------------------------

TEST(ScalingIntegral, Examples) {
    EXPECT_EQ(scaling_integral(E(x).pow(2)), Expr::term(Rational(1, 3), {{x, 2}}));
    EXPECT_EQ(scaling_integral(E(c)), E(c));
    Expr e = -(E(k) * E(x).pow(2)) + E(m) * E(v).pow(2);
    Expr expected = Expr::term(Rational(-1, 3), {{k, 1}, {x, 2}}) + Expr::term(Rational(1, 3), {{m, 1}, {v, 2}});
    EXPECT_EQ(scaling_integral(e), expected);
}

TEST(ScalingIntegral, RefusesSinusoidsByName) {
    SignalTable sig{{"f", ForcingSignal::sinusoid("f", 1, 1, 0)}};
    try {
        scaling_integral(E(x) * E(Symbol::signal("f")), sig);
        FAIL() << "expected DecompositionUnsupported";
    } catch (const DecompositionUnsupported& err) {
        EXPECT_NE(std::string(err.what()).find("'f'"), std::string::npos);
    }
}

TEST(ScalingIntegral, ExpandsPolynomialSignals) {
    SignalTable sig{{"g", ForcingSignal::polynomial("g", {2, 3})}};  // g = 2 + 3t
    Expr out = scaling_integral(E(Symbol::signal("g")), sig);
    // \int_0^1 (2 + 3 s t) ds = 2 + 3t/2
    EXPECT_EQ(out, Expr(2) + Expr::term(Rational(3, 2), {{t, 1}}));
}

TEST(ScalingIntegral, MatchesQuadrature) {
    // Independent route: 8-point Gauss-Legendre of e(s * point) over [0, 1].
    static const double nodes[] = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
                                   0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
    static const double weights[] = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
                                     0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 100; ++trial) {
        RandomExprOptions o = options(2);
        Expr e = random_expr(rng, o);
        NumericState st = random_state(rng, 2);
        double quad = 0.0;
        for (int q = 0; q < 8; ++q) {
            double s = 0.5 * (nodes[q] + 1.0);
            NumericState scaled = st;
            scaled.tau *= s;
            for (auto* vec : {&scaled.x, &scaled.v, &scaled.a})
                for (double& val : *vec) val *= s;
            quad += 0.5 * weights[q] * evaluate(e, scaled);
        }
        EXPECT_NEAR(evaluate(scaling_integral(e), st), quad, 1e-10 * (1 + std::abs(quad)));
    }
}

TEST(ScalingIntegral, LinearAndExactPerMonomial) {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        RandomExprOptions o = options(3);
        Expr e1 = random_expr(rng, o), e2 = random_expr(rng, o);
        EXPECT_EQ(scaling_integral(e1 + e2), scaling_integral(e1) + scaling_integral(e2));
        for (const auto& [mono, coeff] : e1.terms()) {
            Expr monomial = Expr::term(coeff, mono);
            int d = scaling_degree(mono);
            EXPECT_EQ(scaling_integral(monomial).scaled(Rational(d + 1)), monomial);
        }
    }
}
