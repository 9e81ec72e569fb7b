#pragma once

#include <random>
#include <string>
#include <vector>

#include "jetmech/expr.hpp"
#include "jetmech/forms.hpp"

namespace jetmech {

/// Shape of randomly generated polynomials for property checks.
struct RandomExprOptions {
    int n = 1;
    int max_degree = 4;
    int max_terms = 5;
    bool time = true;
    bool velocities = true;
    std::vector<std::string> parameters{"k", "b", "m"};
    std::vector<std::string> signals;  // names of polynomial signals to sprinkle in
    int coefficient_range = 5;
};

namespace detail {

inline Symbol random_variable(std::mt19937_64& rng, const RandomExprOptions& o) {
    std::vector<Symbol> pool;
    if (o.time) pool.push_back(Symbol::time());
    for (int i = 0; i < o.n; ++i) {
        pool.push_back(Symbol::coordinate(i));
        if (o.velocities) pool.push_back(Symbol::velocity(i));
    }
    for (const auto& p : o.parameters) pool.push_back(Symbol::parameter(p));
    for (const auto& s : o.signals) pool.push_back(Symbol::signal(s));
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    return pool[pick(rng)];
}

inline Rational random_coefficient(std::mt19937_64& rng, int range) {
    std::uniform_int_distribution<int> num(-range, range), den(1, 3);
    int a = 0;
    while (a == 0) a = num(rng);
    return Rational(a, den(rng));
}

}  // namespace detail

/// Random polynomial with at most `max_terms` terms of degree <= max_degree.
inline Expr random_expr(std::mt19937_64& rng, const RandomExprOptions& o) {
    std::uniform_int_distribution<int> terms(0, o.max_terms), degree(0, o.max_degree);
    Expr out;
    const int count = terms(rng);
    for (int t = 0; t < count; ++t) {
        Monomial m;
        const int d = degree(rng);
        for (int k = 0; k < d; ++k) m.emplace_back(detail::random_variable(rng, o), 1);
        out += Expr::term(detail::random_coefficient(rng, o.coefficient_range), std::move(m));
    }
    return out;
}

/// Random vertical one-form with every coefficient drawn by random_expr.
inline VerticalOneForm random_one_form(std::mt19937_64& rng, const RandomExprOptions& o) {
    std::vector<Expr> F, Pi;
    for (int i = 0; i < o.n; ++i) {
        F.push_back(random_expr(rng, o));
        Pi.push_back(random_expr(rng, o));
    }
    return {std::move(F), std::move(Pi)};
}

/// Random unnormalized tree over Symbol leaves, with identity elements,
/// cancellations, negations, divisions and small powers mixed in.
inline RawExpr random_raw_tree(std::mt19937_64& rng, const RandomExprOptions& o, int depth) {
    std::uniform_int_distribution<int> choice(0, depth <= 0 ? 1 : 7);
    switch (choice(rng)) {
        case 0: return RawExpr::number(detail::random_coefficient(rng, o.coefficient_range));
        case 1: return RawExpr::sym(detail::random_variable(rng, o));
        case 2:
            return RawExpr::binary(RawExpr::Op::add, random_raw_tree(rng, o, depth - 1), random_raw_tree(rng, o, depth - 1));
        case 3:
            return RawExpr::binary(RawExpr::Op::sub, random_raw_tree(rng, o, depth - 1), random_raw_tree(rng, o, depth - 1));
        case 4:
            return RawExpr::binary(RawExpr::Op::mul, random_raw_tree(rng, o, depth - 1), random_raw_tree(rng, o, depth - 1));
        case 5: return RawExpr::negate(random_raw_tree(rng, o, depth - 1));
        case 6: {
            std::uniform_int_distribution<int> e(0, 2);
            return RawExpr::power(random_raw_tree(rng, o, depth - 1), e(rng));
        }
        default:
            return RawExpr::binary(RawExpr::Op::div, random_raw_tree(rng, o, depth - 1),
                                   RawExpr::number(detail::random_coefficient(rng, o.coefficient_range)));
    }
}

}  // namespace jetmech
