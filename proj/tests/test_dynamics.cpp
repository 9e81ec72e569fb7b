#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "jetmech/dynamics.hpp"

using namespace jetmech;

namespace {

const Symbol t = Symbol::time();
const Symbol x = Symbol::coordinate(0);
const Symbol v = Symbol::velocity(0);
const Symbol m = Symbol::parameter("m");
const Symbol k = Symbol::parameter("k");
const Symbol b = Symbol::parameter("b");
const Symbol f = Symbol::signal("f");

Expr E(const Symbol& s) { return Expr(s); }

VerticalOneForm one_dim(Expr F, Expr Pi) { return VerticalOneForm({std::move(F)}, {std::move(Pi)}); }

VerticalOneForm damped_phi() { return one_dim(-(E(k) * E(x)) - E(b) * E(v) + E(f), E(m) * E(v)); }
VerticalOneForm ho_phi() { return one_dim(-(E(k) * E(x)), E(m) * E(v)); }

Expr ho_lagrangian() {
    return Expr::term(Rational(1, 2), {{m, 1}, {v, 2}}) - Expr::term(Rational(1, 2), {{k, 1}, {x, 2}});
}

SignalTable zero_forcing() { return {{"f", ForcingSignal::polynomial("f", {})}}; }
SignalTable sine_forcing() { return {{"f", ForcingSignal::sinusoid("f", Rational(3, 10), Rational(6, 5), 0)}}; }

ExplicitODE ode_for(const VerticalOneForm& phi, const ParameterValues& p, const SignalTable& s = {}) {
    return assemble_explicit(dual_spencer(phi), p, s);
}

double underdamped(double tau) {
    const double wd = std::sqrt(1.0 - 1.0 / 400.0);
    return std::exp(-tau / 20) * (std::cos(wd * tau) + std::sin(wd * tau) / (20 * wd));
}

double max_error_vs_cos(double h) {
    Trajectory tr = integrate(ode_for(ho_phi(), {{"m", 1}, {"k", 1}}), {1}, {0}, 0, 10, h);
    double e = 0;
    for (std::size_t i = 0; i < tr.size(); ++i) e = std::max(e, std::abs(tr.section.x[i][0] - std::cos(tr.section.tau[i])));
    return e;
}

}  // namespace

// ---------------------------------------------------------------------------
// assemble_explicit
// ---------------------------------------------------------------------------

TEST(AssembleExplicit, DampedOscillatorAcceleration) {
    ParameterValues p{{"m", 2}, {"k", 3}, {"b", 0.5}};
    SignalTable sig = sine_forcing();
    ExplicitODE ode = ode_for(damped_phi(), p, sig);
    std::vector<double> xs{0.7}, vs{-0.4};
    const double tau = 1.3;
    double expected = (-3 * 0.7 - 0.5 * -0.4 + 0.3 * std::sin(1.2 * tau)) / 2;
    EXPECT_NEAR(ode.acceleration(tau, xs, vs)[0], expected, 1e-15);
}

TEST(AssembleExplicit, MasslessSystemIsSingular) {
    ExplicitODE ode = ode_for(one_dim(-(E(k) * E(x)), Expr{}), {{"k", 1}});
    std::vector<double> xs{1}, vs{0};
    EXPECT_THROW(ode.acceleration(0, xs, vs), SingularMass);
    try {
        ode.acceleration(0.5, xs, vs);
    } catch (const SingularMass& e) {
        EXPECT_NE(std::string(e.what()).find("t=0.5"), std::string::npos);
    }
}

TEST(AssembleExplicit, TwoDimensionalLinearSolve) {
    const Symbol y = Symbol::coordinate(1), vy = Symbol::velocity(1);
    VerticalOneForm phi({-E(x), -E(x) - E(vy)}, {Expr(2) * E(v), Expr(2) * E(vy)});
    ExplicitODE ode = ode_for(phi, {});
    std::vector<double> xs{0.3, -1.1}, vs{0.2, 0.9};
    auto acc = ode.acceleration(0, xs, vs);
    EXPECT_NEAR(acc[0], -0.15, 1e-15);
    EXPECT_NEAR(acc[1], 0.5 * (-0.3 - 0.9), 1e-15);
    (void)y;
}

TEST(AssembleExplicit, CoupledMassMatrixNeedsPivoting) {
    // Pi = (v1, v0 + v1): M = [[0, 1], [1, 1]] has a zero leading pivot.
    const Symbol vy = Symbol::velocity(1);
    VerticalOneForm phi({Expr(1), Expr(2)}, {E(vy), E(v) + E(vy)});
    auto acc = ode_for(phi, {}).acceleration(0, std::vector<double>{0, 0}, std::vector<double>{0, 0});
    // a1 = 1, a0 + a1 = 2
    EXPECT_NEAR(acc[0], 1.0, 1e-15);
    EXPECT_NEAR(acc[1], 1.0, 1e-15);
}

// ---------------------------------------------------------------------------
// integrate
// ---------------------------------------------------------------------------

TEST(Integrate, HarmonicOscillatorAtPi) {
    ExplicitODE ode = ode_for(ho_phi(), {{"m", 1}, {"k", 1}});
    Trajectory tr = integrate(ode, {1}, {0}, 0, std::numbers::pi, 1e-3);
    EXPECT_NEAR(tr.section.tau.back(), std::numbers::pi, 1e-3);
    // The grid ends one partial step past pi; compare against the closed form there.
    EXPECT_NEAR(tr.section.x.back()[0], std::cos(tr.section.tau.back()), 1e-8);
    Trajectory exact = integrate(ode, {1}, {0}, 0, 3.0, 1e-3);
    EXPECT_NEAR(exact.section.x.back()[0], std::cos(3.0), 1e-8);
}

TEST(Integrate, FixedPointStaysPut) {
    ExplicitODE ode = ode_for(one_dim(Expr{}, E(m) * E(v)), {{"m", 1}});
    for (Method method : {Method::rk4, Method::rkf45}) {
        Trajectory tr = integrate(ode, {0.25}, {0}, 0, 5, 1e-2, method);
        for (const auto& xs : tr.section.x) EXPECT_EQ(xs[0], 0.25);
    }
}

TEST(Integrate, UnderdampedClosedForm) {
    ParameterValues p{{"m", 1}, {"k", 1}, {"b", 0.1}};
    for (Method method : {Method::rk4, Method::rkf45}) {
        Trajectory tr = integrate(ode_for(damped_phi(), p, zero_forcing()), {1}, {0}, 0, 10, 1e-3, method);
        ASSERT_EQ(tr.size(), 10001U);
        double err = 0;
        for (std::size_t i = 0; i < tr.size(); ++i)
            err = std::max(err, std::abs(tr.section.x[i][0] - underdamped(tr.section.tau[i])));
        EXPECT_LE(err, 1e-6) << to_string(method);
        EXPECT_FALSE(tr.truncated);
    }
}

TEST(Integrate, Rk4IsFourthOrder) {
    double ratio = max_error_vs_cos(0.1) / max_error_vs_cos(0.05);
    EXPECT_GE(ratio, 14.0);
    EXPECT_LE(ratio, 18.0);
}

TEST(Integrate, BlowUpTruncatesAndKeepsPrefix) {
    // x'' = x'^2 from x' = 1 blows up at t = 1.
    ExplicitODE ode = ode_for(one_dim(E(v).pow(2), E(v)), {});
    Trajectory tr = integrate(ode, {0}, {1}, 0, 2, 1e-3);
    EXPECT_TRUE(tr.truncated);
    EXPECT_GT(tr.size(), 900U);
    EXPECT_LT(tr.section.tau.back(), 1.01);
    for (const auto& vs : tr.section.v) EXPECT_TRUE(std::isfinite(vs[0]));
}

TEST(Integrate, RejectsBadArguments) {
    ExplicitODE ode = ode_for(ho_phi(), {{"m", 1}, {"k", 1}});
    EXPECT_THROW(integrate(ode, {1}, {0}, 0, 1, 0), InvalidArgument);
    EXPECT_THROW(integrate(ode, {1}, {0}, 1, 1, 0.1), InvalidArgument);
    EXPECT_THROW(integrate(ode, {1, 2}, {0}, 0, 1, 0.1), InvalidArgument);
}

TEST(Integrate, SingularMassAtStartPropagates) {
    ExplicitODE ode = ode_for(one_dim(-E(x), Expr{}), {});
    EXPECT_THROW(integrate(ode, {1}, {0}, 0, 1, 0.1), SingularMass);
}

TEST(Integrate, SingularMassMidRunTruncates) {
    // Pi = x v: mass x vanishes when x reaches 0 moving at unit speed.
    ExplicitODE ode = ode_for(one_dim(E(v).pow(2), E(x) * E(v)), {});
    Trajectory tr = integrate(ode, {1}, {-1}, 0, 2, 0.25);
    EXPECT_TRUE(tr.truncated);
    EXPECT_NE(tr.truncation_reason.find("singular mass"), std::string::npos);
}

TEST(Integrate, SpencerResidualOfTrajectoriesIsSecondOrder) {
    ExplicitODE ode = ode_for(damped_phi(), {{"m", 1}, {"k", 1}, {"b", 0.1}}, sine_forcing());
    double r1 = max_abs(spencer_residual(integrate(ode, {1}, {0}, 0, 10, 0.02).section));
    double r2 = max_abs(spencer_residual(integrate(ode, {1}, {0}, 0, 10, 0.01).section));
    EXPECT_GE(r1 / r2, 3.5);
}

// ---------------------------------------------------------------------------
// oracle comparison
// ---------------------------------------------------------------------------

TEST(OracleCompare, DampedDrivenAndNegativeControl) {
    ParameterValues p{{"m", 1}, {"k", 1}, {"b", 0.1}};
    SignalTable sig = sine_forcing();
    ExplicitODE oracle = newton_oracle({-(E(k) * E(x)) - E(b) * E(v) + E(f)}, {E(m)}, p, sig);
    OracleReport same = oracle_compare(ode_for(damped_phi(), p, sig), oracle, {1}, {0}, 0, 20, 1e-3);
    EXPECT_EQ(same.samples, 20001U);
    EXPECT_LE(same.max_divergence, 1e-10);

    VerticalOneForm corrupted = damped_phi() + one_dim(-E(x), Expr{});
    OracleReport bad = oracle_compare(ode_for(corrupted, p, sig), oracle, {1}, {0}, 0, 20, 1e-3);
    EXPECT_GT(bad.max_divergence, 1e-3);
}

// ---------------------------------------------------------------------------
// energy audit
// ---------------------------------------------------------------------------

TEST(EnergyAudit, ConservativeOscillator) {
    ParameterValues p{{"m", 1}, {"k", 1}};
    Trajectory tr = integrate(ode_for(ho_phi(), p), {1}, {0}, 0, 100, 1e-3);
    BalanceReport rep = energy_audit(tr, decompose(ho_phi()), p);
    EXPECT_EQ(rep.energy.size(), tr.size());
    EXPECT_LE(rep.max_residual, 1e-6);
    EXPECT_LE(rep.relative_drift, 1e-9);
}

TEST(EnergyAudit, DampedOscillatorDissipates) {
    ParameterValues p{{"m", 1}, {"k", 1}, {"b", 0.1}};
    SignalTable sig = zero_forcing();
    Trajectory tr = integrate(ode_for(damped_phi(), p, sig), {1}, {0}, 0, 20, 1e-3);
    Decomposition dec = accept_user_split(ho_lagrangian(), one_dim(-(E(b) * E(v)) + E(f), Expr{}), damped_phi());
    BalanceReport rep = energy_audit(tr, dec, p, sig);
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const double vel = tr.section.v[i][0];
        EXPECT_NEAR(rep.power[i], -0.1 * vel * vel, 1e-15);
        EXPECT_LE(std::abs(rep.residual[i]), 1e-6);
        if (i) {
            EXPECT_LE(rep.energy[i], rep.energy[i - 1] + 1e-15);
        }
    }
}

TEST(EnergyAudit, DrivenOscillatorPowerIdentity) {
    ParameterValues p{{"m", 1}, {"k", 1}, {"b", 0.1}};
    SignalTable sig = sine_forcing();
    Trajectory tr = integrate(ode_for(damped_phi(), p, sig), {1}, {0}, 0, 20, 1e-3);
    Decomposition dec = accept_user_split(ho_lagrangian(), one_dim(-(E(b) * E(v)) + E(f), Expr{}), damped_phi());
    BalanceReport rep = energy_audit(tr, dec, p, sig);
    std::vector<double> dE = differentiate_samples(rep.energy, tr.h);
    for (std::size_t i = 0; i < tr.size(); ++i) {
        const double vel = tr.section.v[i][0];
        const double hand = (-0.1 * vel + 0.3 * std::sin(1.2 * tr.section.tau[i])) * vel;
        EXPECT_LE(std::abs(dE[i] - hand), 1e-6);
    }
    EXPECT_LE(rep.max_residual, 1e-6);
}

TEST(EnergyAudit, RefusesMomentumAntiExactPart) {
    ParameterValues p{{"m", 1}, {"k", 1}, {"b", 0.2}};
    VerticalOneForm phi = one_dim(-(E(k) * E(x)) - E(b) * E(v), E(m) * E(v));
    Trajectory tr = integrate(ode_for(phi, p), {1}, {0}, 0, 1, 1e-2);
    EXPECT_THROW(energy_audit(tr, decompose(phi), p), AuditUnsupported);
}

// ---------------------------------------------------------------------------
// first variation
// ---------------------------------------------------------------------------

TEST(FirstVariation, ExtremalOnSolutionsAndNotOffThem) {
    ParameterValues p{{"m", 1}, {"k", 1}, {"b", 0.1}};
    SignalTable sig = sine_forcing();
    const double a = 0, bb = 3;
    Trajectory sol = integrate(ode_for(damped_phi(), p, sig), {1}, {0}, a, bb, 1e-3);
    ParameterValues perturbed = p;
    perturbed["k"] = 1.1;
    Trajectory off = integrate(ode_for(damped_phi(), perturbed, sig), {1}, {0}, a, bb, 1e-3);

    VariationField dx = VariationField::sine_series(1, 0, a, bb, {1.0});
    EXPECT_TRUE(dx.fixed_boundary(sol.section));
    const double norm = variation_norm(dx, sol.section);
    EXPECT_LE(std::abs(first_variation(sol, damped_phi(), dx, p, sig)), 1e-5 * norm);
    EXPECT_GE(std::abs(first_variation(off, damped_phi(), dx, p, sig)), 1e-2 * norm);

    std::mt19937_64 rng(301);
    std::uniform_real_distribution<double> amp(-1, 1);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> c(4);
        for (double& ci : c) ci = amp(rng);
        VariationField r = VariationField::sine_series(1, 0, a, bb, c);
        const double on = std::abs(first_variation(sol, damped_phi(), r, p, sig));
        const double offv = std::abs(first_variation(off, damped_phi(), r, p, sig));
        EXPECT_LE(on, 1e-5 * variation_norm(r, sol.section));
        EXPECT_GE(offv, 100 * on);
    }
}

TEST(FirstVariation, ZeroVariation) {
    ParameterValues p{{"m", 1}, {"k", 1}};
    Trajectory tr = integrate(ode_for(ho_phi(), p), {1}, {0}, 0, 1, 1e-2);
    VariationField zero = VariationField::symbolic({Expr{}});
    EXPECT_EQ(first_variation(tr, ho_phi(), zero, p), 0.0);
    EXPECT_EQ(first_variation(tr, ho_phi(), zero, p, {}, VariationForm::post_parts), 0.0);
}

TEST(FirstVariation, IntegrationByPartsIdentity) {
    ParameterValues p{{"m", 1}, {"k", 1}, {"b", 0.1}};
    SignalTable sig = sine_forcing();
    Trajectory tr = integrate(ode_for(damped_phi(), p, sig), {1}, {0}, 0, 2, 1e-3);
    std::mt19937_64 rng(302);
    std::uniform_int_distribution<int> c(-4, 4);
    for (int trial = 0; trial < 20; ++trial) {
        Expr dx = Expr(c(rng)) + Expr(c(rng)) * E(t) + Expr(c(rng)) * E(t).pow(2) + Expr(c(rng)) * E(t).pow(3);
        VariationField field = VariationField::symbolic({dx});
        // Evaluated against a non-solution form so the interior integral is not ~0.
        VerticalOneForm phi = one_dim(-(E(k) * E(x)) + E(v), E(m) * E(v) + E(x));
        const double pre = first_variation(tr, phi, field, p, sig, VariationForm::pre_parts);
        const double interior = first_variation(tr, phi, field, p, sig, VariationForm::post_parts_interior);
        const double post = first_variation(tr, phi, field, p, sig, VariationForm::post_parts);
        auto [ta, tb] = transversality_term(tr, phi, field, p, sig);
        const double scale = 1 + std::abs(pre) + std::abs(interior) + std::abs(tb) + std::abs(ta);
        EXPECT_LE(std::abs(pre - (interior + tb - ta)), 1e-8 * scale);
        EXPECT_LE(std::abs(pre - post), 1e-8 * scale);
    }
}

TEST(FirstVariation, SampledGridMismatch) {
    ParameterValues p{{"m", 1}, {"k", 1}};
    Trajectory tr = integrate(ode_for(ho_phi(), p), {1}, {0}, 0, 1, 0.1);
    VariationField wrong = VariationField::sampled({0, 0.5, 1}, {{0}, {1}, {0}});
    EXPECT_THROW(first_variation(tr, ho_phi(), wrong, p), GridMismatch);
    std::vector<std::vector<double>> vals;
    for (double tau : tr.section.tau) vals.push_back({std::sin(std::numbers::pi * tau)});
    VariationField ok = VariationField::sampled(tr.section.tau, vals);
    EXPECT_NO_THROW(first_variation(tr, ho_phi(), ok, p));
}

TEST(Transversality, Examples) {
    ParameterValues p{{"m", 1}, {"k", 1}};
    Trajectory tr = integrate(ode_for(ho_phi(), p), {1}, {0}, 0, 2, 1e-3);
    auto [fa, fb] = transversality_term(tr, ho_phi(), VariationField::sine_series(1, 0, 0, 2, {1, 0.5}), p);
    EXPECT_LE(std::abs(fa), 1e-12);
    EXPECT_LE(std::abs(fb), 1e-12);

    // Hand-built section with v(b) = 0.5.
    Trajectory hand;
    hand.h = hand.section.h = 0.5;
    hand.section.push_back(0, {0}, {1});
    hand.section.push_back(0.5, {0.4}, {0.8});
    hand.section.push_back(1, {0.7}, {0.5});
    auto [ua, ub] = transversality_term(hand, ho_phi(), VariationField::symbolic({Expr(1)}), p);
    EXPECT_DOUBLE_EQ(ua, 1.0);
    EXPECT_DOUBLE_EQ(ub, 0.5);
    auto [la, lb] = transversality_term(hand, ho_phi(), VariationField::symbolic({E(t)}), p);
    EXPECT_EQ(la, 0.0);
    EXPECT_DOUBLE_EQ(lb, 0.5);
}

TEST(Simpson, ExactOnCubicsForBothParities) {
    for (int N : {11, 12}) {
        const double h = 1.0 / (N - 1);
        std::vector<double> f;
        for (int i = 0; i < N; ++i) {
            const double u = i * h;
            f.push_back(u * u * u - 2 * u + 1);
        }
        EXPECT_NEAR(simpson(f, h), 0.25 - 1 + 1, 1e-14);
    }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

TEST(Csv, HeaderAndFullPrecision) {
    ParameterValues p{{"m", 1}, {"k", 1}};
    Trajectory tr = integrate(ode_for(ho_phi(), p), {1}, {0}, 0, 0.3, 0.1);
    std::ostringstream plain;
    write_csv(plain, tr);
    std::istringstream in(plain.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "tau,x0,v0");
    int rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        std::istringstream cells(line);
        std::string cell;
        std::vector<double> parsed;
        while (std::getline(cells, cell, ',')) parsed.push_back(std::stod(cell));
        const auto k = static_cast<std::size_t>(rows - 1);
        EXPECT_EQ(parsed[1], tr.section.x[k][0]);
        EXPECT_EQ(parsed[2], tr.section.v[k][0]);
    }
    EXPECT_EQ(rows, 4);

    BalanceReport rep = energy_audit(tr, decompose(ho_phi()), p);
    std::ostringstream audited;
    write_csv(audited, tr, &rep);
    EXPECT_EQ(audited.str().substr(0, audited.str().find('\n')), "tau,x0,v0,E,P,rho");
}
