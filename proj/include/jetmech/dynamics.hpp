#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jetmech/errors.hpp"
#include "jetmech/expr.hpp"
#include "jetmech/forms.hpp"
#include "jetmech/spencer.hpp"

namespace jetmech {

using ParameterValues = std::map<std::string, double>;

/// x'' = a(t, x, x') for an n-dimensional second-order system.
struct ExplicitODE {
    using Field = std::function<std::vector<double>(double, std::span<const double>, std::span<const double>)>;

    int dimension = 0;
    Field acceleration;
    double pivot_threshold = 1e-12;
};

namespace detail {

inline std::string format_state(double t, std::span<const double> x, std::span<const double> v) {
    std::string s = "t=" + std::to_string(t) + " x=(";
    for (std::size_t i = 0; i < x.size(); ++i) s += (i ? ", " : "") + std::to_string(x[i]);
    s += ") x'=(";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
    return s + ")";
}

/// Solves M a = c in place by LU with partial pivoting; false if a pivot is below threshold.
inline bool solve_dense(std::vector<double>& M, std::vector<double>& c, int n, double threshold) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(M[r * n + col]) > std::abs(M[piv * n + col])) piv = r;
        if (!(std::abs(M[piv * n + col]) >= threshold)) return false;
        if (piv != col) {
            for (int k = 0; k < n; ++k) std::swap(M[col * n + k], M[piv * n + k]);
            std::swap(c[col], c[piv]);
        }
        for (int r = col + 1; r < n; ++r) {
            double f = M[r * n + col] / M[col * n + col];
            if (f == 0.0) continue;
            for (int k = col; k < n; ++k) M[r * n + k] -= f * M[col * n + k];
            c[r] -= f * c[col];
        }
    }
    for (int r = n - 1; r >= 0; --r) {
        double s = c[r];
        for (int k = r + 1; k < n; ++k) s -= M[r * n + k] * c[k];
        c[r] = s / M[r * n + r];
    }
    return true;
}

}  // namespace detail

/// Solves R_i = 0 for the accelerations.
///
/// Since every residual is affine in x'', R = c - M x'' with
/// M_ij = -dR_i/dx''^j and c_i = R_i at x'' = 0.
inline ExplicitODE assemble_explicit(const EquationsOfMotion& eom, const ParameterValues& params,
                                     const SignalTable& signals = {}, double pivot_threshold = 1e-12) {
    const int n = eom.dimension();
    if (!affine_in_acceleration(eom)) throw InvalidArgument("residuals are not affine in the accelerations");
    Substitution at_rest;
    for (int j = 0; j < n; ++j) at_rest.emplace(Symbol::acceleration(j), Expr{});

    std::vector<CompiledExpr> rhs;
    std::vector<CompiledExpr> mass;
    for (int i = 0; i < n; ++i) {
        const Expr& r = eom.residuals[static_cast<std::size_t>(i)];
        rhs.emplace_back(substitute(r, at_rest), params, signals);
        for (int j = 0; j < n; ++j) mass.emplace_back(-partial(r, Symbol::acceleration(j)), params, signals);
    }

    ExplicitODE ode;
    ode.dimension = n;
    ode.pivot_threshold = pivot_threshold;
    ode.acceleration = [n, rhs = std::move(rhs), mass = std::move(mass), pivot_threshold](
                           double t, std::span<const double> x, std::span<const double> v) {
        std::vector<double> M(static_cast<std::size_t>(n * n));
        std::vector<double> c(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            c[static_cast<std::size_t>(i)] = rhs[static_cast<std::size_t>(i)](t, x, v);
            for (int j = 0; j < n; ++j) M[static_cast<std::size_t>(i * n + j)] = mass[static_cast<std::size_t>(i * n + j)](t, x, v);
        }
        if (!detail::solve_dense(M, c, n, pivot_threshold))
            throw SingularMass("singular mass matrix at " + detail::format_state(t, x, v));
        return c;
    };
    return ode;
}

/// x''^i = force_i / mass_i, written directly from Newton's second law.
inline ExplicitODE newton_oracle(const std::vector<Expr>& forces, const std::vector<Expr>& masses,
                                 const ParameterValues& params, const SignalTable& signals = {}) {
    if (forces.size() != masses.size()) throw InvalidArgument("oracle needs one mass per force");
    std::vector<CompiledExpr> f, m;
    for (std::size_t i = 0; i < forces.size(); ++i) {
        f.emplace_back(forces[i], params, signals);
        m.emplace_back(masses[i], params, signals);
    }
    ExplicitODE ode;
    ode.dimension = static_cast<int>(forces.size());
    ode.acceleration = [f = std::move(f), m = std::move(m)](double t, std::span<const double> x,
                                                            std::span<const double> v) {
        std::vector<double> a(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) {
            double mass = m[i](t, x, v);
            if (mass == 0.0) throw SingularMass("zero oracle mass at " + detail::format_state(t, x, v));
            a[i] = f[i](t, x, v) / mass;
        }
        return a;
    };
    return ode;
}

enum class Method { rk4, rkf45 };

inline const char* to_string(Method m) { return m == Method::rk4 ? "rk4" : "rkf45"; }

enum class Provenance { derived_eom, newton_oracle, analytic };

inline const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::derived_eom: return "derived-eom";
        case Provenance::newton_oracle: return "newton-oracle";
        case Provenance::analytic: return "analytic";
    }
    return "?";
}

/// A sampled integral curve plus the accelerations the dynamics assigned
/// to each sample.
struct Trajectory {
    NumericSection section;
    std::vector<std::vector<double>> acceleration;
    std::string integrator;
    double h = 0.0;
    Provenance provenance = Provenance::derived_eom;
    bool truncated = false;
    std::string truncation_reason;
    int dimension = 0;

    std::size_t size() const { return section.size(); }
};

struct IntegratorOptions {
    double abs_tol = 1e-10;
    double rel_tol = 1e-9;
    double max_step = 0.0;  // rkf45 only; 0 picks (b - a) / 200
};

namespace detail {

inline bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); });
}

struct State {
    std::vector<double> x, v;
};

inline State axpy(const State& y, double h, const std::vector<const State*>& ks, const std::vector<double>& ws) {
    State out = y;
    for (std::size_t s = 0; s < ks.size(); ++s) {
        if (ws[s] == 0.0) continue;
        for (std::size_t i = 0; i < y.x.size(); ++i) {
            out.x[i] += h * ws[s] * ks[s]->x[i];
            out.v[i] += h * ws[s] * ks[s]->v[i];
        }
    }
    return out;
}

}  // namespace detail

/// Integrates x'' = a(t, x, x') from t = a to b and samples it on the grid a + k*h.
///
/// rk4 steps on the grid itself. rkf45 steps adaptively and is resampled
/// onto the grid by cubic Hermite interpolation. Non-finite states or a
/// singular mass end the run early with `truncated` set.
inline Trajectory integrate(const ExplicitODE& ode, std::vector<double> x0, std::vector<double> v0, double a, double b,
                            double h, Method method = Method::rk4, const IntegratorOptions& opts = {}) {
    const int n = ode.dimension;
    if (!(h > 0.0)) throw InvalidArgument("integrate: step must be positive");
    if (!(b > a)) throw InvalidArgument("integrate: empty interval");
    if (static_cast<int>(x0.size()) != n || static_cast<int>(v0.size()) != n)
        throw InvalidArgument("integrate: initial state has wrong dimension");

    const auto steps = static_cast<std::size_t>(std::ceil((b - a) / h - 1e-9));
    Trajectory traj;
    traj.integrator = to_string(method);
    traj.h = h;
    traj.section.h = h;
    traj.dimension = n;

    auto deriv = [&](double t, const detail::State& y) {
        return detail::State{y.v, ode.acceleration(t, y.x, y.v)};
    };
    auto record = [&](double t, const detail::State& y, std::vector<double> acc) {
        traj.section.push_back(t, y.x, y.v);
        traj.acceleration.push_back(std::move(acc));
    };
    auto stop = [&](std::string why) {
        traj.truncated = true;
        traj.truncation_reason = std::move(why);
    };

    detail::State y{std::move(x0), std::move(v0)};
    try {
        detail::State f = deriv(a, y);
        record(a, y, f.v);
        if (method == Method::rk4) {
            for (std::size_t k = 0; k < steps; ++k) {
                const double t = a + static_cast<double>(k) * h;
                const detail::State& k1 = f;
                detail::State k2 = deriv(t + h / 2, detail::axpy(y, h, {&k1}, {0.5}));
                detail::State k3 = deriv(t + h / 2, detail::axpy(y, h, {&k2}, {0.5}));
                detail::State k4 = deriv(t + h, detail::axpy(y, h, {&k3}, {1.0}));
                y = detail::axpy(y, h, {&k1, &k2, &k3, &k4}, {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6});
                const double tn = a + static_cast<double>(k + 1) * h;
                if (!detail::all_finite(y.x) || !detail::all_finite(y.v)) {
                    stop("non-finite state at t=" + std::to_string(tn));
                    break;
                }
                f = deriv(tn, y);
                if (!detail::all_finite(f.v)) {
                    stop("non-finite acceleration at t=" + std::to_string(tn));
                    break;
                }
                record(tn, y, f.v);
            }
        } else {
            // Fehlberg 4(5) tableau.
            static constexpr double c2 = 1.0 / 4, c3 = 3.0 / 8, c4 = 12.0 / 13, c5 = 1.0, c6 = 1.0 / 2;
            static const std::vector<double> a2{1.0 / 4};
            static const std::vector<double> a3{3.0 / 32, 9.0 / 32};
            static const std::vector<double> a4{1932.0 / 2197, -7200.0 / 2197, 7296.0 / 2197};
            static const std::vector<double> a5{439.0 / 216, -8.0, 3680.0 / 513, -845.0 / 4104};
            static const std::vector<double> a6{-8.0 / 27, 2.0, -3544.0 / 2565, 1859.0 / 4104, -11.0 / 40};
            static const std::vector<double> b5{16.0 / 135, 0.0, 6656.0 / 12825, 28561.0 / 56430, -9.0 / 50, 2.0 / 55};
            static const std::vector<double> b4{25.0 / 216, 0.0, 1408.0 / 2565, 2197.0 / 4104, -1.0 / 5, 0.0};

            const double max_step = opts.max_step > 0.0 ? opts.max_step : (b - a) / 200.0;
            double t = a;
            double step = std::min(h, max_step);
            std::size_t next = 1;
            while (next <= steps) {
                const double t_end = a + static_cast<double>(steps) * h;
                if (t + step > t_end) step = t_end - t;
                const detail::State& k1 = f;
                detail::State k2 = deriv(t + c2 * step, detail::axpy(y, step, {&k1}, a2));
                detail::State k3 = deriv(t + c3 * step, detail::axpy(y, step, {&k1, &k2}, a3));
                detail::State k4 = deriv(t + c4 * step, detail::axpy(y, step, {&k1, &k2, &k3}, a4));
                detail::State k5 = deriv(t + c5 * step, detail::axpy(y, step, {&k1, &k2, &k3, &k4}, a5));
                detail::State k6 = deriv(t + c6 * step, detail::axpy(y, step, {&k1, &k2, &k3, &k4, &k5}, a6));
                std::vector<const detail::State*> ks{&k1, &k2, &k3, &k4, &k5, &k6};
                detail::State y5 = detail::axpy(y, step, ks, b5);
                detail::State y4 = detail::axpy(y, step, ks, b4);

                double err = 0.0;
                for (int i = 0; i < n; ++i) {
                    auto idx = static_cast<std::size_t>(i);
                    double sx = opts.abs_tol + opts.rel_tol * std::max(std::abs(y.x[idx]), std::abs(y5.x[idx]));
                    double sv = opts.abs_tol + opts.rel_tol * std::max(std::abs(y.v[idx]), std::abs(y5.v[idx]));
                    err = std::max({err, std::abs(y5.x[idx] - y4.x[idx]) / sx, std::abs(y5.v[idx] - y4.v[idx]) / sv});
                }
                if (!std::isfinite(err)) {
                    stop("non-finite state near t=" + std::to_string(t));
                    break;
                }
                if (err <= 1.0) {
                    const double t1 = t + step;
                    detail::State f1 = deriv(t1, y5);
                    if (!detail::all_finite(f1.v)) {
                        stop("non-finite acceleration at t=" + std::to_string(t1));
                        break;
                    }
                    // Hermite-resample grid points that fall inside (t, t1].
                    while (next <= steps && a + static_cast<double>(next) * h <= t1 + 1e-12 * std::abs(t1)) {
                        const double tg = a + static_cast<double>(next) * h;
                        const double s = (tg - t) / step;
                        const double h10 = s * (1 - s) * (1 - s);
                        const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
                        detail::State yg{std::vector<double>(static_cast<std::size_t>(n)), std::vector<double>(static_cast<std::size_t>(n))};
                        for (std::size_t i = 0; i < yg.x.size(); ++i) {
                            yg.x[i] = y.x[i] + h01 * (y5.x[i] - y.x[i]) + h10 * step * f.x[i] + h11 * step * f1.x[i];
                            yg.v[i] = y.v[i] + h01 * (y5.v[i] - y.v[i]) + h10 * step * f.v[i] + h11 * step * f1.v[i];
                        }
                        std::vector<double> acc = next == steps && std::abs(tg - t1) < 1e-12 ? f1.v : deriv(tg, yg).v;
                        record(tg, yg, std::move(acc));
                        ++next;
                    }
                    t = t1;
                    y = std::move(y5);
                    f = std::move(f1);
                }
                const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
                step = std::min(step * factor, max_step);
                if (step < 1e-14 * std::max(1.0, std::abs(t))) {
                    stop("step size underflow at t=" + std::to_string(t));
                    break;
                }
            }
        }
    } catch (const SingularMass& e) {
        stop(e.what());
        if (traj.size() == 0) throw;
    }
    return traj;
}

struct OracleReport {
    double max_divergence = 0.0;
    std::size_t samples = 0;
    bool truncated = false;
};

/// Integrates both systems with the same integrator and grid and reports
/// max_k |x_k - x'_k| + |v_k - v'_k| (summed over coordinates).
inline OracleReport oracle_compare(const ExplicitODE& derived, const ExplicitODE& oracle, const std::vector<double>& x0,
                                   const std::vector<double>& v0, double a, double b, double h,
                                   Method method = Method::rk4) {
    Trajectory p = integrate(derived, x0, v0, a, b, h, method);
    Trajectory q = integrate(oracle, x0, v0, a, b, h, method);
    OracleReport r;
    r.truncated = p.truncated || q.truncated;
    r.samples = std::min(p.size(), q.size());
    if (p.size() != q.size()) r.max_divergence = INFINITY;
    for (std::size_t k = 0; k < r.samples; ++k) {
        double d = 0.0;
        for (std::size_t i = 0; i < p.section.x[k].size(); ++i)
            d += std::abs(p.section.x[k][i] - q.section.x[k][i]) + std::abs(p.section.v[k][i] - q.section.v[k][i]);
        r.max_divergence = std::max(r.max_divergence, d);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Energy balance
// ---------------------------------------------------------------------------

/// E = Pi.v - L, P = F_a.v - dL/dt and rho = dE/dt - P per sample.
struct BalanceReport {
    std::vector<double> energy;
    std::vector<double> power;
    std::vector<double> residual;
    double max_residual = 0.0;
    double rms_residual = 0.0;
    double relative_drift = 0.0;  // max_k |E_k - E_0| / |E_0|
};

inline BalanceReport energy_audit(const Trajectory& traj, const Decomposition& dec, const ParameterValues& params,
                                  const SignalTable& signals = {}) {
    if (dec.anti_exact.has_momentum_part())
        throw AuditUnsupported("energy audit needs an anti-exact part without dx' components");
    const int n = dec.anti_exact.dimension();
    const auto& s = traj.section;
    if (s.size() < 3) throw InvalidArgument("energy audit needs at least 3 samples");

    Expr energy = -dec.lagrangian;
    Expr power = -partial(dec.lagrangian, Symbol::time());
    for (int i = 0; i < n; ++i) {
        energy += partial(dec.lagrangian, Symbol::velocity(i)) * Expr(Symbol::velocity(i));
        power += dec.anti_exact.F(i) * Expr(Symbol::velocity(i));
    }
    CompiledExpr E(energy, params, signals), P(power, params, signals);

    BalanceReport rep;
    for (std::size_t k = 0; k < s.size(); ++k) {
        rep.energy.push_back(E(s.tau[k], s.x[k], s.v[k]));
        rep.power.push_back(P(s.tau[k], s.x[k], s.v[k]));
    }
    std::vector<double> dE = differentiate_samples(rep.energy, s.h);
    double sq = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        double r = dE[k] - rep.power[k];
        rep.residual.push_back(r);
        rep.max_residual = std::max(rep.max_residual, std::abs(r));
        sq += r * r;
        rep.relative_drift = std::max(rep.relative_drift, std::abs(rep.energy[k] - rep.energy[0]));
    }
    rep.rms_residual = std::sqrt(sq / static_cast<double>(s.size()));
    if (rep.energy[0] != 0.0) rep.relative_drift /= std::abs(rep.energy[0]);
    return rep;
}

// ---------------------------------------------------------------------------
// First variation
// ---------------------------------------------------------------------------

/// A variation field dx^i(t): symbolic in t, given by closures, or sampled on
/// a trajectory grid.
class VariationField {
public:
    using Function = std::function<double(double)>;

    /// Components are Exprs in t (and registered signals) only.
    static VariationField symbolic(std::vector<Expr> components, SignalTable signals = {}) {
        VariationField f;
        for (const auto& c : components)
            for (const auto& s : c.symbols())
                if (s.kind != SymbolKind::time && s.kind != SymbolKind::signal)
                    throw InvalidArgument("variation components may depend on t and signals only");
        auto table = std::make_shared<SignalTable>(std::move(signals));
        for (auto& c : components) {
            Expr dc = partial(c, Symbol::time());
            f.value_.push_back([c, table](double t) { return evaluate(c, NumericState{t, {}, {}, {}, {}, table.get()}); });
            f.deriv_.push_back([dc, table](double t) { return evaluate(dc, NumericState{t, {}, {}, {}, {}, table.get()}); });
        }
        return f;
    }

    static VariationField analytic(std::vector<Function> values, std::vector<Function> derivatives) {
        if (values.size() != derivatives.size()) throw InvalidArgument("variation needs one derivative per component");
        VariationField f;
        f.value_ = std::move(values);
        f.deriv_ = std::move(derivatives);
        return f;
    }

    /// Sum_j c_j sin(j pi (t - a)/(b - a)) in one coordinate; zero in the others.
    static VariationField sine_series(int n, int coordinate, double a, double b, std::vector<double> amplitudes) {
        std::vector<Function> vals(static_cast<std::size_t>(n), [](double) { return 0.0; });
        std::vector<Function> ders = vals;
        const double w = std::numbers::pi / (b - a);
        vals[static_cast<std::size_t>(coordinate)] = [=](double t) {
            double s = 0.0;
            for (std::size_t j = 0; j < amplitudes.size(); ++j) s += amplitudes[j] * std::sin(double(j + 1) * w * (t - a));
            return s;
        };
        ders[static_cast<std::size_t>(coordinate)] = [=](double t) {
            double s = 0.0;
            for (std::size_t j = 0; j < amplitudes.size(); ++j)
                s += amplitudes[j] * double(j + 1) * w * std::cos(double(j + 1) * w * (t - a));
            return s;
        };
        return analytic(std::move(vals), std::move(ders));
    }

    /// values[k][i] on the grid `tau`; derivatives by second-order differencing.
    static VariationField sampled(std::vector<double> tau, std::vector<std::vector<double>> values) {
        if (tau.size() != values.size()) throw GridMismatch("sampled variation: tau and values differ in length");
        VariationField f;
        f.tau_ = std::move(tau);
        f.samples_ = std::move(values);
        return f;
    }

    bool is_sampled() const { return !samples_.empty(); }
    int dimension() const {
        return is_sampled() ? static_cast<int>(samples_.front().size()) : static_cast<int>(value_.size());
    }

    /// Values and t-derivatives on the section's grid: (values[k][i], derivatives[k][i]).
    std::pair<std::vector<std::vector<double>>, std::vector<std::vector<double>>> on(const NumericSection& s) const {
        const std::size_t N = s.size();
        const auto n = static_cast<std::size_t>(dimension());
        std::vector<std::vector<double>> val(N, std::vector<double>(n)), der = val;
        if (is_sampled()) {
            if (tau_.size() != N) throw GridMismatch("sampled variation has " + std::to_string(tau_.size()) +
                                                     " samples, trajectory has " + std::to_string(N));
            for (std::size_t k = 0; k < N; ++k)
                if (std::abs(tau_[k] - s.tau[k]) > 1e-9 * std::max(1.0, std::abs(s.tau[k])))
                    throw GridMismatch("sampled variation grid differs from trajectory at sample " + std::to_string(k));
            std::vector<double> column(N);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t k = 0; k < N; ++k) column[k] = samples_[k][i];
                auto d = differentiate_samples(column, s.h);
                for (std::size_t k = 0; k < N; ++k) {
                    val[k][i] = column[k];
                    der[k][i] = d[k];
                }
            }
            return {val, der};
        }
        for (std::size_t k = 0; k < N; ++k)
            for (std::size_t i = 0; i < n; ++i) {
                val[k][i] = value_[i](s.tau[k]);
                der[k][i] = deriv_[i](s.tau[k]);
            }
        return {val, der};
    }

    /// |dx(a)| and |dx(b)| both within tol on the section's endpoints.
    bool fixed_boundary(const NumericSection& s, double tol = 1e-12) const {
        auto [val, der] = on(s);
        for (double d : val.front())
            if (std::abs(d) > tol) return false;
        for (double d : val.back())
            if (std::abs(d) > tol) return false;
        return true;
    }

private:
    std::vector<Function> value_, deriv_;
    std::vector<double> tau_;
    std::vector<std::vector<double>> samples_;
};

/// Composite Simpson on a uniform grid; an odd interval count closes with
/// the 3/8 rule on the last three intervals.
inline double simpson(const std::vector<double>& f, double h) {
    const std::size_t N = f.size();
    if (N < 2) return 0.0;
    if (N == 2) return 0.5 * h * (f[0] + f[1]);
    std::size_t intervals = N - 1;
    std::size_t simpson_end = intervals % 2 == 0 ? intervals : intervals - 3;
    double sum = 0.0;
    for (std::size_t k = 0; k + 2 <= simpson_end; k += 2) sum += h / 3.0 * (f[k] + 4.0 * f[k + 1] + f[k + 2]);
    if (simpson_end != intervals) {
        std::size_t k = simpson_end;
        sum += 3.0 * h / 8.0 * (f[k] + 3.0 * f[k + 1] + 3.0 * f[k + 2] + f[k + 3]);
    }
    return sum;
}

/// L2 norm of a variation along the section: sqrt(\int |dx|^2 dt).
inline double variation_norm(const VariationField& dx, const NumericSection& s) {
    auto [val, der] = dx.on(s);
    std::vector<double> sq(s.size());
    for (std::size_t k = 0; k < s.size(); ++k)
        for (double d : val[k]) sq[k] += d * d;
    return std::sqrt(simpson(sq, s.h));
}

enum class VariationForm {
    pre_parts,            ///< \int F.dx + Pi.(dx)'
    post_parts,           ///< \int (F - Pi').dx + Theta|_b - Theta|_a
    post_parts_interior,  ///< \int (F - Pi').dx only
};

namespace detail {

/// Accelerations of the section: recorded by the integrator, or differenced from v.
inline std::vector<std::vector<double>> section_accelerations(const Trajectory& traj) {
    if (traj.acceleration.size() == traj.size()) return traj.acceleration;
    const auto& s = traj.section;
    const auto n = static_cast<std::size_t>(s.dimension());
    std::vector<std::vector<double>> acc(s.size(), std::vector<double>(n));
    std::vector<double> column(s.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < s.size(); ++k) column[k] = s.v[k][i];
        auto d = differentiate_samples(column, s.h);
        for (std::size_t k = 0; k < s.size(); ++k) acc[k][i] = d[k];
    }
    return acc;
}

}  // namespace detail

/// Theta(dx) = Pi_i dx^i at the first and last sample.
inline std::pair<double, double> transversality_term(const Trajectory& traj, const VerticalOneForm& phi,
                                                     const VariationField& dx, const ParameterValues& params,
                                                     const SignalTable& signals = {}) {
    const auto& s = traj.section;
    if (s.size() == 0) throw InvalidArgument("transversality_term on an empty trajectory");
    auto [val, der] = dx.on(s);
    auto theta = [&](std::size_t k) {
        double sum = 0.0;
        for (int i = 0; i < phi.dimension(); ++i)
            sum += CompiledExpr(phi.Pi(i), params, signals)(s.tau[k], s.x[k], s.v[k]) * val[k][static_cast<std::size_t>(i)];
        return sum;
    };
    return {theta(0), theta(s.size() - 1)};
}

/// First-variation functional Sigma[dx] along a trajectory, by composite Simpson.
inline double first_variation(const Trajectory& traj, const VerticalOneForm& phi, const VariationField& dx,
                              const ParameterValues& params, const SignalTable& signals = {},
                              VariationForm form = VariationForm::pre_parts) {
    const auto& s = traj.section;
    const int n = phi.dimension();
    if (dx.dimension() != n) throw InvalidArgument("variation and form differ in dimension");
    if (s.size() < 3) throw InvalidArgument("first_variation needs at least 3 samples");
    auto [val, der] = dx.on(s);

    std::vector<CompiledExpr> F, Pi, dPi;
    for (int i = 0; i < n; ++i) {
        F.emplace_back(phi.F(i), params, signals);
        Pi.emplace_back(phi.Pi(i), params, signals);
        dPi.emplace_back(total_time_derivative(phi.Pi(i)), params, signals);
    }
    std::vector<std::vector<double>> acc;
    if (form != VariationForm::pre_parts) acc = detail::section_accelerations(traj);

    std::vector<double> integrand(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) {
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            auto idx = static_cast<std::size_t>(i);
            const double f = F[idx](s.tau[k], s.x[k], s.v[k]);
            if (form == VariationForm::pre_parts)
                sum += f * val[k][idx] + Pi[idx](s.tau[k], s.x[k], s.v[k]) * der[k][idx];
            else
                sum += (f - dPi[idx](s.tau[k], s.x[k], s.v[k], acc[k])) * val[k][idx];
        }
        integrand[k] = sum;
    }
    double total = simpson(integrand, s.h);
    if (form == VariationForm::post_parts) {
        auto [ta, tb] = transversality_term(traj, phi, dx, params, signals);
        total += tb - ta;
    }
    return total;
}

// ---------------------------------------------------------------------------
// CSV export
// ---------------------------------------------------------------------------

inline std::string format_double(double d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", d);
    return buf;
}

/// tau,x0..x{n-1},v0..v{n-1}[,E,P,rho]
inline void write_csv(std::ostream& os, const Trajectory& traj, const BalanceReport* audit = nullptr) {
    const auto& s = traj.section;
    const int n = s.size() ? s.dimension() : traj.dimension;
    os << "tau";
    for (int i = 0; i < n; ++i) os << ",x" << i;
    for (int i = 0; i < n; ++i) os << ",v" << i;
    if (audit) os << ",E,P,rho";
    os << "\n";
    for (std::size_t k = 0; k < s.size(); ++k) {
        os << format_double(s.tau[k]);
        for (double x : s.x[k]) os << "," << format_double(x);
        for (double v : s.v[k]) os << "," << format_double(v);
        if (audit)
            os << "," << format_double(audit->energy[k]) << "," << format_double(audit->power[k]) << ","
               << format_double(audit->residual[k]);
        os << "\n";
    }
}

}  // namespace jetmech
