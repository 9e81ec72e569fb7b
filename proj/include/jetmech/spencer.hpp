#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "jetmech/errors.hpp"
#include "jetmech/expr.hpp"
#include "jetmech/forms.hpp"

namespace jetmech {

/// Residuals R_i(t, x, x', x'') of D*phi = 0, one per coordinate.
///
/// Each residual is affine in the accelerations.
struct EquationsOfMotion {
    std::vector<Expr> residuals;
    VerticalOneForm source;
    std::optional<SplitMode> split;

    int dimension() const { return static_cast<int>(residuals.size()); }
};

/// d/dt along prolonged sections: de/dt + sum_j (de/dx^j) x'^j + (de/dx'^j) x''^j.
inline Expr total_time_derivative(const Expr& e) {
    if (e.contains(SymbolKind::acceleration))
        throw InvalidArgument("total_time_derivative: expression already contains accelerations");
    Expr out = partial(e, Symbol::time());
    for (int j = 0; j < e.index_bound(); ++j) {
        out += partial(e, Symbol::coordinate(j)) * Expr(Symbol::velocity(j));
        out += partial(e, Symbol::velocity(j)) * Expr(Symbol::acceleration(j));
    }
    return out;
}

/// Dual Spencer operator: R_i = F_i - d(Pi_i)/dt, with D*Pi = 0.
inline EquationsOfMotion dual_spencer(const VerticalOneForm& phi) {
    EquationsOfMotion eom;
    eom.source = phi;
    for (int i = 0; i < phi.dimension(); ++i) eom.residuals.push_back(phi.F(i) - total_time_derivative(phi.Pi(i)));
    return eom;
}

/// delta L / delta x^i = dL/dx^i - d/dt (dL/dx'^i).
inline std::vector<Expr> variational_derivative(const Expr& L, int n) {
    if (L.contains(SymbolKind::acceleration)) throw InvalidArgument("variational_derivative: Lagrangian contains accelerations");
    if (L.index_bound() > n) throw InvalidArgument("variational_derivative: Lagrangian exceeds dimension");
    std::vector<Expr> out;
    for (int i = 0; i < n; ++i)
        out.push_back(partial(L, Symbol::coordinate(i)) - total_time_derivative(partial(L, Symbol::velocity(i))));
    return out;
}

/// delta L/delta x + D*phi_a, which by linearity of D* must equal D*phi.
inline EquationsOfMotion assemble_with_split(const Decomposition& dec, const VerticalOneForm& phi,
                                             const SignalTable& signals = {}) {
    if (!reconstructs(dec, phi, signals)) {
        VerticalOneForm residual = phi - d0(dec.lagrangian, phi.dimension()).vertical - dec.anti_exact;
        throw SplitReconstructionError(residual);
    }
    const int n = phi.dimension();
    std::vector<Expr> el = variational_derivative(dec.lagrangian, n);
    EquationsOfMotion anti = dual_spencer(dec.anti_exact);
    EquationsOfMotion eom;
    eom.source = phi;
    eom.split = dec.mode;
    for (int i = 0; i < n; ++i) eom.residuals.push_back(el[static_cast<std::size_t>(i)] + anti.residuals[static_cast<std::size_t>(i)]);
    return eom;
}

/// True when every residual has vanishing second derivatives in the accelerations.
inline bool affine_in_acceleration(const EquationsOfMotion& eom) {
    const int n = eom.dimension();
    for (const auto& r : eom.residuals)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                if (!partial(partial(r, Symbol::acceleration(j)), Symbol::acceleration(k)).is_zero()) return false;
    return true;
}

/// Sampled section t -> (t, x(t), x'(t)) of the first jet bundle on a uniform grid.
struct NumericSection {
    std::vector<double> tau;
    std::vector<std::vector<double>> x;
    std::vector<std::vector<double>> v;
    double h = 0.0;

    std::size_t size() const { return tau.size(); }
    int dimension() const { return x.empty() ? 0 : static_cast<int>(x.front().size()); }

    void push_back(double t, std::vector<double> xs, std::vector<double> vs) {
        tau.push_back(t);
        x.push_back(std::move(xs));
        v.push_back(std::move(vs));
    }
};

/// Second-order derivative of uniformly sampled values: central inside,
/// one-sided three-point at both ends. Needs at least three samples.
inline std::vector<double> differentiate_samples(const std::vector<double>& f, double h) {
    const std::size_t N = f.size();
    if (N < 3) throw InvalidArgument("differentiation needs at least 3 samples");
    std::vector<double> d(N);
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    for (std::size_t k = 1; k + 1 < N; ++k) d[k] = (f[k + 1] - f[k - 1]) / (2.0 * h);
    d[N - 1] = (3.0 * f[N - 1] - 4.0 * f[N - 2] + f[N - 3]) / (2.0 * h);
    return d;
}

/// Spencer operator on a sampled section: r_k^i = dx^i/dt(t_k) - v_k^i.
///
/// Vanishes (to O(h^2)) exactly when the section is the prolongation of its
/// own x(t).
inline std::vector<std::vector<double>> spencer_residual(const NumericSection& s) {
    if (s.size() < 3) throw InvalidArgument("spencer_residual needs at least 3 samples");
    if (!(s.h > 0.0)) throw InvalidArgument("spencer_residual needs a positive step");
    const int n = s.dimension();
    std::vector<std::vector<double>> r(s.size(), std::vector<double>(static_cast<std::size_t>(n)));
    std::vector<double> column(s.size());
    for (int i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < s.size(); ++k) column[k] = s.x[k][static_cast<std::size_t>(i)];
        std::vector<double> dx = differentiate_samples(column, s.h);
        for (std::size_t k = 0; k < s.size(); ++k) r[k][static_cast<std::size_t>(i)] = dx[k] - s.v[k][static_cast<std::size_t>(i)];
    }
    return r;
}

inline double max_abs(const std::vector<std::vector<double>>& rows) {
    double m = 0.0;
    for (const auto& row : rows)
        for (double x : row) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace jetmech
