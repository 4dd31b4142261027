// The three-parameter model Hamiltonian in the -q1*p1 Jordan chart:
//   H = T(q1^2) T(p1^2) T(I2) [ -q1 p1 + (c3/2sqrt2)(q1+p1)^3 + (omega/2 eps^2) I2
//                               + nu Q(q1+p1, I2) + nu mu eps^N0 R(x) ],
// with T a C^infinity cutoff equal to 1 on [0, rho0^2/4] and 0 beyond rho0^2.
#pragma once

#include "birkhoff.hpp"
#include "series.hpp"

namespace oiw {

struct SmoothCutoff {
    double rho0 = 1.0;
    bool enabled = true;

    static double bump(double u) { return u > 0.0 ? std::exp(-1.0 / u) : 0.0; }
    static double bump_d(double u) { return u > 0.0 ? std::exp(-1.0 / u) / (u * u) : 0.0; }

    double value(double r) const {
        if (!enabled) return 1.0;
        const double lo = 0.25 * rho0 * rho0, hi = rho0 * rho0;
        if (r <= lo) return 1.0;
        if (r >= hi) return 0.0;
        const double s = (r - lo) / (hi - lo);
        return bump(1.0 - s) / (bump(s) + bump(1.0 - s));
    }
    double deriv(double r) const {
        if (!enabled) return 0.0;
        const double lo = 0.25 * rho0 * rho0, hi = rho0 * rho0;
        if (r <= lo || r >= hi) return 0.0;
        const double s = (r - lo) / (hi - lo);
        const double f = bump(s), g = bump(1.0 - s);
        const double fp = bump_d(s), gp = -bump_d(1.0 - s);
        const double dTds = (gp * (f + g) - g * (fp + gp)) / ((f + g) * (f + g));
        return dTds / (hi - lo);
    }
};

class HamiltonianModel {
  public:
    double eps = 0.35, nu_hat = 0.0, mu = 0.0;
    int N0 = 5;
    double omega = 1.0, c3 = 2.0 * std::sqrt(2.0);
    SmoothCutoff cutoff;

    HamiltonianModel() = default;
    HamiltonianModel(double eps_, double nu_, double mu_, int N0_, double omega_, double c3_,
                     const RSeries& Qpoly, const RSeries& Rpoly, double rho0)
        : eps(eps_), nu_hat(nu_), mu(mu_), N0(N0_), omega(omega_), c3(c3_), Q_(Qpoly), R_(Rpoly) {
        cutoff.rho0 = rho0;
        for (int i = 0; i < kVars; ++i) {
            dQ_[i] = Q_.derivative(i);
            dR_[i] = R_.derivative(i);
        }
    }

    double elliptic_rate() const { return omega / (eps * eps); }  // angular speed of (q2,p2)

    // Linear change to the underline chart where the skeleton is
    // 1/2 p^2 - 1/2 q^2 + c3 q^3: q_ = (q1+p1)/sqrt2, p_ = (p1-q1)/sqrt2.
    static Vec4 to_underline(const Vec4& x) {
        const double s = 1.0 / std::sqrt(2.0);
        return {s * (x[Q1] + x[P1]), x[Q2], s * (x[P1] - x[Q1]), x[P2]};
    }

    double core(const Vec4& x) const {
        const double I2 = x[Q2] * x[Q2] + x[P2] * x[P2];
        const double u = x[Q1] + x[P1];
        const Vec4 xu = to_underline(x);
        double h = -x[Q1] * x[P1] + c3 / (2.0 * std::sqrt(2.0)) * u * u * u +
                   omega / (2.0 * eps * eps) * I2;
        if (nu_hat != 0.0) {
            h += nu_hat * Q_.evaluate<double>(xu);
            if (mu != 0.0) h += nu_hat * mu * std::pow(eps, N0) * R_.evaluate<double>(xu);
        }
        return h;
    }

    Vec4 core_grad(const Vec4& x) const {
        const double I2 = x[Q2] * x[Q2] + x[P2] * x[P2];
        (void)I2;
        const double u = x[Q1] + x[P1];
        const double cc = 3.0 * c3 / (2.0 * std::sqrt(2.0)) * u * u;
        Vec4 g{-x[P1] + cc, omega / (eps * eps) * x[Q2], -x[Q1] + cc,
               omega / (eps * eps) * x[P2]};
        if (nu_hat != 0.0) {
            const Vec4 xu = to_underline(x);
            const double s = 1.0 / std::sqrt(2.0);
            Vec4 gu{0, 0, 0, 0};
            for (int i = 0; i < kVars; ++i) {
                gu[i] = nu_hat * dQ_[i].evaluate<double>(xu);
                if (mu != 0.0) gu[i] += nu_hat * mu * std::pow(eps, N0) * dR_[i].evaluate<double>(xu);
            }
            // Chain rule through the underline change (orthogonal in (q1,p1)).
            g[Q1] += s * (gu[Q1] - gu[P1]);
            g[P1] += s * (gu[Q1] + gu[P1]);
            g[Q2] += gu[Q2];
            g[P2] += gu[P2];
        }
        return g;
    }

    double H(const Vec4& x) const {
        const double I2 = x[Q2] * x[Q2] + x[P2] * x[P2];
        return cutoff.value(x[Q1] * x[Q1]) * cutoff.value(x[P1] * x[P1]) * cutoff.value(I2) *
               core(x);
    }

    Vec4 grad(const Vec4& x) const {
        const double I2 = x[Q2] * x[Q2] + x[P2] * x[P2];
        const double tq = cutoff.value(x[Q1] * x[Q1]), tp = cutoff.value(x[P1] * x[P1]),
                     ti = cutoff.value(I2);
        const double c = core(x);
        Vec4 g = core_grad(x);
        const double prod = tq * tp * ti;
        g[Q1] = prod * g[Q1] + cutoff.deriv(x[Q1] * x[Q1]) * 2.0 * x[Q1] * tp * ti * c;
        g[P1] = prod * g[P1] + tq * cutoff.deriv(x[P1] * x[P1]) * 2.0 * x[P1] * ti * c;
        g[Q2] = prod * g[Q2] + tq * tp * cutoff.deriv(I2) * 2.0 * x[Q2] * c;
        g[P2] = prod * g[P2] + tq * tp * cutoff.deriv(I2) * 2.0 * x[P2] * c;
        return g;
    }

    // x' = J grad H.
    Vec4 field(const Vec4& x) const {
        const Vec4 g = grad(x);
        return {g[P1], g[P2], -g[Q1], -g[Q2]};
    }

    static double I2(const Vec4& x) { return x[Q2] * x[Q2] + x[P2] * x[P2]; }

    // dI2/dt = {I2, H}; identically 0 when mu = 0.
    double dI2_dt(const Vec4& x) const {
        const Vec4 g = grad(x);
        return 2.0 * x[Q2] * g[P2] - 2.0 * x[P2] * g[Q2];
    }

    const RSeries& Qpoly() const { return Q_; }
    const RSeries& Rpoly() const { return R_; }

  private:
    RSeries Q_, R_;
    std::array<RSeries, kVars> dQ_, dR_;
};

inline HamiltonianModel three_parameter_model(const ScaledModel& scaled, double nu_hat, double mu,
                                              int N0) {
    if (N0 < 1) throw std::invalid_argument("three_parameter_model: need N0 >= 1");
    if (scaled.n < 3) throw std::invalid_argument("three_parameter_model: need n >= 3");
    return HamiltonianModel(scaled.eps, nu_hat, mu, N0, scaled.omega, scaled.c3, scaled.N_poly,
                            scaled.R_poly, scaled.rho0);
}

}  // namespace oiw
