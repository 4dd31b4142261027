#pragma once
// Local canonical normalization near the saddle-center equilibrium.
//
// The chart is built in four stages:
//   1. complexify the elliptic block so the quadratic part becomes
//      -a1*x1*y1 - i*r*x2*y2 with a1, r real (r = alpha2/eps^2 is kept as a
//      single rate; eps never appears alone in a denominator),
//   2. solve a generating function W(x, eta) degree by degree; the resonant
//      monomials (x1*eta1)^m (x2*eta2)^k feed a two-variable profile K and
//      the rest is inverted against the diagonal operator
//      a1*(x1 d/dx1 - eta1 d/deta1) + i*r*(x2 d/dx2 - eta2 d/deta2),
//   3. fix the remaining gauge freedom (an action-dependent rescaling
//      e^{+dS/dw_i} on xi_i, e^{-dS/dw_i} on eta_i) by the vanishing-average
//      criterion, which also forces the chart to be real,
//   4. undo the complexification; the packaged chart F satisfies
//      H(F(xi, eta)) = K(xi1*eta1, xi2^2 + eta2^2) through the truncation
//      degree, with K(w1, w2) = -a1*w1 + (r/2)*w2 + higher order.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "series.hpp"

namespace oiw {

using CD = std::complex<double>;

inline CSeries to_complex(const RSeries& f) {
    CSeries out(f.max_degree());
    for (const auto& [m, c] : f.terms()) out.set(m, CD(c, 0.0));
    return out;
}

// Drop imaginary parts after checking they are numerically zero.
inline RSeries real_part_checked(const CSeries& f, double tol, const std::string& what) {
    const double scale = std::max(f.max_abs_coeff(), 1.0);
    RSeries out(f.max_degree());
    for (const auto& [m, c] : f.terms()) {
        if (std::abs(c.imag()) > tol * scale)
            throw std::runtime_error(what + ": imaginary residue " + std::to_string(c.imag()));
        if (c.real() != 0.0) out.set(m, c.real());
    }
    return out;
}

namespace moser_detail {

// Forms of the real variables in terms of the complex ones; substituting
// them into a real H produces H in the complex chart. The elliptic pair
// mixes as q2 = (x2 - i y2)/sqrt(2), p2 = (-i x2 + y2)/sqrt(2).
inline std::array<CSeries, kVars> forms_real_in_complex(int D) {
    const double s = 1.0 / std::sqrt(2.0);
    std::array<CSeries, kVars> g;
    g[Q1] = CSeries::variable(Q1, D);
    g[P1] = CSeries::variable(P1, D);
    g[Q2] = CSeries::variable(Q2, D) * CD(s, 0) + CSeries::variable(P2, D) * CD(0, -s);
    g[P2] = CSeries::variable(Q2, D) * CD(0, -s) + CSeries::variable(P2, D) * CD(s, 0);
    return g;
}

// The inverse mixing: x2 = (q2 + i p2)/sqrt(2), y2 = (i q2 + p2)/sqrt(2).
inline std::array<CSeries, kVars> forms_complex_in_real(int D) {
    const double s = 1.0 / std::sqrt(2.0);
    std::array<CSeries, kVars> g;
    g[Q1] = CSeries::variable(Q1, D);
    g[P1] = CSeries::variable(P1, D);
    g[Q2] = CSeries::variable(Q2, D) * CD(s, 0) + CSeries::variable(P2, D) * CD(0, s);
    g[P2] = CSeries::variable(Q2, D) * CD(0, s) + CSeries::variable(P2, D) * CD(s, 0);
    return g;
}

}  // namespace moser_detail

inline CSeries complexify(const RSeries& H) {
    return to_complex(H).substitute(moser_detail::forms_real_in_complex(H.max_degree()));
}

inline RSeries realify(const CSeries& Hc, double tol = 1e-12) {
    return real_part_checked(Hc.substitute(moser_detail::forms_complex_in_real(Hc.max_degree())),
                             tol, "realify");
}

// ---- Polynomial maps ---------------------------------------------------------

template <class T>
struct PolyMap {
    std::array<Series<T>, kVars> comp;
    int degree = 0;

    static PolyMap identity(int D) {
        PolyMap m;
        m.degree = D;
        for (int i = 0; i < kVars; ++i) m.comp[i] = Series<T>::variable(i, D);
        return m;
    }

    template <class X>
    std::array<X, kVars> operator()(const std::array<X, kVars>& x) const {
        std::array<X, kVars> out;
        for (int i = 0; i < kVars; ++i) out[i] = comp[i].template evaluate<X>(x);
        return out;
    }

    // this o inner, truncated at this->degree.
    PolyMap after(const PolyMap& inner) const {
        PolyMap out;
        out.degree = degree;
        for (int i = 0; i < kVars; ++i)
            out.comp[i] = comp[i].truncated(degree).substitute(inner.comp);
        return out;
    }

    PolyMap truncated(int d) const {
        PolyMap out;
        out.degree = d;
        for (int i = 0; i < kVars; ++i) out.comp[i] = comp[i].truncated(d);
        return out;
    }

    double distance_to_identity() const {
        double mx = 0;
        for (int i = 0; i < kVars; ++i) {
            auto d = comp[i] - Series<T>::variable(i, degree);
            mx = std::max(mx, d.max_abs_coeff());
        }
        return mx;
    }
};

using CMap = PolyMap<CD>;
using RMap = PolyMap<double>;

// Series reversion of a tangent-to-identity map: G with F(G(y)) = y + O(D+1).
template <class T>
PolyMap<T> invert_near_identity(const PolyMap<T>& F) {
    const int D = F.degree;
    std::array<Series<T>, kVars> high;  // F - identity, each component O(2)
    for (int i = 0; i < kVars; ++i)
        high[i] = (F.comp[i] - Series<T>::variable(i, D)).truncated(D);
    PolyMap<T> G = PolyMap<T>::identity(D);
    for (int it = 0; it < D; ++it) {
        PolyMap<T> next;
        next.degree = D;
        for (int i = 0; i < kVars; ++i)
            next.comp[i] = Series<T>::variable(i, D) - high[i].substitute(G.comp);
        G = next;
    }
    return G;
}

// ---- Generating-function solve ----------------------------------------------

struct GeneratingFunction {
    // Mixed variables: x1, x2 live in slots Q1, Q2 and eta1, eta2 in P1, P2.
    CSeries W;
    int max_degree = 0;
};

struct GeneratingSolve {
    GeneratingFunction gen;
    CSeries K;             // two-variable profile, slots (0,1) = (x1*eta1, x2*eta2)
    double alpha1 = 0;     // hyperbolic rate
    double elliptic_rate = 0;  // alpha2/eps^2, carried as one number
};

// Lift a two-variable profile g(w1, w2) to the phase space via
// w1 -> xi1*eta1, w2 -> xi2*eta2.
template <class T>
Series<T> omega_lift(const Series<T>& g, int D) {
    Series<T> out(D);
    for (const auto& [m, c] : g.terms()) out.add_term(mono(m[0], m[1], m[0], m[1]), c);
    return out;
}

inline GeneratingSolve solve_generating_function(const CSeries& Hc, int max_degree) {
    const int D = max_degree;
    if (D < 2) throw std::invalid_argument("solve_generating_function: degree < 2");

    const CD c11 = Hc.coeff(mono(1, 0, 1, 0));  // x1*y1
    const CD c22 = Hc.coeff(mono(0, 1, 0, 1));  // x2*y2
    const double a1 = -c11.real();
    const double rate = (CD(0, 1) * c22).real();
    const double qscale = std::max(Hc.homogeneous_part(2).max_abs_coeff(), 1.0);
    if (std::abs(c11.imag()) > 1e-10 * qscale || std::abs((CD(0, 1) * c22).imag()) > 1e-10 * qscale)
        throw std::runtime_error("solve_generating_function: quadratic rates are not real");
    if (a1 == 0.0 || rate == 0.0)
        throw std::runtime_error("solve_generating_function: vanishing quadratic rate");
    {
        CSeries q2 = Hc.homogeneous_part(2);
        q2.add_term(mono(1, 0, 1, 0), -c11);
        q2.add_term(mono(0, 1, 0, 1), -c22);
        if (q2.max_abs_coeff() > 1e-10 * qscale)
            throw std::runtime_error("solve_generating_function: quadratic part not diagonal");
    }

    const CSeries Hw = Hc.truncated(D);
    GeneratingSolve out;
    out.alpha1 = a1;
    out.elliptic_rate = rate;
    out.gen.max_degree = D;
    out.gen.W = CSeries::monomial(mono(1, 0, 1, 0), CD(1, 0), D) +
                CSeries::monomial(mono(0, 1, 0, 1), CD(1, 0), D);
    out.K = CSeries(D / 2);
    out.K.set(mono(1, 0, 0, 0), CD(-a1, 0));
    out.K.set(mono(0, 1, 0, 0), CD(0, -rate));

    const CSeries eta1 = CSeries::variable(P1, D), eta2 = CSeries::variable(P2, D);
    auto residual = [&](const CSeries& W, const CSeries& K) {
        std::array<CSeries, kVars> hsub = {CSeries::variable(Q1, D), CSeries::variable(Q2, D),
                                           W.derivative(Q1).truncated(D),
                                           W.derivative(Q2).truncated(D)};
        std::array<CSeries, kVars> ksub = {W.derivative(P1).truncated(D),
                                           W.derivative(P2).truncated(D), eta1, eta2};
        return Hw.substitute(hsub) - omega_lift(K, D).substitute(ksub);
    };

    for (int N = 3; N <= D; ++N) {
        const CSeries errN = residual(out.gen.W, out.K).homogeneous_part(N);
        for (const auto& [m, c] : errN.terms()) {
            if (m[Q1] == m[P1] && m[Q2] == m[P2]) {
                out.K.add_term(mono(m[Q1], m[Q2], 0, 0), c);
            } else {
                const CD lam(a1 * (m[Q1] - m[P1]), rate * (m[Q2] - m[P2]));
                if (std::abs(lam) < 1e-12 * (std::abs(a1) + std::abs(rate)))
                    throw std::logic_error(
                        "solve_generating_function: zero divisor on a non-resonant monomial");
                out.gen.W.add_term(m, c / lam);
            }
        }
    }

    const CSeries check = residual(out.gen.W, out.K);
    const double scale =
        std::max({Hw.max_abs_coeff(), out.gen.W.max_abs_coeff(), out.K.max_abs_coeff(), 1.0});
    if (check.max_abs_coeff() > 1e-9 * scale)
        throw std::runtime_error("solve_generating_function: induction residual " +
                                 std::to_string(check.max_abs_coeff()));
    return out;
}

// Turn the implicit relations xi_i = dW/deta_i, y_i = dW/dx_i into the explicit
// chart map (xi, eta) -> (x, y) by reverting the series for x(xi, eta).
inline CMap chart_from_generating(const GeneratingFunction& gen) {
    const int D = gen.max_degree;
    const CSeries Wx1 = gen.W.derivative(Q1).truncated(D);
    const CSeries Wx2 = gen.W.derivative(Q2).truncated(D);
    // dW/deta_i - x_i = O(2); solve x = xi - (dW/deta - x)(x, eta) by iteration.
    const CSeries g1 = (gen.W.derivative(P1).truncated(D) - CSeries::variable(Q1, D)).truncated(D);
    const CSeries g2 = (gen.W.derivative(P2).truncated(D) - CSeries::variable(Q2, D)).truncated(D);
    std::array<CSeries, kVars> sub = {CSeries::variable(Q1, D), CSeries::variable(Q2, D),
                                      CSeries::variable(P1, D), CSeries::variable(P2, D)};
    for (int it = 0; it < D; ++it) {
        CSeries X1 = CSeries::variable(Q1, D) - g1.substitute(sub);
        CSeries X2 = CSeries::variable(Q2, D) - g2.substitute(sub);
        sub[Q1] = X1;
        sub[Q2] = X2;
    }
    CMap out;
    out.degree = D;
    out.comp[Q1] = sub[Q1];
    out.comp[Q2] = sub[Q2];
    out.comp[P1] = Wx1.substitute(sub);
    out.comp[P2] = Wx2.substitute(sub);
    return out;
}

// ---- Uniqueness criterion ----------------------------------------------------

// Average of phi/var over the torus directions: keep the monomials where,
// after dividing by the slot variable, the saddle and elliptic exponents pair
// up; the result is a profile in (w1, w2) stored in slots (0, 1).
template <class T>
Series<T> slot_bracket(const Series<T>& phi, int slot, int Dw) {
    Series<T> out(Dw);
    for (const auto& [m, c] : phi.terms()) {
        if (m[slot] == 0) continue;
        MultiIndex d = m;
        d[slot] -= 1;
        if (d[Q1] == d[P1] && d[Q2] == d[P2]) out.add_term(mono(d[Q1], d[Q2], 0, 0), c);
    }
    return out;
}

template <class T>
Series<T> exp_series(const Series<T>& f, int Dw) {
    if (std::abs((double)detail::coeff_abs(f.coeff(MultiIndex{}))) > 1e-14)
        throw std::logic_error("exp_series: nonzero constant term");
    Series<T> out = Series<T>::constant(T(1), Dw);
    Series<T> term = Series<T>::constant(T(1), Dw);
    for (int k = 1; k <= Dw; ++k) {
        term = (term * f).truncated(Dw) * (T(1) / T(k));
        out += term;
    }
    return out;
}

// The rescaling map xi_i -> e^{+dS/dw_i} xi_i, eta_i -> e^{-dS/dw_i} eta_i
// evaluated on w = (xi1*eta1, xi2*eta2). S is a profile in slots (0, 1).
inline CMap action_reparametrization(const CSeries& S, int D) {
    const int Dw = S.max_degree();
    const CSeries S1 = S.derivative(0).truncated(Dw), S2 = S.derivative(1).truncated(Dw);
    CMap out;
    out.degree = D;
    out.comp[Q1] = (omega_lift(exp_series(S1, Dw), D) * CSeries::variable(Q1, D)).truncated(D);
    out.comp[P1] = (omega_lift(exp_series(-S1, Dw), D) * CSeries::variable(P1, D)).truncated(D);
    out.comp[Q2] = (omega_lift(exp_series(S2, Dw), D) * CSeries::variable(Q2, D)).truncated(D);
    out.comp[P2] = (omega_lift(exp_series(-S2, Dw), D) * CSeries::variable(P2, D)).truncated(D);
    return out;
}

// w1*([phi1/xi1] - [psi1/eta1]) + i*w2*([phi2/xi2] - [psi2/eta2]); the chart
// is uniquely normalized when this profile vanishes.
inline CSeries criterion_q_profile(const CMap& F, int Dw) {
    const CSeries w1 = CSeries::variable(0, Dw + 1), w2 = CSeries::variable(1, Dw + 1);
    CSeries b1 = slot_bracket(F.comp[Q1], Q1, Dw) - slot_bracket(F.comp[P1], P1, Dw);
    CSeries b2 = slot_bracket(F.comp[Q2], Q2, Dw) - slot_bracket(F.comp[P2], P2, Dw);
    return w1 * b1.truncated(Dw + 1) + CD(0, 1) * (w2 * b2.truncated(Dw + 1));
}

inline CMap enforce_criterion_q(const CMap& Ft, CSeries* S_out = nullptr) {
    const int D = Ft.degree;
    const int Dw = std::max(D / 2, 1);
    const CSeries one = CSeries::constant(CD(1, 0), Dw);
    const CSeries b_phi1 = slot_bracket(Ft.comp[Q1], Q1, Dw) - one;
    const CSeries b_psi1 = slot_bracket(Ft.comp[P1], P1, Dw) - one;
    const CSeries b_phi2 = slot_bracket(Ft.comp[Q2], Q2, Dw) - one;
    const CSeries b_psi2 = slot_bracket(Ft.comp[P2], P2, Dw) - one;
    const CSeries w1 = CSeries::variable(0, Dw), w2 = CSeries::variable(1, Dw);

    CSeries S(Dw);
    for (int N = 2; N <= Dw; ++N) {
        const CSeries S1 = S.derivative(0).truncated(Dw), S2 = S.derivative(1).truncated(Dw);
        const CSeries e1p = exp_series(S1, Dw), e1m = exp_series(-S1, Dw);
        const CSeries e2p = exp_series(S2, Dw), e2m = exp_series(-S2, Dw);
        CSeries rhs = w1 * ((e1p - one - S1) + (b_phi1 * e1p).truncated(Dw) - (e1m - one + S1) -
                            (b_psi1 * e1m).truncated(Dw));
        rhs += CD(0, 1) * (w2 * ((e2p - one - S2) + (b_phi2 * e2p).truncated(Dw) -
                                 (e2m - one + S2) - (b_psi2 * e2m).truncated(Dw)));
        const CSeries rhsN = rhs.homogeneous_part(N);
        for (const auto& [m, c] : rhsN.terms()) S.add_term(m, c / CD(-2.0 * m[0], -2.0 * m[1]));
    }
    if (S_out) *S_out = S;
    return Ft.after(action_reparametrization(S, D));
}

// ---- Real packaging ----------------------------------------------------------

struct LocalNormalization {
    RMap F;          // real chart, H(F(xi,eta)) = K(xi1*eta1, xi2^2+eta2^2)
    RMap F_inverse;  // series reversion of F, identity through the degree
    RSeries K;       // profile in slots (0,1) = (xi1*eta1, xi2^2+eta2^2)
    double eps = 0, nu_hat = 0, mu = 0;
    double alpha1 = 0;         // hyperbolic rate, -dK/dw1 at 0
    double elliptic_rate = 0;  // alpha2/eps^2 = 2*dK/dw2 at 0
    double radius = 0;         // a-posteriori validity radius
    std::vector<double> residual_per_grade;  // relative |H o F - K| scan per grade
};

inline RMap realify_map(const CMap& Fs, double tol = 1e-12) {
    const int D = Fs.degree;
    const double s = 1.0 / std::sqrt(2.0);
    const auto pre_forms = moser_detail::forms_complex_in_real(D);
    std::array<CSeries, kVars> pre;
    for (int i = 0; i < kVars; ++i) pre[i] = Fs.comp[i].truncated(D).substitute(pre_forms);
    RMap out;
    out.degree = D;
    out.comp[Q1] = real_part_checked(pre[Q1], tol, "realify_map (saddle)");
    out.comp[P1] = real_part_checked(pre[P1], tol, "realify_map (saddle)");
    out.comp[Q2] =
        real_part_checked(pre[Q2] * CD(s, 0) + pre[P2] * CD(0, -s), tol, "realify_map (elliptic)");
    out.comp[P2] =
        real_part_checked(pre[Q2] * CD(0, -s) + pre[P2] * CD(s, 0), tol, "realify_map (elliptic)");
    return out;
}

// The second action trades x2*y2 for (i/2)(xi2^2 + eta2^2) under the real
// mixing, so the packaged profile is K_real(w1, w2) = K(w1, (i/2) w2).
inline RSeries realify_profile(const CSeries& K, double tol = 1e-12) {
    CSeries out(K.max_degree());
    for (const auto& [m, c] : K.terms()) out.set(m, c * std::pow(CD(0, 0.5), m[1]));
    return real_part_checked(out, tol, "realify_profile");
}

inline double aposteriori_radius(const RMap& F, double tol = 1e-6) {
    const RMap Flo = F.truncated(std::max(F.degree - 2, 1));
    std::mt19937 rng(2026);
    std::normal_distribution<double> gauss;
    std::vector<Vec4> dirs;
    for (int k = 0; k < 16; ++k) {
        Vec4 d;
        double n = 0;
        for (auto& v : d) {
            v = gauss(rng);
            n += v * v;
        }
        for (auto& v : d) v /= std::sqrt(n);
        dirs.push_back(d);
    }
    for (double rho = 1.0; rho > 1e-4; rho *= 0.9) {
        double worst = 0;
        for (const auto& d : dirs) {
            Vec4 x;
            for (int i = 0; i < kVars; ++i) x[i] = rho * d[i];
            const auto a = F(x), b = Flo(x);
            for (int i = 0; i < kVars; ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
        }
        if (worst < tol) return rho;
    }
    return 1e-4;
}

inline LocalNormalization realify_and_package(const CMap& Fs, const CSeries& K, double alpha1,
                                              double elliptic_rate, double eps, double nu_hat,
                                              double mu) {
    LocalNormalization out;
    out.F = realify_map(Fs);
    out.F_inverse = invert_near_identity(out.F);
    out.K = realify_profile(K);
    out.eps = eps;
    out.nu_hat = nu_hat;
    out.mu = mu;
    out.alpha1 = alpha1;
    out.elliptic_rate = elliptic_rate;
    out.radius = aposteriori_radius(out.F);
    return out;
}

// Full construction: H is a real polynomial Hamiltonian whose quadratic part
// is -alpha1*q1*p1 + (rate/2)*(q2^2 + p2^2) up to the complex mixing.
inline LocalNormalization local_normalization(const RSeries& H, double eps, double nu_hat,
                                              double mu, int max_degree = 10) {
    const int D = max_degree;
    // The gauge criterion at the top grade needs bracket data one phase degree
    // beyond the truncation, so the chart is built with a two-degree margin
    // and cut back to the requested degree afterwards.
    const int Di = D + 2;
    const RSeries Hw = H.truncated(D);
    const GeneratingSolve gs = solve_generating_function(complexify(H.truncated(Di)), Di);
    const CMap Fstar = enforce_criterion_q(chart_from_generating(gs.gen)).truncated(D);
    LocalNormalization pack = realify_and_package(Fstar, gs.K.truncated(D / 2), gs.alpha1,
                                                  gs.elliptic_rate, eps, nu_hat, mu);

    // Conjugacy residual H o F - K(xi1*eta1, xi2^2 + eta2^2), scanned per grade.
    const RSeries w1s = RSeries::monomial(mono(1, 0, 1, 0), 1.0, D);
    const RSeries w2s = RSeries::monomial(mono(0, 2, 0, 0), 1.0, D) +
                        RSeries::monomial(mono(0, 0, 0, 2), 1.0, D);
    RSeries kfull(D);
    for (const auto& [m, c] : pack.K.terms()) {
        RSeries t = RSeries::constant(c, D);
        for (int k = 0; k < m[0]; ++k) t = (t * w1s).truncated(D);
        for (int k = 0; k < m[1]; ++k) t = (t * w2s).truncated(D);
        kfull += t;
    }
    const RSeries hof = Hw.substitute(pack.F.comp);
    const RSeries resid = hof - kfull;
    // Relative per-grade scan: coefficient growth near the truncation degree
    // makes an absolute scan meaningless.
    pack.residual_per_grade.assign(D + 1, 0.0);
    for (int g = 0; g <= D; ++g) {
        const double mag = std::max(hof.homogeneous_part(g).max_abs_coeff(), 1.0);
        pack.residual_per_grade[g] = resid.homogeneous_part(g).max_abs_coeff() / mag;
    }
    return pack;
}

// ---- Uniform estimates across the parameter grid ------------------------------

struct EstimateReport {
    struct Entry {
        double eps = 0, nu_hat = 0, mu = 0;
        double M0 = 0;       // best constant in |F - F0| <= nu_hat * M0 * |x|^2
        double M0_phi2 = 0;  // same for the first elliptic component alone
    };
    std::vector<Entry> entries;
    double spread = 0;  // max/min of M0 over the nu_hat > 0 members
    bool bounded = true;
    std::string summary;
};

inline EstimateReport verify_uniform_estimates(const std::vector<LocalNormalization>& fam) {
    EstimateReport rep;
    if (fam.empty()) return rep;
    const LocalNormalization* base = nullptr;
    for (const auto& m : fam)
        if (m.nu_hat == 0.0) base = &m;
    if (!base)
        throw std::invalid_argument("verify_uniform_estimates: no nu_hat = 0 baseline member");
    double rad = 1e300;
    for (const auto& m : fam) rad = std::min(rad, m.radius);

    std::mt19937 rng(77);
    std::normal_distribution<double> gauss;
    std::vector<Vec4> pts;
    for (double rho : {0.25 * rad, 0.5 * rad, 0.9 * rad})
        for (int k = 0; k < 8; ++k) {
            Vec4 d;
            double n = 0;
            for (auto& v : d) {
                v = gauss(rng);
                n += v * v;
            }
            for (auto& v : d) v *= rho / std::sqrt(n);
            pts.push_back(d);
        }

    double lo = 1e300, hi = 0;
    std::ostringstream os;
    for (const auto& m : fam) {
        EstimateReport::Entry e;
        e.eps = m.eps;
        e.nu_hat = m.nu_hat;
        e.mu = m.mu;
        if (m.nu_hat > 0.0) {
            for (const auto& x : pts) {
                const auto a = m.F(x), b = base->F(x);
                double n2 = 0;
                for (double v : x) n2 += v * v;
                const double den = m.nu_hat * n2;
                for (int i = 0; i < kVars; ++i)
                    e.M0 = std::max(e.M0, std::abs(a[i] - b[i]) / den);
                e.M0_phi2 = std::max(e.M0_phi2, std::abs(a[Q2] - b[Q2]) / den);
            }
            lo = std::min(lo, e.M0);
            hi = std::max(hi, e.M0);
        }
        os << "eps=" << e.eps << " nu_hat=" << e.nu_hat << " mu=" << e.mu << " M0=" << e.M0
           << " M0_phi2=" << e.M0_phi2 << '\n';
        rep.entries.push_back(e);
    }
    rep.spread = (hi > 0 && lo < 1e300) ? hi / lo : 1.0;
    rep.bounded = rep.spread < 2.0;
    os << "spread=" << rep.spread << " bounded=" << (rep.bounded ? "yes" : "no") << '\n';
    rep.summary = os.str();
    return rep;
}

}  // namespace oiw
