// Flows and Poincare machinery for the three-parameter model: symplectic
// integration with the fast elliptic rotation split off, the sections
// Sigma_L = {q1 = delta} and Sigma_0 = F({eta1 = delta}), the exact local
// transit in the Moser chart, the global return map, and the graph
// representations that restrict the first return map to an energy level.
#pragma once

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "model.hpp"
#include "moser.hpp"

namespace oiw {

// ---- Phase points, sections, records ------------------------------------------

enum class Chart { original, scaled, local };

inline const char* chart_name(Chart c) {
    switch (c) {
        case Chart::original: return "original";
        case Chart::scaled: return "scaled";
        case Chart::local: return "local";
    }
    return "?";
}

struct PhasePoint {
    Vec4 x{0.0, 0.0, 0.0, 0.0};
    Chart chart = Chart::scaled;
};

struct SectionSpec {
    enum class Kind { SigmaL, Sigma0 };
    Kind kind = Kind::SigmaL;
    double delta = 0.05;
    Chart chart = Chart::scaled;
};

struct Diagnostics {
    double energy_drift = 0.0;
    double i2_drift = 0.0;
    double section_residual = 0.0;
};

struct ReturnRecord {
    PhasePoint start;
    PhasePoint image;
    double T = 0.0;
    double rotation_angle = 0.0;
    Diagnostics diagnostics;
};

// ---- Linear chart changes ------------------------------------------------------

// scaled (q1,p1) Jordan chart -> original underline chart (where the skeleton
// is 1/2 p^2 - 1/2 q^2 + c3 q^3) and back.
inline Vec4 scaled_to_original(const Vec4& x) { return HamiltonianModel::to_underline(x); }

inline Vec4 original_to_scaled(const Vec4& u) {
    const double s = 1.0 / std::sqrt(2.0);
    return {s * (u[Q1] - u[P1]), u[Q2], s * (u[Q1] + u[P1]), u[P2]};
}

// Elliptic-plane rotation; theta > 0 is the forward fast flow (the linear
// block q2' = Omega p2, p2' = -Omega q2 turns clockwise).
inline Vec4 rotate_elliptic(const Vec4& x, double theta) {
    const double c = std::cos(theta), s = std::sin(theta);
    Vec4 out = x;
    out[Q2] = c * x[Q2] + s * x[P2];
    out[P2] = -s * x[Q2] + c * x[P2];
    return out;
}

// ---- Symplectic one-step integration -------------------------------------------

inline double default_step(const HamiltonianModel& H) {
    return std::min(1e-3, H.eps * H.eps / 20.0);
}

namespace dyn_detail {

inline double max_abs(const Vec4& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// Implicit midpoint step (fixed-point iteration on the endpoint).  Conserves
// quadratic invariants of the flow exactly, so I2 is preserved whenever the
// continuous system preserves it.
template <class Field>
Vec4 midpoint_step(const Field& f, double t, const Vec4& x, double h) {
    Vec4 fx = f(t, x);
    Vec4 y;
    for (int i = 0; i < kVars; ++i) y[i] = x[i] + h * fx[i];
    const double tm = t + 0.5 * h;
    for (int it = 0; it < 200; ++it) {
        Vec4 mid;
        for (int i = 0; i < kVars; ++i) mid[i] = 0.5 * (x[i] + y[i]);
        const Vec4 fm = f(tm, mid);
        Vec4 yn;
        double d = 0.0;
        for (int i = 0; i < kVars; ++i) {
            yn[i] = x[i] + h * fm[i];
            d = std::max(d, std::abs(yn[i] - y[i]));
        }
        y = yn;
        if (d <= 1e-16 * (1.0 + max_abs(y))) return y;
    }
    throw std::runtime_error("stiffness: implicit midpoint iteration did not converge");
}

// Fourth-order triple-jump composition of midpoint steps (symplectic,
// conserves quadratic invariants step by step).
template <class Field>
Vec4 step4(const Field& f, double t, const Vec4& x, double h) {
    const double c = std::cbrt(2.0);
    const double w1 = 1.0 / (2.0 - c);
    const double w0 = -c / (2.0 - c);
    Vec4 y = midpoint_step(f, t, x, w1 * h);
    y = midpoint_step(f, t + w1 * h, y, w0 * h);
    return midpoint_step(f, t + (w1 + w0) * h, y, w1 * h);
}

}  // namespace dyn_detail

// Flow of the full model over time t with energy-drift step control: the step
// is halved until max_s |H(x(s)) - H(x(0))| <= tol * |t|.
inline PhasePoint integrate(const HamiltonianModel& H, const PhasePoint& x0, double t,
                            double tol = 1e-9, double step_override = 0.0) {
    if (x0.chart != Chart::scaled)
        throw std::invalid_argument("integrate: expects a scaled-chart phase point");
    if (t == 0.0) return x0;
    auto field = [&H](double, const Vec4& x) { return H.field(x); };
    const double H0 = H.H(x0.x);
    double h0 = step_override > 0.0 ? step_override : default_step(H);
    for (int attempt = 0; attempt < 12; ++attempt) {
        const long n = std::lround(std::ceil(std::abs(t) / h0));
        const double h = t / static_cast<double>(n);
        Vec4 x = x0.x;
        double drift = 0.0;
        for (long k = 0; k < n; ++k) {
            x = dyn_detail::step4(field, k * h, x, h);
            drift = std::max(drift, std::abs(H.H(x) - H0));
        }
        if (drift <= tol * std::abs(t)) return {x, Chart::scaled};
        h0 *= 0.5;
        if (h0 < 1e-9)
            throw std::runtime_error("stiffness: step size underflow in energy-drift control");
    }
    throw std::runtime_error("stiffness: energy drift did not reach tolerance");
}

// ---- Rotation split (co-rotating frame) ----------------------------------------

// Vector field of the slow system: x = rotate_elliptic(y, Omega t) solves the
// full model iff y solves y' = g(t, y) below; the linear fast block is removed
// analytically and the frame rotates with it.
inline Vec4 corotating_field(const HamiltonianModel& H, double Omega, double t, const Vec4& y) {
    const Vec4 x = rotate_elliptic(y, Omega * t);
    Vec4 f = H.field(x);
    f[Q2] -= Omega * x[P2];
    f[P2] += Omega * x[Q2];
    return rotate_elliptic(f, -Omega * t);
}

struct RotationSplit {
    double rotation_angle = 0.0;  // accumulated fast angle Omega * t
    PhasePoint slow_point;        // co-rotating (slow) state at time t
};

inline RotationSplit rotation_split(const HamiltonianModel& H, const PhasePoint& x0, double t,
                                    double tol = 1e-9, double step_override = 0.0) {
    if (x0.chart != Chart::scaled)
        throw std::invalid_argument("rotation_split: expects a scaled-chart phase point");
    const double Omega = H.elliptic_rate();
    if (t == 0.0) return {0.0, x0};
    auto field = [&H, Omega](double s, const Vec4& y) { return corotating_field(H, Omega, s, y); };
    const double H0 = H.H(x0.x);
    double h0 = step_override > 0.0 ? step_override : default_step(H);
    for (int attempt = 0; attempt < 12; ++attempt) {
        const long n = std::lround(std::ceil(std::abs(t) / h0));
        const double h = t / static_cast<double>(n);
        Vec4 y = x0.x;
        double drift = 0.0;
        for (long k = 0; k < n; ++k) {
            const double s = k * h;
            y = dyn_detail::step4(field, s, y, h);
            drift = std::max(drift, std::abs(H.H(rotate_elliptic(y, Omega * (s + h))) - H0));
        }
        if (drift <= tol * std::abs(t)) return {Omega * t, PhasePoint{y, Chart::scaled}};
        h0 *= 0.5;
        if (h0 < 1e-9)
            throw std::runtime_error("stiffness: step size underflow in energy-drift control");
    }
    throw std::runtime_error("stiffness: energy drift did not reach tolerance");
}

// ---- Analytic homoclinic of the truncated skeleton ------------------------------

// Solution of q'' = q - 3 c3 q^2 homoclinic to the origin.  Matching the
// 1/(1+cosh t) ansatz forces the amplitude A = 1/c3 (the coefficient of the
// sech^2(t/2) profile is 1/(2 c3)).
inline std::array<double, 2> analytic_homoclinic(double t, double c3) {
    if (c3 <= 0.0) throw std::invalid_argument("analytic_homoclinic: need c3 > 0");
    const double A = 1.0 / c3;
    const double d = 1.0 + std::cosh(t);
    return {A / d, -A * std::sinh(t) / (d * d)};
}

// The same orbit embedded in the scaled chart with (q2,p2) = (0,0).
inline Vec4 homoclinic_scaled_state(double t, double c3) {
    const auto qp = analytic_homoclinic(t, c3);
    return original_to_scaled({qp[0], 0.0, qp[1], 0.0});
}

// ---- Section-crossing time ------------------------------------------------------

// First root of q1(T) - delta in [t_lo, t_hi], solved on the slow system
// (the fast rotation does not move q1).  Bisection on the bracketed step,
// then Newton with dq1/dT = dH/dp1.
inline double return_time(const HamiltonianModel& H, const PhasePoint& x0,
                          const SectionSpec& section, double t_lo, double t_hi,
                          double step_override = 0.0) {
    if (section.kind != SectionSpec::Kind::SigmaL)
        throw std::invalid_argument("return_time: only Sigma_L crossings are time-solved");
    if (x0.chart != Chart::scaled)
        throw std::invalid_argument("return_time: expects a scaled-chart phase point");
    if (!(t_hi > t_lo) || t_lo < 0.0)
        throw std::invalid_argument("return_time: need 0 <= t_lo < t_hi");
    const double delta = section.delta;
    const double Omega = H.elliptic_rate();
    auto field = [&H, Omega](double s, const Vec4& y) { return corotating_field(H, Omega, s, y); };
    const double h = step_override > 0.0 ? step_override : default_step(H);

    double t = 0.0;
    Vec4 y = x0.x;
    double ta = 0.0, tb = 0.0;
    Vec4 ya{};
    bool found = false;
    double gprev = y[Q1] - delta;
    double tprev = 0.0;
    Vec4 yprev = y;
    bool started = t_lo <= 0.0;
    while (t < t_hi + h) {
        tprev = t;
        yprev = y;
        const double dt = std::min(h, t_hi + h - t);
        y = dyn_detail::step4(field, t, y, dt);
        t += dt;
        const double g = y[Q1] - delta;
        const bool window = (t > t_lo) && (tprev < t_hi);
        if (!started && window) started = true;
        if (window && gprev * g < 0.0) {
            ta = tprev;
            tb = t;
            ya = yprev;
            found = true;
            break;
        }
        gprev = g;
    }
    if (!found)
        throw std::runtime_error("no-crossing: q1 - delta has no sign change in the bracket");

    auto eval = [&](double s) { return dyn_detail::step4(field, ta, ya, s); };
    double lo = 0.0, hi = tb - ta;
    double glo = ya[Q1] - delta;
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = eval(mid)[Q1] - delta;
        if ((gm <= 0.0) == (glo <= 0.0)) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    double s = 0.5 * (lo + hi);
    for (int it = 0; it < 4; ++it) {
        const Vec4 ys = eval(s);
        const double g = ys[Q1] - delta;
        const double gp = field(ta + s, ys)[Q1];
        if (std::abs(gp) < 1e-10)
            throw std::runtime_error("tangency: section crossing is not transversal");
        s -= g / gp;
        if (s < 0.0) s = 0.0;
        if (s > tb - ta) s = tb - ta;
    }
    const double resid = std::abs(eval(s)[Q1] - delta);
    if (resid > 1e-10)
        throw std::runtime_error("return_time: section residual did not converge");
    return ta + s;
}

// ---- Polynomial model of the core Hamiltonian -----------------------------------

inline RSeries model_series(const HamiltonianModel& m, int D) {
    const RSeries q1 = RSeries::variable(Q1, D), p1 = RSeries::variable(P1, D);
    const RSeries q2 = RSeries::variable(Q2, D), p2 = RSeries::variable(P2, D);
    const RSeries u = q1 + p1;
    RSeries H = -(q1 * p1) + (m.c3 / (2.0 * std::sqrt(2.0))) * ((u * u) * u) +
                (m.omega / (2.0 * m.eps * m.eps)) * (q2 * q2 + p2 * p2);
    if (m.nu_hat != 0.0) {
        const double s = 1.0 / std::sqrt(2.0);
        const std::array<RSeries, kVars> U = {s * u, q2, s * (p1 - q1), p2};
        H += m.nu_hat * m.Qpoly().truncated(D).substitute(U);
        if (m.mu != 0.0)
            H += (m.nu_hat * m.mu * std::pow(m.eps, m.N0)) *
                 m.Rpoly().truncated(D).substitute(U);
    }
    return H.truncated(D);
}

// ---- Return-map machinery --------------------------------------------------------

class ReturnMapper {
  public:
    HamiltonianModel model;
    LocalNormalization chart;
    double delta = 0.05;
    double step = 1e-3;
    double t_budget = 300.0;

    ReturnMapper(const HamiltonianModel& m, double delta_ = 0.05, int chart_degree = 10,
                 double step_ = 0.0)
        : model(m),
          chart(local_normalization(model_series(m, chart_degree + 2), m.eps, m.nu_hat, m.mu,
                                    chart_degree)),
          delta(delta_),
          step(step_ > 0.0 ? step_ : default_step(m)) {
        if (!(delta > 0.0)) throw std::invalid_argument("ReturnMapper: need delta > 0");
    }

    // ---- chart plumbing ----
    Vec4 to_local(const Vec4& x_scaled) const { return chart.F_inverse(x_scaled); }
    Vec4 from_local(const Vec4& xi) const { return chart.F(xi); }

    Vec4 as_scaled(const PhasePoint& p) const {
        switch (p.chart) {
            case Chart::scaled: return p.x;
            case Chart::original: return original_to_scaled(p.x);
            case Chart::local: return chart.F(p.x);
        }
        throw std::logic_error("as_scaled: bad chart tag");
    }

    // The delta-smallness conditions are checked and reported, not assumed.
    std::string smallness_report() const {
        std::ostringstream os;
        os << std::setprecision(6);
        os << "delta = " << delta << ", entry window delta/24 = " << delta / 24.0
           << ", exit window delta/16 = " << delta / 16.0
           << ", chart a-posteriori radius = " << chart.radius
           << (delta <= chart.radius ? " (delta inside chart radius)"
                                     : " (WARNING: delta exceeds chart radius)");
        return os.str();
    }

    // ---- local transit (exact in the chart) ----
    struct LocalTransit {
        Vec4 xi_out;
        double T = 0.0;
        double rotation_angle = 0.0;
    };

    LocalTransit local_transit(const Vec4& xi) const {
        const double eta1 = xi[P1];
        if (eta1 <= 0.0)
            throw std::domain_error(
                "local_map: eta1 <= 0 - the point lies on or beyond the center-stable manifold");
        if (eta1 > delta / 24.0 * (1.0 + 1e-9))
            throw std::domain_error("local_map: eta1 beyond the delta/24 entry window");
        const double r2 = xi[Q2] * xi[Q2] + xi[P2] * xi[P2];
        if (std::sqrt(r2) > delta * (1.0 + 1e-9))
            throw std::domain_error("local_map: elliptic radius beyond delta");
        const double w1 = xi[Q1] * eta1;
        const double k1 = chart.K.derivative(0).evaluate<double>({w1, r2, 0.0, 0.0});
        const double k2 = chart.K.derivative(1).evaluate<double>({w1, r2, 0.0, 0.0});
        if (k1 >= 0.0)
            throw std::runtime_error("local_map: hyperbolic rate lost its sign on the orbit");
        LocalTransit out;
        out.T = std::log(delta / eta1) / (-k1);
        out.rotation_angle = 2.0 * k2 * out.T;
        out.xi_out = xi;
        out.xi_out[Q1] = xi[Q1] * eta1 / delta;
        out.xi_out[P1] = delta;
        const double c = std::cos(out.rotation_angle), s = std::sin(out.rotation_angle);
        out.xi_out[Q2] = c * xi[Q2] + s * xi[P2];
        out.xi_out[P2] = -s * xi[Q2] + c * xi[P2];
        return out;
    }

    ReturnRecord local_map(const PhasePoint& start) const {
        const Vec4 x = as_scaled(start);
        if (std::abs(x[Q1] - delta) > 1e-6 * std::max(delta, 1.0))
            throw std::domain_error("local_map: start is not on Sigma_L");
        const Vec4 xi = to_local(x);
        const LocalTransit tr = local_transit(xi);
        ReturnRecord rec;
        rec.start = {x, Chart::scaled};
        rec.image = {from_local(tr.xi_out), Chart::scaled};
        rec.T = tr.T;
        rec.rotation_angle = tr.rotation_angle;
        rec.diagnostics.energy_drift = std::abs(model.H(rec.image.x) - model.H(x));
        rec.diagnostics.i2_drift =
            std::abs(HamiltonianModel::I2(rec.image.x) - HamiltonianModel::I2(x));
        rec.diagnostics.section_residual = std::abs(to_local(rec.image.x)[P1] - delta);
        return rec;
    }

    // ---- global return from Sigma_0 to Sigma_L -----------------------------------
    ReturnRecord global_map_ret2(const PhasePoint& start) const {
        const Vec4 x = as_scaled(start);
        const Vec4 xi = to_local(x);
        if (std::abs(xi[P1] - delta) > 1e-5 * std::max(delta, 1.0))
            throw std::domain_error("global_map_ret2: start is not on Sigma_0");
        // The polynomial chart round trip leaves O(1e-7) residue at |x| ~ delta,
        // so the domain boundaries carry a small slack.
        const double slack = 1e-4 * delta;
        if (xi[Q1] < -slack || xi[Q1] > delta / 16.0 + slack)
            throw std::domain_error("global_map_ret2: xi1 outside [0, delta/16]");
        if (std::sqrt(xi[Q2] * xi[Q2] + xi[P2] * xi[P2]) > 0.5 * delta * (1.0 + 1e-9))
            throw std::domain_error("global_map_ret2: elliptic radius beyond delta/2");

        const double Omega = model.elliptic_rate();
        const HamiltonianModel& m = model;
        auto field = [&m, Omega](double s, const Vec4& y) {
            return corotating_field(m, Omega, s, y);
        };
        const double H0 = model.H(x);
        const double I20 = HamiltonianModel::I2(x);
        const double h = step;

        double t = 0.0;
        Vec4 y = x;
        double i2max = 0.0, hmax = 0.0;
        double gprev = y[Q1] - delta;  // ~ xi1 - delta < 0 at the start
        bool found = false;
        double ta = 0.0;
        Vec4 ya{};
        while (t < t_budget) {
            const Vec4 ynew = dyn_detail::step4(field, t, y, h);
            const double g = ynew[Q1] - delta;
            i2max = std::max(i2max, std::abs(HamiltonianModel::I2(ynew) - I20));
            hmax = std::max(
                hmax, std::abs(model.H(rotate_elliptic(ynew, Omega * (t + h))) - H0));
            if (gprev > 0.0 && g <= 0.0) {
                ta = t;
                ya = y;
                found = true;
                y = ynew;
                t += h;
                break;
            }
            gprev = g;
            y = ynew;
            t += h;
        }
        if (!found)
            throw std::runtime_error(
                "no-crossing: trajectory did not return to Sigma_L within the time budget");

        auto eval = [&](double s) { return dyn_detail::step4(field, ta, ya, s); };
        double lo = 0.0, hi = h;
        double glo = ya[Q1] - delta;
        for (int it = 0; it < 80; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double gm = eval(mid)[Q1] - delta;
            if ((gm <= 0.0) == (glo <= 0.0)) {
                lo = mid;
                glo = gm;
            } else {
                hi = mid;
            }
        }
        double s = 0.5 * (lo + hi);
        for (int it = 0; it < 4; ++it) {
            const Vec4 ys = eval(s);
            const double g = ys[Q1] - delta;
            const double gp = field(ta + s, ys)[Q1];
            if (std::abs(gp) < 1e-10)
                throw std::runtime_error("tangency: section crossing is not transversal");
            s = std::min(std::max(s - g / gp, 0.0), h);
        }
        const double T = ta + s;
        const Vec4 yT = eval(s);
        const Vec4 img = rotate_elliptic(yT, Omega * T);

        ReturnRecord rec;
        rec.start = {x, Chart::scaled};
        rec.image = {img, Chart::scaled};
        rec.T = T;
        rec.rotation_angle = Omega * T;
        rec.diagnostics.energy_drift = std::max(hmax, std::abs(model.H(img) - H0));
        rec.diagnostics.i2_drift =
            std::max(i2max, std::abs(HamiltonianModel::I2(img) - I20));
        rec.diagnostics.section_residual = std::abs(img[Q1] - delta);
        return rec;
    }

    // ---- first return: local transit then global excursion -----------------------
    ReturnRecord first_return(const PhasePoint& start) const {
        const ReturnRecord r1 = local_map(start);
        const ReturnRecord r2 = global_map_ret2(r1.image);
        ReturnRecord rec;
        rec.start = r1.start;
        rec.image = r2.image;
        rec.T = r1.T + r2.T;
        rec.rotation_angle = r1.rotation_angle + r2.rotation_angle;
        rec.diagnostics.energy_drift =
            std::max(r1.diagnostics.energy_drift, r2.diagnostics.energy_drift);
        rec.diagnostics.i2_drift = r1.diagnostics.i2_drift + r2.diagnostics.i2_drift;
        rec.diagnostics.section_residual = r2.diagnostics.section_residual;
        return rec;
    }

    // ---- graph representations ----------------------------------------------------

    // W^cs cap Sigma_L = {p1 = g_cs(q2,p2)}: root of psi1^-(delta, p1, q2, p2) = 0,
    // strictly increasing in p1.
    double graph_cs(double q2, double p2) const {
        if (q2 * q2 + p2 * p2 > delta * delta * (1.0 + 1e-9))
            throw std::domain_error("graph_cs: (q2,p2) outside B(0, delta)");
        const RSeries& psi = chart.F_inverse.comp[P1];
        const RSeries dpsi = psi.derivative(P1);
        auto g = [&](double p1) { return psi.evaluate<double>({delta, q2, p1, p2}); };
        double lo = -delta, hi = delta;
        double glo = g(lo);
        const double ghi = g(hi);
        if (glo > 0.0 || ghi < 0.0)
            throw std::runtime_error(
                "graph_cs: no root in [-delta, delta]; section radius too large for the chart");
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double gm = g(mid);
            if ((gm <= 0.0) == (glo <= 0.0)) {
                lo = mid;
                glo = gm;
            } else {
                hi = mid;
            }
        }
        double p1 = 0.5 * (lo + hi);
        for (int it = 0; it < 4; ++it) {
            const double gp = dpsi.evaluate<double>({delta, q2, p1, p2});
            if (gp <= 0.0) break;
            p1 -= g(p1) / gp;
        }
        return p1;
    }

    // Energy of the periodic orbit P^alpha through the chart profile.
    double periodic_orbit_energy(double alpha) const {
        if (alpha < 0.0) throw std::domain_error("periodic_orbit_energy: need alpha >= 0");
        return chart.K.evaluate<double>({0.0, alpha, 0.0, 0.0});
    }

    // Cubic-and-higher part of the core: H = -q1 p1 + (omega/2eps^2) I2 + H3.
    double H3(double q1, double p1, double q2, double p2) const {
        const Vec4 x{q1, q2, p1, p2};
        return model.core(x) + q1 * p1 -
               model.omega / (2.0 * model.eps * model.eps) * (q2 * q2 + p2 * p2);
    }

    // Energy-level graph on Sigma_L: the unique p1 in [-delta, delta] with
    // delta p1 - H3(delta, p1, q2, p2) = htilde(q2, p2, alpha).
    double graph_energy_level(double alpha, double q2, double p2) const {
        const double htil = model.omega / (2.0 * model.eps * model.eps) * (q2 * q2 + p2 * p2) -
                            periodic_orbit_energy(alpha);
        if (std::abs(htil) > delta * delta)
            throw std::runtime_error("graph_energy_level: out-of-window (|h| > delta^2)");
        auto g = [&](double p1) { return delta * p1 - H3(delta, p1, q2, p2) - htil; };
        double lo = -delta, hi = delta;
        double glo = g(lo);
        if (glo > 0.0 || g(hi) < 0.0)
            throw std::runtime_error("graph_energy_level: no root in [-delta, delta]");
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double gm = g(mid);
            if ((gm <= 0.0) == (glo <= 0.0)) {
                lo = mid;
                glo = gm;
            } else {
                hi = mid;
            }
        }
        return 0.5 * (lo + hi);
    }

    // Point of W^u(P^alpha) cap Sigma_0 (the alpha-circle at eta1 = delta).
    Vec4 unstable_circle_point(double alpha, double theta) const {
        const double r = std::sqrt(alpha);
        return from_local({0.0, r * std::cos(theta), delta, r * std::sin(theta)});
    }

    // Trace of W^cs(P^alpha) on Sigma_L in the (q2,p2) plane: for each angle,
    // solve xi1 so that the chart image lands on {q1 = delta}.
    std::vector<std::array<double, 2>> stable_trace_curve(double alpha, int n) const {
        std::vector<std::array<double, 2>> out;
        out.reserve(n);
        const double r = std::sqrt(alpha);
        for (int k = 0; k < n; ++k) {
            const double th = 2.0 * M_PI * k / n;
            const double xi2 = r * std::cos(th), eta2 = r * std::sin(th);
            double xi1 = delta;
            for (int it = 0; it < 60; ++it) {
                const Vec4 img = from_local({xi1, xi2, 0.0, eta2});
                const double g = img[Q1] - delta;
                const double gp =
                    chart.F.comp[Q1].derivative(Q1).evaluate<double>({xi1, xi2, 0.0, eta2});
                if (std::abs(gp) < 1e-12) break;
                const double nxt = xi1 - g / gp;
                if (std::abs(nxt - xi1) < 1e-15) {
                    xi1 = nxt;
                    break;
                }
                xi1 = nxt;
            }
            const Vec4 img = from_local({xi1, xi2, 0.0, eta2});
            out.push_back({img[Q2], img[P2]});
        }
        return out;
    }

    // Return map restricted to the energy level of P^alpha, read in (q2,p2).
    ReturnRecord restricted_return_record(double alpha, double q2, double p2) const {
        const double p1 = graph_energy_level(alpha, q2, p2);
        return first_return({{delta, q2, p1, p2}, Chart::scaled});
    }

    std::array<double, 2> restricted_return(double alpha, double q2, double p2) const {
        const ReturnRecord rec = restricted_return_record(alpha, q2, p2);
        return {rec.image.x[Q2], rec.image.x[P2]};
    }

    // Jacobian determinant of the restricted map.  The map twists violently
    // (the transit time is logarithmic in eta1), so a plain finite difference
    // carries a large O(h^2) error; two step sizes with a Richardson
    // extrapolation recover the determinant to ~1e-7.
    double restricted_return_det(double alpha, double q2, double p2, double h = 3e-7) const {
        auto det_fd = [&](double hh) {
            const auto fpp = restricted_return(alpha, q2 + hh, p2);
            const auto fpm = restricted_return(alpha, q2 - hh, p2);
            const auto fqp = restricted_return(alpha, q2, p2 + hh);
            const auto fqm = restricted_return(alpha, q2, p2 - hh);
            const double j11 = (fpp[0] - fpm[0]) / (2 * hh), j12 = (fqp[0] - fqm[0]) / (2 * hh);
            const double j21 = (fpp[1] - fpm[1]) / (2 * hh), j22 = (fqp[1] - fqm[1]) / (2 * hh);
            return j11 * j22 - j12 * j21;
        };
        const double d1 = det_fd(h);
        const double d2 = det_fd(h / 3.0);
        return d2 + (d2 - d1) / 8.0;
    }
};

// ---- CSV artifacts ---------------------------------------------------------------

struct OrbitSample {
    double t = 0.0;
    PhasePoint point;
    double energy = 0.0;
    double action = 0.0;  // I2
};

inline std::vector<OrbitSample> sample_orbit(const HamiltonianModel& H, const PhasePoint& x0,
                                             double t, int n, double tol = 1e-9,
                                             double step_override = 0.0) {
    if (n < 1) throw std::invalid_argument("sample_orbit: need n >= 1");
    std::vector<OrbitSample> out;
    out.reserve(n + 1);
    PhasePoint p = x0;
    out.push_back({0.0, p, H.H(p.x), HamiltonianModel::I2(p.x)});
    const double dt = t / n;
    for (int k = 1; k <= n; ++k) {
        p = integrate(H, p, dt, tol, step_override);
        out.push_back({k * dt, p, H.H(p.x), HamiltonianModel::I2(p.x)});
    }
    return out;
}

inline void write_orbit_csv(std::ostream& os, const std::vector<OrbitSample>& samples) {
    os << "t,chart,q1,p1,q2,p2,H,I2\n";
    os << std::setprecision(17);
    for (const auto& s : samples)
        os << s.t << ',' << chart_name(s.point.chart) << ',' << s.point.x[Q1] << ','
           << s.point.x[P1] << ',' << s.point.x[Q2] << ',' << s.point.x[P2] << ',' << s.energy
           << ',' << s.action << '\n';
}

inline void write_return_csv(std::ostream& os, const std::vector<ReturnRecord>& recs) {
    os << "q1,p1,q2,p2,img_q1,img_p1,img_q2,img_p2,T,rotation_angle\n";
    os << std::setprecision(17);
    for (const auto& r : recs)
        os << r.start.x[Q1] << ',' << r.start.x[P1] << ',' << r.start.x[Q2] << ','
           << r.start.x[P2] << ',' << r.image.x[Q1] << ',' << r.image.x[P1] << ','
           << r.image.x[Q2] << ',' << r.image.x[P2] << ',' << r.T << ',' << r.rotation_angle
           << '\n';
}

}  // namespace oiw
