// Acceptance harness: one pass/fail line per criterion, nonzero exit on failure.
#include <oiw/annulus.hpp>
#include <oiw/birkhoff.hpp>

#include <Eigen/Dense>

#include <chrono>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "test_util.hpp"

using namespace oiw;
using oiw::testutil::random_series;

namespace {

int g_failures = 0;
std::chrono::steady_clock::time_point g_t0;

void start() { g_t0 = std::chrono::steady_clock::now(); }

void report(int idx, const std::string& name, bool ok, const std::string& detail) {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - g_t0).count();
    std::ostringstream line;
    line << (ok ? "PASS" : "FAIL") << "  " << std::setw(2) << idx << ". " << name << " — "
         << detail << "  [" << std::fixed << std::setprecision(1) << secs << " s]";
    std::cout << line.str() << std::endl;
    if (!ok) ++g_failures;
}

HamiltonianModel desk_model(double eps, double nu, double mu) {
    RSeries Q = RSeries::monomial(mono(1, 2, 0, 0), 1.0, 6) +
                RSeries::monomial(mono(1, 0, 0, 2), 1.0, 6);
    RSeries R = RSeries::monomial(mono(0, 3, 0, 0), 1.0, 6);
    return HamiltonianModel(eps, nu, mu, 5, 1.0, 2.0 * std::sqrt(2.0), Q, R, 1.0);
}

double symplectic_defect(const RMap& F, const Vec4& x) {
    Eigen::Matrix4d J = Eigen::Matrix4d::Zero();
    J(Q1, P1) = J(Q2, P2) = 1;
    J(P1, Q1) = J(P2, Q2) = -1;
    Eigen::Matrix4d Df;
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i) Df(i, j) = F.comp[i].derivative(j).evaluate<double>(x);
    return (Df.transpose() * J * Df - J).cwiseAbs().maxCoeff();
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(3) << std::scientific << v;
    return os.str();
}

Vec4 random_ball_point(std::mt19937& rng, double radius) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (;;) {
        Vec4 x{u(rng), u(rng), u(rng), u(rng)};
        double r2 = 0;
        for (double v : x) r2 += v * v;
        if (r2 <= 1.0) {
            for (double& v : x) v *= radius;
            return x;
        }
    }
}

}  // namespace

int main() {
    std::cout << "acceptance suite\n";
    std::mt19937 rng(20260826u);

    // 1. Normal-form correctness on random quartic perturbations.
    start();
    {
        double worst_res = 0.0, worst_conj = 0.0;
        const auto Q = QuadraticPart::resonance_02iw(1.0, 4);
        for (int trial = 0; trial < 20; ++trial) {
            RSeries H = Q.H2 + 0.3 * random_series(3, 4, 0.6, 4);
            NormalFormResult nf = normal_form_pipeline(H, 4, Q);
            worst_res = std::max(
                worst_res, poisson_bracket(h2_minus_j(Q.H2), nf.N).max_abs_coeff());
            worst_conj = std::max(
                worst_conj,
                (nf.transform.pullback(H, 4) - Q.H2 - nf.N).truncated(4).max_abs_coeff());
        }
        report(1, "normal-form correctness", worst_res <= 1e-10 && worst_conj <= 1e-10,
               "max commutator residual " + fmt(worst_res) + ", max conjugacy defect " +
                   fmt(worst_conj));
    }

    // 2. The resonant normal form is independent of p1 through degree 6.
    start();
    {
        double leak = 0.0;
        const auto Q = QuadraticPart::resonance_02iw(1.0, 6);
        for (int trial = 0; trial < 3; ++trial) {
            RSeries H = Q.H2 + 0.3 * random_series(3, 6, 0.5, 6);
            NormalFormResult nf = normal_form_pipeline(H, 6, Q);
            for (const auto& [m, c] : nf.N.terms())
                if (m[P1] != 0) leak = std::max(leak, std::abs(c));
        }
        report(2, "p1-independence through degree 6", leak <= 1e-10,
               "max coefficient on p1-monomials " + fmt(leak));
    }

    // Shared desk return mapper: eps = 0.35, nu_hat = 0.3 eps^2, mu = 0, chart degree 10.
    const HamiltonianModel desk = desk_model(0.35, 0.3 * 0.35 * 0.35, 0.0);
    const ReturnMapper rm005(desk, 0.05, 10);
    ReturnMapper rm002 = rm005;  // same chart, tighter section
    rm002.delta = 0.02;
    const double band002 = 0.02 * 0.02 * 0.35 * 0.35;

    // 3. Symplecticity of the produced canonical maps.
    start();
    {
        double worst = 0.0;
        // Lie composition realized as a coordinate map of degree 8.
        const auto Q = QuadraticPart::resonance_02iw(1.0, 4);
        RSeries H = Q.H2 + 0.3 * random_series(3, 4, 0.6, 4);
        NormalFormResult nf = normal_form_pipeline(H, 4, Q);
        RMap lie;
        lie.degree = 8;
        for (int i = 0; i < 4; ++i)
            lie.comp[i] = nf.transform.pullback(RSeries::variable(i, 8), 8);
        for (int k = 0; k < 100; ++k)
            worst = std::max(worst, symplectic_defect(lie, random_ball_point(rng, 0.05)));
        const double lie_worst = worst;
        // Moser chart, sampled within its a-posteriori radius.
        const double r = std::min(0.4 * rm005.chart.radius, 0.015);
        for (int k = 0; k < 100; ++k)
            worst = std::max(worst, symplectic_defect(rm005.chart.F, random_ball_point(rng, r)));
        report(3, "symplecticity of canonical maps", worst <= 1e-8,
               "max |DF' J DF - J|: lie " + fmt(lie_worst) + ", chart " +
                   fmt(worst));
    }

    // 4. Explicit homoclinic: ODE residual and symplectic shadowing.
    start();
    {
        const double c3 = 2.0 * std::sqrt(2.0);
        const double A = 1.0 / c3;
        double worst_ode = 0.0;
        for (int k = 0; k <= 400; ++k) {
            const double t = -10.0 + 20.0 * k / 400.0;
            const auto qp = analytic_homoclinic(t, c3);
            const double d = 1.0 + std::cosh(t);
            // closed-form q'' against the skeleton field q'' = q - 3 c3 q^2
            const double qpp =
                -A * (std::cosh(t) * d - 2.0 * std::sinh(t) * std::sinh(t)) / (d * d * d);
            worst_ode = std::max(worst_ode, std::abs(qpp - (qp[0] - 3.0 * c3 * qp[0] * qp[0])));
        }
        HamiltonianModel skel = desk_model(0.35, 0.0, 0.0);
        PhasePoint p{homoclinic_scaled_state(-8.0, c3), Chart::scaled};
        double worst_dev = 0.0;
        const int steps = 160;
        for (int k = 1; k <= steps; ++k) {
            p = integrate(skel, p, 16.0 / steps);
            const Vec4 want = homoclinic_scaled_state(-8.0 + 16.0 * k / steps, c3);
            for (int i = 0; i < 4; ++i) worst_dev = std::max(worst_dev, std::abs(p.x[i] - want[i]));
        }
        report(4, "explicit homoclinic orbit", worst_ode <= 1e-12 && worst_dev <= 1e-6,
               "ODE residual " + fmt(worst_ode) + ", shadowing deviation " +
                   fmt(worst_dev));
    }

    // 5. Moser-chart conjugacy at eps = 0.35, degree 10.
    start();
    {
        const RSeries Hs = model_series(desk, 12);
        const auto& ch = rm005.chart;
        double worst = 0.0;
        for (int k = 0; k < 1000; ++k) {
            const Vec4 xi = random_ball_point(rng, ch.radius);
            const Vec4 x = ch.F(xi);
            const double hval = Hs.evaluate<double>(x);
            const double kval =
                ch.K.evaluate<double>({xi[Q1] * xi[P1], xi[Q2] * xi[Q2] + xi[P2] * xi[P2], 0, 0});
            worst = std::max(worst, std::abs(hval - kval));
        }
        const double k1 = ch.K.coeff(mono(1, 0, 0, 0));
        const double k2 = ch.K.coeff(mono(0, 1, 0, 0));
        const double want2 = desk.omega / (2.0 * desk.eps * desk.eps);
        const bool lin_ok = std::abs(k1 + 1.0) <= 1e-10 && std::abs(k2 - want2) <= 1e-10;
        report(5, "moser-chart conjugacy", worst <= 1e-8 && lin_ok,
               "sup |H o F - K| = " + fmt(worst) + ", K linear part (" +
                   std::to_string(k1) + ", " + std::to_string(k2) + ")");
    }

    // 6. Uniformity of the chart perturbation in eps at fixed nu_hat scaling.
    start();
    {
        std::vector<double> constants;
        for (double eps : {0.5, 0.35, 0.25}) {
            const double nu = 0.3 * eps * eps;
            const HamiltonianModel m = desk_model(eps, nu, 0.0);
            const HamiltonianModel m0 = desk_model(eps, 0.0, 0.0);
            const auto ch = local_normalization(model_series(m, 10), eps, nu, 0.0, 8);
            const auto ch0 = local_normalization(model_series(m0, 10), eps, 0.0, 0.0, 8);
            double sup = 0.0;
            for (int k = 0; k < 200; ++k) {
                const Vec4 x = random_ball_point(rng, 0.01);
                const Vec4 a = ch.F(x), b = ch0.F(x);
                for (int i = 0; i < 4; ++i) sup = std::max(sup, std::abs(a[i] - b[i]));
            }
            constants.push_back(sup / nu);
        }
        const double ratio = *std::max_element(constants.begin(), constants.end()) /
                             *std::min_element(constants.begin(), constants.end());
        report(6, "uniformity of the chart perturbation", ratio < 2.0,
               "fitted constants " + std::to_string(constants[0]) + ", " +
                   std::to_string(constants[1]) + ", " + std::to_string(constants[2]) +
                   " (ratio " + std::to_string(ratio) + ")");
    }

    // 7. Conservation: exact at mu = 0, linear-in-mu drift for mu > 0.
    start();
    {
        const double alpha_label = 0.2 * 0.25 * 0.03 * band002;
        double worst0 = 0.0;
        for (int k = 0; k < 6; ++k) {
            const double a = (0.035 + 0.008 * k) * band002;
            const double phi = 0.9 * k;
            const auto rec = rm002.restricted_return_record(
                alpha_label, std::sqrt(a) * std::cos(phi), -std::sqrt(a) * std::sin(phi));
            worst0 = std::max(worst0, std::abs(HamiltonianModel::I2(rm002.as_scaled(rec.image)) -
                                               HamiltonianModel::I2(rec.start.x)));
        }

        const double eps = 0.4, delta = 0.02;
        const double band = delta * delta * eps * eps;
        const double label = 0.2 * 0.25 * 0.03 * band;
        std::vector<double> mus{1e-3, 1e-4, 1e-5}, sups;
        for (double mu : mus) {
            const HamiltonianModel m = desk_model(eps, 0.3 * eps * eps, mu);
            const ReturnMapper rmu(m, delta, 8);
            double sup = 0.0;
            for (double f : {0.03, 0.055, 0.08})
                for (int k = 0; k < 4; ++k) {
                    const double r = std::sqrt(f * band), phi = 2.0 * M_PI * k / 4 + 0.3;
                    const auto rec = rmu.restricted_return_record(label, r * std::cos(phi),
                                                                  -r * std::sin(phi));
                    sup = std::max(sup, std::abs(HamiltonianModel::I2(rmu.as_scaled(rec.image)) -
                                                 HamiltonianModel::I2(rec.start.x)));
                }
            sups.push_back(sup);
        }
        const double slope = fit_loglog_slope(mus, sups);
        report(7, "action conservation and mu-scaling",
               worst0 <= 1e-10 && std::abs(slope - 1.0) <= 0.1,
               "mu=0 drift " + fmt(worst0) + ", log-log slope " +
                   fmt(slope));
    }

    // 8. Area preservation of the restricted return map.
    start();
    {
        const double alpha_label = 0.2 * 0.25 * 0.03 * band002;
        double worst_det = 0.0;
        for (int k = 0; k < 50; ++k) {
            const double a = (0.032 + 0.046 * (k % 10) / 9.0) * band002;
            const double phi = 2.0 * M_PI * k / 50.0;
            const double det = rm002.restricted_return_det(alpha_label, std::sqrt(a) * std::cos(phi),
                                                           -std::sqrt(a) * std::sin(phi));
            worst_det = std::max(worst_det, std::abs(det - 1.0));
        }
        double worst_area = 0.0;
        for (double frac : {0.18, 0.10}) {
            const double alpha = frac * 0.25 * 0.03 * band002;
            auto area_n = [&](int n) {
                ClosedCurve c = unstable_intersection_curve(rm002, alpha, n, 0.03, 10.0);
                return std::abs(curve_area(c));
            };
            const double a64 = area_n(64), a128 = area_n(128);
            const double rich = a128 + (a128 - a64) / 3.0;  // kills the n^-2 polygon bias
            worst_area = std::max(worst_area, std::abs(rich - M_PI * alpha) / (M_PI * alpha));
        }
        report(8, "area preservation", worst_det <= 1e-6 && worst_area <= 1e-4,
               "max |det - 1| = " + fmt(worst_det) + ", circle-area rel. err. " +
                   fmt(worst_area));
    }

    // 9. Twist sign on the band at delta = 0.05, and monotone return time.
    start();
    {
        const double band = 0.05 * 0.05 * 0.35 * 0.35;
        TwistOptions topt;
        topt.n_rho = 7;
        topt.n_q = 2;
        TwistProfile tp = to_twist_coordinates(rm005, rm005, 0.2 * 0.25 * topt.c1 * band, topt);
        KamReport kr = check_kam_hypotheses(tp);

        const double q2 = std::sqrt(0.055 * band002), p2 = 0.0;
        const double g = rm002.graph_cs(q2, p2);
        bool mono_T = true;
        double prevT = std::numeric_limits<double>::infinity();
        for (int j = 0; j < 8; ++j) {
            const double p1 = g + 1e-6 * rm002.delta * std::pow(10.0, 0.35 * j);
            const auto rec = rm002.first_return({{rm002.delta, q2, p1, p2}, Chart::scaled});
            if (rec.T >= prevT) mono_T = false;
            prevT = rec.T;
        }
        report(9, "negative twist and monotone return time", kr.twist_negative && mono_T,
               kr.summary + "; return time strictly decreasing in p1: " +
                   (mono_T ? "yes" : "no"));
    }

    // 10. Invariant-circle finder: integrable slice and standard-map oracle.
    start();
    {
        auto twist = [](double q, double rho) { return std::array<double, 2>{q + rho, rho}; };
        const double w = noble_near(0.35);
        const auto flat = find_invariant_circle(twist, 1.0, 0.2, 0.5, w, 64, 60, 1e-13);
        const bool integrable_ok = flat.found && flat.residual <= 1e-12;

        auto std_map = [](double K) {
            return [K](double q, double rho) {
                const double rho1 = rho - K / (2.0 * M_PI) * std::sin(2.0 * M_PI * q);
                return std::array<double, 2>{q + rho1, rho1};
            };
        };
        auto orbit_stays = [&](double K, double q0, double rho0, double lo, double hi) {
            double q = q0, rho = rho0;
            for (int i = 0; i < 100000; ++i) {
                auto y = std_map(K)(q, rho);
                q = y[0];
                rho = y[1];
                if (rho < lo || rho > hi) return false;
            }
            return true;
        };
        const auto sub = find_invariant_circle(std_map(0.5), 1.0, 0.25, 0.45, w, 64, 60, 1e-10);
        const bool sub_ok = sub.found && orbit_stays(0.5, 0.0, sub.rho0, 0.2, 0.5);
        const auto sup = find_invariant_circle(std_map(2.5), 1.0, 0.25, 0.45, w, 64, 60, 1e-10);
        const bool sup_ok = !sup.found && !orbit_stays(2.5, 0.0, w, 0.0, 1.0);
        report(10, "invariant-circle finder", integrable_ok && sub_ok && sup_ok,
               "integrable residual " + fmt(flat.residual) + ", K=0.5 found " +
                   (sub_ok ? "and confined" : "(oracle failed)") + ", K=2.5 " +
                   (sup_ok ? "rejected with escape" : "(oracle failed)"));
    }

    // 11. Hunt smoke test: one-loop intersections across the admissible window.
    start();
    {
        bool all_ok = true;
        double worst_res = 0.0;
        std::ostringstream counts;
        for (double frac : {0.10, 0.14, 0.18, 0.22, 0.25}) {
            const double alpha = frac * 0.25 * 0.03 * band002;
            HuntOptions opt;
            const HuntResult hr = hunt_homoclinic(rm002, alpha, 5, opt);
            all_ok = all_ok && hr.found && hr.loop_count == 1;
            for (double r : hr.residuals) worst_res = std::max(worst_res, r);
            counts << (counts.str().empty() ? "" : ",") << hr.loop_count;
        }
        report(11, "hunt smoke test", all_ok && worst_res <= 1e-6,
               "loop counts [" + counts.str() + "], max intersection residual " +
                   fmt(worst_res));
    }

    // 12. Majorant toolkit properties on random small series.
    start();
    {
        bool ok = true;
        for (int trial = 0; trial < 200; ++trial) {
            auto f = random_series(0, 3);
            auto g = majorant(f) + majorant(random_series(0, 3));
            ok = ok && prec(f, g) && (prec(f, g) == prec(majorant(f), g));          // item 1
            for (int i = 0; i < kVars; ++i) ok = ok && prec(f.derivative(i), g.derivative(i));
            ok = ok && prec(collapse_to_one_variable(f), collapse_to_one_variable(g));  // item 3
            ok = ok && prec((f * f).truncated(6), (g * g).truncated(6));            // item 2 (+,*)
            ok = ok && prec(f + f, g + g);

            // item 4: geometric single-variable bound
            auto h = collapse_to_one_variable(random_series(1, 4));
            if (!h.empty()) {
                const double rho = 0.8;
                const int n0 = h.low_degree();
                double norm = 0.0;
                for (const auto& [m, c] : h.terms()) norm += std::abs(c) * std::pow(rho, m.degree());
                RSeries bound(h.max_degree());
                for (int k = n0; k <= h.max_degree(); ++k)
                    bound.set(mono(k, 0, 0, 0),
                              norm / std::pow(rho, n0) * std::pow(1.0 / rho, k - n0));
                ok = ok && prec(h, bound);
            }

            // item 5: monotonicity of the geometric resummation
            auto geom = [](const RSeries& s) {
                const int D = s.max_degree();
                RSeries out = RSeries::constant(1.0, D), p = RSeries::constant(1.0, D);
                for (int k = 1; k <= D; ++k) {
                    p = (p * s).truncated(D);
                    out += p;
                }
                return out;
            };
            auto a = majorant(random_series(1, 3));
            auto b = a + majorant(random_series(1, 3));
            ok = ok && prec(geom(a), geom(b));

            // mean-value bound: F(Phi+Psi) - F(Phi) prec |DF|(|Phi|+|Psi|) . |Psi|
            if (trial % 8 == 0) {
                const int D = 9;
                auto F = random_series(0, 3, 0.5, D);
                std::array<RSeries, kVars> Phi, Psi, PhiPsi, AbsSum, AbsPsi;
                for (int i = 0; i < kVars; ++i) {
                    Phi[i] = random_series(1, 3, 0.4, D);
                    Psi[i] = random_series(1, 3, 0.4, D);
                    PhiPsi[i] = Phi[i] + Psi[i];
                    AbsSum[i] = majorant(Phi[i]) + majorant(Psi[i]);
                    AbsPsi[i] = majorant(Psi[i]);
                }
                auto lhs = F.substitute(PhiPsi) - F.substitute(Phi);
                RSeries rhs(D);
                for (int i = 0; i < kVars; ++i)
                    rhs += (majorant(F.derivative(i).truncated(D)).substitute(AbsSum) * AbsPsi[i])
                               .truncated(D);
                ok = ok && prec(lhs, rhs * (1.0 + 1e-12));
            }
            if (!ok) break;
        }
        report(12, "majorant toolkit properties", ok,
               ok ? "all domination identities hold on 200 random series"
                  : "a domination identity failed");
    }

    std::cout << (g_failures == 0 ? "acceptance: all criteria pass"
                                  : "acceptance: " + std::to_string(g_failures) +
                                        " criterion(s) failed")
              << std::endl;
    return g_failures == 0 ? 0 : 1;
}
