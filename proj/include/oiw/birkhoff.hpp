// Hamiltonian normal forms near a fixed point: grade-by-grade homological
// solves with the factorial inner product, Lie-flow transforms, and the
// 0^2(i omega)-specific scaling into the -q1*p1 Jordan chart.
#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "rational.hpp"
#include "series.hpp"

namespace oiw {

// ---- Quadratic part ----------------------------------------------------------

struct QuadraticPart {
    RSeries H2;          // homogeneous of degree 2
    Eigen::Matrix4d L0;  // L0 x = J grad H2(x)

    static QuadraticPart from_h2(const RSeries& h2) {
        int d = 0;
        if (!h2.is_homogeneous(&d) || (!h2.empty() && d != 2))
            throw std::invalid_argument("QuadraticPart: H2 must be homogeneous of degree 2");
        QuadraticPart q;
        q.H2 = h2;
        q.L0.setZero();
        for (int i = 0; i < kVars; ++i) {
            RSeries fi = hamiltonian_field_component(h2, i);
            for (int j = 0; j < kVars; ++j) {
                MultiIndex m;
                m[j] = 1;
                q.L0(i, j) = fi.coeff(m);
            }
        }
        return q;
    }

    // 1/2 p1^2 + (omega0/2)(q2^2 + p2^2): double-zero + elliptic pair.
    static QuadraticPart resonance_02iw(double omega0, int max_degree = 8) {
        RSeries h2(max_degree);
        h2.set(mono(0, 0, 2, 0), 0.5);
        h2.set(mono(0, 2, 0, 0), omega0 / 2);
        h2.set(mono(0, 0, 0, 2), omega0 / 2);
        return from_h2(h2);
    }

    // (omega0/2)(q1^2 + p1^2): single elliptic block (oracle cases).
    static QuadraticPart elliptic_1dof(double omega0, int max_degree = 8) {
        RSeries h2(max_degree);
        h2.set(mono(2, 0, 0, 0), omega0 / 2);
        h2.set(mono(0, 0, 2, 0), omega0 / 2);
        return from_h2(h2);
    }
};

// Compose a series with a linear map: f(M x).
template <class T, class M>
Series<T> compose_linear(const Series<T>& f, const M& mat) {
    std::array<Series<T>, kVars> lin;
    for (int i = 0; i < kVars; ++i) {
        lin[i] = Series<T>(f.max_degree());
        for (int j = 0; j < kVars; ++j) {
            MultiIndex m;
            m[j] = 1;
            if (mat(i, j) != 0.0) lin[i].set(m, T(mat(i, j)));
        }
    }
    return f.substitute(lin);
}

// H2 composed with -J: its linear flow is e^{t L0^*}.
inline RSeries h2_minus_j(const RSeries& h2,
                          const SymplecticStructure& S = SymplecticStructure::standard()) {
    Eigen::Matrix4d mJ;
    for (int i = 0; i < kVars; ++i)
        for (int j = 0; j < kVars; ++j) mJ(i, j) = -S.J[i][j];
    return compose_linear(h2, mJ);
}

namespace detail {

// Matrix of S |-> {H2, S} on the grade-l monomial basis (columns = images).
inline Eigen::MatrixXd homological_matrix(const RSeries& h2, const std::vector<MultiIndex>& basis) {
    const int d = (int)basis.size();
    std::map<MultiIndex, int> pos;
    for (int k = 0; k < d; ++k) pos[basis[k]] = k;
    const int l = basis.empty() ? 0 : basis[0].degree();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
    for (int k = 0; k < d; ++k) {
        RSeries img = poisson_bracket(h2, RSeries::monomial(basis[k], 1.0, l));
        for (const auto& [m, c] : img.terms()) A(pos.at(m), k) = c;
    }
    return A;
}

inline Eigen::VectorXd to_vector(const RSeries& f, const std::vector<MultiIndex>& basis) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero((int)basis.size());
    for (int k = 0; k < (int)basis.size(); ++k) v(k) = f.coeff(basis[k]);
    return v;
}

inline RSeries from_vector(const Eigen::VectorXd& v, const std::vector<MultiIndex>& basis,
                           int max_degree) {
    RSeries f(max_degree);
    for (int k = 0; k < (int)basis.size(); ++k) f.set(basis[k], v(k));
    return f;
}

}  // namespace detail

// Split P = N - {H2, S} with N in ker A* (the G-orthogonal complement of
// Im A under the factorial inner product) and S G-orthogonal to ker A.
// Float path: SVD in Fischer-scaled coordinates, relative cutoff svd_tol.
inline std::pair<RSeries, RSeries> homological_decompose(const RSeries& P, const QuadraticPart& Q,
                                                         double svd_tol = 1e-10) {
    int l = 0;
    if (!P.is_homogeneous(&l)) throw std::invalid_argument("homological_decompose: P not homogeneous");
    if (P.empty()) return {RSeries(P.max_degree()), RSeries(P.max_degree())};
    if (l < 2) throw std::invalid_argument("homological_decompose: degree must be >= 2");

    const auto basis = grade_basis(l);
    const int d = (int)basis.size();
    Eigen::MatrixXd A = detail::homological_matrix(Q.H2, basis);

    // Fischer scaling: c_hat = W c with W = diag(sqrt(alpha!)).
    Eigen::VectorXd w(d);
    for (int k = 0; k < d; ++k) {
        double f = 1.0;
        for (int i = 0; i < kVars; ++i) f *= factorial(basis[k][i]);
        w(k) = std::sqrt(f);
    }
    Eigen::MatrixXd Ah = w.asDiagonal() * A * w.cwiseInverse().asDiagonal();
    Eigen::VectorXd Ph = w.asDiagonal() * detail::to_vector(P, basis);

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(Ah, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double cut = svd_tol * (sv.size() ? sv(0) : 0.0);
    int r = 0;
    while (r < sv.size() && sv(r) > cut) ++r;

    Eigen::MatrixXd Ur = svd.matrixU().leftCols(r), Vr = svd.matrixV().leftCols(r);
    Eigen::VectorXd proj = Ur * (Ur.transpose() * Ph);   // component in Im A
    Eigen::VectorXd Nh = Ph - proj;                       // G-orthogonal projection onto ker A*
    Eigen::VectorXd Sh = -Vr * sv.head(r).cwiseInverse().asDiagonal() * (Ur.transpose() * Ph);

    RSeries N = detail::from_vector(w.cwiseInverse().asDiagonal() * Nh, basis, P.max_degree());
    RSeries S = detail::from_vector(w.cwiseInverse().asDiagonal() * Sh, basis, P.max_degree());

    RSeries resid = N - poisson_bracket(Q.H2, S) - P;
    double scale = std::max(1.0, P.max_abs_coeff());
    if (resid.max_abs_coeff() > 1e-9 * scale)
        throw std::runtime_error("homological_decompose: residual " +
                                 std::to_string(resid.max_abs_coeff()) + " on grade " +
                                 std::to_string(l));
    return {N, S};
}

// Exact-rational path (low degrees); same decomposition over Q.
inline std::pair<QSeries, QSeries> homological_decompose(const QSeries& P, const QSeries& H2q) {
    int l = 0;
    if (!P.is_homogeneous(&l)) throw std::invalid_argument("homological_decompose: P not homogeneous");
    if (P.empty()) return {QSeries(P.max_degree()), QSeries(P.max_degree())};
    const auto basis = grade_basis(l);
    const int d = (int)basis.size();
    std::map<MultiIndex, int> pos;
    for (int k = 0; k < d; ++k) pos[basis[k]] = k;

    auto matrix_of = [&](const QSeries& h) {
        DenseMat<Rational> M(d, d);
        for (int k = 0; k < d; ++k) {
            QSeries img = poisson_bracket(h, QSeries::monomial(basis[k], Rational(1), l));
            for (const auto& [m, c] : img.terms()) M(pos.at(m), k) = c;
        }
        return M;
    };
    DenseMat<Rational> A = matrix_of(H2q);

    // H2 o (-J) exactly.
    std::array<QSeries, kVars> lin;
    const auto Jm = SymplecticStructure::standard();
    for (int i = 0; i < kVars; ++i) {
        lin[i] = QSeries(H2q.max_degree());
        for (int j = 0; j < kVars; ++j)
            if (Jm.J[i][j] != 0.0) lin[i].set([&] { MultiIndex m; m[j] = 1; return m; }(),
                                              Rational(-(long long)Jm.J[i][j]));
    }
    DenseMat<Rational> B = matrix_of(H2q.substitute(lin));

    auto Kstar = kernel_basis(B);                 // basis of ker A*
    auto K0 = kernel_basis(A);                    // basis of ker A
    std::vector<Rational> gram(d);                // G = diag(alpha!)
    for (int k = 0; k < d; ++k) {
        long long f = 1;
        for (int i = 0; i < kVars; ++i) f *= ifactorial(basis[k][i]);
        gram[k] = Rational(f);
    }
    // (ker A)^perp_G = ker of K0^T G.
    std::vector<std::vector<Rational>> Kc;
    if (K0.empty()) {
        for (int k = 0; k < d; ++k) {
            std::vector<Rational> e(d, Rational(0));
            e[k] = Rational(1);
            Kc.push_back(std::move(e));
        }
    } else {
        DenseMat<Rational> KG((int)K0.size(), d);
        for (int i = 0; i < (int)K0.size(); ++i)
            for (int j = 0; j < d; ++j) KG(i, j) = K0[i][j] * gram[j];
        Kc = kernel_basis(KG);
    }
    if ((int)(Kstar.size() + Kc.size()) != d)
        throw std::runtime_error("homological_decompose: exact splitting dimension mismatch");

    // Solve [K* | A Kc] z = P; N = K* a, S = -Kc b.
    DenseMat<Rational> M(d, d);
    for (int j = 0; j < (int)Kstar.size(); ++j)
        for (int i = 0; i < d; ++i) M(i, j) = Kstar[j][i];
    for (int j = 0; j < (int)Kc.size(); ++j)
        for (int i = 0; i < d; ++i) {
            Rational s(0);
            for (int k = 0; k < d; ++k) s += A(i, k) * Kc[j][k];
            M(i, (int)Kstar.size() + j) = s;
        }
    std::vector<Rational> p(d, Rational(0));
    for (int k = 0; k < d; ++k) p[k] = P.coeff(basis[k]);
    auto z = solve_exact(M, p);

    QSeries N(P.max_degree()), S(P.max_degree());
    for (int k = 0; k < d; ++k) {
        Rational cn(0), cs(0);
        for (int j = 0; j < (int)Kstar.size(); ++j) cn += z[j] * Kstar[j][k];
        for (int j = 0; j < (int)Kc.size(); ++j) cs -= z[(int)Kstar.size() + j] * Kc[j][k];
        N.set(basis[k], cn);
        S.set(basis[k], cs);
    }
    return {N, S};
}

// ---- Lie flows ---------------------------------------------------------------

// Time-t Hamiltonian flow of a polynomial S by Picard iteration on truncated
// time-Taylor series; sub-steps keep each Picard map a contraction.
inline Vec4 lie_transform_flow(const RSeries& S, Vec4 x, double t,
                               std::optional<double> radius = std::nullopt, double tol = 1e-13,
                               int max_iter = 50) {
    std::array<std::vector<std::pair<MultiIndex, double>>, kVars> F;
    int fdeg = 0;
    for (int i = 0; i < kVars; ++i) {
        RSeries fi = hamiltonian_field_component(S, i);
        fdeg = std::max(fdeg, fi.max_degree());
        for (const auto& [m, c] : fi.terms()) F[i].emplace_back(m, c);
    }
    auto norm = [](const Vec4& v) {
        return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]);
    };
    if (radius && norm(x) > *radius)
        throw std::runtime_error("lie_transform_flow: start outside validity radius");

    // Lipschitz bound of the field on the ball of radius r (majorant evaluation).
    auto lipschitz = [&](double r) {
        double L = 0.0;
        for (int i = 0; i < kVars; ++i)
            for (const auto& [m, c] : F[i])
                L += std::abs(c) * m.degree() * std::pow(r, std::max(m.degree() - 1, 0));
        return L;
    };

    using TPoly = std::vector<double>;  // Taylor coefficients in step-local time
    double remaining = t;
    long guard = 0;
    while (remaining != 0.0) {
        if (++guard > 2000000)
            throw std::runtime_error("lie_transform_flow: radius too large for contraction");
        double r = 1.3 * norm(x) + 1e-3;
        bool accepted = false;
        Vec4 xnew = x;
        while (!accepted) {
            const double L = std::max(lipschitz(r), 1e-12);
            const double h =
                std::abs(remaining) <= 0.1 / L ? remaining : (remaining > 0 ? 0.1 / L : -0.1 / L);
            // Picard/Taylor recurrence: pass k settles the coefficient of s^{k+1}.
            std::array<TPoly, kVars> y;
            for (int i = 0; i < kVars; ++i) y[i] = {x[i]};
            int quiet = 0;
            bool converged = false;
            for (int k = 0; k < std::max(max_iter, 16) && !converged; ++k) {
                // Powers of each component, truncated at time-degree k.
                std::array<std::vector<TPoly>, kVars> pw;
                auto tmul = [&](const TPoly& a, const TPoly& b) {
                    TPoly c(std::min((int)(a.size() + b.size()) - 1, k + 1), 0.0);
                    for (size_t i = 0; i < a.size(); ++i)
                        for (size_t j = 0; j < b.size() && i + j < c.size(); ++j)
                            c[i + j] += a[i] * b[j];
                    return c;
                };
                for (int v = 0; v < kVars; ++v) {
                    pw[v].assign(1, TPoly{1.0});
                    for (int e = 1; e <= fdeg; ++e) pw[v].push_back(tmul(pw[v].back(), y[v]));
                }
                double newmag = 0.0;
                for (int i = 0; i < kVars; ++i) {
                    TPoly fi(k + 1, 0.0);
                    for (const auto& [m, c] : F[i]) {
                        TPoly term{c};
                        for (int v = 0; v < kVars; ++v)
                            if (m[v] > 0) term = tmul(term, pw[v][m[v]]);
                        for (size_t j = 0; j < term.size(); ++j) fi[j] += term[j];
                    }
                    y[i].resize(k + 2, 0.0);
                    y[i][k + 1] = fi[k] / (double)(k + 1);
                    newmag = std::max(newmag, std::abs(y[i][k + 1]) *
                                                  std::pow(std::abs(h), (double)(k + 1)));
                }
                quiet = newmag <= tol * 0.1 ? quiet + 1 : 0;
                converged = quiet >= 2;
            }
            if (!converged) throw std::runtime_error("lie_transform_flow: Picard iteration stalled");
            for (int i = 0; i < kVars; ++i) {
                double v = 0.0;
                for (size_t k = y[i].size(); k-- > 0;) v = v * h + y[i][k];
                xnew[i] = v;
            }
            if (norm(xnew) <= r) {
                accepted = true;
                remaining -= h;
            } else {
                r *= 2.0;  // trajectory left the trust ball: redo with a bigger radius
            }
        }
        x = xnew;
        if (radius && norm(x) > *radius)
            throw std::runtime_error("lie_transform_flow: trajectory left validity radius");
    }
    return x;
}

// e^{ad_g} H with ad_g H = {H, g}, truncated at degree D.  Exact (finite) for
// deg g >= 3; for quadratic g the series converges when g is small.
inline RSeries exp_ad(const RSeries& g, const RSeries& H, int D) {
    RSeries out = H.truncated(D), term = out;
    for (int k = 1; k <= 400; ++k) {
        term = poisson_bracket(term, g).truncated(D) * (1.0 / k);
        if (term.empty()) return out;
        out += term;
        if (term.max_abs_coeff() <= 1e-18 * std::max(1.0, out.max_abs_coeff()) && k > 4) return out;
    }
    throw std::runtime_error("exp_ad: Lie series did not terminate (generator too large)");
}

// Composition of unit-time Lie flows; generators applied so that
// map = phi_{g_1} o phi_{g_2} o ... (g_1 stored first).
struct CanonicalMap {
    std::vector<RSeries> generators;
    int degree = 6;

    Vec4 operator()(Vec4 x) const {
        for (auto it = generators.rbegin(); it != generators.rend(); ++it)
            x = lie_transform_flow(*it, x, 1.0);
        return x;
    }
    Vec4 inverse(Vec4 x) const {
        for (const auto& g : generators) x = lie_transform_flow(g, x, -1.0);
        return x;
    }
    // Polynomial expansion of the map's components.
    std::array<RSeries, kVars> components() const {
        std::array<RSeries, kVars> out;
        for (int i = 0; i < kVars; ++i) {
            out[i] = RSeries::variable(i, degree);
            for (const auto& g : generators) out[i] = exp_ad(g, out[i], degree);
        }
        return out;
    }
    // H o map as a truncated series.
    RSeries pullback(const RSeries& H, int D) const {
        RSeries out = H.truncated(D);
        for (const auto& g : generators) out = exp_ad(g, out, D);
        return out;
    }
};

// ---- Normal-form pipeline ----------------------------------------------------

struct NormalFormResult {
    QuadraticPart Q;
    RSeries N;                    // normal-form correction (grades 2..n) beyond H2
    std::vector<RSeries> S_list;  // flow generators, in application order
    CanonicalMap transform;
    int remainder_degree = 0;     // n + 1
    RSeries residual;             // grades >= n+1 of the transformed Hamiltonian
    double residual_norm = 0.0;
};

inline NormalFormResult normal_form_pipeline(const RSeries& H, int n, const QuadraticPart& Q) {
    if (!H.homogeneous_part(0).empty() || !H.homogeneous_part(1).empty())
        throw std::invalid_argument("normal_form_pipeline: need H(0)=0 and grad H(0)=0");
    const int D = std::max(n + 1, H.max_degree());
    RSeries Hc = H.truncated(D);
    NormalFormResult out;
    out.Q = Q;
    out.transform.degree = D;
    out.remainder_degree = n + 1;

    for (int l = 2; l <= n; ++l) {
        // Grade 2 needs iteration: a quadratic generator feeds back into its own grade.
        const int rounds = (l == 2) ? 40 : 1;
        for (int round = 0; round < rounds; ++round) {
            RSeries P = Hc.homogeneous_part(l);
            if (l == 2) P -= Q.H2;
            auto [N_l, S_l] = homological_decompose(P.truncated(l), Q);
            if (P.empty() || (P - N_l).max_abs_coeff() <= 1e-13 * std::max(1.0, P.max_abs_coeff()))
                break;  // already normalized on this grade
            // Grade l of H o phi_S^1 is P + {H2, S} = P + (N - P) = N.
            RSeries g = S_l;
            Hc = exp_ad(g, Hc, D);
            out.S_list.push_back(g);
            out.transform.generators.push_back(g);
            if (l == 2 && round == rounds - 1)
                throw std::runtime_error("normal_form_pipeline: grade-2 iteration stalled");
        }
    }
    RSeries full = Hc.truncated(n);
    out.N = full - Q.H2;
    for (int l = n + 1; l <= D; ++l) out.residual += Hc.homogeneous_part(l);
    out.residual = out.residual.truncated(D);
    out.residual_norm = out.residual.max_abs_coeff();
    return out;
}

inline NormalFormResult normal_form_pipeline(const RSeries& H, int n) {
    return normal_form_pipeline(H, n, QuadraticPart::from_h2(H.homogeneous_part(2).truncated(2)));
}

// ---- Resonant-symmetry check -------------------------------------------------

// True iff N is invariant under the e^{t L0^*} action: algebraically
// ({H2 o (-J), N} = 0) and by sampling the linear flow.
inline bool rotational_symmetrize_check(const RSeries& N, const QuadraticPart& Q,
                                        double tol = 1e-10) {
    const double scale = std::max(1.0, N.max_abs_coeff());
    if (poisson_bracket(h2_minus_j(Q.H2), N).max_abs_coeff() > tol * scale) return false;
    for (double t : {0.37, -1.21, 2.9}) {
        Eigen::Matrix4d M = (t * Q.L0.transpose()).exp();
        if ((compose_linear(N, M) - N).max_abs_coeff() > tol * scale * 1e2) return false;
    }
    return true;
}

// ---- Scaling and the three-parameter family -----------------------------------

struct ScaledModel {
    double eps = 0;     // eps^4 = c1(lambda)
    double omega = 0;   // omega(eps)
    double c2 = 0;      // cubic coefficient before scaling
    double c3 = 0;      // cubic coefficient after scaling (target, default 2*sqrt(2))
    int n = 3;
    RSeries N_poly;     // tail NN(q1_, I2_): the eps^2-graded normal-form part, underline chart
    RSeries R_poly;     // normalized remainder R (the model adds mu*nu*eps^N0 * R)
    std::function<double(const Vec4&)> remainder;  // evaluates R_poly
    double rho0 = 0;    // cutoff radius
};

inline double homoclinic_loop_radius(double c3) {
    // max |(q,p)| along the explicit loop of 1/2 p^2 - 1/2 q^2 + c3 q^3.
    const double A = 1.0 / c3;
    double r = 0.0;
    for (double t = 0.0; t <= 25.0; t += 0.01) {
        const double den = 1.0 + std::cosh(t);
        const double q = A / den, p = -A * std::sinh(t) / (den * den);
        r = std::max(r, std::hypot(q, p));
    }
    return r;
}

inline ScaledModel scale_and_reparametrize(const NormalFormResult& nf, double lambda,
                                           double c3 = 2.0 * std::sqrt(2.0)) {
    RSeries full = nf.Q.H2 + nf.N;
    const double c1t = -2.0 * full.coeff(mono(2, 0, 0, 0));
    const double c2t = full.coeff(mono(3, 0, 0, 0));
    const double wq = full.coeff(mono(0, 2, 0, 0)), wp = full.coeff(mono(0, 0, 0, 2));
    if (std::abs(wq - wp) > 1e-10 * std::max(1.0, std::abs(wq)))
        throw std::runtime_error("scale_and_reparametrize: elliptic block not isotropic");
    const double omega_t = 2.0 * wq;

    if (lambda == 0.0 || c1t == 0.0)
        throw std::runtime_error("scale_and_reparametrize: lambda = 0, scaling rejected (eps = 0)");
    if (c1t < 0.0)
        throw std::runtime_error("scale_and_reparametrize: c10*lambda < 0, wrong half-bifurcation");
    if (std::abs(c2t) < 1e-12 || c3 <= 0.0)
        throw std::runtime_error("scale_and_reparametrize: degenerate hypothesis (c2 = 0)");

    ScaledModel out;
    const double eps_t = std::sqrt(c1t);  // eps~ = eps^2
    out.eps = std::pow(c1t, 0.25);
    out.omega = omega_t;
    out.c2 = c2t;
    out.c3 = c3;
    out.n = nf.remainder_degree - 1;

    // Spatial factor alpha and energy multiplier beta chosen so the skeleton
    // is exactly 1/2 p^2 - 1/2 q^2 + c3 q^3 + (omega/2 eps^2) I2.
    const double alpha = c3 / c2t;
    const double beta = c2t * c2t / (c3 * c3 * std::pow(eps_t, 6));
    auto transport = [&](const RSeries& f, int Dout) {
        RSeries g(Dout);
        for (const auto& [m, c] : f.terms()) {
            const double fac = beta * std::pow(alpha * eps_t * eps_t, m[Q1]) *
                               std::pow(alpha * eps_t * eps_t * eps_t, m[P1]) *
                               std::pow(alpha * std::pow(eps_t, 2.5), m[Q2] + m[P2]);
            g.add_term(m, c * fac);
        }
        return g;
    };

    RSeries scaled = transport(full, full.max_degree());
    RSeries skeleton(full.max_degree());
    skeleton.set(mono(0, 0, 2, 0), 0.5);
    skeleton.set(mono(2, 0, 0, 0), -0.5);
    skeleton.set(mono(3, 0, 0, 0), c3);
    skeleton.set(mono(0, 2, 0, 0), omega_t / (2.0 * eps_t));
    skeleton.set(mono(0, 0, 0, 2), omega_t / (2.0 * eps_t));
    RSeries tail = scaled - skeleton;
    // Structural check: the tail is O(|q1| I2 + eps^2 (...)^2): p1-free,
    // rotation-invariant in (q2, p2), and free of skeleton-grade monomials.
    const double lim = 1e-9 * std::max(1.0, scaled.max_abs_coeff());
    RSeries I2s(tail.max_degree());
    I2s.set(mono(0, 2, 0, 0), 1.0);
    I2s.set(mono(0, 0, 0, 2), 1.0);
    if (poisson_bracket(tail, I2s).max_abs_coeff() > lim)
        throw std::runtime_error("scale_and_reparametrize: tail not a function of (q1, I2)");
    for (const auto& [m, c] : tail.terms()) {
        if (m[P1] != 0 && std::abs(c) > lim)
            throw std::runtime_error("scale_and_reparametrize: tail not a function of (q1, I2)");
        if ((m.degree() < 3 || (m.degree() == 3 && m[Q2] + m[P2] == 0)) && std::abs(c) > lim)
            throw std::runtime_error("scale_and_reparametrize: skeleton-grade leak in the tail");
    }
    out.N_poly = tail * (1.0 / (eps_t));  // eps^2 = eps_t graded factor taken out

    const double rscale = std::pow(out.eps, 4 * out.n - 8);
    out.R_poly = transport(nf.residual, nf.residual.max_degree()) * (rscale > 0 ? 1.0 / rscale : 0.0);
    RSeries rp = out.R_poly;
    out.remainder = [rp](const Vec4& x) { return rp.evaluate<double>({x[0], x[1], x[2], x[3]}); };
    out.rho0 = 2.5 * homoclinic_loop_radius(c3);
    return out;
}

}  // namespace oiw
