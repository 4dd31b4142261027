#include <catch2/catch_amalgamated.hpp>
#include <oiw/birkhoff.hpp>
#include <oiw/model.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include "test_util.hpp"

using namespace oiw;
using oiw::testutil::rng;

namespace {

// Independent oracle for the homological operator: build the matrix of
// S |-> grad S . L0 x by sampling, not by poisson_bracket.
Eigen::MatrixXd sampled_homological_matrix(const QuadraticPart& Q,
                                           const std::vector<MultiIndex>& basis) {
    const int d = (int)basis.size();
    const int l = basis[0].degree();
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    const int npts = 3 * d;
    Eigen::MatrixXd V(npts, d), W(npts, d);
    for (int p = 0; p < npts; ++p) {
        Vec4 x{U(rng()), U(rng()), U(rng()), U(rng())};
        Eigen::Vector4d xe(x[0], x[1], x[2], x[3]);
        Eigen::Vector4d v = Q.L0 * xe;
        for (int k = 0; k < d; ++k) {
            RSeries mk = RSeries::monomial(basis[k], 1.0, l);
            V(p, k) = mk.evaluate<double>(x);
            // directional derivative of the monomial along L0 x, by central differences
            const double h = 1e-5;
            Vec4 xp, xm;
            for (int i = 0; i < kVars; ++i) {
                xp[i] = x[i] + h * v(i);
                xm[i] = x[i] - h * v(i);
            }
            W(p, k) = (mk.evaluate<double>(xp) - mk.evaluate<double>(xm)) / (2 * h);
        }
    }
    // W = V A: images expanded back in the basis, fitted column by column.
    return V.colPivHouseholderQr().solve(W);
}

RSeries action_I(int slot_q, int slot_p, int D) {
    RSeries f(D);
    MultiIndex a, b;
    a[slot_q] = 2;
    b[slot_p] = 2;
    f.set(a, 1.0);
    f.set(b, 1.0);
    return f;
}

}  // namespace

TEST_CASE("homological decompose elliptic block has no cubic kernel") {
    auto Q = QuadraticPart::elliptic_1dof(1.3, 3);
    // A is invertible on odd degrees for a single elliptic block: N = 0, S = A^{-1} P.
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        RSeries P(3);
        for (auto& m : grade_basis(3))
            if (m[Q2] == 0 && m[P2] == 0) P.set(m, U(rng()));
        auto [N, S] = homological_decompose(P, Q);
        CHECK(N.max_abs_coeff() <= 1e-12);
        CHECK((poisson_bracket(Q.H2, S) + P - N).max_abs_coeff() <= 1e-12);

        // Oracle: invert the independently sampled matrix on the invariant
        // (q1,p1)-only sub-basis (A is nonsingular there on odd degrees).
        std::vector<MultiIndex> basis;
        for (auto& m : grade_basis(3))
            if (m[Q2] == 0 && m[P2] == 0) basis.push_back(m);
        Eigen::MatrixXd A = sampled_homological_matrix(Q, basis);
        Eigen::VectorXd p(basis.size()), s(basis.size());
        for (size_t k = 0; k < basis.size(); ++k) p(k) = P.coeff(basis[k]);
        // Sampled matrix encodes S |-> DS.L0x = {S, H2} = -{H2, S}; with N = 0,
        // {H2, S} = -P means DS.L0x = P.
        s = A.colPivHouseholderQr().solve(p);
        for (size_t k = 0; k < basis.size(); ++k)
            CHECK(S.coeff(basis[k]) == Catch::Approx(s(k)).margin(1e-6));
        // S carries nothing outside the sub-basis.
        for (auto& m : grade_basis(3))
            if (m[Q2] != 0 || m[P2] != 0) CHECK(std::abs(S.coeff(m)) <= 1e-12);
    }
}

TEST_CASE("homological decompose fixes kernel elements and splits q1 cubed") {
    auto Q = QuadraticPart::resonance_02iw(0.8, 4);

    // P already in ker A* (shear + rotation invariant) -> (N, S) = (P, 0).
    RSeries P1k(3);
    P1k.set(mono(3, 0, 0, 0), 2.0);  // q1^3
    P1k.add_term(mono(1, 2, 0, 0), -0.7);
    P1k.add_term(mono(1, 0, 0, 2), -0.7);  // q1 * I2
    auto [Nk, Sk] = homological_decompose(P1k, Q);
    CHECK((Nk - P1k).max_abs_coeff() <= 1e-12);
    CHECK(Sk.max_abs_coeff() <= 1e-12);

    // P = q1^3: lands entirely in ker A*.
    RSeries P3(3);
    P3.set(mono(3, 0, 0, 0), 1.0);
    auto [N3, S3] = homological_decompose(P3, Q);
    CHECK(N3.coeff(mono(3, 0, 0, 0)) != 0.0);
    CHECK((N3 - poisson_bracket(Q.H2, S3) - P3).max_abs_coeff() <= 1e-12);

    // Generic cubic: residual identity + orthogonality <N, A T> = 0 for all basis T,
    // + agreement with the exact rational decomposition.
    std::uniform_int_distribution<int> num(-8, 8);
    RSeries Pf(3);
    QSeries Pq(3);
    QSeries H2q(4);
    H2q.set(mono(0, 0, 2, 0), Rational(1, 2));
    H2q.set(mono(0, 2, 0, 0), Rational(4, 10));
    H2q.set(mono(0, 0, 0, 2), Rational(4, 10));
    for (auto& m : grade_basis(3)) {
        Rational c(num(rng()), 5);
        Pq.set(m, c);
        Pf.set(m, boost::rational_cast<double>(c));
    }
    auto [Nf, Sf] = homological_decompose(Pf, Q);
    CHECK((Nf - poisson_bracket(Q.H2, Sf) - Pf).max_abs_coeff() <= 1e-12);
    for (auto& m : grade_basis(3)) {
        RSeries T = RSeries::monomial(m, 1.0, 3);
        CHECK(std::abs(nf_inner_product(Nf, poisson_bracket(Q.H2, T))) < 1e-10);
    }
    auto [Nq, Sq] = homological_decompose(Pq, H2q);
    QSeries check = Nq - poisson_bracket(H2q, Sq) - Pq;
    CHECK(check.empty());
    for (auto& m : grade_basis(3)) {
        CHECK(Nf.coeff(m) == Catch::Approx(boost::rational_cast<double>(Nq.coeff(m))).margin(1e-10));
        CHECK(Sf.coeff(m) == Catch::Approx(boost::rational_cast<double>(Sq.coeff(m))).margin(1e-10));
    }
}

TEST_CASE("lie transform flow identity quadratic and group laws") {
    // S = 0 is the identity.
    Vec4 x{0.3, -0.2, 0.14, 0.5};
    Vec4 y = lie_transform_flow(RSeries(4), x, 1.0);
    for (int i = 0; i < 4; ++i) CHECK(y[i] == Catch::Approx(x[i]).margin(1e-15));

    // Quadratic S: flow is exactly the matrix exponential e^{t J hess S}.
    std::uniform_real_distribution<double> U(-0.5, 0.5);
    for (int trial = 0; trial < 5; ++trial) {
        RSeries S(2);
        for (auto& m : grade_basis(2)) S.set(m, U(rng()));
        auto Q = QuadraticPart::from_h2(S);
        const double t = 0.8;
        Eigen::Matrix4d M = (t * Q.L0).exp();
        Vec4 x0{U(rng()), U(rng()), U(rng()), U(rng())};
        Vec4 yf = lie_transform_flow(S, x0, t);
        Eigen::Vector4d ye = M * Eigen::Vector4d(x0[0], x0[1], x0[2], x0[3]);
        for (int i = 0; i < 4; ++i) CHECK(yf[i] == Catch::Approx(ye(i)).margin(1e-10));
    }

    // Group property on random cubics: flow(t) then flow(-t) returns home.
    for (int trial = 0; trial < 5; ++trial) {
        RSeries S(3);
        for (auto& m : grade_basis(3)) S.set(m, U(rng()));
        Vec4 x0{U(rng()), U(rng()), U(rng()), U(rng())};
        Vec4 z = lie_transform_flow(S, lie_transform_flow(S, x0, 0.7), -0.7);
        for (int i = 0; i < 4; ++i) CHECK(z[i] == Catch::Approx(x0[i]).margin(1e-10));
    }
}

TEST_CASE("normal form pipeline trivial birkhoff and resonant cases") {
    // H = H2 exactly: nothing to do.
    auto Q = QuadraticPart::resonance_02iw(1.1, 6);
    auto nf0 = normal_form_pipeline(Q.H2.truncated(6), 5, Q);
    CHECK(nf0.N.max_abs_coeff() <= 1e-14);
    CHECK(nf0.transform.generators.empty());

    // Nonresonant elliptic 2-DOF through degree 4: N lives on action monomials.
    const double w1 = 1.0, w2 = std::sqrt(2.0);
    RSeries H(5);
    H += action_I(Q1, P1, 5) * (w1 / 2) + action_I(Q2, P2, 5) * (w2 / 2);
    std::uniform_real_distribution<double> U(-0.3, 0.3);
    for (int l = 3; l <= 4; ++l)
        for (auto& m : grade_basis(l)) H.add_term(m, U(rng()));
    auto Qe = QuadraticPart::from_h2(H.homogeneous_part(2).truncated(2));
    auto nf = normal_form_pipeline(H, 4, Qe);
    CHECK(nf.N.homogeneous_part(3).max_abs_coeff() <= 1e-10);
    // Fit grade 4 on the action monomials I1^2, I1 I2, I2^2 and require zero mismatch.
    RSeries I1 = action_I(Q1, P1, 4), I2s = action_I(Q2, P2, 4);
    std::vector<RSeries> span{(I1 * I1).truncated(4), (I1 * I2s).truncated(4),
                              (I2s * I2s).truncated(4)};
    auto basis4 = grade_basis(4);
    Eigen::MatrixXd M(basis4.size(), 3);
    Eigen::VectorXd b(basis4.size());
    for (size_t k = 0; k < basis4.size(); ++k) {
        for (int j = 0; j < 3; ++j) M(k, j) = span[j].coeff(basis4[k]);
        b(k) = nf.N.coeff(basis4[k]);
    }
    Eigen::VectorXd fit = M.colPivHouseholderQr().solve(b);
    CHECK((M * fit - b).cwiseAbs().maxCoeff() <= 1e-10);

    // The transformed Hamiltonian has no non-normal terms through degree n.
    RSeries back = nf.transform.pullback(H, 4);
    CHECK((back - Qe.H2 - nf.N).truncated(4).max_abs_coeff() <= 1e-10);

    // Numeric cross-check at shrinking radii: H(transform(x)) - (H2+N)(x) = O(|x|^{n+1}).
    Vec4 dir{0.41, -0.33, 0.52, 0.27};
    double prev = 0;
    for (double r : {0.2, 0.1}) {
        Vec4 x{r * dir[0], r * dir[1], r * dir[2], r * dir[3]};
        Vec4 tx = nf.transform(x);
        double err = std::abs(H.evaluate<double>(tx) - (Qe.H2 + nf.N).evaluate<double>(x));
        if (prev > 0) CHECK(err <= prev / std::pow(2.0, 4.6));  // decay at least like r^4.6 < r^5
        prev = err;
    }
}

TEST_CASE("pipeline on the resonant family gives p1-free rotational normal form") {
    auto Q = QuadraticPart::resonance_02iw(1.0, 6);
    RSeries H = Q.H2.truncated(6);
    std::uniform_real_distribution<double> U(-0.2, 0.2);
    for (int l = 3; l <= 5; ++l)
        for (auto& m : grade_basis(l)) H.add_term(m, U(rng()));
    auto nf = normal_form_pipeline(H, 5, Q);
    double p1_leak = 0.0, odd_leak = 0.0;
    for (const auto& [m, c] : nf.N.terms()) {
        if (m[P1] != 0) p1_leak = std::max(p1_leak, std::abs(c));
        if ((m[Q2] + m[P2]) % 2 != 0) odd_leak = std::max(odd_leak, std::abs(c));
    }
    CHECK(p1_leak <= 1e-10);
    CHECK(odd_leak <= 1e-10);
    // Rotation invariance in (q2, p2): commutes with I2.
    RSeries I2r(5);
    I2r.set(mono(0, 2, 0, 0), 1.0);
    I2r.set(mono(0, 0, 0, 2), 1.0);
    CHECK(poisson_bracket(nf.N, I2r).max_abs_coeff() <= 1e-10);
    CHECK(rotational_symmetrize_check(nf.N, Q));
    RSeries back = nf.transform.pullback(H, 5);
    CHECK((back - Q.H2 - nf.N).truncated(5).max_abs_coeff() <= 1e-9);

    // Symplecticity of the transform at random points (finite differences).
    std::uniform_real_distribution<double> Ux(-0.2, 0.2);
    for (int p = 0; p < 20; ++p) {
        Vec4 x{Ux(rng()), Ux(rng()), Ux(rng()), Ux(rng())};
        const double h = 1e-5;
        Eigen::Matrix4d D;
        for (int j = 0; j < 4; ++j) {
            Vec4 xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            Vec4 fp = nf.transform(xp), fm = nf.transform(xm);
            for (int i = 0; i < 4; ++i) D(i, j) = (fp[i] - fm[i]) / (2 * h);
        }
        Eigen::Matrix4d J = Eigen::Matrix4d::Zero();
        J(Q1, P1) = J(Q2, P2) = 1;
        J(P1, Q1) = J(P2, Q2) = -1;
        CHECK((D.transpose() * J * D - J).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("rotational symmetrize check examples") {
    auto Q = QuadraticPart::resonance_02iw(0.9, 4);
    RSeries good(3);
    good.set(mono(1, 2, 0, 0), 1.0);
    good.set(mono(1, 0, 0, 2), 1.0);  // q1 * I2
    CHECK(rotational_symmetrize_check(good, Q));
    RSeries bad(2);
    bad.set(mono(0, 0, 2, 0), 1.0);  // p1^2 is sheared
    CHECK_FALSE(rotational_symmetrize_check(bad, Q));
    CHECK(rotational_symmetrize_check(RSeries(4), Q));
}

namespace {
// Synthetic one-parameter family with prescribed c10, c20, omega0.
RSeries family_H(double lambda, double omega0, double c10, double c20, int D) {
    RSeries H(D);
    H.set(mono(0, 0, 2, 0), 0.5);
    H.set(mono(0, 2, 0, 0), omega0 / 2);
    H.set(mono(0, 0, 0, 2), omega0 / 2);
    H.add_term(mono(2, 0, 0, 0), -0.5 * c10 * lambda);
    H.set(mono(3, 0, 0, 0), c20);
    H.add_term(mono(1, 2, 0, 0), 0.3);
    H.add_term(mono(1, 0, 0, 2), 0.3);  // c3~ q1 I2
    H.add_term(mono(4, 0, 0, 0), 0.1);
    return H;
}
}  // namespace

TEST_CASE("scale and reparametrize recovers the bifurcation parameters") {
    const double omega0 = 1.0, c10 = 1.7, c20 = 0.9;
    auto Q = QuadraticPart::resonance_02iw(omega0, 5);

    // eps^4 / lambda -> c10 as lambda -> 0+.
    double prev_err = 1e9;
    for (double lambda : {1e-2, 1e-3, 1e-4}) {
        auto nf = normal_form_pipeline(family_H(lambda, omega0, c10, c20, 5), 4, Q);
        auto sm = scale_and_reparametrize(nf, lambda);
        const double ratio = std::pow(sm.eps, 4) / lambda;
        const double err = std::abs(ratio - c10);
        CHECK(err < prev_err + 1e-12);
        prev_err = err;
        if (lambda == 1e-4) CHECK(ratio == Catch::Approx(c10).epsilon(1e-2));
    }

    // Skeleton eigenvalues: +-1 hyperbolic and +-i omega/eps^2 elliptic.
    auto nf = normal_form_pipeline(family_H(1e-3, omega0, c10, c20, 5), 4, Q);
    auto sm = scale_and_reparametrize(nf, 1e-3);
    auto model = three_parameter_model(sm, 0.0, 0.0, 5);
    Eigen::Matrix4d D;
    const double h = 1e-6;
    for (int j = 0; j < 4; ++j) {
        Vec4 xp{0, 0, 0, 0}, xm{0, 0, 0, 0};
        xp[j] += h;
        xm[j] -= h;
        Vec4 fp = model.field(xp), fm = model.field(xm);
        for (int i = 0; i < 4; ++i) D(i, j) = (fp[i] - fm[i]) / (2 * h);
    }
    Eigen::Vector4cd ev = D.eigenvalues();
    std::vector<double> re, im;
    for (int i = 0; i < 4; ++i) {
        re.push_back(ev(i).real());
        im.push_back(ev(i).imag());
    }
    std::sort(re.begin(), re.end());
    std::sort(im.begin(), im.end());
    CHECK(re.front() == Catch::Approx(-1.0).margin(1e-4));
    CHECK(re.back() == Catch::Approx(1.0).margin(1e-4));
    const double rate = model.elliptic_rate();
    CHECK(im.front() == Catch::Approx(-rate).margin(1e-4 * rate));
    CHECK(im.back() == Catch::Approx(rate).margin(1e-4 * rate));

    // Error paths.
    CHECK_THROWS(scale_and_reparametrize(normal_form_pipeline(family_H(0.0, omega0, c10, c20, 5), 4, Q), 0.0));
    CHECK_THROWS(scale_and_reparametrize(normal_form_pipeline(family_H(-1e-3, omega0, c10, c20, 5), 4, Q), -1e-3));
}

TEST_CASE("three parameter model conserves I2 until mu turns on") {
    const double omega0 = 1.0, c10 = 1.7, c20 = 0.9;
    auto Q = QuadraticPart::resonance_02iw(omega0, 5);
    auto nf = normal_form_pipeline(family_H(4e-3, omega0, c10, c20, 5), 4, Q);
    auto sm = scale_and_reparametrize(nf, 4e-3);

    std::uniform_real_distribution<double> U(-0.08, 0.08);
    auto m0 = three_parameter_model(sm, 0.0, 0.0, 5);
    auto m1 = three_parameter_model(sm, sm.eps * sm.eps, 0.0, 5);
    for (int p = 0; p < 30; ++p) {
        Vec4 x{U(rng()), U(rng()), U(rng()), U(rng())};
        CHECK(std::abs(m0.dI2_dt(x)) <= 1e-14);
        CHECK(std::abs(m1.dI2_dt(x)) <= 1e-14);
    }

    // mu > 0: |dI2/dt| <= mu nu eps^N0 M on the cutoff ball.
    // Force a (q2,p2)-asymmetric remainder so the bound is exercised.
    ScaledModel sm2 = sm;
    RSeries R(6);
    R.set(mono(2, 3, 0, 0), 0.8);
    R.set(mono(0, 1, 3, 1), -0.4);
    sm2.R_poly = R;
    const double mu = 0.3, nu = sm.eps * sm.eps;
    auto m2 = three_parameter_model(sm2, nu, mu, 5);
    // M bounds |{I2, R}| on the ball of radius rho0.
    const double r = sm.rho0;
    double M = 0.0;
    for (int i : {Q2, P2}) M += 2 * r * majorant(R.derivative(i)).evaluate<double>({r, r, r, r});
    for (int p = 0; p < 30; ++p) {
        Vec4 x{U(rng()), U(rng()), U(rng()), U(rng())};
        CHECK(std::abs(m2.dI2_dt(x)) <= mu * nu * std::pow(sm.eps, 5) * M + 1e-14);
    }
    CHECK_THROWS(three_parameter_model(sm, 0.0, 0.0, 0));
}
