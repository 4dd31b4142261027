// Truncated power series in four phase-space variables, graded by total degree.
//
// Variable order is fixed once and for all as (q1, q2, p1, p2); in local
// (Moser) charts the same slots read (xi1, xi2, eta1, eta2).  The symplectic
// form is J = [[0, I], [-I, 0]] in that order, so x' = J grad H gives
// q1' = dH/dp1 etc., and H = -q1*p1 flows with rates (-1, +1) on (q1, p1).
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace oiw {

inline constexpr int kVars = 4;

// Slot indices for the canonical variable order.
enum : int { Q1 = 0, Q2 = 1, P1 = 2, P2 = 3 };
// Local-chart aliases (same slots).
enum : int { XI1 = 0, XI2 = 1, ETA1 = 2, ETA2 = 3 };

struct MultiIndex {
    std::array<int, kVars> e{0, 0, 0, 0};

    int degree() const { return e[0] + e[1] + e[2] + e[3]; }
    int operator[](int i) const { return e[i]; }
    int& operator[](int i) { return e[i]; }

    // Graded lexicographic: lower total degree first, then lex on exponents.
    friend bool operator<(const MultiIndex& a, const MultiIndex& b) {
        int da = a.degree(), db = b.degree();
        if (da != db) return da < db;
        return a.e < b.e;
    }
    friend bool operator==(const MultiIndex& a, const MultiIndex& b) { return a.e == b.e; }
    friend bool operator!=(const MultiIndex& a, const MultiIndex& b) { return !(a == b); }
};

inline MultiIndex mono(int a, int b, int c, int d) { return MultiIndex{{a, b, c, d}}; }

inline double factorial(int n) {
    double f = 1.0;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
}

inline long long ifactorial(int n) {
    long long f = 1;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
}

namespace detail {
template <class T> struct abs_result { using type = T; };
template <class R> struct abs_result<std::complex<R>> { using type = R; };
template <class T> using abs_t = typename abs_result<T>::type;

template <class T> T coeff_abs(const T& x) { return x < T(0) ? T(-x) : x; }
inline double coeff_abs(const double& x) { return std::fabs(x); }
template <class R> R coeff_abs(const std::complex<R>& x) { return std::abs(x); }
}  // namespace detail

// The symplectic matrix of the canonical order; kept as an explicit object so
// the bracket's sign convention is data, not folklore.
struct SymplecticStructure {
    static constexpr int dimension = kVars;
    std::array<std::array<double, kVars>, kVars> J{};

    static SymplecticStructure standard() {
        SymplecticStructure s;
        s.J[Q1][P1] = 1.0;
        s.J[Q2][P2] = 1.0;
        s.J[P1][Q1] = -1.0;
        s.J[P2][Q2] = -1.0;
        return s;
    }
};

template <class T>
class Series {
  public:
    using coeff_type = T;

    Series() : max_degree_(0) {}
    explicit Series(int max_degree) : max_degree_(max_degree) {
        if (max_degree < 0) throw std::invalid_argument("Series: negative max_degree");
    }

    static Series monomial(const MultiIndex& m, T c, int max_degree) {
        Series s(max_degree);
        s.set(m, c);
        return s;
    }
    static Series variable(int slot, int max_degree) {
        MultiIndex m;
        m[slot] = 1;
        return monomial(m, T(1), max_degree);
    }
    static Series constant(T c, int max_degree) { return monomial(MultiIndex{}, c, max_degree); }

    int max_degree() const { return max_degree_; }
    const std::map<MultiIndex, T>& terms() const { return terms_; }
    bool empty() const { return terms_.empty(); }

    T coeff(const MultiIndex& m) const {
        auto it = terms_.find(m);
        return it == terms_.end() ? T(0) : it->second;
    }

    void set(const MultiIndex& m, T c) {
        if (m.degree() > max_degree_) return;
        if (c == T(0))
            terms_.erase(m);
        else
            terms_[m] = c;
    }

    void add_term(const MultiIndex& m, T c) {
        if (m.degree() > max_degree_ || c == T(0)) return;
        auto [it, inserted] = terms_.try_emplace(m, c);
        if (!inserted) {
            it->second += c;
            if (it->second == T(0)) terms_.erase(it);
        }
    }

    Series truncated(int new_max) const {
        Series out(new_max);
        for (const auto& [m, c] : terms_)
            if (m.degree() <= new_max) out.terms_[m] = c;
        return out;
    }

    Series homogeneous_part(int d) const {
        Series out(max_degree_);
        for (const auto& [m, c] : terms_)
            if (m.degree() == d) out.terms_[m] = c;
        return out;
    }

    bool is_homogeneous(int* deg_out = nullptr) const {
        int d = -1;
        for (const auto& [m, c] : terms_) {
            (void)c;
            if (d < 0)
                d = m.degree();
            else if (m.degree() != d)
                return false;
        }
        if (deg_out) *deg_out = std::max(d, 0);
        return true;
    }

    int low_degree() const {
        return terms_.empty() ? max_degree_ + 1 : terms_.begin()->first.degree();
    }

    friend Series operator+(const Series& a, const Series& b) {
        Series out(std::max(a.max_degree_, b.max_degree_));
        out.terms_ = a.terms_;
        for (const auto& [m, c] : b.terms_) out.add_term(m, c);
        return out;
    }
    friend Series operator-(const Series& a, const Series& b) {
        Series out(std::max(a.max_degree_, b.max_degree_));
        out.terms_ = a.terms_;
        for (const auto& [m, c] : b.terms_) out.add_term(m, -c);
        return out;
    }
    friend Series operator-(const Series& a) { return a * T(-1); }
    friend Series operator*(const Series& a, T s) {
        Series out(a.max_degree_);
        if (s == T(0)) return out;
        for (const auto& [m, c] : a.terms_) out.terms_[m] = c * s;
        return out;
    }
    friend Series operator*(T s, const Series& a) { return a * s; }

    friend Series operator*(const Series& a, const Series& b) {
        Series out(std::max(a.max_degree_, b.max_degree_));
        for (const auto& [ma, ca] : a.terms_) {
            if (ma.degree() > out.max_degree_) continue;
            for (const auto& [mb, cb] : b.terms_) {
                MultiIndex m;
                for (int i = 0; i < kVars; ++i) m[i] = ma[i] + mb[i];
                if (m.degree() > out.max_degree_) continue;
                out.add_term(m, ca * cb);
            }
        }
        return out;
    }

    Series& operator+=(const Series& b) { return *this = *this + b; }
    Series& operator-=(const Series& b) { return *this = *this - b; }
    Series& operator*=(const Series& b) { return *this = *this * b; }
    Series& operator*=(T s) { return *this = *this * s; }

    Series derivative(int slot) const {
        Series out(std::max(max_degree_ - 1, 0));
        for (const auto& [m, c] : terms_) {
            if (m[slot] == 0) continue;
            MultiIndex d = m;
            d[slot] -= 1;
            out.add_term(d, c * T(m[slot]));
        }
        return out;
    }

    template <class X>
    X evaluate(const std::array<X, kVars>& x) const {
        X total(0);
        for (const auto& [m, c] : terms_) {
            X t(c);
            for (int i = 0; i < kVars; ++i)
                for (int k = 0; k < m[i]; ++k) t *= x[i];
            total += t;
        }
        return total;
    }

    // Composition f(g0, g1, g2, g3), truncated at this->max_degree().
    Series substitute(const std::array<Series, kVars>& g) const {
        const int D = max_degree_;
        // Cache powers of each component up to the needed exponent.
        std::array<std::vector<Series>, kVars> pw;
        for (int i = 0; i < kVars; ++i) pw[i].push_back(Series::constant(T(1), D));
        Series out(D);
        for (const auto& [m, c] : terms_) {
            Series t = Series::constant(c, D);
            for (int i = 0; i < kVars; ++i) {
                while ((int)pw[i].size() <= m[i])
                    pw[i].push_back((pw[i].back() * g[i]).truncated(D));
                if (m[i] > 0) t = (t * pw[i][m[i]]).truncated(D);
            }
            out += t;
        }
        return out;
    }

    double max_abs_coeff() const {
        double mx = 0;
        for (const auto& [m, c] : terms_) {
            (void)m;
            mx = std::max(mx, (double)detail::coeff_abs(c));
        }
        return mx;
    }

    friend bool operator==(const Series& a, const Series& b) { return a.terms_ == b.terms_; }

  private:
    int max_degree_;
    std::map<MultiIndex, T> terms_;
};

using RSeries = Series<double>;
using CSeries = Series<std::complex<double>>;
using Vec4 = std::array<double, kVars>;

// All monomial multi-indices of a given total degree, in graded-lex order.
inline std::vector<MultiIndex> grade_basis(int deg) {
    std::vector<MultiIndex> out;
    for (int a = deg; a >= 0; --a)
        for (int b = deg - a; b >= 0; --b)
            for (int c = deg - a - b; c >= 0; --c) out.push_back(mono(a, b, c, deg - a - b - c));
    std::sort(out.begin(), out.end());
    return out;
}

// ---- Poisson bracket --------------------------------------------------------

// {f,g} = (grad f)^T J grad g under the canonical variable order.
template <class T>
Series<T> poisson_bracket(const Series<T>& f, const Series<T>& g,
                          const SymplecticStructure& J = SymplecticStructure::standard()) {
    const int D = std::max(f.max_degree(), g.max_degree());
    std::array<Series<T>, kVars> df, dg;
    for (int i = 0; i < kVars; ++i) {
        // Re-widen so the product keeps grades up to D.
        df[i] = f.derivative(i).truncated(D);
        dg[i] = g.derivative(i).truncated(D);
    }
    Series<T> out(D);
    for (int i = 0; i < kVars; ++i)
        for (int j = 0; j < kVars; ++j)
            if (J.J[i][j] != 0.0) out += (df[i] * dg[j] * T((int)J.J[i][j])).truncated(D);
    return out;
}

// Hamiltonian vector field component slot k of H: (J grad H)_k.
template <class T>
Series<T> hamiltonian_field_component(const Series<T>& H, int slot,
                                      const SymplecticStructure& J =
                                          SymplecticStructure::standard()) {
    Series<T> out(std::max(H.max_degree() - 1, 0));
    for (int j = 0; j < kVars; ++j)
        if (J.J[slot][j] != 0.0) out += H.derivative(j) * T((int)J.J[slot][j]);
    return out;
}

// ---- Normal-form inner product ---------------------------------------------

// <S,T> = sum_alpha alpha! s_alpha t_alpha, diagonal in the monomial basis.
// Defined on homogeneous polynomials of equal degree.
template <class T>
T nf_inner_product(const Series<T>& S, const Series<T>& U) {
    int ds = 0, du = 0;
    if (!S.is_homogeneous(&ds) || !U.is_homogeneous(&du))
        throw std::invalid_argument("nf_inner_product: inputs must be homogeneous");
    if (!S.empty() && !U.empty() && ds != du)
        throw std::invalid_argument("nf_inner_product: degree mismatch");
    T total(0);
    for (const auto& [m, c] : S.terms()) {
        T cu = U.coeff(m);
        if (cu == T(0)) continue;
        long long w = 1;
        for (int i = 0; i < kVars; ++i) w *= ifactorial(m[i]);
        total += T(w) * c * cu;
    }
    return total;
}

// ---- Majorant toolkit (coefficient-domination order) ------------------------

template <class T>
Series<detail::abs_t<T>> majorant(const Series<T>& f) {
    Series<detail::abs_t<T>> out(f.max_degree());
    for (const auto& [m, c] : f.terms()) out.set(m, detail::coeff_abs(c));
    return out;
}

// f "prec" g: every coefficient of g is >= 0 and dominates |f| term-wise.
template <class T, class U>
bool prec(const Series<T>& f, const Series<U>& g) {
    for (const auto& [m, c] : g.terms())
        if (c < U(0)) return false;
    for (const auto& [m, c] : f.terms()) {
        if (m.degree() > g.max_degree()) continue;  // compared on the common grade window
        if (!(detail::coeff_abs(c) <= g.coeff(m))) return false;
    }
    return true;
}

// max_prec: term-wise maximum of |f| and |g| (least upper bound for prec).
template <class T>
Series<detail::abs_t<T>> max_prec(const Series<T>& f, const Series<T>& g) {
    auto out = majorant(f);
    const auto mg = majorant(g);
    for (const auto& [m, c] : mg.terms())
        if (out.coeff(m) < c) out.set(m, c);
    return out;
}

// Substitute every variable by the single variable omega (kept in slot 0).
template <class T>
Series<T> collapse_to_one_variable(const Series<T>& f) {
    Series<T> out(f.max_degree());
    for (const auto& [m, c] : f.terms()) out.add_term(mono(m.degree(), 0, 0, 0), c);
    return out;
}

// Keep the monomials with equal paired exponents (slot0==slot2, slot1==slot3);
// rewrite in (w1, w2) = (xi1*eta1, xi2*eta2), stored in slots (0, 1).
template <class T>
Series<T> diagonal_bracket(const Series<T>& f) {
    Series<T> out(f.max_degree());
    for (const auto& [m, c] : f.terms())
        if (m[XI1] == m[ETA1] && m[XI2] == m[ETA2])
            out.add_term(mono(m[XI1], m[XI2], 0, 0), c);
    return out;
}

// ---- Canonical text serialization -------------------------------------------

template <class T>
struct CoeffIO;

template <>
struct CoeffIO<double> {
    static void print(std::ostream& os, double c) {
        os.precision(17);
        os << c;
    }
    static void read(std::istream& is, double& c) { is >> c; }
};

template <>
struct CoeffIO<std::complex<double>> {
    static void print(std::ostream& os, const std::complex<double>& c) {
        os.precision(17);
        os << c.real() << ' ' << c.imag();
    }
    static void read(std::istream& is, std::complex<double>& c) {
        double re, im;
        is >> re >> im;
        c = {re, im};
    }
};

template <class T>
std::string to_text(const Series<T>& f) {
    std::ostringstream os;
    os << "degree " << f.max_degree() << '\n';
    for (const auto& [m, c] : f.terms()) {
        os << m[0] << ' ' << m[1] << ' ' << m[2] << ' ' << m[3] << ' ';
        CoeffIO<T>::print(os, c);
        os << '\n';
    }
    return os.str();
}

template <class T>
Series<T> from_text(const std::string& text) {
    std::istringstream is(text);
    std::string kw;
    int D;
    is >> kw >> D;
    if (kw != "degree" || !is) throw std::runtime_error("Series text: missing degree header");
    Series<T> out(D);
    MultiIndex m;
    while (is >> m[0] >> m[1] >> m[2] >> m[3]) {
        T c;
        CoeffIO<T>::read(is, c);
        out.set(m, c);
    }
    return out;
}

}  // namespace oiw
