// Exact-rational coefficient mode: boost::rational coefficients plus a small
// dense exact linear solver (Gauss-Jordan over a field).  Only meant for the
// low-degree golden-test path; everything heavy runs in double precision.
#pragma once

#include <boost/rational.hpp>
#include <stdexcept>
#include <vector>

#include "series.hpp"

namespace oiw {

using Rational = boost::rational<long long>;
using QSeries = Series<Rational>;

template <>
struct CoeffIO<Rational> {
    static void print(std::ostream& os, const Rational& c) {
        os << c.numerator() << '/' << c.denominator();
    }
    static void read(std::istream& is, Rational& c) {
        long long n, d;
        char slash;
        is >> n >> slash >> d;
        c = Rational(n, d);
    }
};

// Row-major dense matrix over a field F.
template <class F>
struct DenseMat {
    int rows = 0, cols = 0;
    std::vector<F> a;

    DenseMat() = default;
    DenseMat(int r, int c) : rows(r), cols(c), a((size_t)r * c, F(0)) {}
    F& operator()(int i, int j) { return a[(size_t)i * cols + j]; }
    const F& operator()(int i, int j) const { return a[(size_t)i * cols + j]; }
};

// Reduced row echelon form in place; returns pivot columns.
template <class F>
std::vector<int> rref(DenseMat<F>& M) {
    std::vector<int> pivots;
    int r = 0;
    for (int c = 0; c < M.cols && r < M.rows; ++c) {
        int p = -1;
        for (int i = r; i < M.rows; ++i)
            if (M(i, c) != F(0)) { p = i; break; }
        if (p < 0) continue;
        if (p != r)
            for (int j = 0; j < M.cols; ++j) std::swap(M(p, j), M(r, j));
        F inv = F(1) / M(r, c);
        for (int j = 0; j < M.cols; ++j) M(r, j) = M(r, j) * inv;
        for (int i = 0; i < M.rows; ++i) {
            if (i == r || M(i, c) == F(0)) continue;
            F f = M(i, c);
            for (int j = 0; j < M.cols; ++j) M(i, j) = M(i, j) - f * M(r, j);
        }
        pivots.push_back(c);
        ++r;
    }
    return pivots;
}

// Kernel basis of M (columns of the returned matrix span ker M).
template <class F>
std::vector<std::vector<F>> kernel_basis(DenseMat<F> M) {
    auto pivots = rref(M);
    std::vector<bool> is_pivot(M.cols, false);
    for (int c : pivots) is_pivot[c] = true;
    std::vector<std::vector<F>> basis;
    for (int c = 0; c < M.cols; ++c) {
        if (is_pivot[c]) continue;
        std::vector<F> v(M.cols, F(0));
        v[c] = F(1);
        for (size_t r = 0; r < pivots.size(); ++r) v[pivots[r]] = -M((int)r, c);
        basis.push_back(std::move(v));
    }
    return basis;
}

// One exact solution of M x = b, or throws if inconsistent.
template <class F>
std::vector<F> solve_exact(const DenseMat<F>& M, const std::vector<F>& b) {
    DenseMat<F> aug(M.rows, M.cols + 1);
    for (int i = 0; i < M.rows; ++i) {
        for (int j = 0; j < M.cols; ++j) aug(i, j) = M(i, j);
        aug(i, M.cols) = b[i];
    }
    auto pivots = rref(aug);
    for (int c : pivots)
        if (c == M.cols) throw std::runtime_error("solve_exact: inconsistent system");
    std::vector<F> x(M.cols, F(0));
    for (size_t r = 0; r < pivots.size(); ++r) x[pivots[r]] = aug((int)r, M.cols);
    return x;
}

}  // namespace oiw
