#pragma once

#include <oiw/series.hpp>

#include <random>

namespace oiw::testutil {

inline std::mt19937& rng() {
    static std::mt19937 gen(20260826u);
    return gen;
}

// Random real series with all monomials of degree in [lo, hi] present
// with probability `density`, coefficients uniform in [-1, 1].
inline RSeries random_series(int lo, int hi, double density = 0.6, int max_degree = -1) {
    if (max_degree < 0) max_degree = hi;
    RSeries f(max_degree);
    std::uniform_real_distribution<double> coeff(-1.0, 1.0);
    std::bernoulli_distribution keep(density);
    for (int a = 0; a <= hi; ++a)
        for (int b = 0; a + b <= hi; ++b)
            for (int c = 0; a + b + c <= hi; ++c)
                for (int d = 0; a + b + c + d <= hi; ++d) {
                    int deg = a + b + c + d;
                    if (deg < lo || deg > hi) continue;
                    if (keep(rng())) f.set(mono(a, b, c, d), coeff(rng()));
                }
    return f;
}

inline std::vector<MultiIndex> monomials_of_degree(int deg) {
    std::vector<MultiIndex> out;
    for (int a = 0; a <= deg; ++a)
        for (int b = 0; a + b <= deg; ++b)
            for (int c = 0; a + b + c <= deg; ++c) out.push_back(mono(a, b, c, deg - a - b - c));
    return out;
}

}  // namespace oiw::testutil
