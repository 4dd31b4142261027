#pragma once

// Twist-map analysis on the return annulus and the iterative homoclinic hunt.
//
// The restricted return map on the energy level of P^alpha, read in (q2,p2),
// is a small twist map around the origin.  This header supplies:
//   * the rescaled annulus coordinates (q,rho) with q measured in the
//     direction of the fast rotation (clockwise in the (q2,p2) plane),
//   * TwistProfile extraction: rotation increment alpha(rho) of the
//     integrable (mu=0) reference and perturbation fields (F,G),
//   * hypothesis checks for the invariant-circle step (twist sign, smallness
//     of (F,G), exactness proxy),
//   * a Fourier/Newton invariant-circle finder for sampled annulus maps,
//   * closed-curve utilities (shoelace area, pairwise intersection, winding
//     numbers, curvature-adaptive sampling),
//   * the unstable-circle transport and the iterate-until-intersection
//     homoclinic hunt.

#include "dynamics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace oiw {

using Pt2 = std::array<double, 2>;

// ---------------------------------------------------------------------------
// Closed sampled curves and planar geometry utilities
// ---------------------------------------------------------------------------

struct ClosedCurve {
    std::vector<Pt2> samples;  // ordered; the segment samples.back()->samples.front() closes the curve
    Chart chart = Chart::scaled;
};

namespace ann_detail {

// Orientation of the triangle (a,b,c), evaluated in extended precision so that
// the sign is reliable for the nearly-degenerate segment pairs produced by
// neighbouring curve samples.
inline int orientation(const Pt2& a, const Pt2& b, const Pt2& c) {
    const long double det = (static_cast<long double>(b[0]) - a[0]) * (static_cast<long double>(c[1]) - a[1]) -
                            (static_cast<long double>(b[1]) - a[1]) * (static_cast<long double>(c[0]) - a[0]);
    const long double scale = (std::abs(static_cast<long double>(b[0]) - a[0]) + std::abs(static_cast<long double>(c[0]) - a[0])) *
                                  (std::abs(static_cast<long double>(b[1]) - a[1]) + std::abs(static_cast<long double>(c[1]) - a[1])) +
                              std::numeric_limits<long double>::min();
    if (std::abs(det) <= scale * 1e-30L) return 0;
    return det > 0 ? 1 : -1;
}

inline bool on_segment(const Pt2& a, const Pt2& b, const Pt2& p) {
    return std::min(a[0], b[0]) - 0.0 <= p[0] && p[0] <= std::max(a[0], b[0]) &&
           std::min(a[1], b[1]) <= p[1] && p[1] <= std::max(a[1], b[1]);
}

// Proper or improper intersection of segments [a1,a2] and [b1,b2].
inline bool segments_intersect(const Pt2& a1, const Pt2& a2, const Pt2& b1, const Pt2& b2) {
    const int o1 = orientation(a1, a2, b1);
    const int o2 = orientation(a1, a2, b2);
    const int o3 = orientation(b1, b2, a1);
    const int o4 = orientation(b1, b2, a2);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(a1, a2, b1)) return true;
    if (o2 == 0 && on_segment(a1, a2, b2)) return true;
    if (o3 == 0 && on_segment(b1, b2, a1)) return true;
    if (o4 == 0 && on_segment(b1, b2, a2)) return true;
    return false;
}

// Crossing point of two properly intersecting segments (parametric solve).
inline Pt2 crossing_point(const Pt2& a1, const Pt2& a2, const Pt2& b1, const Pt2& b2) {
    const double rx = a2[0] - a1[0], ry = a2[1] - a1[1];
    const double sx = b2[0] - b1[0], sy = b2[1] - b1[1];
    const double denom = rx * sy - ry * sx;
    if (denom == 0.0) return {0.5 * (a1[0] + b1[0]), 0.5 * (a1[1] + b1[1])};
    const double t = ((b1[0] - a1[0]) * sy - (b1[1] - a1[1]) * sx) / denom;
    return {a1[0] + t * rx, a1[1] + t * ry};
}

inline double dist2(const Pt2& a, const Pt2& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

// Distance from point p to segment [a,b].
inline double point_segment_distance(const Pt2& p, const Pt2& a, const Pt2& b) {
    const double vx = b[0] - a[0], vy = b[1] - a[1];
    const double len2 = vx * vx + vy * vy;
    double t = 0.0;
    if (len2 > 0.0) t = std::clamp(((p[0] - a[0]) * vx + (p[1] - a[1]) * vy) / len2, 0.0, 1.0);
    return std::hypot(p[0] - (a[0] + t * vx), p[1] - (a[1] + t * vy));
}

inline double segment_distance(const Pt2& a1, const Pt2& a2, const Pt2& b1, const Pt2& b2) {
    if (segments_intersect(a1, a2, b1, b2)) return 0.0;
    return std::min(std::min(point_segment_distance(a1, b1, b2), point_segment_distance(a2, b1, b2)),
                    std::min(point_segment_distance(b1, a1, a2), point_segment_distance(b2, a1, a2)));
}

}  // namespace ann_detail

// True if no two non-adjacent edges of the closed polyline cross.
inline bool curve_is_simple(const ClosedCurve& c) {
    const std::size_t n = c.samples.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
        const Pt2& a1 = c.samples[i];
        const Pt2& a2 = c.samples[(i + 1) % n];
        for (std::size_t j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1) continue;  // adjacent through the closure edge
            const Pt2& b1 = c.samples[j];
            const Pt2& b2 = c.samples[(j + 1) % n];
            if (ann_detail::segments_intersect(a1, a2, b1, b2)) return false;
        }
    }
    return true;
}

// Signed polygonal (shoelace) area of a simple closed sampled curve;
// counter-clockwise orientation is positive.
inline double curve_area(const ClosedCurve& c) {
    const std::size_t n = c.samples.size();
    if (n < 3) throw std::invalid_argument("curve_area: need at least 3 samples");
    if (!curve_is_simple(c)) throw std::runtime_error("curve_area: self-intersecting curve");
    double twice = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Pt2& a = c.samples[i];
        const Pt2& b = c.samples[(i + 1) % n];
        twice += a[0] * b[1] - b[0] * a[1];
    }
    return 0.5 * twice;
}

// Winding number of the closed curve around p (0 when p is outside).
inline int winding_number(const ClosedCurve& c, const Pt2& p) {
    const std::size_t n = c.samples.size();
    double total = 0.0;
    double prev = std::atan2(c.samples.back()[1] - p[1], c.samples.back()[0] - p[0]);
    for (std::size_t i = 0; i < n; ++i) {
        const double ang = std::atan2(c.samples[i][1] - p[1], c.samples[i][0] - p[0]);
        total += std::remainder(ang - prev, 2.0 * M_PI);
        prev = ang;
    }
    return static_cast<int>(std::lround(total / (2.0 * M_PI)));
}

struct CurveIntersections {
    std::vector<Pt2> points;
    std::vector<double> residuals;  // distance between the two curves at the reported point
};

// Segment-pairwise intersection of two closed curves.  Besides exact
// crossings, segment pairs closer than prox_tol count as intersections (two
// transported curves that coincide up to integrator noise must be detected).
inline CurveIntersections intersect_curves(const ClosedCurve& a, const ClosedCurve& b, double prox_tol = 0.0) {
    CurveIntersections out;
    const std::size_t na = a.samples.size(), nb = b.samples.size();
    if (na < 2 || nb < 2) return out;
    for (std::size_t i = 0; i < na; ++i) {
        const Pt2& a1 = a.samples[i];
        const Pt2& a2 = a.samples[(i + 1) % na];
        double best = std::numeric_limits<double>::infinity();
        Pt2 best_pt{0, 0};
        bool crossing = false;
        for (std::size_t j = 0; j < nb; ++j) {
            const Pt2& b1 = b.samples[j];
            const Pt2& b2 = b.samples[(j + 1) % nb];
            if (ann_detail::segments_intersect(a1, a2, b1, b2)) {
                const Pt2 p = ann_detail::crossing_point(a1, a2, b1, b2);
                const double resid = ann_detail::point_segment_distance(p, b1, b2);
                if (!crossing || resid < best) {
                    best = resid;
                    best_pt = p;
                }
                crossing = true;
            } else if (!crossing && prox_tol > 0.0) {
                const double d = ann_detail::segment_distance(a1, a2, b1, b2);
                if (d <= prox_tol && d < best) {
                    best = d;
                    best_pt = {0.5 * (std::min({a1[0], a2[0]}) + std::max({a1[0], a2[0]})),
                               0.5 * (std::min({a1[1], a2[1]}) + std::max({a1[1], a2[1]}))};
                }
            }
        }
        if (best < std::numeric_limits<double>::infinity()) {
            out.points.push_back(best_pt);
            out.residuals.push_back(best);
        }
    }
    return out;
}

// Curvature-adaptive sampling of a closed parametric curve t in [0,1) -> R^2.
// Midpoints are inserted wherever the polyline turns by more than max_turn.
template <class F>
ClosedCurve sample_closed(F&& f, int n0, double max_turn = 0.2, int max_pts = 4096) {
    if (n0 < 3) throw std::invalid_argument("sample_closed: need at least 3 initial samples");
    std::vector<double> params(static_cast<std::size_t>(n0));
    std::vector<Pt2> pts(static_cast<std::size_t>(n0));
    for (int i = 0; i < n0; ++i) {
        params[static_cast<std::size_t>(i)] = static_cast<double>(i) / n0;
        pts[static_cast<std::size_t>(i)] = f(params[static_cast<std::size_t>(i)]);
    }
    bool refined = true;
    while (refined && static_cast<int>(pts.size()) < max_pts) {
        refined = false;
        std::vector<double> new_params;
        std::vector<Pt2> new_pts;
        const std::size_t n = pts.size();
        for (std::size_t i = 0; i < n; ++i) {
            new_params.push_back(params[i]);
            new_pts.push_back(pts[i]);
            const Pt2& prev = pts[(i + n - 1) % n];
            const Pt2& cur = pts[i];
            const Pt2& next = pts[(i + 1) % n];
            const double ux = cur[0] - prev[0], uy = cur[1] - prev[1];
            const double vx = next[0] - cur[0], vy = next[1] - cur[1];
            const double turn = std::abs(std::atan2(ux * vy - uy * vx, ux * vx + uy * vy));
            if (turn > max_turn && static_cast<int>(n + new_params.size()) < max_pts) {
                double t_next = params[(i + 1) % n];
                if (i + 1 == n) t_next += 1.0;
                const double tm = 0.5 * (params[i] + t_next);
                new_params.push_back(tm >= 1.0 ? tm - 1.0 : tm);
                new_pts.push_back(f(new_params.back()));
                refined = true;
            }
        }
        params.swap(new_params);
        pts.swap(new_pts);
    }
    ClosedCurve out;
    out.samples = std::move(pts);
    return out;
}

// ---------------------------------------------------------------------------
// Twist coordinates (q, rho)
// ---------------------------------------------------------------------------

// Rounded frequency scale 1/floor(1/eps^2); satisfies eps^2 <= nu_bar <= eps^2/(1-eps^2).
inline double nu_bar_of(double eps) {
    const double inv = 1.0 / (eps * eps);
    const double fl = std::floor(inv);
    if (fl < 1.0) throw std::invalid_argument("nu_bar_of: requires eps <= 1");
    return 1.0 / fl;
}

struct TwistPoint {
    double q;    // rescaled angle, measured in the direction of the fast rotation
    double rho;  // rescaled radius r / sqrt(nu_bar)
};

// Polar lift of (q2,p2) with the angle oriented along the fast rotation
// (clockwise in the standard (q2,p2) orientation), rescaled by nu_bar.
// q is returned in (-pi*nu_bar, pi*nu_bar]; min_radius guards the forbidden
// disc around the origin where the polar angle degenerates.
inline TwistPoint to_twist_point(double q2, double p2, double nu_bar, double min_radius = 0.0) {
    const double r = std::hypot(q2, p2);
    if (r < min_radius) {
        std::ostringstream os;
        os << "coordinate-singularity: radius " << r << " enters the forbidden disc of radius " << min_radius;
        throw std::runtime_error(os.str());
    }
    const double phi = -std::atan2(p2, q2);
    return {nu_bar * phi, r / std::sqrt(nu_bar)};
}

// Difference of two twist angles q_b - q_a reduced across the branch cut:
// samples a small angle apart on either side of the cut differ by that small
// angle, not by (2*pi - it) * nu_bar.
inline double twist_angle_difference(double q_a, double q_b, double nu_bar) {
    return std::remainder(q_b - q_a, 2.0 * M_PI * nu_bar);
}

inline std::array<double, 2> from_twist_point(double q, double rho, double nu_bar) {
    const double r = std::sqrt(nu_bar) * rho;
    const double phi = q / nu_bar;
    return {r * std::cos(phi), -r * std::sin(phi)};
}

// The restricted return map of the energy level of P^alpha expressed in
// (q, rho).  The angle is unwrapped with the rotation_angle recorded by the
// return machinery: the image angle is the one closest to q/nu_bar plus the
// swept fast-rotation angle.
struct TwistAnnulusMap {
    const ReturnMapper* rm = nullptr;
    double alpha = 0.0;
    double nu_bar = 0.0;
    double min_radius = 0.0;

    std::array<double, 2> operator()(double q, double rho) const {
        const auto z = from_twist_point(q, rho, nu_bar);
        const double r = std::hypot(z[0], z[1]);
        if (r < min_radius) {
            std::ostringstream os;
            os << "coordinate-singularity: radius " << r << " enters the forbidden disc of radius " << min_radius;
            throw std::runtime_error(os.str());
        }
        const ReturnRecord rec = rm->restricted_return_record(alpha, z[0], z[1]);
        const double q2i = rec.image.x[Q2], p2i = rec.image.x[P2];
        const double phi0 = -std::atan2(z[1], z[0]);
        const double phii = -std::atan2(p2i, q2i);
        const double swept = rec.rotation_angle;  // clockwise-positive total fast rotation
        const double dphi = swept + std::remainder(phii - phi0 - swept, 2.0 * M_PI);
        return {q + nu_bar * dphi, std::hypot(q2i, p2i) / std::sqrt(nu_bar)};
    }
};

struct TwistProfile {
    std::vector<double> rho_grid;                 // increasing
    std::vector<double> q_grid;
    std::vector<double> alpha_values;             // rotation increment of the mu=0 reference
    std::vector<std::vector<double>> F_samples;   // [i_rho][j_q]: angle perturbation
    std::vector<std::vector<double>> G_samples;   // [i_rho][j_q]: radial perturbation
    double nu_bar = 0.0;
    double eps = 0.0, delta = 0.0, mu = 0.0;
    double alpha_label = 0.0;
};

// Generic profile extraction from a perturbed map and its integrable
// reference, both expressed in (q,rho) with unwrapped angle image.
template <class MapFn, class RefFn>
TwistProfile twist_profile_from_maps(MapFn&& pert, RefFn&& ref, const std::vector<double>& rho_grid,
                                     const std::vector<double>& q_grid, double nu_bar) {
    if (rho_grid.size() < 2 || q_grid.empty()) throw std::invalid_argument("twist_profile_from_maps: empty grid");
    TwistProfile tp;
    tp.rho_grid = rho_grid;
    tp.q_grid = q_grid;
    tp.nu_bar = nu_bar;
    for (double rho : rho_grid) {
        double alpha_sum = 0.0;
        std::vector<std::array<double, 2>> images;
        images.reserve(q_grid.size());
        for (double q : q_grid) {
            const auto img_ref = ref(q, rho);
            alpha_sum += img_ref[0] - q;
            images.push_back(pert(q, rho));
        }
        const double alpha = alpha_sum / static_cast<double>(q_grid.size());
        tp.alpha_values.push_back(alpha);
        std::vector<double> Frow, Grow;
        for (std::size_t j = 0; j < q_grid.size(); ++j) {
            Frow.push_back(images[j][0] - q_grid[j] - alpha);
            Grow.push_back(images[j][1] - rho);
        }
        tp.F_samples.push_back(std::move(Frow));
        tp.G_samples.push_back(std::move(Grow));
    }
    return tp;
}

struct TwistOptions {
    double c1 = 0.03;  // band I2 in [c1, c2] * delta^2 eps^2
    double c2 = 0.08;
    int n_rho = 6;
    int n_q = 5;
};

// Twist coordinates of the restricted return map: alpha(rho) from the mu=0
// reference mapper, (F,G) as the difference of the perturbed mapper.
inline TwistProfile to_twist_coordinates(const ReturnMapper& rm, const ReturnMapper& rm_ref, double alpha_label,
                                         const TwistOptions& opt = {}) {
    const double eps = rm.model.eps;
    const double delta = rm.delta;
    const double nu_bar = nu_bar_of(eps);
    if (!(eps * eps <= nu_bar * (1.0 + 1e-12) && nu_bar * (1.0 - eps * eps) <= eps * eps * (1.0 + 1e-12)))
        throw std::logic_error("to_twist_coordinates: nu_bar outside its admissible band");
    const double band = delta * delta * eps * eps;
    if (alpha_label > 0.25 * opt.c1 * band)
        throw std::invalid_argument("to_twist_coordinates: alpha exceeds a quarter of the lower band edge");
    const double min_radius = std::sqrt(opt.c1) * delta * eps;

    std::vector<double> rho_grid, q_grid;
    for (int i = 0; i < opt.n_rho; ++i) {
        const double i2 = band * (opt.c1 + (opt.c2 - opt.c1) * static_cast<double>(i) / (opt.n_rho - 1));
        rho_grid.push_back(std::sqrt(i2 / nu_bar));
    }
    for (int j = 0; j < opt.n_q; ++j)
        q_grid.push_back(2.0 * M_PI * nu_bar * static_cast<double>(j) / opt.n_q - M_PI * nu_bar);

    const TwistAnnulusMap pert{&rm, alpha_label, nu_bar, min_radius};
    const TwistAnnulusMap ref{&rm_ref, alpha_label, nu_bar, min_radius};
    TwistProfile tp = twist_profile_from_maps(pert, ref, rho_grid, q_grid, nu_bar);
    tp.eps = eps;
    tp.delta = delta;
    tp.mu = rm.model.mu;
    tp.alpha_label = alpha_label;
    return tp;
}

// ---------------------------------------------------------------------------
// Hypothesis checks for the invariant-circle step
// ---------------------------------------------------------------------------

struct KamReport {
    bool twist_negative = false;   // finite-difference d(alpha)/d(rho) < 0 on every cell
    double twist_min = 0.0;        // range of the finite differences
    double twist_max = 0.0;
    double sup_F = 0.0;
    double sup_G = 0.0;
    double mean_G_defect = 0.0;    // largest |mean_q G| over rho rows (area-preservation proxy)
    bool graph_intersects_image = false;  // every row graph-curve meets its image (exactness proxy)
    std::string summary;
};

inline KamReport check_kam_hypotheses(const TwistProfile& tp) {
    KamReport rep;
    rep.twist_min = std::numeric_limits<double>::infinity();
    rep.twist_max = -std::numeric_limits<double>::infinity();
    rep.twist_negative = true;
    for (std::size_t i = 0; i + 1 < tp.rho_grid.size(); ++i) {
        const double d = (tp.alpha_values[i + 1] - tp.alpha_values[i]) / (tp.rho_grid[i + 1] - tp.rho_grid[i]);
        rep.twist_min = std::min(rep.twist_min, d);
        rep.twist_max = std::max(rep.twist_max, d);
        if (!(d < 0.0)) rep.twist_negative = false;
    }
    rep.graph_intersects_image = true;
    for (std::size_t i = 0; i < tp.G_samples.size(); ++i) {
        double gmin = std::numeric_limits<double>::infinity();
        double gmax = -std::numeric_limits<double>::infinity();
        double gmean = 0.0;
        for (std::size_t j = 0; j < tp.G_samples[i].size(); ++j) {
            const double g = tp.G_samples[i][j];
            gmin = std::min(gmin, g);
            gmax = std::max(gmax, g);
            gmean += g;
            rep.sup_G = std::max(rep.sup_G, std::abs(g));
            rep.sup_F = std::max(rep.sup_F, std::abs(tp.F_samples[i][j]));
        }
        gmean /= static_cast<double>(tp.G_samples[i].size());
        rep.mean_G_defect = std::max(rep.mean_G_defect, std::abs(gmean));
        // The graph rho = const intersects its image iff G changes sign (or vanishes).
        const double slack = 1e-12 * (1.0 + std::abs(tp.rho_grid[i]));
        if (!(gmin <= slack && gmax >= -slack)) rep.graph_intersects_image = false;
    }
    std::ostringstream os;
    os << "twist d(alpha)/d(rho) in [" << rep.twist_min << ", " << rep.twist_max << "]"
       << (rep.twist_negative ? " (strictly negative)" : " (NOT strictly negative)") << "; sup|F| = " << rep.sup_F
       << ", sup|G| = " << rep.sup_G << ", mean-G defect = " << rep.mean_G_defect
       << "; graph-intersects-image proxy " << (rep.graph_intersects_image ? "holds" : "fails");
    rep.summary = os.str();
    return rep;
}

// Least-squares slope of log(y) against log(x); used to fit the mu and alpha
// scaling exponents of sup|F|, sup|G|.
inline double fit_loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) throw std::invalid_argument("fit_loglog_slope: need matching samples");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) throw std::invalid_argument("fit_loglog_slope: samples must be positive");
        const double lx = std::log(xs[i]), ly = std::log(ys[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double n = static_cast<double>(xs.size());
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------
// Invariant-circle finder
// ---------------------------------------------------------------------------

// Noble-like number nearest w: keep the first continued-fraction terms of w
// and continue with a tail of ones (golden-mean tail).
inline double noble_near(double w, int lead_terms = 3) {
    const double golden = 0.5 * (1.0 + std::sqrt(5.0));
    const double a0 = std::floor(w);
    double x = w - a0;
    std::vector<double> terms;
    for (int k = 0; k < lead_terms && x > 1e-9; ++k) {
        const double inv = 1.0 / x;
        terms.push_back(std::floor(inv));
        x = inv - terms.back();
    }
    double tail = golden;  // value of [1; 1, 1, ...]
    for (auto it = terms.rbegin(); it != terms.rend(); ++it) tail = *it + 1.0 / tail;
    if (terms.empty()) return a0 + 1.0 / tail;
    return a0 + 1.0 / tail;
}

struct InvariantCircle {
    bool found = false;
    double residual = std::numeric_limits<double>::infinity();
    double rotation_number = 0.0;
    double rho0 = 0.0;
    ClosedCurve curve;  // samples (q, rho)
};

// Newton solve of the invariance equation Map(c(x)) = c(x + 2*pi*w/P) for a
// Fourier-sampled curve c(x) = (P*x/(2*pi) + u(x), rho_c + v(x)).  The
// unknowns are the nodal values of u (zero mean, fixing the phase) and v; the
// shifted curve is evaluated by trigonometric interpolation.  Absence of a
// circle within the iteration budget is a valid outcome (found = false).
template <class MapFn>
InvariantCircle find_invariant_circle(MapFn&& map, double q_period, double rho_lo, double rho_hi, double rot_number,
                                      int n = 64, int max_iter = 30, double tol = 1e-8) {
    if (n < 8 || n % 2 != 0) throw std::invalid_argument("find_invariant_circle: n must be even and >= 8");
    if (!(rho_hi > rho_lo)) throw std::invalid_argument("find_invariant_circle: empty band");
    const double P = q_period;
    const double rho_c = 0.5 * (rho_lo + rho_hi);
    const double shift = 2.0 * M_PI * rot_number / P;

    // Trigonometric shift operator: (S u)_j = u(x_j + shift).
    Eigen::MatrixXd S(n, n);
    for (int j = 0; j < n; ++j)
        for (int l = 0; l < n; ++l) {
            const double d = 2.0 * M_PI * static_cast<double>(j - l) / n + shift;
            double s = 1.0;
            for (int k = 1; k <= n / 2; ++k) s += (k == n / 2 ? 1.0 : 2.0) * std::cos(k * d);
            S(j, l) = s / n;
        }

    const auto residual_vec = [&](const Eigen::VectorXd& z) {
        Eigen::VectorXd u = z.head(n), v = z.tail(n);
        Eigen::VectorXd su = S * u, sv = S * v;
        Eigen::VectorXd R(2 * n + 1);
        for (int j = 0; j < n; ++j) {
            const double xj = 2.0 * M_PI * j / n;
            const double q = P * xj / (2.0 * M_PI) + u(j);
            const double rho = rho_c + v(j);
            const auto img = map(q, rho);
            const double q_target = P * (xj + shift) / (2.0 * M_PI) + su(j);
            R(j) = std::remainder(img[0] - q_target, P);
            R(n + j) = img[1] - (rho_c + sv(j));
        }
        R(2 * n) = u.mean();
        return R;
    };

    Eigen::VectorXd z = Eigen::VectorXd::Zero(2 * n);
    Eigen::VectorXd R = residual_vec(z);
    double rnorm = R.lpNorm<Eigen::Infinity>();
    InvariantCircle out;
    out.rotation_number = rot_number;
    for (int iter = 0; iter < max_iter && rnorm > tol; ++iter) {
        Eigen::MatrixXd J(2 * n + 1, 2 * n);
        const double h = 1e-7 * (1.0 + z.lpNorm<Eigen::Infinity>());
        for (int c = 0; c < 2 * n; ++c) {
            Eigen::VectorXd zp = z;
            zp(c) += h;
            J.col(c) = (residual_vec(zp) - R) / h;
        }
        const Eigen::VectorXd dz = J.colPivHouseholderQr().solve(-R);
        double lambda = 1.0;
        bool improved = false;
        for (int back = 0; back < 6; ++back) {
            const Eigen::VectorXd z_try = z + lambda * dz;
            const double excursion = z_try.tail(n).lpNorm<Eigen::Infinity>();
            if (rho_c + excursion > rho_hi + 0.5 * (rho_hi - rho_lo) || rho_c - excursion < rho_lo - 0.5 * (rho_hi - rho_lo)) {
                lambda *= 0.5;
                continue;
            }
            const Eigen::VectorXd R_try = residual_vec(z_try);
            const double r_try = R_try.lpNorm<Eigen::Infinity>();
            if (r_try < rnorm) {
                z = z_try;
                R = R_try;
                rnorm = r_try;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if (!improved) break;
    }
    out.residual = rnorm;
    if (rnorm <= tol) {
        out.found = true;
        out.rho0 = rho_c + z.tail(n).mean();
        for (int j = 0; j < n; ++j) {
            const double xj = 2.0 * M_PI * j / n;
            out.curve.samples.push_back({P * xj / (2.0 * M_PI) + z(j), rho_c + z(n + j)});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Unstable-circle transport and the homoclinic hunt
// ---------------------------------------------------------------------------

// Trace of W^u(P^alpha) on Sigma_L: the circle {xi1 = 0, xi2^2 + eta2^2 = alpha}
// on {eta1 = delta} transported once by the global return map, in (q2,p2).
inline ClosedCurve unstable_intersection_curve(const ReturnMapper& rm, double alpha, int n = 64, double c1 = 0.03,
                                               double max_turn = 0.2) {
    const double band = rm.delta * rm.delta * rm.model.eps * rm.model.eps;
    if (!(alpha > 0.0) || alpha > 0.25 * c1 * band)
        throw std::invalid_argument("unstable_intersection_curve: alpha outside the admissible window (0, c1*delta^2*eps^2/4]");
    const auto gen = [&](double t) -> Pt2 {
        const double theta = 2.0 * M_PI * t;
        try {
            const Vec4 start = rm.unstable_circle_point(alpha, theta);
            const ReturnRecord rec = rm.global_map_ret2({start, Chart::scaled});
            return {rec.image.x[Q2], rec.image.x[P2]};
        } catch (const std::exception& e) {
            std::ostringstream os;
            os << "unstable_intersection_curve: sample at theta = " << theta << " missed the return domain: " << e.what();
            throw std::runtime_error(os.str());
        }
    };
    ClosedCurve c = sample_closed(gen, n, max_turn);
    c.chart = Chart::scaled;
    return c;
}

// Trace of W^s(P^alpha) on Sigma_L: the equality locus of the energy-level
// graph and the center-stable graph, eta1 = 0 on the energy level, sampled as
// a radial root solve per angle.
inline ClosedCurve stable_section_curve(const ReturnMapper& rm, double alpha, int n = 128) {
    const double r0 = std::sqrt(alpha);
    ClosedCurve c;
    c.chart = Chart::scaled;
    for (int k = 0; k < n; ++k) {
        const double phi = 2.0 * M_PI * k / n;
        const double cphi = std::cos(phi), sphi = std::sin(phi);
        const auto eta1_of = [&](double r) {
            return rm.graph_energy_level(alpha, r * cphi, r * sphi) - rm.graph_cs(r * cphi, r * sphi);
        };
        double lo = 0.2 * r0, hi = 1.8 * r0;
        double flo = eta1_of(lo), fhi = eta1_of(hi);
        if (flo * fhi > 0.0) throw std::runtime_error("stable_section_curve: radial bracket failed");
        for (int it = 0; it < 80; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double fm = eta1_of(mid);
            if (flo * fm <= 0.0) {
                hi = mid;
                fhi = fm;
            } else {
                lo = mid;
                flo = fm;
            }
        }
        const double r = 0.5 * (lo + hi);
        c.samples.push_back({r * cphi, r * sphi});
    }
    return c;
}

struct HuntResult {
    double alpha = 0.0;
    double epsilon = 0.0, delta = 0.0, mu = 0.0;
    bool found = false;
    int loop_count = 0;  // 0 when no intersection within max_loops
    std::vector<Pt2> intersections;
    std::vector<double> residuals;
    std::vector<ClosedCurve> iterates;
    std::vector<double> areas;
    std::string note;
};

struct HuntOptions {
    int n_samples = 48;
    double c1 = 0.03;
    double max_turn = 0.2;
    int max_pts = 512;
    double prox_tol = 2e-7;        // proximity threshold of the intersection test
    double confine_factor = 4.0;   // iterates must stay within confine_factor * sqrt(alpha)
};

// Iterate-until-intersection core: record the current curve, test it against
// the stable trace, advance every sample through the restricted return map.
// Equal areas forbid strict containment of either curve in the other; a
// detected containment or an escape from the confinement band is an error.
template <class AdvanceFn, class ConfineFn>
HuntResult hunt_core(ClosedCurve cu, const ClosedCurve& cs, int max_loops, AdvanceFn&& advance, ConfineFn&& confined,
                     double prox_tol = 0.0) {
    HuntResult res;
    for (int loop = 1; loop <= max_loops; ++loop) {
        res.iterates.push_back(cu);
        res.areas.push_back(std::abs(curve_area(cu)));
        const CurveIntersections hits = intersect_curves(cu, cs, prox_tol);
        if (!hits.points.empty()) {
            res.found = true;
            res.loop_count = loop;
            res.intersections = hits.points;
            res.residuals = hits.residuals;
            return res;
        }
        if (winding_number(cs, cu.samples.front()) != 0)
            throw std::runtime_error("containment: the iterate lies inside the stable trace, contradicting equal areas");
        if (winding_number(cu, cs.samples.front()) != 0)
            throw std::runtime_error("containment: the stable trace lies inside the iterate, contradicting equal areas");
        if (loop == max_loops) break;
        for (Pt2& p : cu.samples) {
            if (!confined(p)) {
                std::ostringstream os;
                os << "confinement: sample (" << p[0] << ", " << p[1] << ") left the trapping band at loop " << loop;
                throw std::runtime_error(os.str());
            }
            p = advance(p);
        }
    }
    res.note = "no intersection within the loop budget";
    return res;
}

inline HuntResult hunt_homoclinic(const ReturnMapper& rm, double alpha, int max_loops, const HuntOptions& opt = {}) {
    ClosedCurve cu = unstable_intersection_curve(rm, alpha, opt.n_samples, opt.c1, opt.max_turn);
    const ClosedCurve cs = stable_section_curve(rm, alpha, std::max(2 * opt.n_samples, 64));
    const double r_max = opt.confine_factor * std::sqrt(alpha);
    const auto advance = [&](const Pt2& p) -> Pt2 {
        try {
            const auto img = rm.restricted_return(alpha, p[0], p[1]);
            return {img[0], img[1]};
        } catch (const std::exception& e) {
            std::ostringstream os;
            os << "confinement: sample (" << p[0] << ", " << p[1] << ") escaped the return-map domain: " << e.what();
            throw std::runtime_error(os.str());
        }
    };
    const auto confined = [&](const Pt2& p) { return std::hypot(p[0], p[1]) <= r_max; };
    HuntResult res = hunt_core(std::move(cu), cs, max_loops, advance, confined, opt.prox_tol);
    res.alpha = alpha;
    res.epsilon = rm.model.eps;
    res.delta = rm.delta;
    res.mu = rm.model.mu;
    return res;
}

// ---------------------------------------------------------------------------
// Artifacts
// ---------------------------------------------------------------------------

inline void write_curve_csv(std::ostream& os, const ClosedCurve& c) {
    os << "index,q2,p2,chart\n";
    os.precision(17);
    for (std::size_t i = 0; i < c.samples.size(); ++i)
        os << i << ',' << c.samples[i][0] << ',' << c.samples[i][1] << ',' << chart_name(c.chart) << '\n';
}

inline std::string hunt_manifest_json(const HuntResult& r) {
    std::ostringstream os;
    os.precision(17);
    os << "{\n  \"alpha\": " << r.alpha << ",\n  \"epsilon\": " << r.epsilon << ",\n  \"delta\": " << r.delta
       << ",\n  \"mu\": " << r.mu << ",\n  \"loop_count\": " << (r.found ? r.loop_count : 0) << ",\n  \"found\": "
       << (r.found ? "true" : "false") << ",\n  \"areas\": [";
    for (std::size_t i = 0; i < r.areas.size(); ++i) os << (i ? ", " : "") << r.areas[i];
    os << "],\n  \"intersections\": [";
    for (std::size_t i = 0; i < r.intersections.size(); ++i)
        os << (i ? ", " : "") << "[" << r.intersections[i][0] << ", " << r.intersections[i][1] << "]";
    os << "],\n  \"residuals\": [";
    for (std::size_t i = 0; i < r.residuals.size(); ++i) os << (i ? ", " : "") << r.residuals[i];
    os << "]\n}\n";
    return os.str();
}

}  // namespace oiw
