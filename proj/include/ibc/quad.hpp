#ifndef IBC_QUAD_HPP
#define IBC_QUAD_HPP

// Continuum quadrature for the counter terms, the regularizing integrals,
// the scaling-bound integral and the tail integral of the decay condition.
// Spherical coordinates: adaptive Gauss-Kronrod in the radius, nested
// adaptive angular rule, analytic power-law tails for unbounded ranges.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "ibc/error.hpp"
#include "ibc/fockgrid.hpp"
#include "ibc/model.hpp"

namespace ibc::quad {

inline constexpr double infinity = std::numeric_limits<double>::infinity();

struct Tolerance {
    double abs = 1e-9;
    double rel = 1e-8;
    std::size_t max_intervals = 4000;
};

struct QuadResult {
    double value = 0.0;
    double abs_error_estimate = 0.0;
    double inner = 0.0;
    double tail = 0.0;
    std::size_t n_evals = 0;
};

/// |k| <= Lambda with a relative slack so lattice points on the sphere count as inside.
inline bool in_ball(const Momentum& k, double lambda) {
    return std::isinf(lambda) || k.norm() <= lambda * (1.0 + 1e-12);
}

namespace detail {

struct Segment {
    double a, b, value, error;
    bool operator<(const Segment& o) const { return error < o.error; }
};

inline constexpr std::array<double, 8> xgk{0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                           0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                           0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                           0.207784955007898467600689403773245, 0.0};
inline constexpr std::array<double, 8> wgk{0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                           0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                           0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                           0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> wg{0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                          0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class F>
Segment gauss_kronrod(F& f, double a, double b, std::size_t& evals) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double kron = fc * wgk[7];
    double gauss = fc * wg[3];
    for (int j = 0; j < 7; ++j) {
        const double dx = h * xgk[static_cast<std::size_t>(j)];
        const double s = f(c - dx) + f(c + dx);
        kron += wgk[static_cast<std::size_t>(j)] * s;
        if (j % 2 == 1) gauss += wg[static_cast<std::size_t>(j / 2)] * s;
    }
    evals += 15;
    return {a, b, kron * h, std::abs((kron - gauss) * h)};
}

/// Globally adaptive integration over consecutive break points.
template <class F>
QuadResult adaptive(F&& f, std::span<const double> breaks, const Tolerance& tol, const char* what) {
    std::priority_queue<Segment> heap;
    QuadResult res;
    double value = 0.0, error = 0.0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        if (!(breaks[i + 1] > breaks[i])) continue;
        Segment s = gauss_kronrod(f, breaks[i], breaks[i + 1], res.n_evals);
        value += s.value;
        error += s.error;
        heap.push(s);
    }
    std::size_t intervals = heap.size();
    while (!heap.empty() && error > std::max(tol.abs, tol.rel * std::abs(value))) {
        Segment s = heap.top();
        const double mid = 0.5 * (s.a + s.b);
        if (intervals >= tol.max_intervals || !(mid > s.a && mid < s.b)) {
            fail(ErrorKind::QuadNotConverged, std::string(what) + ": error estimate " + std::to_string(error) +
                                                  " above tolerance after " + std::to_string(intervals) + " panels");
        }
        heap.pop();
        Segment l = gauss_kronrod(f, s.a, mid, res.n_evals);
        Segment r = gauss_kronrod(f, mid, s.b, res.n_evals);
        value += l.value + r.value - s.value;
        error += l.error + r.error - s.error;
        heap.push(l);
        heap.push(r);
        ++intervals;
    }
    // recompute to shed accumulated cancellation in the running sums
    value = 0.0;
    error = 0.0;
    while (!heap.empty()) {
        value += heap.top().value;
        error += heap.top().error;
        heap.pop();
    }
    res.value = res.inner = value;
    res.abs_error_estimate = error;
    return res;
}

} // namespace detail

/// Integrand over R^d together with the geometry hints the angular rule needs.
struct SphericalIntegrand {
    int d = 3;
    std::function<double(const Momentum&)> f;
    Momentum axis = Momentum::UnitX(); // direction of the distinguished momentum p
    bool axisymmetric = false;         // f depends only on |k| and the angle to `axis`
    std::vector<double> radial_breaks; // radii where f is non-smooth
};

namespace detail {

inline void orthonormal_frame(const Momentum& axis, Momentum& e0, Momentum& e1, Momentum& e2) {
    e0 = axis.norm() > 0 ? Momentum(axis / axis.norm()) : Momentum(Momentum::UnitX());
    Momentum t = std::abs(e0.x()) < 0.9 ? Momentum(Momentum::UnitX()) : Momentum(Momentum::UnitY());
    e1 = (t - t.dot(e0) * e0).normalized();
    e2 = e0.cross(e1);
}

/// r^{d-1} times the integral of f over the sphere of radius r.
class ShellIntegral {
public:
    ShellIntegral(const SphericalIntegrand& in, const Tolerance& outer) : in_(in) {
        tol_.abs = outer.abs * 1e-3;
        tol_.rel = outer.rel * 1e-2;
        tol_.max_intervals = outer.max_intervals;
        orthonormal_frame(in.axis, e0_, e1_, e2_);
        if (in_.d == 2) {
            // planar problems live in the span of e0 and whichever of x/y completes it
            Momentum t = std::abs(e0_.x()) < 0.9 ? Momentum(Momentum::UnitX()) : Momentum(Momentum::UnitY());
            e1_ = (t - t.dot(e0_) * e0_);
            e1_.z() = 0.0;
            e1_.normalize();
        }
    }

    double operator()(double r) {
        if (r == 0.0) return 0.0;
        switch (in_.d) {
        case 1: {
            evals += 2;
            return in_.f(Momentum(r, 0, 0)) + in_.f(Momentum(-r, 0, 0));
        }
        case 2: {
            auto g = [&](double phi) { return in_.f(Momentum(r * (std::cos(phi) * e0_ + std::sin(phi) * e1_))); };
            const double pi = std::numbers::pi;
            const std::array<double, 3> br{0.0, pi / 2, pi};
            if (in_.axisymmetric) {
                auto q = adaptive(g, br, tol_, "angular");
                evals += q.n_evals;
                return 2.0 * r * q.value;
            }
            const std::array<double, 5> full{0.0, pi / 2, pi, 1.5 * pi, 2 * pi};
            auto q = adaptive(g, full, tol_, "angular");
            evals += q.n_evals;
            return r * q.value;
        }
        default: {
            const double pi = std::numbers::pi;
            const std::array<double, 3> cb{-1.0, 0.0, 1.0};
            if (in_.axisymmetric) {
                auto g = [&](double c) {
                    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
                    return in_.f(Momentum(r * (c * e0_ + s * e1_)));
                };
                auto q = adaptive(g, cb, tol_, "angular");
                evals += q.n_evals;
                return 2.0 * pi * r * r * q.value;
            }
            auto outer = [&](double c) {
                const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
                auto g = [&](double phi) {
                    return in_.f(Momentum(r * (c * e0_ + s * (std::cos(phi) * e1_ + std::sin(phi) * e2_))));
                };
                const std::array<double, 3> pb{0.0, pi, 2 * pi};
                auto q = adaptive(g, pb, tol_, "azimuthal");
                evals += q.n_evals;
                return q.value;
            };
            auto q = adaptive(outer, cb, tol_, "polar");
            return r * r * q.value;
        }
        }
    }

    std::size_t evals = 0;

private:
    const SphericalIntegrand& in_;
    Tolerance tol_;
    Momentum e0_, e1_, e2_;
};

} // namespace detail

/// Integral of f over the shell r_min < |k| < r_max (r_max may be infinite).
inline QuadResult integrate_shell(const SphericalIntegrand& in, double r_min, double r_max, const Tolerance& tol,
                                  const char* what = "radial") {
    QuadResult res;
    if (!(r_max > r_min)) return res;
    detail::ShellIntegral shell(in, tol);
    auto F = [&](double r) { return shell(r); };

    std::vector<double> br{r_min};
    for (double b : in.radial_breaks)
        if (b > r_min && b < r_max) br.push_back(b);
    std::sort(br.begin() + 1, br.end());
    double head_end = r_max;
    if (std::isinf(r_max)) {
        head_end = std::max({2.0, 2.0 * r_min, 2.0 * (br.size() > 1 ? br.back() : 0.0)});
    }
    br.push_back(head_end);
    // a few coarse panels over decades help the adaptive rule with r^{-q} shapes
    std::vector<double> fine{br.front()};
    for (std::size_t i = 1; i < br.size(); ++i) {
        const double a = fine.back(), b = br[i];
        if (a > 0 && b / a > 8.0) {
            for (double x = a * 4.0; x < b / 2.0; x *= 4.0) fine.push_back(x);
        } else if (a == 0.0 && b > 1.0) {
            for (double x = 1.0 / 64.0; x < std::min(1.0, b / 2.0); x *= 4.0) fine.push_back(x);
        }
        fine.push_back(b);
    }
    auto head = detail::adaptive(F, fine, tol, what);
    res.value = res.inner = head.value;
    res.abs_error_estimate = head.abs_error_estimate;
    res.n_evals = head.n_evals;
    if (!std::isinf(r_max)) {
        res.n_evals += shell.evals;
        return res;
    }

    // Doubling panels with a fitted power-law tail R F(R)/(q-1).
    double R = head_end;
    double prev_total = std::numeric_limits<double>::quiet_NaN();
    double prev_q = std::numeric_limits<double>::quiet_NaN();
    for (int step = 0; step < 200; ++step) {
        const std::array<double, 2> panel{R, 2.0 * R};
        auto q = detail::adaptive(F, panel, tol, what);
        res.inner += q.value;
        res.abs_error_estimate += q.abs_error_estimate;
        res.n_evals += q.n_evals;
        R *= 2.0;
        const double f1 = F(R / std::sqrt(2.0));
        const double f2 = F(R);
        double tail = 0.0;
        double qexp = std::numeric_limits<double>::quiet_NaN();
        if (f2 == 0.0) {
            tail = 0.0;
            qexp = infinity;
        } else if (f1 != 0.0 && (f1 > 0) == (f2 > 0)) {
            qexp = std::log(f1 / f2) / std::log(std::sqrt(2.0));
            if (qexp > 1.0) tail = R * f2 / (qexp - 1.0);
        }
        const double total = res.inner + tail;
        const double goal = std::max(tol.abs, tol.rel * std::abs(total));
        const bool tail_ok = std::isfinite(qexp) ? qexp > 1.0 : qexp == infinity;
        if (tail_ok && (std::abs(tail) < goal ||
                        (std::abs(total - prev_total) < 0.1 * goal && std::abs(qexp - prev_q) < 1e-3))) {
            res.tail = tail;
            res.value = total;
            res.abs_error_estimate += std::abs(total - prev_total) * (std::isnan(prev_total) ? 0.0 : 1.0);
            res.n_evals += shell.evals;
            return res;
        }
        prev_total = total;
        prev_q = qexp;
        if (R > 1e15) break;
    }
    fail(ErrorKind::QuadNotConverged, std::string(what) + ": tail did not settle (integrand not decaying fast enough)");
}

inline QuadResult integrate_ball(const SphericalIntegrand& in, double lambda, const Tolerance& tol,
                                 const char* what = "radial") {
    if (lambda <= 0.0) return {};
    return integrate_shell(in, 0.0, lambda, tol, what);
}

inline Momentum axis_of(const Momentum& p) { return p.norm() > 0 ? Momentum(p) : Momentum(Momentum::UnitX()); }

/// Single-particle counter term E^nu_Lambda(p) for coupling `nucleon`.
inline QuadResult counterterm(const Momentum& p, double lambda, int variant, const ModelParams& mp,
                              const Tolerance& tol = {}, int nucleon = 0) {
    if (lambda < 0.0) fail(ErrorKind::InvalidParams, "cutoff must be non-negative");
    if (variant != 1 && variant != 2) fail(ErrorKind::InvalidParams, "variant must be 1 or 2");
    if (lambda == 0.0) return {};
    SphericalIntegrand in;
    in.d = mp.d;
    in.axis = axis_of(p);
    in.axisymmetric = mp.axisymmetric();
    if (p.norm() > 0) in.radial_breaks.push_back(p.norm());
    in.f = [&](const Momentum& k) {
        const double v2 = form_factor_sq(nucleon, p, k, mp);
        const double e = variant == 1 ? dispersion_nucleon(k, mp) : dispersion_nucleon(Momentum(p - k), mp);
        return v2 / (e + dispersion_boson(k, mp));
    };
    return integrate_ball(in, lambda, tol, "counterterm");
}

/// I_l(P, K) with the boson k appended: |v_{p_l}(-k)|^2 [1/(L(P - e_l k, K u {k}) + shift) - 1/(Theta(k)+omega(k))].
inline QuadResult integral_I(std::span<const Momentum> P, std::span<const Momentum> K_hat, double lambda, int ell,
                             const ModelParams& mp, const Tolerance& tol = {}, double shift = 0.0) {
    if (ell < 0 || static_cast<std::size_t>(ell) >= P.size()) fail(ErrorKind::IndexError, "nucleon index out of range");
    double rest = 0.0;
    for (std::size_t i = 0; i < P.size(); ++i)
        if (static_cast<int>(i) != ell) rest += dispersion_nucleon(P[i], mp);
    for (const auto& k : K_hat) rest += dispersion_boson(k, mp);
    const Momentum p = P[static_cast<std::size_t>(ell)];
    SphericalIntegrand in;
    in.d = mp.d;
    in.axis = axis_of(p);
    in.axisymmetric = mp.axisymmetric();
    if (p.norm() > 0) in.radial_breaks.push_back(p.norm());
    in.f = [&](const Momentum& k) {
        const double v2 = form_factor_sq(ell, p, k, mp);
        const double w = dispersion_boson(k, mp);
        const double Lk = rest + dispersion_nucleon(Momentum(p - k), mp) + w + shift;
        const double ref = dispersion_nucleon(k, mp) + w;
        return v2 * (ref - Lk) / (Lk * ref);
    };
    return integrate_ball(in, lambda, tol, "integral_I");
}

/// J(p) = integral of |v_p(-k)|^2 [1/(Theta(k)+omega(k)) - 1/(Theta(p-k)+omega(k))].
inline QuadResult integral_J(const Momentum& p, double lambda, const ModelParams& mp, const Tolerance& tol = {},
                             int nucleon = 0) {
    SphericalIntegrand in;
    in.d = mp.d;
    in.axis = axis_of(p);
    in.axisymmetric = mp.axisymmetric();
    if (p.norm() > 0) in.radial_breaks.push_back(p.norm());
    in.f = [&](const Momentum& k) {
        const double v2 = form_factor_sq(nucleon, p, k, mp);
        const double w = dispersion_boson(k, mp);
        const double a = dispersion_nucleon(k, mp) + w;
        const double b = dispersion_nucleon(Momentum(p - k), mp) + w;
        return v2 * (b - a) / (a * b);
    };
    return integrate_ball(in, lambda, tol, "integral_J");
}

struct ScalingExponents {
    double nu_exp = 0.0;    // |k|^{-nu}
    double sigma_exp = 0.0; // |p-k|^{-sigma}
    double r = 1.0;         // denominator power
};

inline void check_window(const ScalingExponents& e, int d, double gamma) {
    const double lo = e.nu_exp + e.sigma_exp;
    const double hi = lo + e.r * gamma;
    if (e.nu_exp < 0 || e.sigma_exp < 0 || !(e.r > 0) || !(d > lo && d < hi))
        fail(ErrorKind::ExponentWindowViolated,
             "d = " + std::to_string(d) + " outside (" + std::to_string(lo) + ", " + std::to_string(hi) + ")");
}

/// Integral over |k| > Lambda of |k|^{-nu}|p-k|^{-sigma} (|p-k|^gamma + |k|^beta + Omega)^{-r}.
/// Only d, beta and gamma are taken from the model.
inline QuadResult scaling_lhs(const Momentum& p, double omega_shift, double lambda, const ScalingExponents& e,
                              const ModelParams& mp, const Tolerance& tol = {}) {
    check_window(e, mp.d, mp.gamma);
    if (omega_shift < 0) fail(ErrorKind::InvalidParams, "Omega must be non-negative");
    if (std::isinf(lambda)) return {};
    SphericalIntegrand in;
    in.d = mp.d;
    in.axis = axis_of(p);
    in.axisymmetric = true;
    if (p.norm() > 0) in.radial_breaks.push_back(p.norm());
    in.f = [&](const Momentum& k) {
        const double kn = k.norm();
        const double qn = (p - k).norm();
        return std::pow(kn, -e.nu_exp) * std::pow(qn, -e.sigma_exp) *
               std::pow(std::pow(qn, mp.gamma) + std::pow(kn, mp.beta) + omega_shift, -e.r);
    };
    return integrate_shell(in, std::max(0.0, lambda), infinity, tol, "scaling_lhs");
}

struct ScalingPoint {
    Momentum p = Momentum::Zero();
    double omega_shift = 1.0;
    double lambda = 0.0;
    ScalingExponents exps;
};

struct ScalingFit {
    double fitted_C = 0.0;     // sup of the normalized ratio over the sweep
    double worst_ratio = 0.0;  // sup over the largest-Omega slice divided by sup over the rest
    bool bounded = false;      // worst_ratio <= 1.05
    bool monotone_in_lambda = true;
    std::vector<double> ratios;
    std::vector<double> values;
};

/// Normalized ratio LHS * Omega^{r - (d-nu-sigma)/gamma - delta_L} * Lambda^{beta delta_L}, delta_L = delta for Lambda > 1.
inline ScalingFit scaling_bound_fit(std::span<const ScalingPoint> sweep, double delta, const ModelParams& mp,
                                    const Tolerance& tol = {}) {
    ScalingFit fit;
    if (sweep.empty()) return fit;
    double max_omega = 0.0;
    for (const auto& s : sweep) max_omega = std::max(max_omega, s.omega_shift);
    double sup_edge = 0.0, sup_rest = 0.0;
    for (const auto& s : sweep) {
        const double v = scaling_lhs(s.p, s.omega_shift, s.lambda, s.exps, mp, tol).value;
        const double dl = s.lambda > 1.0 ? delta : 0.0;
        const double expo = s.exps.r - (mp.d - s.exps.nu_exp - s.exps.sigma_exp) / mp.gamma - dl;
        double ratio = v * std::pow(s.omega_shift, expo);
        if (s.lambda > 1.0) ratio *= std::pow(s.lambda, mp.beta * dl);
        fit.values.push_back(v);
        fit.ratios.push_back(ratio);
        fit.fitted_C = std::max(fit.fitted_C, ratio);
        double& sup = s.omega_shift == max_omega ? sup_edge : sup_rest;
        sup = std::max(sup, ratio);
    }
    fit.worst_ratio = sup_rest > 0.0 ? sup_edge / sup_rest : 1.0;
    fit.bounded = std::isfinite(fit.fitted_C) && fit.worst_ratio <= 1.05;
    // raw values must not grow with Lambda beyond 1 at fixed (p, Omega, exponents)
    for (std::size_t i = 0; i < sweep.size(); ++i)
        for (std::size_t j = 0; j < sweep.size(); ++j) {
            const auto& a = sweep[i];
            const auto& b = sweep[j];
            if (a.lambda > 1.0 && b.lambda > a.lambda && a.p == b.p && a.omega_shift == b.omega_shift &&
                a.exps.nu_exp == b.exps.nu_exp && a.exps.sigma_exp == b.exps.sigma_exp && a.exps.r == b.exps.r &&
                fit.values[j] > fit.values[i] * (1.0 + 1e-9))
                fit.monotone_in_lambda = false;
        }
    return fit;
}

/// Integral over |k| > Lambda of |v_p(-k)|^2 |Theta(k) - Theta(p-k)| / ((Theta(p-k)+omega)(Theta(k)+omega)).
inline QuadResult condition_b_lhs(const Momentum& p, double lambda, const ModelParams& mp, const Tolerance& tol = {},
                                  int nucleon = 0) {
    if (std::isinf(lambda)) return {};
    SphericalIntegrand in;
    in.d = mp.d;
    in.axis = axis_of(p);
    in.axisymmetric = mp.axisymmetric();
    in.radial_breaks.push_back(p.norm());
    in.radial_breaks.push_back(p.norm() / 2.0);
    in.f = [&](const Momentum& k) {
        const double v2 = form_factor_sq(nucleon, p, k, mp);
        const double w = dispersion_boson(k, mp);
        const double tk = dispersion_nucleon(k, mp);
        const double tpk = dispersion_nucleon(Momentum(p - k), mp);
        return v2 * std::abs(tk - tpk) / ((tpk + w) * (tk + w));
    };
    return integrate_shell(in, std::max(0.0, lambda), infinity, tol, "condition_b_lhs");
}

struct TailDecayReport {
    std::vector<Momentum> momenta;
    std::vector<double> lambdas;
    std::vector<std::vector<double>> values; // values[p][lambda]
    bool monotone = true;
    double envelope_C = 0.0; // sup of value / (|p|^exponent + 1)
    double exponent = 0.1;
};

/// condition_b_lhs over a p-sample and an increasing cutoff list, with the
/// envelope constant of value <= C (|p|^exponent + 1).
inline TailDecayReport condition_b_sweep(const ModelParams& mp, std::span<const Momentum> momenta,
                                         std::vector<double> lambdas, const Tolerance& tol = {},
                                         double exponent = 0.1, int nucleon = 0) {
    std::sort(lambdas.begin(), lambdas.end());
    TailDecayReport rep;
    rep.momenta.assign(momenta.begin(), momenta.end());
    rep.lambdas = lambdas;
    rep.exponent = exponent;
    for (const Momentum& p : momenta) {
        std::vector<double> row;
        for (double l : lambdas) row.push_back(condition_b_lhs(p, l, mp, tol, nucleon).value);
        for (std::size_t j = 1; j < row.size(); ++j)
            if (row[j] > row[j - 1] * (1.0 + 1e-9) + tol.abs) rep.monotone = false;
        const double env = std::pow(p.norm(), exponent) + 1.0;
        for (double v : row) rep.envelope_C = std::max(rep.envelope_C, v / env);
        rep.values.push_back(std::move(row));
    }
    return rep;
}

// Lattice (grid-quadrature) counterparts. Sums run over boson lattice points
// k with |k| <= Lambda, omega(k) > 0 and p - k inside the nucleon box.

inline double counterterm_grid(const FockBasis& basis, ModeIndex p, double lambda, int variant, int nucleon = 0) {
    if (variant != 1 && variant != 2) fail(ErrorKind::InvalidParams, "variant must be 1 or 2");
    const auto& ng = basis.nucleon_grid();
    const auto& bg = basis.boson_grid();
    const auto& mp = basis.params();
    if (lambda <= 0.0) return 0.0;
    double sum = 0.0;
    for (ModeIndex k = 0; k < bg.size(); ++k) {
        const Momentum& km = bg.point(k);
        if (!in_ball(km, lambda) || basis.omega(k) <= 0.0) continue;
        auto pk = ng.translate(p, -bg.coord(k));
        if (!pk) continue;
        const double v2 = std::norm(form_factor(nucleon, ng.point(*pk), km, mp));
        const double e = variant == 1 ? dispersion_nucleon(km, mp) : basis.theta(*pk);
        sum += v2 / (e + basis.omega(k));
    }
    return sum * bg.cell_weight();
}

/// Lattice J(p): same summation range as counterterm_grid.
inline double integral_J_grid(const FockBasis& basis, ModeIndex p, double lambda, int nucleon = 0) {
    return counterterm_grid(basis, p, lambda, 1, nucleon) - counterterm_grid(basis, p, lambda, 2, nucleon);
}

/// Lattice sum of an arbitrary integrand over the full boson grid (midpoint rule).
template <class F>
double lattice_sum(const MomentumGrid& g, F&& f) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += f(g.point(i));
    return s * g.cell_weight();
}

} // namespace ibc::quad

#endif
