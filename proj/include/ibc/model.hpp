#ifndef IBC_MODEL_HPP
#define IBC_MODEL_HPP

// Physical model: dispersions, form factors, exponents and the pointwise
// condition checkers.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "ibc/error.hpp"

namespace ibc {

using cplx = std::complex<double>;

/// Momentum in up to three dimensions; components beyond the model dimension stay zero.
using Momentum = Eigen::Vector3d;

enum class ModelKind { Gross, Eckmann, NelsonReference, Custom };

constexpr std::string_view to_string(ModelKind k) noexcept {
    switch (k) {
    case ModelKind::Gross: return "gross";
    case ModelKind::Eckmann: return "eckmann";
    case ModelKind::NelsonReference: return "nelson";
    case ModelKind::Custom: return "custom";
    }
    return "unknown";
}

/// User-supplied model. `form_factor(p, k)` is v_p(k) without the coupling constant.
struct CustomModel {
    std::function<double(const Momentum&)> nucleon_energy;
    std::function<double(const Momentum&)> boson_energy;
    std::function<cplx(const Momentum& p, const Momentum& k)> form_factor;
    // True when every integrand built from this model depends on k only
    // through |k| and |p - k|; enables the axisymmetric quadrature path.
    bool axisymmetric = false;
};

struct ModelParams {
    ModelKind kind = ModelKind::Gross;
    int d = 2;
    int M = 1;
    double alpha = 0.5;
    double beta = 1.0;
    double gamma = 1.0;
    double mu = 1.0;
    double m_boson = 1.0;
    std::vector<cplx> couplings{cplx{1.0, 0.0}};
    double delta = 0.0; // Eckmann exponent trade-off, alpha = 1 - delta/2
    std::shared_ptr<const CustomModel> custom;

    static ModelParams gross(int nucleons = 1) {
        ModelParams p;
        p.kind = ModelKind::Gross;
        p.d = 2;
        p.M = nucleons;
        p.alpha = 0.5;
        p.beta = p.gamma = 1.0;
        p.couplings.assign(static_cast<std::size_t>(nucleons), cplx{1.0, 0.0});
        return p;
    }

    static ModelParams eckmann(int nucleons = 1, double delta = 0.0) {
        ModelParams p;
        p.kind = ModelKind::Eckmann;
        p.d = 3;
        p.M = nucleons;
        p.delta = delta;
        p.alpha = 1.0 - delta / 2.0;
        p.beta = p.gamma = 1.0;
        p.couplings.assign(static_cast<std::size_t>(nucleons), cplx{1.0, 0.0});
        return p;
    }

    // Non-relativistic reference: Theta(p) = |p|^2 + mu, omega^{-1/2} form factor.
    static ModelParams nelson_reference(int nucleons = 1) {
        ModelParams p;
        p.kind = ModelKind::NelsonReference;
        p.d = 3;
        p.M = nucleons;
        p.alpha = 0.5;
        p.beta = 1.0;
        p.gamma = 2.0;
        p.couplings.assign(static_cast<std::size_t>(nucleons), cplx{1.0, 0.0});
        return p;
    }

    bool massless_bosons() const noexcept { return m_boson == 0.0; }

    /// Throws InvalidParams or EckmannMassless on a violated invariant.
    void validate() const {
        auto bad = [](const std::string& m) { fail(ErrorKind::InvalidParams, m); };
        if (d < 1 || d > 3) bad("dimension must be 1, 2 or 3");
        if (M < 1) bad("need at least one nucleon");
        if (couplings.size() != static_cast<std::size_t>(M)) bad("one coupling constant per nucleon required");
        if (!(gamma > 0.0)) bad("gamma must be positive");
        if (!(beta > 0.0) || beta > gamma) bad("beta must lie in (0, gamma]");
        if (!(alpha >= 0.0) || !(alpha < d / 2.0)) bad("alpha must lie in [0, d/2)");
        if (mu < 0.0 || m_boson < 0.0) bad("masses must be non-negative");
        switch (kind) {
        case ModelKind::Gross:
            if (d != 2) bad("Gross model is defined for d = 2");
            break;
        case ModelKind::Eckmann:
            if (d != 3) bad("Eckmann model is defined for d = 3");
            if (mu <= 0.0) fail(ErrorKind::EckmannMassless, "Eckmann form factor needs mu > 0");
            break;
        case ModelKind::NelsonReference:
            if (d != 3) bad("Nelson reference model is defined for d = 3");
            break;
        case ModelKind::Custom:
            if (!custom || !custom->nucleon_energy || !custom->boson_energy || !custom->form_factor)
                bad("custom model requires all three plugin functions");
            break;
        }
    }

    /// Integrands depend on k only through |k| and |p - k|.
    bool axisymmetric() const noexcept {
        return kind != ModelKind::Custom || (custom && custom->axisymmetric);
    }
};

inline double dispersion_nucleon(const Momentum& p, const ModelParams& mp) {
    switch (mp.kind) {
    case ModelKind::NelsonReference: return p.squaredNorm() + mp.mu;
    case ModelKind::Custom: return mp.custom->nucleon_energy(p);
    default: return std::sqrt(p.squaredNorm() + mp.mu * mp.mu);
    }
}

inline double dispersion_boson(const Momentum& k, const ModelParams& mp) {
    if (mp.kind == ModelKind::Custom) return mp.custom->boson_energy(k);
    return std::sqrt(k.squaredNorm() + mp.m_boson * mp.m_boson);
}

/// v_p(k) without the coupling constant.
inline cplx bare_form_factor(const Momentum& p, const Momentum& k, const ModelParams& mp) {
    switch (mp.kind) {
    case ModelKind::Gross:
    case ModelKind::NelsonReference:
        return 1.0 / std::sqrt(dispersion_boson(k, mp));
    case ModelKind::Eckmann: {
        if (mp.mu <= 0.0) fail(ErrorKind::EckmannMassless, "Eckmann form factor needs mu > 0");
        const Momentum pk = p + k;
        return 1.0 / std::sqrt(dispersion_nucleon(p, mp) * dispersion_nucleon(pk, mp) * dispersion_boson(k, mp));
    }
    case ModelKind::Custom: return mp.custom->form_factor(p, k);
    }
    return 0.0;
}

/// g_i v_p(k) for nucleon index i (0-based).
inline cplx form_factor(int i, const Momentum& p, const Momentum& k, const ModelParams& mp) {
    if (i < 0 || i >= mp.M) fail(ErrorKind::IndexError, "nucleon index out of range");
    return mp.couplings[static_cast<std::size_t>(i)] * bare_form_factor(p, k, mp);
}

/// |v_p(-k)|^2 = |v_{p-k}(k)|^2 for coupling i.
inline double form_factor_sq(int i, const Momentum& p, const Momentum& k, const ModelParams& mp) {
    return std::norm(form_factor(i, p, Momentum(-k), mp));
}

struct DerivedExponents {
    double D = 0.0;
    double u_slope = 1.0;
    double cond_c_bound = 0.0;
};

inline double condition_c_threshold(double beta, double gamma) {
    return gamma * beta * beta / (beta * beta + 2.0 * gamma * gamma);
}

inline DerivedExponents ultraviolet_degree(const ModelParams& mp) {
    return {mp.d - 2.0 * mp.alpha - mp.gamma, mp.beta / mp.gamma, condition_c_threshold(mp.beta, mp.gamma)};
}

/// The exponent triple the condition-c machinery depends on.
struct ExponentTriple {
    double beta = 1.0;
    double gamma = 1.0;
    double D = 0.0;
};

inline ExponentTriple exponents_of(const ModelParams& mp) {
    return {mp.beta, mp.gamma, ultraviolet_degree(mp).D};
}

struct ConditionCReport {
    bool holds = false;
    double D = 0.0;
    double bound = 0.0;
};

inline ConditionCReport check_condition_c(const ExponentTriple& e) {
    const double bound = condition_c_threshold(e.beta, e.gamma);
    return {e.D >= 0.0 && e.D < bound, e.D, bound};
}

inline ConditionCReport check_condition_c(const ModelParams& mp) { return check_condition_c(exponents_of(mp)); }

inline double u_map(double s, const ExponentTriple& e) { return (e.beta / e.gamma) * s - e.D / e.gamma; }
inline double u_map(double s, const ModelParams& mp) { return u_map(s, exponents_of(mp)); }

/// Open interval (lower, upper) for beta == gamma; otherwise the S1/S2 pair
/// consumed by appendix_parameter_family.
struct AdmissibleRange {
    bool is_interval = true;
    double lower = 0.0;
    double upper = 0.0;
    double S1 = 0.0;
    double S2 = 0.0;
};

inline AdmissibleRange admissible_s_range(const ExponentTriple& e) {
    const auto c = check_condition_c(e);
    if (!c.holds)
        fail(ErrorKind::ConditionCViolated,
             "D = " + std::to_string(c.D) + " outside [0, " + std::to_string(c.bound) + ")");
    AdmissibleRange r;
    if (e.beta == e.gamma) {
        r.lower = 2.0 * e.D / e.gamma;
        r.upper = 1.0 + e.D / e.gamma;
        return r;
    }
    r.is_interval = false;
    r.S1 = (e.gamma + e.D) / e.beta;
    r.S2 = (1.0 - 3.0 * e.D / e.gamma) / (e.gamma - e.beta);
    return r;
}

inline AdmissibleRange admissible_s_range(const ModelParams& mp) { return admissible_s_range(exponents_of(mp)); }

struct ParameterFamily {
    double s = 0.0;
    double sigma = 0.0;
    double delta1 = 0.0;
    double delta2 = 0.0;
    int case_id = 0;
};

inline ParameterFamily appendix_parameter_family(const ExponentTriple& e, double eps) {
    if (!(eps > 0.0)) fail(ErrorKind::EpsilonTooLarge, "epsilon must be positive");
    if (!(e.beta < e.gamma)) fail(ErrorKind::InvalidParams, "parameter family needs beta < gamma");
    const auto range = admissible_s_range(e);
    const double S1 = range.S1;
    const double gS2 = e.gamma * range.S2;

    ParameterFamily f;
    if (gS2 >= 3.0 * S1 - eps) {
        f = {S1 - eps, S1 - eps, 0, 0, 1};
    } else if (gS2 > 2.0 * S1) {
        f = {S1 - eps, gS2 - 2.0 * S1, 0, 0, 2};
    } else {
        f = {gS2 / 2.0 - eps, 0.0, 0, 0, 3};
    }
    const double us = u_map(f.s, e);
    f.delta1 = std::max(0.0, 1.0 - f.s) + f.s - us;
    f.delta2 = std::max(0.0, 1.0 - f.s) + std::max(0.0, 1.0 - f.sigma) / 2.0;

    auto require = [&](bool ok, const char* what) {
        if (!ok) fail(ErrorKind::EpsilonTooLarge, std::string("epsilon = ") + std::to_string(eps) + " breaks " + what);
    };
    require(f.s > 0.0 && f.sigma >= 0.0, "s > 0, sigma >= 0");
    require(us < 1.0, "u(s) < 1");
    require(u_map(us, e) > 0.0, "u(u(s)) > 0");
    require(u_map(f.sigma, e) < 1.0, "u(sigma) < 1");
    require(f.s - us + (f.sigma - u_map(f.sigma, e) - 1.0) / 2.0 < 0.0, "s - u(s) + (sigma - u(sigma) - 1)/2 < 0");
    require(f.delta1 < 1.0, "delta1 < 1");
    require(f.delta2 < 1.0, "delta2 < 1");
    return f;
}

inline ParameterFamily appendix_parameter_family(const ModelParams& mp, double eps) {
    return appendix_parameter_family(exponents_of(mp), eps);
}

namespace detail {

/// Mixture of uniform-in-ball radii and Pareto radii with isotropic directions.
class MomentumSampler {
public:
    MomentumSampler(int d, std::uint64_t seed) : d_(d), rng_(seed) {}

    Momentum operator()() {
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        double r;
        if (unif(rng_) < 0.5) {
            r = std::pow(unif(rng_), 1.0 / d_);
        } else {
            r = std::pow(1.0 - unif(rng_), -1.0); // Pareto with index 1 on [1, inf)
        }
        return r * direction();
    }

    Momentum direction() {
        Momentum v = Momentum::Zero();
        if (d_ == 1) {
            v[0] = std::bernoulli_distribution(0.5)(rng_) ? 1.0 : -1.0;
            return v;
        }
        std::normal_distribution<double> g;
        do {
            for (int i = 0; i < d_; ++i) v[i] = g(rng_);
        } while (v.norm() == 0.0);
        return v / v.norm();
    }

    std::mt19937_64& rng() { return rng_; }

private:
    int d_;
    std::mt19937_64 rng_;
};

} // namespace detail

struct ConditionAReport {
    double max_symmetry_violation = 0.0;
    double max_bound_violation = 0.0; // relative violation of the Theta / omega lower bounds
    double fitted_c = 0.0;            // smallest c with |v_p(k)| <= c |k|^{-alpha} over the samples
    std::size_t n_samples = 0;

    bool holds(double tol = 1e-12) const {
        return max_symmetry_violation <= tol && max_bound_violation <= tol && std::isfinite(fitted_c);
    }
};

inline ConditionAReport check_condition_a(const ModelParams& mp, std::size_t n_samples, std::uint64_t seed) {
    if (n_samples == 0) fail(ErrorKind::InvalidParams, "need at least one sample");
    detail::MomentumSampler sample(mp.d, seed);
    ConditionAReport rep;
    rep.n_samples = n_samples;
    for (std::size_t s = 0; s < n_samples; ++s) {
        const Momentum p = sample();
        const Momentum k = sample();
        for (int i = 0; i < mp.M; ++i) {
            const cplx lhs = form_factor(i, Momentum(p - k), k, mp);
            const cplx rhs = form_factor(i, p, Momentum(-k), mp);
            const double scale = std::max({std::abs(lhs), std::abs(rhs), 1e-300});
            rep.max_symmetry_violation = std::max(rep.max_symmetry_violation, std::abs(lhs - rhs) / scale);
            const double kn = k.norm();
            if (kn > 0.0) rep.fitted_c = std::max(rep.fitted_c, std::abs(form_factor(i, p, k, mp)) * std::pow(kn, mp.alpha));
        }
        const double theta_floor = std::pow(p.norm(), mp.gamma);
        const double omega_floor = std::pow(1.0 + k.squaredNorm(), mp.beta / 2.0);
        const double v1 = (theta_floor - std::abs(dispersion_nucleon(p, mp))) / std::max(1.0, theta_floor);
        const double v2 = (omega_floor - dispersion_boson(k, mp)) / std::max(1.0, omega_floor);
        rep.max_bound_violation = std::max({rep.max_bound_violation, v1, v2});
    }
    return rep;
}

struct KinematicBoundReport {
    double c_analytic = 0.0;
    double max_ratio = 0.0;           // sup of Theta(p)^{-1/2} Theta(p+k)^{-1/2} |k|^{(1-delta)/2}
    double max_first_step_ratio = 0.0; // sup of the same product over c (k^2+1)^{-1/4}
    std::size_t violations = 0;
    bool holds = false;
};

/// Samples the Eckmann kinematic inequality
/// Theta(p)^{-1/2} Theta(p+k)^{-1/2} <= c(mu) (k^2+1)^{-1/4} <= c(mu) |k|^{-(1-delta)/2}.
inline KinematicBoundReport eckmann_kinematic_bound(double mu, double delta, std::size_t n_samples, std::uint64_t seed) {
    if (!(mu > 0.0)) fail(ErrorKind::MasslessNucleon, "kinematic bound needs mu > 0");
    if (delta < 0.0 || delta >= 1.0) fail(ErrorKind::InvalidParams, "delta must lie in [0, 1)");
    KinematicBoundReport rep;
    rep.c_analytic = std::pow(std::pow(mu, -2.0) + std::pow(mu, -4.0), 0.25);
    detail::MomentumSampler sample(3, seed);
    auto theta = [mu](const Momentum& q) { return std::sqrt(q.squaredNorm() + mu * mu); };
    // (k^2+1)^{-1/4} <= sup_k (k^2+1)^{-1/4} |k|^{(1-delta)/2}; the sup is 1 at delta = 0.
    const double a = (1.0 - delta) / 2.0;
    const double kstar2 = a / (0.5 - a) ; // stationary point of (k^2+1)^{-1/4} k^a
    const double adjust = delta == 0.0 ? 1.0 : std::pow(kstar2 + 1.0, -0.25) * std::pow(kstar2, a / 2.0);
    for (std::size_t s = 0; s < n_samples; ++s) {
        const Momentum p = sample();
        const Momentum k = sample();
        const double prod = 1.0 / std::sqrt(theta(p) * theta(Momentum(p + k)));
        const double first = prod / (rep.c_analytic * std::pow(k.squaredNorm() + 1.0, -0.25));
        const double ratio = prod * std::pow(k.norm(), a);
        rep.max_first_step_ratio = std::max(rep.max_first_step_ratio, first);
        rep.max_ratio = std::max(rep.max_ratio, ratio);
        if (first > 1.0 + 1e-12 || ratio > rep.c_analytic * adjust * (1.0 + 1e-12)) ++rep.violations;
    }
    rep.holds = rep.violations == 0;
    return rep;
}

} // namespace ibc

#endif
