#ifndef IBC_OPS_HPP
#define IBC_OPS_HPP

// Sparse assembly of the operators on a truncated Fock basis and the two
// assembly routes for the renormalized cutoff Hamiltonian.
//
// Conventions. A creation step from state s adds boson mode k and moves
// nucleon i from p_i to p_i - k, producing t. Its amplitude is
//   c_i(k; t) sqrt(m_k(s) + 1),  c_i(k; t) = g_i v_{p_i - k}(k) sqrt(h^d),
// which is the occupation-number form of the symmetrized sector formula.
// The annihilation operator is the exact matrix adjoint. Modes outside the
// cutoff ball or with omega(k) = 0 carry no coupling. Out-of-range nucleon
// shifts are dropped.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <json.hpp>

#include "ibc/error.hpp"
#include "ibc/fockgrid.hpp"
#include "ibc/model.hpp"
#include "ibc/quad.hpp"

namespace ibc::ops {

using SpMat = Eigen::SparseMatrix<cplx>;
using Triplet = Eigen::Triplet<cplx>;

enum class QuadMode { Grid, Continuum };

constexpr std::string_view to_string(QuadMode m) noexcept { return m == QuadMode::Grid ? "grid" : "continuum"; }

struct OperatorTags {
    std::string name;
    std::string path = "component"; // direct | ibc | component
    double lambda_uv = 0.0;
    int variant = 0;
    double lambda_shift = 0.0;
    QuadMode quad_mode = QuadMode::Grid;

    nlohmann::json to_json() const {
        return {{"name", name},
                {"path", path},
                {"lambda_uv", std::isinf(lambda_uv) ? -1.0 : lambda_uv},
                {"variant", variant},
                {"lambda_shift", lambda_shift},
                {"quad_mode", std::string(to_string(quad_mode))}};
    }
};

class SparseOperator {
public:
    SparseOperator(const FockBasis& basis, SpMat m, OperatorTags tags, bool hermitian)
        : basis_(&basis), m_(std::move(m)), tags_(std::move(tags)), hermitian_(hermitian) {
        if (static_cast<std::size_t>(m_.rows()) != basis.total_dim() || m_.rows() != m_.cols())
            fail(ErrorKind::DimensionMismatch, "operator shape differs from basis dimension");
        m_.makeCompressed();
    }

    const FockBasis& basis() const noexcept { return *basis_; }
    const SpMat& matrix() const noexcept { return m_; }
    const OperatorTags& tags() const noexcept { return tags_; }
    bool hermitian_flag() const noexcept { return hermitian_; }
    std::size_t dim() const noexcept { return basis_->total_dim(); }

    Eigen::VectorXcd apply(const Eigen::VectorXcd& v) const { return m_ * v; }

    /// max |A - A^dagger| relative to max |A|.
    double hermiticity_defect() const {
        SpMat d = m_ - SpMat(m_.adjoint());
        return max_abs(d) / std::max(max_abs(m_), std::numeric_limits<double>::min());
    }

    static double max_abs(const SpMat& a) {
        double m = 0.0;
        for (int c = 0; c < a.outerSize(); ++c)
            for (SpMat::InnerIterator it(a, c); it; ++it) m = std::max(m, std::abs(it.value()));
        return m;
    }

private:
    const FockBasis* basis_;
    SpMat m_;
    OperatorTags tags_;
    bool hermitian_;
};

struct AssemblyOptions {
    double lambda_uv = quad::infinity;
    int variant = 1;
    double lambda_shift = 0.0;
    QuadMode quad_mode = QuadMode::Grid;
    bool counterterm = true; // false gives the unrenormalized control
    quad::Tolerance tol{};
    double theta_sign = 1.0; // test hook for negative controls
};

namespace detail {

inline SpMat diagonal(const Eigen::VectorXcd& d) {
    SpMat m(d.size(), d.size());
    m.reserve(Eigen::VectorXi::Constant(d.size(), 1));
    for (Eigen::Index i = 0; i < d.size(); ++i) m.insert(i, i) = d[i];
    m.makeCompressed();
    return m;
}

inline SpMat identity(std::size_t n) { return diagonal(Eigen::VectorXcd::Ones(static_cast<Eigen::Index>(n))); }

/// Modes that carry coupling at this cutoff.
inline std::vector<char> coupled_modes(const FockBasis& b, double lambda_uv) {
    const auto& g = b.boson_grid();
    std::vector<char> on(g.size(), 0);
    if (lambda_uv <= 0.0) return on;
    for (ModeIndex k = 0; k < g.size(); ++k) on[k] = quad::in_ball(g.point(k), lambda_uv) && b.omega(k) > 0.0;
    return on;
}

inline cplx coefficient(const FockBasis& b, int i, ModeIndex nucleon_after, ModeIndex k) {
    return form_factor(i, b.nucleon_grid().point(nucleon_after), b.boson_grid().point(k), b.params()) *
           std::sqrt(b.boson_grid().cell_weight());
}

struct Step {
    std::size_t target;
    int nucleon;
    ModeIndex mode;
    cplx coeff;   // c_i(k; t) at the nucleon momentum of the larger state
    double occ;   // occupation of `mode` in the larger state
};

/// All creation steps out of state s.
template <class F>
void for_each_creation(const FockBasis& b, const std::vector<char>& on, std::size_t s, F&& f) {
    const StateRef st = b.state(s);
    if (st.n() >= b.n_max()) return;
    const auto& ng = b.nucleon_grid();
    const auto& bg = b.boson_grid();
    const int M = b.nucleons();
    std::array<ModeIndex, 8> nbuf{};
    std::vector<ModeIndex> nheap;
    std::span<ModeIndex> nuc = M <= 8 ? std::span<ModeIndex>(nbuf.data(), static_cast<std::size_t>(M))
                                      : std::span<ModeIndex>((nheap.resize(static_cast<std::size_t>(M)), nheap));
    std::vector<ModeIndex> kk(st.bosons.size() + 1);
    for (ModeIndex k = 0; k < bg.size(); ++k) {
        if (!on[k]) continue;
        auto pos = std::upper_bound(st.bosons.begin(), st.bosons.end(), k);
        const auto lower = std::lower_bound(st.bosons.begin(), pos, k);
        const double occ = static_cast<double>(pos - lower) + 1.0;
        std::copy(st.bosons.begin(), pos, kk.begin());
        kk[static_cast<std::size_t>(pos - st.bosons.begin())] = k;
        std::copy(pos, st.bosons.end(), kk.begin() + (pos - st.bosons.begin()) + 1);
        const LatticeCoord minus_k = -bg.coord(k);
        for (int i = 0; i < M; ++i) {
            auto pi = ng.translate(st.nucleons[static_cast<std::size_t>(i)], minus_k);
            if (!pi) continue;
            std::copy(st.nucleons.begin(), st.nucleons.end(), nuc.begin());
            nuc[static_cast<std::size_t>(i)] = *pi;
            auto t = b.index_of_sorted(nuc, kk);
            if (!t) continue;
            f(Step{*t, i, k, coefficient(b, i, *pi, k), occ});
        }
    }
}

/// All annihilation steps out of state t (adjoint partners of creation steps into t).
template <class F>
void for_each_annihilation(const FockBasis& b, const std::vector<char>& on, std::size_t t, F&& f) {
    const StateRef st = b.state(t);
    const auto& ng = b.nucleon_grid();
    const auto& bg = b.boson_grid();
    const int M = b.nucleons();
    std::vector<ModeIndex> nuc(static_cast<std::size_t>(M));
    std::vector<ModeIndex> kk;
    for (std::size_t j = 0; j < st.bosons.size(); ++j) {
        const ModeIndex k = st.bosons[j];
        if (j > 0 && st.bosons[j - 1] == k) continue;
        if (!on[k]) continue;
        auto hi = std::upper_bound(st.bosons.begin(), st.bosons.end(), k);
        const double occ = static_cast<double>(hi - (st.bosons.begin() + static_cast<std::ptrdiff_t>(j)));
        kk.assign(st.bosons.begin(), st.bosons.end());
        kk.erase(kk.begin() + static_cast<std::ptrdiff_t>(j));
        const LatticeCoord plus_k = bg.coord(k);
        for (int l = 0; l < M; ++l) {
            auto pl = ng.translate(st.nucleons[static_cast<std::size_t>(l)], plus_k);
            if (!pl) continue;
            std::copy(st.nucleons.begin(), st.nucleons.end(), nuc.begin());
            nuc[static_cast<std::size_t>(l)] = *pl;
            auto s = b.index_of_sorted(nuc, kk);
            if (!s) continue;
            f(Step{*s, l, k, coefficient(b, l, st.nucleons[static_cast<std::size_t>(l)], k), occ});
        }
    }
}

inline SpMat from_triplets(std::size_t n, const std::vector<Triplet>& t) {
    SpMat m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

inline void require_shift(const FockBasis& b, double lambda_shift) {
    if (lambda_shift < 0.0) fail(ErrorKind::InvalidParams, "lambda shift must be non-negative");
    if (b.params().massless_bosons() && lambda_shift <= 0.0)
        fail(ErrorKind::MasslessWithoutShift, "massless bosons need a positive lambda shift");
}

inline Eigen::VectorXd L_values(const FockBasis& b) {
    return diag_values(b, [&](const StateRef& s) { return b.L(s); });
}

} // namespace detail

inline SparseOperator assemble_L(const FockBasis& b) {
    return {b, detail::diagonal(detail::L_values(b).cast<cplx>()), {"L"}, true};
}

inline SparseOperator assemble_number(const FockBasis& b) {
    Eigen::VectorXd n = diag_values(b, [](const StateRef& s) { return static_cast<double>(s.n()); });
    return {b, detail::diagonal(n.cast<cplx>()), {"N"}, true};
}

inline SparseOperator assemble_creation(const FockBasis& b, double lambda_uv) {
    const auto on = detail::coupled_modes(b, lambda_uv);
    std::vector<Triplet> trip;
    for (std::size_t s = 0; s < b.total_dim(); ++s)
        detail::for_each_creation(b, on, s, [&](const detail::Step& st) {
            trip.emplace_back(static_cast<int>(st.target), static_cast<int>(s), st.coeff * std::sqrt(st.occ));
        });
    OperatorTags tags{"a_dagger"};
    tags.lambda_uv = lambda_uv;
    return {b, detail::from_triplets(b.total_dim(), trip), tags, false};
}

inline SparseOperator assemble_annihilation(const FockBasis& b, double lambda_uv) {
    auto c = assemble_creation(b, lambda_uv);
    OperatorTags tags = c.tags();
    tags.name = "a";
    return {b, SpMat(c.matrix().adjoint()), tags, false};
}

/// G = -(L + lambda)^{-1} a^dagger.
inline SparseOperator assemble_G(const FockBasis& b, double lambda_uv, double lambda_shift = 0.0) {
    detail::require_shift(b, lambda_shift);
    auto c = assemble_creation(b, lambda_uv);
    Eigen::VectorXd inv = (detail::L_values(b).array() + lambda_shift).inverse().matrix();
    SpMat g = detail::diagonal((-inv).cast<cplx>()) * c.matrix();
    OperatorTags tags{"G"};
    tags.lambda_uv = lambda_uv;
    tags.lambda_shift = lambda_shift;
    return {b, std::move(g), tags, false};
}

/// T = -G^dagger (L + lambda) G.
inline SparseOperator assemble_T_cutoff(const FockBasis& b, double lambda_uv, double lambda_shift = 0.0) {
    auto g = assemble_G(b, lambda_uv, lambda_shift);
    Eigen::VectorXd lv = detail::L_values(b).array() + lambda_shift;
    SpMat lg = detail::diagonal(lv.cast<cplx>()) * g.matrix();
    SpMat t = -(SpMat(g.matrix().adjoint()) * lg);
    OperatorTags tags{"T"};
    tags.lambda_uv = lambda_uv;
    tags.lambda_shift = lambda_shift;
    return {b, std::move(t), tags, true};
}

/// T as the product a G (the second algebraic route).
inline SparseOperator assemble_T_product(const FockBasis& b, double lambda_uv, double lambda_shift = 0.0) {
    auto g = assemble_G(b, lambda_uv, lambda_shift);
    auto a = assemble_annihilation(b, lambda_uv);
    OperatorTags tags{"T_product"};
    tags.lambda_uv = lambda_uv;
    tags.lambda_shift = lambda_shift;
    return {b, SpMat(a.matrix() * g.matrix()), tags, true};
}

/// Counter term E(P) = sum_i E^nu_i(p_i) on every basis state.
inline Eigen::VectorXd counterterm_diagonal(const FockBasis& b, const AssemblyOptions& o) {
    const auto& ng = b.nucleon_grid();
    const int M = b.nucleons();
    // per (nucleon, grid point) cache
    std::vector<std::vector<double>> e(static_cast<std::size_t>(M), std::vector<double>(ng.size(), 0.0));
    if (o.counterterm && o.lambda_uv > 0.0) {
        for (int i = 0; i < M; ++i)
            for (ModeIndex p = 0; p < ng.size(); ++p) {
                e[static_cast<std::size_t>(i)][p] =
                    o.quad_mode == QuadMode::Grid
                        ? quad::counterterm_grid(b, p, o.lambda_uv, o.variant, i)
                        : quad::counterterm(ng.point(p), o.lambda_uv, o.variant, b.params(), o.tol, i).value;
            }
    }
    return diag_values(b, [&](const StateRef& s) {
        double v = 0.0;
        for (int i = 0; i < M; ++i) v += e[static_cast<std::size_t>(i)][s.nucleons[static_cast<std::size_t>(i)]];
        return v;
    });
}

/// Diagonal part T_d^nu of T + E.
inline SparseOperator assemble_Td(const FockBasis& b, const AssemblyOptions& o) {
    if (o.variant != 1 && o.variant != 2) fail(ErrorKind::InvalidParams, "variant must be 1 or 2");
    const int M = b.nucleons();
    Eigen::VectorXd td(static_cast<Eigen::Index>(b.total_dim()));
    if (o.quad_mode == QuadMode::Grid) {
        const auto on = detail::coupled_modes(b, o.lambda_uv);
        AssemblyOptions ct = o;
        ct.counterterm = true;
        const Eigen::VectorXd e = counterterm_diagonal(b, ct);
        const Eigen::VectorXd L = detail::L_values(b);
        for (std::size_t s = 0; s < b.total_dim(); ++s) {
            double d = 0.0;
            detail::for_each_creation(b, on, s, [&](const detail::Step& st) {
                d += std::norm(st.coeff) / (L[static_cast<Eigen::Index>(st.target)] + o.lambda_shift);
            });
            // -sum_l (I_l [+ J_l]) = -(D - E^nu)
            td[static_cast<Eigen::Index>(s)] = -(d - e[static_cast<Eigen::Index>(s)]);
        }
    } else {
        const auto& ng = b.nucleon_grid();
        const auto& bg = b.boson_grid();
        std::vector<Momentum> P(static_cast<std::size_t>(M));
        std::vector<Momentum> K;
        for (std::size_t s = 0; s < b.total_dim(); ++s) {
            const StateRef st = b.state(s);
            for (int i = 0; i < M; ++i) P[static_cast<std::size_t>(i)] = ng.point(st.nucleons[static_cast<std::size_t>(i)]);
            K.clear();
            for (auto k : st.bosons) K.push_back(bg.point(k));
            double v = 0.0;
            for (int l = 0; l < M; ++l) {
                v += quad::integral_I(P, K, o.lambda_uv, l, b.params(), o.tol, o.lambda_shift).value;
                if (o.variant == 2) v += quad::integral_J(P[static_cast<std::size_t>(l)], o.lambda_uv, b.params(), o.tol, l).value;
            }
            td[static_cast<Eigen::Index>(s)] = -v;
        }
    }
    OperatorTags tags{"T_d"};
    tags.lambda_uv = o.lambda_uv;
    tags.variant = o.variant;
    tags.lambda_shift = o.lambda_shift;
    tags.quad_mode = o.quad_mode;
    return {b, detail::diagonal(td.cast<cplx>()), tags, true};
}

/// theta_{i l}: nucleon i emits k, nucleon l reabsorbs the same k (i != l).
inline SparseOperator assemble_theta(const FockBasis& b, int i, int l, double lambda_uv, double lambda_shift = 0.0) {
    const int M = b.nucleons();
    if (i < 0 || l < 0 || i >= M || l >= M) fail(ErrorKind::IndexError, "nucleon index out of range");
    if (i == l) fail(ErrorKind::IndexError, "theta needs distinct nucleon indices");
    detail::require_shift(b, lambda_shift);
    const auto on = detail::coupled_modes(b, lambda_uv);
    const Eigen::VectorXd L = detail::L_values(b);
    std::vector<Triplet> trip;
    for (std::size_t s = 0; s < b.total_dim(); ++s) {
        detail::for_each_creation(b, on, s, [&](const detail::Step& c) {
            if (c.nucleon != i) return;
            const double den = L[static_cast<Eigen::Index>(c.target)] + lambda_shift;
            detail::for_each_annihilation(b, on, c.target, [&](const detail::Step& a) {
                if (a.nucleon != l || a.mode != c.mode) return;
                trip.emplace_back(static_cast<int>(a.target), static_cast<int>(s), std::conj(a.coeff) * c.coeff / den);
            });
        });
    }
    OperatorTags tags{"theta_" + std::to_string(i + 1) + std::to_string(l + 1)};
    tags.lambda_uv = lambda_uv;
    tags.lambda_shift = lambda_shift;
    return {b, detail::from_triplets(b.total_dim(), trip), tags, false};
}

/// tau_{i l}: nucleon i emits k_{n+1}, nucleon l absorbs a different boson (normal-ordered remainder).
inline SparseOperator assemble_tau(const FockBasis& b, int i, int l, double lambda_uv, double lambda_shift = 0.0) {
    const int M = b.nucleons();
    if (i < 0 || l < 0 || i >= M || l >= M) fail(ErrorKind::IndexError, "nucleon index out of range");
    detail::require_shift(b, lambda_shift);
    const auto on = detail::coupled_modes(b, lambda_uv);
    const Eigen::VectorXd L = detail::L_values(b);
    std::vector<Triplet> trip;
    for (std::size_t s = 0; s < b.total_dim(); ++s) {
        detail::for_each_creation(b, on, s, [&](const detail::Step& c) {
            if (c.nucleon != i) return;
            const double den = L[static_cast<Eigen::Index>(c.target)] + lambda_shift;
            detail::for_each_annihilation(b, on, c.target, [&](const detail::Step& a) {
                if (a.nucleon != l) return;
                // b_k R b_k^dagger = (m+1) R: the "1" belongs to the diagonal and theta parts
                const double occ = a.mode == c.mode ? c.occ - 1.0 : std::sqrt(c.occ * a.occ);
                if (occ == 0.0) return;
                trip.emplace_back(static_cast<int>(a.target), static_cast<int>(s), std::conj(a.coeff) * c.coeff * occ / den);
            });
        });
    }
    OperatorTags tags{"tau_" + std::to_string(i + 1) + std::to_string(l + 1)};
    tags.lambda_uv = lambda_uv;
    tags.lambda_shift = lambda_shift;
    return {b, detail::from_triplets(b.total_dim(), trip), tags, false};
}

/// T_od = -sum_{i != l} theta_{il} - sum_{i,l} tau_{il}.
inline SparseOperator assemble_Tod(const FockBasis& b, double lambda_uv, double lambda_shift = 0.0, double theta_sign = 1.0) {
    const int M = b.nucleons();
    SpMat acc(static_cast<Eigen::Index>(b.total_dim()), static_cast<Eigen::Index>(b.total_dim()));
    for (int i = 0; i < M; ++i)
        for (int l = 0; l < M; ++l) {
            if (i != l) acc -= theta_sign * assemble_theta(b, i, l, lambda_uv, lambda_shift).matrix();
            acc -= assemble_tau(b, i, l, lambda_uv, lambda_shift).matrix();
        }
    OperatorTags tags{"T_od"};
    tags.lambda_uv = lambda_uv;
    tags.lambda_shift = lambda_shift;
    return {b, std::move(acc), tags, theta_sign == 1.0};
}

/// H + E = L + a + a^dagger + E(P).
inline SparseOperator assemble_H_direct(const FockBasis& b, const AssemblyOptions& o) {
    auto c = assemble_creation(b, o.lambda_uv);
    Eigen::VectorXd diag = detail::L_values(b) + counterterm_diagonal(b, o);
    SpMat h = detail::diagonal(diag.cast<cplx>()) + c.matrix() + SpMat(c.matrix().adjoint());
    OperatorTags tags{"H"};
    tags.path = "direct";
    tags.lambda_uv = o.lambda_uv;
    tags.variant = o.variant;
    tags.quad_mode = o.quad_mode;
    return {b, std::move(h), tags, true};
}

/// (1 - G)^dagger (L + lambda)(1 - G) + T_d + T_od - lambda.
inline SparseOperator assemble_H_ibc(const FockBasis& b, const AssemblyOptions& o) {
    detail::require_shift(b, o.lambda_shift);
    const std::size_t n = b.total_dim();
    auto g = assemble_G(b, o.lambda_uv, o.lambda_shift);
    SpMat one_minus_g = detail::identity(n) - g.matrix();
    Eigen::VectorXd lv = detail::L_values(b).array() + o.lambda_shift;
    SpMat shifted = detail::diagonal(lv.cast<cplx>());
    SpMat h = SpMat(one_minus_g.adjoint()) * (shifted * one_minus_g);
    AssemblyOptions td_opts = o;
    if (!o.counterterm) fail(ErrorKind::InvalidParams, "the IBC route always carries the counter term");
    h += assemble_Td(b, td_opts).matrix();
    h += assemble_Tod(b, o.lambda_uv, o.lambda_shift, o.theta_sign).matrix();
    h -= o.lambda_shift * detail::identity(n);
    OperatorTags tags{"H"};
    tags.path = "ibc";
    tags.lambda_uv = o.lambda_uv;
    tags.variant = o.variant;
    tags.lambda_shift = o.lambda_shift;
    tags.quad_mode = o.quad_mode;
    return {b, std::move(h), tags, o.theta_sign == 1.0};
}

struct IdentityReport {
    double max_abs_diff = 0.0;
    double max_rel_diff = 0.0; // max |A-B| over max(max|A|, max|B|)
    double norm_diff_estimate = 0.0;
    bool pass = false;
};

/// Spectral norm of a sparse matrix by power iteration on A^dagger A.
inline double spectral_norm_estimate(const SpMat& a, int iterations = 50, std::uint64_t seed = 7) {
    if (a.nonZeros() == 0) return 0.0;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Eigen::VectorXcd v(a.cols());
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = cplx(g(rng), g(rng));
    v.normalize();
    double s = 0.0;
    for (int it = 0; it < iterations; ++it) {
        Eigen::VectorXcd w = a.adjoint() * (a * v);
        const double nw = w.norm();
        if (nw == 0.0) return 0.0;
        const double next = std::sqrt(nw);
        v = w / nw;
        if (std::abs(next - s) <= 1e-10 * next) return next;
        s = next;
    }
    return s;
}

inline IdentityReport verify_identity(const SparseOperator& A, const SparseOperator& B, double tol) {
    if (&A.basis() != &B.basis() && A.basis().manifest_hash() != B.basis().manifest_hash())
        fail(ErrorKind::BasisMismatch, "operators live on different bases");
    SpMat d = A.matrix() - B.matrix();
    IdentityReport r;
    r.max_abs_diff = SparseOperator::max_abs(d);
    const double scale = std::max(SparseOperator::max_abs(A.matrix()), SparseOperator::max_abs(B.matrix()));
    r.max_rel_diff = scale > 0.0 ? r.max_abs_diff / scale : r.max_abs_diff;
    r.norm_diff_estimate = spectral_norm_estimate(d, 30);
    r.pass = r.max_rel_diff <= tol;
    return r;
}

struct InvertibilityReport {
    double min_singular_value = 0.0;  // of 1 - G
    double number_bound_constant = 0.0; // C in ||N psi|| <= C (||N (1-G) psi|| + ||psi||)
    double norm_G = 0.0;
};

/// (1 - G) is unipotent on the truncated space; its inverse is the finite Neumann series.
inline Eigen::VectorXcd apply_inverse_one_minus_G(const SpMat& g, const Eigen::VectorXcd& v, int n_max) {
    Eigen::VectorXcd acc = v;
    Eigen::VectorXcd term = v;
    for (int k = 0; k < n_max; ++k) {
        term = g * term;
        acc += term;
    }
    return acc;
}

inline InvertibilityReport check_one_minus_G(const FockBasis& b, double lambda_uv, double lambda_shift = 0.0,
                                             int iterations = 60) {
    auto g = assemble_G(b, lambda_uv, lambda_shift);
    const SpMat& G = g.matrix();
    const int n_max = b.n_max();
    const Eigen::VectorXd nvals = diag_values(b, [](const StateRef& s) { return static_cast<double>(s.n()); });
    InvertibilityReport rep;
    rep.norm_G = spectral_norm_estimate(G, iterations);

    auto power = [&](auto&& fwd, auto&& adj) {
        std::mt19937_64 rng(11);
        std::normal_distribution<double> nd;
        Eigen::VectorXcd v(static_cast<Eigen::Index>(b.total_dim()));
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = cplx(nd(rng), nd(rng));
        v.normalize();
        double s = 0.0;
        for (int it = 0; it < iterations; ++it) {
            Eigen::VectorXcd w = adj(fwd(v));
            const double nw = w.norm();
            if (nw == 0.0) return 0.0;
            s = std::sqrt(nw);
            v = w / nw;
        }
        return s;
    };
    const SpMat Gt = G.adjoint();
    auto inv = [&](const Eigen::VectorXcd& v) { return apply_inverse_one_minus_G(G, v, n_max); };
    auto inv_adj = [&](const Eigen::VectorXcd& v) { return apply_inverse_one_minus_G(Gt, v, n_max); };
    const double inv_norm = power(inv, inv_adj);
    rep.min_singular_value = inv_norm > 0 ? 1.0 / inv_norm : 0.0;

    // || N (1-G)^{-1} (N+1)^{-1} || (1 + ||G||) bounds the constant
    const Eigen::ArrayXd n1 = nvals.array() + 1.0;
    auto fwd = [&](const Eigen::VectorXcd& v) {
        Eigen::VectorXcd w = v.array() / n1.cast<cplx>();
        return Eigen::VectorXcd((inv(w).array() * nvals.array().cast<cplx>()).matrix());
    };
    auto adj = [&](const Eigen::VectorXcd& v) {
        Eigen::VectorXcd w = v.array() * nvals.array().cast<cplx>();
        return Eigen::VectorXcd((inv_adj(w).array() / n1.cast<cplx>()).matrix());
    };
    rep.number_bound_constant = power(fwd, adj) * (1.0 + rep.norm_G);
    return rep;
}

/// Sparse triplet dump: one JSON header line, then "row col re im" per stored entry.
inline void write_triplets(const SparseOperator& op, std::ostream& os) {
    nlohmann::json header{{"format", "ibc-triplets-v1"},
                          {"rows", op.dim()},
                          {"cols", op.dim()},
                          {"nnz", op.matrix().nonZeros()},
                          {"tags", op.tags().to_json()},
                          {"hermitian", op.hermitian_flag()},
                          {"basis_hash", std::to_string(op.basis().manifest_hash())}};
    os << header.dump() << '\n';
    os.precision(17);
    const SpMat& m = op.matrix();
    std::vector<std::array<double, 4>> rows;
    for (int c = 0; c < m.outerSize(); ++c)
        for (SpMat::InnerIterator it(m, c); it; ++it)
            rows.push_back({static_cast<double>(it.row()), static_cast<double>(it.col()), it.value().real(), it.value().imag()});
    std::sort(rows.begin(), rows.end());
    for (const auto& r : rows)
        os << static_cast<long long>(r[0]) << ' ' << static_cast<long long>(r[1]) << ' ' << r[2] << ' ' << r[3] << '\n';
}

struct TripletFile {
    nlohmann::json header;
    SpMat matrix;
};

inline TripletFile read_triplets(std::istream& is) {
    TripletFile f;
    std::string line;
    if (!std::getline(is, line)) fail(ErrorKind::ConfigError, "empty triplet file");
    f.header = nlohmann::json::parse(line);
    const auto n = f.header.at("rows").get<Eigen::Index>();
    std::vector<Triplet> t;
    long long r, c;
    double re, im;
    while (is >> r >> c >> re >> im) t.emplace_back(static_cast<int>(r), static_cast<int>(c), cplx(re, im));
    f.matrix.resize(n, n);
    f.matrix.setFromTriplets(t.begin(), t.end());
    return f;
}

} // namespace ibc::ops

#endif
