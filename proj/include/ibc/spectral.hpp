#ifndef IBC_SPECTRAL_HPP
#define IBC_SPECTRAL_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/IterativeLinearSolvers>
#include <json.hpp>

#include "ibc/error.hpp"
#include "ibc/fockgrid.hpp"
#include "ibc/ops.hpp"

namespace ibc::spectral {

using ops::SparseOperator;
using ops::SpMat;

struct EigenResult {
    Eigen::VectorXd values;
    Eigen::MatrixXcd vectors; // columns
    Eigen::VectorXd residuals;
    int iterations = 0;
};

struct LanczosOptions {
    double tol = 1e-10;
    int krylov_dim = 120;
    int max_restarts = 60;
    std::uint64_t seed = 0; // 0: derive from the basis manifest hash
};

/// Lowest eigenpairs of a Hermitian operator: Lanczos with full
/// reorthogonalization and explicit restarts from the wanted Ritz vectors.
inline EigenResult lowest_eigenpairs(const SpMat& H, int count, const LanczosOptions& opt = {}) {
    const Eigen::Index n = H.rows();
    if (count < 1 || count > n) fail(ErrorKind::InvalidParams, "eigenpair count out of range");
    EigenResult res;
    if (n <= 400) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es{Eigen::MatrixXcd(H)};
        res.values = es.eigenvalues().head(count);
        res.vectors = es.eigenvectors().leftCols(count);
        res.residuals = (H * res.vectors - res.vectors * res.values.asDiagonal()).colwise().norm().transpose();
        return res;
    }
    double hnorm = 0.0;
    for (int c = 0; c < H.outerSize(); ++c) {
        double s = 0.0;
        for (SpMat::InnerIterator it(H, c); it; ++it) s += std::abs(it.value());
        hnorm = std::max(hnorm, s);
    }
    const int m = static_cast<int>(std::min<Eigen::Index>(n, std::max(opt.krylov_dim, 3 * count + 20)));
    std::mt19937_64 rng(opt.seed ? opt.seed : 0x9e3779b97f4a7c15ull);
    std::normal_distribution<double> g;
    Eigen::VectorXcd start(n);
    for (Eigen::Index i = 0; i < n; ++i) start[i] = cplx(g(rng), 0.0);
    start.normalize();

    Eigen::MatrixXcd V(n, m);
    for (int restart = 0; restart <= opt.max_restarts; ++restart) {
        V.col(0) = start;
        Eigen::VectorXd alpha(m), beta(m);
        int k = 0;
        for (; k < m; ++k) {
            Eigen::VectorXcd w = H * V.col(k);
            alpha[k] = V.col(k).dot(w).real();
            // two passes of classical Gram-Schmidt against the whole basis
            for (int pass = 0; pass < 2; ++pass) w -= V.leftCols(k + 1) * (V.leftCols(k + 1).adjoint() * w);
            beta[k] = w.norm();
            if (k + 1 < m) {
                if (beta[k] <= 1e-14 * std::max(1.0, hnorm)) {
                    ++k;
                    break;
                }
                V.col(k + 1) = w / beta[k];
            }
        }
        const int dim = k;
        Eigen::MatrixXd Tm = Eigen::MatrixXd::Zero(dim, dim);
        for (int i = 0; i < dim; ++i) {
            Tm(i, i) = alpha[i];
            if (i + 1 < dim) Tm(i, i + 1) = Tm(i + 1, i) = beta[i];
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Tm);
        const int want = std::min(count, dim);
        res.values = es.eigenvalues().head(want);
        res.vectors = V.leftCols(dim) * es.eigenvectors().leftCols(want).cast<cplx>();
        res.residuals.resize(want);
        bool ok = true;
        for (int j = 0; j < want; ++j) {
            res.vectors.col(j).normalize();
            res.residuals[j] = (H * res.vectors.col(j) - res.values[j] * res.vectors.col(j)).norm();
            if (res.residuals[j] > opt.tol * std::max(1.0, hnorm)) ok = false;
        }
        res.iterations = restart + 1;
        if (ok && want == count) return res;
        start = res.vectors.rowwise().sum();
        if (start.norm() == 0.0) start = res.vectors.col(0);
        start.normalize();
    }
    fail(ErrorKind::NotConverged, "Lanczos residual above tolerance after restarts");
}

inline EigenResult lowest_eigenpairs(const SparseOperator& H, int count, LanczosOptions opt = {}) {
    if (!H.hermitian_flag()) fail(ErrorKind::InvalidParams, "eigensolver needs a Hermitian-tagged operator");
    if (opt.seed == 0) opt.seed = H.basis().manifest_hash() | 1u;
    return lowest_eigenpairs(H.matrix(), count, opt);
}

/// (H - z)^{-1} by Jacobi-preconditioned BiCGSTAB with a residual check against H itself.
class Resolvent {
public:
    Resolvent(const SpMat& H, cplx z, double tol = 1e-10, int max_iter = 5000)
        : H_(H), z_(z), tol_(tol), max_iter_(max_iter) {}

    Eigen::VectorXcd apply(const Eigen::VectorXcd& v) const { return solve(v, z_); }
    /// (H - conj z)^{-1} v, the adjoint of apply for Hermitian H.
    Eigen::VectorXcd apply_adjoint(const Eigen::VectorXcd& v) const { return solve(v, std::conj(z_)); }

    cplx shift() const noexcept { return z_; }

private:
    Eigen::VectorXcd solve(const Eigen::VectorXcd& v, cplx z) const {
        const double vn = v.norm();
        if (vn == 0.0) return Eigen::VectorXcd::Zero(v.size());
        SpMat A = H_;
        for (Eigen::Index i = 0; i < A.rows(); ++i) A.coeffRef(i, i) -= z;
        A.makeCompressed();
        Eigen::BiCGSTAB<SpMat, Eigen::DiagonalPreconditioner<cplx>> solver;
        solver.setTolerance(0.1 * tol_);
        solver.setMaxIterations(max_iter_);
        solver.compute(A);
        Eigen::VectorXcd w = solver.solve(v);
        for (int pass = 0; pass < 3; ++pass) {
            const Eigen::VectorXcd r = v - A * w;
            if (r.norm() <= tol_ * vn) return w;
            w += Eigen::VectorXcd(solver.solve(r));
        }
        if ((v - A * w).norm() > tol_ * vn) fail(ErrorKind::SolveNotConverged, "resolvent residual above tolerance");
        return w;
    }

    SpMat H_;
    cplx z_;
    double tol_;
    int max_iter_;
};

inline StateVector resolvent_apply(const SparseOperator& H, cplx z, const StateVector& v, double tol = 1e-10) {
    if (z.imag() == 0.0) fail(ErrorKind::InvalidParams, "resolvent needs a non-real shift");
    Resolvent r(H.matrix(), z, tol);
    return StateVector(H.basis(), r.apply(v.amplitudes()));
}

using LinearMap = std::function<Eigen::VectorXcd(const Eigen::VectorXcd&)>;

/// Largest singular value of a linear map from power iteration on A^dagger A.
inline double opnorm(const LinearMap& apply, const LinearMap& apply_adjoint, Eigen::Index dim, double tol = 1e-6,
                     int max_iter = 500, std::uint64_t seed = 5) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Eigen::VectorXcd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = cplx(g(rng), g(rng));
    v.normalize();
    double prev = -1.0;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXcd w = apply_adjoint(apply(v));
        const double rq = std::abs(v.dot(w)); // Rayleigh quotient of A^dagger A
        const double nw = w.norm();
        if (nw == 0.0) return 0.0;
        const double s = std::sqrt(rq);
        if (prev >= 0.0 && std::abs(s - prev) <= tol * s) return s;
        prev = s;
        v = w / nw;
    }
    fail(ErrorKind::NotConverged, "power iteration did not settle");
}

inline double opnorm_diff(const SpMat& A, const SpMat& B, double tol = 1e-6) {
    if (A.rows() != B.rows() || A.cols() != B.cols()) fail(ErrorKind::BasisMismatch, "shape mismatch");
    const SpMat D = A - B;
    if (ops::SparseOperator::max_abs(D) == 0.0) return 0.0;
    const SpMat Dt = D.adjoint();
    return opnorm([&](const Eigen::VectorXcd& v) { return Eigen::VectorXcd(D * v); },
                  [&](const Eigen::VectorXcd& v) { return Eigen::VectorXcd(Dt * v); }, A.cols(), tol);
}

inline double opnorm_diff(const SparseOperator& A, const SparseOperator& B, double tol = 1e-6) {
    if (A.basis().manifest_hash() != B.basis().manifest_hash()) fail(ErrorKind::BasisMismatch, "different bases");
    return opnorm_diff(A.matrix(), B.matrix(), tol);
}

/// || R_A(z) - R_B(z) || with both resolvents applied through factorized solves.
inline double resolvent_diff(const Resolvent& a, const Resolvent& b, Eigen::Index dim, double tol = 1e-6) {
    return opnorm([&](const Eigen::VectorXcd& v) { return Eigen::VectorXcd(a.apply(v) - b.apply(v)); },
                  [&](const Eigen::VectorXcd& v) { return Eigen::VectorXcd(a.apply_adjoint(v) - b.apply_adjoint(v)); },
                  dim, tol);
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0; // root mean square
};

inline LineFit least_squares(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) fail(ErrorKind::InsufficientPoints, "need at least two points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    LineFit f;
    f.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    f.intercept = my - f.slope * mx;
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (f.slope * x[i] + f.intercept);
        ss += r * r;
    }
    f.residual = std::sqrt(ss / n);
    return f;
}

enum class DivergenceRegressor { LogOnePlusSquare, LogLambda };

/// Fit of counter-term values against ln Lambda (or ln(1 + Lambda^2)).
inline LineFit divergence_fit(std::span<const double> lambdas, std::span<const double> values,
                              DivergenceRegressor reg = DivergenceRegressor::LogLambda) {
    if (lambdas.size() < 3 || lambdas.size() != values.size())
        fail(ErrorKind::InsufficientPoints, "divergence fit needs at least three (Lambda, value) pairs");
    std::vector<double> x;
    for (double l : lambdas) {
        if (!(l > 0.0)) fail(ErrorKind::InvalidParams, "cutoffs must be positive");
        x.push_back(reg == DivergenceRegressor::LogLambda ? std::log(l) : std::log1p(l * l));
    }
    return least_squares(x, values);
}

struct ConvergenceRow {
    double lambda_uv = 0.0;
    double ground_energy = 0.0;
    double resolvent_diff_to_finest = 0.0;
    double opnorm_T_diff = 0.0;
};

struct ConvergenceTable {
    int variant = 1;
    bool counterterm = true;
    std::vector<ConvergenceRow> rows;
    LineFit resolvent_rate;   // log-log fit of resolvent differences (finest row excluded)
    LineFit t_rate;           // log-log fit of the T differences
    LineFit energy_vs_log;    // ground energy against ln(1 + Lambda^2)
    nlohmann::json basis_manifest;

    bool resolvent_monotone() const {
        for (std::size_t i = 1; i < rows.size(); ++i)
            if (rows[i].resolvent_diff_to_finest > rows[i - 1].resolvent_diff_to_finest) return false;
        return true;
    }
};

struct StudyOptions {
    ops::AssemblyOptions assembly;  // lambda_uv is overwritten per row
    double epsilon = 0.1;           // T differences are weighted by L^{-(D/gamma + epsilon)}
    double opnorm_tol = 1e-6;
    LanczosOptions lanczos;
    bool compute_T = true;
};

inline ConvergenceTable cutoff_convergence_study(const FockBasis& basis, std::vector<double> lambdas,
                                                 const StudyOptions& o) {
    if (lambdas.empty()) fail(ErrorKind::InsufficientPoints, "empty cutoff list");
    std::sort(lambdas.begin(), lambdas.end());
    ConvergenceTable tab;
    tab.variant = o.assembly.variant;
    tab.counterterm = o.assembly.counterterm;
    tab.basis_manifest = basis.manifest();
    const Eigen::Index n = static_cast<Eigen::Index>(basis.total_dim());
    const cplx z(0.0, -1.0); // (H + i)^{-1}

    auto assemble = [&](double lam) {
        ops::AssemblyOptions a = o.assembly;
        a.lambda_uv = lam;
        return ops::assemble_H_direct(basis, a);
    };
    auto t_plus_e = [&](double lam) {
        ops::AssemblyOptions a = o.assembly;
        a.lambda_uv = lam;
        auto t = ops::assemble_T_cutoff(basis, lam, a.lambda_shift);
        Eigen::VectorXd e = ops::counterterm_diagonal(basis, a);
        return SpMat(t.matrix() + ops::detail::diagonal(e.cast<cplx>()));
    };

    const auto& mp = basis.params();
    const double weight_exp = -(ultraviolet_degree(mp).D / mp.gamma + o.epsilon);
    const Eigen::VectorXd lw = ops::detail::L_values(basis).array().pow(weight_exp);
    const SpMat W = ops::detail::diagonal(lw.cast<cplx>());

    const auto finest_H = assemble(lambdas.back());
    const Resolvent finest_R(finest_H.matrix(), z);
    SpMat finest_T;
    if (o.compute_T) finest_T = t_plus_e(lambdas.back());

    for (double lam : lambdas) {
        ConvergenceRow row;
        row.lambda_uv = lam;
        const auto H = lam == lambdas.back() ? finest_H : assemble(lam);
        row.ground_energy = lowest_eigenpairs(H, 1, o.lanczos).values[0];
        if (lam != lambdas.back()) {
            const Resolvent R(H.matrix(), z);
            row.resolvent_diff_to_finest = resolvent_diff(R, finest_R, n, o.opnorm_tol);
            if (o.compute_T) row.opnorm_T_diff = opnorm_diff(SpMat(t_plus_e(lam) * W), SpMat(finest_T * W), o.opnorm_tol);
        }
        tab.rows.push_back(row);
    }

    std::vector<double> lx, ly, ty, ex, ey;
    for (const auto& r : tab.rows) {
        ex.push_back(std::log1p(r.lambda_uv * r.lambda_uv));
        ey.push_back(r.ground_energy);
        if (r.lambda_uv == lambdas.back() || r.resolvent_diff_to_finest <= 0.0) continue;
        lx.push_back(std::log(r.lambda_uv));
        ly.push_back(std::log(r.resolvent_diff_to_finest));
        if (r.opnorm_T_diff > 0.0) ty.push_back(std::log(r.opnorm_T_diff));
    }
    if (lx.size() >= 2) tab.resolvent_rate = least_squares(lx, ly);
    if (ty.size() >= 2 && ty.size() == lx.size()) tab.t_rate = least_squares(lx, ty);
    if (ex.size() >= 2) tab.energy_vs_log = least_squares(ex, ey);
    return tab;
}

struct RegularityRow {
    double k_max = 0.0;
    std::size_t dim = 0;
    double ground_energy = 0.0;
    std::vector<double> norm_regular;  // ||L^eta (1-G) psi|| per eta
    std::vector<double> norm_singular; // ||L^eta G psi|| per eta
};

struct RegularityReport {
    std::vector<double> etas;
    std::vector<RegularityRow> rows;
    std::vector<double> slope_singular; // log-log growth exponent of ||L^eta G psi|| in k_max
    std::vector<double> slope_regular;
    double threshold = 0.05;

    bool bounded(std::size_t eta_index) const { return slope_singular.at(eta_index) < threshold; }
};

/// Ground state split psi = (1-G) psi + G psi across a refinement ladder.
inline RegularityReport regularity_diagnostic(std::span<const FockBasis* const> family, std::vector<double> etas,
                                              const ops::AssemblyOptions& assembly, double threshold = 0.05,
                                              const LanczosOptions& lanczos = {}) {
    if (family.size() < 3) fail(ErrorKind::InsufficientPoints, "regularity diagnostic needs at least three refinements");
    RegularityReport rep;
    rep.etas = etas;
    rep.threshold = threshold;
    for (const FockBasis* b : family) {
        RegularityRow row;
        row.k_max = b->boson_grid().k_max();
        row.dim = b->total_dim();
        const auto H = ops::assemble_H_direct(*b, assembly);
        const auto eig = lowest_eigenpairs(H, 1, lanczos);
        row.ground_energy = eig.values[0];
        const Eigen::VectorXcd psi = eig.vectors.col(0);
        const auto G = ops::assemble_G(*b, assembly.lambda_uv, assembly.lambda_shift);
        const Eigen::VectorXcd gpsi = G.matrix() * psi;
        const Eigen::VectorXcd reg = psi - gpsi;
        const Eigen::ArrayXd L = ops::detail::L_values(*b).array();
        for (double eta : etas) {
            const Eigen::ArrayXd w = L.pow(eta);
            row.norm_singular.push_back((gpsi.array() * w.cast<cplx>()).matrix().norm());
            row.norm_regular.push_back((reg.array() * w.cast<cplx>()).matrix().norm());
        }
        rep.rows.push_back(std::move(row));
    }
    for (std::size_t e = 0; e < etas.size(); ++e) {
        std::vector<double> x, ys, yr;
        for (const auto& r : rep.rows) {
            x.push_back(std::log(r.k_max));
            ys.push_back(std::log(std::max(r.norm_singular[e], std::numeric_limits<double>::min())));
            yr.push_back(std::log(std::max(r.norm_regular[e], std::numeric_limits<double>::min())));
        }
        const bool all_zero = std::all_of(rep.rows.begin(), rep.rows.end(), [&](const auto& r) { return r.norm_singular[e] == 0.0; });
        rep.slope_singular.push_back(all_zero ? 0.0 : least_squares(x, ys).slope);
        rep.slope_regular.push_back(least_squares(x, yr).slope);
    }
    return rep;
}

} // namespace ibc::spectral

#endif
