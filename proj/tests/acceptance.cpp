// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ibc/cli.hpp"

using namespace ibc;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;
using ops::SpMat;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

int failures = 0;

template <class F>
void criterion(int id, const std::string& name, F&& body) {
    Outcome o;
    o.detail.precision(6);
    try {
        body(o);
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail << " [exception: " << e.what() << "]";
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "):" << o.detail.str() << std::endl;
}

cli::RunConfig preset(const std::string& name) { return cli::load_config(fs::path(IBC_PRESET_DIR) / name); }

double rel_diff(const SpMat& a, const SpMat& b) {
    const double scale = std::max({ops::SparseOperator::max_abs(a), ops::SparseOperator::max_abs(b), 1e-300});
    return ops::SparseOperator::max_abs(SpMat(a - b)) / scale;
}

ops::AssemblyOptions assembly(const cli::RunConfig& c, double lambda, int nu, double shift) {
    ops::AssemblyOptions o;
    o.lambda_uv = lambda;
    o.variant = nu;
    o.lambda_shift = shift;
    o.tol = c.quad_tolerance();
    return o;
}

// ------------------------------------------------------------ criteria 1 and 2

struct PresetRun {
    std::string name;
    std::size_t dim = 0;
    double identity_rel = 0.0; // worst direct vs ibc over Lambda, nu
    double identity_seconds = 0.0;
    double shift_rel = 0.0;    // worst lambda-shift difference
    std::string error;
};

PresetRun run_preset(const std::string& file) {
    PresetRun r;
    r.name = file;
    try {
        const auto cfg = preset(file);
        const auto t0 = Clock::now();
        const FockBasis basis = cli::make_basis(cfg);
        r.dim = basis.total_dim();
        std::vector<ops::SparseOperator> reference;
        for (double lam : {1.0, 2.0, 4.0})
            for (int nu : {1, 2}) {
                const auto direct = ops::assemble_H_direct(basis, assembly(cfg, lam, nu, 0.0));
                auto ibc_op = ops::assemble_H_ibc(basis, assembly(cfg, lam, nu, 0.0));
                r.identity_rel = std::max(r.identity_rel, ops::verify_identity(direct, ibc_op, 1e-10).max_rel_diff);
                reference.push_back(std::move(ibc_op));
            }
        r.identity_seconds = seconds_since(t0);
        std::size_t i = 0;
        for (double lam : {1.0, 2.0, 4.0})
            for (int nu : {1, 2}) {
                for (double shift : {1.0, 10.0}) {
                    const auto shifted = ops::assemble_H_ibc(basis, assembly(cfg, lam, nu, shift));
                    r.shift_rel = std::max(r.shift_rel, rel_diff(reference[i].matrix(), shifted.matrix()));
                }
                ++i;
            }
    } catch (const std::exception& e) {
        r.error = e.what();
    }
    return r;
}

} // namespace

int main() {
    std::cout << "acceptance run, tool version " << cli::tool_version << std::endl;
    const auto t_all = Clock::now();

    std::vector<PresetRun> presets{run_preset("gross.ini"), run_preset("eckmann.ini")};

    criterion(1, "central identity", [&](Outcome& o) {
        for (const auto& r : presets) {
            o.detail << " " << r.name << ": dim " << r.dim << ", max rel diff " << r.identity_rel << ", " << r.identity_seconds << " s;";
            o.require(r.error.empty(), r.name + " error " + r.error);
            o.require(r.identity_rel <= 1e-10, r.name + " identity above 1e-10");
            o.require(r.identity_seconds < 120.0, r.name + " runtime over 2 min");
        }
    });

    criterion(2, "lambda-shift invariance", [&](Outcome& o) {
        for (const auto& r : presets) {
            o.detail << " " << r.name << ": max rel diff over lambda in {1,10} " << r.shift_rel << ";";
            o.require(r.error.empty(), r.name + " error " + r.error);
            o.require(r.shift_rel <= 1e-10, r.name + " shift difference above 1e-10");
        }
        auto cfg = preset("eckmann.ini");
        cfg.model.m_boson = 0.0;
        const FockBasis basis = cli::make_basis(cfg);
        const auto h = ops::assemble_H_ibc(basis, assembly(cfg, 2.0, 1, 1.0));
        const auto d = ops::assemble_H_direct(basis, assembly(cfg, 2.0, 1, 0.0));
        const double massless_rel = ops::verify_identity(d, h, 1e-10).max_rel_diff;
        o.detail << " massless Eckmann, lambda=1: rel diff to direct " << massless_rel << ";";
        o.require(massless_rel <= 1e-10, "massless lambda=1 assembly disagrees with the direct path");
        bool loud = false;
        try {
            ops::assemble_H_ibc(basis, assembly(cfg, 2.0, 1, 0.0));
        } catch (const Error& e) {
            loud = e.kind() == ErrorKind::MasslessWithoutShift;
        }
        o.detail << " massless lambda=0 raises MasslessWithoutShift: " << (loud ? "yes" : "no");
        o.require(loud, "massless lambda=0 did not fail with MasslessWithoutShift");
    });

    criterion(3, "counter-term oracle", [](Outcome& o) {
        const auto mp = ModelParams::gross();
        double worst_literal = 0.0, worst_half = 0.0, ratio_min = 1e300, ratio_max = 0.0;
        for (double lam : {1.0, 2.0, 4.0, 8.0, 16.0}) {
            const double v = quad::counterterm(Momentum::Zero(), lam, 1, mp).value;
            const double literal = std::numbers::pi * std::log1p(lam * lam);
            worst_literal = std::max(worst_literal, std::abs(v - literal) / literal);
            worst_half = std::max(worst_half, std::abs(v - 0.5 * literal) / (0.5 * literal));
            ratio_min = std::min(ratio_min, v / literal);
            ratio_max = std::max(ratio_max, v / literal);
        }
        o.detail << " worst rel diff to pi*ln(1+L^2) " << worst_literal << " (ratio " << ratio_min << ".." << ratio_max
                 << "); worst rel diff to (pi/2)*ln(1+L^2) " << worst_half << ";";
        o.require(worst_literal <= 1e-8, "counter term does not match pi*ln(1+Lambda^2) to 1e-8");

        const std::vector<double> lam{8.0, 16.0, 32.0, 64.0};
        std::vector<double> vals;
        for (double l : lam) vals.push_back(quad::counterterm(Momentum::Zero(), l, 1, mp).value);
        const auto fit = spectral::divergence_fit(lam, vals);
        const auto fit_sq = spectral::divergence_fit(lam, vals, spectral::DivergenceRegressor::LogOnePlusSquare);
        o.detail << " divergence_fit slope vs ln L on [8,64] " << fit.slope << " (pi = " << std::numbers::pi
                 << "); slope vs ln(1+L^2) " << fit_sq.slope;
        o.require(std::abs(fit.slope - std::numbers::pi) <= 0.02 * std::numbers::pi, "slope not within 2% of pi");
    });

    criterion(4, "vacuum-sector identities", [](Outcome& o) {
        const MomentumGrid g(2, 4.0, 9);
        const FockBasis b(ModelParams::gross(), g, 1);
        const auto& vac = b.sector(0);
        double worst_T = 0.0, worst_tau = 0.0, worst_imag = 0.0;
        std::size_t offdiag = 0;
        for (double lam : {1.0, 2.0, 4.0}) {
            const auto T = ops::assemble_T_cutoff(b, lam).matrix();
            for (int col = static_cast<int>(vac.offset); col < static_cast<int>(vac.offset + vac.size); ++col) {
                const ModeIndex p = b.state(static_cast<std::size_t>(col)).nucleons[0];
                const double e2 = quad::counterterm_grid(b, p, lam, 2);
                double diag = 0.0;
                for (SpMat::InnerIterator it(T, col); it; ++it) {
                    if (b.sector_of(static_cast<std::size_t>(it.row())) != 0) continue;
                    if (it.row() == col) diag = it.value().real();
                    else worst_T = std::max(worst_T, std::abs(it.value()));
                }
                worst_T = std::max(worst_T, std::abs(diag + e2) / std::max(1.0, e2));
            }
            const auto tau = ops::assemble_tau(b, 0, 0, lam).matrix();
            for (int col = static_cast<int>(vac.offset); col < static_cast<int>(vac.offset + vac.size); ++col)
                for (SpMat::InnerIterator it(tau, col); it; ++it) worst_tau = std::max(worst_tau, std::abs(it.value()));
            for (int nu : {1, 2}) {
                ops::AssemblyOptions a;
                a.lambda_uv = lam;
                a.variant = nu;
                const auto td = ops::assemble_Td(b, a).matrix();
                for (int col = 0; col < td.outerSize(); ++col)
                    for (SpMat::InnerIterator it(td, col); it; ++it) {
                        if (it.row() != it.col()) ++offdiag;
                        worst_imag = std::max(worst_imag, std::abs(it.value().imag()));
                    }
            }
        }
        o.detail << " dim " << b.total_dim() << "; max |T + E2grid| on n=0 " << worst_T << "; max |tau| on n=0 " << worst_tau
                 << "; T_d off-diagonal entries " << offdiag << ", max |Im| " << worst_imag;
        o.require(worst_T <= 1e-12, "T + E on the vacuum sector above 1e-12");
        o.require(worst_tau == 0.0, "tau nonzero on the vacuum sector");
        o.require(offdiag == 0 && worst_imag == 0.0, "T_d not real diagonal");
    });

    criterion(5, "adjoint suite", [](Outcome& o) {
        std::mt19937_64 rng(2024);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double worst = 0.0;
        int bases = 0;
        for (int trial = 0; trial < 24; ++trial) {
            const int d = 1 + static_cast<int>(rng() % 3);
            int n_axis = 1;
            if (d == 1) n_axis = 1 + 2 * static_cast<int>(rng() % 5);
            if (d == 2) n_axis = 1 + 2 * static_cast<int>(rng() % 2);
            const int M = 1 + static_cast<int>(rng() % 2);
            const int n_max = static_cast<int>(rng() % 3);
            ModelParams mp = d == 3 ? (rng() % 2 ? ModelParams::eckmann(M) : ModelParams::nelson_reference(M)) : ModelParams::gross(M);
            mp.d = d;
            for (auto& gcoup : mp.couplings) gcoup = std::polar(0.5 + u(rng), 2 * std::numbers::pi * u(rng));
            const MomentumGrid g(d, 0.5 + 1.5 * u(rng), n_axis);
            const FockBasis b(mp, g, n_max);
            const double lam = 0.5 + 2.5 * u(rng);
            ++bases;

            const auto cre = ops::assemble_creation(b, lam).matrix();
            const auto ann = ops::assemble_annihilation(b, lam).matrix();
            worst = std::max(worst, rel_diff(ann, SpMat(cre.adjoint())));
            for (int i = 0; i < M; ++i)
                for (int l = 0; l < M; ++l) {
                    worst = std::max(worst, rel_diff(SpMat(ops::assemble_tau(b, i, l, lam).matrix().adjoint()),
                                                     ops::assemble_tau(b, l, i, lam).matrix()));
                    if (i != l)
                        worst = std::max(worst, rel_diff(SpMat(ops::assemble_theta(b, i, l, lam).matrix().adjoint()),
                                                         ops::assemble_theta(b, l, i, lam).matrix()));
                }
            worst = std::max(worst, rel_diff(ops::assemble_T_cutoff(b, lam).matrix(), ops::assemble_T_product(b, lam).matrix()));
        }
        o.detail << " " << bases << " random bases, worst relative defect " << worst;
        o.require(worst <= 1e-12, "adjoint defect above 1e-12");
    });

    criterion(6, "analytic inequality suite", [](Outcome& o) {
        for (double mu : {0.5, 1.0, 2.0}) {
            const auto kb = eckmann_kinematic_bound(mu, 0.0, 100000, 17);
            const double c = std::pow(std::pow(mu, -2.0) + std::pow(mu, -4.0), 0.25);
            o.detail << " mu=" << mu << ": c=" << kb.c_analytic << " max ratio " << kb.max_ratio << " violations " << kb.violations << ";";
            o.require(kb.violations == 0 && kb.holds, "kinematic bound violated");
            o.require(std::abs(kb.c_analytic - c) <= 1e-15 * c, "c(mu) formula");
        }
        for (const char* name : {"gross.ini", "eckmann.ini"}) {
            const auto cfg = preset(name);
            const auto sweep = cli::scaling_sweep(cfg);
            const auto fit = quad::scaling_bound_fit(sweep, cfg.study.scaling_delta, cfg.model, cfg.quad_tolerance());
            o.detail << " " << name << " scaling fit C " << fit.fitted_C << " edge ratio " << fit.worst_ratio << ";";
            o.require(fit.bounded && fit.monotone_in_lambda, std::string(name) + " scaling ratios not bounded");
        }
        auto line = ModelParams::gross();
        line.d = 1;
        line.gamma = line.beta = 2.0;
        double worst = 0.0;
        for (double om : {0.25, 1.0, 4.0, 16.0, 64.0}) {
            const double v = quad::scaling_lhs(Momentum::Zero(), om, 0.0, {0.0, 0.0, 1.0}, line).value;
            const double exact = std::numbers::pi / std::sqrt(2.0 * om);
            worst = std::max(worst, std::abs(v - exact) / exact);
        }
        o.detail << " pi/sqrt(2 Omega) worst rel diff " << worst;
        o.require(worst <= 1e-8, "closed-form scaling oracle");
    });

    criterion(7, "tail-integral decay", [](Outcome& o) {
        const quad::Tolerance coarse{1e-7, 1e-6, 4000};
        for (const char* name : {"gross.ini", "eckmann.ini"}) {
            const auto cfg = preset(name);
            const auto ps = cli::sample_momenta(cfg.model.d, 20, cfg.study.seed);
            const auto fine = quad::condition_b_sweep(cfg.model, ps, {1.0, 2.0, 4.0, 8.0}, cfg.quad_tolerance());
            const auto rough = quad::condition_b_sweep(cfg.model, ps, {1.0, 2.0, 4.0, 8.0}, coarse);
            bool enveloped = true;
            for (std::size_t i = 0; i < ps.size(); ++i)
                for (double v : fine.values[i])
                    enveloped = enveloped && v <= fine.envelope_C * (std::pow(ps[i].norm(), 0.1) + 1.0) * (1 + 1e-12);
            const double drift = std::abs(fine.envelope_C - rough.envelope_C) / fine.envelope_C;
            o.detail << " " << name << ": monotone " << (fine.monotone ? "yes" : "no") << ", C " << fine.envelope_C
                     << ", C drift under tolerance refinement " << drift << ";";
            o.require(fine.monotone, std::string(name) + " not monotone in Lambda");
            o.require(enveloped, std::string(name) + " envelope violated");
            o.require(drift <= 1e-3, std::string(name) + " envelope C not refinement-stable");
        }
    });

    criterion(8, "cutoff convergence study", [](Outcome& o) {
        const auto t0 = Clock::now();
        const auto cfg = preset("gross_desk.ini");
        const FockBasis basis = cli::make_basis(cfg);
        o.detail << " fibre dim " << basis.total_dim() << ", g " << cfg.model.couplings[0].real() << ";";
        const auto& lam = cfg.study.lambdas;
        for (int nu : {1, 2}) {
            spectral::StudyOptions so;
            so.assembly = assembly(cfg, 0.0, nu, 0.0);
            so.epsilon = cfg.study.epsilon;
            so.lanczos.seed = cfg.study.seed;
            const auto t = spectral::cutoff_convergence_study(basis, lam, so);
            const std::size_t n = t.rows.size();
            const double e_top = t.rows[n - 1].ground_energy, e_prev = t.rows[n - 2].ground_energy;
            const double variation = std::abs(e_top - e_prev) / std::abs(e_top);
            o.detail << " nu=" << nu << ": E0";
            for (const auto& r : t.rows) o.detail << " " << r.ground_energy;
            o.detail << ", resolvent diffs";
            for (const auto& r : t.rows) o.detail << " " << r.resolvent_diff_to_finest;
            o.detail << ", top-two variation " << variation << ";";
            o.require(t.resolvent_monotone(), "resolvent differences not monotone for nu=" + std::to_string(nu));
            o.require(variation < 0.05, "ground energy varies by 5% or more for nu=" + std::to_string(nu));
        }
        spectral::StudyOptions so;
        so.assembly = assembly(cfg, 0.0, 1, 0.0);
        so.assembly.counterterm = false;
        so.lanczos.seed = cfg.study.seed;
        so.compute_T = false;
        const auto control = spectral::cutoff_convergence_study(basis, lam, so);
        std::vector<double> ct;
        for (double l : lam) ct.push_back(quad::counterterm(Momentum::Zero(), l, 1, cfg.model, cfg.quad_tolerance()).value);
        const auto ct_fit = spectral::divergence_fit(lam, ct, spectral::DivergenceRegressor::LogOnePlusSquare);
        const double ratio = -control.energy_vs_log.slope / ct_fit.slope;
        o.detail << " control E0";
        for (const auto& r : control.rows) o.detail << " " << r.ground_energy;
        o.detail << ", slope vs ln(1+L^2) " << control.energy_vs_log.slope << " against counter-term slope " << ct_fit.slope
                 << " (ratio " << ratio << ");";
        o.require(ratio >= 0.8 && ratio <= 1.2, "control drift not consistent with the counter-term divergence");
        const double secs = seconds_since(t0);
        o.detail << " runtime " << secs << " s";
        o.require(secs < 600.0, "runtime over 10 min");
    });

    criterion(9, "regularity dichotomy", [](Outcome& o) {
        const auto cfg = preset("gross_desk.ini");
        std::vector<FockBasis> family;
        for (double km : {4.0, 8.0, 16.0}) family.push_back(cli::make_basis(cfg, km, cfg.study.ladder_n_max));
        std::vector<const FockBasis*> ptrs;
        for (const auto& b : family) ptrs.push_back(&b);
        spectral::LanczosOptions lo;
        lo.seed = cfg.study.seed;
        const std::vector<double> etas{0.25, 0.45, 0.5, 0.75};
        const auto rep = spectral::regularity_diagnostic(ptrs, etas, assembly(cfg, quad::infinity, 1, 0.0), 0.05, lo);
        o.detail << " dims";
        for (const auto& r : rep.rows) o.detail << " " << r.dim;
        o.detail << "; slopes of |L^eta G psi|:";
        for (std::size_t e = 0; e < etas.size(); ++e) o.detail << " eta=" << etas[e] << " " << rep.slope_singular[e];
        o.detail << "; regular part:";
        for (std::size_t e = 0; e < etas.size(); ++e) o.detail << " " << rep.slope_regular[e];
        o.require(rep.slope_singular[0] < 0.05, "eta=0.25 slope not below 0.05");
        o.require(rep.slope_singular[3] > 0.2, "eta=0.75 slope not above 0.2");
    });

    criterion(10, "admissible parameter family", [](Outcome& o) {
        std::vector<ExponentTriple> pts{{0.8, 1.0, 0.05}, {0.7, 1.0, 0.01}, {0.5, 1.0, 0.0}};
        std::mt19937_64 rng(10);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        while (pts.size() < 50) {
            ExponentTriple e;
            e.gamma = 0.5 + 1.5 * u(rng);
            e.beta = e.gamma * (0.2 + 0.75 * u(rng));
            e.D = 0.95 * condition_c_threshold(e.beta, e.gamma) * u(rng);
            pts.push_back(e);
        }
        int cases[4] = {0, 0, 0, 0};
        int bad = 0;
        for (const auto& e : pts) {
            const auto f = appendix_parameter_family(e, 1e-3);
            ++cases[std::clamp(f.case_id, 0, 3)];
            const bool ok = u_map(f.s, e) < 1.0 && u_map(u_map(f.s, e), e) > 0.0 && f.delta1 < 1.0 && f.delta2 < 1.0;
            if (!ok) ++bad;
        }
        o.detail << " " << pts.size() << " points, cases 1/2/3 = " << cases[1] << "/" << cases[2] << "/" << cases[3]
                 << ", violations " << bad;
        o.require(bad == 0, "inequalities violated");
        o.require(cases[1] > 0 && cases[2] > 0 && cases[3] > 0, "not all three cases exercised");
    });

    std::cout << "total runtime " << seconds_since(t_all) << " s, " << failures << " of 10 criteria failed" << std::endl;
    return failures == 0 ? 0 : 1;
}
