#include <catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <random>
#include <sstream>

#include "ibc/ops.hpp"

using namespace ibc;
using namespace ibc::ops;
using Catch::Approx;

namespace {

ModelParams line_model(int M = 1) {
    auto mp = ModelParams::gross(M);
    mp.d = 1;
    return mp;
}

Eigen::VectorXcd random_vector(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXcd v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = cplx(nd(rng), nd(rng));
    return v;
}

double rel_diff(const SpMat& a, const SpMat& b) {
    const double scale = std::max({SparseOperator::max_abs(a), SparseOperator::max_abs(b), 1e-300});
    return SparseOperator::max_abs(SpMat(a - b)) / scale;
}

// the bases used by the adjoint suite: |grid| <= 9, n_max <= 2, M <= 2
struct SmallBases {
    MomentumGrid line5 = build_grid(1, 2.0, 5);
    MomentumGrid plane9 = build_grid(2, 1.0, 3);
    FockBasis one_line{line_model(1), line5, 2};
    FockBasis two_line{line_model(2), line5, 2};
    FockBasis one_plane{ModelParams::gross(1), plane9, 2};
    FockBasis two_plane{ModelParams::gross(2), plane9, 1};

    std::vector<const FockBasis*> all() const { return {&one_line, &two_line, &one_plane, &two_plane}; }
};

} // namespace

TEST_CASE("free operator L", "[ops]") {
    const auto g = build_grid(1, 1.0, 3);
    const FockBasis b(line_model(), g, 2);
    const auto L = assemble_L(b);
    const ModeIndex z = g.origin();
    const std::vector<ModeIndex> nuc{z}, none{}, two{z, z};
    const auto vac = static_cast<Eigen::Index>(*b.index_of(nuc, none));
    const auto kk = static_cast<Eigen::Index>(*b.index_of(nuc, two));
    CHECK(L.matrix().coeff(vac, vac) == cplx(1.0));
    CHECK(std::abs(L.matrix().coeff(kk, kk) - cplx(3.0)) < 1e-15);
    CHECK(L.hermitian_flag());
    for (std::size_t i = 0; i < b.total_dim(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        REQUIRE(L.matrix().coeff(ii, ii).real() >= 1.0);
    }
    CHECK(L.matrix().nonZeros() == static_cast<Eigen::Index>(b.total_dim()));
}

TEST_CASE("single-mode creation, annihilation and G", "[ops]") {
    const auto g = build_grid(2, 1.0, 1);
    const FockBasis b(ModelParams::gross(), g, 2);
    REQUIRE(b.total_dim() == 3);
    const auto a_dag = assemble_creation(b, quad::infinity).matrix();
    CHECK(std::abs(a_dag.coeff(1, 0) - cplx(1.0)) < 1e-15);
    CHECK(std::abs(a_dag.coeff(2, 1) - cplx(std::sqrt(2.0))) < 1e-15);
    CHECK(a_dag.nonZeros() == 2);

    const auto a = assemble_annihilation(b, quad::infinity).matrix();
    CHECK(std::abs(a.coeff(0, 1) - cplx(1.0)) < 1e-15);

    const auto G = assemble_G(b, quad::infinity).matrix();
    CHECK(std::abs(G.coeff(1, 0) - cplx(-0.5)) < 1e-15);

    CHECK(assemble_G(b, 0.0).matrix().nonZeros() == 0);
    CHECK(assemble_creation(b, 0.0).matrix().nonZeros() == 0);
}

TEST_CASE("single-mode tau by hand", "[ops]") {
    // n = 1: emit k = 0 into occupation 2, reabsorb the other boson; factor (m+1) - 1 = 1,
    // denominator L(0, {0, 0}) = 3
    const auto g = build_grid(2, 1.0, 1);
    const FockBasis b(ModelParams::gross(), g, 2);
    const auto tau = assemble_tau(b, 0, 0, quad::infinity).matrix();
    CHECK(std::abs(tau.coeff(1, 1) - cplx(1.0 / 3.0)) < 1e-15);
    CHECK(tau.coeff(0, 0) == cplx(0.0));
}

TEST_CASE("creation matches the ordered-tuple construction", "[ops]") {
    // symmetric tensors over ordered boson tuples, with the 1/sqrt(n+1) symmetrizer
    const auto g = build_grid(1, 1.0, 3);
    const auto mp = line_model();
    const int n_max = 2;
    const FockBasis b(mp, g, n_max);
    const std::size_t G = g.size();
    const double sw = std::sqrt(g.cell_weight());

    std::map<std::vector<ModeIndex>, std::size_t> ordered; // (p, k1..kn) -> index
    for (int n = 0; n <= n_max; ++n) {
        std::vector<ModeIndex> t(static_cast<std::size_t>(n + 1), 0);
        std::size_t total = 1;
        for (int q = 0; q <= n; ++q) total *= G;
        for (std::size_t idx = 0; idx < total; ++idx) {
            std::size_t r = idx;
            for (int q = n; q >= 0; --q) {
                t[static_cast<std::size_t>(q)] = static_cast<ModeIndex>(r % G);
                r /= G;
            }
            ordered.emplace(t, ordered.size());
        }
    }
    const auto N = static_cast<Eigen::Index>(ordered.size());
    Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(N, N);
    for (const auto& [tuple, row] : ordered) {
        const int n1 = static_cast<int>(tuple.size()) - 1;
        if (n1 == 0) continue;
        const ModeIndex p = tuple[0];
        for (int j = 1; j <= n1; ++j) {
            const ModeIndex k = tuple[static_cast<std::size_t>(j)];
            auto before = g.translate(p, g.coord(k));
            if (!before) continue;
            std::vector<ModeIndex> src{*before};
            for (int q = 1; q <= n1; ++q)
                if (q != j) src.push_back(tuple[static_cast<std::size_t>(q)]);
            const cplx coeff = form_factor(0, g.point(p), g.point(k), mp) * sw / std::sqrt(static_cast<double>(n1));
            A(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(ordered.at(src))) += coeff;
        }
    }
    // occupation state -> normalized symmetric tensor
    auto embed = [&](std::size_t i) {
        const auto s = b.state(i);
        std::vector<ModeIndex> ks(s.bosons.begin(), s.bosons.end());
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(N);
        do {
            std::vector<ModeIndex> t{s.nucleons[0]};
            t.insert(t.end(), ks.begin(), ks.end());
            v[static_cast<Eigen::Index>(ordered.at(t))] = 1.0;
        } while (std::next_permutation(ks.begin(), ks.end()));
        return Eigen::VectorXcd(v.normalized());
    };
    std::vector<Eigen::VectorXcd> emb;
    for (std::size_t i = 0; i < b.total_dim(); ++i) emb.push_back(embed(i));

    const SpMat a_dag = assemble_creation(b, quad::infinity).matrix();
    double worst = 0.0;
    for (std::size_t i = 0; i < b.total_dim(); ++i)
        for (std::size_t j = 0; j < b.total_dim(); ++j) {
            const cplx want = emb[i].dot(A * emb[j]);
            const cplx got = a_dag.coeff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            worst = std::max(worst, std::abs(want - got));
        }
    CHECK(worst < 1e-14);
}

TEST_CASE("cutoff support of the creation operator", "[ops]") {
    const auto g = build_grid(2, 2.0, 5);
    const FockBasis b(ModelParams::gross(), g, 1);
    const auto a_dag = assemble_creation(b, 0.5).matrix();
    for (int col = 0; col < a_dag.outerSize(); ++col)
        for (SpMat::InnerIterator it(a_dag, col); it; ++it) {
            const auto s = b.state(static_cast<std::size_t>(it.row()));
            REQUIRE(s.n() == 1);
            REQUIRE(s.bosons[0] == g.origin());
        }
    CHECK(a_dag.nonZeros() > 0);
}

TEST_CASE("adjoint suite", "[ops][property]") {
    const SmallBases sb;
    const double lam = 1.5;
    for (const FockBasis* b : sb.all()) {
        const int M = b->nucleons();
        const auto cre = assemble_creation(*b, lam).matrix();
        const auto ann = assemble_annihilation(*b, lam).matrix();
        CHECK(rel_diff(ann, SpMat(cre.adjoint())) == 0.0);

        const Eigen::VectorXcd psi = random_vector(b->total_dim(), 1), phi = random_vector(b->total_dim(), 2);
        const cplx lhs = psi.dot(ann * phi);
        const cplx rhs = (cre * psi).dot(phi);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::abs(lhs));

        for (int i = 0; i < M; ++i)
            for (int l = 0; l < M; ++l) {
                const auto tau_il = assemble_tau(*b, i, l, lam).matrix();
                const auto tau_li = assemble_tau(*b, l, i, lam).matrix();
                CHECK(rel_diff(SpMat(tau_il.adjoint()), tau_li) < 1e-12);
                if (i == l) continue;
                const auto th_il = assemble_theta(*b, i, l, lam).matrix();
                const auto th_li = assemble_theta(*b, l, i, lam).matrix();
                CHECK(rel_diff(SpMat(th_il.adjoint()), th_li) < 1e-12);
            }

        const auto t1 = assemble_T_cutoff(*b, lam);
        const auto t2 = assemble_T_product(*b, lam);
        CHECK(verify_identity(t1, t2, 1e-12).pass);
        CHECK(t1.hermiticity_defect() < 1e-12);
    }
}

TEST_CASE("vacuum-sector identities", "[ops]") {
    const auto g = build_grid(2, 2.0, 5);
    const FockBasis b(ModelParams::gross(), g, 2);
    const auto& vac = b.sector(0);
    for (double lam : {1.0, 2.0}) {
        const auto T = assemble_T_cutoff(b, lam).matrix();
        AssemblyOptions o;
        o.lambda_uv = lam;
        o.variant = 2;
        const auto Td2 = assemble_Td(b, o).matrix();
        for (std::size_t s = vac.offset; s < vac.offset + vac.size; ++s) {
            const auto ss = static_cast<Eigen::Index>(s);
            const ModeIndex p = b.state(s).nucleons[0];
            const double e2 = quad::counterterm_grid(b, p, lam, 2);
            REQUIRE(std::abs(T.coeff(ss, ss) + e2) <= 1e-12 * std::max(1.0, e2));
            REQUIRE(Td2.coeff(ss, ss) == cplx(0.0));
        }
        const auto tau = assemble_tau(b, 0, 0, lam).matrix();
        for (int col = 0; col < tau.outerSize(); ++col)
            for (SpMat::InnerIterator it(tau, col); it; ++it) {
                REQUIRE(b.sector_of(static_cast<std::size_t>(it.row())) > 0);
                REQUIRE(b.sector_of(static_cast<std::size_t>(it.col())) > 0);
            }
    }
}

TEST_CASE("diagonal part T_d", "[ops]") {
    const auto g = build_grid(2, 2.0, 5);
    const FockBasis b(ModelParams::gross(), g, 2);
    AssemblyOptions o;
    o.lambda_uv = 2.0;
    o.variant = 1;
    const auto t1 = assemble_Td(b, o).matrix();
    o.variant = 2;
    const auto t2 = assemble_Td(b, o).matrix();
    for (int col = 0; col < t1.outerSize(); ++col)
        for (SpMat::InnerIterator it(t1, col); it; ++it) {
            REQUIRE(it.row() == it.col());
            REQUIRE(it.value().imag() == 0.0);
        }
    for (std::size_t s = 0; s < b.total_dim(); ++s) {
        const auto ss = static_cast<Eigen::Index>(s);
        const double j = quad::integral_J_grid(b, b.state(s).nucleons[0], 2.0);
        REQUIRE(std::abs((t2.coeff(ss, ss) - t1.coeff(ss, ss)).real() + j) < 1e-12);
    }
    o.variant = 3;
    CHECK_THROWS_AS(assemble_Td(b, o), Error);
}

TEST_CASE("theta index errors", "[ops]") {
    const auto g = build_grid(1, 1.0, 3);
    const FockBasis b(line_model(2), g, 1);
    for (auto [i, l] : {std::pair{0, 0}, std::pair{0, 2}, std::pair{-1, 1}}) {
        try {
            assemble_theta(b, i, l, 1.0);
            FAIL("expected IndexError");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::IndexError);
        }
    }
    CHECK(assemble_theta(b, 0, 1, 0.0).matrix().nonZeros() == 0);
}

TEST_CASE("central identity on small bases", "[ops]") {
    const SmallBases sb;
    for (const FockBasis* b : sb.all())
        for (double lam : {1.0, 2.0})
            for (int nu : {1, 2}) {
                AssemblyOptions o;
                o.lambda_uv = lam;
                o.variant = nu;
                const auto d = assemble_H_direct(*b, o);
                const auto h = assemble_H_ibc(*b, o);
                const auto r = verify_identity(d, h, 1e-10);
                INFO("M = " << b->nucleons() << " Lambda = " << lam << " nu = " << nu);
                CHECK(r.pass);
                CHECK(r.max_rel_diff < 1e-12);
                CHECK(d.hermiticity_defect() < 1e-12);
            }
}

TEST_CASE("lambda-shift invariance", "[ops]") {
    const SmallBases sb;
    for (const FockBasis* b : sb.all()) {
        AssemblyOptions o;
        o.lambda_uv = 2.0;
        o.variant = 2;
        const auto ref = assemble_H_ibc(*b, o);
        for (double shift : {1.0, 10.0}) {
            o.lambda_shift = shift;
            CHECK(verify_identity(ref, assemble_H_ibc(*b, o), 1e-10).pass);
        }
    }
}

TEST_CASE("corrupted theta sign breaks the identity", "[ops]") {
    const SmallBases sb;
    AssemblyOptions o;
    o.lambda_uv = 2.0;
    const auto d = assemble_H_direct(sb.two_plane, o);
    o.theta_sign = -1.0;
    const auto bad = assemble_H_ibc(sb.two_plane, o);
    CHECK_FALSE(bad.hermitian_flag());
    CHECK_FALSE(verify_identity(d, bad, 1e-10).pass);
}

TEST_CASE("free limit", "[ops]") {
    const auto g = build_grid(2, 1.0, 3);
    const FockBasis b(ModelParams::gross(), g, 2);
    AssemblyOptions o;
    o.lambda_uv = 0.0;
    const auto L = assemble_L(b);
    CHECK(verify_identity(assemble_H_direct(b, o), L, 0.0).max_abs_diff == 0.0);
    CHECK(verify_identity(assemble_H_ibc(b, o), L, 1e-15).pass);
}

TEST_CASE("massless bosons need a shift", "[ops]") {
    auto mp = ModelParams::eckmann();
    mp.m_boson = 0.0;
    const auto g = build_grid(3, 1.0, 3);
    const FockBasis b(mp, g, 1);
    try {
        assemble_G(b, 1.0, 0.0);
        FAIL("expected MasslessWithoutShift");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MasslessWithoutShift);
    }
    AssemblyOptions o;
    o.lambda_uv = 1.0;
    o.lambda_shift = 1.0;
    const auto h = assemble_H_ibc(b, o);
    CHECK(verify_identity(assemble_H_direct(b, o), h, 1e-10).pass);
}

TEST_CASE("norm of G decreases with the shift", "[ops]") {
    const auto g = build_grid(2, 2.0, 5);
    const FockBasis b(ModelParams::gross(), g, 2);
    double prev = quad::infinity;
    for (double shift : {0.0, 1.0, 10.0, 100.0}) {
        const double n = spectral_norm_estimate(assemble_G(b, 2.0, shift).matrix(), 200);
        CHECK(n < prev);
        prev = n;
    }
    const auto inv = check_one_minus_G(b, 2.0);
    CHECK(inv.min_singular_value > 0.0);
    CHECK(std::isfinite(inv.number_bound_constant));
}

TEST_CASE("triplet dump round trip", "[ops]") {
    const auto g = build_grid(2, 1.0, 3);
    const FockBasis b(ModelParams::gross(), g, 2);
    AssemblyOptions o;
    o.lambda_uv = 1.0;
    const auto h = assemble_H_ibc(b, o);
    std::stringstream ss;
    write_triplets(h, ss);
    const auto f = read_triplets(ss);
    CHECK(f.header.at("tags").at("path") == "ibc");
    CHECK(f.header.at("nnz").get<Eigen::Index>() == h.matrix().nonZeros());
    CHECK(rel_diff(f.matrix, h.matrix()) == 0.0);
}
