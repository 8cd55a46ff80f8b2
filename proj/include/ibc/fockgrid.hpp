#ifndef IBC_FOCKGRID_HPP
#define IBC_FOCKGRID_HPP

// Momentum lattice and the truncated symmetric Fock basis
// (nucleon momentum tuple x boson multiset, sectors n = 0..n_max).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ibc/error.hpp"
#include "ibc/model.hpp"

namespace ibc {

using LatticeCoord = std::array<int, 3>;
using ModeIndex = std::uint32_t;

class MomentumGrid {
public:
    MomentumGrid() = default;

    MomentumGrid(int d, double k_max, int n_per_axis) : d_(d), k_max_(k_max), n_(n_per_axis) {
        if (d < 1 || d > 3) fail(ErrorKind::DimensionMismatch, "grid dimension must be 1, 2 or 3");
        if (n_per_axis < 1 || n_per_axis % 2 == 0)
            fail(ErrorKind::EvenAxisCount, "n_per_axis must be odd, got " + std::to_string(n_per_axis));
        if (!(k_max > 0.0)) fail(ErrorKind::InvalidParams, "k_max must be positive");
        half_ = (n_ - 1) / 2;
        h_ = n_ == 1 ? 1.0 : 2.0 * k_max / (n_ - 1);
        weight_ = std::pow(h_, d_);
        std::size_t count = 1;
        for (int a = 0; a < d_; ++a) count *= static_cast<std::size_t>(n_);
        coords_.reserve(count);
        points_.reserve(count);
        for (std::size_t idx = 0; idx < count; ++idx) {
            LatticeCoord c{0, 0, 0};
            std::size_t rem = idx;
            for (int a = d_ - 1; a >= 0; --a) {
                c[static_cast<std::size_t>(a)] = static_cast<int>(rem % static_cast<std::size_t>(n_)) - half_;
                rem /= static_cast<std::size_t>(n_);
            }
            coords_.push_back(c);
            Momentum m = Momentum::Zero();
            for (int a = 0; a < d_; ++a) m[a] = h_ * c[static_cast<std::size_t>(a)];
            points_.push_back(m);
        }
    }

    int dim() const noexcept { return d_; }
    double k_max() const noexcept { return k_max_; }
    int n_per_axis() const noexcept { return n_; }
    double spacing() const noexcept { return h_; }
    /// h^d; 1 for the degenerate single-point grid.
    double cell_weight() const noexcept { return weight_; }
    std::size_t size() const noexcept { return points_.size(); }
    const Momentum& point(std::size_t i) const { return points_[i]; }
    const LatticeCoord& coord(std::size_t i) const { return coords_[i]; }
    const std::vector<Momentum>& points() const noexcept { return points_; }
    int half_width() const noexcept { return half_; }

    std::optional<ModeIndex> index_of(const LatticeCoord& c) const {
        std::size_t idx = 0;
        for (int a = 0; a < d_; ++a) {
            const int v = c[static_cast<std::size_t>(a)];
            if (v < -half_ || v > half_) return std::nullopt;
            idx = idx * static_cast<std::size_t>(n_) + static_cast<std::size_t>(v + half_);
        }
        for (int a = d_; a < 3; ++a)
            if (c[static_cast<std::size_t>(a)] != 0) return std::nullopt;
        return static_cast<ModeIndex>(idx);
    }

    ModeIndex origin() const { return *index_of({0, 0, 0}); }

    /// Index of the zero-momentum point plus the given offsets, or nullopt when outside the box.
    std::optional<ModeIndex> translate(ModeIndex p, const LatticeCoord& shift) const {
        const auto& c = coords_[p];
        return index_of({c[0] + shift[0], c[1] + shift[1], c[2] + shift[2]});
    }

    nlohmann::json manifest() const {
        return {{"d", d_}, {"k_max", k_max_}, {"n_per_axis", n_}, {"spacing", h_}, {"cell_weight", weight_},
                {"points", size()}};
    }

private:
    int d_ = 1;
    double k_max_ = 1.0;
    int n_ = 1;
    int half_ = 0;
    double h_ = 1.0;
    double weight_ = 1.0;
    std::vector<LatticeCoord> coords_;
    std::vector<Momentum> points_;
};

inline MomentumGrid build_grid(int d, double k_max, int n_per_axis) { return {d, k_max, n_per_axis}; }

inline LatticeCoord operator+(const LatticeCoord& a, const LatticeCoord& b) {
    return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
inline LatticeCoord operator-(const LatticeCoord& a, const LatticeCoord& b) {
    return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
inline LatticeCoord operator-(const LatticeCoord& a) { return {-a[0], -a[1], -a[2]}; }

/// p + k on a shared lattice; nullopt is the out-of-range marker.
inline std::optional<ModeIndex> translate(const MomentumGrid& g, ModeIndex p, ModeIndex k) {
    return g.translate(p, g.coord(k));
}

/// Binomial coefficient for the small second arguments used in multiset ranking.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        r = r * (n - k + i) / i;
        if (r > std::numeric_limits<std::uint64_t>::max()) fail(ErrorKind::BasisTooLarge, "binomial overflow");
    }
    return static_cast<std::uint64_t>(r);
}

/// Number of multisets of size n drawn from g labels.
inline std::uint64_t multiset_count(std::uint64_t g, std::uint64_t n) {
    if (n == 0) return 1;
    if (g == 0) return 0;
    return binomial(g + n - 1, n);
}

/// Lexicographic rank of a sorted multiset over {0..g-1} among all multisets of the same size.
inline std::uint64_t multiset_rank(std::span<const ModeIndex> sorted, std::uint64_t g) {
    const std::uint64_t n = sorted.size();
    std::uint64_t rank = 0;
    std::uint64_t lo = 0;
    for (std::uint64_t j = 0; j < n; ++j) {
        const std::uint64_t hi = sorted[j];
        const std::uint64_t r = n - j - 1;
        // sum_{v=lo}^{hi-1} C(g - v + r - 1, r), telescoped with the hockey-stick identity
        if (hi > lo) rank += binomial(g - lo + r, r + 1) - binomial(g - hi + r, r + 1);
        lo = hi;
    }
    return rank;
}

struct SectorInfo {
    int n = 0;
    std::size_t offset = 0;
    std::size_t size = 0;
};

/// Read-only view of one basis state.
struct StateRef {
    std::span<const ModeIndex> nucleons;
    std::span<const ModeIndex> bosons;
    int n() const noexcept { return static_cast<int>(bosons.size()); }
};

struct BasisOptions {
    std::size_t cap = 2'000'000;
    // When set, only states with this total lattice momentum are kept (a
    // fibre of the Hamiltonian, which conserves total momentum exactly).
    std::optional<LatticeCoord> total_momentum;
};

class FockBasis {
public:
    FockBasis(ModelParams params, MomentumGrid nucleon_grid, MomentumGrid boson_grid, int n_max,
              BasisOptions opts = {})
        : params_(std::move(params)), ngrid_(std::move(nucleon_grid)), bgrid_(std::move(boson_grid)),
          n_max_(n_max), opts_(opts) {
        if (ngrid_.dim() != bgrid_.dim() || ngrid_.dim() != params_.d)
            fail(ErrorKind::DimensionMismatch, "grids and model must share the dimension");
        if (std::abs(ngrid_.spacing() - bgrid_.spacing()) > 1e-12 * std::max(1.0, bgrid_.spacing()) &&
            ngrid_.size() > 1 && bgrid_.size() > 1)
            fail(ErrorKind::DimensionMismatch, "nucleon and boson grids must share the lattice spacing");
        if (n_max < 0) fail(ErrorKind::InvalidParams, "n_max must be non-negative");
        enumerate();
    }

    FockBasis(ModelParams params, const MomentumGrid& grid, int n_max, BasisOptions opts = {})
        : FockBasis(std::move(params), grid, grid, n_max, opts) {}

    const ModelParams& params() const noexcept { return params_; }
    const MomentumGrid& nucleon_grid() const noexcept { return ngrid_; }
    const MomentumGrid& boson_grid() const noexcept { return bgrid_; }
    int n_max() const noexcept { return n_max_; }
    int nucleons() const noexcept { return params_.M; }
    std::size_t total_dim() const noexcept { return total_; }
    const std::vector<SectorInfo>& sectors() const noexcept { return sectors_; }
    const SectorInfo& sector(int n) const { return sectors_.at(static_cast<std::size_t>(n)); }
    bool constrained() const noexcept { return opts_.total_momentum.has_value(); }
    const BasisOptions& options() const noexcept { return opts_; }

    int sector_of(std::size_t i) const {
        auto it = std::upper_bound(sectors_.begin(), sectors_.end(), i,
                                   [](std::size_t v, const SectorInfo& s) { return v < s.offset; });
        return std::prev(it)->n;
    }

    StateRef state(std::size_t i) const {
        const auto& s = sectors_[static_cast<std::size_t>(sector_of(i))];
        const std::size_t local = i - s.offset;
        const auto& store = storage_[static_cast<std::size_t>(s.n)];
        const std::size_t stride = static_cast<std::size_t>(params_.M + s.n);
        std::span<const ModeIndex> row(store.data() + local * stride, stride);
        return {row.subspan(0, static_cast<std::size_t>(params_.M)), row.subspan(static_cast<std::size_t>(params_.M))};
    }

    /// Index of (nucleons, bosons); the boson list may be in any order.
    std::optional<std::size_t> index_of(std::span<const ModeIndex> nucleons, std::span<const ModeIndex> bosons) const {
        const int n = static_cast<int>(bosons.size());
        if (n > n_max_ || nucleons.size() != static_cast<std::size_t>(params_.M)) return std::nullopt;
        std::array<ModeIndex, 16> buf{};
        std::vector<ModeIndex> heap;
        std::span<ModeIndex> sorted;
        if (bosons.size() <= buf.size()) {
            sorted = std::span<ModeIndex>(buf.data(), bosons.size());
        } else {
            heap.resize(bosons.size());
            sorted = heap;
        }
        std::copy(bosons.begin(), bosons.end(), sorted.begin());
        std::sort(sorted.begin(), sorted.end());
        return index_of_sorted(nucleons, sorted);
    }

    std::optional<std::size_t> index_of_sorted(std::span<const ModeIndex> nucleons, std::span<const ModeIndex> sorted) const {
        const int n = static_cast<int>(sorted.size());
        if (n > n_max_) return std::nullopt;
        const auto& s = sectors_[static_cast<std::size_t>(n)];
        const std::uint64_t r = unconstrained_rank(nucleons, sorted);
        if (!constrained()) return s.offset + r;
        const auto& ranks = ranks_[static_cast<std::size_t>(n)];
        auto it = std::lower_bound(ranks.begin(), ranks.end(), r);
        if (it == ranks.end() || *it != r) return std::nullopt;
        return s.offset + static_cast<std::size_t>(it - ranks.begin());
    }

    /// Nucleon momentum of particle i in state s.
    const Momentum& nucleon_momentum(const StateRef& s, int i) const { return ngrid_.point(s.nucleons[static_cast<std::size_t>(i)]); }

    double L(const StateRef& s) const {
        double v = 0.0;
        for (auto p : s.nucleons) v += theta_[p];
        for (auto k : s.bosons) v += omega_[k];
        return v;
    }
    double theta(ModeIndex p) const { return theta_[p]; }
    double omega(ModeIndex k) const { return omega_[k]; }

    nlohmann::json manifest() const {
        nlohmann::json sec = nlohmann::json::array();
        for (const auto& s : sectors_) sec.push_back({{"n", s.n}, {"offset", s.offset}, {"size", s.size}});
        nlohmann::json j{{"model", std::string(to_string(params_.kind))},
                         {"d", params_.d},
                         {"M", params_.M},
                         {"n_max", n_max_},
                         {"nucleon_grid", ngrid_.manifest()},
                         {"boson_grid", bgrid_.manifest()},
                         {"sectors", sec},
                         {"total_dim", total_}};
        if (opts_.total_momentum) {
            const auto& c = *opts_.total_momentum;
            j["total_momentum"] = {c[0], c[1], c[2]};
        }
        return j;
    }

    /// FNV-1a hash of the serialized manifest.
    std::uint64_t manifest_hash() const {
        const std::string s = manifest().dump();
        std::uint64_t h = 1469598103934665603ull;
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }

private:
    std::uint64_t unconstrained_rank(std::span<const ModeIndex> nucleons, std::span<const ModeIndex> sorted) const {
        std::uint64_t nr = 0;
        for (auto p : nucleons) nr = nr * ngrid_.size() + p;
        return nr * multiset_count(bgrid_.size(), sorted.size()) + multiset_rank(sorted, bgrid_.size());
    }

    void enumerate() {
        const std::size_t G = bgrid_.size();
        const std::size_t Gn = ngrid_.size();
        const std::size_t M = static_cast<std::size_t>(params_.M);
        theta_.resize(Gn);
        omega_.resize(G);
        for (std::size_t i = 0; i < Gn; ++i) theta_[i] = dispersion_nucleon(ngrid_.point(i), params_);
        for (std::size_t i = 0; i < G; ++i) omega_[i] = dispersion_boson(bgrid_.point(i), params_);

        std::uint64_t nuc_count = 1;
        for (std::size_t i = 0; i < M; ++i) nuc_count *= Gn;

        storage_.assign(static_cast<std::size_t>(n_max_) + 1, {});
        ranks_.assign(static_cast<std::size_t>(n_max_) + 1, {});
        sectors_.clear();
        total_ = 0;
        for (int n = 0; n <= n_max_; ++n) {
            SectorInfo info{n, total_, 0};
            if (!constrained()) {
                const std::uint64_t count = nuc_count * multiset_count(G, static_cast<std::uint64_t>(n));
                if (total_ + count > opts_.cap)
                    fail(ErrorKind::BasisTooLarge, "basis exceeds cap of " + std::to_string(opts_.cap) + " states");
                info.size = static_cast<std::size_t>(count);
                fill_unconstrained(n, nuc_count);
            } else {
                fill_constrained(n);
                info.size = ranks_[static_cast<std::size_t>(n)].size();
                if (total_ + info.size > opts_.cap)
                    fail(ErrorKind::BasisTooLarge, "basis exceeds cap of " + std::to_string(opts_.cap) + " states");
            }
            total_ += info.size;
            sectors_.push_back(info);
        }
    }

    template <class F>
    void for_each_multiset(int n, F&& f) const {
        const ModeIndex G = static_cast<ModeIndex>(bgrid_.size());
        std::vector<ModeIndex> cur(static_cast<std::size_t>(n), 0);
        if (n == 0) {
            f(std::span<const ModeIndex>(cur));
            return;
        }
        if (G == 0) return;
        while (true) {
            f(std::span<const ModeIndex>(cur));
            int j = n - 1;
            while (j >= 0 && cur[static_cast<std::size_t>(j)] == G - 1) --j;
            if (j < 0) break;
            const ModeIndex v = cur[static_cast<std::size_t>(j)] + 1;
            for (int t = j; t < n; ++t) cur[static_cast<std::size_t>(t)] = v;
        }
    }

    void fill_unconstrained(int n, std::uint64_t nuc_count) {
        const std::size_t M = static_cast<std::size_t>(params_.M);
        const std::size_t Gn = ngrid_.size();
        auto& store = storage_[static_cast<std::size_t>(n)];
        const std::uint64_t ms = multiset_count(bgrid_.size(), static_cast<std::uint64_t>(n));
        store.reserve(static_cast<std::size_t>(nuc_count * ms) * (M + static_cast<std::size_t>(n)));
        std::vector<ModeIndex> nuc(M, 0);
        for (std::uint64_t a = 0; a < nuc_count; ++a) {
            std::uint64_t rem = a;
            for (std::size_t i = M; i-- > 0;) {
                nuc[i] = static_cast<ModeIndex>(rem % Gn);
                rem /= Gn;
            }
            for_each_multiset(n, [&](std::span<const ModeIndex> k) {
                store.insert(store.end(), nuc.begin(), nuc.end());
                store.insert(store.end(), k.begin(), k.end());
            });
        }
    }

    void fill_constrained(int n) {
        const std::size_t M = static_cast<std::size_t>(params_.M);
        const std::size_t Gn = ngrid_.size();
        const LatticeCoord target = *opts_.total_momentum;
        std::vector<std::pair<std::uint64_t, std::vector<ModeIndex>>> found;
        std::uint64_t free_count = 1;
        for (std::size_t i = 0; i + 1 < M; ++i) free_count *= Gn;
        std::vector<ModeIndex> nuc(M, 0);
        for_each_multiset(n, [&](std::span<const ModeIndex> k) {
            LatticeCoord rest = target;
            for (auto q : k) rest = rest - bgrid_.coord(q);
            for (std::uint64_t a = 0; a < free_count; ++a) {
                std::uint64_t r = a;
                LatticeCoord last = rest;
                for (std::size_t i = M - 1; i-- > 0;) {
                    nuc[i] = static_cast<ModeIndex>(r % Gn);
                    r /= Gn;
                    last = last - ngrid_.coord(nuc[i]);
                }
                auto lp = ngrid_.index_of(last);
                if (!lp) continue;
                nuc[M - 1] = *lp;
                std::vector<ModeIndex> row(nuc);
                row.insert(row.end(), k.begin(), k.end());
                found.emplace_back(unconstrained_rank(nuc, k), std::move(row));
                if (total_ + found.size() > opts_.cap)
                    fail(ErrorKind::BasisTooLarge, "basis exceeds cap of " + std::to_string(opts_.cap) + " states");
            }
        });
        std::sort(found.begin(), found.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
        auto& store = storage_[static_cast<std::size_t>(n)];
        auto& ranks = ranks_[static_cast<std::size_t>(n)];
        store.reserve(found.size() * (M + static_cast<std::size_t>(n)));
        ranks.reserve(found.size());
        for (auto& [r, row] : found) {
            ranks.push_back(r);
            store.insert(store.end(), row.begin(), row.end());
        }
    }

    ModelParams params_;
    MomentumGrid ngrid_;
    MomentumGrid bgrid_;
    int n_max_;
    BasisOptions opts_;
    std::vector<SectorInfo> sectors_;
    std::vector<std::vector<ModeIndex>> storage_;
    std::vector<std::vector<std::uint64_t>> ranks_;
    std::vector<double> theta_;
    std::vector<double> omega_;
    std::size_t total_ = 0;
};

inline FockBasis enumerate_basis(const ModelParams& params, const MomentumGrid& nucleon_grid,
                                 const MomentumGrid& boson_grid, int n_max, BasisOptions opts = {}) {
    return FockBasis(params, nucleon_grid, boson_grid, n_max, opts);
}

/// Complex amplitudes over a basis, addressable by sector.
class StateVector {
public:
    explicit StateVector(const FockBasis& basis) : basis_(&basis), amp_(Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(basis.total_dim()))) {}
    StateVector(const FockBasis& basis, Eigen::VectorXcd amp) : basis_(&basis), amp_(std::move(amp)) {
        if (static_cast<std::size_t>(amp_.size()) != basis.total_dim())
            fail(ErrorKind::DimensionMismatch, "amplitude length differs from basis dimension");
    }

    const FockBasis& basis() const noexcept { return *basis_; }
    Eigen::VectorXcd& amplitudes() noexcept { return amp_; }
    const Eigen::VectorXcd& amplitudes() const noexcept { return amp_; }
    cplx& operator[](std::size_t i) { return amp_[static_cast<Eigen::Index>(i)]; }
    cplx operator[](std::size_t i) const { return amp_[static_cast<Eigen::Index>(i)]; }

    auto sector(int n) {
        const auto& s = basis_->sector(n);
        return amp_.segment(static_cast<Eigen::Index>(s.offset), static_cast<Eigen::Index>(s.size));
    }
    auto sector(int n) const {
        const auto& s = basis_->sector(n);
        return amp_.segment(static_cast<Eigen::Index>(s.offset), static_cast<Eigen::Index>(s.size));
    }

    double norm() const { return amp_.norm(); }

private:
    const FockBasis* basis_;
    Eigen::VectorXcd amp_;
};

/// Multiplies every amplitude by f(state).
template <class F>
StateVector apply_diag(F&& f, const StateVector& in) {
    StateVector out(in.basis());
    const auto& b = in.basis();
    for (std::size_t i = 0; i < b.total_dim(); ++i) out[i] = in[i] * f(b.state(i));
    return out;
}

/// Diagonal of f over the whole basis.
template <class F>
Eigen::VectorXd diag_values(const FockBasis& b, F&& f) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(b.total_dim()));
    for (std::size_t i = 0; i < b.total_dim(); ++i) v[static_cast<Eigen::Index>(i)] = f(b.state(i));
    return v;
}

} // namespace ibc

#endif
