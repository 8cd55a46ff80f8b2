#ifndef IBC_CLI_HPP
#define IBC_CLI_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ibc/error.hpp"
#include "ibc/fockgrid.hpp"
#include "ibc/model.hpp"
#include "ibc/ops.hpp"
#include "ibc/quad.hpp"
#include "ibc/spectral.hpp"

namespace ibc::cli {

inline constexpr const char* tool_name = "ibc";
inline constexpr const char* tool_version = "0.1.0";

enum ExitCode : int { kOk = 0, kConfigError = 1, kConditionFailure = 2, kIdentityFailure = 3, kNotConverged = 4 };

// ---------------------------------------------------------------- config text

using IniSection = std::map<std::string, std::string>;
using IniDocument = std::map<std::string, IniSection>;

inline std::string trim(std::string s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

/// `key = value` lines grouped under `[section]` headers; `#` and `;` start comments.
inline IniDocument parse_ini(std::istream& in, const std::string& origin = "<config>") {
    IniDocument doc;
    std::string line, section;
    int lineno = 0;
    auto bad = [&](const std::string& m) { fail(ErrorKind::ConfigError, origin + ":" + std::to_string(lineno) + ": " + m); };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') bad("unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) bad("empty section name");
            doc[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) bad("expected key = value");
        if (section.empty()) bad("key outside of a section");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) bad("empty key");
        if (doc[section].count(key)) bad("duplicate key '" + key + "'");
        doc[section][key] = trim(line.substr(eq + 1));
    }
    return doc;
}

inline double parse_real(const std::string& s, const std::string& what) {
    const std::string t = trim(s);
    if (t == "inf" || t == "infinity") return quad::infinity;
    try {
        std::size_t pos = 0;
        const double v = std::stod(t, &pos);
        if (pos != t.size()) throw std::invalid_argument(t);
        return v;
    } catch (const std::exception&) {
        fail(ErrorKind::ConfigError, what + ": not a number: '" + s + "'");
    }
}

inline long long parse_integer(const std::string& s, const std::string& what) {
    const std::string t = trim(s);
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(t, &pos);
        if (pos != t.size()) throw std::invalid_argument(t);
        return v;
    } catch (const std::exception&) {
        fail(ErrorKind::ConfigError, what + ": not an integer: '" + s + "'");
    }
}

inline bool parse_bool(const std::string& s, const std::string& what) {
    const std::string t = trim(s);
    if (t == "true" || t == "yes" || t == "1" || t == "on") return true;
    if (t == "false" || t == "no" || t == "0" || t == "off") return false;
    fail(ErrorKind::ConfigError, what + ": not a boolean: '" + s + "'");
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

/// Complex numbers are written `re` or `re:im`.
inline cplx parse_complex(const std::string& s, const std::string& what) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) return {parse_real(s, what), 0.0};
    return {parse_real(s.substr(0, colon), what), parse_real(s.substr(colon + 1), what)};
}

// ---------------------------------------------------------------- RunConfig

struct GridBlock {
    double k_max = 4.0;
    int n_per_axis = 9;
    int n_max = 2;
    std::uint64_t basis_cap = 2'000'000;
    std::optional<LatticeCoord> total_momentum;
};

struct StudyBlock {
    std::vector<double> lambdas{1.0, 2.0, 4.0};
    std::vector<int> variants{1, 2};
    std::vector<double> lambda_shifts{0.0};
    std::vector<double> etas{0.25, 0.45, 0.5, 0.75};
    std::vector<double> ladder{4.0, 8.0, 16.0};
    int ladder_n_max = -1; // -1: use grid.n_max
    double regularity_lambda = quad::infinity;
    double regularity_threshold = 0.05;
    double tol = 1e-10;
    double quad_abs = 1e-9;
    double quad_rel = 1e-8;
    std::uint64_t seed = 1;
    std::size_t samples = 10000;
    std::size_t p_samples = 20;
    double epsilon = 0.1;
    bool control = true;
    double scaling_delta = 0.0;
    std::optional<double> scaling_nu, scaling_sigma, scaling_r;
};

struct OutputBlock {
    std::string directory = "out";
    bool csv = true;
    bool json = true;
    bool dump_operators = false;
};

struct RunConfig {
    std::string kind = "gross";
    ModelParams model = ModelParams::gross(1);
    GridBlock grid;
    StudyBlock study;
    OutputBlock output;

    quad::Tolerance quad_tolerance() const { return {study.quad_abs, study.quad_rel, 4000}; }
};

inline std::shared_ptr<const CustomModel> power_law_custom(const ModelParams& mp) {
    auto c = std::make_shared<CustomModel>();
    const double mu = mp.mu, m = mp.m_boson, a = mp.alpha, b = mp.beta, g = mp.gamma;
    c->nucleon_energy = [=](const Momentum& p) { return std::pow(p.squaredNorm() + mu * mu, g / 2.0); };
    c->boson_energy = [=](const Momentum& k) { return std::pow(k.squaredNorm() + m * m, b / 2.0); };
    c->form_factor = [=](const Momentum&, const Momentum& k) {
        return cplx(std::pow(k.squaredNorm() + m * m, -a / 2.0), 0.0);
    };
    c->axisymmetric = true;
    return c;
}

namespace detail {

class Reader {
public:
    Reader(const IniDocument& doc) : doc_(doc) {
        for (const auto& [name, sec] : doc) {
            if (name != "model" && name != "grid" && name != "study" && name != "output")
                fail(ErrorKind::ConfigError, "unknown section [" + name + "]");
            for (const auto& kv : sec) unused_.insert(name + "." + kv.first);
        }
    }

    std::optional<std::string> get(const std::string& sec, const std::string& key) {
        auto s = doc_.find(sec);
        if (s == doc_.end()) return std::nullopt;
        auto k = s->second.find(key);
        if (k == s->second.end()) return std::nullopt;
        unused_.erase(sec + "." + key);
        return k->second;
    }

    void real(const std::string& sec, const std::string& key, double& out) {
        if (auto v = get(sec, key)) out = parse_real(*v, sec + "." + key);
    }
    void real(const std::string& sec, const std::string& key, std::optional<double>& out) {
        if (auto v = get(sec, key)) out = parse_real(*v, sec + "." + key);
    }
    template <class I>
    void integer(const std::string& sec, const std::string& key, I& out) {
        if (auto v = get(sec, key)) out = static_cast<I>(parse_integer(*v, sec + "." + key));
    }
    void boolean(const std::string& sec, const std::string& key, bool& out) {
        if (auto v = get(sec, key)) out = parse_bool(*v, sec + "." + key);
    }
    void reals(const std::string& sec, const std::string& key, std::vector<double>& out) {
        if (auto v = get(sec, key)) {
            out.clear();
            for (const auto& s : split_list(*v)) out.push_back(parse_real(s, sec + "." + key));
        }
    }
    void integers(const std::string& sec, const std::string& key, std::vector<int>& out) {
        if (auto v = get(sec, key)) {
            out.clear();
            for (const auto& s : split_list(*v)) out.push_back(static_cast<int>(parse_integer(s, sec + "." + key)));
        }
    }

    void finish() const {
        if (!unused_.empty()) fail(ErrorKind::ConfigError, "unknown key '" + *unused_.begin() + "'");
    }

private:
    const IniDocument& doc_;
    std::set<std::string> unused_;
};

} // namespace detail

/// Builds a RunConfig from parsed text. Structural problems are ConfigError;
/// physics conditions are left to run_checks.
inline RunConfig config_from_ini(const IniDocument& doc) {
    detail::Reader r(doc);
    RunConfig c;
    if (auto k = r.get("model", "kind")) c.kind = *k;
    int M = 1;
    r.integer("model", "M", M);
    if (M < 1) fail(ErrorKind::ConfigError, "model.M must be at least 1");
    if (c.kind == "gross") c.model = ModelParams::gross(M);
    else if (c.kind == "eckmann") c.model = ModelParams::eckmann(M);
    else if (c.kind == "nelson") c.model = ModelParams::nelson_reference(M);
    else if (c.kind == "custom") {
        c.model = ModelParams{};
        c.model.kind = ModelKind::Custom;
        c.model.M = M;
        c.model.couplings.assign(static_cast<std::size_t>(M), cplx{1.0, 0.0});
        for (const char* key : {"d", "alpha", "beta", "gamma"})
            if (!doc.count("model") || !doc.at("model").count(key))
                fail(ErrorKind::ConfigError, std::string("custom model needs model.") + key);
    } else
        fail(ErrorKind::ConfigError, "model.kind must be gross, eckmann, nelson or custom");

    ModelParams& mp = c.model;
    r.integer("model", "d", mp.d);
    r.real("model", "alpha", mp.alpha);
    r.real("model", "beta", mp.beta);
    r.real("model", "gamma", mp.gamma);
    r.real("model", "mu", mp.mu);
    r.real("model", "m_boson", mp.m_boson);
    if (auto v = r.get("model", "delta")) {
        mp.delta = parse_real(*v, "model.delta");
        if (mp.kind == ModelKind::Eckmann) mp.alpha = 1.0 - mp.delta / 2.0;
    }
    if (auto v = r.get("model", "couplings")) {
        mp.couplings.clear();
        for (const auto& s : split_list(*v)) mp.couplings.push_back(parse_complex(s, "model.couplings"));
        if (mp.couplings.size() == 1 && M > 1) mp.couplings.assign(static_cast<std::size_t>(M), mp.couplings[0]);
        if (mp.couplings.size() != static_cast<std::size_t>(M))
            fail(ErrorKind::ConfigError, "model.couplings needs one entry per nucleon");
    }
    if (mp.d < 1 || mp.d > 3) fail(ErrorKind::ConfigError, "model.d must be 1, 2 or 3");
    if (mp.kind == ModelKind::Custom) mp.custom = power_law_custom(mp);

    auto& g = c.grid;
    r.real("grid", "k_max", g.k_max);
    g.n_per_axis = 2 * static_cast<int>(std::lround(g.k_max)) + 1;
    r.integer("grid", "n_per_axis", g.n_per_axis);
    r.integer("grid", "n_max", g.n_max);
    r.integer("grid", "basis_cap", g.basis_cap);
    if (auto v = r.get("grid", "total_momentum")) {
        if (trim(*v) != "none") {
            const auto parts = split_list(*v);
            if (parts.empty() || parts.size() > 3) fail(ErrorKind::ConfigError, "grid.total_momentum needs up to 3 lattice integers");
            LatticeCoord t{0, 0, 0};
            for (std::size_t i = 0; i < parts.size(); ++i) t[i] = static_cast<int>(parse_integer(parts[i], "grid.total_momentum"));
            g.total_momentum = t;
        }
    }
    if (!(g.k_max > 0.0) || g.n_per_axis < 1 || g.n_per_axis % 2 == 0 || g.n_max < 0)
        fail(ErrorKind::ConfigError, "grid needs k_max > 0, odd n_per_axis and n_max >= 0");

    auto& s = c.study;
    r.reals("study", "lambdas", s.lambdas);
    r.integers("study", "variants", s.variants);
    r.reals("study", "lambda_shifts", s.lambda_shifts);
    r.reals("study", "etas", s.etas);
    r.reals("study", "ladder", s.ladder);
    r.integer("study", "ladder_n_max", s.ladder_n_max);
    r.real("study", "regularity_lambda", s.regularity_lambda);
    r.real("study", "regularity_threshold", s.regularity_threshold);
    r.real("study", "tol", s.tol);
    r.real("study", "quad_abs", s.quad_abs);
    r.real("study", "quad_rel", s.quad_rel);
    r.integer("study", "seed", s.seed);
    r.integer("study", "samples", s.samples);
    r.integer("study", "p_samples", s.p_samples);
    r.real("study", "epsilon", s.epsilon);
    r.boolean("study", "control", s.control);
    r.real("study", "scaling_delta", s.scaling_delta);
    r.real("study", "scaling_nu", s.scaling_nu);
    r.real("study", "scaling_sigma", s.scaling_sigma);
    r.real("study", "scaling_r", s.scaling_r);
    for (int v : s.variants)
        if (v != 1 && v != 2) fail(ErrorKind::ConfigError, "study.variants entries must be 1 or 2");
    if (s.lambdas.empty()) fail(ErrorKind::ConfigError, "study.lambdas must not be empty");
    for (double l : s.lambdas)
        if (!(l >= 0.0)) fail(ErrorKind::ConfigError, "study.lambdas entries must be non-negative");
    std::sort(s.lambdas.begin(), s.lambdas.end());

    auto& o = c.output;
    if (auto v = r.get("output", "directory")) o.directory = *v;
    if (auto v = r.get("output", "formats")) {
        o.csv = o.json = false;
        for (const auto& f : split_list(*v)) {
            if (f == "csv") o.csv = true;
            else if (f == "json") o.json = true;
            else fail(ErrorKind::ConfigError, "output.formats accepts csv and json");
        }
    }
    r.boolean("output", "dump_operators", o.dump_operators);
    r.finish();
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::ConfigError, "cannot open config " + path.string());
    return config_from_ini(parse_ini(in, path.string()));
}

inline RunConfig parse_config(const std::string& text) {
    std::istringstream in(text);
    return config_from_ini(parse_ini(in));
}

inline nlohmann::json complex_list(const std::vector<cplx>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& c : v) a.push_back({c.real(), c.imag()});
    return a;
}

inline nlohmann::json real_or_inf(double x) { return std::isinf(x) ? nlohmann::json("inf") : nlohmann::json(x); }

inline nlohmann::json reals_json(const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : v) a.push_back(real_or_inf(x));
    return a;
}

/// Effective configuration (defaults filled in); the basis of the config hash.
inline nlohmann::json config_json(const RunConfig& c) {
    const auto& m = c.model;
    nlohmann::json j;
    j["model"] = {{"kind", c.kind}, {"d", m.d}, {"M", m.M}, {"alpha", m.alpha}, {"beta", m.beta}, {"gamma", m.gamma},
                  {"mu", m.mu}, {"m_boson", m.m_boson}, {"couplings", complex_list(m.couplings)}, {"delta", m.delta}};
    j["grid"] = {{"k_max", c.grid.k_max}, {"n_per_axis", c.grid.n_per_axis}, {"n_max", c.grid.n_max},
                 {"basis_cap", c.grid.basis_cap}};
    j["grid"]["total_momentum"] = c.grid.total_momentum ? nlohmann::json(*c.grid.total_momentum) : nlohmann::json("none");
    const auto& s = c.study;
    j["study"] = {{"lambdas", reals_json(s.lambdas)}, {"variants", s.variants}, {"lambda_shifts", s.lambda_shifts},
                  {"etas", s.etas}, {"ladder", s.ladder}, {"ladder_n_max", s.ladder_n_max},
                  {"regularity_lambda", real_or_inf(s.regularity_lambda)},
                  {"regularity_threshold", s.regularity_threshold}, {"tol", s.tol}, {"quad_abs", s.quad_abs},
                  {"quad_rel", s.quad_rel}, {"seed", s.seed}, {"samples", s.samples}, {"p_samples", s.p_samples},
                  {"epsilon", s.epsilon}, {"control", s.control}, {"scaling_delta", s.scaling_delta}};
    if (s.scaling_nu) j["study"]["scaling_nu"] = *s.scaling_nu;
    if (s.scaling_sigma) j["study"]["scaling_sigma"] = *s.scaling_sigma;
    if (s.scaling_r) j["study"]["scaling_r"] = *s.scaling_r;
    j["output"] = {{"csv", c.output.csv}, {"json", c.output.json}, {"dump_operators", c.output.dump_operators}};
    return j;
}

inline std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// The output directory is not part of the hash, so relocating a run keeps its identity.
inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a(config_json(c).dump())); }

// ---------------------------------------------------------------- model / basis construction

inline MomentumGrid make_grid(const RunConfig& c, double k_max) {
    const double h = c.grid.n_per_axis == 1 ? 1.0 : 2.0 * c.grid.k_max / (c.grid.n_per_axis - 1);
    const int half = static_cast<int>(std::lround(k_max / h));
    return {c.model.d, half * h > 0 ? half * h : k_max, 2 * half + 1};
}

inline FockBasis make_basis(const RunConfig& c, std::optional<double> k_max = std::nullopt, int n_max = -1) {
    BasisOptions o;
    o.cap = c.grid.basis_cap;
    o.total_momentum = c.grid.total_momentum;
    const MomentumGrid g = k_max ? make_grid(c, *k_max) : MomentumGrid(c.model.d, c.grid.k_max, c.grid.n_per_axis);
    return {c.model, g, n_max >= 0 ? n_max : c.grid.n_max, o};
}

// ---------------------------------------------------------------- output

inline std::string fmt(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (std::isnan(x)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

struct RunContext {
    RunConfig config;
    std::string command;
    std::filesystem::path out_dir;
    bool override_conditions = false;
    double theta_sign = 1.0; // test hook for the identity negative control
    std::string config_hash;
    std::string run_id; // config hash + command + tool version; what every output file carries
    std::vector<std::string> outputs;
    nlohmann::json checks = nlohmann::json::object();
    nlohmann::json summary = nlohmann::json::object();
    std::ostream* log = nullptr;

    RunContext(RunConfig cfg, std::string cmd, std::filesystem::path out, bool override_flag = false)
        : config(std::move(cfg)), command(std::move(cmd)), out_dir(std::move(out)), override_conditions(override_flag) {
        config_hash = cli::config_hash(config);
        run_id = hex64(fnv1a(config_hash + "|" + command + "|" + tool_version));
    }

    std::ostream& say() {
        static std::ostringstream sink;
        return log ? *log : sink;
    }

    /// CSV with a provenance comment line, a header, then rows.
    void write_csv(const std::string& name, const std::vector<std::string>& header,
                   const std::vector<std::vector<std::string>>& rows) {
        if (!config.output.csv) return;
        std::ofstream f(out_dir / name);
        f << "# run_id=" << run_id << " config_hash=" << config_hash << "\n";
        for (std::size_t i = 0; i < header.size(); ++i) f << (i ? "," : "") << header[i];
        f << "\n";
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < r.size(); ++i) f << (i ? "," : "") << r[i];
            f << "\n";
        }
        outputs.push_back(name);
    }

    void write_json(const std::string& name, nlohmann::json j) {
        if (!config.output.json) return;
        j["run_id"] = run_id;
        j["config_hash"] = config_hash;
        std::ofstream(out_dir / name) << j.dump(2) << "\n";
        outputs.push_back(name);
    }

    void write_text(const std::string& name, const std::string& text) {
        std::ofstream(out_dir / name) << text;
        outputs.push_back(name);
    }
};

inline std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---------------------------------------------------------------- checks

struct CheckItem {
    std::string name;
    bool holds = false;
    std::string detail;
};

struct CheckReport {
    std::vector<CheckItem> items;
    bool all_hold() const {
        return std::all_of(items.begin(), items.end(), [](const CheckItem& c) { return c.holds; });
    }
    nlohmann::json to_json() const {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& c : items) j.push_back({{"name", c.name}, {"holds", c.holds}, {"detail", c.detail}});
        return j;
    }
};

inline std::vector<Momentum> sample_momenta(int d, std::size_t n, std::uint64_t seed) {
    ibc::detail::MomentumSampler s(d, seed);
    std::vector<Momentum> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(s());
    return out;
}

/// Model-level conditions plus the tail-integral sweeps.
inline CheckReport run_checks(const RunConfig& c) {
    CheckReport rep;
    const ModelParams& mp = c.model;
    try {
        mp.validate();
        rep.items.push_back({"parameters", true, "exponent and mass ranges satisfied"});
    } catch (const Error& e) {
        rep.items.push_back({e.kind() == ErrorKind::EckmannMassless ? "eckmann_mass" : "parameters", false, e.what()});
        return rep;
    }

    const auto a = check_condition_a(mp, c.study.samples, c.study.seed);
    {
        std::ostringstream d;
        d << "symmetry " << a.max_symmetry_violation << ", dispersion floor " << a.max_bound_violation
          << ", fitted c " << a.fitted_c;
        rep.items.push_back({"condition_a", a.holds(1e-12), d.str()});
    }

    const auto cc = check_condition_c(mp);
    rep.items.push_back({"condition_c", cc.holds, "D = " + fmt(cc.D) + ", bound " + fmt(cc.bound)});
    if (cc.holds) {
        try {
            if (mp.beta < mp.gamma) {
                const auto f = appendix_parameter_family(mp, 1e-3);
                rep.items.push_back({"parameter_family", true, "case " + std::to_string(f.case_id) + ", s = " + fmt(f.s)});
            } else {
                const auto r = admissible_s_range(mp);
                rep.items.push_back({"admissible_s", r.lower < r.upper, "(" + fmt(r.lower) + ", " + fmt(r.upper) + ")"});
            }
        } catch (const Error& e) {
            rep.items.push_back({"parameter_family", false, e.what()});
        }
    }

    if (mp.kind == ModelKind::Eckmann) {
        const auto kb = eckmann_kinematic_bound(mp.mu, mp.delta, c.study.samples, c.study.seed);
        rep.items.push_back({"kinematic_bound", kb.holds && kb.violations == 0,
                             "c = " + fmt(kb.c_analytic) + ", violations " + std::to_string(kb.violations)});
    }

    const auto ps = sample_momenta(mp.d, c.study.p_samples, c.study.seed);
    const auto tol = c.quad_tolerance();
    const auto env = quad::condition_b_sweep(mp, ps, {0.0}, tol);
    rep.items.push_back({"tail_integral_finite", std::isfinite(env.envelope_C),
                         "envelope C(|p|^0.1+1) with C = " + fmt(env.envelope_C)});
    const auto decay = quad::condition_b_sweep(mp, ps, {1.0, 2.0, 4.0, 8.0}, tol);
    rep.items.push_back({"tail_decay", decay.monotone, decay.monotone ? "monotone in Lambda" : "not monotone in Lambda"});
    return rep;
}

// ---------------------------------------------------------------- commands

inline ops::AssemblyOptions assembly_for(const RunContext& ctx, double lambda, int variant, double shift) {
    ops::AssemblyOptions o;
    o.lambda_uv = lambda;
    o.variant = variant;
    o.lambda_shift = shift;
    o.tol = ctx.config.quad_tolerance();
    o.theta_sign = ctx.theta_sign;
    return o;
}

inline int cmd_check(RunContext& ctx) {
    const auto rep = run_checks(ctx.config);
    ctx.checks = rep.to_json();
    std::vector<std::vector<std::string>> rows;
    for (const auto& i : rep.items) {
        rows.push_back({i.name, i.holds ? "1" : "0", "\"" + i.detail + "\""});
        ctx.say() << (i.holds ? "  ok   " : "  FAIL ") << i.name << ": " << i.detail << "\n";
    }
    ctx.write_csv("check.csv", {"check", "holds", "detail"}, rows);
    ctx.write_json("check.json", {{"checks", rep.to_json()}, {"all_hold", rep.all_hold()}});
    return rep.all_hold() ? kOk : kConditionFailure;
}

/// Runs the check gate for assembly commands; returns an exit code when the run must stop.
inline std::optional<int> gate(RunContext& ctx) {
    const auto rep = run_checks(ctx.config);
    ctx.checks = rep.to_json();
    if (rep.all_hold()) return std::nullopt;
    for (const auto& i : rep.items)
        if (!i.holds) ctx.say() << "condition failed: " << i.name << ": " << i.detail << "\n";
    if (ctx.override_conditions) {
        ctx.say() << "continuing because of --override-conditions\n";
        return std::nullopt;
    }
    return kConditionFailure;
}

inline int cmd_identity(RunContext& ctx) {
    if (auto stop = gate(ctx)) return *stop;
    const auto& s = ctx.config.study;
    const FockBasis basis = make_basis(ctx.config);
    ctx.say() << "basis dimension " << basis.total_dim() << "\n";
    std::vector<std::vector<std::string>> rows;
    nlohmann::json cases = nlohmann::json::array();
    bool all = true;
    bool dumped = false;
    for (double lam : s.lambdas)
        for (int nu : s.variants) {
            const auto direct = ops::assemble_H_direct(basis, assembly_for(ctx, lam, nu, 0.0));
            std::optional<ops::SparseOperator> first_ibc;
            for (double shift : s.lambda_shifts) {
                const auto ibc_op = ops::assemble_H_ibc(basis, assembly_for(ctx, lam, nu, shift));
                const auto r = ops::verify_identity(direct, ibc_op, s.tol);
                double shift_diff = 0.0;
                if (!first_ibc) first_ibc = ibc_op;
                else shift_diff = ops::verify_identity(*first_ibc, ibc_op, s.tol).max_rel_diff;
                const bool pass = r.pass && shift_diff <= s.tol;
                all = all && pass;
                rows.push_back({fmt(lam), std::to_string(nu), fmt(shift), fmt(r.max_abs_diff), fmt(r.max_rel_diff),
                                fmt(shift_diff), pass ? "1" : "0"});
                cases.push_back({{"lambda_uv", real_or_inf(lam)}, {"variant", nu}, {"lambda_shift", shift},
                                 {"max_abs_diff", r.max_abs_diff}, {"max_rel_diff", r.max_rel_diff},
                                 {"shift_rel_diff", shift_diff}, {"pass", pass}});
                ctx.say() << "  Lambda=" << fmt(lam) << " nu=" << nu << " lambda=" << fmt(shift)
                          << " rel diff " << r.max_rel_diff << (pass ? "" : "  FAIL") << "\n";
            }
            if (ctx.config.output.dump_operators && !dumped) {
                std::ofstream f(ctx.out_dir / "H_direct.triplets");
                ops::write_triplets(direct, f);
                ctx.outputs.push_back("H_direct.triplets");
                dumped = true;
            }
        }
    ctx.write_csv("identity.csv",
                  {"lambda_uv", "variant", "lambda_shift", "max_abs_diff", "max_rel_diff", "shift_rel_diff", "pass"}, rows);
    ctx.write_json("identity.json", {{"basis", basis.manifest()}, {"cases", cases}, {"all_pass", all}});
    ctx.summary["all_pass"] = all;
    return all ? kOk : kIdentityFailure;
}

inline std::vector<std::string> table_row(const spectral::ConvergenceRow& r) {
    return {fmt(r.lambda_uv), fmt(r.ground_energy), fmt(r.resolvent_diff_to_finest), fmt(r.opnorm_T_diff)};
}

inline nlohmann::json table_json(const spectral::ConvergenceTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"lambda_uv", real_or_inf(r.lambda_uv)}, {"ground_energy", r.ground_energy},
                        {"resolvent_diff_to_finest", r.resolvent_diff_to_finest}, {"opnorm_T_diff", r.opnorm_T_diff}});
    auto fit = [](const spectral::LineFit& f) {
        return nlohmann::json{{"slope", f.slope}, {"intercept", f.intercept}, {"residual", f.residual}};
    };
    return {{"variant", t.variant},         {"counterterm", t.counterterm},
            {"rows", rows},                 {"resolvent_rate", fit(t.resolvent_rate)},
            {"t_rate", fit(t.t_rate)},      {"energy_vs_log", fit(t.energy_vs_log)},
            {"resolvent_monotone", t.resolvent_monotone()}};
}

inline std::string plot_script(const std::vector<int>& variants, bool control) {
    std::ostringstream s;
    s << "# Plots converge_plot.dat (columns documented in its header line).\n"
         "import numpy as np\nimport matplotlib.pyplot as plt\n\n"
         "data = np.loadtxt('converge_plot.dat', comments='#')\n"
         "lam = data[:, 0]\nfig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))\ncol = 1\n";
    for (int nu : variants)
        s << "a.plot(np.log1p(lam**2), data[:, col], 'o-', label='nu=" << nu << "')\n"
          << "b.loglog(lam[:-1], data[:-1, col + 1], 'o-', label='nu=" << nu << "')\ncol += 2\n";
    if (control) s << "a.plot(np.log1p(lam**2), data[:, col], 's--', label='E=0 control')\ncol += 1\n";
    s << "a.plot(np.log1p(lam**2), data[:, col], ':', label='log fit (control)')\n"
         "a.set_xlabel('ln(1+Lambda^2)')\na.set_ylabel('ground energy')\na.legend()\n"
         "b.set_xlabel('Lambda')\nb.set_ylabel('resolvent difference to finest')\nb.legend()\n"
         "fig.tight_layout()\nfig.savefig('converge_plot.png', dpi=120)\n";
    return s.str();
}

inline int cmd_converge(RunContext& ctx) {
    if (auto stop = gate(ctx)) return *stop;
    const auto& s = ctx.config.study;
    const FockBasis basis = make_basis(ctx.config);
    ctx.say() << "basis dimension " << basis.total_dim() << "\n";
    const std::vector<std::string> header{"lambda_uv", "ground_energy", "resolvent_diff_to_finest", "opnorm_T_diff"};
    nlohmann::json out;
    out["basis"] = basis.manifest();
    std::vector<spectral::ConvergenceTable> tables;
    for (int nu : s.variants) {
        spectral::StudyOptions so;
        so.assembly = assembly_for(ctx, 0.0, nu, 0.0);
        so.epsilon = s.epsilon;
        so.lanczos.seed = s.seed;
        auto t = spectral::cutoff_convergence_study(basis, s.lambdas, so);
        std::vector<std::vector<std::string>> rows;
        for (const auto& r : t.rows) rows.push_back(table_row(r));
        ctx.write_csv("converge_nu" + std::to_string(nu) + ".csv", header, rows);
        out["variant_" + std::to_string(nu)] = table_json(t);
        ctx.say() << "  nu=" << nu << ": ground energies";
        for (const auto& r : t.rows) ctx.say() << " " << r.ground_energy;
        ctx.say() << "\n";
        tables.push_back(std::move(t));
    }
    std::optional<spectral::ConvergenceTable> control;
    if (s.control) {
        spectral::StudyOptions so;
        so.assembly = assembly_for(ctx, 0.0, 1, 0.0);
        so.assembly.counterterm = false;
        so.lanczos.seed = s.seed;
        so.compute_T = false;
        control = spectral::cutoff_convergence_study(basis, s.lambdas, so);
        std::vector<std::vector<std::string>> rows;
        for (const auto& r : control->rows) rows.push_back(table_row(r));
        ctx.write_csv("converge_control.csv", header, rows);
        out["control"] = table_json(*control);
    }

    // counter-term divergence at p = 0 against ln(1 + Lambda^2)
    std::vector<double> finite;
    for (double l : s.lambdas)
        if (std::isfinite(l) && l > 0.0) finite.push_back(l);
    std::vector<std::vector<std::string>> drows;
    if (finite.size() >= 3) {
        for (int nu : s.variants) {
            std::vector<double> vals;
            for (double l : finite) vals.push_back(quad::counterterm(Momentum::Zero(), l, nu, ctx.config.model, ctx.config.quad_tolerance()).value);
            for (auto reg : {spectral::DivergenceRegressor::LogLambda, spectral::DivergenceRegressor::LogOnePlusSquare}) {
                const auto f = spectral::divergence_fit(finite, vals, reg);
                const std::string name = reg == spectral::DivergenceRegressor::LogLambda ? "ln(Lambda)" : "ln(1+Lambda^2)";
                drows.push_back({std::to_string(nu), name, fmt(f.slope), fmt(f.intercept), fmt(f.residual)});
                out["divergence_nu" + std::to_string(nu)][name] = {{"slope", f.slope}, {"intercept", f.intercept}, {"residual", f.residual}};
            }
        }
        ctx.write_csv("divergence.csv", {"variant", "regressor", "slope", "intercept", "residual"}, drows);
    }

    std::ostringstream dat;
    dat << "# run_id=" << ctx.run_id << " columns: lambda_uv";
    for (int nu : s.variants) dat << " E0_nu" << nu << " resolvent_diff_nu" << nu;
    if (control) dat << " E0_control";
    dat << " control_log_fit\n";
    for (std::size_t i = 0; i < s.lambdas.size(); ++i) {
        dat << fmt(tables.front().rows[i].lambda_uv);
        for (const auto& t : tables) dat << " " << fmt(t.rows[i].ground_energy) << " " << fmt(t.rows[i].resolvent_diff_to_finest);
        double overlay = 0.0;
        if (control) {
            dat << " " << fmt(control->rows[i].ground_energy);
            const double x = std::log1p(control->rows[i].lambda_uv * control->rows[i].lambda_uv);
            overlay = control->energy_vs_log.slope * x + control->energy_vs_log.intercept;
        }
        dat << " " << fmt(overlay) << "\n";
    }
    ctx.write_text("converge_plot.dat", dat.str());
    ctx.write_text("converge_plot.py", "# run_id=" + ctx.run_id + "\n" + plot_script(s.variants, control.has_value()));
    ctx.write_json("converge.json", out);
    return kOk;
}

inline int cmd_regularity(RunContext& ctx) {
    if (auto stop = gate(ctx)) return *stop;
    const auto& s = ctx.config.study;
    std::vector<FockBasis> family;
    for (double km : s.ladder) family.push_back(make_basis(ctx.config, km, s.ladder_n_max));
    std::vector<const FockBasis*> ptrs;
    for (const auto& b : family) ptrs.push_back(&b);
    auto o = assembly_for(ctx, s.regularity_lambda, s.variants.front(), 0.0);
    spectral::LanczosOptions lo;
    lo.seed = s.seed;
    const auto rep = spectral::regularity_diagnostic(ptrs, s.etas, o, s.regularity_threshold, lo);
    std::vector<std::vector<std::string>> rows, slopes;
    nlohmann::json jr = nlohmann::json::array();
    for (const auto& r : rep.rows)
        for (std::size_t e = 0; e < rep.etas.size(); ++e) {
            rows.push_back({fmt(r.k_max), std::to_string(r.dim), fmt(r.ground_energy), fmt(rep.etas[e]),
                            fmt(r.norm_regular[e]), fmt(r.norm_singular[e])});
            jr.push_back({{"k_max", r.k_max}, {"dim", r.dim}, {"ground_energy", r.ground_energy}, {"eta", rep.etas[e]},
                          {"norm_regular", r.norm_regular[e]}, {"norm_singular", r.norm_singular[e]}});
        }
    nlohmann::json js = nlohmann::json::array();
    for (std::size_t e = 0; e < rep.etas.size(); ++e) {
        slopes.push_back({fmt(rep.etas[e]), fmt(rep.slope_singular[e]), fmt(rep.slope_regular[e]), rep.bounded(e) ? "1" : "0"});
        js.push_back({{"eta", rep.etas[e]}, {"slope_singular", rep.slope_singular[e]},
                      {"slope_regular", rep.slope_regular[e]}, {"bounded", rep.bounded(e)}});
        ctx.say() << "  eta=" << rep.etas[e] << " growth slope of |L^eta G psi| " << rep.slope_singular[e] << "\n";
    }
    ctx.write_csv("regularity.csv", {"k_max", "dim", "ground_energy", "eta", "norm_regular", "norm_singular"}, rows);
    ctx.write_csv("regularity_slopes.csv", {"eta", "slope_singular", "slope_regular", "bounded"}, slopes);
    ctx.write_json("regularity.json", {{"rows", jr}, {"slopes", js}, {"threshold", rep.threshold}});
    return kOk;
}

/// Exponents of the scaling sweep: defaults put d in the middle of its window.
inline quad::ScalingExponents scaling_exponents(const RunConfig& c) {
    const auto& mp = c.model;
    quad::ScalingExponents e;
    e.nu_exp = c.study.scaling_nu.value_or(2.0 * mp.alpha);
    e.sigma_exp = c.study.scaling_sigma.value_or(0.0);
    e.r = c.study.scaling_r.value_or((mp.d - e.nu_exp - e.sigma_exp) / mp.gamma + 0.5);
    return e;
}

inline std::vector<quad::ScalingPoint> scaling_sweep(const RunConfig& c) {
    const auto e = scaling_exponents(c);
    std::vector<double> lambdas{0.0};
    if (c.study.scaling_delta > 0.0) lambdas = {0.0, 2.0, 4.0, 8.0};
    std::vector<quad::ScalingPoint> sweep;
    for (double pn : {0.0, 1.0, 2.0, 4.0, 8.0})
        for (double om : {1.0, 4.0, 16.0})
            for (double l : lambdas) {
                quad::ScalingPoint sp;
                sp.p = pn * Momentum::UnitX();
                sp.omega_shift = om;
                sp.lambda = l;
                sp.exps = e;
                sweep.push_back(sp);
            }
    return sweep;
}

inline int cmd_bounds(RunContext& ctx) {
    const auto& c = ctx.config;
    const auto& mp = c.model;
    quad::check_window(scaling_exponents(c), mp.d, mp.gamma);
    if (auto stop = gate(ctx)) return *stop;
    const auto tol = c.quad_tolerance();
    nlohmann::json out;
    std::vector<std::vector<std::string>> flags;
    bool all = true;
    auto flag = [&](const std::string& name, double value, bool pass) {
        flags.push_back({name, fmt(value), pass ? "1" : "0"});
        all = all && pass;
        ctx.say() << (pass ? "  ok   " : "  FAIL ") << name << " = " << value << "\n";
    };

    const auto sweep = scaling_sweep(c);
    const auto fit = quad::scaling_bound_fit(sweep, c.study.scaling_delta, mp, tol);
    std::vector<std::vector<std::string>> srows;
    for (std::size_t i = 0; i < sweep.size(); ++i)
        srows.push_back({fmt(sweep[i].p.norm()), fmt(sweep[i].omega_shift), fmt(sweep[i].lambda), fmt(fit.values[i]),
                         fmt(fit.ratios[i])});
    ctx.write_csv("scaling.csv", {"p_norm", "omega_shift", "lambda_uv", "value", "normalized_ratio"}, srows);
    flag("scaling_fitted_C", fit.fitted_C, std::isfinite(fit.fitted_C));
    flag("scaling_worst_ratio", fit.worst_ratio, fit.bounded);
    flag("scaling_monotone_in_lambda", fit.monotone_in_lambda ? 1.0 : 0.0, fit.monotone_in_lambda);

    const auto ps = sample_momenta(mp.d, c.study.p_samples, c.study.seed);
    const std::vector<double> lambdas{1.0, 2.0, 4.0, 8.0};
    const auto coarse = quad::condition_b_sweep(mp, ps, lambdas, {tol.abs * 100.0, tol.rel * 100.0, tol.max_intervals});
    const auto fine = quad::condition_b_sweep(mp, ps, lambdas, tol);
    std::vector<std::vector<std::string>> trows;
    for (std::size_t i = 0; i < ps.size(); ++i)
        for (std::size_t j = 0; j < lambdas.size(); ++j)
            trows.push_back({std::to_string(i), fmt(ps[i].norm()), fmt(lambdas[j]), fmt(fine.values[i][j])});
    ctx.write_csv("tail_decay.csv", {"sample", "p_norm", "lambda_uv", "value"}, trows);
    flag("tail_decay_monotone", fine.monotone ? 1.0 : 0.0, fine.monotone);
    const double drift = std::abs(fine.envelope_C - coarse.envelope_C) / std::max(fine.envelope_C, 1e-300);
    flag("tail_envelope_C", fine.envelope_C, std::isfinite(fine.envelope_C));
    flag("tail_envelope_refinement_drift", drift, drift <= 1e-3);

    if (mp.kind == ModelKind::Eckmann) {
        const auto kb = eckmann_kinematic_bound(mp.mu, mp.delta, c.study.samples, c.study.seed);
        flag("kinematic_c", kb.c_analytic, true);
        flag("kinematic_max_ratio", kb.max_ratio, kb.max_ratio <= kb.c_analytic * (1.0 + 1e-12));
        flag("kinematic_violations", static_cast<double>(kb.violations), kb.violations == 0);
    }
    ctx.write_csv("bounds.csv", {"quantity", "value", "pass"}, flags);
    nlohmann::json fj = nlohmann::json::array();
    for (const auto& f : flags) fj.push_back({{"quantity", f[0]}, {"value", f[1]}, {"pass", f[2] == "1"}});
    out["flags"] = fj;
    out["all_pass"] = all;
    ctx.write_json("bounds.json", out);
    return all ? kOk : kConditionFailure;
}

inline int exit_code_for(ErrorKind k) {
    switch (k) {
    case ErrorKind::QuadNotConverged:
    case ErrorKind::NotConverged:
    case ErrorKind::SolveNotConverged: return kNotConverged;
    case ErrorKind::EckmannMassless:
    case ErrorKind::ConditionCViolated:
    case ErrorKind::EpsilonTooLarge:
    case ErrorKind::MasslessNucleon:
    case ErrorKind::MasslessWithoutShift: return kConditionFailure;
    default: return kConfigError;
    }
}

/// Runs one subcommand, mapping errors to exit codes and always writing manifest.json.
inline int run_command(RunContext& ctx) {
    static const std::map<std::string, std::function<int(RunContext&)>> table{
        {"check", cmd_check}, {"identity", cmd_identity}, {"converge", cmd_converge},
        {"regularity", cmd_regularity}, {"bounds", cmd_bounds}};
    const auto it = table.find(ctx.command);
    if (it == table.end()) {
        ctx.say() << "unknown command " << ctx.command << "\n";
        return kConfigError;
    }
    std::filesystem::create_directories(ctx.out_dir);
    const std::string started = utc_now();
    int code = kOk;
    nlohmann::json error;
    try {
        code = it->second(ctx);
    } catch (const Error& e) {
        code = exit_code_for(e.kind());
        error = {{"kind", to_string(e.kind())}, {"message", e.what()}};
        ctx.say() << "error: " << e.what() << "\n";
    }
    nlohmann::json m;
    m["tool"] = tool_name;
    m["version"] = tool_version;
    m["command"] = ctx.command;
    m["run_id"] = ctx.run_id;
    m["config_hash"] = ctx.config_hash;
    m["config"] = config_json(ctx.config);
    m["seed"] = ctx.config.study.seed;
    m["override_conditions"] = ctx.override_conditions;
    if (ctx.theta_sign != 1.0) m["theta_sign"] = ctx.theta_sign;
    m["started"] = started;
    m["finished"] = utc_now();
    m["outputs"] = ctx.outputs;
    m["checks"] = ctx.checks;
    m["exit_code"] = code;
    if (!error.is_null()) m["error"] = error;
    std::ofstream(ctx.out_dir / "manifest.json") << m.dump(2) << "\n";
    return code;
}

} // namespace ibc::cli

#endif
