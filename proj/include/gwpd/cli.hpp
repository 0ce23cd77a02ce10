#pragma once

// Config-driven orchestration behind the gwpd executable: INI parsing, runs, convergence
// studies, reversibility checks, grid comparisons and CSV/JSON output.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "gwpd/integrators.hpp"
#include "gwpd/reference.hpp"

namespace gwpd::cli {

namespace fs = std::filesystem;

enum ExitCode : int { ok = 0, config_error = 2, numerical_failure = 3 };

struct GridOptions {
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<int> points;
    int substeps = 1;
    bool frames = false;
};

struct Bounds {
    std::optional<double> norm_drift;
    std::optional<double> E_drift;
    std::optional<double> E_eff_drift;
};

struct RunConfig {
    PhysicalSetup setup;
    PotentialModel model;
    MethodSpec method;
    int quadrature_order = 16;
    SchemeSpec scheme;
    bool hagedorn = false;
    GaussianHeller initial;
    std::optional<GaussianHagedorn> initial_hagedorn;
    fs::path output_dir = ".";
    std::size_t save_every = 1;
    bool reversibility = false;
    Bounds bounds;
    GridOptions grid;

    Method make_method() const {
        return Method(method, model, setup, ExpectationEngine(quadrature_order), initial.q);
    }
};

namespace detail {

using boost::property_tree::ptree;

inline std::string strip_comment(std::string v) {
    if (auto pos = v.find(" #"); pos != std::string::npos) v.erase(pos);
    boost::algorithm::trim(v);
    return v;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
    std::string s = text;
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream in(s);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw ConfigError(key + ": not a number: '" + tok + "'");
        }
    }
    return out;
}

/// One section of the config with strict key bookkeeping.
class Section {
public:
    Section(std::string name, const ptree* tree) : name_(std::move(name)), tree_(tree) {}

    bool present() const { return tree_ != nullptr; }
    bool has(const std::string& key) const { return tree_ && tree_->find(key) != tree_->not_found(); }

    std::optional<std::string> raw(const std::string& key) const {
        if (!has(key)) return std::nullopt;
        return strip_comment(tree_->get<std::string>(key));
    }

    std::string str(const std::string& key, std::optional<std::string> fallback = std::nullopt) const {
        if (auto v = raw(key)) return *v;
        if (fallback) return *fallback;
        throw ConfigError("[" + name_ + "] missing required key '" + key + "'");
    }

    double number(const std::string& key, std::optional<double> fallback = std::nullopt) const {
        if (!has(key)) {
            if (fallback) return *fallback;
            throw ConfigError("[" + name_ + "] missing required key '" + key + "'");
        }
        const std::vector<double> v = list(key);
        if (v.size() != 1) throw ConfigError(qualified(key) + ": expected a single number");
        return v[0];
    }

    std::optional<double> optional_number(const std::string& key) const {
        if (!has(key)) return std::nullopt;
        return number(key);
    }

    long integer(const std::string& key, std::optional<long> fallback = std::nullopt) const {
        const double v = number(key, fallback ? std::optional<double>(static_cast<double>(*fallback)) : std::nullopt);
        if (v != std::floor(v)) throw ConfigError(qualified(key) + ": expected an integer");
        return static_cast<long>(v);
    }

    bool flag(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string v = boost::algorithm::to_lower_copy(str(key));
        if (v == "true" || v == "yes" || v == "1") return true;
        if (v == "false" || v == "no" || v == "0") return false;
        throw ConfigError(qualified(key) + ": expected true or false");
    }

    std::vector<double> list(const std::string& key) const {
        const std::vector<double> v = parse_list(qualified(key), str(key));
        if (v.empty()) throw ConfigError(qualified(key) + ": empty list");
        return v;
    }

    void only(const std::set<std::string>& allowed) const {
        if (!tree_) return;
        for (const auto& [k, v] : *tree_) {
            if (!allowed.count(k)) throw ConfigError("[" + name_ + "] unknown key '" + k + "'");
        }
    }

    std::string qualified(const std::string& key) const { return "[" + name_ + "] " + key; }

private:
    std::string name_;
    const ptree* tree_;
};

inline Section section(const ptree& root, const std::string& name) {
    const auto it = root.find(name);
    return Section(name, it == root.not_found() ? nullptr : &it->second);
}

inline std::vector<Monomial> parse_terms(const std::string& text, int dim) {
    std::vector<Monomial> terms;
    std::vector<std::string> parts;
    boost::algorithm::split(parts, text, boost::algorithm::is_any_of(";"));
    for (const std::string& part : parts) {
        const std::vector<double> v = parse_list("[potential] terms", part);
        if (v.empty()) continue;
        if (v.size() != static_cast<std::size_t>(dim) + 1)
            throw ConfigError("[potential] terms: each term needs a coefficient and " + std::to_string(dim) + " powers");
        Monomial m{v[0], {}};
        for (int i = 0; i < dim; ++i) {
            const double e = v[static_cast<std::size_t>(i) + 1];
            if (e < 0 || e != std::floor(e)) throw ConfigError("[potential] terms: powers must be nonnegative integers");
            m.powers.push_back(static_cast<int>(e));
        }
        terms.push_back(std::move(m));
    }
    return terms;
}

inline std::vector<double> read_table(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("[potential] file not found: " + file.string());
    std::vector<double> values;
    std::string line;
    while (std::getline(in, line)) {
        if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
        for (double v : parse_list("[potential] file", line)) values.push_back(v);
    }
    return values;
}

inline PotentialModel parse_potential(const Section& s, int dim, const fs::path& base) {
    const std::string kind = s.str("kind");
    const std::set<std::string> common{"kind", "fd_fallback"};
    auto allow = [&](std::set<std::string> extra) {
        extra.insert(common.begin(), common.end());
        s.only(extra);
    };
    std::optional<PotentialModel> model;
    if (kind == "harmonic") {
        allow({"K", "center", "v0"});
        model = PotentialModel::harmonic(matrix_from_list(s.list("K"), dim),
                                         s.has("center") ? vector_from_list(s.list("center"), dim) : Vec::Zero(dim),
                                         s.number("v0", 0.0));
    } else if (kind == "morse") {
        allow({"De", "a", "qe"});
        model = PotentialModel::morse(vector_from_list(s.list("De"), dim), vector_from_list(s.list("a"), dim),
                                      s.has("qe") ? vector_from_list(s.list("qe"), dim) : Vec::Zero(dim));
    } else if (kind == "quartic_double_well") {
        allow({"quartic", "quadratic", "coupling"});
        model = PotentialModel::quartic_double_well(dim, s.number("quartic"), s.number("quadratic", 0.0),
                                                    s.number("coupling", 0.0));
    } else if (kind == "polynomial") {
        allow({"terms"});
        model = PotentialModel::polynomial(dim, parse_terms(s.str("terms", std::string{}), dim));
    } else if (kind == "user_table") {
        allow({"file", "qmin", "qmax"});
        if (dim != 1) throw ConfigError("[potential] user_table is one-dimensional");
        fs::path file = s.str("file");
        if (file.is_relative()) file = base / file;
        model = PotentialModel::user_table(s.number("qmin"), s.number("qmax"), read_table(file));
    } else {
        throw ConfigError("[potential] unknown kind '" + kind + "'");
    }
    model->set_fd_fallback(s.flag("fd_fallback", true));
    return *model;
}

inline CMat complex_matrix(const Section& s, const std::string& re, const std::string& im, int dim) {
    const Mat r = s.has(re) ? matrix_from_list(s.list(re), dim) : Mat::Zero(dim, dim);
    const Mat i = s.has(im) ? matrix_from_list(s.list(im), dim) : Mat::Zero(dim, dim);
    return r.cast<cplx>() + I * i.cast<cplx>();
}

} // namespace detail

/// Parses the sectioned key-value config; every unknown section or key is an error.
inline RunConfig parse_config(std::istream& in, const fs::path& base_dir = ".") {
    using detail::Section;
    detail::ptree root;
    try {
        boost::property_tree::read_ini(in, root);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    const std::set<std::string> sections{"setup", "potential", "method", "scheme", "initial", "output", "checks", "grid"};
    for (const auto& [name, tree] : root) {
        if (!sections.count(name)) throw ConfigError("unknown section [" + name + "]");
        if (tree.empty() && !tree.data().empty()) throw ConfigError("key '" + name + "' outside of a section");
    }

    const Section setup_s = detail::section(root, "setup");
    setup_s.only({"dim", "hbar", "mass"});
    const int dim = static_cast<int>(setup_s.integer("dim", 1));
    if (dim < 1) throw ConfigError("[setup] dim must be positive");
    const Mat mass = setup_s.has("mass") ? matrix_from_list(setup_s.list("mass"), dim) : Mat::Identity(dim, dim);
    PhysicalSetup setup(dim, setup_s.number("hbar", 1.0), mass);

    const Section pot_s = detail::section(root, "potential");
    if (!pot_s.present()) throw ConfigError("missing section [potential]");
    PotentialModel model = detail::parse_potential(pot_s, dim, base_dir);

    const Section method_s = detail::section(root, "method");
    method_s.only({"id", "q_ref", "quadrature_order"});
    MethodSpec method{parse_method(method_s.str("id")), std::nullopt};
    if (method_s.has("q_ref")) method.q_ref = vector_from_list(method_s.list("q_ref"), dim);
    const int quad = static_cast<int>(method_s.integer("quadrature_order", 16));
    if (quad < 1 || quad > 64) throw ConfigError("[method] quadrature_order must be in 1..64");

    const Section scheme_s = detail::section(root, "scheme");
    scheme_s.only({"base", "order", "composition", "dt", "steps", "parametrization"});
    SchemeSpec scheme;
    scheme.base = parse_base(scheme_s.str("base", std::string("VTV")));
    scheme.order = static_cast<int>(scheme_s.integer("order", 2));
    scheme.composition = parse_composition(scheme_s.str("composition", std::string("triple_jump")));
    scheme.dt = scheme_s.number("dt");
    const long steps = scheme_s.integer("steps");
    if (steps < 0) throw ConfigError("[scheme] steps must be nonnegative");
    scheme.steps = static_cast<std::size_t>(steps);
    scheme.validate();
    const std::string param = scheme_s.str("parametrization", std::string("heller"));
    if (param != "heller" && param != "hagedorn") throw ConfigError("[scheme] parametrization must be heller or hagedorn");
    const bool hagedorn = param == "hagedorn";

    const Section init_s = detail::section(root, "initial");
    init_s.only({"q0", "p0", "ReA0", "ImA0", "gamma0_re", "gamma0_im", "normalize", "ReQ0", "ImQ0", "ReP0", "ImP0",
                 "S0"});
    const bool has_a = init_s.has("ReA0") || init_s.has("ImA0");
    const bool has_qp = init_s.has("ReQ0") || init_s.has("ImQ0") || init_s.has("ReP0") || init_s.has("ImP0");
    if (has_a && has_qp) throw ConfigError("[initial] give either the A0 width or the Q0/P0 pair, not both");
    if (has_qp && !hagedorn) throw ConfigError("[initial] Q0/P0 requires parametrization = hagedorn");
    if (!has_a && !has_qp) throw ConfigError("[initial] missing width: set ImA0 (and ReA0) or Q0/P0");
    const Vec q0 = init_s.has("q0") ? vector_from_list(init_s.list("q0"), dim) : Vec::Zero(dim);
    const Vec p0 = init_s.has("p0") ? vector_from_list(init_s.list("p0"), dim) : Vec::Zero(dim);

    GaussianHeller initial;
    std::optional<GaussianHagedorn> initial_h;
    if (has_qp) {
        if (init_s.has("gamma0_re") || init_s.has("gamma0_im") || init_s.has("normalize"))
            throw ConfigError("[initial] Hagedorn states are normalized by construction; use S0 for the phase");
        GaussianHagedorn h{q0, p0, detail::complex_matrix(init_s, "ReQ0", "ImQ0", dim),
                           detail::complex_matrix(init_s, "ReP0", "ImP0", dim), init_s.number("S0", 0.0), 0};
        validate(h, setup);
        initial = hagedorn_to_heller(h, setup);
        initial_h = h;
    } else {
        if (init_s.has("S0")) throw ConfigError("[initial] S0 belongs to the Q0/P0 form; use gamma0_re");
        initial = GaussianHeller{q0, p0, detail::complex_matrix(init_s, "ReA0", "ImA0", dim),
                                 cplx(init_s.number("gamma0_re", 0.0), init_s.number("gamma0_im", 0.0))};
        validate(initial, setup);
        if (init_s.flag("normalize", true)) initial = normalize_initial(initial, setup);
        if (hagedorn) initial_h = heller_to_hagedorn(initial, setup);
    }
    if (is_frozen(method.id) && initial.re_a().cwiseAbs().maxCoeff() != 0.0)
        throw ConfigError("frozen Gaussian methods require a purely imaginary initial width (Re A0 = 0)");
    if (is_frozen(method.id) && hagedorn)
        throw ConfigError("frozen Gaussian methods use the Heller parametrization");

    const Section out_s = detail::section(root, "output");
    out_s.only({"directory", "save_every"});
    const long save_every = out_s.integer("save_every", 1);
    if (save_every < 1) throw ConfigError("[output] save_every must be positive");

    const Section checks_s = detail::section(root, "checks");
    checks_s.only({"reversibility", "norm_drift_bound", "E_drift_bound", "E_eff_drift_bound"});

    const Section grid_s = detail::section(root, "grid");
    grid_s.only({"lower", "upper", "points", "substeps", "frames"});
    GridOptions grid;
    if (grid_s.has("lower")) grid.lower = grid_s.list("lower");
    if (grid_s.has("upper")) grid.upper = grid_s.list("upper");
    if (grid_s.has("points"))
        for (double n : grid_s.list("points")) grid.points.push_back(static_cast<int>(n));
    grid.substeps = static_cast<int>(grid_s.integer("substeps", 1));
    if (grid.substeps < 1) throw ConfigError("[grid] substeps must be positive");
    grid.frames = grid_s.flag("frames", false);

    RunConfig cfg{setup, model, method, quad, scheme, hagedorn, initial, initial_h};
    cfg.output_dir = out_s.str("directory", std::string("."));
    if (cfg.output_dir.is_relative()) cfg.output_dir = base_dir / cfg.output_dir;
    cfg.save_every = static_cast<std::size_t>(save_every);
    cfg.reversibility = checks_s.flag("reversibility", false);
    cfg.bounds = {checks_s.optional_number("norm_drift_bound"), checks_s.optional_number("E_drift_bound"),
                  checks_s.optional_number("E_eff_drift_bound")};
    cfg.grid = grid;
    cfg.make_method();
    return cfg;
}

inline RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    return parse_config(in, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

/// Fixed-precision formatting so identical runs give identical bytes.
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::vector<std::string> trajectory_header(int d, bool hagedorn) {
    std::vector<std::string> h{"t"};
    for (int i = 0; i < d; ++i) h.push_back("q_" + std::to_string(i));
    for (int i = 0; i < d; ++i) h.push_back("p_" + std::to_string(i));
    if (!hagedorn) {
        for (const char* part : {"ReA_", "ImA_"})
            for (int i = 0; i < d; ++i)
                for (int j = i; j < d; ++j) h.push_back(part + std::to_string(i) + std::to_string(j));
        h.insert(h.end(), {"Re_gamma", "Im_gamma"});
    } else {
        for (const char* part : {"ReQ_", "ImQ_", "ReP_", "ImP_"})
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) h.push_back(part + std::to_string(i) + std::to_string(j));
        h.push_back("S");
    }
    h.insert(h.end(), {"norm", "E", "E_eff"});
    return h;
}

inline std::vector<double> state_columns(const GaussianHeller& s) {
    const int d = s.dim();
    std::vector<double> v(s.q.data(), s.q.data() + d);
    v.insert(v.end(), s.p.data(), s.p.data() + d);
    for (int part = 0; part < 2; ++part)
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) v.push_back(part == 0 ? s.A(i, j).real() : s.A(i, j).imag());
    v.push_back(s.gamma.real());
    v.push_back(s.gamma.imag());
    return v;
}

inline std::vector<double> state_columns(const GaussianHagedorn& s) {
    const int d = s.dim();
    std::vector<double> v(s.q.data(), s.q.data() + d);
    v.insert(v.end(), s.p.data(), s.p.data() + d);
    for (const CMat* m : {&s.Q, &s.P})
        for (int part = 0; part < 2; ++part)
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) v.push_back(part == 0 ? (*m)(i, j).real() : (*m)(i, j).imag());
    v.push_back(s.S);
    return v;
}

inline void write_row(std::ostream& out, const std::vector<double>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << fmt(row[i]);
    out << '\n';
}

inline void write_header(std::ostream& out, const std::vector<std::string>& h) {
    out << boost::algorithm::join(h, ",") << '\n';
}

struct Summary {
    std::string method;
    std::string scheme;
    double dt = 0.0;
    std::size_t steps = 0;
    double norm_drift = 0.0;
    double E_drift = 0.0;
    double E_eff_drift = 0.0;
    std::optional<double> reversibility_residual;
    double wall_time_seconds = 0.0;

    nlohmann::ordered_json to_json(const Bounds& b = {}) const {
        nlohmann::ordered_json j{{"method", method}, {"scheme", scheme}, {"dt", dt}, {"steps", steps},
                                 {"norm_drift", norm_drift}, {"E_drift", E_drift}, {"E_eff_drift", E_eff_drift}};
        if (reversibility_residual) j["reversibility_residual"] = *reversibility_residual;
        j["wall_time_seconds"] = wall_time_seconds;
        bool within = true;
        auto bound = [&](const char* key, const std::optional<double>& limit, double value) {
            if (!limit) return;
            j[std::string(key) + "_bound"] = *limit;
            within = within && std::abs(value) < *limit;
        };
        bound("norm_drift", b.norm_drift, norm_drift);
        bound("E_drift", b.E_drift, E_drift);
        bound("E_eff_drift", b.E_eff_drift, E_eff_drift);
        if (b.norm_drift || b.E_drift || b.E_eff_drift) j["within_bounds"] = within;
        return j;
    }
};

inline void write_json(const fs::path& file, const nlohmann::ordered_json& j) {
    std::ofstream out(file);
    if (!out) throw ConfigError("cannot write " + file.string());
    out << j.dump(2) << '\n';
}

inline std::ofstream open_output(const fs::path& file) {
    fs::create_directories(file.parent_path());
    std::ofstream out(file);
    if (!out) throw ConfigError("cannot write " + file.string());
    return out;
}

template <class State>
State initial_state(const RunConfig& cfg);

template <>
inline GaussianHeller initial_state<GaussianHeller>(const RunConfig& cfg) {
    return cfg.initial;
}

template <>
inline GaussianHagedorn initial_state<GaussianHagedorn>(const RunConfig& cfg) {
    return *cfg.initial_hagedorn;
}

template <class State>
Summary run_typed(const RunConfig& cfg, const fs::path& out_dir) {
    const auto start = std::chrono::steady_clock::now();
    const Propagator<State> prop(cfg.make_method(), cfg.scheme);
    const State s0 = initial_state<State>(cfg);
    const Trajectory<State> tr = propagate(s0, prop, {cfg.save_every, true, false});

    std::ostringstream csv;
    write_header(csv, trajectory_header(cfg.setup.dim(), cfg.hagedorn));
    Summary sum{std::string(to_string(cfg.method.id)), cfg.scheme.name(), cfg.scheme.dt, cfg.scheme.steps};
    const DiagnosticsRecord& d0 = tr.diagnostics.front();
    for (std::size_t i = 0; i < tr.states.size(); ++i) {
        const DiagnosticsRecord& d = tr.diagnostics[i];
        std::vector<double> row{tr.times[i]};
        const std::vector<double> cols = state_columns(tr.states[i]);
        row.insert(row.end(), cols.begin(), cols.end());
        row.insert(row.end(), {d.norm, d.E, d.E_eff});
        for (double v : row)
            if (!std::isfinite(v)) throw NumericalFailure("non-finite value in output row", i * cfg.save_every);
        write_row(csv, row);
        sum.norm_drift = std::max(sum.norm_drift, std::abs(d.norm - d0.norm));
        sum.E_drift = std::max(sum.E_drift, std::abs(d.E - d0.E));
        sum.E_eff_drift = std::max(sum.E_eff_drift, std::abs(d.E_eff - d0.E_eff));
    }
    if (cfg.reversibility) sum.reversibility_residual = reverse_roundtrip(s0, prop, cfg.scheme.steps);
    sum.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    open_output(out_dir / "trajectory.csv") << csv.str();
    write_json(out_dir / "summary.json", sum.to_json(cfg.bounds));
    return sum;
}

/// Writes trajectory.csv and summary.json; drifts are maxima over saved frames of |X(t) - X(0)|.
inline Summary run(const RunConfig& cfg, const fs::path& out_dir) {
    return cfg.hagedorn ? run_typed<GaussianHagedorn>(cfg, out_dir) : run_typed<GaussianHeller>(cfg, out_dir);
}

/// Forward then backward integration; the residual goes to summary.json.
inline Summary reverse(const RunConfig& cfg, const fs::path& out_dir) {
    const auto start = std::chrono::steady_clock::now();
    Summary sum{std::string(to_string(cfg.method.id)), cfg.scheme.name(), cfg.scheme.dt, cfg.scheme.steps};
    try {
        if (cfg.hagedorn)
            sum.reversibility_residual = reverse_roundtrip(*cfg.initial_hagedorn,
                                                           Propagator<GaussianHagedorn>(cfg.make_method(), cfg.scheme),
                                                           cfg.scheme.steps);
        else
            sum.reversibility_residual =
                reverse_roundtrip(cfg.initial, Propagator<GaussianHeller>(cfg.make_method(), cfg.scheme), cfg.scheme.steps);
    } catch (const NumericalFailure&) {
        throw;
    } catch (const Error& e) {
        if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UnsupportedError*>(&e)) throw;
        throw NumericalFailure(e.what(), 0);
    }
    sum.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    fs::create_directories(out_dir);
    write_json(out_dir / "summary.json", sum.to_json());
    return sum;
}

/// Least-squares slope of log(error) against log(dt).
inline double fitted_slope(const std::vector<double>& dt, const std::vector<double>& err) {
    double mx = 0, my = 0;
    const auto n = static_cast<double>(dt.size());
    for (std::size_t i = 0; i < dt.size(); ++i) mx += std::log(dt[i]) / n, my += std::log(err[i]) / n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < dt.size(); ++i) {
        sxy += (std::log(dt[i]) - mx) * (std::log(err[i]) - my);
        sxx += (std::log(dt[i]) - mx) * (std::log(dt[i]) - mx);
    }
    return sxy / sxx;
}

inline unsigned worker_count(std::size_t jobs) {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("GWPD_THREADS")) {
        try {
            n = static_cast<unsigned>(std::max(1, std::stoi(env)));
        } catch (const std::exception&) {
            throw ConfigError("GWPD_THREADS must be a positive integer");
        }
    }
    return static_cast<unsigned>(std::min<std::size_t>(n, jobs));
}

struct ConvergenceRow {
    double dt;
    double error;
};

struct ConvergenceResult {
    std::vector<ConvergenceRow> rows;
    double slope = 0.0;
    bool analytic_reference = false;
};

template <class State>
State final_state(const RunConfig& cfg, double dt, std::size_t steps) {
    SchemeSpec spec = cfg.scheme;
    spec.dt = dt;
    spec.steps = steps;
    const Propagator<State> prop(cfg.make_method(), spec);
    State s = initial_state<State>(cfg);
    for (std::size_t n = 1; n <= steps; ++n) {
        try {
            s = prop.step(s);
        } catch (const Error& e) {
            throw NumericalFailure(e.what(), n);
        }
    }
    return s;
}

template <class State>
ConvergenceResult converge_typed(const RunConfig& cfg, std::vector<double> dts) {
    const double T = cfg.scheme.dt * static_cast<double>(cfg.scheme.steps);
    if (T <= 0.0) throw ConfigError("converge needs steps > 0");
    auto steps_for = [&](double dt) {
        if (!(dt > 0.0)) throw ConfigError("dt values must be positive");
        const double n = T / dt;
        if (std::abs(n - std::round(n)) > 1e-9 * n) throw ConfigError("dt " + fmt(dt) + " does not divide t = " + fmt(T));
        return static_cast<std::size_t>(std::llround(n));
    };
    for (double dt : dts) steps_for(dt);

    ConvergenceResult res;
    std::optional<State> reference;
    const HarmonicParams* h = cfg.model.harmonic_params();
    if (h && !is_frozen(cfg.method.id)) {
        reference = harmonic_exact(initial_state<State>(cfg), *h, cfg.setup, T);
        res.analytic_reference = true;
    }

    std::vector<double> jobs = dts;
    const double dt_ref = *std::min_element(dts.begin(), dts.end()) / 16.0;
    if (!reference) jobs.push_back(dt_ref);
    std::vector<std::optional<State>> finals(jobs.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::future<void>> workers;
    for (unsigned w = 0; w < worker_count(jobs.size()); ++w)
        workers.push_back(std::async(std::launch::async, [&] {
            for (std::size_t i; (i = next++) < jobs.size();)
                finals[i] = final_state<State>(cfg, jobs[i], steps_for(jobs[i]));
        }));
    for (auto& f : workers) f.get();
    if (!reference) reference = *finals.back();

    std::vector<double> errs;
    for (std::size_t i = 0; i < dts.size(); ++i) {
        errs.push_back(parameter_distance(*finals[i], *reference));
        res.rows.push_back({dts[i], errs.back()});
    }
    res.slope = dts.size() >= 2 ? fitted_slope(dts, errs) : std::nan("");
    return res;
}

/// Runs the same physics (t = dt * steps from the config) at each dt and writes convergence.csv.
inline ConvergenceResult converge(const RunConfig& cfg, const std::vector<double>& dts, const fs::path& out_dir) {
    if (dts.empty()) throw ConfigError("--dt-list is empty");
    ConvergenceResult res =
        cfg.hagedorn ? converge_typed<GaussianHagedorn>(cfg, dts) : converge_typed<GaussianHeller>(cfg, dts);
    std::ofstream out = open_output(out_dir / "convergence.csv");
    out << "dt,error,fitted_slope\n";
    for (const ConvergenceRow& r : res.rows) write_row(out, {r.dt, r.error, res.slope});
    return res;
}

inline GridSpec grid_spec(const RunConfig& cfg, const std::vector<GaussianHeller>& frames) {
    const int d = cfg.setup.dim();
    GridSpec g;
    g.dt = cfg.scheme.dt / cfg.grid.substeps;
    g.steps = cfg.scheme.steps * static_cast<std::size_t>(cfg.grid.substeps);
    g.save_every = cfg.save_every * static_cast<std::size_t>(cfg.grid.substeps);
    // default box: span of the centers padded by eight widths
    Vec lo = Vec::Constant(d, std::numeric_limits<double>::infinity()), hi = -lo;
    double width = 0.0;
    for (const GaussianHeller& s : frames) {
        lo = lo.cwiseMin(s.q);
        hi = hi.cwiseMax(s.q);
        width = std::max(width, std::sqrt(position_covariance(s, cfg.setup).diagonal().maxCoeff()));
    }
    const std::vector<double> def_lo(lo.data(), lo.data() + d), def_hi(hi.data(), hi.data() + d);
    auto pick = [&](const std::vector<double>& given, const std::vector<double>& fallback, double pad) {
        std::vector<double> v;
        for (int i = 0; i < d; ++i)
            v.push_back(given.empty()                  ? fallback[static_cast<std::size_t>(i)] + pad
                        : given.size() == 1            ? given[0]
                        : given.size() == std::size_t(d) ? given[static_cast<std::size_t>(i)]
                                                       : throw ConfigError("[grid] bounds need 1 or dim entries"));
        return v;
    };
    g.lower = pick(cfg.grid.lower, def_lo, -8.0 * width);
    g.upper = pick(cfg.grid.upper, def_hi, 8.0 * width);
    if (cfg.grid.points.empty()) g.points.assign(static_cast<std::size_t>(d), d == 1 ? 512 : 128);
    else if (cfg.grid.points.size() == 1) g.points.assign(static_cast<std::size_t>(d), cfg.grid.points[0]);
    else g.points = cfg.grid.points;
    if (g.points.size() != static_cast<std::size_t>(d)) throw ConfigError("[grid] points need 1 or dim entries");
    g.validate();
    return g;
}

template <class State>
std::vector<double> compare_grid_typed(const RunConfig& cfg, const fs::path& out_dir) {
    const Propagator<State> prop(cfg.make_method(), cfg.scheme);
    const Trajectory<State> tr = propagate(initial_state<State>(cfg), prop, {cfg.save_every, false, false});
    std::vector<GaussianHeller> hellers;
    for (const State& s : tr.states) hellers.push_back(as_heller(s, cfg.setup));
    const GridSpec g = grid_spec(cfg, hellers);
    const GridPropagator grid(cfg.model, g, cfg.setup);
    std::vector<GridField> gauss;
    for (const GaussianHeller& s : hellers) gauss.push_back(sample_gaussian_on_grid(s, g, cfg.setup));
    const std::vector<GridField> frames = grid.propagate(gauss.front());
    const std::vector<double> f = fidelity(gauss, frames, g);

    std::ofstream out = open_output(out_dir / "fidelity.csv");
    out << "t,fidelity\n";
    for (std::size_t i = 0; i < f.size(); ++i) write_row(out, {tr.times[i], f[i]});
    if (cfg.grid.frames) {
        std::ofstream dump = open_output(out_dir / "grid_frames.csv");
        dump << (cfg.setup.dim() == 1 ? "t,x,grid_density,gaussian_density\n" : "t,x,y,grid_density,gaussian_density\n");
        for (std::size_t i = 0; i < frames.size(); ++i)
            for (std::size_t k = 0; k < g.size(); ++k) {
                std::vector<double> row{tr.times[i]};
                const Vec x = g.node(k);
                row.insert(row.end(), x.data(), x.data() + x.size());
                row.insert(row.end(), {std::norm(frames[i][k]), std::norm(gauss[i][k])});
                write_row(dump, row);
            }
    }
    return f;
}

/// Gaussian run plus split-operator oracle on a grid; writes fidelity.csv (and grid_frames.csv on request).
inline std::vector<double> compare_grid(const RunConfig& cfg, const fs::path& out_dir) {
    return cfg.hagedorn ? compare_grid_typed<GaussianHagedorn>(cfg, out_dir)
                        : compare_grid_typed<GaussianHeller>(cfg, out_dir);
}

inline void list_methods(std::ostream& out) {
    out << "id,family,reference\n";
    for (MethodId id : all_methods)
        out << to_string(id) << ',' << (is_frozen(id) ? "frozen" : "thawed") << ','
            << (uses_reference(id) ? "yes" : "no") << '\n';
}

/// Rebuilds (V0, V1, V2) for every row of a trajectory.csv; reads q and Im A (or Q in Hagedorn files).
inline void emit_coefficients(const RunConfig& cfg, std::istream& csv, std::ostream& out) {
    const int d = cfg.setup.dim();
    std::string line;
    if (!std::getline(csv, line)) throw ConfigError("trajectory file is empty");
    std::vector<std::string> header;
    boost::algorithm::split(header, line, boost::algorithm::is_any_of(","));
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i) col[boost::algorithm::trim_copy(header[i])] = i;
    const bool hag = col.count("S") > 0;
    auto need = [&](const std::string& name) {
        const auto it = col.find(name);
        if (it == col.end()) throw ConfigError("trajectory file lacks column " + name);
        return it->second;
    };
    const Method method = cfg.make_method();

    std::vector<std::string> h{"t", "V0"};
    for (int i = 0; i < d; ++i) h.push_back("V1_" + std::to_string(i));
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) h.push_back("V2_" + std::to_string(i) + std::to_string(j));
    write_header(out, h);
    while (std::getline(csv, line)) {
        if (boost::algorithm::trim_copy(line).empty()) continue;
        const std::vector<double> v = detail::parse_list("trajectory row", line);
        if (v.size() != header.size()) throw ConfigError("trajectory row has the wrong number of fields");
        Vec q(d);
        for (int i = 0; i < d; ++i) q(i) = v[need("q_" + std::to_string(i))];
        Mat B(d, d);
        if (hag) {
            CMat Q(d, d);
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) {
                    const std::string ij = std::to_string(i) + std::to_string(j);
                    Q(i, j) = cplx(v[need("ReQ_" + ij)], v[need("ImQ_" + ij)]);
                }
            B = symmetrize(Mat((Q * Q.adjoint()).real().inverse()));
        } else {
            for (int i = 0; i < d; ++i)
                for (int j = i; j < d; ++j) B(i, j) = B(j, i) = v[need("ImA_" + std::to_string(i) + std::to_string(j))];
        }
        const EffectiveCoefficients c = method(q, B);
        std::vector<double> row{v[need("t")], c.V0};
        row.insert(row.end(), c.V1.data(), c.V1.data() + d);
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) row.push_back(c.V2(i, j));
        write_row(out, row);
    }
}

} // namespace gwpd::cli
