#pragma once

// Experiment plumbing behind the bottdeg command-line tool: configuration,
// the named map registry and the four commands. Commands return their
// outputs as strings; writing them is a separate step, so the same config
// and seed always give byte-identical files.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "bottdeg/approx.hpp"
#include "bottdeg/bott.hpp"
#include "bottdeg/degree.hpp"
#include "bottdeg/error.hpp"
#include "bottdeg/euclid.hpp"
#include "bottdeg/maps.hpp"

namespace bottdeg::cli {

inline constexpr const char* kToolName = "bottdeg";
inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutDirEnv = "BOTTDEG_OUT_DIR";

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kBoundaryHit = 2, kDisagreement = 3, kUsage = 64 };

/// Raised for malformed configuration; maps to kUsage.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Value parsing

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) out.push_back(trim(item));
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': not a number: '" + v + "'");
    }
}

inline long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long i = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': not an integer: '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "': not a boolean: '" + v + "'");
}

/// Shortest decimal that reads back to the same double.
inline std::string format_double(double d) {
    std::ostringstream os;
    for (int p = 1; p <= 17; ++p) {
        os.str("");
        os << std::setprecision(p) << d;
        if (std::stod(os.str()) == d) break;
    }
    return os.str();
}

inline std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

inline std::string join_doubles(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
    return s;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

// ---------------------------------------------------------------------------
// Configuration

/// Every key of the flat config format. Unset optional values fall back to
/// command-specific defaults.
struct ExperimentConfig {
    std::string command;
    std::string map;
    std::optional<double> radius;
    std::vector<double> target;
    std::string method;  // empty: the command default
    std::optional<double> tol;
    std::optional<int> grid;
    std::uint64_t seed = 1;
    std::string out;
    int l = 2;
    std::vector<int> n;
    int order = 1;
    int kmax = 8;
    std::string matrix;
    bool frozen = false;
    bool with_c = true;
    double delta0 = 0.05;
    int samples = 2000;

    static const std::vector<std::string>& keys() {
        static const std::vector<std::string> k{"delta0", "frozen", "grid",  "kmax",   "l",       "map",
                                                "matrix", "method", "n",     "order",  "out",     "radius",
                                                "samples", "seed",  "target", "tol",   "with_c"};
        return k;
    }

    void set(const std::string& key, const std::string& raw) {
        const std::string v = trim(raw);
        if (key == "map") map = v;
        else if (key == "radius") radius = v.empty() ? std::nullopt : std::optional(parse_double(key, v));
        else if (key == "target") {
            target.clear();
            if (!v.empty())
                for (const auto& s : split(v, ',')) target.push_back(parse_double(key, s));
        } else if (key == "method") {
            if (!v.empty() && v != "root" && v != "winding" && v != "homotopy" && v != "all")
                throw ConfigError("key 'method': expected root, winding, homotopy or all, got '" + v + "'");
            method = v;
        } else if (key == "tol") tol = v.empty() ? std::nullopt : std::optional(parse_double(key, v));
        else if (key == "grid") grid = v.empty() ? std::nullopt : std::optional(static_cast<int>(parse_int(key, v)));
        else if (key == "seed") {
            const long long s = parse_int(key, v);
            if (s < 0) throw ConfigError("key 'seed': must be non-negative");
            seed = static_cast<std::uint64_t>(s);
        } else if (key == "out") out = v;
        else if (key == "l") l = static_cast<int>(parse_int(key, v));
        else if (key == "n") {
            n.clear();
            if (!v.empty())
                for (const auto& s : split(v, ',')) n.push_back(static_cast<int>(parse_int(key, s)));
        } else if (key == "order") order = static_cast<int>(parse_int(key, v));
        else if (key == "kmax") kmax = static_cast<int>(parse_int(key, v));
        else if (key == "matrix") matrix = v;
        else if (key == "frozen") frozen = parse_bool(key, v);
        else if (key == "with_c") with_c = parse_bool(key, v);
        else if (key == "delta0") delta0 = parse_double(key, v);
        else if (key == "samples") samples = static_cast<int>(parse_int(key, v));
        else throw ConfigError("unknown config key '" + key + "'");
    }

    /// Value of a key as text; unset optionals are empty, and an empty value
    /// given to set() unsets them again.
    std::string get(const std::string& key) const {
        if (key == "map") return map;
        if (key == "radius") return radius ? format_double(*radius) : "";
        if (key == "target") return join_doubles(target);
        if (key == "method") return method;
        if (key == "tol") return tol ? format_double(*tol) : "";
        if (key == "grid") return grid ? std::to_string(*grid) : "";
        if (key == "seed") return std::to_string(seed);
        if (key == "out") return out;
        if (key == "l") return std::to_string(l);
        if (key == "n") return join_ints(n);
        if (key == "order") return std::to_string(order);
        if (key == "kmax") return std::to_string(kmax);
        if (key == "matrix") return matrix;
        if (key == "frozen") return frozen ? "true" : "false";
        if (key == "with_c") return with_c ? "true" : "false";
        if (key == "delta0") return format_double(delta0);
        if (key == "samples") return std::to_string(samples);
        throw ConfigError("unknown config key '" + key + "'");
    }

    /// Sorted key=value lines; the output location is not part of the experiment.
    std::string canonical() const {
        std::string s = "command=" + command + "\n";
        for (const auto& k : keys())
            if (k != "out") s += k + "=" + get(k) + "\n";
        return s;
    }

    std::string hash() const { return hex64(fnv1a64(canonical())); }

    nlohmann::json to_json() const {
        nlohmann::json j = {{"command", command}};
        for (const auto& k : keys())
            if (k != "out") j[k] = get(k);
        return j;
    }
};

/// Flat `key = value` text; `#` starts a comment. Unknown keys are rejected.
inline void apply_config_text(ExperimentConfig& c, const std::string& text) {
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
}

inline void apply_config_file(ExperimentConfig& c, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_text(c, ss.str());
}

/// `--out`, then the environment variable, then the working directory.
inline std::filesystem::path output_dir(const ExperimentConfig& c) {
    if (!c.out.empty()) return c.out;
    if (const char* e = std::getenv(kOutDirEnv); e && *e) return e;
    return ".";
}

// ---------------------------------------------------------------------------
// Results and atomic output

struct CommandResult {
    int exit_code = kOk;
    std::string summary;
    std::vector<std::pair<std::string, std::string>> files;  // name, contents
};

/// Writes every file to `dir` through a temporary and a rename.
inline void write_outputs(const CommandResult& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, body] : r.files) {
        const auto final_path = dir / name;
        const auto tmp = dir / (name + ".tmp");
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw std::runtime_error("cannot write " + tmp.string());
            out << body;
            if (!out.flush()) throw std::runtime_error("write failed for " + tmp.string());
        }
        std::filesystem::rename(tmp, final_path);
    }
}

inline nlohmann::json provenance(const ExperimentConfig& c) {
    return {{"tool", kToolName}, {"version", kVersion}, {"config_hash", c.hash()}, {"seed", c.seed},
            {"config", c.to_json()}};
}

inline std::string csv_preamble(const ExperimentConfig& c) {
    return std::string("# ") + kToolName + " " + kVersion + " command=" + c.command + " config_hash=" + c.hash() +
           " seed=" + std::to_string(c.seed) + "\n";
}

inline std::string csv_num(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

// ---------------------------------------------------------------------------
// Map registry

inline MatrixXd parse_matrix(const std::string& s) {
    if (s.empty()) throw ConfigError("map 'linear' needs matrix = a,b;c,d");
    std::vector<std::vector<double>> rows;
    for (const auto& r : split(s, ';')) {
        rows.emplace_back();
        for (const auto& e : split(r, ',')) rows.back().push_back(parse_double("matrix", e));
    }
    const auto n = rows.size();
    MatrixXd m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != n) throw ConfigError("key 'matrix': must be square");
        for (std::size_t j = 0; j < n; ++j) m(Eigen::Index(i), Eigen::Index(j)) = rows[i][j];
    }
    return m;
}

/// A registered instance: the map, a default ball and an optional homotopy
/// to an invertible linear map.
struct MapInstance {
    ProperNonlinearMap f;
    double default_radius = 3.0;
    std::optional<HomotopyPlan> plan;
};

inline int first_n(const ExperimentConfig& c, int fallback) { return c.n.empty() ? fallback : c.n.front(); }

inline MapInstance make_instance(const ExperimentConfig& c) {
    const auto cyclic_plan = [](int dim) {
        return HomotopyPlan{cyclic_involution_homotopy(dim), LinearMap(cyclic_permutation(dim))};
    };
    if (c.l < 1) throw ConfigError("key 'l' must be at least 1");
    if (c.map == "cubic2") return {cubic2(), 3.0, cyclic_plan(2)};
    if (c.map == "square2") return {square2(), 3.0, std::nullopt};
    if (c.map == "cyclic") return {cyclic_map(c.l), std::sqrt(double(c.l)) + 1.0, cyclic_plan(c.l)};
    if (c.map == "zwindow") {
        const int d = 2 * c.l + 1;
        return {zwindow_map(c.l), std::sqrt(double(d)) + 1.0, cyclic_plan(d)};
    }
    if (c.map == "identity") {
        auto f = identity_map(c.l);
        return {f, 1.0, HomotopyPlan{constant_homotopy(f), LinearMap::identity(c.l)}};
    }
    if (c.map == "linear") {
        const LinearMap l(parse_matrix(c.matrix));
        auto f = linear_proper_map(l);
        return {f, 1.0, HomotopyPlan{constant_homotopy(f), l}};
    }
    if (c.map == "sobolev") {
        const SobolevModel m{c.l, c.order, first_n(c, 1), 1.0};
        return {m.map(c.with_c), 1.25 * sobolev_zero_bound(m) + 1.0,
                HomotopyPlan{sobolev_involution_homotopy(m), m.block_shift()}};
    }
    throw ConfigError("unknown map '" + c.map +
                      "' (known: cubic2, square2, cyclic, zwindow, identity, linear, sobolev)");
}

// ---------------------------------------------------------------------------
// degree

inline CommandResult cmd_degree(const ExperimentConfig& c) {
    const MapInstance inst = make_instance(c);
    const ProperNonlinearMap& f = inst.f;
    const double radius = c.radius.value_or(inst.default_radius);
    VectorXd y = VectorXd::Zero(f.dim_target);
    if (!c.target.empty()) {
        if (int(c.target.size()) != f.dim_target)
            throw ConfigError("key 'target' has " + std::to_string(c.target.size()) + " entries, map needs " +
                              std::to_string(f.dim_target));
        y = Eigen::Map<const VectorXd>(c.target.data(), Eigen::Index(c.target.size()));
    }

    RootCountOptions ro;
    ro.seed = c.seed;
    if (c.tol) ro.residual_tol = *c.tol;
    if (c.grid) ro.seeds_per_axis = *c.grid;
    HomotopyOptions ho;
    ho.seed = c.seed;
    WindingOptions wo;

    const std::string method = c.method.empty() ? "root" : c.method;
    std::vector<std::string> methods;
    if (method == "all") {
        if (f.dim_source <= ro.max_dim) methods.push_back("root");
        if (f.dim_source == 2) methods.push_back("winding");
        if (inst.plan) methods.push_back("homotopy");
    } else {
        methods.push_back(method);
    }

    nlohmann::json out = provenance(c);
    out["map"] = f.descriptor();
    out["radius"] = radius;
    out["certificates"] = nlohmann::json::array();
    CommandResult res;
    std::vector<int> degrees;
    try {
        for (const auto& m : methods) {
            DegreeCertificate cert;
            if (m == "root") cert = degree_root_count(f, radius, y, ro);
            else if (m == "winding") cert = degree_winding_2d(f, radius, y, wo);
            else {
                if (!inst.plan)
                    throw Error(ErrorKind::InvalidArgument,
                                "no homotopy to a linear map is registered for '" + c.map + "'");
                cert = degree_homotopy_linear(inst.plan->family, inst.plan->reference, radius, y, ho);
            }
            degrees.push_back(cert.degree);
            out["certificates"].push_back(to_json(cert));
        }
    } catch (const BoundaryHitError& e) {
        out["error"] = e.to_json();
        res.exit_code = kBoundaryHit;
        res.summary = "degree " + c.map + ": boundary hit (" + std::string(e.what()) + ")";
        res.files.emplace_back("degree.json", out.dump(2) + "\n");
        return res;
    } catch (const Error& e) {
        out["error"] = {{"error", std::string(to_string(e.kind()))}, {"message", e.what()}};
        res.exit_code = e.kind() == ErrorKind::BoundaryHit ? kBoundaryHit : kCheckFailed;
        res.summary = "degree " + c.map + ": " + std::string(to_string(e.kind())) + " (" + e.what() + ")";
        res.files.emplace_back("degree.json", out.dump(2) + "\n");
        return res;
    }

    const bool agree = std::adjacent_find(degrees.begin(), degrees.end(), std::not_equal_to<>()) == degrees.end();
    out["agree"] = agree;
    out["degree"] = agree ? nlohmann::json(degrees.front()) : nlohmann::json(nullptr);
    std::string list;
    for (std::size_t i = 0; i < methods.size(); ++i)
        list += (i ? ", " : "") + methods[i] + " " + std::to_string(degrees[i]);
    if (agree) {
        res.summary = "degree " + c.map + " = " + std::to_string(degrees.front()) + " on radius " +
                      format_double(radius) + " (" + list + ")";
    } else {
        res.exit_code = kDisagreement;
        res.summary = "degree " + c.map + ": methods disagree (" + list + ")";
    }
    res.files.emplace_back("degree.json", out.dump(2) + "\n");
    return res;
}

// ---------------------------------------------------------------------------
// approximate

inline CommandResult cmd_approximate(const ExperimentConfig& c) {
    if (!c.map.empty() && c.map != "sobolev")
        throw ConfigError("approximate runs the Sobolev model; set map = sobolev or leave it unset");
    const std::vector<int> ns = c.n.empty() ? std::vector<int>{1, 2, 3} : c.n;
    const double eq_tol = c.tol.value_or(1e-9);
    const double net_r = c.radius.value_or(1.0);
    constexpr double kSlack = 0.01;

    SobolevStageOptions so;
    so.kmax = c.kmax;
    so.with_c = c.with_c;
    so.radii.seed = static_cast<unsigned>(c.seed);
    std::vector<ApproximationStage> stages;
    if (c.frozen) {
        const std::vector<int> first{ns.front()};
        const auto one = sobolev_model_stages(c.l, c.order, first, so);
        for (std::size_t i = 0; i < ns.size(); ++i) {
            stages.push_back(one.front());
            stages.back().index = int(i);
        }
        assign_radii(stages, so.radii);
    } else {
        stages = sobolev_model_stages(c.l, c.order, ns, so);
    }
    const SobolevModel model{c.l, c.order, c.kmax, 1.0};
    const ProperNonlinearMap f = model.map(c.with_c);

    FinApproProbe probe;
    probe.seed = static_cast<unsigned>(c.seed);
    const FinApproReport rep = check_fin_appro(stages, f, probe);

    const unsigned s = static_cast<unsigned>(c.seed);
    const NetSubspace net = build_net_subspace(f, net_r, c.delta0, {c.samples, s, false});
    const double proj = projection_error(f, net.W, net_r, {200, s + 1000, false});
    const bool proj_ok = proj <= c.delta0 + kSlack;

    const auto eq = equivariance_defect(stages, ShiftAction::cyclic_blocks(model), {60, s, false});
    const bool eq_ok = std::all_of(eq.begin(), eq.end(), [&](double v) { return v <= eq_tol; });
    const auto tail = strong_tail_profile(stages, f, {100, s, false});

    std::string csv = csv_preamble(c) + "profile,i,j,value\n";
    const auto row = [&csv](const std::string& p, const std::string& i, const std::string& j, double v) {
        csv += p + "," + i + "," + j + "," + csv_num(v) + "\n";
    };
    for (std::size_t i = 0; i < stages.size(); ++i) {
        row("dim", std::to_string(i), "", stages[i].dim());
        row("r", std::to_string(i), "", stages[i].r);
        row("s", std::to_string(i), "", stages[i].s);
    }
    for (std::size_t i = 0; i < rep.density.size(); ++i) row("density", std::to_string(i), "", rep.density[i]);
    for (std::size_t i = 0; i < rep.ball_margin.size(); ++i)
        row("ball_margin", std::to_string(i), "", rep.ball_margin[i]);
    for (std::size_t i0 = 0; i0 < rep.convergence.size(); ++i0)
        for (std::size_t k = 0; k < rep.convergence[i0].size(); ++k)
            row("convergence", std::to_string(i0), std::to_string(i0 + k), rep.convergence[i0][k]);
    for (std::size_t i = 0; i < rep.unitarity_tail.size(); ++i)
        row("unitarity_tail", std::to_string(i), "", rep.unitarity_tail[i]);
    for (std::size_t i0 = 0; i0 < rep.linear_gap.size(); ++i0)
        for (std::size_t k = 0; k < rep.linear_gap[i0].size(); ++k)
            row("linear_gap", std::to_string(i0), std::to_string(i0 + k), rep.linear_gap[i0][k]);
    row("norm_ratio", "", "", rep.norm_ratio);
    row("net_size", "", "", double(net.net.size()));
    row("net_dim", "", "", net.W.dim());
    row("net_coverage", "", "", net.coverage);
    row("projection_error", "", "", proj);
    for (std::size_t i = 0; i < eq.size(); ++i) row("equivariance", std::to_string(i), "", eq[i]);
    // Reported only: along radii with r_{i+1} > √2 r_i the tail grows like r^3.
    for (std::size_t i = 0; i < tail.size(); ++i) row("strong_tail", std::to_string(i), "", tail[i]);

    const std::vector<std::pair<std::string, bool>> checks{{"density", rep.density_ok},
                                                           {"ball", rep.ball_ok},
                                                           {"convergence", rep.convergence_ok},
                                                           {"unitarity", rep.unitarity_ok},
                                                           {"projection_error", proj_ok},
                                                           {"equivariance", eq_ok}};
    bool all = true;
    std::string failed;
    for (const auto& [name, ok] : checks) {
        row("check_" + name, "", "", ok ? 1.0 : 0.0);
        if (!ok) failed += (failed.empty() ? "" : ", ") + name;
        all = all && ok;
    }

    CommandResult res;
    res.exit_code = all ? kOk : kCheckFailed;
    res.summary = "approximate sobolev l=" + std::to_string(c.l) + " n=" + join_ints(ns) +
                  (c.frozen ? " (frozen)" : "") + ": " + (all ? "all checks pass" : "failed: " + failed);
    res.files.emplace_back("approximate.csv", csv);
    return res;
}

// ---------------------------------------------------------------------------
// bott

namespace detail {

inline int even_at_least(double v) {
    const int k = int(std::ceil(v));
    return k % 2 ? k + 1 : k;
}

/// Coordinate stages W_i = span(e_1..e_i), i = 0..m, all carrying l.
inline std::vector<ApproximationStage> coordinate_stages(const ProperNonlinearMap& f) {
    std::vector<ApproximationStage> out;
    for (int i = 0; i <= f.dim_source; ++i) {
        ApproximationStage s;
        s.index = i;
        s.W_source = Subspace::leading(f.dim_source, i);
        s.W_target = s.W_source;
        s.F = f;
        s.l = f.linear_part;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace detail

inline CommandResult cmd_bott(const ExperimentConfig& c) {
    ExperimentConfig cc = c;
    if (cc.map.empty()) cc.map = "identity";
    const MapInstance inst = make_instance(cc);
    const ProperNonlinearMap& f = inst.f;
    const int m = f.dim_source;
    if (m < 1 || m > 3 || f.dim_target != m)
        throw ConfigError("bott runs on square maps of dimension 1 to 3");
    const double tol = c.tol.value_or(0.05);
    const int g = c.grid.value_or(24);
    if (g < 4) throw ConfigError("key 'grid' must be at least 4");

    // Odd node counts put the origin on the source grid; even target counts
    // put a cell midpoint there.
    const TensorGrid source = TensorGrid::spectral(3.0, 31, m, 1.0, 41);
    double reach = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) reach = std::max(reach, f(source.point(i).v).lpNorm<Eigen::Infinity>());
    const double vr = 1.25 * std::max(reach, 1e-3);
    const bool same_grid = cc.map == "identity";
    const auto target_grid = [&](int level) {
        if (same_grid) return source;
        const int nx = detail::even_at_least(g * level);
        return TensorGrid::spectral(3.0, nx, m, vr, detail::even_at_least(g * level * 5.0 / 3.0));
    };

    std::string csv = csv_preamble(cc) + "kind,function,level,value,tolerance\n";
    bool pullback_ok = true;
    double worst_fine = 0.0;
    for (const auto& tf : gaussian_test_functions()) {
        double prev = 0.0;
        for (int level : {1, 2}) {
            const SampledSection beta = bott_element(tf.f, target_grid(level));
            const double resid = sup_distance(pullback(f, beta, source), bott_element(tf.f, f, source));
            const double gtol = beta.interpolation_tolerance();
            csv += "pullback_residual," + tf.name + "," + std::to_string(level) + "," + csv_num(resid) + "," +
                   csv_num(10.0 * gtol) + "\n";
            pullback_ok = pullback_ok && resid <= 10.0 * gtol + 1e-9;
            if (level == 2) {
                pullback_ok = pullback_ok && (resid <= prev || resid <= 1e-9);
                worst_fine = std::max(worst_fine, resid);
            }
            prev = resid;
        }
    }

    const auto stages = detail::coordinate_stages(f);
    const auto fns = default_test_functions();
    double worst_def = 0.0;
    for (int a = 0; a + 1 < int(stages.size()); ++a) {
        const int b = a + 1;
        const int cix = std::min(a + 2, int(stages.size()) - 1);
        const auto d = asymptotic_commutativity_defect(stages, fns, a, b, cix);
        csv += "commutativity,stages " + std::to_string(a) + "/" + std::to_string(b) + "/" + std::to_string(cix) +
               ",," + csv_num(d.against_standard) + "," + csv_num(tol) + "\n";
        worst_def = std::max(worst_def, d.against_standard);
    }
    const bool def_ok = worst_def <= tol;

    CommandResult res;
    res.exit_code = pullback_ok && def_ok ? kOk : kCheckFailed;
    res.summary = "bott " + cc.map + ": pullback residual " + csv_num(worst_fine) +
                  (pullback_ok ? " within" : " outside") + " grid tolerance; commutativity defect " +
                  csv_num(worst_def) + (def_ok ? " <= " : " > ") + format_double(tol);
    res.files.emplace_back("bott.csv", csv);
    return res;
}

// ---------------------------------------------------------------------------
// stabilize

namespace detail {

inline std::vector<ApproximationStage> identity_stages(std::span<const int> dims) {
    const int n = *std::max_element(dims.begin(), dims.end());
    std::vector<ApproximationStage> out;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        ApproximationStage s;
        s.index = int(i);
        s.W_source = Subspace::leading(n, dims[i]);
        s.W_target = s.W_source;
        s.F = identity_map(n);
        s.l = LinearMap::identity(n);
        s.r = 1.0;
        s.s = 0.5;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace detail

inline CommandResult cmd_stabilize(const ExperimentConfig& c) {
    const std::string map = c.map.empty() ? "sobolev" : c.map;
    std::vector<ApproximationStage> stages;
    std::function<StabilizationOptions(DegreeMethod)> options;
    if (map == "sobolev") {
        const std::vector<int> ns = c.n.empty() ? std::vector<int>{1, 2} : c.n;
        SobolevStageOptions so;
        so.kmax = c.kmax;
        so.radii.seed = static_cast<unsigned>(c.seed);
        stages = sobolev_model_stages(c.l, c.order, ns, so);
        options = [&c](DegreeMethod m) { return sobolev_stabilization_options(c.l, c.order, m); };
    } else if (map == "cyclic" || map == "zwindow") {
        const std::vector<int> ls = c.n.empty() ? std::vector<int>{1, 2, 3, 4} : c.n;
        stages = map == "cyclic" ? cyclic_model_stages(ls)
                                 : window_model_stages(*std::max_element(ls.begin(), ls.end()), ls);
        options = [](DegreeMethod m) { return cyclic_stabilization_options(m); };
    } else if (map == "identity") {
        const std::vector<int> ds = c.n.empty() ? std::vector<int>{1, 2, 3, 4} : c.n;
        stages = detail::identity_stages(ds);
        options = [](DegreeMethod m) {
            StabilizationOptions o;
            o.method = [m](const ApproximationStage&) { return m; };
            o.homotopy = [](const ApproximationStage& st) {
                return HomotopyPlan{constant_homotopy(identity_map(st.dim())), LinearMap::identity(st.dim())};
            };
            return o;
        };
    } else {
        throw ConfigError("stabilize knows the instances sobolev, cyclic, zwindow and identity, not '" + map + "'");
    }

    const std::string method = c.method.empty() ? "homotopy" : c.method;
    std::vector<DegreeMethod> methods;
    if (method == "homotopy" || method == "all") methods.push_back(DegreeMethod::Homotopy);
    if (method == "root" || method == "all") methods.push_back(DegreeMethod::RootCount);
    if (method == "winding") throw ConfigError("stabilize supports method root, homotopy or all");

    std::vector<StabilizationReport> reports;
    for (DegreeMethod m : methods) {
        StabilizationOptions o = options(m);
        o.root.seed = c.seed;
        o.homotopy_options.seed = c.seed;
        const VectorXd y = c.target.empty()
                               ? VectorXd::Zero(0)
                               : VectorXd(Eigen::Map<const VectorXd>(c.target.data(), Eigen::Index(c.target.size())));
        reports.push_back(degree_stabilization(stages, y, o));
    }

    std::string csv = csv_preamble(c) + "stage,dim,method,degree,radius,margin,failure\n";
    bool disagree = false;
    for (std::size_t k = 0; k < reports.size(); ++k)
        for (std::size_t i = 0; i < stages.size(); ++i) {
            const auto& sd = reports[k].stages[i];
            csv += std::to_string(i) + "," + std::to_string(stages[i].dim()) + "," + to_string(methods[k]) + ",";
            if (sd.certificate) {
                const auto& ev = sd.certificate->evidence;
                csv += std::to_string(sd.certificate->degree) + "," + csv_num(sd.certificate->ball_radius) + "," +
                       (ev.contains("margin") ? csv_num(ev.at("margin").get<double>()) : "") + ",\n";
                if (k > 0 && reports[0].stages[i].certificate &&
                    reports[0].stages[i].certificate->degree != sd.certificate->degree)
                    disagree = true;
            } else {
                std::string msg = sd.failure;
                std::replace(msg.begin(), msg.end(), ',', ';');
                std::replace(msg.begin(), msg.end(), '\n', ' ');
                csv += ",,," + msg + "\n";
            }
        }

    const auto& rep = reports.front();
    std::string seq;
    for (const auto& sd : rep.stages)
        seq += (seq.empty() ? "" : " ") + (sd.certificate ? std::to_string(sd.certificate->degree) : std::string("?"));
    CommandResult res;
    if (disagree) {
        res.exit_code = kDisagreement;
        res.summary = "stabilize " + map + ": methods disagree (" + seq + ")";
    } else if (rep.eventually_constant) {
        res.summary = "stabilize " + map + ": degrees " + seq + ", stable degree " + std::to_string(*rep.stable_degree);
    } else {
        res.exit_code = kCheckFailed;
        bool alternating = rep.stages.size() > 1;
        for (std::size_t i = 1; alternating && i < rep.stages.size(); ++i)
            alternating = rep.stages[i].certificate && rep.stages[i - 1].certificate &&
                          rep.stages[i].certificate->degree == -rep.stages[i - 1].certificate->degree &&
                          rep.stages[i].certificate->degree != 0;
        res.summary = "stabilize " + map + ": degrees " + seq + (alternating ? ", alternating" : "") +
                      ", not eventually constant";
    }
    res.files.emplace_back("stabilize.csv", csv);
    return res;
}

// ---------------------------------------------------------------------------
// Dispatch

inline CommandResult run_command(const ExperimentConfig& c) {
    if (c.command == "degree") {
        if (c.map.empty()) throw ConfigError("degree needs a map");
        return cmd_degree(c);
    }
    if (c.command == "approximate") return cmd_approximate(c);
    if (c.command == "bott") return cmd_bott(c);
    if (c.command == "stabilize") return cmd_stabilize(c);
    throw ConfigError("unknown command '" + c.command + "'");
}

}  // namespace bottdeg::cli
