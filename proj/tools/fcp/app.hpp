#pragma once

// Command implementations behind the `fcp` executable. Kept in a header so
// the test suite can drive the commands in-process.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fcp/diagnostics.hpp"
#include "fcp/io.hpp"
#include "fcp/lla.hpp"
#include "fcp/simulation.hpp"

namespace fcp::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

enum ExitCode { kSuccess = 0, kInputError = 1, kNumericalError = 2 };

// ---------------------------------------------------------------------------
// configuration keys

struct KeyInfo {
    const char* key;
    const char* default_value;
    const char* help;
};

inline const std::vector<KeyInfo>& known_keys() {
    static const std::vector<KeyInfo> keys = {
        {"experiment.model", "M1", "data model: M1 (linear), M2 (logistic), M3 (quantile), M4/M5 (precision)"},
        {"experiment.n", "auto", "training (and validation) sample size; auto picks the scale default"},
        {"experiment.p", "auto", "number of coefficients, or q for M4/M5; auto picks the scale default"},
        {"experiment.scale", "desk", "desk or full; sets automatic n, p and preset replication counts"},
        {"experiment.tau", "0.5", "quantile level for M3"},
        {"experiment.signal_scale", "1", "multiplier on the nonzero regression coefficients (M1-M3)"},
        {"experiment.reps", "auto", "replications; auto is 100 (simulate/diagnose), 20 desk / 100 full (reproduce)"},
        {"experiment.seed", "20240601", "master seed; replication r uses a stream derived from (seed, r)"},
        {"experiment.methods", "lasso,scad-2slla*",
         "comma list: lasso|glasso|clime|[g]<scad|mcp|hard>-[<k>s]lla<0|*>"},
        {"experiment.m5_nonzeros", "100", "nonzero off-diagonal entries of U in M5"},
        {"penalty.family", "scad", "folded concave family for fit/diagnose: scad, mcp or hard"},
        {"penalty.scad_a", "3.7", "SCAD concavity a (> 2)"},
        {"penalty.mcp_a", "2", "MCP concavity a (> 1)"},
        {"tuning.lambda_grid", "", "ascending comma list of lambda values; empty = automatic per problem"},
        {"tuning.grid_size", "50", "automatic grid: number of log-spaced values"},
        {"tuning.grid_ratio", "0.01", "automatic grid: smallest value as a fraction of lambda_max"},
        {"tuning.clime_grid", "", "ascending comma list of CLIME levels; empty = automatic"},
        {"tuning.clime_grid_size", "12", "automatic CLIME grid size"},
        {"tuning.clime_grid_min", "0.02", "automatic CLIME grid lower end"},
        {"tuning.clime_grid_max", "0.8", "automatic CLIME grid upper end"},
        {"solver.tol", "1e-8", "KKT residual target of the weighted l1 solvers"},
        {"solver.max_iter", "10000", "iteration budget of the weighted l1 solvers"},
        {"solver.inner_tol", "1e-11", "tolerance of inner quadratic subproblems"},
        {"solver.clime_symmetrization", "min-magnitude", "min-magnitude or average"},
        {"fit.data", "", "dataset CSV for fit (header '# kind=... n=... p=...')"},
        {"fit.lambda", "", "penalty level for fit (required)"},
        {"fit.mode", "two-step", "one-step, two-step, k-step or converged"},
        {"fit.k", "2", "number of LLA steps in k-step mode"},
        {"fit.initializer", "lasso",
         "zero | lasso (at fit.lambda) | lasso:<l> | clime:<l> | diag-inverse | file:<estimate.csv>"},
        {"fit.convergence_tol", "1e-8", "converged mode: max-norm change between iterates"},
        {"fit.max_lla_iters", "50", "converged mode: iteration cap"},
        {"diagnose.lambda", "", "penalty level at which the events are evaluated (required)"},
        {"diagnose.initializer", "lasso", "zero | lasso | lasso:<l> | clime | clime:<l> | diag-inverse | truth"},
        {"diagnose.export_reps", "0", "write train/validation/truth/oracle files for the first N replications"},
        {"reproduce.preset", "", "table1-m1, table1-m2, table1-m3, table2-m4 or table2-m5"},
    };
    return keys;
}

inline bool is_known_key(const std::string& k) {
    for (const auto& ki : known_keys())
        if (k == ki.key) return true;
    return false;
}

inline std::string config_reference() {
    std::ostringstream os;
    os << "; fcp configuration keys (INI sections). Values shown are defaults.\n";
    std::string section;
    for (const auto& ki : known_keys()) {
        const std::string key = ki.key;
        const auto dot = key.find('.');
        if (key.substr(0, dot) != section) {
            section = key.substr(0, dot);
            os << "\n[" << section << "]\n";
        }
        os << "; " << ki.help << "\n" << key.substr(dot + 1) << " = " << ki.default_value << "\n";
    }
    return os.str();
}

class Config {
public:
    Config() {
        for (const auto& ki : known_keys()) values_[ki.key] = ki.default_value;
    }

    void set(const std::string& key, const std::string& value) {
        if (!is_known_key(key)) throw ValidationError("unknown configuration key '" + key + "'");
        values_[key] = detail::trim(value);
        explicit_.insert(key);
    }

    // `section.key=value`
    void apply_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) throw ValidationError("override '" + assignment + "' is not key=value");
        set(detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
    }

    void load_ini(const std::string& path) {
        boost::property_tree::ptree pt;
        try {
            boost::property_tree::ini_parser::read_ini(path, pt);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw ValidationError("config " + e.filename() + ":" + std::to_string(e.line()) + ": " + e.message());
        }
        for (const auto& [section, body] : pt) {
            if (body.empty() && !body.data().empty())
                throw ValidationError("config " + path + ": key '" + section + "' outside a section");
            for (const auto& [key, value] : body) set(section + "." + key, value.data());
        }
    }

    const std::string& get(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw ValidationError("unknown configuration key '" + key + "'");
        return it->second;
    }
    bool is_explicit(const std::string& key) const { return explicit_.count(key) > 0; }
    const std::map<std::string, std::string>& values() const { return values_; }

    double number(const std::string& key) const {
        const auto v = detail::parse_double(get(key));
        if (!v) throw ValidationError(key + " must be a number, got '" + get(key) + "'");
        return *v;
    }
    long integer(const std::string& key) const {
        const std::string& s = get(key);
        char* end = nullptr;
        const long v = std::strtol(s.c_str(), &end, 10);
        if (s.empty() || *end != '\0') throw ValidationError(key + " must be an integer, got '" + s + "'");
        return v;
    }
    std::uint64_t u64(const std::string& key) const {
        const std::string& s = get(key);
        char* end = nullptr;
        if (s.empty() || s[0] == '-') throw ValidationError(key + " must be an unsigned integer");
        const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
        if (*end != '\0') throw ValidationError(key + " must be an unsigned integer, got '" + s + "'");
        return v;
    }
    std::vector<double> number_list(const std::string& key) const {
        std::vector<double> out;
        std::string item;
        std::istringstream is(get(key));
        while (std::getline(is, item, ',')) {
            if (detail::trim(item).empty()) continue;
            const auto v = detail::parse_double(item);
            if (!v) throw ValidationError(key + ": '" + detail::trim(item) + "' is not a number");
            out.push_back(*v);
        }
        return out;
    }
    std::vector<std::string> string_list(const std::string& key) const {
        std::vector<std::string> out;
        std::string item;
        std::istringstream is(get(key));
        while (std::getline(is, item, ','))
            if (!detail::trim(item).empty()) out.push_back(detail::trim(item));
        return out;
    }

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> explicit_;
};

struct Dims {
    Index n;
    Index p;
};

inline Dims scale_dims(ModelId m, bool full) {
    switch (m) {
        case ModelId::M1: return {100, full ? 1000 : 200};
        case ModelId::M2: return {200, full ? 1000 : 200};
        case ModelId::M3: return {100, full ? 400 : 200};
        case ModelId::M4:
        case ModelId::M5: return {100, full ? 100 : 40};
    }
    return {100, 200};
}

inline bool full_scale(const Config& cfg) {
    const std::string& s = cfg.get("experiment.scale");
    if (s == "desk") return false;
    if (s == "full") return true;
    throw ValidationError("experiment.scale must be desk or full, got '" + s + "'");
}

inline SolverOptions solver_options(const Config& cfg) {
    SolverOptions o;
    o.tol = cfg.number("solver.tol");
    o.max_iter = cfg.integer("solver.max_iter");
    o.inner_tol = cfg.number("solver.inner_tol");
    const std::string& sym = cfg.get("solver.clime_symmetrization");
    if (sym == "min-magnitude") o.clime_symmetrization = ClimeSymmetrization::MinMagnitude;
    else if (sym == "average") o.clime_symmetrization = ClimeSymmetrization::Average;
    else throw ValidationError("solver.clime_symmetrization must be min-magnitude or average");
    o.validate();
    return o;
}

inline ExperimentConfig experiment_config(const Config& cfg, unsigned threads, int default_reps = 100) {
    ExperimentConfig e;
    e.model = parse_model_id(cfg.get("experiment.model"));
    const Dims d = scale_dims(e.model, full_scale(cfg));
    e.n = cfg.get("experiment.n") == "auto" ? d.n : cfg.integer("experiment.n");
    e.p = cfg.get("experiment.p") == "auto" ? d.p : cfg.integer("experiment.p");
    e.tau = cfg.number("experiment.tau");
    e.signal_scale = cfg.number("experiment.signal_scale");
    e.reps = cfg.get("experiment.reps") == "auto" ? default_reps : static_cast<int>(cfg.integer("experiment.reps"));
    e.master_seed = cfg.u64("experiment.seed");
    e.methods = cfg.string_list("experiment.methods");
    e.m5_nonzeros = static_cast<int>(cfg.integer("experiment.m5_nonzeros"));
    e.penalty = parse_penalty_family(cfg.get("penalty.family"));
    e.scad_a = cfg.number("penalty.scad_a");
    e.mcp_a = cfg.number("penalty.mcp_a");
    e.lambda_grid = cfg.number_list("tuning.lambda_grid");
    e.grid_size = static_cast<int>(cfg.integer("tuning.grid_size"));
    e.grid_ratio = cfg.number("tuning.grid_ratio");
    e.clime_grid = cfg.number_list("tuning.clime_grid");
    e.clime_grid_size = static_cast<int>(cfg.integer("tuning.clime_grid_size"));
    e.clime_grid_min = cfg.number("tuning.clime_grid_min");
    e.clime_grid_max = cfg.number("tuning.clime_grid_max");
    e.solver = solver_options(cfg);
    e.threads = threads;
    e.validate();
    return e;
}

// ---------------------------------------------------------------------------
// invocation, manifest

struct CliInvocation {
    std::string subcommand;
    std::string config_path;
    std::string from_manifest;
    std::vector<std::string> overrides;
    std::string output_dir = "fcp-out";
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::optional<std::string> scale;
    std::string preset;  // reproduce positional argument
};

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 failed");
    std::ostringstream os;
    for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline json file_record(const fs::path& p) {
    return json{{"path", p.string()}, {"sha256", sha256_hex(slurp(p.string()))}};
}

// Everything a command reports back besides its files.
struct RunContext {
    CliInvocation inv;
    Config config;
    unsigned threads = 1;
    fs::path out;
    json inputs = json::array();
    json outputs = json::array();
    json diagnostics = json::object();
    std::ostream* log = &std::cout;

    void add_input(const std::string& path) { inputs.push_back(file_record(path)); }

    // Writes a file under the output directory and records its hash.
    template <class Fn>
    void write_output(const std::string& name, Fn&& fill) {
        const fs::path p = out / name;
        {
            std::ofstream os(p, std::ios::binary);
            if (!os) throw ValidationError("cannot write '" + p.string() + "'");
            fill(os);
        }
        outputs.push_back(file_record(p));
    }
};

inline void append_manifest(const RunContext& ctx, int code, const std::string& status) {
    json cfg = json::object();
    for (const auto& [k, v] : ctx.config.values()) cfg[k] = v;
    json line = {{"subcommand", ctx.inv.subcommand},
                 {"exit_code", code},
                 {"status", status},
                 {"seed", ctx.config.get("experiment.seed")},
                 {"threads", ctx.threads},
                 {"config", cfg},
                 {"inputs", ctx.inputs},
                 {"outputs", ctx.outputs},
                 {"diagnostics", ctx.diagnostics}};
    if (!ctx.inv.preset.empty()) line["preset"] = ctx.inv.preset;
    std::ofstream os(ctx.out / "manifest.jsonl", std::ios::app);
    os << line.dump() << '\n';
}

// Resolved configuration from the last entry of a manifest.
inline Config config_from_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read manifest '" + path + "'");
    std::string line, last;
    while (std::getline(in, line))
        if (!detail::trim(line).empty()) last = line;
    if (last.empty()) throw ValidationError("manifest '" + path + "' is empty");
    json j;
    try {
        j = json::parse(last);
    } catch (const json::parse_error& e) {
        throw ValidationError("manifest '" + path + "': " + e.what());
    }
    if (!j.contains("config") || !j["config"].is_object())
        throw ValidationError("manifest '" + path + "' has no config object");
    Config cfg;
    for (const auto& [k, v] : j["config"].items()) cfg.set(k, v.get<std::string>());
    return cfg;
}

inline Config resolve_config(const CliInvocation& inv) {
    Config cfg;
    if (!inv.from_manifest.empty()) cfg = config_from_manifest(inv.from_manifest);
    if (!inv.config_path.empty()) {
        if (!fs::exists(inv.config_path)) throw ValidationError("config file '" + inv.config_path + "' does not exist");
        cfg.load_ini(inv.config_path);
    }
    for (const auto& o : inv.overrides) cfg.apply_override(o);
    if (inv.seed) cfg.set("experiment.seed", std::to_string(*inv.seed));
    if (inv.scale) cfg.set("experiment.scale", *inv.scale);
    if (!inv.preset.empty()) cfg.set("reproduce.preset", inv.preset);
    return cfg;
}

// ---------------------------------------------------------------------------
// fit

inline LlaMode parse_mode(const std::string& s) {
    if (s == "one-step") return LlaMode::OneStep;
    if (s == "two-step") return LlaMode::TwoStep;
    if (s == "k-step") return LlaMode::KStep;
    if (s == "converged") return LlaMode::Converged;
    throw ValidationError("fit.mode must be one-step, two-step, k-step or converged, got '" + s + "'");
}

inline Estimate fit_initializer(RunContext& ctx, const Problem& problem, double lambda) {
    const std::string spec = ctx.config.get("fit.initializer");
    const SolverOptions opts = solver_options(ctx.config);
    if (spec.rfind("file:", 0) == 0) {
        const std::string path = spec.substr(5);
        ctx.add_input(path);
        Estimate e = read_estimate_file(path);
        problem.check_compatible(e);
        return e;
    }
    if (spec == "lasso") return make_initializer(InitializerKind::Lasso, problem, lambda, opts);
    const InitializerChoice c = parse_initializer(spec);
    switch (c.kind) {
        case InitializerChoice::Kind::Zero: return make_initializer(InitializerKind::Zero, problem);
        case InitializerChoice::Kind::DiagInverse: return make_initializer(InitializerKind::DiagInverse, problem);
        case InitializerChoice::Kind::LassoFixed:
            return make_initializer(InitializerKind::Lasso, problem, c.lambda, opts);
        case InitializerChoice::Kind::ClimeFixed:
            return make_initializer(InitializerKind::Clime, problem, c.lambda, opts);
        default: break;
    }
    throw ValidationError("fit.initializer '" + spec + "' is not available for fit (no validation data)");
}

inline int cmd_fit(RunContext& ctx) {
    const Config& cfg = ctx.config;
    const std::string data = cfg.get("fit.data");
    if (data.empty()) throw ValidationError("fit.data is required");
    if (cfg.get("fit.lambda").empty()) throw ValidationError("fit.lambda is required");
    ctx.add_input(data);
    const Dataset ds = read_dataset_file(data);
    const Problem problem = ds.problem();

    const double lambda = cfg.number("fit.lambda");
    LlaConfig lc;
    lc.mode = parse_mode(cfg.get("fit.mode"));
    lc.k = static_cast<int>(cfg.integer("fit.k"));
    const PenaltyFamily family = parse_penalty_family(cfg.get("penalty.family"));
    lc.penalty = PenaltySpec(family, lambda,
                             family == PenaltyFamily::MCP ? cfg.number("penalty.mcp_a") : cfg.number("penalty.scad_a"));
    lc.solver_opts = solver_options(cfg);
    lc.convergence_tol = cfg.number("fit.convergence_tol");
    lc.max_lla_iters = static_cast<int>(cfg.integer("fit.max_lla_iters"));
    lc.validate();
    const Estimate init = fit_initializer(ctx, problem, lambda);

    try {
        const LlaResult r = lla_run(problem, lc, init);
        ctx.write_output("estimate.csv", [&](std::ostream& os) { write_estimate_csv(os, r.estimate); });
        ctx.write_output("trace.csv", [&](std::ostream& os) { write_trace_csv(os, r.trace); });
        ctx.diagnostics = {{"lla_steps", r.trace.steps()},
                           {"converged", r.trace.converged},
                           {"fixed_point_iteration", r.trace.fixed_point_iteration},
                           {"objective", r.trace.objectives.back()},
                           {"nonzeros", r.estimate.support().size()},
                           {"solver_residual", r.trace.solver.back().residual}};
        *ctx.log << "fit: " << r.trace.steps() << " LLA step(s), " << r.estimate.support().size()
                 << " nonzero(s), objective " << format_number(r.trace.objectives.back()) << "\n";
        return kSuccess;
    } catch (const LlaConvergenceError& e) {
        ctx.write_output("estimate.csv", [&](std::ostream& os) { write_estimate_csv(os, e.last_iterate()); });
        ctx.write_output("trace.csv", [&](std::ostream& os) { write_trace_csv(os, e.partial_trace()); });
        ctx.diagnostics = {{"error", e.what()},
                           {"lla_iteration", e.lla_iteration()},
                           {"solver_residual", e.residual()},
                           {"solver_iterations", e.iterations()}};
        throw;
    }
}

// ---------------------------------------------------------------------------
// simulate

inline void print_status_table(std::ostream& os, const ExperimentResult& r) {
    os << std::left << std::setw(16) << "method" << std::right << std::setw(6) << "ok" << std::setw(8) << "failed"
       << "\n";
    for (const auto& s : r.summary)
        os << std::left << std::setw(16) << s.method << std::right << std::setw(6) << s.n_ok << std::setw(8)
           << s.n_failed << "\n";
}

inline json summary_json(const ExperimentResult& r) {
    json out = json::array();
    for (const auto& s : r.summary) out.push_back({{"method", s.method}, {"ok", s.n_ok}, {"failed", s.n_failed}});
    return out;
}

inline int cmd_simulate(RunContext& ctx) {
    const ExperimentConfig e = experiment_config(ctx.config, ctx.threads);
    const ExperimentResult r = run_experiment(e);
    ctx.write_output("rows.csv", [&](std::ostream& os) { write_rows_csv(os, r); });
    ctx.write_output("summary.csv", [&](std::ostream& os) { write_summary_csv(os, r); });
    ctx.diagnostics = {{"model", to_string(e.model)}, {"n", e.n}, {"p", e.p}, {"reps", e.reps},
                       {"methods", summary_json(r)}};
    print_status_table(*ctx.log, r);
    for (const auto& s : r.summary)
        if (s.n_ok == 0) {
            *ctx.log << "method " << s.method << " failed on every replication\n";
            return kNumericalError;
        }
    return kSuccess;
}

// ---------------------------------------------------------------------------
// diagnose

inline int cmd_diagnose(RunContext& ctx) {
    const Config& cfg = ctx.config;
    const ExperimentConfig e = experiment_config(cfg, ctx.threads);
    if (cfg.get("diagnose.lambda").empty()) throw ValidationError("diagnose.lambda is required");
    const PenaltySpec pen = e.penalty_spec(cfg.number("diagnose.lambda"));
    const InitializerChoice init = parse_initializer(cfg.get("diagnose.initializer"));
    const DeltaReport d = estimate_deltas(e, pen, init, e.reps);

    ctx.write_output("deltas.csv", [&](std::ostream& os) {
        os << "delta,value,se,reps_used,reps_failed\n";
        const std::pair<const char*, DeltaEstimate> rows[] = {
            {"delta0", d.delta0}, {"delta1", d.delta1}, {"delta2", d.delta2}};
        for (const auto& [name, v] : rows)
            os << name << ',' << format_number(v.value) << ',' << format_number(v.se) << ',' << d.used << ','
               << d.failed << '\n';
    });
    ctx.write_output("events.csv", [&](std::ostream& os) {
        os << "rep,status,init_error,oracle_gradient,oracle_min_signal,truth_min_signal,e1_init_close,"
              "e1_gradient_small,e2_signal_large,a0_signal_condition,error\n";
        for (const auto& r : d.per_rep) {
            const EventReport& ev = r.events;
            os << r.rep << ',' << (r.ok ? "ok" : "failed") << ',';
            if (r.ok)
                os << format_number(ev.init_error) << ',' << format_number(ev.oracle_gradient) << ','
                   << format_number(ev.oracle_min_signal) << ',' << format_number(ev.truth_min_signal) << ','
                   << ev.e1_init_close << ',' << ev.e1_gradient_small << ',' << ev.e2_signal_large << ','
                   << ev.a0_signal_condition;
            else
                os << "NA,NA,NA,NA,NA,NA,NA,NA";
            os << ',' << csv_quote(r.error) << '\n';
        }
    });
    const long exports = std::min<long>(cfg.integer("diagnose.export_reps"), e.reps);
    for (long r = 0; r < exports; ++r) {
        const Replication rep = generate(e, static_cast<std::uint64_t>(r));
        const auto dataset = [&](const Problem& pr, const Matrix& x) {
            Dataset ds;
            ds.kind = pr.kind();
            ds.x = x;
            if (!pr.is_precision()) {
                ds.y = pr.response();
                ds.tau = pr.kind() == LossKind::Quantile ? pr.tau() : 0.5;
            }
            return ds;
        };
        char prefix[32];
        std::snprintf(prefix, sizeof prefix, "rep%03ld_", r);
        const std::string pre = prefix;
        ctx.write_output(pre + "train.csv", [&](std::ostream& os) { write_dataset(os, dataset(rep.train, rep.train_x)); });
        ctx.write_output(pre + "validation.csv",
                         [&](std::ostream& os) { write_dataset(os, dataset(rep.validation, rep.validation_x)); });
        ctx.write_output(pre + "truth.csv", [&](std::ostream& os) { write_estimate_csv(os, rep.truth); });
        const Estimate oracle = oracle_estimator(rep.train, rep.support, e.solver);
        ctx.write_output(pre + "oracle.csv", [&](std::ostream& os) { write_estimate_csv(os, oracle); });
    }
    ctx.diagnostics = {{"lambda", pen.lambda()},
                       {"initializer", to_string(init)},
                       {"delta0", d.delta0.value},
                       {"delta1", d.delta1.value},
                       {"delta2", d.delta2.value},
                       {"reps_used", d.used},
                       {"reps_failed", d.failed}};
    auto& os = *ctx.log;
    os << "events at lambda=" << format_number(pen.lambda()) << " (" << to_string(pen.family())
       << ", a=" << format_number(pen.a()) << "), initializer " << to_string(init) << ", " << d.used << " rep(s)";
    if (d.failed) os << ", " << d.failed << " failed";
    os << "\n";
    os << "  delta0 = " << format_number(d.delta0.value) << " (se " << format_number(d.delta0.se) << ")\n";
    os << "  delta1 = " << format_number(d.delta1.value) << " (se " << format_number(d.delta1.se) << ")\n";
    os << "  delta2 = " << format_number(d.delta2.value) << " (se " << format_number(d.delta2.se) << ")\n";
    if (d.used == 0) return kNumericalError;
    return kSuccess;
}

// ---------------------------------------------------------------------------
// reproduce

struct Preset {
    std::string name;
    ModelId model;
    std::vector<double> taus;  // one column block per tau (M3), otherwise {0}
    std::vector<std::string> methods;
    Index full_p;
};

inline const std::vector<Preset>& presets() {
    static const std::vector<std::string> vec_methods = {"lasso",      "scad-3slla0", "scad-lla0",
                                                         "scad-2slla*", "scad-lla*",   "mcp-3slla0",
                                                         "mcp-lla0",   "mcp-2slla*",  "mcp-lla*"};
    static const std::vector<std::string> prec_methods = {"glasso",      "clime",        "gscad-3slla0",
                                                          "gscad-lla0",  "gscad-2slla*", "gscad-lla*",
                                                          "gmcp-3slla0", "gmcp-lla0",    "gmcp-2slla*",
                                                          "gmcp-lla*"};
    static const std::vector<Preset> all = {
        {"table1-m1", ModelId::M1, {0.5}, vec_methods, 1000},
        {"table1-m2", ModelId::M2, {0.5}, vec_methods, 1000},
        {"table1-m3", ModelId::M3, {0.3, 0.5}, vec_methods, 400},
        {"table2-m4", ModelId::M4, {0.5}, prec_methods, 100},
        {"table2-m5", ModelId::M5, {0.5}, prec_methods, 100},
    };
    return all;
}

inline std::string preset_list() {
    std::string s;
    for (const auto& p : presets()) s += (s.empty() ? "" : ", ") + p.name;
    return s;
}

inline std::string cell(const MetricSummary& m) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f (%.2f)", m.mean, m.se);
    return std::isnan(m.mean) ? std::string("NA") : std::string(buf);
}

inline int cmd_reproduce(RunContext& ctx) {
    Config& cfg = ctx.config;
    const std::string name = cfg.get("reproduce.preset");
    const Preset* preset = nullptr;
    for (const auto& p : presets())
        if (p.name == name) preset = &p;
    if (!preset) throw ValidationError("unknown preset '" + name + "'; available: " + preset_list());
    const bool full = full_scale(cfg);
    cfg.set("experiment.model", to_string(preset->model));
    if (!cfg.is_explicit("experiment.methods")) {
        std::string m;
        for (const auto& s : preset->methods) m += (m.empty() ? "" : ",") + s;
        cfg.set("experiment.methods", m);
    }
    const bool prec = is_precision_model(preset->model);

    std::vector<ExperimentResult> blocks;
    for (double tau : preset->taus) {
        Config c = cfg;
        if (preset->model == ModelId::M3) c.set("experiment.tau", format_number(tau));
        const ExperimentConfig e = experiment_config(c, ctx.threads, full ? 100 : 20);
        blocks.push_back(run_experiment(e));
        std::string suffix = preset->taus.size() > 1 ? "_tau" + format_number(tau) : "";
        const ExperimentResult& r = blocks.back();
        ctx.write_output(name + suffix + "_rows.csv", [&](std::ostream& os) { write_rows_csv(os, r); });
        ctx.write_output(name + suffix + "_summary.csv", [&](std::ostream& os) { write_summary_csv(os, r); });
    }
    const ExperimentConfig& e0 = blocks.front().config;
    std::ostringstream header;
    header << name << ": model " << to_string(e0.model) << ", n=" << e0.n << ", " << (prec ? "q=" : "p=") << e0.p
           << ", " << e0.reps << " replications, seed " << e0.master_seed;
    if (!full && e0.p != preset->full_p)
        header << " [desk scale: " << (prec ? "q" : "p") << " reduced from " << preset->full_p << "]";

    const char* c1 = prec ? "op_loss" : "l1_loss";
    const char* c2 = prec ? "frob_loss" : "l2_loss";
    ctx.write_output(name + ".csv", [&](std::ostream& os) {
        os << "# " << header.str() << "\n";
        os << "block,method," << c1 << "_mean," << c1 << "_se," << c2 << "_mean," << c2
           << "_se,fp_mean,fp_se,fn_mean,fn_se,n_ok,n_failed\n";
        for (const auto& r : blocks) {
            const std::string block = preset->model == ModelId::M3 ? "tau=" + format_number(r.config.tau)
                                                                   : to_string(r.config.model);
            for (const auto& s : r.summary) {
                const MetricSummary& a = prec ? s.op_norm_loss : s.l1_loss;
                const MetricSummary& b = prec ? s.frob_loss : s.l2_loss;
                os << block << ',' << csv_quote(s.method) << ',' << format_number(a.mean) << ','
                   << format_number(a.se) << ',' << format_number(b.mean) << ',' << format_number(b.se) << ','
                   << format_number(s.fp.mean) << ',' << format_number(s.fp.se) << ',' << format_number(s.fn.mean)
                   << ',' << format_number(s.fn.se) << ',' << s.n_ok << ',' << s.n_failed << '\n';
            }
        }
    });
    std::ostringstream text;
    text << header.str() << "\n";
    for (const auto& r : blocks) {
        if (preset->model == ModelId::M3) text << "\ntau = " << format_number(r.config.tau) << "\n";
        text << "\n"
             << std::left << std::setw(16) << "Method" << std::right << std::setw(16)
             << (prec ? "Operator" : "l1 loss") << std::setw(16) << (prec ? "Frobenius" : "l2 loss")
             << std::setw(18) << "#FP" << std::setw(14) << "#FN" << "\n";
        for (const auto& s : r.summary) {
            text << std::left << std::setw(16) << s.method << std::right << std::setw(16)
                 << cell(prec ? s.op_norm_loss : s.l1_loss) << std::setw(16) << cell(prec ? s.frob_loss : s.l2_loss)
                 << std::setw(18) << cell(s.fp) << std::setw(14) << cell(s.fn);
            if (s.n_failed) text << "   [" << s.n_failed << " failed]";
            text << "\n";
        }
    }
    ctx.write_output(name + ".txt", [&](std::ostream& os) { os << text.str(); });
    *ctx.log << text.str();
    json methods = json::array();
    for (const auto& r : blocks) methods.push_back(summary_json(r));
    ctx.diagnostics = {{"preset", name}, {"scale", full ? "full" : "desk"}, {"blocks", methods}};
    for (const auto& r : blocks)
        for (const auto& s : r.summary)
            if (s.n_ok == 0) return kNumericalError;
    return kSuccess;
}

// ---------------------------------------------------------------------------
// dispatch

// Runs one subcommand; never throws. Messages go to `err`.
inline int run(const CliInvocation& inv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    RunContext ctx;
    ctx.inv = inv;
    ctx.log = &log;
    bool started = false;
    int code = kSuccess;
    std::string status = "ok";
    try {
        ctx.config = resolve_config(inv);
        ctx.threads = inv.threads ? *inv.threads : default_thread_count();
        if (ctx.threads < 1) throw ValidationError("--threads must be at least 1");
        ctx.out = inv.output_dir;
        std::error_code ec;
        fs::create_directories(ctx.out, ec);
        if (ec) throw ValidationError("cannot create output directory '" + inv.output_dir + "': " + ec.message());
        if (!inv.config_path.empty()) ctx.add_input(inv.config_path);
        if (!inv.from_manifest.empty()) ctx.add_input(inv.from_manifest);
        started = true;
        if (inv.subcommand == "fit") code = cmd_fit(ctx);
        else if (inv.subcommand == "simulate") code = cmd_simulate(ctx);
        else if (inv.subcommand == "diagnose") code = cmd_diagnose(ctx);
        else if (inv.subcommand == "reproduce") code = cmd_reproduce(ctx);
        else throw ValidationError("unknown subcommand '" + inv.subcommand + "'");
        if (code != kSuccess) status = "numerical failure";
    } catch (const ConvergenceError& e) {
        err << "error: " << e.what() << "\n";
        code = kNumericalError;
        status = std::string("convergence error: ") + e.what();
    } catch (const DomainError& e) {
        err << "error: " << e.what() << "\n";
        code = kNumericalError;
        status = std::string("numerical error: ") + e.what();
    } catch (const SingularityError& e) {
        err << "error: " << e.what() << "\n";
        code = kNumericalError;
        status = std::string("numerical error: ") + e.what();
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        code = kInputError;
        status = std::string("input error: ") + e.what();
    }
    if (started) {
        try {
            append_manifest(ctx, code, status);
        } catch (const std::exception& e) {
            err << "error: writing manifest: " << e.what() << "\n";
            if (code == kSuccess) code = kInputError;
        }
    }
    return code;
}

}  // namespace fcp::cli
