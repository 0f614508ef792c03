#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iterator>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "fcp/errors.hpp"
#include "fcp/lla.hpp"
#include "fcp/model.hpp"
#include "fcp/parallel.hpp"
#include "fcp/penalty.hpp"
#include "fcp/rng.hpp"
#include "fcp/types.hpp"
#include "fcp/wl1_solvers.hpp"

namespace fcp {

enum class ModelId { M1, M2, M3, M4, M5 };

inline std::string to_string(ModelId m) {
    switch (m) {
        case ModelId::M1: return "M1";
        case ModelId::M2: return "M2";
        case ModelId::M3: return "M3";
        case ModelId::M4: return "M4";
        case ModelId::M5: return "M5";
    }
    return "?";
}

inline ModelId parse_model_id(std::string_view s) {
    std::string u(s);
    for (auto& c : u) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (u == "M1" || u == "1") return ModelId::M1;
    if (u == "M2" || u == "2") return ModelId::M2;
    if (u == "M3" || u == "3") return ModelId::M3;
    if (u == "M4" || u == "4") return ModelId::M4;
    if (u == "M5" || u == "5") return ModelId::M5;
    throw ValidationError("unknown model '" + std::string(s) + "' (expected M1..M5)");
}

inline bool is_precision_model(ModelId m) { return m == ModelId::M4 || m == ModelId::M5; }

// ---------------------------------------------------------------------------
// methods

enum class MethodKind { Lasso, Clime, Lla };

// Parsed method label. Grammar (case-insensitive):
//   lasso | glasso | clime | [g]<scad|mcp|hard>-[<k>s]lla<0|*>
// A missing step count runs LLA to convergence; `0` starts from zero (vector
// models) or diag(1/S_jj) (precision models); `*` starts from the tuned lasso
// (vector) or tuned CLIME (precision) fit.
struct MethodSpec {
    std::string label;  // canonical lower-case label
    MethodKind kind = MethodKind::Lasso;
    PenaltyFamily family = PenaltyFamily::SCAD;
    LlaMode mode = LlaMode::Converged;
    int k = 0;
    bool tuned_init = false;
};

inline MethodSpec parse_method(std::string_view text) {
    std::string s(text);
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    MethodSpec m;
    m.label = s;
    if (s == "lasso" || s == "glasso") {
        m.kind = MethodKind::Lasso;
        m.label = "lasso";
        return m;
    }
    if (s == "clime") {
        m.kind = MethodKind::Clime;
        return m;
    }
    const auto bad = [&]() { return ValidationError("unknown method '" + std::string(text) + "'"); };
    std::string body = s;
    const auto dash = body.find('-');
    if (dash == std::string::npos) throw bad();
    std::string fam = body.substr(0, dash);
    std::string rest = body.substr(dash + 1);
    if (fam.size() > 1 && fam[0] == 'g' && fam != "hard") fam = fam.substr(1);
    if (fam == "scad") m.family = PenaltyFamily::SCAD;
    else if (fam == "mcp") m.family = PenaltyFamily::MCP;
    else if (fam == "hard") m.family = PenaltyFamily::HardThreshold;
    else throw bad();
    m.kind = MethodKind::Lla;
    std::size_t pos = 0;
    while (pos < rest.size() && std::isdigit(static_cast<unsigned char>(rest[pos]))) ++pos;
    if (pos > 0) {
        if (pos >= rest.size() || rest[pos] != 's') throw bad();
        const int k = std::stoi(rest.substr(0, pos));
        if (k < 1) throw bad();
        m.k = k;
        m.mode = k == 1 ? LlaMode::OneStep : k == 2 ? LlaMode::TwoStep : LlaMode::KStep;
        ++pos;
    }
    if (rest.compare(pos, 3, "lla") != 0 || pos + 4 != rest.size()) throw bad();
    const char init = rest[pos + 3];
    if (init == '0') m.tuned_init = false;
    else if (init == '*') m.tuned_init = true;
    else throw bad();
    m.label = std::string(to_string(m.family)) + "-" + rest;
    for (auto& c : m.label) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return m;
}

// Table label, e.g. LASSO / SCAD-2slla* or GLASSO / GSCAD-2slla*.
inline std::string display_label(const MethodSpec& m, bool precision) {
    switch (m.kind) {
        case MethodKind::Lasso: return precision ? "GLASSO" : "LASSO";
        case MethodKind::Clime: return "CLIME";
        case MethodKind::Lla: break;
    }
    std::string fam(to_string(m.family));
    for (auto& c : fam) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (m.family == PenaltyFamily::HardThreshold) fam = "HARD";
    const auto dash = m.label.find('-');
    return (precision ? "G" : "") + fam + m.label.substr(dash);
}

// ---------------------------------------------------------------------------
// configuration

struct ExperimentConfig {
    ModelId model = ModelId::M1;
    Index n = 100;
    Index p = 200;  // q for the precision models
    double tau = 0.5;
    double signal_scale = 1.0;  // multiplies the nonzero regression coefficients

    PenaltyFamily penalty = PenaltyFamily::SCAD;  // used by diagnostics
    double scad_a = 3.7;
    double mcp_a = 2.0;

    std::vector<double> lambda_grid;  // ascending; empty means automatic
    int grid_size = 50;
    double grid_ratio = 0.01;
    std::vector<double> clime_grid;  // ascending; empty means automatic
    int clime_grid_size = 12;
    double clime_grid_min = 0.02;
    double clime_grid_max = 0.8;

    std::vector<std::string> methods{"lasso", "scad-2slla*"};
    int reps = 100;
    std::uint64_t master_seed = 20240601;
    unsigned threads = 1;
    int m5_nonzeros = 100;
    SolverOptions solver;

    bool precision() const { return is_precision_model(model); }

    double concavity(PenaltyFamily f) const {
        switch (f) {
            case PenaltyFamily::SCAD: return scad_a;
            case PenaltyFamily::MCP: return mcp_a;
            case PenaltyFamily::HardThreshold: return 1.0;
        }
        return 1.0;
    }

    PenaltySpec penalty_spec(PenaltyFamily f, double lambda) const { return {f, lambda, concavity(f)}; }
    PenaltySpec penalty_spec(double lambda) const { return penalty_spec(penalty, lambda); }

    void validate() const {
        if (n < 2) throw ValidationError("n must be at least 2");
        if (p < 1) throw ValidationError("p must be positive");
        if (model == ModelId::M3 && !(tau > 0.0 && tau < 1.0)) throw ValidationError("tau must lie in (0,1)");
        if (!(signal_scale > 0.0) || !std::isfinite(signal_scale))
            throw ValidationError("signal_scale must be positive");
        if ((model == ModelId::M2 || model == ModelId::M3) && p < 10)
            throw ValidationError("models M2/M3 need p >= 10");
        if (model == ModelId::M1 && p < 5) throw ValidationError("model M1 needs p >= 5");
        if (precision() && p < 2) throw ValidationError("precision models need q >= 2");
        if (model == ModelId::M5 && (m5_nonzeros < 0 || m5_nonzeros > p * (p - 1)))
            throw ValidationError("m5_nonzeros out of range");
        PenaltySpec(PenaltyFamily::SCAD, 1.0, scad_a);
        PenaltySpec(PenaltyFamily::MCP, 1.0, mcp_a);
        const auto check_grid = [](const std::vector<double>& g, const char* name) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (!(g[i] > 0.0) || !std::isfinite(g[i]))
                    throw ValidationError(std::string(name) + " values must be positive");
                if (i > 0 && !(g[i] > g[i - 1]))
                    throw ValidationError(std::string(name) + " must be sorted ascending");
            }
        };
        check_grid(lambda_grid, "lambda_grid");
        check_grid(clime_grid, "clime_grid");
        if (grid_size < 1) throw ValidationError("grid_size must be positive");
        if (!(grid_ratio > 0.0 && grid_ratio <= 1.0)) throw ValidationError("grid_ratio must lie in (0,1]");
        if (clime_grid_size < 1) throw ValidationError("clime_grid_size must be positive");
        if (!(clime_grid_min > 0.0 && clime_grid_max >= clime_grid_min))
            throw ValidationError("clime grid bounds must satisfy 0 < min <= max");
        if (methods.empty()) throw ValidationError("method list is empty");
        for (const auto& m : methods) {
            const MethodSpec spec = parse_method(m);
            if (spec.kind == MethodKind::Clime && !precision())
                throw ValidationError("clime applies to precision models only");
        }
        if (reps < 1) throw ValidationError("reps must be positive");
        if (threads < 1) throw ValidationError("threads must be positive");
        solver.validate();
    }
};

// ---------------------------------------------------------------------------
// data generation

struct Replication {
    Problem train;
    Problem validation;
    Estimate truth;
    Support support;
    Matrix train_x;       // raw observations (design, or samples for M4/M5)
    Matrix validation_x;
    int redraws = 0;      // M5 draws rejected for conditioning
};

namespace detail {

// Rows from N(0, Sigma) with Sigma_ij = prod of rho over the gaps between i and j.
inline Matrix ar_gaussian(Rng& rng, Index n, const Vector& rho) {
    const Index p = rho.size() + 1;
    Matrix x(n, p);
    for (Index i = 0; i < n; ++i) {
        x(i, 0) = rng.normal();
        for (Index j = 1; j < p; ++j)
            x(i, j) = rho[j - 1] * x(i, j - 1) + std::sqrt(1.0 - rho[j - 1] * rho[j - 1]) * rng.normal();
    }
    return x;
}

// Rows from N(0, theta^{-1}) given the Cholesky factor theta = L L'.
inline Matrix precision_gaussian(Rng& rng, Index n, const Eigen::LLT<Matrix>& llt) {
    const Index q = llt.matrixL().rows();
    Matrix z(q, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < q; ++j) z(j, i) = rng.normal();
    const Matrix x = llt.matrixU().solve(z);
    return x.transpose();
}

inline Vector random_sparse_signal(Rng& rng, Index p, Index s) {
    Vector b = Vector::Zero(p);
    for (Index j : rng.sample_without_replacement(p, s)) {
        const double t = rng.uniform(1.0, 2.0);
        b[j] = rng.coin() ? t : -t;
    }
    return b;
}

// Inverse of the AR-type covariance with successive correlations rho.
inline Matrix ar_precision(const Vector& rho) {
    const Index q = rho.size() + 1;
    Matrix t = Matrix::Zero(q, q);
    for (Index k = 0; k + 1 < q; ++k) {
        const double r2 = rho[k] * rho[k];
        const double inv = 1.0 / (1.0 - r2);
        t(k, k) += r2 * inv;
        t(k + 1, k + 1) += inv;
        t(k, k + 1) = t(k + 1, k) = -rho[k] * inv;
    }
    t(0, 0) += 1.0;
    return t;
}

}  // namespace detail

inline Replication generate(const ExperimentConfig& cfg, std::uint64_t rep_index) {
    cfg.validate();
    Rng rng = Rng::for_replication(cfg.master_seed, rep_index);
    const Index n = cfg.n, p = cfg.p;

    if (!cfg.precision()) {
        Vector beta = Vector::Zero(p);
        if (cfg.model == ModelId::M1) {
            beta[0] = 3.0;
            beta[1] = 1.5;
            beta[4] = 2.0;
        } else {
            beta = detail::random_sparse_signal(rng, p, 10);
        }
        beta *= cfg.signal_scale;
        const Vector rho = Vector::Constant(p - 1, 0.5);
        auto draw = [&](Matrix& x, Vector& y) {
            x = detail::ar_gaussian(rng, n, rho);
            const Vector eta = x * beta;
            y.resize(n);
            for (Index i = 0; i < n; ++i) {
                switch (cfg.model) {
                    case ModelId::M1: y[i] = eta[i] + rng.normal(); break;
                    case ModelId::M2: y[i] = rng.uniform() < sigmoid(eta[i]) ? 1.0 : 0.0; break;
                    default: y[i] = eta[i] + rng.cauchy(); break;
                }
            }
        };
        Matrix xt, xv;
        Vector yt, yv;
        draw(xt, yt);
        draw(xv, yv);
        const auto make = [&](const Matrix& x, const Vector& y) {
            switch (cfg.model) {
                case ModelId::M1: return Problem::linear(x, y);
                case ModelId::M2: return Problem::logistic(x, y);
                default: return Problem::quantile(x, y, cfg.tau);
            }
        };
        Estimate truth(beta);
        Support support = truth.support(0.0);
        return Replication{make(xt, yt), make(xv, yv), std::move(truth), std::move(support), std::move(xt),
                           std::move(xv), 0};
    }

    Matrix theta;
    Matrix xt, xv;
    int redraws = 0;
    if (cfg.model == ModelId::M4) {
        Vector rho(p - 1);
        for (Index k = 0; k + 1 < p; ++k) rho[k] = std::exp(-rng.uniform(0.5, 1.0));
        theta = detail::ar_precision(rho);
        xt = detail::ar_gaussian(rng, n, rho);
        xv = detail::ar_gaussian(rng, n, rho);
    } else {
        for (;;) {
            Matrix u = Matrix::Zero(p, p);
            const Index slots = p * (p - 1);
            for (Index key : rng.sample_without_replacement(slots, cfg.m5_nonzeros)) {
                Index i = key / (p - 1);
                Index j = key % (p - 1);
                if (j >= i) ++j;
                const double t = rng.uniform(1.0, 2.0);
                u(i, j) = rng.coin() ? t : -t;
            }
            theta = u.transpose() * u + Matrix::Identity(p, p);
            const Eigen::SelfAdjointEigenSolver<Matrix> es(theta, Eigen::EigenvaluesOnly);
            const double cond = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
            if (es.eigenvalues().minCoeff() > 0 && cond <= 1e12) break;
            if (++redraws > 1000) throw ConvergenceError("model M5: no well-conditioned draw", cond, redraws);
        }
        const Eigen::LLT<Matrix> llt(theta);
        xt = detail::precision_gaussian(rng, n, llt);
        xv = detail::precision_gaussian(rng, n, llt);
    }
    Estimate truth(theta);
    Support support = truth.support(0.0);
    Problem train = Problem::precision(sample_covariance(xt), n);
    Problem validation = Problem::precision(sample_covariance(xv), n);
    return Replication{std::move(train), std::move(validation), std::move(truth), std::move(support),
                       std::move(xt), std::move(xv), redraws};
}

// ---------------------------------------------------------------------------
// tuning

// Validation criteria: residual sum of squares, summed logistic deviance
// terms, summed check loss, or -log det + <Theta, S_val>.
inline double validation_error(const Problem& validation, const Estimate& est) {
    validation.check_compatible(est);
    if (validation.is_precision()) {
        const Matrix& t = est.matrix();
        if (!is_positive_definite(t)) throw DomainError("precision estimate is not positive definite");
        return -log_det_pd(t) + t.cwiseProduct(validation.sample_cov()).sum();
    }
    const Vector eta = validation.design() * est.vector();
    const Vector& y = validation.response();
    double total = 0.0;
    switch (validation.kind()) {
        case LossKind::Linear:
            for (Index i = 0; i < y.size(); ++i) total += (y[i] - eta[i]) * (y[i] - eta[i]);
            break;
        case LossKind::Logistic:
            for (Index i = 0; i < y.size(); ++i) total += -y[i] * eta[i] + log1p_exp(eta[i]);
            break;
        case LossKind::Quantile:
            for (Index i = 0; i < y.size(); ++i) total += check_loss(y[i] - eta[i], validation.tau());
            break;
        case LossKind::Precision: break;
    }
    return total;
}

inline std::vector<double> log_grid(double hi, double lo, int size) {
    std::vector<double> g(static_cast<std::size_t>(size));
    if (size == 1) {
        g[0] = hi;
        return g;
    }
    for (int i = 0; i < size; ++i)
        g[static_cast<std::size_t>(i)] = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (size - 1));
    return g;
}

// Ascending penalty grid for a training problem.
inline std::vector<double> lambda_grid(const ExperimentConfig& cfg, const Problem& train) {
    if (!cfg.lambda_grid.empty()) return cfg.lambda_grid;
    double top = lambda_max(train);
    if (!(top > 0.0)) top = 1.0;
    return log_grid(top, cfg.grid_ratio * top, cfg.grid_size);
}

inline std::vector<double> clime_grid(const ExperimentConfig& cfg) {
    if (!cfg.clime_grid.empty()) return cfg.clime_grid;
    return log_grid(cfg.clime_grid_max, cfg.clime_grid_min, cfg.clime_grid_size);
}

// Fits one method at one penalty level. `init` is the starting estimate of
// LLA methods; Lasso warm-starts from it when given.
inline Estimate fit_method(const ExperimentConfig& cfg, const MethodSpec& method, const Problem& train, double lambda,
                           const Estimate* init = nullptr) {
    switch (method.kind) {
        case MethodKind::Lasso: {
            const WeightVector w = train.is_precision() ? WeightVector::uniform_off_diagonal(train.p(), lambda)
                                                        : WeightVector::uniform(train.p(), lambda);
            return solve_weighted_l1(train, w, cfg.solver, SolveHints{init, nullptr});
        }
        case MethodKind::Clime:
            return solve_clime(train.sample_cov(), lambda, cfg.solver);
        case MethodKind::Lla: {
            LlaConfig lc;
            lc.mode = method.mode;
            lc.k = std::max(method.k, 1);
            lc.penalty = cfg.penalty_spec(method.family, lambda);
            lc.solver_opts = cfg.solver;
            Estimate start;
            if (init) start = *init;
            else start = train.is_precision() ? make_initializer(InitializerKind::DiagInverse, train)
                                              : make_initializer(InitializerKind::Zero, train);
            return lla_run(train, lc, start).estimate;
        }
    }
    throw ValidationError("unknown method kind");
}

struct TuneResult {
    double best_lambda = 0.0;
    double best_error = 0.0;
    Estimate estimate;
    std::vector<double> grid;    // ascending
    std::vector<double> errors;  // NaN where the fit or its validation failed
    int failures = 0;
};

// Picks the grid value with the smallest validation error; exact ties go to
// the larger lambda.
inline std::size_t argmin_prefer_larger(const std::vector<double>& grid, const std::vector<double>& errors) {
    std::size_t best = grid.size();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (std::isnan(errors[i])) continue;
        if (best == grid.size() || errors[i] < errors[best] || (errors[i] == errors[best] && grid[i] > grid[best]))
            best = i;
    }
    return best;
}

inline TuneResult tune_lambda(const ExperimentConfig& cfg, const Problem& train, const Problem& validation,
                              const MethodSpec& method, const Estimate* init = nullptr) {
    TuneResult out;
    out.grid = method.kind == MethodKind::Clime ? clime_grid(cfg) : lambda_grid(cfg, train);
    if (out.grid.empty()) throw ValidationError("empty tuning grid");
    const std::size_t g = out.grid.size();
    out.errors.assign(g, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::optional<Estimate>> fits(g);
    std::optional<Estimate> warm;
    std::string last_error;
    // largest lambda first so the lasso path can warm-start
    for (std::size_t idx = g; idx-- > 0;) {
        const double lam = out.grid[idx];
        try {
            const Estimate* start = init;
            if (method.kind == MethodKind::Lasso && warm) start = &*warm;
            Estimate est = fit_method(cfg, method, train, lam, start);
            if (method.kind == MethodKind::Lasso) warm = est;
            out.errors[idx] = validation_error(validation, est);
            fits[idx] = std::move(est);
        } catch (const ConvergenceError& e) {
            ++out.failures;
            last_error = e.what();
        } catch (const DomainError& e) {
            ++out.failures;
            last_error = e.what();
        } catch (const SingularityError& e) {
            ++out.failures;
            last_error = e.what();
        }
    }
    const std::size_t best = argmin_prefer_larger(out.grid, out.errors);
    if (best == g)
        throw ConvergenceError("tuning failed at every lambda (" + std::to_string(g) + " values): " + last_error,
                               std::numeric_limits<double>::infinity(), static_cast<long>(g));
    out.best_lambda = out.grid[best];
    out.best_error = out.errors[best];
    out.estimate = std::move(*fits[best]);
    return out;
}

// ---------------------------------------------------------------------------
// metrics

struct MetricsRow {
    std::uint64_t rep = 0;
    std::string method;
    bool ok = false;
    std::string error;
    double chosen_lambda = std::numeric_limits<double>::quiet_NaN();
    double validation_error = std::numeric_limits<double>::quiet_NaN();
    double l1_loss = std::numeric_limits<double>::quiet_NaN();
    double l2_loss = std::numeric_limits<double>::quiet_NaN();
    double op_norm_loss = std::numeric_limits<double>::quiet_NaN();
    double frob_loss = std::numeric_limits<double>::quiet_NaN();
    long false_positives = 0;
    long false_negatives = 0;
    long true_positives = 0;
    long true_negatives = 0;
};

inline MetricsRow compute_metrics(const Estimate& est, const Estimate& truth, const Support& true_support) {
    if (est.is_matrix() != truth.is_matrix() || est.dimension() != truth.dimension())
        throw ValidationError("estimate and truth have different shapes");
    MetricsRow r;
    r.ok = true;
    Index slots;
    if (est.is_matrix()) {
        const Matrix d = est.matrix() - truth.matrix();
        r.frob_loss = d.norm();
        r.op_norm_loss = d.size() ? Eigen::JacobiSVD<Matrix>(d).singularValues()[0] : 0.0;
        slots = off_diagonal_pairs(est.dimension());
    } else {
        const Vector d = est.vector() - truth.vector();
        r.l1_loss = d.lpNorm<1>();
        r.l2_loss = d.norm();
        slots = est.dimension();
    }
    const Support s = est.support();
    std::vector<Index> both;
    std::set_intersection(s.begin(), s.end(), true_support.begin(), true_support.end(), std::back_inserter(both));
    r.true_positives = static_cast<long>(both.size());
    r.false_positives = static_cast<long>(s.size() - both.size());
    r.false_negatives = static_cast<long>(true_support.size() - both.size());
    r.true_negatives = static_cast<long>(slots) - r.true_positives - r.false_positives - r.false_negatives;
    return r;
}

struct MetricSummary {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double se = std::numeric_limits<double>::quiet_NaN();
};

struct MethodSummary {
    std::string method;   // display label
    int n_ok = 0;
    int n_failed = 0;
    MetricSummary chosen_lambda, validation_error, l1_loss, l2_loss, op_norm_loss, frob_loss, fp, fn;
};

inline MetricSummary summarize(const std::vector<double>& v) {
    MetricSummary s;
    if (v.empty()) return s;
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    if (v.size() < 2) {
        s.se = 0.0;
        return s;
    }
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
    return s;
}

inline MethodSummary summarize_rows(const std::string& label, const std::vector<MetricsRow>& rows) {
    MethodSummary m;
    m.method = label;
    std::vector<double> lam, ve, l1, l2, op, fr, fp, fn;
    for (const auto& r : rows) {
        if (!r.ok) {
            ++m.n_failed;
            continue;
        }
        ++m.n_ok;
        lam.push_back(r.chosen_lambda);
        ve.push_back(r.validation_error);
        l1.push_back(r.l1_loss);
        l2.push_back(r.l2_loss);
        op.push_back(r.op_norm_loss);
        fr.push_back(r.frob_loss);
        fp.push_back(static_cast<double>(r.false_positives));
        fn.push_back(static_cast<double>(r.false_negatives));
    }
    m.chosen_lambda = summarize(lam);
    m.validation_error = summarize(ve);
    m.l1_loss = summarize(l1);
    m.l2_loss = summarize(l2);
    m.op_norm_loss = summarize(op);
    m.frob_loss = summarize(fr);
    m.fp = summarize(fp);
    m.fn = summarize(fn);
    return m;
}

// ---------------------------------------------------------------------------
// runner

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<MethodSpec> methods;
    std::vector<std::string> labels;             // display labels, one per method
    std::vector<std::vector<MetricsRow>> rows;   // [method][rep]
    std::vector<MethodSummary> summary;
    std::vector<int> redraws;                    // per rep
};

namespace detail {

inline void fill_metrics(MetricsRow& row, const Estimate& est, const Replication& rep, double lambda,
                         double val_error) {
    const std::uint64_t idx = row.rep;
    const std::string label = row.method;
    row = compute_metrics(est, rep.truth, rep.support);
    row.rep = idx;
    row.method = label;
    row.chosen_lambda = lambda;
    row.validation_error = val_error;
}

// All methods on one replication; results go to rows[m].
inline void run_replication(const ExperimentConfig& cfg, const std::vector<MethodSpec>& methods,
                            const std::vector<std::string>& labels, std::uint64_t rep_index,
                            std::vector<MetricsRow>& rows, int& redraws) {
    rows.assign(methods.size(), MetricsRow{});
    for (std::size_t m = 0; m < methods.size(); ++m) {
        rows[m].rep = rep_index;
        rows[m].method = labels[m];
    }
    std::optional<Replication> rep;
    try {
        rep = generate(cfg, rep_index);
        redraws = rep->redraws;
    } catch (const std::exception& e) {
        for (auto& r : rows) r.error = std::string("generate: ") + e.what();
        return;
    }
    // tuned baselines shared by the `*` methods and the lasso/clime rows
    std::optional<TuneResult> base;
    std::string base_error;
    bool base_done = false;
    const auto baseline = [&]() -> const TuneResult* {
        if (!base_done) {
            base_done = true;
            MethodSpec b;
            b.kind = cfg.precision() ? MethodKind::Clime : MethodKind::Lasso;
            try {
                base = tune_lambda(cfg, rep->train, rep->validation, b);
            } catch (const std::exception& e) {
                base_error = e.what();
            }
        }
        return base ? &*base : nullptr;
    };
    for (std::size_t m = 0; m < methods.size(); ++m) {
        const MethodSpec& spec = methods[m];
        MetricsRow& row = rows[m];
        try {
            const bool is_baseline = (spec.kind == MethodKind::Lasso && !cfg.precision()) ||
                                     spec.kind == MethodKind::Clime;
            if (is_baseline) {
                const TuneResult* t = baseline();
                if (!t) throw ConvergenceError(base_error, 0.0, 0);
                fill_metrics(row, t->estimate, *rep, t->best_lambda, t->best_error);
                continue;
            }
            const Estimate* init = nullptr;
            if (spec.kind == MethodKind::Lla && spec.tuned_init) {
                const TuneResult* t = baseline();
                if (!t) throw ConvergenceError("initializer: " + base_error, 0.0, 0);
                init = &t->estimate;
            }
            const TuneResult t = tune_lambda(cfg, rep->train, rep->validation, spec, init);
            fill_metrics(row, t.estimate, *rep, t.best_lambda, t.best_error);
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
    }
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentResult res;
    res.config = cfg;
    for (const auto& m : cfg.methods) {
        res.methods.push_back(parse_method(m));
        res.labels.push_back(display_label(res.methods.back(), cfg.precision()));
    }
    const std::size_t reps = static_cast<std::size_t>(cfg.reps);
    std::vector<std::vector<MetricsRow>> by_rep(reps);
    res.redraws.assign(reps, 0);
    parallel_for(reps, cfg.threads, [&](std::size_t r) {
        detail::run_replication(cfg, res.methods, res.labels, r, by_rep[r], res.redraws[r]);
    });
    res.rows.assign(res.methods.size(), {});
    for (std::size_t m = 0; m < res.methods.size(); ++m) {
        for (std::size_t r = 0; r < reps; ++r) res.rows[m].push_back(by_rep[r][m]);
        res.summary.push_back(summarize_rows(res.labels[m], res.rows[m]));
    }
    return res;
}

// ---------------------------------------------------------------------------
// CSV output

inline std::string format_number(double v) {
    if (std::isnan(v)) return "NA";
    if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

inline void write_rows_csv(std::ostream& os, const ExperimentResult& res) {
    const bool prec = res.config.precision();
    os << "rep,method,status,chosen_lambda,validation_error,"
       << (prec ? "op_norm_loss,frob_loss" : "l1_loss,l2_loss") << ",fp,fn,error\n";
    for (std::size_t m = 0; m < res.rows.size(); ++m)
        for (const auto& r : res.rows[m]) {
            os << r.rep << ',' << csv_quote(r.method) << ',' << (r.ok ? "ok" : "failed") << ','
               << format_number(r.chosen_lambda) << ',' << format_number(r.validation_error) << ','
               << format_number(prec ? r.op_norm_loss : r.l1_loss) << ','
               << format_number(prec ? r.frob_loss : r.l2_loss) << ',';
            if (r.ok) os << r.false_positives << ',' << r.false_negatives;
            else os << "NA,NA";
            os << ',' << csv_quote(r.error) << '\n';
        }
}

inline void write_summary_csv(std::ostream& os, const ExperimentResult& res) {
    const bool prec = res.config.precision();
    os << "method,n_ok,n_failed,"
       << (prec ? "op_norm_loss_mean,op_norm_loss_se,frob_loss_mean,frob_loss_se"
                : "l1_loss_mean,l1_loss_se,l2_loss_mean,l2_loss_se")
       << ",fp_mean,fp_se,fn_mean,fn_se,chosen_lambda_mean,validation_error_mean\n";
    for (const auto& s : res.summary) {
        const MetricSummary& a = prec ? s.op_norm_loss : s.l1_loss;
        const MetricSummary& b = prec ? s.frob_loss : s.l2_loss;
        os << csv_quote(s.method) << ',' << s.n_ok << ',' << s.n_failed << ',' << format_number(a.mean) << ','
           << format_number(a.se) << ',' << format_number(b.mean) << ',' << format_number(b.se) << ','
           << format_number(s.fp.mean) << ',' << format_number(s.fp.se) << ',' << format_number(s.fn.mean) << ','
           << format_number(s.fn.se) << ',' << format_number(s.chosen_lambda.mean) << ','
           << format_number(s.validation_error.mean) << '\n';
    }
}

}  // namespace fcp
