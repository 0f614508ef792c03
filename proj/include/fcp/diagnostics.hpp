#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fcp/lla.hpp"
#include "fcp/simulation.hpp"

namespace fcp {

// Starting point whose distance to the truth defines delta0.
struct InitializerChoice {
    enum class Kind { Zero, LassoTuned, LassoFixed, ClimeTuned, ClimeFixed, DiagInverse, Truth };
    Kind kind = Kind::LassoTuned;
    double lambda = 0.0;  // for the fixed variants

    static InitializerChoice zero() { return {Kind::Zero, 0.0}; }
    static InitializerChoice lasso_tuned() { return {Kind::LassoTuned, 0.0}; }
    static InitializerChoice lasso(double lam) { return {Kind::LassoFixed, lam}; }
    static InitializerChoice clime_tuned() { return {Kind::ClimeTuned, 0.0}; }
    static InitializerChoice clime(double lam) { return {Kind::ClimeFixed, lam}; }
    static InitializerChoice diag_inverse() { return {Kind::DiagInverse, 0.0}; }
    static InitializerChoice truth() { return {Kind::Truth, 0.0}; }
};

inline std::string to_string(const InitializerChoice& c) {
    switch (c.kind) {
        case InitializerChoice::Kind::Zero: return "zero";
        case InitializerChoice::Kind::LassoTuned: return "lasso-tuned";
        case InitializerChoice::Kind::LassoFixed: return "lasso:" + format_number(c.lambda);
        case InitializerChoice::Kind::ClimeTuned: return "clime-tuned";
        case InitializerChoice::Kind::ClimeFixed: return "clime:" + format_number(c.lambda);
        case InitializerChoice::Kind::DiagInverse: return "diag-inverse";
        case InitializerChoice::Kind::Truth: return "truth";
    }
    return "?";
}

// zero | lasso | lasso:<lambda> | clime | clime:<lambda> | diag-inverse | truth
inline InitializerChoice parse_initializer(const std::string& s) {
    const auto colon = s.find(':');
    const std::string head = s.substr(0, colon);
    std::optional<double> lam;
    if (colon != std::string::npos) {
        try {
            std::size_t used = 0;
            lam = std::stod(s.substr(colon + 1), &used);
            if (used != s.size() - colon - 1 || !(*lam > 0.0)) throw ValidationError("");
        } catch (const std::exception&) {
            throw ValidationError("bad initializer lambda in '" + s + "'");
        }
    }
    if (head == "zero" && !lam) return InitializerChoice::zero();
    if (head == "lasso") return lam ? InitializerChoice::lasso(*lam) : InitializerChoice::lasso_tuned();
    if (head == "clime") return lam ? InitializerChoice::clime(*lam) : InitializerChoice::clime_tuned();
    if ((head == "diag-inverse" || head == "diag") && !lam) return InitializerChoice::diag_inverse();
    if (head == "truth" && !lam) return InitializerChoice::truth();
    throw ValidationError("unknown initializer '" + s + "'");
}

inline Estimate build_initializer(const ExperimentConfig& cfg, const InitializerChoice& choice,
                                  const Replication& rep) {
    using K = InitializerChoice::Kind;
    switch (choice.kind) {
        case K::Zero: return make_initializer(InitializerKind::Zero, rep.train);
        case K::DiagInverse: return make_initializer(InitializerKind::DiagInverse, rep.train);
        case K::Truth: return rep.truth;
        case K::LassoFixed: return make_initializer(InitializerKind::Lasso, rep.train, choice.lambda, cfg.solver);
        case K::ClimeFixed: return make_initializer(InitializerKind::Clime, rep.train, choice.lambda, cfg.solver);
        case K::LassoTuned:
        case K::ClimeTuned: {
            MethodSpec m;
            m.kind = choice.kind == K::LassoTuned ? MethodKind::Lasso : MethodKind::Clime;
            if (m.kind == MethodKind::Lasso && rep.train.is_precision())
                throw ValidationError("lasso initializer is for vector problems");
            if (m.kind == MethodKind::Clime && !rep.train.is_precision())
                throw ValidationError("CLIME initializer is for precision problems");
            return tune_lambda(cfg, rep.train, rep.validation, m).estimate;
        }
    }
    throw ValidationError("unknown initializer");
}

struct DeltaEstimate {
    double value = 0.0;
    double se = 0.0;
};

struct RepEvents {
    std::uint64_t rep = 0;
    bool ok = false;
    std::string error;
    EventReport events;
};

struct DeltaReport {
    DeltaEstimate delta0, delta1, delta2;
    int reps = 0;
    int used = 0;
    int failed = 0;
    std::vector<RepEvents> per_rep;
};

// Monte Carlo frequencies of
//   delta0: ||init - truth||_max > a0 lambda
//   delta1: ||grad_{A^c} loss(oracle)||_max >= a1 lambda
//   delta2: ||oracle_A||_min <= a lambda
// over fresh replications of `cfg`. Only the oracle fit (and the initializer
// for delta0) is computed. Failed replications are excluded and counted.
inline DeltaReport estimate_deltas(const ExperimentConfig& cfg, const PenaltySpec& penalty,
                                   const InitializerChoice& init, int reps) {
    if (reps < 1) throw ValidationError("estimate_deltas needs reps >= 1");
    cfg.validate();
    DeltaReport out;
    out.reps = reps;
    out.per_rep.resize(static_cast<std::size_t>(reps));
    parallel_for(static_cast<std::size_t>(reps), cfg.threads, [&](std::size_t r) {
        RepEvents& ev = out.per_rep[r];
        ev.rep = r;
        try {
            const Replication rep = generate(cfg, r);
            const Estimate start = build_initializer(cfg, init, rep);
            Estimate oracle = oracle_estimator(rep.train, rep.support, cfg.solver);
            ev.events = check_events(rep.train, penalty, start, rep.truth, rep.support, oracle);
            ev.events.oracle = Estimate();  // not needed downstream
            ev.ok = true;
        } catch (const std::exception& e) {
            ev.error = e.what();
        }
    });
    int c0 = 0, c1 = 0, c2 = 0;
    for (const auto& ev : out.per_rep) {
        if (!ev.ok) {
            ++out.failed;
            continue;
        }
        ++out.used;
        c0 += ev.events.e1_init_close ? 0 : 1;
        c1 += ev.events.e1_gradient_small ? 0 : 1;
        c2 += ev.events.e2_signal_large ? 0 : 1;
    }
    const auto est = [&](int c) {
        DeltaEstimate d;
        if (out.used == 0) {
            d.value = d.se = std::numeric_limits<double>::quiet_NaN();
            return d;
        }
        const double m = static_cast<double>(out.used);
        d.value = c / m;
        d.se = std::sqrt(d.value * (1.0 - d.value) / m);
        return d;
    };
    out.delta0 = est(c0);
    out.delta1 = est(c1);
    out.delta2 = est(c2);
    return out;
}

}  // namespace fcp
