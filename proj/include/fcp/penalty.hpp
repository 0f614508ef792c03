#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "fcp/errors.hpp"

namespace fcp {

enum class PenaltyFamily { SCAD, MCP, HardThreshold };

inline std::string_view to_string(PenaltyFamily f) {
    switch (f) {
        case PenaltyFamily::SCAD: return "scad";
        case PenaltyFamily::MCP: return "mcp";
        case PenaltyFamily::HardThreshold: return "hard";
    }
    return "?";
}

inline PenaltyFamily parse_penalty_family(std::string_view s) {
    if (s == "scad" || s == "SCAD") return PenaltyFamily::SCAD;
    if (s == "mcp" || s == "MCP") return PenaltyFamily::MCP;
    if (s == "hard" || s == "hard-threshold" || s == "HardThreshold") return PenaltyFamily::HardThreshold;
    throw ValidationError("unknown penalty family '" + std::string(s) + "'");
}

inline double default_concavity(PenaltyFamily f) {
    switch (f) {
        case PenaltyFamily::SCAD: return 3.7;
        case PenaltyFamily::MCP: return 2.0;
        case PenaltyFamily::HardThreshold: return 1.0;
    }
    return 1.0;
}

// Constants of the folded concave class: P'(t) >= a1*lambda on (0, a2*lambda],
// and a0 = min(1, a2) is the localizability radius used by the one-step result.
struct FoldedConcaveConstants {
    double a1;
    double a2;
    double a0;
};

class PenaltySpec {
public:
    PenaltySpec(PenaltyFamily family, double lambda, double a)
        : family_(family), lambda_(lambda),
          a_(family == PenaltyFamily::HardThreshold ? 1.0 : a) {
        validate();
    }
    PenaltySpec(PenaltyFamily family, double lambda)
        : PenaltySpec(family, lambda, default_concavity(family)) {}

    static PenaltySpec scad(double lambda, double a = 3.7) { return {PenaltyFamily::SCAD, lambda, a}; }
    static PenaltySpec mcp(double lambda, double a = 2.0) { return {PenaltyFamily::MCP, lambda, a}; }
    static PenaltySpec hard(double lambda) { return {PenaltyFamily::HardThreshold, lambda, 1.0}; }

    PenaltyFamily family() const { return family_; }
    double lambda() const { return lambda_; }
    double a() const { return a_; }

    PenaltySpec with_lambda(double lambda) const { return {family_, lambda, a_}; }

    FoldedConcaveConstants constants() const {
        double a1 = 1.0, a2 = 1.0;
        switch (family_) {
            case PenaltyFamily::SCAD: a1 = 1.0; a2 = 1.0; break;
            case PenaltyFamily::MCP: a1 = 1.0 - 1.0 / a_; a2 = 1.0; break;
            case PenaltyFamily::HardThreshold: a1 = 1.0; a2 = 0.5; break;
        }
        return {a1, a2, std::min(1.0, a2)};
    }

    // P'_lambda(t) for t >= 0; at t = 0 this is the right derivative. Kinks take
    // the left-continuous branch.
    double derivative(double t) const {
        if (!(t >= 0.0)) throw DomainError("penalty derivative requires t >= 0");
        const double lam = lambda_;
        switch (family_) {
            case PenaltyFamily::SCAD:
                if (t <= lam) return lam;
                return std::max(a_ * lam - t, 0.0) / (a_ - 1.0);
            case PenaltyFamily::MCP:
                return std::max(lam - t / a_, 0.0);
            case PenaltyFamily::HardThreshold:
                return t < lam ? 2.0 * (lam - t) : 0.0;
        }
        return 0.0;
    }

    // P_lambda(|t|).
    double value(double t) const {
        const double x = std::abs(t);
        const double lam = lambda_;
        switch (family_) {
            case PenaltyFamily::SCAD:
                if (x <= lam) return lam * x;
                if (x <= a_ * lam) return (2.0 * a_ * lam * x - x * x - lam * lam) / (2.0 * (a_ - 1.0));
                return (a_ + 1.0) * lam * lam / 2.0;
            case PenaltyFamily::MCP:
                if (x <= a_ * lam) return lam * x - x * x / (2.0 * a_);
                return a_ * lam * lam / 2.0;
            case PenaltyFamily::HardThreshold:
                if (x < lam) return lam * lam - (x - lam) * (x - lam);
                return lam * lam;
        }
        return 0.0;
    }

private:
    void validate() const {
        if (!(lambda_ > 0.0) || !std::isfinite(lambda_))
            throw ValidationError("penalty lambda must be positive and finite");
        if (family_ == PenaltyFamily::SCAD && !(a_ > 2.0))
            throw ValidationError("SCAD requires a > 2");
        if (family_ == PenaltyFamily::MCP && !(a_ > 1.0))
            throw ValidationError("MCP requires a > 1");
        if (!std::isfinite(a_)) throw ValidationError("concavity parameter must be finite");
    }

    PenaltyFamily family_;
    double lambda_;
    double a_;
};

inline double penalty_derivative(const PenaltySpec& spec, double t) { return spec.derivative(t); }
inline double penalty_value(const PenaltySpec& spec, double t) { return spec.value(t); }
inline FoldedConcaveConstants folded_concave_constants(const PenaltySpec& spec) { return spec.constants(); }

}  // namespace fcp
