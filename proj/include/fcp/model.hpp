#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>

#include "fcp/errors.hpp"
#include "fcp/penalty.hpp"
#include "fcp/types.hpp"

namespace fcp {

enum class LossKind { Linear, Logistic, Quantile, Precision };

inline std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::Linear: return "linear";
        case LossKind::Logistic: return "logistic";
        case LossKind::Quantile: return "quantile";
        case LossKind::Precision: return "precision";
    }
    return "?";
}

// Relative band inside which a quantile residual counts as exactly zero.
inline constexpr double kZeroResidualTol = 1e-10;

// A convex loss together with its data. Copies share the underlying arrays.
class Problem {
public:
    static Problem linear(Matrix design, Vector response) {
        return Problem(LossKind::Linear, std::move(design), std::move(response), 0.0);
    }
    static Problem logistic(Matrix design, Vector response) {
        return Problem(LossKind::Logistic, std::move(design), std::move(response), 0.0);
    }
    static Problem quantile(Matrix design, Vector response, double tau) {
        return Problem(LossKind::Quantile, std::move(design), std::move(response), tau);
    }
    // `observations` is informational (the n behind the sample covariance).
    static Problem precision(Matrix sample_cov, Index observations = 0) {
        if (sample_cov.rows() != sample_cov.cols() || sample_cov.rows() == 0)
            throw ValidationError("sample covariance must be a nonempty square matrix");
        if (!sample_cov.allFinite()) throw ValidationError("sample covariance has non-finite entries");
        if ((sample_cov - sample_cov.transpose()).cwiseAbs().maxCoeff() > 1e-12)
            throw ValidationError("sample covariance must be symmetric");
        if ((sample_cov.diagonal().array() <= 0).any())
            throw ValidationError("sample covariance diagonal must be positive");
        Problem pr;
        pr.kind_ = LossKind::Precision;
        pr.cov_ = std::make_shared<const Matrix>(std::move(sample_cov));
        pr.observations_ = observations;
        return pr;
    }

    LossKind kind() const { return kind_; }
    bool is_precision() const { return kind_ == LossKind::Precision; }
    double tau() const { return tau_; }

    const Matrix& design() const { require_vector_problem(); return *design_; }
    const Vector& response() const { require_vector_problem(); return *response_; }
    const Matrix& sample_cov() const {
        if (!is_precision()) throw UnsupportedOperation("only precision problems carry a sample covariance");
        return *cov_;
    }

    // Observations: rows of the design, or the sample size behind the covariance.
    Index n() const { return is_precision() ? observations_ : design_->rows(); }
    // Number of coefficients, or q for the precision problem.
    Index p() const { return is_precision() ? cov_->rows() : design_->cols(); }

    Estimate zero_estimate() const {
        if (is_precision()) return Estimate(Matrix(Matrix::Zero(p(), p())));
        return Estimate::zeros(p());
    }

    void check_compatible(const Estimate& est) const {
        if (est.is_matrix() != is_precision() || est.dimension() != p())
            throw ValidationError("estimate shape does not match the problem");
    }

    void check_compatible(const WeightVector& w) const {
        if (w.is_matrix() != is_precision())
            throw ValidationError("weight shape does not match the problem");
        const Index dim = w.is_matrix() ? w.matrix().rows() : w.vector().size();
        if (dim != p()) throw ValidationError("weight dimension does not match the problem");
    }

private:
    Problem() = default;

    Problem(LossKind kind, Matrix design, Vector response, double tau) : kind_(kind), tau_(tau) {
        if (design.rows() != response.size())
            throw ValidationError("design rows (" + std::to_string(design.rows()) +
                                  ") differ from response length (" + std::to_string(response.size()) + ")");
        if (design.rows() == 0 || design.cols() == 0) throw ValidationError("design must be nonempty");
        if (!design.allFinite() || !response.allFinite())
            throw ValidationError("design and response must be finite");
        if (kind == LossKind::Logistic)
            for (Index i = 0; i < response.size(); ++i)
                if (response[i] != 0.0 && response[i] != 1.0)
                    throw ValidationError("logistic response must be 0/1");
        if (kind == LossKind::Quantile && !(tau > 0.0 && tau < 1.0))
            throw ValidationError("quantile level tau must lie in (0,1)");
        design_ = std::make_shared<const Matrix>(std::move(design));
        response_ = std::make_shared<const Vector>(std::move(response));
    }

    void require_vector_problem() const {
        if (is_precision()) throw UnsupportedOperation("precision problems have no design/response");
    }

    LossKind kind_ = LossKind::Linear;
    double tau_ = 0.0;
    std::shared_ptr<const Matrix> design_;
    std::shared_ptr<const Vector> response_;
    std::shared_ptr<const Matrix> cov_;
    Index observations_ = 0;
};

// log(1 + e^t) without overflow.
inline double log1p_exp(double t) {
    return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

inline double sigmoid(double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

inline double check_loss(double u, double tau) { return u * (tau - (u <= 0 ? 1.0 : 0.0)); }

// log det of a symmetric positive definite matrix; throws DomainError otherwise.
inline double log_det_pd(const Matrix& m) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) throw DomainError("matrix is not positive definite");
    const Vector d = llt.matrixLLT().diagonal();
    if ((d.array() <= 0).any() || !d.allFinite()) throw DomainError("matrix is not positive definite");
    return 2.0 * d.array().log().sum();
}

inline bool is_positive_definite(const Matrix& m) {
    if (m.rows() != m.cols() || !m.allFinite()) return false;
    Eigen::LLT<Matrix> llt(m);
    return llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0).all();
}

inline double loss_value(const Problem& problem, const Estimate& est) {
    problem.check_compatible(est);
    switch (problem.kind()) {
        case LossKind::Linear: {
            const Vector r = problem.response() - problem.design() * est.vector();
            return r.squaredNorm() / (2.0 * static_cast<double>(problem.n()));
        }
        case LossKind::Logistic: {
            const Vector eta = problem.design() * est.vector();
            const Vector& y = problem.response();
            double total = 0.0;
            for (Index i = 0; i < eta.size(); ++i) total += -y[i] * eta[i] + log1p_exp(eta[i]);
            return total / static_cast<double>(problem.n());
        }
        case LossKind::Quantile: {
            const Vector r = problem.response() - problem.design() * est.vector();
            double total = 0.0;
            for (Index i = 0; i < r.size(); ++i) total += check_loss(r[i], problem.tau());
            return total / static_cast<double>(problem.n());
        }
        case LossKind::Precision: {
            const Matrix& theta = est.matrix();
            return -log_det_pd(theta) + (theta.cwiseProduct(problem.sample_cov())).sum();
        }
    }
    return 0.0;
}

// Gradient of the smooth losses. Precision returns the q x q matrix S - Theta^{-1}.
inline Estimate loss_gradient(const Problem& problem, const Estimate& est) {
    problem.check_compatible(est);
    const double n = static_cast<double>(problem.n());
    switch (problem.kind()) {
        case LossKind::Linear: {
            const Vector r = problem.design() * est.vector() - problem.response();
            return Estimate(Vector(problem.design().transpose() * r / n));
        }
        case LossKind::Logistic: {
            Vector mu = problem.design() * est.vector();
            for (Index i = 0; i < mu.size(); ++i) mu[i] = sigmoid(mu[i]);
            return Estimate(Vector(problem.design().transpose() * (mu - problem.response()) / n));
        }
        case LossKind::Quantile:
            throw UnsupportedOperation("quantile loss is not differentiable; use subgradient_interval");
        case LossKind::Precision: {
            Eigen::LLT<Matrix> llt(est.matrix());
            if (llt.info() != Eigen::Success) throw DomainError("precision estimate is not positive definite");
            const Matrix inv = llt.solve(Matrix::Identity(problem.p(), problem.p()));
            return Estimate(Matrix(problem.sample_cov() - inv));
        }
    }
    return est;
}

struct SubgradientInterval {
    Vector lo;
    Vector hi;
};

// Attainable values of the j-th subgradient of the check loss. A residual is
// treated as zero when |r_i| <= 1e-10 (1 + |y_i|); its observation then
// contributes -x_ij z with z ranging over [tau - 1, tau].
inline SubgradientInterval subgradient_interval(const Problem& problem, const Estimate& est) {
    if (problem.kind() != LossKind::Quantile)
        throw UnsupportedOperation("subgradient_interval is defined for quantile problems only");
    problem.check_compatible(est);
    const Matrix& x = problem.design();
    const Vector& y = problem.response();
    const double tau = problem.tau();
    const double n = static_cast<double>(problem.n());
    const Vector r = y - x * est.vector();

    Vector base(x.rows());
    Vector zero_mask = Vector::Zero(x.rows());
    for (Index i = 0; i < r.size(); ++i) {
        if (std::abs(r[i]) <= kZeroResidualTol * (1.0 + std::abs(y[i]))) {
            base[i] = 0.0;
            zero_mask[i] = 1.0;
        } else {
            base[i] = r[i] > 0 ? -tau : 1.0 - tau;
        }
    }
    SubgradientInterval out{x.transpose() * base / n, Vector()};
    out.hi = out.lo;
    for (Index i = 0; i < r.size(); ++i) {
        if (zero_mask[i] == 0.0) continue;
        for (Index j = 0; j < x.cols(); ++j) {
            // -x z for z in [tau-1, tau]
            const double a = -x(i, j) * (tau - 1.0) / n;
            const double b = -x(i, j) * tau / n;
            out.lo[j] += std::min(a, b);
            out.hi[j] += std::max(a, b);
        }
    }
    return out;
}

// Sample covariance with divisor n.
inline Matrix sample_covariance(const Matrix& data) {
    if (data.rows() < 2) throw InsufficientData("sample covariance needs at least two observations");
    const Eigen::RowVectorXd mean = data.colwise().mean();
    const Matrix centered = data.rowwise() - mean;
    Matrix s = centered.transpose() * centered / static_cast<double>(data.rows());
    // exact symmetry
    s = (s + s.transpose()).eval() * 0.5;
    return s;
}

// Sum of weights times |coefficient|; off-diagonal entries of a matrix are
// counted once per ordered pair (j, k), j != k.
inline double weighted_l1(const Estimate& est, const WeightVector& w) {
    if (est.is_matrix()) {
        const Matrix& t = est.matrix();
        Matrix a = t.cwiseAbs().cwiseProduct(w.matrix());
        a.diagonal().setZero();
        return a.sum();
    }
    return est.vector().cwiseAbs().dot(w.vector());
}

inline double weighted_l1_objective(const Problem& problem, const Estimate& est, const WeightVector& w) {
    return loss_value(problem, est) + weighted_l1(est, w);
}

// The folded concave objective: loss + sum_j P(|beta_j|), precision
// penalizing every off-diagonal entry.
inline double folded_concave_objective(const Problem& problem, const Estimate& est, const PenaltySpec& pen) {
    double penalty = 0.0;
    if (est.is_matrix()) {
        const Matrix& t = est.matrix();
        for (Index j = 0; j < t.rows(); ++j)
            for (Index k = 0; k < t.cols(); ++k)
                if (j != k) penalty += pen.value(t(j, k));
    } else {
        for (Index j = 0; j < est.vector().size(); ++j) penalty += pen.value(est.vector()[j]);
    }
    return loss_value(problem, est) + penalty;
}

}  // namespace fcp
