#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include "fcp/errors.hpp"

namespace fcp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

// |value| above this counts as a nonzero coefficient.
inline constexpr double kSupportThreshold = 1e-8;

// Sorted parameter indices. For vector problems these are coordinates; for
// precision problems each entry is the key of an off-diagonal pair j < k.
using Support = std::vector<Index>;

inline Index pair_key(Index q, Index j, Index k) {
    if (j > k) std::swap(j, k);
    return j * q + k;
}

inline std::pair<Index, Index> pair_from_key(Index q, Index key) {
    return {key / q, key % q};
}

inline Index off_diagonal_pairs(Index q) { return q * (q - 1) / 2; }

// Coefficients of a fitted model: a length-p vector, or a symmetric q x q
// matrix for the precision problem. The support is always derived on demand.
class Estimate {
public:
    Estimate() : values_(Vector()) {}
    explicit Estimate(Vector v) : values_(std::move(v)) {}
    explicit Estimate(Matrix m) : values_(std::move(m)) {}

    static Estimate zeros(Index p) { return Estimate(Vector(Vector::Zero(p))); }

    bool is_matrix() const { return std::holds_alternative<Matrix>(values_); }

    const Vector& vector() const {
        if (is_matrix()) throw ValidationError("estimate holds a matrix, not a vector");
        return std::get<Vector>(values_);
    }
    const Matrix& matrix() const {
        if (!is_matrix()) throw ValidationError("estimate holds a vector, not a matrix");
        return std::get<Matrix>(values_);
    }

    // Length of the coefficient vector, or q for a precision matrix.
    Index dimension() const { return is_matrix() ? matrix().rows() : vector().size(); }

    Support support(double threshold = kSupportThreshold) const {
        Support s;
        if (is_matrix()) {
            const Matrix& m = matrix();
            const Index q = m.rows();
            for (Index j = 0; j < q; ++j)
                for (Index k = j + 1; k < q; ++k)
                    if (std::abs(m(j, k)) > threshold || std::abs(m(k, j)) > threshold)
                        s.push_back(pair_key(q, j, k));
        } else {
            const Vector& v = vector();
            for (Index j = 0; j < v.size(); ++j)
                if (std::abs(v[j]) > threshold) s.push_back(j);
        }
        return s;
    }

    double max_abs_diff(const Estimate& other) const {
        if (is_matrix() != other.is_matrix() || dimension() != other.dimension())
            throw ValidationError("estimates have different shapes");
        if (is_matrix()) return (matrix() - other.matrix()).cwiseAbs().maxCoeff();
        if (vector().size() == 0) return 0.0;
        return (vector() - other.vector()).cwiseAbs().maxCoeff();
    }

    double max_abs() const {
        if (is_matrix()) return matrix().size() ? matrix().cwiseAbs().maxCoeff() : 0.0;
        return vector().size() ? vector().cwiseAbs().maxCoeff() : 0.0;
    }

    bool operator==(const Estimate& other) const {
        if (is_matrix() != other.is_matrix()) return false;
        if (is_matrix())
            return matrix().rows() == other.matrix().rows() && matrix() == other.matrix();
        return vector().size() == other.vector().size() && vector() == other.vector();
    }

private:
    std::variant<Vector, Matrix> values_;
};

// Per-coordinate l1 weights: length p for vector problems, or a symmetric
// q x q matrix with zero diagonal for the precision problem.
class WeightVector {
public:
    explicit WeightVector(Vector w) : values_(std::move(w)) { validate(); }
    explicit WeightVector(Matrix w) : values_(std::move(w)) { validate(); }

    static WeightVector uniform(Index p, double value) {
        return WeightVector(Vector(Vector::Constant(p, value)));
    }
    static WeightVector uniform_off_diagonal(Index q, double value) {
        Matrix w = Matrix::Constant(q, q, value);
        w.diagonal().setZero();
        return WeightVector(std::move(w));
    }

    bool is_matrix() const { return std::holds_alternative<Matrix>(values_); }
    const Vector& vector() const {
        if (is_matrix()) throw ValidationError("weights hold a matrix, not a vector");
        return std::get<Vector>(values_);
    }
    const Matrix& matrix() const {
        if (!is_matrix()) throw ValidationError("weights hold a vector, not a matrix");
        return std::get<Matrix>(values_);
    }

private:
    void validate() const {
        if (is_matrix()) {
            const Matrix& w = std::get<Matrix>(values_);
            if (w.rows() != w.cols()) throw ValidationError("weight matrix must be square");
            if (!w.allFinite() || (w.array() < 0).any())
                throw ValidationError("weights must be finite and nonnegative");
            if ((w - w.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + w.cwiseAbs().maxCoeff()))
                throw ValidationError("weight matrix must be symmetric");
        } else {
            const Vector& w = std::get<Vector>(values_);
            if (!w.allFinite() || (w.array() < 0).any())
                throw ValidationError("weights must be finite and nonnegative");
        }
    }

    std::variant<Vector, Matrix> values_;
};

inline double soft_threshold(double z, double w) {
    if (z > w) return z - w;
    if (z < -w) return z + w;
    return 0.0;
}

inline double sign(double x) { return (x > 0) - (x < 0); }

}  // namespace fcp
