#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "fcp/wl1_solvers.hpp"
#include "oracles.hpp"

using namespace fcp;

namespace {

Vector random_weights(std::mt19937_64& rng, Index p, double lo, double hi) {
    std::uniform_real_distribution<double> ud(lo, hi);
    Vector w(p);
    for (auto& v : w) v = ud(rng);
    return w;
}

Vector sparse_signal(std::mt19937_64& rng, Index p, int s) {
    Vector b = Vector::Zero(p);
    std::uniform_int_distribution<Index> pick(0, p - 1);
    std::uniform_real_distribution<double> mag(0.5, 2.0);
    for (int k = 0; k < s; ++k) b[pick(rng)] = (k % 2 ? -1.0 : 1.0) * mag(rng);
    return b;
}

}  // namespace

TEST(LinearSolver, ZeroWeightsGiveLeastSquares) {
    std::mt19937_64 rng(1);
    const Matrix x = oracle::random_matrix(40, 6, rng);
    const Vector y = oracle::random_matrix(40, 1, rng).col(0);
    const Estimate b = solve_weighted_l1_linear(Problem::linear(x, y), WeightVector::uniform(6, 0.0));
    const Vector ols = x.colPivHouseholderQr().solve(y);
    EXPECT_LE((b.vector() - ols).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LinearSolver, OrthonormalDesignIsSoftThresholding) {
    std::mt19937_64 rng(2);
    const Index n = 64, p = 16;
    Eigen::HouseholderQR<Matrix> qr(oracle::random_matrix(n, p, rng));
    const Matrix x = qr.householderQ() * Matrix::Identity(n, p) * std::sqrt(static_cast<double>(n));
    for (int rep = 0; rep < 50; ++rep) {
        const Vector y = oracle::random_matrix(n, 1, rng).col(0);
        const Vector w = random_weights(rng, p, 0.0, 0.3);
        const Estimate b = solve_weighted_l1_linear(Problem::linear(x, y), WeightVector(w));
        const Vector z = x.transpose() * y / static_cast<double>(n);
        for (Index j = 0; j < p; ++j) EXPECT_NEAR(b.vector()[j], soft_threshold(z[j], w[j]), 1e-8);
    }
}

TEST(LinearSolver, LargeWeightsGiveZero) {
    std::mt19937_64 rng(3);
    const Matrix x = oracle::random_matrix(30, 50, rng);
    const Vector y = oracle::random_matrix(30, 1, rng).col(0);
    const double lm = (x.transpose() * y / 30.0).cwiseAbs().maxCoeff();
    const Estimate b = solve_weighted_l1_linear(Problem::linear(x, y), WeightVector::uniform(50, lm * 1.0001));
    EXPECT_EQ(b.vector(), Vector::Zero(50));
}

TEST(LinearSolver, RandomInstancesPassIndependentKkt) {
    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 50; ++rep) {
        const Index n = 20 + rep, p = 5 + rep % 40;
        const Matrix x = oracle::random_matrix(n, p, rng);
        const Vector y = x * sparse_signal(rng, p, 3) + oracle::random_matrix(n, 1, rng).col(0);
        Vector w = random_weights(rng, p, 0.0, 0.5);
        if (rep % 5 == 0) w.head(2).setZero();
        const Problem pr = Problem::linear(x, y);
        const Estimate b = solve_weighted_l1_linear(pr, WeightVector(w));
        EXPECT_LE(oracle::linear_kkt(x, y, b.vector(), w), 1e-7) << "rep " << rep;
        const double f = weighted_l1_objective(pr, b, WeightVector(w));
        EXPECT_LE(f, weighted_l1_objective(pr, Estimate::zeros(p), WeightVector(w)) + 1e-12);
    }
}

TEST(LinearSolver, ScalingEquivariance) {
    std::mt19937_64 rng(5);
    const Matrix x = oracle::random_matrix(40, 30, rng);
    const Vector y = x * sparse_signal(rng, 30, 4) + oracle::random_matrix(40, 1, rng).col(0);
    const Vector w = random_weights(rng, 30, 0.05, 0.3);
    const Vector b1 = solve_weighted_l1_linear(Problem::linear(x, y), WeightVector(w)).vector();
    const double c = 3.5;
    SolverOptions o;
    o.tol = 1e-10;
    const Vector b2 = solve_weighted_l1_linear(Problem::linear(x, c * y), WeightVector(Vector(c * w)), o).vector();
    const Vector b1t = solve_weighted_l1_linear(Problem::linear(x, y), WeightVector(w), o).vector();
    EXPECT_LE((b2 - c * b1t).cwiseAbs().maxCoeff(), 1e-10 * c * std::max(1.0, b1t.cwiseAbs().maxCoeff()));
    EXPECT_LE((b1 - b1t).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(LinearSolver, ReportsConvergenceFailure) {
    std::mt19937_64 rng(6);
    const Matrix x = oracle::random_matrix(30, 20, rng);
    const Vector y = oracle::random_matrix(30, 1, rng).col(0);
    SolverOptions o;
    o.max_iter = 1;
    o.tol = 1e-14;
    try {
        solve_weighted_l1_linear(Problem::linear(x, y), WeightVector::uniform(20, 0.01), o);
        SUCCEED();  // a single sweep might happen to be exact
    } catch (const ConvergenceFailure<Estimate>& e) {
        EXPECT_GT(e.residual(), 0.0);
        EXPECT_EQ(e.last_iterate().dimension(), 20);
    }
}

TEST(LogisticSolver, LargeWeightsGiveZero) {
    std::mt19937_64 rng(7);
    const Matrix x = oracle::random_matrix(40, 10, rng);
    Vector y = (oracle::random_matrix(40, 1, rng).col(0).array() > 0).cast<double>();
    const double bound = x.cwiseAbs().colwise().sum().maxCoeff() / 40.0;
    const Estimate b = solve_weighted_l1_logistic(Problem::logistic(x, y), WeightVector::uniform(10, bound));
    EXPECT_EQ(b.vector(), Vector::Zero(10));
}

TEST(LogisticSolver, MatchesGridSearch) {
    std::mt19937_64 rng(8);
    const Matrix x = oracle::random_matrix(20, 2, rng);
    Vector y(20);
    std::uniform_real_distribution<double> ud;
    for (Index i = 0; i < 20; ++i) y[i] = ud(rng) < 1.0 / (1.0 + std::exp(-(x(i, 0) - 0.5 * x(i, 1)))) ? 1.0 : 0.0;
    const Vector w = Vector::Constant(2, 0.05);
    const Problem pr = Problem::logistic(x, y);
    const Vector b = solve_weighted_l1_logistic(pr, WeightVector(w)).vector();
    auto obj = [&](const Vector& v) { return oracle::logistic_loss(x, y, v) + v.cwiseAbs().dot(w); };
    // Full [-5, 5]^2 grid at step 1e-3. Along each grid line the objective is
    // convex, so an integer ternary search finds that line's grid minimum.
    double best = std::numeric_limits<double>::infinity();
    Vector v(2);
    for (int i = -5000; i <= 5000; ++i) {
        v[0] = i * 1e-3;
        auto at = [&](int j) {
            v[1] = j * 1e-3;
            return obj(v);
        };
        int lo = -5000, hi = 5000;
        while (hi - lo > 2) {
            const int m1 = lo + (hi - lo) / 3, m2 = hi - (hi - lo) / 3;
            if (at(m1) <= at(m2)) hi = m2;
            else lo = m1;
        }
        for (int j = lo; j <= hi; ++j) best = std::min(best, at(j));
    }
    EXPECT_LE(std::abs(obj(b) - best), 1e-5);
    EXPECT_LE(obj(b), best + 1e-12);
}

TEST(LogisticSolver, RandomInstancesPassIndependentKkt) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> ud;
    for (int rep = 0; rep < 50; ++rep) {
        const Index n = 40 + rep, p = 5 + rep % 45;
        const Matrix x = oracle::random_matrix(n, p, rng);
        const Vector eta = x * sparse_signal(rng, p, 3);
        Vector y(n);
        for (Index i = 0; i < n; ++i) y[i] = ud(rng) < 1.0 / (1.0 + std::exp(-eta[i])) ? 1.0 : 0.0;
        const Vector w = random_weights(rng, p, 0.02, 0.2);
        const Problem pr = Problem::logistic(x, y);
        const Estimate b = solve_weighted_l1_logistic(pr, WeightVector(w));
        EXPECT_LE(oracle::logistic_kkt(x, y, b.vector(), w), 1e-7) << "rep " << rep;
        EXPECT_LE(weighted_l1_objective(pr, b, WeightVector(w)),
                  weighted_l1_objective(pr, Estimate::zeros(p), WeightVector(w)) + 1e-12);
    }
}

TEST(LogisticSolver, SeparableDataWithoutPenaltyFailsCleanly) {
    Matrix x(4, 1);
    x << -2, -1, 1, 2;
    Vector y(4);
    y << 0, 0, 1, 1;
    // The infimum is not attained. The solver either stops at a large finite
    // coefficient whose gradient is below tolerance or reports non-convergence.
    SolverOptions o;
    o.max_iter = 200;
    try {
        const Estimate b = solve_weighted_l1_logistic(Problem::logistic(x, y), WeightVector::uniform(1, 0.0), o);
        EXPECT_TRUE(b.vector().allFinite());
        EXPECT_GT(b.vector()[0], 5.0);
        EXPECT_LE(oracle::logistic_kkt(x, y, b.vector(), Vector::Zero(1)), 1e-7);
    } catch (const ConvergenceError& e) {
        EXPECT_GT(e.iterations(), 0);
    }
    // the restricted MLE has no minimizer at all
    EXPECT_THROW(solve_restricted(Problem::logistic(x, y), Support{0}, o), ConvergenceError);
}

TEST(QuantileSolver, MedianOfResponses) {
    Vector y(7);
    y << 3.0, -1.0, 8.0, 2.5, 0.0, 4.0, 1.0;
    const Estimate b = solve_weighted_l1_quantile(Problem::quantile(Matrix::Ones(7, 1), y, 0.5),
                                                  WeightVector::uniform(1, 0.0));
    EXPECT_NEAR(b.vector()[0], 2.5, 1e-12);
}

TEST(QuantileSolver, HugeWeightsGiveZero) {
    std::mt19937_64 rng(10);
    const Matrix x = oracle::random_matrix(30, 8, rng);
    const Vector y = oracle::random_matrix(30, 1, rng).col(0);
    const Estimate b = solve_weighted_l1_quantile(Problem::quantile(x, y, 0.3), WeightVector::uniform(8, 1e3));
    EXPECT_EQ(b.vector(), Vector::Zero(8));
}

TEST(QuantileSolver, MatchesVertexEnumeration) {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix x = oracle::random_matrix(5, 2, rng);
        const Vector y = oracle::random_matrix(5, 1, rng).col(0);
        const Vector w = random_weights(rng, 2, 0.0, 0.3);
        const double tau = rep % 2 ? 0.3 : 0.5;
        const Problem pr = Problem::quantile(x, y, tau);
        const Estimate b = solve_weighted_l1_quantile(pr, WeightVector(w));
        const double best = oracle::quantile_vertex_min(x, y, w, tau);
        EXPECT_LE(std::abs(weighted_l1_objective(pr, b, WeightVector(w)) - best), 1e-6) << "rep " << rep;
    }
}

TEST(QuantileSolver, RandomInstancesPassIndependentKkt) {
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 50; ++rep) {
        const Index n = 30 + rep, p = 5 + rep % 45;
        const Matrix x = oracle::random_matrix(n, p, rng);
        const Vector y = x * sparse_signal(rng, p, 3) + oracle::random_matrix(n, 1, rng).col(0);
        const Vector w = random_weights(rng, p, 0.0, 0.2);
        const double tau = rep % 2 ? 0.3 : 0.5;
        const Problem pr = Problem::quantile(x, y, tau);
        const Estimate b = solve_weighted_l1_quantile(pr, WeightVector(w));
        EXPECT_LE(oracle::quantile_kkt(x, y, b.vector(), w, tau), 1e-7) << "rep " << rep;
        // the library's own interval view agrees
        const auto iv = subgradient_interval(pr, b);
        for (Index j = 0; j < p; ++j) {
            const double bj = b.vector()[j];
            if (bj == 0.0) {
                EXPECT_LE(iv.lo[j] - w[j], 1e-7);
                EXPECT_GE(iv.hi[j] + w[j], -1e-7);
            } else {
                EXPECT_LE(iv.lo[j] + w[j] * sign(bj), 1e-7);
                EXPECT_GE(iv.hi[j] + w[j] * sign(bj), -1e-7);
            }
        }
    }
}

TEST(PrecisionSolver, ZeroWeightsGiveInverse) {
    std::mt19937_64 rng(13);
    const Matrix s = oracle::random_spd(6, rng);
    const Estimate t = solve_weighted_l1_precision(s, WeightVector(Matrix(Matrix::Zero(6, 6))));
    EXPECT_LE((t.matrix() - s.inverse()).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(PrecisionSolver, LargeWeightsGiveDiagonal) {
    std::mt19937_64 rng(14);
    const Matrix s = oracle::random_spd(6, rng);
    double m = 0.0;
    for (Index j = 0; j < 6; ++j)
        for (Index k = 0; k < 6; ++k)
            if (j != k) m = std::max(m, std::abs(s(j, k)));
    const Estimate t = solve_weighted_l1_precision(s, WeightVector::uniform_off_diagonal(6, m));
    const Matrix expect = s.diagonal().cwiseInverse().asDiagonal();
    EXPECT_LE((t.matrix() - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(PrecisionSolver, MatchesProximalGradientReference) {
    std::mt19937_64 rng(15);
    for (int rep = 0; rep < 5; ++rep) {
        const Matrix s = oracle::random_spd(3, rng);
        Matrix w = Matrix::Constant(3, 3, 0.05 + 0.05 * rep);
        w(0, 1) = w(1, 0) = 0.01;
        w.diagonal().setZero();
        const Estimate t = solve_weighted_l1_precision(s, WeightVector(w));
        const Matrix ref = oracle::precision_proximal_gradient(s, w);
        EXPECT_LE((t.matrix() - ref).cwiseAbs().maxCoeff(), 1e-6) << "rep " << rep;
    }
}

TEST(PrecisionSolver, RandomInstancesPassIndependentKkt) {
    std::mt19937_64 rng(16);
    std::uniform_real_distribution<double> ud(0.0, 0.3);
    for (int rep = 0; rep < 50; ++rep) {
        const Index q = 3 + rep % 12;
        const Matrix data = oracle::random_matrix(60, q, rng);
        const Matrix s = sample_covariance(data);
        Matrix w(q, q);
        for (Index j = 0; j < q; ++j)
            for (Index k = j; k < q; ++k) w(j, k) = w(k, j) = j == k ? 0.0 : ud(rng);
        const Estimate t = solve_weighted_l1_precision(s, WeightVector(w));
        EXPECT_TRUE(is_positive_definite(t.matrix()));
        EXPECT_LE(oracle::precision_kkt(s, w, t.matrix()), 1e-7) << "rep " << rep;
    }
}

TEST(Clime, IdentityCovariance) {
    const Estimate t = solve_clime(Matrix::Identity(4, 4), 0.3);
    EXPECT_LE((t.matrix() - 0.7 * Matrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-12);
    const Estimate z = solve_clime(Matrix::Identity(4, 4), 1.0);
    EXPECT_LE(z.matrix().cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(solve_clime(Matrix::Identity(2, 2), 0.0), ValidationError);
}

TEST(Clime, MatchesVertexEnumeration) {
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 10; ++rep) {
        const Matrix s = oracle::random_spd(3, rng);
        const double lam = 0.05 + 0.05 * rep;
        const ClimeResult r = solve_clime_detailed(s, lam);
        for (Index j = 0; j < 3; ++j) {
            const double best = oracle::clime_column_vertex_min(s, j, lam);
            EXPECT_LE(std::abs(r.columns.col(j).cwiseAbs().sum() - best), 1e-6) << "rep " << rep << " col " << j;
        }
    }
}

TEST(Clime, ColumnsFeasibleOutputSymmetricAndDualCertified) {
    std::mt19937_64 rng(18);
    for (int rep = 0; rep < 50; ++rep) {
        const Index q = 3 + rep % 10;
        const Matrix s = sample_covariance(oracle::random_matrix(40, q, rng));
        const double lam = 0.05 + 0.01 * (rep % 10);
        const ClimeResult r = solve_clime_detailed(s, lam);
        const Matrix& t = r.estimate.matrix();
        EXPECT_TRUE(t == t.transpose());
        for (Index j = 0; j < q; ++j) {
            const Vector col = r.columns.col(j);
            EXPECT_LE((s * col - Vector::Unit(q, j)).cwiseAbs().maxCoeff(), lam + 1e-9);
            // dual certificate of the LP: y = [y1; y2] <= 0 on the slack rows,
            // |S(y1 - y2)| <= 1 and equal objectives
            const Vector& y = r.duals[static_cast<std::size_t>(j)];
            EXPECT_LE(y.maxCoeff(), 1e-9);
            const Vector g = s * (y.head(q) - y.tail(q));
            EXPECT_LE(g.cwiseAbs().maxCoeff(), 1.0 + 1e-9);
            Vector b = Vector::Constant(2 * q, lam);
            b[j] += 1.0;
            b[q + j] -= 1.0;
            EXPECT_NEAR(b.dot(y), col.cwiseAbs().sum(), 1e-8);
        }
    }
}

TEST(Restricted, LinearSingleColumn) {
    std::mt19937_64 rng(19);
    const Matrix x = oracle::random_matrix(25, 4, rng);
    const Vector y = oracle::random_matrix(25, 1, rng).col(0);
    const Estimate b = solve_restricted(Problem::linear(x, y), Support{1});
    const double expect = (x.col(1).dot(y) / 25.0) / (x.col(1).squaredNorm() / 25.0);
    EXPECT_NEAR(b.vector()[1], expect, 1e-12);
    EXPECT_EQ(b.support(), Support({1}));
}

TEST(Restricted, LinearRankDeficient) {
    Matrix x = Matrix::Ones(10, 3);
    EXPECT_THROW(solve_restricted(Problem::linear(x, Vector::Ones(10)), Support{0, 1}), SingularityError);
}

TEST(Restricted, PrecisionMatchesSampleCovarianceOnPattern) {
    std::mt19937_64 rng(20);
    const Index q = 8;
    const Matrix s = sample_covariance(oracle::random_matrix(50, q, rng));
    Support sup;
    for (Index j = 0; j + 1 < q; ++j) sup.push_back(pair_key(q, j, j + 1));
    const Estimate t = solve_restricted(Problem::precision(s, 50), sup);
    const Matrix inv = t.matrix().inverse();
    double worst = 0.0;
    for (Index j = 0; j < q; ++j) {
        worst = std::max(worst, std::abs(inv(j, j) - s(j, j)));
        if (j + 1 < q) worst = std::max(worst, std::abs(inv(j, j + 1) - s(j, j + 1)));
        for (Index k = j + 2; k < q; ++k) EXPECT_EQ(t.matrix()(j, k), 0.0);
    }
    EXPECT_LE(worst, 1e-6);
}

TEST(Restricted, QuantileInterpolatesSupportSizeObservations) {
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix x = oracle::random_matrix(50, 10, rng);
        const Vector y = oracle::random_matrix(50, 1, rng).col(0);
        const Support sup{0, 3, 7};
        const Problem pr = Problem::quantile(x, y, 0.5);
        const Estimate b = solve_restricted(pr, sup);
        const Vector r = y - x * b.vector();
        int zeros = 0;
        for (Index i = 0; i < 50; ++i)
            if (std::abs(r[i]) <= kZeroResidualTol * (1.0 + std::abs(y[i]))) ++zeros;
        EXPECT_EQ(zeros, 3) << "rep " << rep;
    }
}
