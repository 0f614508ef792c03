#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "fcp/diagnostics.hpp"
#include "fcp/simulation.hpp"

using namespace fcp;

namespace {

ExperimentConfig small_m1() {
    ExperimentConfig c;
    c.model = ModelId::M1;
    c.n = 60;
    c.p = 30;
    c.reps = 4;
    c.grid_size = 12;
    c.master_seed = 99;
    return c;
}

std::string rows_csv(const ExperimentResult& r) {
    std::ostringstream os;
    write_rows_csv(os, r);
    return os.str();
}

}  // namespace

TEST(Rng, ReproducibleAndDistinctStreams) {
    Rng a = Rng::for_replication(5, 0), b = Rng::for_replication(5, 0), c = Rng::for_replication(5, 1);
    for (int i = 0; i < 100; ++i) {
        const double x = a.normal();
        EXPECT_EQ(x, b.normal());
        EXPECT_NE(x, c.normal());
    }
    Rng r(1);
    double mean = 0, var = 0;
    for (int i = 0; i < 20000; ++i) {
        const double z = r.normal();
        mean += z;
        var += z * z;
    }
    EXPECT_NEAR(mean / 20000, 0.0, 0.03);
    EXPECT_NEAR(var / 20000, 1.0, 0.04);
    const auto s = r.sample_without_replacement(10, 10);
    EXPECT_EQ(std::set<Index>(s.begin(), s.end()).size(), 10u);
    for (int i = 0; i < 1000; ++i) EXPECT_LT(r.below(7), 7u);
}

TEST(Methods, LabelGrammar) {
    MethodSpec m = parse_method("SCAD-2slla*");
    EXPECT_EQ(m.kind, MethodKind::Lla);
    EXPECT_EQ(m.family, PenaltyFamily::SCAD);
    EXPECT_EQ(m.mode, LlaMode::TwoStep);
    EXPECT_TRUE(m.tuned_init);
    EXPECT_EQ(display_label(m, false), "SCAD-2slla*");
    EXPECT_EQ(display_label(m, true), "GSCAD-2slla*");

    m = parse_method("gmcp-lla0");
    EXPECT_EQ(m.family, PenaltyFamily::MCP);
    EXPECT_EQ(m.mode, LlaMode::Converged);
    EXPECT_FALSE(m.tuned_init);
    EXPECT_EQ(display_label(m, true), "GMCP-lla0");

    m = parse_method("mcp-3slla0");
    EXPECT_EQ(m.mode, LlaMode::KStep);
    EXPECT_EQ(m.k, 3);
    EXPECT_EQ(parse_method("hard-1slla*").mode, LlaMode::OneStep);
    EXPECT_EQ(parse_method("glasso").kind, MethodKind::Lasso);
    EXPECT_EQ(display_label(parse_method("lasso"), true), "GLASSO");
    EXPECT_EQ(parse_method("clime").kind, MethodKind::Clime);
    for (const char* bad : {"scad", "scad-lla", "scad-2lla0", "scad-0slla0", "foo-lla0", "scad-lla0x", "ridge"})
        EXPECT_THROW(parse_method(bad), ValidationError) << bad;
}

TEST(Config, Validation) {
    ExperimentConfig c = small_m1();
    EXPECT_NO_THROW(c.validate());
    c.lambda_grid = {0.2, 0.1};
    EXPECT_THROW(c.validate(), ValidationError);
    c = small_m1();
    c.model = ModelId::M3;
    c.tau = 1.0;
    EXPECT_THROW(c.validate(), ValidationError);
    c = small_m1();
    c.methods = {"clime"};
    EXPECT_THROW(c.validate(), ValidationError);
    c = small_m1();
    c.reps = 0;
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Generate, ModelOneTruthAndCovariance) {
    ExperimentConfig c = small_m1();
    const Replication r = generate(c, 0);
    EXPECT_EQ(r.support, Support({0, 1, 4}));
    EXPECT_EQ(r.truth.vector()[0], 3.0);
    EXPECT_EQ(r.truth.vector()[1], 1.5);
    EXPECT_EQ(r.truth.vector()[4], 2.0);
    EXPECT_EQ(r.train.n(), 60);
    EXPECT_EQ(r.validation.n(), 60);

    c.n = 10000;
    c.p = 6;
    const Replication big = generate(c, 3);
    const Matrix s = big.train_x.transpose() * big.train_x / 10000.0;
    for (Index i = 0; i < 6; ++i)
        for (Index j = 0; j < 6; ++j) EXPECT_NEAR(s(i, j), std::pow(0.5, std::abs(i - j)), 0.05);
    EXPECT_NEAR(s(0, 2), 0.25, 0.05);
    // residual variance 1
    const Vector res = big.train.response() - big.train.design() * big.truth.vector();
    EXPECT_NEAR(res.squaredNorm() / 10000.0, 1.0, 0.05);
}

TEST(Generate, ReproducibleByRepIndex) {
    const ExperimentConfig c = small_m1();
    const Replication a = generate(c, 2), b = generate(c, 2), d = generate(c, 3);
    EXPECT_EQ(a.train_x, b.train_x);
    EXPECT_EQ(a.train.response(), b.train.response());
    EXPECT_NE(a.train_x, d.train_x);
}

TEST(Generate, RandomSignalModels) {
    ExperimentConfig c = small_m1();
    c.model = ModelId::M2;
    const Replication r = generate(c, 0);
    EXPECT_EQ(r.support.size(), 10u);
    for (Index j : r.support) {
        EXPECT_GE(std::abs(r.truth.vector()[j]), 1.0);
        EXPECT_LE(std::abs(r.truth.vector()[j]), 2.0);
    }
    for (Index i = 0; i < r.train.n(); ++i) EXPECT_TRUE(r.train.response()[i] == 0.0 || r.train.response()[i] == 1.0);
    EXPECT_EQ(r.train.kind(), LossKind::Logistic);

    c.model = ModelId::M3;
    c.tau = 0.3;
    c.n = 4000;
    const Replication q = generate(c, 1);
    EXPECT_EQ(q.train.kind(), LossKind::Quantile);
    EXPECT_EQ(q.train.tau(), 0.3);
    // Cauchy noise: about half of |e| exceeds 1
    const Vector e = q.train.response() - q.train.design() * q.truth.vector();
    int over = 0;
    for (Index i = 0; i < e.size(); ++i) over += std::abs(e[i]) > 1.0;
    EXPECT_NEAR(over / 4000.0, 0.5, 0.04);

    c = small_m1();
    c.signal_scale = 2.0;
    EXPECT_EQ(generate(c, 0).truth.vector()[1], 3.0);
}

TEST(Generate, ModelFourPrecisionIsTridiagonalInverse) {
    ExperimentConfig c;
    c.model = ModelId::M4;
    c.n = 50;
    c.p = 12;
    const Replication r = generate(c, 0);
    const Matrix& t = r.truth.matrix();
    for (Index j = 0; j < 12; ++j)
        for (Index k = 0; k < 12; ++k)
            if (std::abs(j - k) >= 2) {
                EXPECT_EQ(t(j, k), 0.0);
            }
    // its inverse is an AR-type covariance: unit diagonal, multiplicative off-diagonal
    const Matrix s = t.inverse();
    for (Index j = 0; j < 12; ++j) EXPECT_NEAR(s(j, j), 1.0, 1e-10);
    for (Index j = 0; j + 1 < 12; ++j) {
        EXPECT_GE(s(j, j + 1), std::exp(-1.0) - 1e-10);
        EXPECT_LE(s(j, j + 1), std::exp(-0.5) + 1e-10);
        for (Index k = j + 2; k < 12; ++k) EXPECT_NEAR(s(j, k), s(j, k - 1) * s(k - 1, k), 1e-10);
    }
    EXPECT_EQ(r.support.size(), 11u);
    EXPECT_EQ(r.train.p(), 12);
}

TEST(Generate, ModelFiveIsPositiveDefinite) {
    ExperimentConfig c;
    c.model = ModelId::M5;
    c.n = 50;
    c.p = 15;
    c.m5_nonzeros = 20;
    const Replication r = generate(c, 4);
    const Matrix& t = r.truth.matrix();
    EXPECT_TRUE(t.isApprox(t.transpose(), 0.0));
    const Eigen::SelfAdjointEigenSolver<Matrix> es(t);
    EXPECT_GE(es.eigenvalues().minCoeff(), 1.0 - 1e-10);
    EXPECT_GT(r.support.size(), 0u);
    EXPECT_EQ(r.redraws, 0);
}

TEST(Validation, ErrorFormulas) {
    ExperimentConfig c = small_m1();
    const Replication r = generate(c, 0);
    const Problem exact = Problem::linear(r.validation.design(), r.validation.design() * r.truth.vector());
    EXPECT_NEAR(validation_error(exact, r.truth), 0.0, 1e-20);
    const Estimate zero = Estimate::zeros(30);
    EXPECT_NEAR(validation_error(r.validation, r.truth), 2.0 * 60 * loss_value(r.validation, r.truth), 1e-9);
    EXPECT_NEAR(validation_error(r.validation, zero), r.validation.response().squaredNorm(), 1e-9);

    c.model = ModelId::M2;
    const Replication l = generate(c, 0);
    EXPECT_NEAR(validation_error(l.validation, l.truth), 60 * loss_value(l.validation, l.truth), 1e-9);
    c.model = ModelId::M3;
    const Replication q = generate(c, 0);
    EXPECT_NEAR(validation_error(q.validation, q.truth), 60 * loss_value(q.validation, q.truth), 1e-9);

    ExperimentConfig pc;
    pc.model = ModelId::M4;
    pc.n = 40;
    pc.p = 6;
    const Replication p = generate(pc, 0);
    const Estimate eye(Matrix(Matrix::Identity(6, 6)));
    EXPECT_NEAR(validation_error(p.validation, eye), p.validation.sample_cov().trace(), 1e-12);
    Matrix bad = Matrix::Identity(6, 6);
    bad(2, 2) = -1.0;
    EXPECT_THROW(validation_error(p.validation, Estimate(bad)), DomainError);
}

TEST(Tuning, GridAndTieRules) {
    EXPECT_EQ(argmin_prefer_larger({0.1, 0.2, 0.3}, {1.0, 0.5, 0.5}), 2u);
    EXPECT_EQ(argmin_prefer_larger({0.1, 0.2, 0.3}, {0.4, 0.5, std::nan("")}), 0u);
    EXPECT_EQ(argmin_prefer_larger({0.1}, {std::nan("")}), 1u);

    ExperimentConfig c = small_m1();
    const Replication r = generate(c, 0);
    MethodSpec lasso = parse_method("lasso");
    c.lambda_grid = {0.37};
    EXPECT_EQ(tune_lambda(c, r.train, r.validation, lasso).best_lambda, 0.37);

    // both values at or above lambda_max give the zero fit: tie goes to the larger
    const double top = lambda_max(r.train);
    c.lambda_grid = {1.5 * top, 3.0 * top};
    const TuneResult t = tune_lambda(c, r.train, r.validation, lasso);
    EXPECT_EQ(t.errors[0], t.errors[1]);
    EXPECT_EQ(t.best_lambda, 3.0 * top);

    // automatic grid: 12 ascending log-spaced values ending at lambda_max
    c.lambda_grid.clear();
    const auto g = lambda_grid(c, r.train);
    ASSERT_EQ(g.size(), 12u);
    EXPECT_NEAR(g.back(), top, 1e-12 * top);
    EXPECT_NEAR(g.front(), 0.01 * top, 1e-12 * top);
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_GT(g[i], g[i - 1]);
}

TEST(Tuning, PicksIndependentArgmin) {
    ExperimentConfig c = small_m1();
    const Replication r = generate(c, 1);
    for (const char* label : {"lasso", "scad-lla0", "mcp-2slla*"}) {
        const MethodSpec m = parse_method(label);
        std::optional<Estimate> init;
        if (m.tuned_init) init = tune_lambda(c, r.train, r.validation, parse_method("lasso")).estimate;
        const TuneResult t = tune_lambda(c, r.train, r.validation, m, init ? &*init : nullptr);
        // recompute every fit from scratch and the argmin by hand
        double best = std::numeric_limits<double>::infinity(), best_lam = 0;
        for (double lam : t.grid) {
            const Estimate e = fit_method(c, m, r.train, lam, init ? &*init : nullptr);
            const Vector res = r.validation.response() - r.validation.design() * e.vector();
            const double err = res.squaredNorm();
            if (err < best - 1e-9 || (std::abs(err - best) <= 1e-9 && lam > best_lam)) {
                best = err;
                best_lam = lam;
            }
        }
        EXPECT_EQ(t.best_lambda, best_lam) << label;
        EXPECT_NEAR(t.best_error, best, 1e-6) << label;
    }
}

TEST(Tuning, AllFailuresRaise) {
    ExperimentConfig c = small_m1();
    c.solver.max_iter = 1;
    c.solver.tol = 1e-15;
    c.lambda_grid = {0.001, 0.002};
    const Replication r = generate(c, 0);
    EXPECT_THROW(tune_lambda(c, r.train, r.validation, parse_method("lasso")), ConvergenceError);
}

TEST(Metrics, Examples) {
    Vector t = Vector::Zero(6);
    t << 3.0, 1.5, 0.0, 0.0, 2.0, 0.0;
    const Estimate truth(t);
    const Support a{0, 1, 4};
    MetricsRow m = compute_metrics(truth, truth, a);
    EXPECT_EQ(m.l1_loss, 0.0);
    EXPECT_EQ(m.false_positives + m.false_negatives, 0);

    Vector e = t;
    e[1] = 0.0;
    m = compute_metrics(Estimate(e), truth, a);
    EXPECT_EQ(m.false_negatives, 1);
    EXPECT_DOUBLE_EQ(m.l1_loss, 1.5);

    e = t;
    e[3] = 0.1;
    m = compute_metrics(Estimate(e), truth, a);
    EXPECT_EQ(m.false_positives, 1);
    EXPECT_DOUBLE_EQ(m.l2_loss, 0.1);
    EXPECT_EQ(m.true_positives + m.true_negatives + m.false_positives + m.false_negatives, 6);
    const MetricsRow back = compute_metrics(truth, Estimate(e), Estimate(e).support());
    EXPECT_EQ(back.l2_loss, m.l2_loss);

    Matrix th = Matrix::Identity(4, 4);
    th(0, 1) = th(1, 0) = 0.5;
    Matrix est = Matrix::Identity(4, 4);
    est(2, 3) = est(3, 2) = 0.2;
    m = compute_metrics(Estimate(est), Estimate(th), Estimate(th).support());
    EXPECT_EQ(m.false_positives, 1);
    EXPECT_EQ(m.false_negatives, 1);
    EXPECT_EQ(m.true_negatives, 4);
    EXPECT_NEAR(m.frob_loss, std::sqrt(2 * 0.25 + 2 * 0.04), 1e-12);
    EXPECT_NEAR(m.op_norm_loss, 0.5, 1e-12);
}

TEST(Experiment, DeterministicAcrossRunsAndThreads) {
    ExperimentConfig c = small_m1();
    c.methods = {"lasso", "scad-2slla*", "mcp-lla0"};
    const std::string one = rows_csv(run_experiment(c));
    EXPECT_EQ(one, rows_csv(run_experiment(c)));
    c.threads = 3;
    EXPECT_EQ(one, rows_csv(run_experiment(c)));
    c.master_seed = 100;
    EXPECT_NE(one, rows_csv(run_experiment(c)));
}

TEST(Experiment, SummaryMatchesRows) {
    ExperimentConfig c = small_m1();
    c.reps = 5;
    const ExperimentResult r = run_experiment(c);
    ASSERT_EQ(r.summary.size(), 2u);
    for (std::size_t m = 0; m < 2; ++m) {
        double l2 = 0, fp = 0;
        for (const auto& row : r.rows[m]) {
            ASSERT_TRUE(row.ok) << row.error;
            l2 += row.l2_loss;
            fp += static_cast<double>(row.false_positives);
        }
        EXPECT_NEAR(r.summary[m].l2_loss.mean, l2 / 5, 1e-12);
        EXPECT_NEAR(r.summary[m].fp.mean, fp / 5, 1e-12);
        EXPECT_EQ(r.summary[m].n_ok, 5);
    }
    std::ostringstream os;
    write_summary_csv(os, r);
    EXPECT_NE(os.str().find("LASSO,5,0,"), std::string::npos);
}

TEST(Experiment, SingleRepSingleLambda) {
    ExperimentConfig c = small_m1();
    c.reps = 1;
    c.methods = {"scad-lla0"};
    c.lambda_grid = {0.3};
    const ExperimentResult r = run_experiment(c);
    const std::string csv = rows_csv(r);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
    EXPECT_EQ(r.rows[0][0].chosen_lambda, 0.3);
}

TEST(Experiment, PrecisionMethods) {
    ExperimentConfig c;
    c.model = ModelId::M4;
    c.n = 60;
    c.p = 8;
    c.reps = 2;
    c.grid_size = 8;
    c.clime_grid_size = 5;
    c.methods = {"glasso", "clime", "gscad-2slla*", "gmcp-3slla0"};
    const ExperimentResult r = run_experiment(c);
    for (const auto& rows : r.rows)
        for (const auto& row : rows) EXPECT_TRUE(row.ok) << row.method << ": " << row.error;
    EXPECT_EQ(r.labels[0], "GLASSO");
    EXPECT_EQ(r.labels[2], "GSCAD-2slla*");
}

TEST(Deltas, TrivialCases) {
    ExperimentConfig c = small_m1();
    const DeltaReport one = estimate_deltas(c, PenaltySpec::scad(0.3), InitializerChoice::lasso(0.1), 1);
    for (double v : {one.delta0.value, one.delta1.value, one.delta2.value}) EXPECT_TRUE(v == 0.0 || v == 1.0);
    const DeltaReport again = estimate_deltas(c, PenaltySpec::scad(0.3), InitializerChoice::lasso(0.1), 1);
    EXPECT_EQ(one.delta0.value, again.delta0.value);
    EXPECT_EQ(one.per_rep[0].events.oracle_gradient, again.per_rep[0].events.oracle_gradient);

    const DeltaReport truth = estimate_deltas(c, PenaltySpec::scad(0.3), InitializerChoice::truth(), 8);
    EXPECT_EQ(truth.delta0.value, 0.0);
    const DeltaReport huge = estimate_deltas(c, PenaltySpec::scad(50.0), InitializerChoice::zero(), 8);
    EXPECT_EQ(huge.delta2.value, 1.0);
    const DeltaReport tiny = estimate_deltas(c, PenaltySpec::scad(1e-4), InitializerChoice::zero(), 8);
    EXPECT_EQ(tiny.delta1.value, 1.0);
    EXPECT_THROW(estimate_deltas(c, PenaltySpec::scad(0.3), InitializerChoice::zero(), 0), ValidationError);
}

TEST(Deltas, StandardErrorIsBinomial) {
    ExperimentConfig c = small_m1();
    const DeltaReport r = estimate_deltas(c, PenaltySpec::scad(0.2), InitializerChoice::lasso(0.1), 40);
    for (const auto& d : {r.delta0, r.delta1, r.delta2})
        EXPECT_NEAR(d.se, std::sqrt(d.value * (1 - d.value) / 40), 1e-15);
    EXPECT_EQ(r.used + r.failed, 40);
}

TEST(Deltas, InitializerParsing) {
    EXPECT_EQ(parse_initializer("lasso").kind, InitializerChoice::Kind::LassoTuned);
    EXPECT_EQ(parse_initializer("lasso:0.2").lambda, 0.2);
    EXPECT_EQ(parse_initializer("truth").kind, InitializerChoice::Kind::Truth);
    EXPECT_EQ(parse_initializer("diag-inverse").kind, InitializerChoice::Kind::DiagInverse);
    EXPECT_THROW(parse_initializer("lasso:-1"), ValidationError);
    EXPECT_THROW(parse_initializer("ridge"), ValidationError);
}
