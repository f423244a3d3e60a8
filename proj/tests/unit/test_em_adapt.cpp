#include "dagem/conditioning.hpp"
#include "dagem/datagen.hpp"
#include "dagem/em_adapt.hpp"
#include "dagem/errors.hpp"
#include "dagem/fitting.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

using namespace dagem;

namespace {

// E-step statistics assembled directly from a design and imputed means.
ImputedStats make_stats(const Matrix& design, const Vector& mu, double v) {
    ImputedStats s;
    const double n = static_cast<double>(design.rows());
    s.design = std::make_shared<const Matrix>(design);
    s.parent_moment = design.transpose() * design / n;
    s.cross_moment = design.transpose() * mu / n;
    s.conditional_means = mu;
    s.conditional_variance = v;
    s.response_second_moment = mu.squaredNorm() / n;
    return s;
}

ImputedStats moment_stats(const Matrix& m, const Vector& v) {
    ImputedStats s;
    s.parent_moment = m;
    s.cross_moment = v;
    s.conditional_variance = 1.0;
    return s;
}

struct Shifted {
    SemModel model;
    SemParams target_law;
    SemParams source_fit;
    TargetData data;
    int t;
};

Shifted seven_node_shifted(std::size_t n, std::uint64_t seed) {
    Shifted s{seven_node_example(), {}, {}, {}, 0};
    s.t = s.model.dag.index_of("T");
    s.target_law = apply_shift(s.model.params, s.model.dag, default_mechanism_shift(s.model));
    s.source_fit = fit_dag_source(s.model.dag, sample(s.model.params, s.model.dag, n, derive_seed(seed, 1)));
    s.data = split_target(sample(s.target_law, s.model.dag, n, derive_seed(seed, 2)), s.t);
    return s;
}

}  // namespace

TEST_CASE("config validation names the field") {
    EmConfig c;
    c.tol_b = 0.0;
    try {
        c.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("tol_b") != std::string::npos);
    }
    c = EmConfig{};
    c.variance_max = 1e-9;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("e_step with an uninformative target imputes its mean") {
    const DagSpec dag = make_dag({"A", "T", "B"}, {{"A", "T"}});
    SemParams p = make_params(dag);
    p.intercepts(1) = 2.5;
    Matrix obs(4, 2);
    obs << 1, 9, 2, 8, 3, 7, 6, 6;
    const ImputedStats s = e_step(p, dag, 1, obs, true);
    CHECK((s.conditional_means.array() == 2.5).all());
    CHECK(s.cross_moment(0) == doctest::Approx(2.5 * 3.0));
    CHECK(s.cross_moment(1) == doctest::Approx(2.5));
    CHECK(s.conditional_variance == doctest::Approx(1.0));
}

TEST_CASE("e_step cross moment at the generating law matches E[x_pa T]") {
    const SemModel model = seven_node_example();
    const int t = model.dag.index_of("T");
    const std::size_t n = 200'000;
    const TargetData data = split_target(sample(model.params, model.dag, n, 61), t);
    const ImputedStats s = e_step(model.params, model.dag, t, data.observed, true);
    const Matrix sigma = oracle::dense_covariance(model.params);
    const Vector m = oracle::dense_mean(model.params);
    const auto& pa = model.dag.parents[t];
    const Matrix design = parent_design(model.dag, t, data.observed, true);
    for (std::size_t j = 0; j < pa.size(); ++j) {
        const double expected = sigma(pa[j], t) + m(pa[j]) * m(t);
        const Vector prod = design.col(static_cast<Eigen::Index>(j)).cwiseProduct(data.truth);
        const double sd = std::sqrt((prod.array() - prod.mean()).square().sum() / static_cast<double>(n - 1));
        CHECK(std::abs(s.cross_moment(static_cast<Eigen::Index>(j)) - expected) <
              3.0 * sd / std::sqrt(static_cast<double>(n)));
    }
}

TEST_CASE("e_step under a mechanism shift moves the cross moment") {
    const Shifted s = seven_node_shifted(5000, 3);
    const ImputedStats stats = e_step(s.source_fit, s.model.dag, s.t, s.data.observed, true);
    const Matrix sigma = implied_covariance(s.source_fit, s.model.dag).covariance;
    const Vector m = implied_mean(s.source_fit, s.model.dag);
    const auto& pa = s.model.dag.parents[s.t];
    double gap = 0.0;
    for (std::size_t j = 0; j < pa.size(); ++j) {
        gap = std::max(gap, std::abs(stats.cross_moment(static_cast<Eigen::Index>(j)) -
                                     (sigma(pa[j], s.t) + m(pa[j]) * m(s.t))));
    }
    CHECK(gap > 1.0);
}

TEST_CASE("surrogate shape") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> z;
    Matrix d(40, 3);
    Vector mu(40);
    for (int i = 0; i < 40; ++i) {
        d.row(i) << z(rng), z(rng), 1.0;
        mu(i) = 2.0 * d(i, 0) - d(i, 1) + z(rng);
    }
    const ImputedStats s = make_stats(d, mu, 0.3);
    const Vector b_star = exact_m_step(s);
    const double sigma2 = 1.7;

    // Stationarity by central differences.
    for (int j = 0; j < 3; ++j) {
        Vector e = Vector::Zero(3);
        e(j) = 1e-5;
        const double g = (surrogate_value(s, b_star + e, sigma2) - surrogate_value(s, b_star - e, sigma2)) / 2e-5;
        CHECK(std::abs(g) < 1e-6);
    }
    for (int rep = 0; rep < 20; ++rep) {
        const Vector b = b_star + Vector::NullaryExpr(3, [&] { return z(rng); });
        const Vector diff = b - b_star;
        const double expected = -0.5 / sigma2 * diff.dot(s.parent_moment * diff);
        CHECK(surrogate_value(s, b, sigma2) - surrogate_value(s, b_star, sigma2) ==
              doctest::Approx(expected).epsilon(1e-10));
        const double q1 = surrogate_value(s, b, sigma2) - surrogate_value(s, b_star, sigma2);
        const double q2 = surrogate_value(s, b, 2 * sigma2) - surrogate_value(s, b_star, 2 * sigma2);
        CHECK(q2 == doctest::Approx(0.5 * q1).epsilon(1e-10));
    }
}

TEST_CASE("gradient step") {
    const ImputedStats s = moment_stats(Matrix::Identity(2, 2), Vector::Zero(2));
    const double eta = default_step_size(s, 1.0);
    CHECK(eta == doctest::Approx(1.0));
    const Vector b = gradient_m_step(s, Vector::Unit(2, 0), 1.0, eta);
    CHECK(b.isZero(0.0));

    Matrix m(2, 2);
    m << 4, 0, 0, 1;
    CHECK(default_step_size(moment_stats(m, Vector::Zero(2)), 2.0) == doctest::Approx(0.5));

    std::mt19937_64 rng(2);
    std::normal_distribution<double> z;
    Matrix d(30, 2);
    for (int i = 0; i < 30; ++i) d.row(i) << z(rng), z(rng);
    const Vector mu = Vector::NullaryExpr(30, [&] { return z(rng); });
    const double eta1 = default_step_size(make_stats(d, mu, 1.0), 1.0);
    const double eta2 = default_step_size(make_stats(2.0 * d, mu, 1.0), 1.0);
    CHECK(eta2 == doctest::Approx(eta1 / 4.0));

    const ImputedStats st = make_stats(d, mu, 1.0);
    const Vector fixed = exact_m_step(st);
    CHECK((gradient_m_step(st, fixed, 1.3, 0.7) - fixed).norm() < 1e-12);
    CHECK((gradient_m_step(st, fixed, 0.2, 5.0) - fixed).norm() < 1e-12);

    CHECK_THROWS_AS((void)default_step_size(moment_stats(Matrix::Zero(2, 2), Vector::Zero(2)), 1.0), NumericalError);
}

TEST_CASE("exact step") {
    Vector v(3);
    v << 1, -2, 0.5;
    CHECK(exact_m_step(moment_stats(Matrix::Identity(3, 3), v)) == v);

    std::mt19937_64 rng(23);
    std::normal_distribution<double> z;
    for (int rep = 0; rep < 50; ++rep) {
        const int d = 1 + rep % 6;
        const Matrix a = Matrix::NullaryExpr(d, d, [&] { return z(rng); });
        const Matrix spd = a * a.transpose() + 0.1 * Matrix::Identity(d, d);
        const Vector rhs = Vector::NullaryExpr(d, [&] { return z(rng); });
        const Vector ref = spd.fullPivLu().solve(rhs);
        CHECK((exact_m_step(moment_stats(spd, rhs)) - ref).cwiseAbs().maxCoeff() < 1e-10 * (1.0 + ref.norm()));
    }
    Matrix singular(2, 2);
    singular << 1, 1, 1, 1;
    CHECK_THROWS_AS((void)exact_m_step(moment_stats(singular, Vector::Ones(2))), NumericalError);
    Matrix ill(2, 2);
    ill << 1, 0, 0, 1e-9;
    CHECK_THROWS_AS((void)exact_m_step(moment_stats(ill, Vector::Ones(2)), 1e6), NumericalError);
}

TEST_CASE("variance update") {
    Matrix d(3, 2);
    d << 1, 1, 2, 1, 3, 1;
    Vector b(2);
    b << 0.5, -1.0;
    const Vector mu = d * b;
    CHECK(variance_update(make_stats(d, mu, 0.5), b, 0.01, 100.0) == doctest::Approx(0.5));

    Vector far = mu;
    far(0) += std::sqrt(3.0 * 149.5);
    CHECK(variance_update(make_stats(d, far, 0.5), b, 0.01, 150.5) == doctest::Approx(150.0));
    CHECK(variance_update(make_stats(d, far, 0.5), b, 0.01, 100.0) == 100.0);

    std::mt19937_64 rng(4);
    std::normal_distribution<double> z;
    Matrix x(25, 3);
    for (int i = 0; i < 25; ++i) x.row(i) << z(rng), z(rng), 1.0;
    const Vector m = Vector::NullaryExpr(25, [&] { return 3.0 * z(rng); });
    const Vector bb = Vector::NullaryExpr(3, [&] { return z(rng); });
    double brute = 0.0;
    for (int i = 0; i < 25; ++i) {
        double fit = 0.0;
        for (int j = 0; j < 3; ++j) fit += bb(j) * x(i, j);
        brute += 0.8 + (m(i) - fit) * (m(i) - fit);
    }
    brute /= 25.0;
    CHECK(std::abs(variance_update(make_stats(x, m, 0.8), bb, 1e-6, 1e6) - brute) < 1e-12);
}

TEST_CASE("safe step never decreases the surrogate; a long step can") {
    std::mt19937_64 rng(1234);
    std::normal_distribution<double> z;
    std::uniform_int_distribution<int> dims(1, 6);
    double worst = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
        const int d = dims(rng);
        const int n = 10 + d * 5;
        Matrix x(n, d);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) x(i, j) = z(rng) * std::exp(z(rng));
        }
        const Vector mu = Vector::NullaryExpr(n, [&] { return 4.0 * z(rng); });
        const ImputedStats s = make_stats(x, mu, std::exp(z(rng)));
        const Vector b = Vector::NullaryExpr(d, [&] { return 2.0 * z(rng); });
        const double sigma2 = std::exp(z(rng));
        const double eta = default_step_size(s, sigma2);
        const Vector b_new = gradient_m_step(s, b, sigma2, eta);
        const double s2_new = variance_update(s, b_new, 1e-6, 1e6);
        worst = std::min(worst, surrogate_value(s, b_new, sigma2) - surrogate_value(s, b, sigma2));
        worst = std::min(worst, surrogate_value(s, b_new, s2_new) - surrogate_value(s, b, sigma2));
    }
    CHECK(worst >= -1e-10);

    const ImputedStats bad = moment_stats(Matrix::Identity(2, 2), Vector::Zero(2));
    const double eta = 3.0 * default_step_size(bad, 1.0);
    const Vector b0 = Vector::Unit(2, 0);
    CHECK(surrogate_value(bad, gradient_m_step(bad, b0, 1.0, eta), 1.0) < surrogate_value(bad, b0, 1.0));
}

TEST_CASE("zero iterations return the source parameters") {
    const Shifted s = seven_node_shifted(2000, 9);
    EmConfig c;
    c.max_iterations = 0;
    const AdaptResult r = adapt(s.source_fit, s.model.dag, s.t, s.data.observed, c);
    CHECK(r.params.coefficients == s.source_fit.coefficients);
    CHECK(r.params.intercepts == s.source_fit.intercepts);
    CHECK(r.params.variances == s.source_fit.variances);
    CHECK(r.trace.iterations.empty());

    c.refit_roots = {"C2"};
    const AdaptResult rr = adapt(s.source_fit, s.model.dag, s.t, s.data.observed, c);
    const SemParams refit =
        refit_root_marginals(s.source_fit, s.model.dag, s.t, s.data.observed, {s.model.dag.index_of("C2")});
    CHECK(rr.params.intercepts == refit.intercepts);
    CHECK(rr.params.variances == refit.variances);
}

TEST_CASE("seven-node mechanism shift recovers the shifted coefficients") {
    const Shifted s = seven_node_shifted(5000, 21);
    const AdaptResult r = adapt(s.source_fit, s.model.dag, s.t, s.data.observed);
    const Vector truth = active_coefficients(s.target_law, s.model.dag, s.t, false);
    const Vector got = active_coefficients(r.params, s.model.dag, s.t, false);
    CHECK((got - truth).cwiseAbs().maxCoeff() < 0.1);

    EmConfig exact;
    exact.m_step_mode = MStepMode::Exact;
    const AdaptResult re = adapt(s.source_fit, s.model.dag, s.t, s.data.observed, exact);
    CHECK((active_coefficients(re.params, s.model.dag, s.t, false) - truth).cwiseAbs().maxCoeff() < 0.1);
    CHECK(re.trace.termination == Termination::Converged);
}

TEST_CASE("frozen block is bit-identical") {
    const Shifted s = seven_node_shifted(3000, 5);
    for (const auto mode : {MStepMode::Gradient, MStepMode::Exact}) {
        EmConfig c;
        c.m_step_mode = mode;
        c.max_iterations = 50;
        const AdaptResult r = adapt(s.source_fit, s.model.dag, s.t, s.data.observed, c);
        for (int k = 0; k < 7; ++k) {
            if (k == s.t) continue;
            CHECK(r.params.intercepts(k) == s.source_fit.intercepts(k));
            CHECK(r.params.variances(k) == s.source_fit.variances(k));
            for (int j = 0; j < 7; ++j) CHECK(r.params.coefficients(k, j) == s.source_fit.coefficients(k, j));
        }
        for (int j = 0; j < 7; ++j) {
            if (s.model.dag.parents[s.t].end() ==
                std::find(s.model.dag.parents[s.t].begin(), s.model.dag.parents[s.t].end(), j)) {
                CHECK(r.params.coefficients(s.t, j) == 0.0);
            }
        }
    }
}

TEST_CASE("no shift keeps the target mechanism near the source fit") {
    const SemModel model = seven_node_example();
    const int t = model.dag.index_of("T");
    const SemParams fit = fit_dag_source(model.dag, sample(model.params, model.dag, 5000, 71));
    const TargetData data = split_target(sample(model.params, model.dag, 5000, 72), t);
    EmConfig c;
    c.m_step_mode = MStepMode::Exact;
    const AdaptResult r = adapt(fit, model.dag, t, data.observed, c);
    CHECK((active_coefficients(r.params, model.dag, t, true) - active_coefficients(fit, model.dag, t, true))
              .cwiseAbs()
              .maxCoeff() < 0.1);
}

TEST_CASE("intercept can be held fixed") {
    const Shifted s = seven_node_shifted(2000, 12);
    EmConfig c;
    c.include_intercept = false;
    c.max_iterations = 20;
    const AdaptResult r = adapt(s.source_fit, s.model.dag, s.t, s.data.observed, c);
    CHECK(r.params.intercepts(s.t) == s.source_fit.intercepts(s.t));
    CHECK(r.trace.initial_b.size() == 3);
}

TEST_CASE("parentless target requires opt-in") {
    const DagSpec dag = make_dag({"T", "Y"}, {{"T", "Y"}});
    SemParams p = make_params(dag);
    p.coefficients(1, 0) = 1.0;
    const TargetData data = split_target(sample(p, dag, 100, 1), 0);
    CHECK_THROWS_AS((void)adapt(p, dag, 0, data.observed), ConfigError);
    EmConfig c;
    c.allow_parentless_target = true;
    CHECK_NOTHROW((void)adapt(p, dag, 0, data.observed, c));
}

TEST_CASE("trace export") {
    const Shifted s = seven_node_shifted(500, 2);
    EmConfig c;
    c.max_iterations = 3;
    const AdaptResult r = adapt(s.source_fit, s.model.dag, s.t, s.data.observed, c);
    std::ostringstream out;
    write_trace_csv(out, r.trace);
    const std::string text = out.str();
    CHECK(text.rfind("iteration,b0,b1,b2,b3,sigma2,surrogate,grad_norm,eta\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
    for (const auto& it : r.trace.iterations) CHECK(it.surrogate_after >= it.surrogate_before - 1e-10);
    CHECK(r.trace.active_path().size() == 4);
}
