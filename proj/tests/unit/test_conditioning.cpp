#include "dagem/conditioning.hpp"
#include "dagem/datagen.hpp"
#include "dagem/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace dagem;

namespace {

Vector drop(const Vector& x, int t) {
    Vector out(x.size() - 1);
    for (int j = 0, k = 0; j < x.size(); ++j) {
        if (j != t) out(k++) = x(j);
    }
    return out;
}

}  // namespace

TEST_CASE("observed ordering helpers") {
    CHECK(observed_indices(4, 2) == std::vector<int>{0, 1, 3});
    CHECK(observed_position(1, 2) == 1);
    CHECK(observed_position(3, 2) == 2);
}

TEST_CASE("isolated target has zero weights and its own variance") {
    const DagSpec dag = make_dag({"A", "T", "B"}, {{"A", "B"}});
    SemParams p = make_params(dag);
    p.coefficients(2, 0) = 1.3;
    p.variances(1) = 2.5;
    p.intercepts(1) = -4.0;
    for (const ConditionalLaw& law : {conditional_law(p, dag, 1), conditional_law(implied_covariance(p, dag), 1)}) {
        CHECK(law.weights.isZero());
        CHECK(law.variance == doctest::Approx(2.5));
        CHECK(law.offset == doctest::Approx(-4.0));
        Matrix obs(3, 2);
        obs << 1, 2, 3, 4, 5, 6;
        const Vector mu = impute_batch(law, obs);
        CHECK((mu.array() == law.offset).all());
    }
}

TEST_CASE("chain with the child missing") {
    const DagSpec dag = make_dag({"X1", "X2"}, {{"X1", "X2"}});
    SemParams p = make_params(dag);
    p.coefficients(1, 0) = 2.0;
    p.intercepts(1) = 3.0;
    const ConditionalLaw law = conditional_law(p, dag, 1);
    REQUIRE(law.weights.size() == 1);
    CHECK(law.weights(0) == doctest::Approx(2.0));
    CHECK(law.variance == doctest::Approx(1.0));
    CHECK(law.offset == doctest::Approx(3.0));

    Matrix sigma(2, 2);
    sigma << 1, 2, 2, 5;
    Vector x(1);
    x << 0.7;
    const auto ref = oracle::schur(sigma, Vector::Map(std::vector<double>{0.0, 3.0}.data(), 2), 1, x);
    CHECK(law.mean_at(x) == doctest::Approx(ref.mean).epsilon(1e-14));
    CHECK(law.variance == doctest::Approx(ref.variance).epsilon(1e-14));
}

TEST_CASE("seven-node conditioning matches the dense Schur oracle") {
    const SemModel model = seven_node_example({0.7, -0.4, 1.1, 2.0});
    const int t = model.dag.index_of("T");
    const ConditionalLaw law = conditional_law(model.params, model.dag, t);
    const Matrix sigma = oracle::dense_covariance(model.params);
    const Vector m = oracle::dense_mean(model.params);

    const Matrix full = sample(model.params, model.dag, 100, 99);
    const TargetData data = split_target(full, t);
    const Vector mu = impute_batch(law, data.observed);
    for (int i = 0; i < 100; ++i) {
        const auto ref = oracle::schur(sigma, m, t, data.observed.row(i).transpose());
        CHECK(std::abs(mu(i) - ref.mean) < 1e-10);
        CHECK(std::abs(law.variance - ref.variance) < 1e-10);
    }
    const ConditionalLaw dense = conditional_law(implied_covariance(model.params, model.dag), t);
    CHECK((dense.weights - law.weights).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("precision row equals the full precision row") {
    const SemModel model = seven_node_example();
    const Matrix k = implied_precision(model.params);
    for (int t = 0; t < 7; ++t) {
        CHECK((precision_row(model.params, model.dag, t) - k.row(t).transpose()).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("impute_batch edge cases") {
    const SemModel model = seven_node_example();
    const int t = model.dag.index_of("T");
    const ConditionalLaw law = conditional_law(model.params, model.dag, t);
    Matrix centred(1, 6);
    centred.row(0) = law.observed_mean.transpose();
    CHECK(impute_batch(law, centred)(0) == doctest::Approx(law.offset));
    CHECK_THROWS_AS((void)impute_batch(law, Matrix::Zero(3, 5)), DataError);
}

TEST_CASE("precision form equals Schur form on random SEMs") {
    std::mt19937_64 rng(5150);
    double worst = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
        const int p = 3 + rep % 10;
        const auto sem = oracle::random_sem(p, rng);
        const DagSpec dag = make_dag(sem.names, sem.edges);
        SemParams params = make_params(dag);
        for (std::size_t e = 0; e < sem.edges.size(); ++e) {
            params.coefficients(dag.index_of(sem.edges[e].second), dag.index_of(sem.edges[e].first)) =
                sem.weights[e];
        }
        for (int k = 0; k < p; ++k) {
            params.intercepts(k) = sem.intercepts[k];
            params.variances(k) = sem.variances[k];
        }
        const int t = static_cast<int>(rng() % static_cast<unsigned>(p));
        const ConditionalLaw law = conditional_law(params, dag, t);
        const Matrix sigma = oracle::dense_covariance(params);
        const Vector m = oracle::dense_mean(params);
        std::normal_distribution<double> z;
        Vector x(p);
        for (int j = 0; j < p; ++j) x(j) = m(j) + std::sqrt(sigma(j, j)) * z(rng);
        const Vector xr = drop(x, t);
        const auto ref = oracle::schur(sigma, m, t, xr);
        worst = std::max({worst, std::abs(law.mean_at(xr) - ref.mean), std::abs(law.variance - ref.variance)});
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("law of total variance by Monte Carlo") {
    const SemModel model = seven_node_example();
    const int t = model.dag.index_of("T");
    const ConditionalLaw law = conditional_law(model.params, model.dag, t);
    const std::size_t n = 200'000;
    const TargetData data = split_target(sample(model.params, model.dag, n, 4242), t);
    const Vector mu = impute_batch(law, data.observed);
    const double var_mu = (mu.array() - mu.mean()).square().sum() / static_cast<double>(n - 1);
    const double var_t = oracle::dense_covariance(model.params)(t, t);
    const double nn = static_cast<double>(n);
    CHECK(std::abs(law.variance + var_mu - var_t) < 3.0 * std::sqrt(2.0 / (nn - 1.0)) * var_t);
    const Vector resid = data.truth - mu;
    CHECK(std::abs(resid.squaredNorm() / nn - law.variance) < 3.0 * std::sqrt(2.0 / nn) * law.variance);
}
