#include "dagem/datagen.hpp"
#include "dagem/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <set>

using namespace dagem;

namespace {

std::set<std::pair<std::string, std::string>> edge_set(const DagSpec& dag) {
    std::set<std::pair<std::string, std::string>> out;
    for (std::size_t k = 0; k < dag.size(); ++k) {
        for (int j : dag.parents[k]) out.emplace(dag.names[j], dag.names[k]);
    }
    return out;
}

void check_only_changed(const SemParams& before, const SemParams& after, const std::set<int>& rows,
                        const std::set<int>& node_entries) {
    for (int k = 0; k < before.coefficients.rows(); ++k) {
        if (!node_entries.count(k)) {
            CHECK(before.intercepts(k) == after.intercepts(k));
            CHECK(before.variances(k) == after.variances(k));
        }
        if (!rows.count(k)) {
            for (int j = 0; j < before.coefficients.cols(); ++j) {
                CHECK(before.coefficients(k, j) == after.coefficients(k, j));
            }
        }
    }
}

}  // namespace

TEST_CASE("seven-node example structure") {
    const SemModel m = seven_node_example();
    const std::set<std::pair<std::string, std::string>> expected{
        {"C1", "Z"}, {"C2", "Z"}, {"C1", "X"}, {"C1", "T"}, {"X", "T"}, {"Z", "T"}, {"T", "P"}, {"T", "Y"}};
    CHECK(edge_set(m.dag) == expected);
    const auto& d = m.dag;
    CHECK(m.params.coefficients(d.index_of("Y"), d.index_of("T")) == 2.0);
    CHECK(m.params.coefficients(d.index_of("P"), d.index_of("T")) == 1.0);
    CHECK(m.params.coefficients(d.index_of("Z"), d.index_of("C1")) == 2.0);
    CHECK(m.params.coefficients(d.index_of("Z"), d.index_of("C2")) == 3.0);
    CHECK(m.params.coefficients(d.index_of("X"), d.index_of("C1")) == 3.0);
    CHECK((m.params.variances.array() == 1.0).all());
    CHECK(d.names == std::vector<std::string>{"C1", "C2", "X", "Z", "T", "P", "Y"});

    const SemModel custom = seven_node_example({0.2, 0.3, 0.4, 5.0});
    CHECK(custom.params.coefficients(d.index_of("T"), d.index_of("X")) == 0.3);
    CHECK(custom.params.intercepts(d.index_of("T")) == 5.0);
}

TEST_CASE("apply_shift locality") {
    const SemModel m = seven_node_example();
    const auto& d = m.dag;
    const int t = d.index_of("T");

    MechanismShift noop{"T", {}, m.params.intercepts(t), m.params.variances(t)};
    const SemParams same = apply_shift(m.params, d, {{noop}});
    CHECK(same.coefficients == m.params.coefficients);
    CHECK(same.intercepts == m.params.intercepts);
    CHECK(same.variances == m.params.variances);

    const SemParams cov = apply_shift(m.params, d, {{CovariateShift{"C2", 5.0, 4.0}}});
    CHECK(cov.intercepts(d.index_of("C2")) == 5.0);
    CHECK(cov.variances(d.index_of("C2")) == 4.0);
    check_only_changed(m.params, cov, {}, {d.index_of("C2")});

    const SemParams mech = apply_shift(m.params, d, default_mechanism_shift(m));
    check_only_changed(m.params, mech, {t}, {t});
    for (int j : d.parents[t]) CHECK(mech.coefficients(t, j) == 1.5 * m.params.coefficients(t, j));
    CHECK(mech.intercepts(t) == m.params.intercepts(t) + 13.0);
    CHECK(mech.variances(t) == 2.0 * m.params.variances(t));

    CHECK_THROWS_AS((void)apply_shift(m.params, d, {{MechanismShift{"T", {{"C2", 1.0}}, 0.0, 1.0}}}), ConfigError);
    CHECK_THROWS_AS((void)apply_shift(m.params, d, {{CovariateShift{"Z", 0.0, 1.0}}}), ConfigError);
    CHECK_THROWS_AS((void)apply_shift(m.params, d, {{CovariateShift{"C2", 0.0, 0.0}}}), ConfigError);
    CHECK_THROWS_AS((void)apply_shift(m.params, d, {{CovariateShift{"nope", 0.0, 1.0}}}), ConfigError);
}

TEST_CASE("counter RNG") {
    const CounterRng a(7);
    const CounterRng b(7);
    const CounterRng c(8);
    CHECK(a.bits(3) == b.bits(3));
    CHECK(a.bits(3) != c.bits(3));
    CHECK(CounterRng(7, 1).bits(3) != a.bits(3));
    double mean = 0.0;
    double sq = 0.0;
    const int n = 200'000;
    for (int i = 0; i < n; ++i) {
        const double u = a.uniform(static_cast<std::uint64_t>(i));
        CHECK_FALSE((u <= 0.0 || u >= 1.0));
        const double z = a.normal(static_cast<std::uint64_t>(i));
        mean += z;
        sq += z * z;
    }
    mean /= n;
    CHECK(std::abs(mean) < 4.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(sq / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, 2, 0) == derive_seed(1, 2));
}

TEST_CASE("sampling") {
    const DagSpec free = make_dag({"A", "B", "C"}, {});
    const std::size_t n = 50'000;
    const Matrix x = sample(make_params(free), free, n, 1);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(x.col(j).mean()) < 4.0 / std::sqrt(static_cast<double>(n)));

    const SemModel m = seven_node_example();
    CHECK(sample(m.params, m.dag, 100, 9) == sample(m.params, m.dag, 100, 9));
    CHECK(sample(m.params, m.dag, 100, 9) != sample(m.params, m.dag, 100, 10));
    CHECK(sample(m.params, m.dag, 200, 9).topRows(100) == sample(m.params, m.dag, 100, 9));
}

TEST_CASE("sample covariance matches the implied covariance") {
    const SemModel m = seven_node_example({0.5, 0.5, 0.5, 0.0});
    const Matrix s = oracle::sample_covariance(sample(m.params, m.dag, 1'000'000, 31337));
    const Matrix sigma = implied_covariance(m.params, m.dag).covariance;
    for (int i = 0; i < 7; ++i) {
        for (int j = 0; j < 7; ++j) {
            if (std::abs(sigma(i, j)) > 0.1) CHECK(std::abs(s(i, j) / sigma(i, j) - 1.0) < 0.01);
        }
    }
}

TEST_CASE("random sparse DAGs") {
    bool saw_edge = false;
    bool saw_empty = false;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const SemModel m = random_sparse_dag(2, 1.0, {0.3, 1.0}, {0.5, 1.5}, seed);
        CHECK(validate_topological_order(m.dag));
        const std::size_t edges = m.dag.parents[0].size() + m.dag.parents[1].size();
        CHECK(edges <= 1);
        (edges == 1 ? saw_edge : saw_empty) = true;
    }
    CHECK(saw_edge);
    const SemModel none = random_sparse_dag(10, 0.0, {0.3, 1.0}, {0.5, 1.5}, 3);
    CHECK(none.params.coefficients.isZero(0.0));

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const SemModel m = random_sparse_dag(64, 2.0, {0.3, 1.0}, {0.5, 1.5}, seed);
        CHECK(validate_topological_order(m.dag));
        CHECK_NOTHROW(check_params(m.params, m.dag));
        for (int k = 0; k < 64; ++k) {
            CHECK(m.params.variances(k) >= 0.5);
            CHECK(m.params.variances(k) <= 1.5);
            for (int j : m.dag.parents[k]) {
                const double a = std::abs(m.params.coefficients(k, j));
                CHECK(a >= 0.3);
                CHECK(a <= 1.0);
            }
        }
    }
    const SemModel a = random_sparse_dag(30, 2.0, {0.3, 1.0}, {0.5, 1.5}, 5);
    const SemModel b = random_sparse_dag(30, 2.0, {0.3, 1.0}, {0.5, 1.5}, 5);
    CHECK(a.dag.parents == b.dag.parents);
    CHECK(a.params.coefficients == b.params.coefficients);
    (void)saw_empty;
}

TEST_CASE("split_target keeps truth apart") {
    Matrix full(2, 3);
    full << 1, 2, 3, 4, 5, 6;
    const TargetData d = split_target(full, 1);
    CHECK(d.observed.cols() == 2);
    CHECK(d.observed(1, 1) == 6.0);
    CHECK(d.truth(0) == 2.0);
}
