#include "dagem/datagen.hpp"

#include "dagem/conditioning.hpp"
#include "dagem/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace dagem {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double to_open_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(mix64(mix64(seed) ^ (stream * kGolden))) {}

std::uint64_t CounterRng::bits(std::uint64_t counter) const { return mix64(key_ ^ mix64(counter)); }

double CounterRng::uniform(std::uint64_t counter) const { return to_open_unit(bits(counter)); }

double CounterRng::normal(std::uint64_t counter) const {
    const double u1 = to_open_unit(bits(2 * counter));
    const double u2 = to_open_unit(bits(2 * counter + 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(seed ^ mix64(a + 1)) ^ mix64((b + 1) * kGolden));
}

SemModel seven_node_example(const SevenNodeOptions& options) {
    SemModel model;
    model.dag = make_dag({"C1", "C2", "X", "Z", "T", "P", "Y"}, {{"C1", "Z"},
                                                                 {"C2", "Z"},
                                                                 {"C1", "X"},
                                                                 {"C1", "T"},
                                                                 {"X", "T"},
                                                                 {"Z", "T"},
                                                                 {"T", "P"},
                                                                 {"T", "Y"}});
    const auto& d = model.dag;
    model.params = make_params(d);
    auto& b = model.params.coefficients;
    b(d.index_of("Z"), d.index_of("C1")) = 2.0;
    b(d.index_of("Z"), d.index_of("C2")) = 3.0;
    b(d.index_of("X"), d.index_of("C1")) = 3.0;
    b(d.index_of("T"), d.index_of("C1")) = options.beta_c1;
    b(d.index_of("T"), d.index_of("X")) = options.beta_x;
    b(d.index_of("T"), d.index_of("Z")) = options.beta_z;
    b(d.index_of("P"), d.index_of("T")) = 1.0;
    b(d.index_of("Y"), d.index_of("T")) = 2.0;
    model.params.intercepts(d.index_of("T")) = options.intercept;
    return model;
}

SemModel contraction_example() {
    SemModel model;
    model.dag = make_dag({"A", "B", "T", "D1", "D2"}, {{"A", "T"}, {"B", "T"}, {"T", "D1"}, {"T", "D2"}});
    const auto& d = model.dag;
    model.params = make_params(d);
    auto& b = model.params.coefficients;
    b(d.index_of("T"), d.index_of("A")) = 1.0;
    b(d.index_of("T"), d.index_of("B")) = -0.5;
    b(d.index_of("D1"), d.index_of("T")) = 1.0;
    b(d.index_of("D2"), d.index_of("T")) = -1.0;
    model.params.variances(d.index_of("D1")) = 0.25;
    model.params.variances(d.index_of("D2")) = 0.25;
    return model;
}

SemParams apply_shift(const SemParams& params, const DagSpec& dag, const ShiftScenario& scenario) {
    SemParams out = params;
    for (const auto& shift : scenario.shifts) {
        if (const auto* cov = std::get_if<CovariateShift>(&shift)) {
            const int k = dag.index_of(cov->node);
            if (!dag.is_root(k)) {
                throw ConfigError("covariate shift requires a root node, got " + cov->node);
            }
            if (!(cov->variance > 0.0)) {
                throw ConfigError("covariate shift variance must be positive for " + cov->node);
            }
            out.intercepts(k) = cov->mean;
            out.variances(k) = cov->variance;
        } else {
            const auto& mech = std::get<MechanismShift>(shift);
            const int k = dag.index_of(mech.node);
            const auto& pa = dag.parents[static_cast<std::size_t>(k)];
            for (const auto& [parent, value] : mech.coefficients) {
                const int j = dag.index_of(parent);
                if (std::find(pa.begin(), pa.end(), j) == pa.end()) {
                    throw ConfigError("mechanism shift adds edge " + parent + " -> " + mech.node +
                                      " outside the DAG");
                }
                out.coefficients(k, j) = value;
            }
            if (!(mech.variance > 0.0)) {
                throw ConfigError("mechanism shift variance must be positive for " + mech.node);
            }
            out.intercepts(k) = mech.intercept;
            out.variances(k) = mech.variance;
        }
    }
    return out;
}

ShiftScenario default_mechanism_shift(const SemModel& model, const std::string& node) {
    const int t = model.dag.index_of(node);
    MechanismShift mech;
    mech.node = node;
    for (int j : model.dag.parents[static_cast<std::size_t>(t)]) {
        mech.coefficients[model.dag.names[static_cast<std::size_t>(j)]] = 1.5 * model.params.coefficients(t, j);
    }
    mech.intercept = model.params.intercepts(t) + 13.0;
    mech.variance = 2.0 * model.params.variances(t);
    return ShiftScenario{{mech}};
}

ShiftScenario default_covariate_shift() { return ShiftScenario{{CovariateShift{"C2", 5.0, 4.0}}}; }

Matrix sample(const SemParams& params, const DagSpec& dag, std::size_t n, std::uint64_t seed) {
    const auto p = static_cast<Eigen::Index>(dag.size());
    const CounterRng rng(seed, 0x5a4d);
    const Vector sd = params.variances.cwiseSqrt();
    Matrix out(static_cast<Eigen::Index>(n), p);
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
        for (int k : dag.topo_order) {
            double value = params.intercepts(k);
            for (int j : dag.parents[static_cast<std::size_t>(k)]) {
                value += params.coefficients(k, j) * out(i, j);
            }
            const auto counter = static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(p) +
                                 static_cast<std::uint64_t>(k);
            out(i, k) = value + sd(k) * rng.normal(counter);
        }
    }
    return out;
}

SemModel random_sparse_dag(std::size_t p, double expected_parents, std::pair<double, double> coef_range,
                           std::pair<double, double> var_range, std::uint64_t seed) {
    if (p < 2) {
        throw ConfigError("random DAG needs at least two nodes");
    }
    if (!(var_range.first > 0.0) || var_range.second < var_range.first) {
        throw ConfigError("variance range must be positive and ordered");
    }
    if (coef_range.second < coef_range.first || expected_parents < 0.0) {
        throw ConfigError("invalid coefficient range or expected parent count");
    }
    const CounterRng rng(seed, 0xda6);
    std::uint64_t counter = 0;
    std::vector<int> order(p);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = p - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.bits(counter++) % (i + 1));
        std::swap(order[i], order[j]);
    }
    std::vector<std::string> names(p);
    for (std::size_t k = 0; k < p; ++k) {
        names[k] = "V" + std::to_string(k);
    }
    std::vector<std::pair<std::string, std::string>> edges;
    std::vector<double> weights;
    for (std::size_t pos = 1; pos < p; ++pos) {
        const double prob = std::min(1.0, expected_parents / static_cast<double>(pos));
        for (std::size_t q = 0; q < pos; ++q) {
            if (rng.uniform(counter++) < prob) {
                edges.emplace_back(names[static_cast<std::size_t>(order[q])],
                                   names[static_cast<std::size_t>(order[pos])]);
                weights.push_back(coef_range.first + (coef_range.second - coef_range.first) * rng.uniform(counter++));
            }
        }
    }
    SemModel model;
    model.dag = make_dag(names, edges);
    model.params = make_params(model.dag);
    for (std::size_t e = 0; e < edges.size(); ++e) {
        model.params.coefficients(model.dag.index_of(edges[e].second), model.dag.index_of(edges[e].first)) =
            weights[e];
    }
    for (std::size_t k = 0; k < p; ++k) {
        model.params.variances(static_cast<Eigen::Index>(k)) =
            var_range.first + (var_range.second - var_range.first) * rng.uniform(counter++);
    }
    return model;
}

TargetData split_target(const Matrix& full, int target) {
    const auto p = full.cols();
    if (target < 0 || target >= p) {
        throw ConfigError("target index out of range");
    }
    TargetData out;
    out.truth = full.col(target);
    out.observed.resize(full.rows(), p - 1);
    for (Eigen::Index j = 0; j < p; ++j) {
        if (j != target) {
            out.observed.col(observed_position(static_cast<int>(j), target)) = full.col(j);
        }
    }
    return out;
}

}  // namespace dagem
