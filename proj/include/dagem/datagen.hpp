#pragma once

#include "dagem/dag_model.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace dagem {

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, counter), so datasets are reproducible bit-for-bit and rows
/// can be generated in any order.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

    [[nodiscard]] std::uint64_t bits(std::uint64_t counter) const;
    /// Uniform on the open interval (0, 1).
    [[nodiscard]] double uniform(std::uint64_t counter) const;
    /// Standard normal (Box-Muller on two decorrelated uniforms).
    [[nodiscard]] double normal(std::uint64_t counter) const;

private:
    std::uint64_t key_;
};

/// Mixes a base seed with indices into an independent child seed.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

struct SemModel {
    DagSpec dag;
    SemParams params;
};

/// Coefficients of the target mechanism of the seven-node example, which are
/// left symbolic in the source material.
struct SevenNodeOptions {
    double beta_c1 = 1.0;
    double beta_x = 1.0;
    double beta_z = 1.0;
    double intercept = 0.0;
};

/// Nodes (C1, C2, X, Z, T, P, Y); Z = 2 C1 + 3 C2, X = 3 C1,
/// T = beta . (C1, X, Z), P = T, Y = 2 T; all noises N(0, 1).
[[nodiscard]] SemModel seven_node_example(const SevenNodeOptions& options = {});

/// Small well-conditioned model for contraction studies: independent roots
/// A and B drive T, which has two informative children D1 and D2.
[[nodiscard]] SemModel contraction_example();

/// New marginal N(mean, variance) for a root node.
struct CovariateShift {
    std::string node;
    double mean = 0.0;
    double variance = 1.0;
};

/// New mechanism for one node. Listed coefficients replace the current
/// values of existing parents; intercept and variance are absolute values.
struct MechanismShift {
    std::string node;
    std::map<std::string, double> coefficients;
    double intercept = 0.0;
    double variance = 1.0;
};

using Shift = std::variant<CovariateShift, MechanismShift>;

/// A list of shifts applied in order.
struct ShiftScenario {
    std::vector<Shift> shifts;
};

/// Applies the scenario. Throws ConfigError when a covariate shift targets a
/// non-root node or a mechanism shift names a non-parent.
[[nodiscard]] SemParams apply_shift(const SemParams& params, const DagSpec& dag, const ShiftScenario& scenario);

/// Default mechanism shift at T for the seven-node example: coefficients
/// scaled by 1.5, intercept raised by 13, noise variance doubled.
[[nodiscard]] ShiftScenario default_mechanism_shift(const SemModel& model, const std::string& node = "T");

/// Default covariate shift: C2 ~ N(5, 4).
[[nodiscard]] ShiftScenario default_covariate_shift();

/// Ancestral sampling, n x p in `dag.names` column order.
[[nodiscard]] Matrix sample(const SemParams& params, const DagSpec& dag, std::size_t n, std::uint64_t seed);

/// Random DAG over nodes V0..V{p-1} with a random topological order. The
/// node at position i >= 1 takes each predecessor as a parent with
/// probability min(1, expected_parents / i). Coefficients and variances are
/// uniform on the given intervals.
[[nodiscard]] SemModel random_sparse_dag(std::size_t p, double expected_parents, std::pair<double, double> coef_range,
                                         std::pair<double, double> var_range, std::uint64_t seed);

/// Target-domain dataset with the hidden column held apart. Imputation code
/// only ever receives `observed`.
struct TargetData {
    Matrix observed;  // n x (p-1), target column removed
    Vector truth;     // held out for evaluation only
};

[[nodiscard]] TargetData split_target(const Matrix& full, int target);

}  // namespace dagem
