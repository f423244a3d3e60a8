#pragma once

#include "dagem/datagen.hpp"
#include "dagem/em_adapt.hpp"
#include "dagem/io.hpp"
#include "dagem/metrics.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dagem {

enum class Method { FitOnSource, KiiveriEm, FirstOrderEm };

[[nodiscard]] std::string method_name(Method method);
[[nodiscard]] Method parse_method(const std::string& name, const std::string& path = "method");

enum class ScenarioKind { SevenNode, Contraction, RandomSparse, External };

struct RandomDagOptions {
    std::size_t p = 64;
    double expected_parents = 2.0;
    std::pair<double, double> coef_range{0.3, 1.0};
    std::pair<double, double> var_range{0.5, 1.5};
    std::uint64_t structure_seed = 7;
    int shifted_roots = 3;
    // Shifted roots move by this many marginal standard deviations and
    // have their variance multiplied by root_variance_scale.
    double root_mean_shift = 4.0;
    double root_variance_scale = 4.0;
};

struct ExternalPaths {
    std::filesystem::path dag;
    std::filesystem::path source;
    std::filesystem::path target;
    std::filesystem::path truth;
};

struct ExperimentConfig {
    std::string label = "experiment";
    ScenarioKind scenario = ScenarioKind::SevenNode;
    SevenNodeOptions seven_node;
    RandomDagOptions random_dag;
    // "mechanism", "covariate", "none" or "custom" (then `custom_shift`).
    std::string shift_kind = "mechanism";
    ShiftScenario custom_shift;
    // Empty means "T" for the built-in scenarios and an automatic choice for
    // random DAGs.
    std::string target;
    std::size_t n_source = 5000;
    std::size_t n_target = 5000;
    int repeats = 10;
    std::uint64_t seed = 1;
    std::vector<Method> methods{Method::FitOnSource, Method::KiiveriEm, Method::FirstOrderEm};
    EmConfig em;
    EmConfig kiiveri;
    int threads = 0;  // 0 picks hardware concurrency
    bool record_runtime = false;
    bool scatter = false;
    bool svg = false;
    ExternalPaths external;
};

/// Parses an experiment config; relative file paths resolve against
/// `base_dir`. Errors name the field path, e.g. "experiment.n_target".
[[nodiscard]] ExperimentConfig experiment_config_from_json(const Json& j,
                                                           const std::filesystem::path& base_dir = {});
[[nodiscard]] Json experiment_config_to_json(const ExperimentConfig& config);

/// A fully specified synthetic problem: the source law, the shifted target
/// law and the target node.
struct Problem {
    DagSpec dag;
    SemParams source;
    SemParams target_law;
    ShiftScenario shift;
    int target = 0;
};

[[nodiscard]] Problem build_problem(const ExperimentConfig& config);

/// Datasets for one repeat. Truth is kept apart from the observed target
/// matrix and only reaches the scoring step.
struct RepeatData {
    Matrix source;
    TargetData target;
    std::uint64_t seed = 0;
};

[[nodiscard]] std::uint64_t repeat_seed(std::uint64_t seed, int repeat);
[[nodiscard]] RepeatData generate_repeat(const Problem& problem, const ExperimentConfig& config, int repeat);

struct MethodOutput {
    Vector prediction;
    SemParams params;
    int iterations = 0;
    bool converged = true;
};

/// Runs one method from the source fit on the observed target matrix.
[[nodiscard]] MethodOutput run_method(Method method, const SemParams& source_fit, const DagSpec& dag, int target,
                                      const Matrix& observed, const ExperimentConfig& config);

struct MetricsRow {
    std::string scenario;
    Method method = Method::FitOnSource;
    int repeat = 0;
    std::uint64_t seed = 0;
    std::string status = "ok";  // "ok" or "numerical_failure"
    Scores scores;
    int iterations = 0;
    bool converged = true;
    double runtime_seconds = 0.0;
};

struct MethodSummary {
    Method method = Method::FitOnSource;
    int ok = 0;
    int failed = 0;
    Scores mean;
};

struct ScatterData {
    Vector truth;
    std::vector<std::pair<Method, Vector>> predictions;
};

struct ExperimentReport {
    std::string scenario;
    std::uint64_t seed = 0;
    bool record_runtime = false;
    std::vector<MetricsRow> rows;
    std::vector<MethodSummary> summary;
    std::optional<ScatterData> scatter;

    [[nodiscard]] const MethodSummary& summary_for(Method method) const;
};

/// Repeats run in parallel; the report is identical for any thread count.
[[nodiscard]] ExperimentReport run_experiment(const ExperimentConfig& config);

[[nodiscard]] std::string report_csv(const ExperimentReport& report);
[[nodiscard]] std::string report_json(const ExperimentReport& report);
[[nodiscard]] std::string scatter_csv(const ScatterData& scatter);
[[nodiscard]] std::string scatter_svg(const ScatterData& scatter, const std::string& title);

/// Inputs loaded from files for a user-supplied DAG.
struct ExternalInputs {
    DagSpec dag;
    int target = 0;
    Matrix source;           // n_s x p in DAG order
    Matrix target_observed;  // n_t x (p-1)
    std::optional<Vector> truth;
};

/// Columns are matched by name and realigned to the DAG order. The target
/// CSV may omit the target column or leave it entirely empty; a partially
/// filled target column is a DataError. Missing or extra columns and empty
/// cells elsewhere are DataErrors that name the file, row and column.
[[nodiscard]] ExternalInputs ingest_external(const std::filesystem::path& dag_file,
                                             const std::filesystem::path& source_csv,
                                             const std::filesystem::path& target_csv, const std::string& target_node,
                                             const std::filesystem::path& truth_csv = {});

/// Realigns a parsed table to `names` (all required, no extras).
[[nodiscard]] Matrix align_columns(const CsvTable& table, const std::vector<std::string>& names,
                                   const std::string& source);

}  // namespace dagem
