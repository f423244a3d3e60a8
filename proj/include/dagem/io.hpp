#pragma once

#include "dagem/dag_model.hpp"
#include "dagem/datagen.hpp"
#include "dagem/em_adapt.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace dagem {

using Json = nlohmann::json;

/// {"nodes": [...], "edges": [["parent", "child"], ...]}
[[nodiscard]] Json dag_to_json(const DagSpec& dag);
[[nodiscard]] DagSpec dag_from_json(const Json& j);

/// {"coefficients": {"parent->child": w}, "intercepts": {node: c},
///  "variances": {node: s2}}. Missing intercepts default to 0 and missing
/// variances to 1; a coefficient on a non-edge is a ConfigError.
[[nodiscard]] Json params_to_json(const SemParams& params, const DagSpec& dag);
[[nodiscard]] SemParams params_from_json(const Json& j, const DagSpec& dag);

/// {"shifts": [{"kind": "covariate_shift", "node", "mean", "variance"} |
///             {"kind": "mechanism_shift", "node", "coefficients", "intercept", "variance"}]}
[[nodiscard]] Json scenario_to_json(const ShiftScenario& scenario);
[[nodiscard]] ShiftScenario scenario_from_json(const Json& j, const std::string& path = "scenario");

/// Unknown keys are rejected; errors name the offending field path.
[[nodiscard]] Json em_config_to_json(const EmConfig& config);
[[nodiscard]] EmConfig em_config_from_json(const Json& j, const std::string& path = "em");

/// Numeric table with a header row. Empty cells become NaN.
struct CsvTable {
    std::vector<std::string> header;
    Matrix values;

    /// Column index of `name`, or -1.
    [[nodiscard]] int column(const std::string& name) const;
};

/// Throws DataError (with row and column coordinates) on empty input,
/// ragged rows, duplicate headers or non-numeric cells.
[[nodiscard]] CsvTable parse_csv(std::string_view text, const std::string& source = "<csv>");
[[nodiscard]] CsvTable read_csv(const std::filesystem::path& path);

/// Shortest round-trip decimal form.
[[nodiscard]] std::string format_double(double value);

void write_csv(std::ostream& out, const std::vector<std::string>& header, const Matrix& values);
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header, const Matrix& values);

[[nodiscard]] Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Typed JSON accessors that throw ConfigError naming `path`.
[[nodiscard]] double json_number(const Json& j, const std::string& path);
[[nodiscard]] long long json_integer(const Json& j, const std::string& path);
[[nodiscard]] bool json_bool(const Json& j, const std::string& path);
[[nodiscard]] std::string json_string(const Json& j, const std::string& path);
/// Throws ConfigError for any key of `j` not in `allowed`.
void reject_unknown_keys(const Json& j, const std::vector<std::string>& allowed, const std::string& path);

}  // namespace dagem
