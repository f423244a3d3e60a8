#pragma once

#include "dagem/dag_model.hpp"

namespace dagem {

struct Scores {
    double mae = 0.0;
    double rmse = 0.0;
    double r2 = 0.0;
};

/// MAE and RMSE on values z-scored with the source mean and standard
/// deviation; R^2 = 1 - SS_res / SS_tot on raw values.
/// Throws DataError for length mismatch, n < 2 or constant truth, and
/// ConfigError when source_sd is not positive.
[[nodiscard]] Scores metrics(const Vector& truth, const Vector& predicted, double source_mean, double source_sd);

/// Sample mean and standard deviation (n - 1 divisor) of one column.
struct ColumnMoments {
    double mean = 0.0;
    double sd = 0.0;
};

[[nodiscard]] ColumnMoments column_moments(const Vector& values);

}  // namespace dagem
