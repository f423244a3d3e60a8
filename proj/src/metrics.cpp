#include "dagem/metrics.hpp"

#include "dagem/errors.hpp"

#include <cmath>

namespace dagem {

Scores metrics(const Vector& truth, const Vector& predicted, double source_mean, double source_sd) {
    if (truth.size() != predicted.size()) {
        throw DataError("truth and prediction lengths differ");
    }
    if (truth.size() < 2) {
        throw DataError("metrics need at least two samples");
    }
    if (!(source_sd > 0.0)) {
        throw ConfigError("source standard deviation must be positive");
    }
    const double ss_tot = (truth.array() - truth.mean()).square().sum();
    if (!(ss_tot > 0.0)) {
        throw DataError("truth has zero variance, R^2 is undefined");
    }
    const Eigen::ArrayXd diff = (predicted - truth).array();
    const Eigen::ArrayXd z = (predicted.array() - source_mean) / source_sd - (truth.array() - source_mean) / source_sd;
    Scores s;
    s.mae = z.abs().mean();
    s.rmse = std::sqrt(z.square().mean());
    s.r2 = 1.0 - diff.square().sum() / ss_tot;
    return s;
}

ColumnMoments column_moments(const Vector& values) {
    if (values.size() < 2) {
        throw DataError("need at least two values for a standard deviation");
    }
    ColumnMoments m;
    m.mean = values.mean();
    m.sd = std::sqrt((values.array() - m.mean).square().sum() / static_cast<double>(values.size() - 1));
    return m;
}

}  // namespace dagem
