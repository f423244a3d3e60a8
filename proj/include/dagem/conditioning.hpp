#pragma once

#include "dagem/dag_model.hpp"

#include <vector>

namespace dagem {

/// Indices of all nodes except `target`, ascending. This is the column
/// order of every target-domain (T-missing) data matrix.
[[nodiscard]] std::vector<int> observed_indices(std::size_t node_count, int target);

/// Position of `node` among the observed columns when `target` is missing.
[[nodiscard]] inline int observed_position(int node, int target) { return node < target ? node : node - 1; }

/// Gaussian law of the missing node given all other coordinates:
///   T | x_{-t} ~ N(offset + weights^T (x_{-t} - observed_mean), variance).
struct ConditionalLaw {
    int target = 0;
    Vector weights;
    Vector observed_mean;
    double offset = 0.0;
    double variance = 1.0;

    [[nodiscard]] double mean_at(const Eigen::Ref<const Vector>& observed) const;
};

/// Precision-form conditioning from dense joint moments:
/// variance = 1 / K_tt, weights = -K_{t,-t} / K_tt.
[[nodiscard]] ConditionalLaw conditional_law(const GaussianMoments& moments, int target);

/// Same law computed from the SEM directly. Only row `target` of K is
/// formed, from the structural rows of the target and its children, so the
/// cost is local to the target's Markov blanket.
[[nodiscard]] ConditionalLaw conditional_law(const SemParams& params, const DagSpec& dag, int target,
                                             double variance_floor = kDefaultVarianceFloor);

/// Row `target` of the implied precision, from local structural terms.
[[nodiscard]] Vector precision_row(const SemParams& params, const DagSpec& dag, int target,
                                   double variance_floor = kDefaultVarianceFloor);

/// Conditional means for each row of an n x (p-1) observed matrix.
/// Throws DataError on a column-count mismatch.
[[nodiscard]] Vector impute_batch(const ConditionalLaw& law, const Matrix& observed);

}  // namespace dagem
