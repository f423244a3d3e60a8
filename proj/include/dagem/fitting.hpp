#pragma once

#include "dagem/dag_model.hpp"

#include <vector>

namespace dagem {

/// Node-wise least squares under the known DAG. Each node is regressed on its
/// parents plus an intercept (column-pivoted QR); the noise variance is the
/// mean squared residual (1/n divisor). `data` is n x p in `dag.names` order.
///
/// Throws DataError when n <= max |pa| + 1, when a column is constant, or when
/// a node's parent design is rank deficient (the message names the node).
[[nodiscard]] SemParams fit_dag_source(const DagSpec& dag, const Matrix& data);

/// Replaces intercept and variance of each listed root by its target-domain
/// sample mean and (1/n) variance. `observed` is n x (p-1) with `target`
/// removed. Every other entry of `params` is copied unchanged.
[[nodiscard]] SemParams refit_root_marginals(const SemParams& params, const DagSpec& dag, int target,
                                             const Matrix& observed, const std::vector<int>& roots);

}  // namespace dagem
