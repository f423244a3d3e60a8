#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dagem {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Smallest noise variance accepted when forming the implied precision.
inline constexpr double kDefaultVarianceFloor = 1e-20;

/// Above this many nodes the triangular solves run on sparse storage.
inline constexpr std::size_t kDenseNodeLimit = 256;

/// Known causal DAG. Node indices follow the order of `names`; that order is
/// also the column order of every fully observed data matrix.
struct DagSpec {
    std::vector<std::string> names;
    std::vector<std::vector<int>> parents;
    std::vector<int> topo_order;

    [[nodiscard]] std::size_t size() const noexcept { return names.size(); }

    /// Index of a node by name; throws ConfigError for unknown names.
    [[nodiscard]] int index_of(std::string_view name) const;

    [[nodiscard]] std::vector<int> children(int node) const;

    [[nodiscard]] bool is_root(int node) const { return parents.at(static_cast<std::size_t>(node)).empty(); }
};

/// Builds and validates a DAG from an ordered name list and (parent, child)
/// name pairs. The topological order is computed with Kahn's algorithm,
/// preferring the smallest available index. Throws ConfigError on duplicate
/// names, unknown endpoints, self-loops, repeated edges or cycles.
[[nodiscard]] DagSpec make_dag(std::vector<std::string> names,
                               const std::vector<std::pair<std::string, std::string>>& edges);

/// True iff every parent list is duplicate-free, loop-free and in range, and
/// `topo_order` is a permutation in which each parent precedes its child.
[[nodiscard]] bool validate_topological_order(const DagSpec& dag);

/// Linear-Gaussian SEM parameters in original node indexing.
/// coefficients(k, j) is the effect of parent j on child k.
struct SemParams {
    Matrix coefficients;
    Vector intercepts;
    Vector variances;

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(variances.size()); }
};

/// Zero coefficients and intercepts, unit noise variances.
[[nodiscard]] SemParams make_params(const DagSpec& dag);

/// Throws ConfigError if the shape, sparsity pattern or variance positivity
/// of `params` is inconsistent with `dag`.
void check_params(const SemParams& params, const DagSpec& dag);

struct GaussianMoments {
    Vector mean;
    Matrix covariance;
    Matrix precision;
};

/// K = (I - B)^T diag(variances)^-1 (I - B). Throws NumericalError when a
/// noise variance is below `variance_floor`.
[[nodiscard]] Matrix implied_precision(const SemParams& params,
                                       double variance_floor = kDefaultVarianceFloor);

/// Solves m = B m + c by forward substitution in topological order.
[[nodiscard]] Vector implied_mean(const SemParams& params, const DagSpec& dag);

/// Mean, covariance and precision of the joint Gaussian. The covariance is
/// S^-1 diag(variances) S^-T from unit-triangular solves in topological
/// order, never from inverting K.
[[nodiscard]] GaussianMoments implied_covariance(const SemParams& params, const DagSpec& dag,
                                                 double variance_floor = kDefaultVarianceFloor);

/// Cholesky-based SPD test; every pivot must exceed `pivot_tolerance` times
/// the largest diagonal entry.
[[nodiscard]] bool is_positive_definite(const Matrix& m, double pivot_tolerance = 1e-10);

}  // namespace dagem
