#include "dagem/fitting.hpp"

#include "dagem/conditioning.hpp"
#include "dagem/errors.hpp"

#include <algorithm>
#include <cmath>

namespace dagem {

namespace {

double column_variance(const Eigen::Ref<const Vector>& column) {
    const double mean = column.mean();
    return (column.array() - mean).square().mean();
}

}  // namespace

SemParams fit_dag_source(const DagSpec& dag, const Matrix& data) {
    const auto p = static_cast<Eigen::Index>(dag.size());
    if (data.cols() != p) {
        throw DataError("source data has " + std::to_string(data.cols()) + " columns, DAG has " +
                        std::to_string(p) + " nodes");
    }
    const Eigen::Index n = data.rows();
    std::size_t max_parents = 0;
    for (const auto& pa : dag.parents) {
        max_parents = std::max(max_parents, pa.size());
    }
    if (n <= static_cast<Eigen::Index>(max_parents) + 1) {
        throw DataError("insufficient source samples: n=" + std::to_string(n) + " needs more than " +
                        std::to_string(max_parents + 1));
    }
    for (Eigen::Index k = 0; k < p; ++k) {
        const double scale = std::max(1.0, data.col(k).cwiseAbs().maxCoeff());
        if (column_variance(data.col(k)) <= 1e-28 * scale * scale) {
            throw DataError("zero-variance column for node " + dag.names[static_cast<std::size_t>(k)]);
        }
    }

    SemParams out = make_params(dag);
    for (Eigen::Index k = 0; k < p; ++k) {
        const auto& pa = dag.parents[static_cast<std::size_t>(k)];
        const auto d = static_cast<Eigen::Index>(pa.size());
        Matrix design(n, d + 1);
        for (Eigen::Index j = 0; j < d; ++j) {
            design.col(j) = data.col(pa[static_cast<std::size_t>(j)]);
        }
        design.col(d).setOnes();
        Eigen::ColPivHouseholderQR<Matrix> qr(design);
        qr.setThreshold(1e-10);
        if (qr.rank() < d + 1) {
            throw DataError("rank-deficient parent design for node " + dag.names[static_cast<std::size_t>(k)]);
        }
        const Vector beta = qr.solve(data.col(k));
        const Vector residual = data.col(k) - design * beta;
        for (Eigen::Index j = 0; j < d; ++j) {
            out.coefficients(k, pa[static_cast<std::size_t>(j)]) = beta(j);
        }
        out.intercepts(k) = beta(d);
        out.variances(k) = residual.squaredNorm() / static_cast<double>(n);
    }
    return out;
}

SemParams refit_root_marginals(const SemParams& params, const DagSpec& dag, int target, const Matrix& observed,
                               const std::vector<int>& roots) {
    const auto p = static_cast<Eigen::Index>(dag.size());
    if (observed.cols() != p - 1) {
        throw DataError("target data has " + std::to_string(observed.cols()) + " columns, expected " +
                        std::to_string(p - 1));
    }
    SemParams out = params;
    for (int root : roots) {
        if (root < 0 || root >= p) {
            throw ConfigError("root index out of range: " + std::to_string(root));
        }
        const auto& name = dag.names[static_cast<std::size_t>(root)];
        if (root == target) {
            throw DataError("cannot refit " + name + ": its column is missing in the target domain");
        }
        if (!dag.is_root(root)) {
            throw ConfigError("cannot refit marginal of non-root node " + name);
        }
        const auto column = observed.col(observed_position(root, target));
        out.intercepts(root) = column.mean();
        const double var = column_variance(column);
        if (!(var > 0.0)) {
            throw DataError("zero-variance target column for root " + name);
        }
        out.variances(root) = var;
    }
    return out;
}

}  // namespace dagem
