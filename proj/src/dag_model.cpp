#include "dagem/dag_model.hpp"

#include "dagem/errors.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <unordered_map>

namespace dagem {

namespace {

// Structural matrix S = I - B permuted into topological order.
Eigen::SparseMatrix<double> permuted_structure_sparse(const SemParams& params, const DagSpec& dag,
                                                      const std::vector<int>& position) {
    const auto p = static_cast<Eigen::Index>(params.size());
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(static_cast<std::size_t>(p) * 3);
    for (Eigen::Index k = 0; k < p; ++k) {
        const int pk = position[static_cast<std::size_t>(k)];
        entries.emplace_back(pk, pk, 1.0);
        for (int j : dag.parents[static_cast<std::size_t>(k)]) {
            entries.emplace_back(pk, position[static_cast<std::size_t>(j)], -params.coefficients(k, j));
        }
    }
    Eigen::SparseMatrix<double> s(p, p);
    s.setFromTriplets(entries.begin(), entries.end());
    return s;
}

void check_variance_floor(const SemParams& params, double variance_floor) {
    for (Eigen::Index k = 0; k < params.variances.size(); ++k) {
        const double v = params.variances(k);
        if (!(v >= variance_floor) || !std::isfinite(v)) {
            throw NumericalError("degenerate noise variance " + std::to_string(v) + " at node index " +
                                 std::to_string(k));
        }
    }
}

}  // namespace

int DagSpec::index_of(std::string_view name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
        throw ConfigError("unknown node: " + std::string(name));
    }
    return static_cast<int>(it - names.begin());
}

std::vector<int> DagSpec::children(int node) const {
    std::vector<int> out;
    for (std::size_t k = 0; k < parents.size(); ++k) {
        const auto& pa = parents[k];
        if (std::find(pa.begin(), pa.end(), node) != pa.end()) {
            out.push_back(static_cast<int>(k));
        }
    }
    return out;
}

DagSpec make_dag(std::vector<std::string> names,
                 const std::vector<std::pair<std::string, std::string>>& edges) {
    if (names.empty()) {
        throw ConfigError("DAG must contain at least one node");
    }
    std::unordered_map<std::string, int> index;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i].empty()) {
            throw ConfigError("node names must be non-empty");
        }
        if (!index.emplace(names[i], static_cast<int>(i)).second) {
            throw ConfigError("duplicate node name: " + names[i]);
        }
    }
    DagSpec dag;
    dag.parents.resize(names.size());
    for (const auto& [from, to] : edges) {
        const auto pf = index.find(from);
        const auto pt = index.find(to);
        if (pf == index.end() || pt == index.end()) {
            throw ConfigError("edge references unknown node: " + from + " -> " + to);
        }
        if (pf->second == pt->second) {
            throw ConfigError("self-loop at node " + from);
        }
        auto& pa = dag.parents[static_cast<std::size_t>(pt->second)];
        if (std::find(pa.begin(), pa.end(), pf->second) != pa.end()) {
            throw ConfigError("duplicate edge: " + from + " -> " + to);
        }
        pa.push_back(pf->second);
    }
    for (auto& pa : dag.parents) {
        std::sort(pa.begin(), pa.end());
    }

    // Kahn's algorithm with a min-heap so the order is deterministic.
    const std::size_t p = names.size();
    std::vector<int> indegree(p, 0);
    std::vector<std::vector<int>> kids(p);
    for (std::size_t k = 0; k < p; ++k) {
        indegree[k] = static_cast<int>(dag.parents[k].size());
        for (int j : dag.parents[k]) {
            kids[static_cast<std::size_t>(j)].push_back(static_cast<int>(k));
        }
    }
    std::priority_queue<int, std::vector<int>, std::greater<>> ready;
    for (std::size_t k = 0; k < p; ++k) {
        if (indegree[k] == 0) {
            ready.push(static_cast<int>(k));
        }
    }
    while (!ready.empty()) {
        const int k = ready.top();
        ready.pop();
        dag.topo_order.push_back(k);
        for (int c : kids[static_cast<std::size_t>(k)]) {
            if (--indegree[static_cast<std::size_t>(c)] == 0) {
                ready.push(c);
            }
        }
    }
    if (dag.topo_order.size() != p) {
        throw ConfigError("edge list contains a directed cycle");
    }
    dag.names = std::move(names);
    return dag;
}

bool validate_topological_order(const DagSpec& dag) {
    const std::size_t p = dag.names.size();
    if (p == 0 || dag.parents.size() != p || dag.topo_order.size() != p) {
        return false;
    }
    std::vector<int> position(p, -1);
    for (std::size_t i = 0; i < p; ++i) {
        const int k = dag.topo_order[i];
        if (k < 0 || static_cast<std::size_t>(k) >= p || position[static_cast<std::size_t>(k)] != -1) {
            return false;
        }
        position[static_cast<std::size_t>(k)] = static_cast<int>(i);
    }
    for (std::size_t k = 0; k < p; ++k) {
        std::set<int> seen;
        for (int j : dag.parents[k]) {
            if (j < 0 || static_cast<std::size_t>(j) >= p || static_cast<std::size_t>(j) == k) {
                return false;
            }
            if (!seen.insert(j).second) {
                return false;
            }
            if (position[static_cast<std::size_t>(j)] >= position[k]) {
                return false;
            }
        }
    }
    return true;
}

SemParams make_params(const DagSpec& dag) {
    const auto p = static_cast<Eigen::Index>(dag.size());
    return SemParams{Matrix::Zero(p, p), Vector::Zero(p), Vector::Ones(p)};
}

void check_params(const SemParams& params, const DagSpec& dag) {
    const auto p = static_cast<Eigen::Index>(dag.size());
    if (params.coefficients.rows() != p || params.coefficients.cols() != p || params.intercepts.size() != p ||
        params.variances.size() != p) {
        throw ConfigError("parameter dimensions do not match the DAG (" + std::to_string(p) + " nodes)");
    }
    for (Eigen::Index k = 0; k < p; ++k) {
        const auto& pa = dag.parents[static_cast<std::size_t>(k)];
        for (Eigen::Index j = 0; j < p; ++j) {
            const double b = params.coefficients(k, j);
            if (!std::isfinite(b)) {
                throw ConfigError("non-finite coefficient " + dag.names[static_cast<std::size_t>(j)] + " -> " +
                                  dag.names[static_cast<std::size_t>(k)]);
            }
            if (b != 0.0 && std::find(pa.begin(), pa.end(), static_cast<int>(j)) == pa.end()) {
                throw ConfigError("coefficient outside the DAG: " + dag.names[static_cast<std::size_t>(j)] +
                                  " -> " + dag.names[static_cast<std::size_t>(k)]);
            }
        }
        if (!std::isfinite(params.intercepts(k))) {
            throw ConfigError("non-finite intercept at " + dag.names[static_cast<std::size_t>(k)]);
        }
        if (!(params.variances(k) > 0.0) || !std::isfinite(params.variances(k))) {
            throw ConfigError("noise variance must be positive at " + dag.names[static_cast<std::size_t>(k)]);
        }
    }
}

Matrix implied_precision(const SemParams& params, double variance_floor) {
    check_variance_floor(params, variance_floor);
    const auto p = static_cast<Eigen::Index>(params.size());
    const Vector inv_var = params.variances.cwiseInverse();
    if (params.size() > kDenseNodeLimit) {
        Eigen::SparseMatrix<double> s = (Matrix::Identity(p, p) - params.coefficients).sparseView();
        Eigen::SparseMatrix<double> k = Eigen::SparseMatrix<double>(s.transpose()) * inv_var.asDiagonal() * s;
        return Matrix(k);
    }
    const Matrix s = Matrix::Identity(p, p) - params.coefficients;
    Matrix k = s.transpose() * inv_var.asDiagonal() * s;
    return 0.5 * (k + k.transpose());
}

Vector implied_mean(const SemParams& params, const DagSpec& dag) {
    Vector m = Vector::Zero(static_cast<Eigen::Index>(params.size()));
    for (int k : dag.topo_order) {
        double value = params.intercepts(k);
        for (int j : dag.parents[static_cast<std::size_t>(k)]) {
            value += params.coefficients(k, j) * m(j);
        }
        m(k) = value;
    }
    return m;
}

GaussianMoments implied_covariance(const SemParams& params, const DagSpec& dag, double variance_floor) {
    const std::size_t p = params.size();
    const auto pe = static_cast<Eigen::Index>(p);
    std::vector<int> position(p);
    for (std::size_t i = 0; i < p; ++i) {
        position[static_cast<std::size_t>(dag.topo_order[i])] = static_cast<int>(i);
    }

    GaussianMoments out;
    out.precision = implied_precision(params, variance_floor);
    out.mean = implied_mean(params, dag);

    // L = S_perm^-1 diag(sqrt(variances)); Sigma_perm = L L^T.
    Matrix root_var = Matrix::Zero(pe, pe);
    for (std::size_t k = 0; k < p; ++k) {
        root_var(position[k], position[k]) = std::sqrt(params.variances(static_cast<Eigen::Index>(k)));
    }
    Matrix factor;
    if (p > kDenseNodeLimit) {
        const Eigen::SparseMatrix<double> s = permuted_structure_sparse(params, dag, position);
        factor = s.triangularView<Eigen::UnitLower>().solve(root_var);
    } else {
        Matrix s = Matrix::Identity(pe, pe);
        for (std::size_t k = 0; k < p; ++k) {
            for (int j : dag.parents[k]) {
                s(position[k], position[static_cast<std::size_t>(j)]) =
                    -params.coefficients(static_cast<Eigen::Index>(k), j);
            }
        }
        factor = s.triangularView<Eigen::UnitLower>().solve(root_var);
    }
    const Matrix sigma_perm = factor * factor.transpose();
    out.covariance.resize(pe, pe);
    for (std::size_t a = 0; a < p; ++a) {
        for (std::size_t b = 0; b < p; ++b) {
            out.covariance(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                sigma_perm(position[a], position[b]);
        }
    }
    return out;
}

bool is_positive_definite(const Matrix& m, double pivot_tolerance) {
    if (m.rows() != m.cols() || m.rows() == 0) {
        return false;
    }
    if (!m.isApprox(m.transpose(), 1e-8) && (m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        return false;
    }
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) {
        return false;
    }
    const double scale = m.diagonal().cwiseAbs().maxCoeff();
    const Vector pivots = llt.matrixL().toDenseMatrix().diagonal().array().square();
    return pivots.minCoeff() > pivot_tolerance * scale;
}

}  // namespace dagem
