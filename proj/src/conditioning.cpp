#include "dagem/conditioning.hpp"

#include "dagem/errors.hpp"

#include <cmath>

namespace dagem {

std::vector<int> observed_indices(std::size_t node_count, int target) {
    std::vector<int> out;
    out.reserve(node_count > 0 ? node_count - 1 : 0);
    for (std::size_t k = 0; k < node_count; ++k) {
        if (static_cast<int>(k) != target) {
            out.push_back(static_cast<int>(k));
        }
    }
    return out;
}

double ConditionalLaw::mean_at(const Eigen::Ref<const Vector>& observed) const {
    return offset + weights.dot(observed - observed_mean);
}

namespace {

void check_target(std::size_t p, int target) {
    if (target < 0 || static_cast<std::size_t>(target) >= p) {
        throw ConfigError("target index " + std::to_string(target) + " out of range");
    }
    if (p < 2) {
        throw ConfigError("conditioning needs at least one observed node");
    }
}

ConditionalLaw law_from_row(const Vector& k_row, const Vector& mean, int target) {
    const auto p = k_row.size();
    const double k_tt = k_row(target);
    if (!(k_tt > 0.0) || !std::isfinite(k_tt)) {
        throw NumericalError("non-positive conditional precision at the target node");
    }
    ConditionalLaw law;
    law.target = target;
    law.variance = 1.0 / k_tt;
    law.offset = mean(target);
    law.weights.resize(p - 1);
    law.observed_mean.resize(p - 1);
    for (Eigen::Index j = 0, pos = 0; j < p; ++j) {
        if (j == target) {
            continue;
        }
        law.weights(pos) = -k_row(j) / k_tt;
        law.observed_mean(pos) = mean(j);
        ++pos;
    }
    return law;
}

}  // namespace

ConditionalLaw conditional_law(const GaussianMoments& moments, int target) {
    check_target(static_cast<std::size_t>(moments.precision.rows()), target);
    return law_from_row(moments.precision.row(target).transpose(), moments.mean, target);
}

Vector precision_row(const SemParams& params, const DagSpec& dag, int target, double variance_floor) {
    const auto p = static_cast<Eigen::Index>(params.size());
    check_target(params.size(), target);
    auto inv_var = [&](int k) {
        const double v = params.variances(k);
        if (!(v >= variance_floor) || !std::isfinite(v)) {
            throw NumericalError("degenerate noise variance at node " + dag.names[static_cast<std::size_t>(k)]);
        }
        return 1.0 / v;
    };
    // K_t. = sum_k S_kt S_k. / var_k over k in {t} u children(t).
    Vector row = Vector::Zero(p);
    const double w_t = inv_var(target);
    row(target) += w_t;
    for (int j : dag.parents[static_cast<std::size_t>(target)]) {
        row(j) -= w_t * params.coefficients(target, j);
    }
    for (int c : dag.children(target)) {
        const double w_c = inv_var(c);
        const double s_ct = -params.coefficients(c, target);
        row(c) += w_c * s_ct;
        for (int j : dag.parents[static_cast<std::size_t>(c)]) {
            row(j) -= w_c * s_ct * params.coefficients(c, j);
        }
    }
    return row;
}

ConditionalLaw conditional_law(const SemParams& params, const DagSpec& dag, int target, double variance_floor) {
    const Vector row = precision_row(params, dag, target, variance_floor);
    return law_from_row(row, implied_mean(params, dag), target);
}

Vector impute_batch(const ConditionalLaw& law, const Matrix& observed) {
    if (observed.cols() != law.weights.size()) {
        throw DataError("observed matrix has " + std::to_string(observed.cols()) + " columns, expected " +
                        std::to_string(law.weights.size()));
    }
    Vector out = (observed.rowwise() - law.observed_mean.transpose()) * law.weights;
    out.array() += law.offset;
    return out;
}

}  // namespace dagem
