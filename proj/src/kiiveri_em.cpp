#include "dagem/kiiveri_em.hpp"

#include "dagem/conditioning.hpp"
#include "dagem/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace dagem {

namespace {

// Gram of (x, 1) with the target column zeroed; constant across iterations.
Matrix observed_gram(const Matrix& observed, int target) {
    const Eigen::Index n = observed.rows();
    const Eigen::Index p = observed.cols() + 1;
    Matrix aug = Matrix::Zero(n, p + 1);
    for (Eigen::Index j = 0; j < p; ++j) {
        if (j != target) {
            aug.col(j) = observed.col(observed_position(static_cast<int>(j), target));
        }
    }
    aug.col(p).setOnes();
    return (aug.transpose() * aug) / static_cast<double>(n);
}

void fill_target_moments(Matrix& gram, const Matrix& observed, int target, const Vector& mu, double variance) {
    const double n = static_cast<double>(observed.rows());
    const Eigen::Index p = observed.cols() + 1;
    const Vector cross = observed.transpose() * mu / n;
    for (Eigen::Index j = 0; j < p; ++j) {
        if (j == target) {
            continue;
        }
        const double value = cross(observed_position(static_cast<int>(j), target));
        gram(target, j) = value;
        gram(j, target) = value;
    }
    gram(target, target) = mu.squaredNorm() / n + variance;
    gram(target, p) = mu.mean();
    gram(p, target) = gram(target, p);
}

struct ObservedSummary {
    Vector mean;
    Matrix covariance;  // 1/n divisor
};

ObservedSummary summarize(const Matrix& observed) {
    ObservedSummary s;
    s.mean = observed.colwise().mean();
    const Matrix centered = observed.rowwise() - s.mean.transpose();
    s.covariance = centered.transpose() * centered / static_cast<double>(observed.rows());
    return s;
}

double log_likelihood_from_summary(const SemParams& params, const DagSpec& dag, int target,
                                   const ObservedSummary& summary) {
    const GaussianMoments moments = implied_covariance(params, dag);
    const auto idx = observed_indices(dag.size(), target);
    const auto q = static_cast<Eigen::Index>(idx.size());
    Matrix sigma(q, q);
    Vector mean(q);
    for (Eigen::Index a = 0; a < q; ++a) {
        mean(a) = moments.mean(idx[static_cast<std::size_t>(a)]);
        for (Eigen::Index b = 0; b < q; ++b) {
            sigma(a, b) = moments.covariance(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
        }
    }
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("observed-data covariance is not positive definite");
    }
    const Matrix l = llt.matrixL();
    const double log_det = 2.0 * l.diagonal().array().log().sum();
    const Vector diff = summary.mean - mean;
    const Matrix scatter = summary.covariance + diff * diff.transpose();
    const double quad = llt.solve(scatter).trace();
    return -0.5 * (static_cast<double>(q) * std::log(2.0 * std::numbers::pi) + log_det + quad);
}

}  // namespace

CompletedMoments expected_complete_moments(const SemParams& params, const DagSpec& dag, int target,
                                           const Vector& observed_row) {
    const auto p = static_cast<Eigen::Index>(dag.size());
    if (observed_row.size() != p - 1) {
        throw DataError("observed row has the wrong length");
    }
    const ConditionalLaw law = conditional_law(params, dag, target);
    CompletedMoments out;
    out.mean.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        out.mean(j) = j == target ? law.mean_at(observed_row)
                                  : observed_row(observed_position(static_cast<int>(j), target));
    }
    out.second = out.mean * out.mean.transpose();
    out.second(target, target) += law.variance;
    return out;
}

Matrix completed_gram(const SemParams& params, const DagSpec& dag, int target, const Matrix& observed) {
    const ConditionalLaw law = conditional_law(params, dag, target);
    const Vector mu = impute_batch(law, observed);
    Matrix gram = observed_gram(observed, target);
    fill_target_moments(gram, observed, target, mu, law.variance);
    return gram;
}

Matrix complete_data_gram(const Matrix& data) {
    Matrix aug(data.rows(), data.cols() + 1);
    aug << data, Vector::Ones(data.rows());
    return (aug.transpose() * aug) / static_cast<double>(data.rows());
}

SemParams kiiveri_m_step(const DagSpec& dag, const Matrix& gram, double variance_min, double variance_max,
                         double condition_cap) {
    const auto p = static_cast<Eigen::Index>(dag.size());
    if (gram.rows() != p + 1 || gram.cols() != p + 1) {
        throw DataError("Gram matrix must be (p+1) x (p+1)");
    }
    SemParams out = make_params(dag);
    for (Eigen::Index k = 0; k < p; ++k) {
        const auto& pa = dag.parents[static_cast<std::size_t>(k)];
        const auto d = static_cast<Eigen::Index>(pa.size());
        std::vector<Eigen::Index> z(pa.begin(), pa.end());
        z.push_back(p);
        Matrix a(d + 1, d + 1);
        Vector s(d + 1);
        for (Eigen::Index i = 0; i <= d; ++i) {
            s(i) = gram(z[static_cast<std::size_t>(i)], k);
            for (Eigen::Index j = 0; j <= d; ++j) {
                a(i, j) = gram(z[static_cast<std::size_t>(i)], z[static_cast<std::size_t>(j)]);
            }
        }
        const Eigen::SelfAdjointEigenSolver<Matrix> eig(a, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (!(lo > 0.0) || hi / lo > condition_cap) {
            throw NumericalError("ill-conditioned completed moments for node " +
                                 dag.names[static_cast<std::size_t>(k)]);
        }
        const Vector beta = a.ldlt().solve(s);
        for (Eigen::Index j = 0; j < d; ++j) {
            out.coefficients(k, pa[static_cast<std::size_t>(j)]) = beta(j);
        }
        out.intercepts(k) = beta(d);
        out.variances(k) = std::clamp(gram(k, k) - beta.dot(s), variance_min, variance_max);
    }
    return out;
}

double observed_log_likelihood(const SemParams& params, const DagSpec& dag, int target, const Matrix& observed) {
    if (observed.cols() != static_cast<Eigen::Index>(dag.size()) - 1 || observed.rows() == 0) {
        throw DataError("observed matrix shape does not match the DAG");
    }
    return log_likelihood_from_summary(params, dag, target, summarize(observed));
}

AdaptResult kiiveri_adapt(const SemParams& init, const DagSpec& dag, int target, const Matrix& observed,
                          const EmConfig& config) {
    config.validate();
    check_params(init, dag);
    if (observed.cols() != static_cast<Eigen::Index>(dag.size()) - 1 || observed.rows() == 0) {
        throw DataError("observed matrix shape does not match the DAG");
    }
    const bool intercept = true;
    const ObservedSummary summary = summarize(observed);
    const Matrix base_gram = observed_gram(observed, target);

    AdaptResult result;
    SemParams params = init;
    EmTrace& trace = result.trace;
    trace.initial_b = active_coefficients(params, dag, target, intercept);
    trace.initial_sigma2 = params.variances(target);
    trace.termination = Termination::MaxIterations;
    double loglik = config.max_iterations > 0 ? log_likelihood_from_summary(params, dag, target, summary) : 0.0;

    for (int r = 0; r < config.max_iterations; ++r) {
        const ConditionalLaw law = conditional_law(params, dag, target);
        const Vector mu = impute_batch(law, observed);
        Matrix gram = base_gram;
        fill_target_moments(gram, observed, target, mu, law.variance);
        SemParams next = kiiveri_m_step(dag, gram, config.variance_min, config.variance_max, config.condition_cap);

        EmIteration rec;
        rec.iteration = r + 1;
        rec.surrogate_before = loglik;
        loglik = log_likelihood_from_summary(next, dag, target, summary);
        rec.surrogate_after = loglik;
        rec.b = active_coefficients(next, dag, target, intercept);
        rec.sigma2 = next.variances(target);
        rec.step_size = std::numeric_limits<double>::quiet_NaN();
        rec.grad_norm = (rec.b - active_coefficients(params, dag, target, intercept)).norm();
        trace.iterations.push_back(rec);

        const double d_coef = std::max((next.coefficients - params.coefficients).cwiseAbs().maxCoeff(),
                                       (next.intercepts - params.intercepts).cwiseAbs().maxCoeff());
        const double d_var = (next.variances - params.variances).cwiseAbs().maxCoeff();
        params = std::move(next);
        if (!std::isfinite(d_coef) || !std::isfinite(d_var)) {
            throw NumericalError("Kiiveri EM diverged at iteration " + std::to_string(r + 1));
        }
        if (d_coef <= config.tol_b && d_var <= config.tol_sigma) {
            trace.termination = Termination::Converged;
            break;
        }
    }
    result.params = std::move(params);
    return result;
}

}  // namespace dagem
