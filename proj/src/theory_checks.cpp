#include "dagem/theory_checks.hpp"

#include "dagem/conditioning.hpp"
#include "dagem/datagen.hpp"
#include "dagem/errors.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace dagem {

namespace {

double spectral_norm(const Matrix& m) {
    if (m.size() == 0) {
        return 0.0;
    }
    return Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
}

Vector active_theta(const SemParams& params, const DagSpec& dag, int target, bool include_intercept) {
    const Vector b = active_coefficients(params, dag, target, include_intercept);
    Vector theta(b.size() + 1);
    theta << b, std::log(params.variances(target));
    return theta;
}

SemParams with_theta(const SemParams& params, const DagSpec& dag, int target, const Vector& theta,
                     bool include_intercept) {
    SemParams out = with_active_coefficients(params, dag, target, theta.head(theta.size() - 1), include_intercept);
    out.variances(target) = std::exp(theta(theta.size() - 1));
    return out;
}

struct SlopeEval {
    Vector slope;
    double k_tt = 0.0;
};

SlopeEval slope_at(const SemParams& params, const DagSpec& dag, int target) {
    const Vector row = precision_row(params, dag, target);
    SlopeEval out;
    out.k_tt = row(target);
    const auto idx = observed_indices(dag.size(), target);
    out.slope.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t a = 0; a < idx.size(); ++a) {
        out.slope(static_cast<Eigen::Index>(a)) = row(idx[a]) / out.k_tt;
    }
    return out;
}

struct Summary {
    Vector mean;
    Matrix covariance;
};

Summary summarize(const Matrix& observed) {
    Summary s;
    s.mean = observed.colwise().mean();
    const Matrix centered = observed.rowwise() - s.mean.transpose();
    s.covariance = centered.transpose() * centered / static_cast<double>(observed.rows());
    return s;
}

double nll_from_summary(const SemParams& params, const DagSpec& dag, int target, const Summary& summary) {
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
    const Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("observed-data covariance is not positive definite");
    }
    const Matrix l = llt.matrixL();
    const double log_det = 2.0 * l.diagonal().array().log().sum();
    const Vector diff = summary.mean - mean;
    const Matrix scatter = summary.covariance + diff * diff.transpose();
    return 0.5 * (log_det + llt.solve(scatter).trace());
}

double min_eigenvalue(const Matrix& m) {
    const Matrix sym = 0.5 * (m + m.transpose());
    return Eigen::SelfAdjointEigenSolver<Matrix>(sym, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

}  // namespace

CurvatureReport curvature_constants(const Matrix& parent_moment, double delta_min, double delta_max, double v_min,
                                    double v_max, double rho, double gamma) {
    if (!(delta_min > 0.0) || delta_max < delta_min) {
        throw ConfigError("variance bounds must satisfy 0 < delta_min <= delta_max");
    }
    if (!(v_min > 0.0) || v_max < v_min) {
        throw ConfigError("residual bounds must satisfy 0 < v_min <= v_max");
    }
    if (rho < 0.0 || gamma < 0.0) {
        throw ConfigError("rho and gamma must be non-negative");
    }
    if (parent_moment.rows() != parent_moment.cols() || parent_moment.rows() == 0 ||
        !parent_moment.isApprox(parent_moment.transpose(), 1e-12)) {
        throw NumericalError("parent moment must be a non-empty symmetric matrix");
    }
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(parent_moment, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0)) {
        throw NumericalError("parent moment is not positive definite");
    }
    CurvatureReport r;
    r.lambda_b = lo / delta_max;
    r.mu_b = hi / delta_min;
    r.lambda_alpha = v_min / (2.0 * delta_max);
    r.mu_alpha = v_max / (2.0 * delta_min);
    r.rho = rho;
    const double gap_lo = r.lambda_b - r.lambda_alpha;
    const double gap_hi = r.mu_b - r.mu_alpha;
    r.lambda = 0.5 * (r.lambda_b + r.lambda_alpha - std::sqrt(gap_lo * gap_lo + 4.0 * rho * rho));
    r.mu = 0.5 * (r.mu_b + r.mu_alpha + std::sqrt(gap_hi * gap_hi + 4.0 * rho * rho));
    r.schur_ok = rho * rho < r.lambda_b * r.lambda_alpha;
    r.gamma = gamma;
    r.margin = r.lambda - gamma;
    r.kappa = r.lambda > 0.0 ? gamma / r.lambda : std::numeric_limits<double>::infinity();
    return r;
}

CurvatureReport ball_curvature(const SemParams& params, const DagSpec& dag, int target, const Matrix& observed,
                               double radius, bool include_intercept, double gamma) {
    if (!(radius > 0.0)) {
        throw ConfigError("ball radius must be positive");
    }
    const ImputedStats stats = e_step(params, dag, target, observed, include_intercept);
    const Vector b = active_coefficients(params, dag, target, include_intercept);
    const double sigma2 = params.variances(target);
    const Matrix& m = stats.parent_moment;
    const double lam_max = Eigen::SelfAdjointEigenSolver<Matrix>(m, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();

    auto residual_moment = [&](const Vector& coef) {
        return stats.conditional_variance + stats.response_second_moment - 2.0 * coef.dot(stats.cross_moment) +
               coef.dot(m * coef);
    };
    const double delta_min = sigma2 * std::exp(-radius);
    const double delta_max = sigma2 * std::exp(radius);
    const double v_min = residual_moment(m.ldlt().solve(stats.cross_moment));
    const double spread = std::sqrt(std::max(0.0, residual_moment(b) - stats.conditional_variance)) +
                          radius * std::sqrt(lam_max);
    const double v_max = stats.conditional_variance + spread * spread;
    const double rho = ((stats.cross_moment - m * b).norm() + radius * lam_max) / delta_min;
    return curvature_constants(m, delta_min, delta_max, v_min, v_max, rho, gamma);
}

ActiveJacobians active_jacobians(const SemParams& params, const DagSpec& dag, int target, bool include_intercept,
                                 double step) {
    if (!(step > 0.0)) {
        throw ConfigError("finite-difference step must be positive");
    }
    const Vector theta = active_theta(params, dag, target, include_intercept);
    const auto dim = theta.size();
    const auto p = static_cast<Eigen::Index>(dag.size());
    ActiveJacobians out;
    const SlopeEval centre = slope_at(params, dag, target);
    out.slope_value = centre.slope;
    out.precision_tt = centre.k_tt;
    out.mean.resize(p, dim);
    out.slope.resize(p - 1, dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        const double h = step * std::max(1.0, std::abs(theta(i)));
        Vector up = theta;
        Vector down = theta;
        up(i) += h;
        down(i) -= h;
        const SemParams pu = with_theta(params, dag, target, up, include_intercept);
        const SemParams pd = with_theta(params, dag, target, down, include_intercept);
        out.mean.col(i) = (implied_mean(pu, dag) - implied_mean(pd, dag)) / (2.0 * h);
        out.slope.col(i) = (slope_at(pu, dag, target).slope - slope_at(pd, dag, target).slope) / (2.0 * h);
    }
    return out;
}

LipschitzEnvelope lipschitz_envelope(const SemParams& params, const DagSpec& dag, int target, double radius,
                                     int probe_count, std::uint64_t seed, bool include_intercept, double k_floor) {
    if (!(radius > 0.0)) {
        throw ConfigError("ball radius must be positive");
    }
    if (probe_count < 0) {
        throw ConfigError("probe count must be non-negative");
    }
    const Vector centre = active_theta(params, dag, target, include_intercept);
    const auto dim = centre.size();
    const CounterRng rng(seed, 0x11b);
    LipschitzEnvelope env;
    for (int k = 0; k <= probe_count; ++k) {
        Vector theta = centre;
        if (k > 0) {
            const auto base = static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(dim + 1);
            Vector dir(dim);
            for (Eigen::Index j = 0; j < dim; ++j) {
                dir(j) = rng.normal(base + static_cast<std::uint64_t>(j));
            }
            const double scale =
                radius * std::pow(rng.uniform(base + static_cast<std::uint64_t>(dim)), 1.0 / static_cast<double>(dim));
            theta += scale * dir / dir.norm();
        }
        const SemParams probe = with_theta(params, dag, target, theta, include_intercept);
        const ActiveJacobians jac = active_jacobians(probe, dag, target, include_intercept);
        if (!(jac.precision_tt >= k_floor)) {
            throw NumericalError("K_tt fell below its floor inside the ball");
        }
        env.c_m = std::max(env.c_m, spectral_norm(jac.mean));
        env.c_k = std::max(env.c_k, spectral_norm(jac.slope));
        env.c_a = std::max(env.c_a, jac.slope_value.norm());
    }
    env.probes = probe_count + 1;
    return env;
}

double gamma_bound(const LipschitzEnvelope& envelope, double radius, double delta_min, const Matrix& design,
                   const Matrix& observed, const Vector& reference_mean) {
    if (!(delta_min > 0.0)) {
        throw ConfigError("delta_min must be positive");
    }
    if (design.rows() != observed.rows() || observed.cols() != reference_mean.size()) {
        throw DataError("gamma bound inputs have inconsistent shapes");
    }
    const double c0 = envelope.c_m + envelope.c_a * envelope.c_m + envelope.c_k * envelope.c_m * radius;
    const Vector pa_norm = design.rowwise().norm();
    const Vector dev_norm = (observed.rowwise() - reference_mean.transpose()).rowwise().norm();
    const double mean = (pa_norm.array() * (c0 + envelope.c_k * dev_norm.array())).mean();
    return mean / delta_min;
}

double observed_nll(const SemParams& params, const DagSpec& dag, int target, const Matrix& observed) {
    if (observed.cols() != static_cast<Eigen::Index>(dag.size()) - 1 || observed.rows() == 0) {
        throw DataError("observed matrix shape does not match the DAG");
    }
    return nll_from_summary(params, dag, target, summarize(observed));
}

InformationReport louis_check(const SemParams& params, const DagSpec& dag, int target, const Matrix& observed,
                              double fd_step, bool include_intercept) {
    if (!(fd_step > 0.0)) {
        throw ConfigError("fd_step must be positive");
    }
    const ImputedStats stats = e_step(params, dag, target, observed, include_intercept);
    const Matrix& x = *stats.design;
    const Vector b = active_coefficients(params, dag, target, include_intercept);
    const double s2 = params.variances(target);
    const double v = stats.conditional_variance;
    const Eigen::Index d = x.rows() > 0 ? x.cols() : 0;
    const Eigen::Index dim = d + 1;
    const double n = static_cast<double>(x.rows());
    const Vector e = (stats.conditional_means.array() - stats.response_offset).matrix() - x * b;

    InformationReport r;
    r.i_comp = Matrix::Zero(dim, dim);
    r.i_comp.topLeftCorner(d, d) = stats.parent_moment / s2;
    const Vector xe = x.transpose() * e / n;
    r.i_comp.block(0, d, d, 1) = xe / s2;
    r.i_comp.block(d, 0, 1, d) = xe.transpose() / s2;
    r.i_comp(d, d) = (e.squaredNorm() / n + v) / (2.0 * s2);

    const double s4 = s2 * s2;
    r.i_miss = Matrix::Zero(dim, dim);
    r.i_miss.topLeftCorner(d, d) = v * stats.parent_moment / s4;
    r.i_miss.block(0, d, d, 1) = v * xe / s4;
    r.i_miss.block(d, 0, 1, d) = v * xe.transpose() / s4;
    r.i_miss(d, d) = (v * e.squaredNorm() / n + 0.5 * v * v) / s4;

    const Summary summary = summarize(observed);
    const Vector theta = active_theta(params, dag, target, include_intercept);
    auto f = [&](const Vector& th) {
        return nll_from_summary(with_theta(params, dag, target, th, include_intercept), dag, target, summary);
    };
    auto hessian = [&](double step) {
        Matrix h(dim, dim);
        Vector hs(dim);
        for (Eigen::Index i = 0; i < dim; ++i) {
            hs(i) = step * std::max(1.0, std::abs(theta(i)));
        }
        for (Eigen::Index i = 0; i < dim; ++i) {
            for (Eigen::Index j = i; j < dim; ++j) {
                auto at = [&](double si, double sj) {
                    Vector th = theta;
                    th(i) += si * hs(i);
                    th(j) += sj * hs(j);
                    return f(th);
                };
                const double value = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * hs(i) * hs(j));
                h(i, j) = value;
                h(j, i) = value;
            }
        }
        return h;
    };
    const Matrix h_full = hessian(fd_step);
    const Matrix h_half = hessian(0.5 * fd_step);
    r.i_obs = (4.0 * h_half - h_full) / 3.0;

    const Matrix predicted = r.i_comp - r.i_miss;
    r.residual = (r.i_obs - predicted).norm();
    r.residual_plain = (h_full - predicted).norm();
    r.residual_half = (h_half - predicted).norm();
    r.fd_stable = r.residual_half <= std::max(2.0 * r.residual_plain, 1e-6);
    r.min_eig_miss = min_eigenvalue(r.i_miss);
    r.min_eig_comp_minus_obs = min_eigenvalue(r.i_comp - r.i_obs);
    return r;
}

ContractionEstimate contraction_rate(const std::vector<Vector>& path, const Vector& reference) {
    if (path.size() < 6) {
        throw DataError("contraction estimate needs at least five iterations");
    }
    ContractionEstimate est;
    for (const auto& theta : path) {
        if (theta.size() != reference.size()) {
            throw DataError("reference length does not match the iterates");
        }
        est.errors.push_back((theta - reference).norm());
    }
    constexpr double kTiny = 1e-300;
    for (std::size_t r = 0; r + 1 < est.errors.size(); ++r) {
        if (est.errors[r] <= kTiny) {
            break;
        }
        est.ratios.push_back(est.errors[r + 1] / est.errors[r]);
        if (est.errors[r + 1] <= kTiny) {
            break;
        }
    }
    if (est.ratios.empty()) {
        est.kappa = 0.0;
        est.floor = 0.0;
        return est;
    }
    std::size_t plateau = est.ratios.size();
    for (std::size_t r = 0; r < est.ratios.size(); ++r) {
        if (est.ratios[r] > 0.98) {
            plateau = r;
            break;
        }
    }
    if (plateau == 0) {
        est.kappa = est.ratios.front();
    } else {
        double log_sum = 0.0;
        for (std::size_t r = 0; r < plateau; ++r) {
            if (est.ratios[r] <= 0.0) {
                log_sum = -std::numeric_limits<double>::infinity();
                break;
            }
            log_sum += std::log(est.ratios[r]);
        }
        est.kappa = std::exp(log_sum / static_cast<double>(plateau));
    }
    if (plateau < est.ratios.size()) {
        est.plateau_start = static_cast<int>(plateau);
        double sum = 0.0;
        for (std::size_t r = plateau; r < est.errors.size(); ++r) {
            sum += est.errors[r];
        }
        est.floor = sum / static_cast<double>(est.errors.size() - plateau);
    } else {
        est.floor = est.errors.back();
    }
    return est;
}

ContractionEstimate contraction_rate(const EmTrace& trace, const Vector& reference) {
    if (trace.iterations.size() < 5) {
        throw DataError("contraction estimate needs at least five iterations");
    }
    return contraction_rate(trace.active_path(), reference);
}

}  // namespace dagem
