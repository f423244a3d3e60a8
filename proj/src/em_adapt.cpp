#include "dagem/em_adapt.hpp"

#include "dagem/conditioning.hpp"
#include "dagem/errors.hpp"
#include "dagem/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace dagem {

void EmConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("em." + field + ": " + why);
    };
    if (!(variance_min > 0.0)) fail("variance_min", "must be positive");
    if (!(variance_max >= variance_min)) fail("variance_max", "must be >= variance_min");
    if (!(tol_b > 0.0)) fail("tol_b", "must be positive");
    if (!(tol_sigma > 0.0)) fail("tol_sigma", "must be positive");
    if (max_iterations < 0) fail("max_iterations", "must be non-negative");
    if (step_rule == StepRule::Fixed && !(fixed_step > 0.0)) fail("fixed_step", "must be positive");
    if (exact_refit_every < 0) fail("exact_refit_every", "must be non-negative");
    if (!(condition_cap > 1.0)) fail("condition_cap", "must exceed 1");
}

std::vector<Vector> EmTrace::active_path() const {
    std::vector<Vector> out;
    out.reserve(iterations.size() + 1);
    auto pack = [](const Vector& b, double s2) {
        Vector theta(b.size() + 1);
        theta << b, std::log(s2);
        return theta;
    };
    out.push_back(pack(initial_b, initial_sigma2));
    for (const auto& it : iterations) {
        out.push_back(pack(it.b, it.sigma2));
    }
    return out;
}

Matrix parent_design(const DagSpec& dag, int target, const Matrix& observed, bool include_intercept) {
    const auto& pa = dag.parents.at(static_cast<std::size_t>(target));
    const auto d = static_cast<Eigen::Index>(pa.size());
    if (observed.cols() != static_cast<Eigen::Index>(dag.size()) - 1) {
        throw DataError("target data has " + std::to_string(observed.cols()) + " columns, expected " +
                        std::to_string(dag.size() - 1));
    }
    Matrix design(observed.rows(), d + (include_intercept ? 1 : 0));
    for (Eigen::Index j = 0; j < d; ++j) {
        design.col(j) = observed.col(observed_position(pa[static_cast<std::size_t>(j)], target));
    }
    if (include_intercept) {
        design.col(d).setOnes();
    }
    return design;
}

Vector active_coefficients(const SemParams& params, const DagSpec& dag, int target, bool include_intercept) {
    const auto& pa = dag.parents.at(static_cast<std::size_t>(target));
    const auto d = static_cast<Eigen::Index>(pa.size());
    Vector b(d + (include_intercept ? 1 : 0));
    for (Eigen::Index j = 0; j < d; ++j) {
        b(j) = params.coefficients(target, pa[static_cast<std::size_t>(j)]);
    }
    if (include_intercept) {
        b(d) = params.intercepts(target);
    }
    return b;
}

SemParams with_active_coefficients(SemParams params, const DagSpec& dag, int target, const Vector& b,
                                   bool include_intercept) {
    const auto& pa = dag.parents.at(static_cast<std::size_t>(target));
    const auto d = static_cast<Eigen::Index>(pa.size());
    if (b.size() != d + (include_intercept ? 1 : 0)) {
        throw ConfigError("active coefficient vector has the wrong length");
    }
    for (Eigen::Index j = 0; j < d; ++j) {
        params.coefficients(target, pa[static_cast<std::size_t>(j)]) = b(j);
    }
    if (include_intercept) {
        params.intercepts(target) = b(d);
    }
    return params;
}

ImputedStats e_step(const SemParams& params, const DagSpec& dag, int target, const Matrix& observed,
                    bool include_intercept) {
    auto design = std::make_shared<const Matrix>(parent_design(dag, target, observed, include_intercept));
    const Matrix moment = (design->transpose() * *design) / static_cast<double>(design->rows());
    return e_step(params, dag, target, observed, std::move(design), moment, include_intercept);
}

ImputedStats e_step(const SemParams& params, const DagSpec& dag, int target, const Matrix& observed,
                    std::shared_ptr<const Matrix> design, const Matrix& parent_moment, bool include_intercept) {
    if (observed.rows() == 0) {
        throw DataError("target data has no rows");
    }
    const ConditionalLaw law = conditional_law(params, dag, target);
    ImputedStats stats;
    stats.conditional_means = impute_batch(law, observed);
    stats.conditional_variance = law.variance;
    stats.response_offset = include_intercept ? 0.0 : params.intercepts(target);
    const double n = static_cast<double>(observed.rows());
    const Vector response = stats.conditional_means.array() - stats.response_offset;
    stats.cross_moment = (design->transpose() * response) / n;
    stats.response_second_moment = response.squaredNorm() / n;
    stats.parent_moment = parent_moment;
    stats.design = std::move(design);
    return stats;
}

double surrogate_value(const ImputedStats& stats, const Vector& b, double sigma2) {
    const double quad = b.dot(stats.cross_moment) - 0.5 * b.dot(stats.parent_moment * b);
    const double resid = stats.conditional_variance + stats.response_second_moment;
    return quad / sigma2 - 0.5 * (std::log(sigma2) + resid / sigma2);
}

Vector surrogate_gradient(const ImputedStats& stats, const Vector& b, double sigma2) {
    return (stats.cross_moment - stats.parent_moment * b) / sigma2;
}

Vector gradient_m_step(const ImputedStats& stats, const Vector& b, double sigma2, double eta) {
    return b + eta * surrogate_gradient(stats, b, sigma2);
}

double default_step_size(const ImputedStats& stats, double sigma2) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(stats.parent_moment, Eigen::EigenvaluesOnly);
    const double lambda_max = eig.eigenvalues().maxCoeff();
    if (!(lambda_max > 1e-300)) {
        throw NumericalError("degenerate parent moment: largest eigenvalue is not positive");
    }
    return sigma2 / lambda_max;
}

Vector exact_m_step(const ImputedStats& stats, double condition_cap) {
    const Eigen::SelfAdjointEigenSolver<Matrix> eig(stats.parent_moment, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > condition_cap) {
        throw NumericalError("ill-conditioned parent moment (condition number " +
                             std::to_string(lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity()) +
                             ") in exact M-step");
    }
    return stats.parent_moment.ldlt().solve(stats.cross_moment);
}

double variance_update(const ImputedStats& stats, const Vector& b_new, double variance_min, double variance_max) {
    const Vector fitted = *stats.design * b_new;
    const Vector resid = (stats.conditional_means.array() - stats.response_offset).matrix() - fitted;
    const double value = stats.conditional_variance + resid.squaredNorm() / static_cast<double>(resid.size());
    return std::clamp(value, variance_min, variance_max);
}

AdaptResult adapt(const SemParams& source_params, const DagSpec& dag, int target, const Matrix& observed,
                  const EmConfig& config) {
    config.validate();
    check_params(source_params, dag);
    if (target < 0 || static_cast<std::size_t>(target) >= dag.size()) {
        throw ConfigError("target index out of range");
    }
    const auto& pa = dag.parents[static_cast<std::size_t>(target)];
    if (pa.empty() && !config.allow_parentless_target) {
        throw ConfigError("target " + dag.names[static_cast<std::size_t>(target)] +
                          " has no parents; set allow_parentless_target for an intercept-only mechanism");
    }
    if (pa.empty() && !config.include_intercept) {
        throw ConfigError("parentless target without intercept leaves nothing to adapt");
    }

    std::vector<int> roots;
    roots.reserve(config.refit_roots.size());
    for (const auto& name : config.refit_roots) {
        roots.push_back(dag.index_of(name));
    }
    SemParams params = roots.empty() ? source_params
                                     : refit_root_marginals(source_params, dag, target, observed, roots);

    const bool intercept = config.include_intercept;
    auto design = std::make_shared<const Matrix>(parent_design(dag, target, observed, intercept));
    const Matrix moment = (design->transpose() * *design) / static_cast<double>(design->rows());

    AdaptResult result;
    EmTrace& trace = result.trace;
    Vector b = active_coefficients(params, dag, target, intercept);
    double sigma2 = params.variances(target);
    trace.initial_b = b;
    trace.initial_sigma2 = sigma2;
    trace.termination = Termination::MaxIterations;

    for (int r = 0; r < config.max_iterations; ++r) {
        const ImputedStats stats = e_step(params, dag, target, observed, design, moment, intercept);
        EmIteration rec;
        rec.iteration = r + 1;
        rec.surrogate_before = surrogate_value(stats, b, sigma2);
        rec.grad_norm = surrogate_gradient(stats, b, sigma2).norm();

        const bool exact = config.m_step_mode == MStepMode::Exact ||
                           (config.exact_refit_every > 0 && (r + 1) % config.exact_refit_every == 0);
        Vector b_new;
        if (exact) {
            b_new = exact_m_step(stats, config.condition_cap);
            rec.step_size = std::numeric_limits<double>::quiet_NaN();
        } else {
            rec.step_size =
                config.step_rule == StepRule::Fixed ? config.fixed_step : default_step_size(stats, sigma2);
            b_new = gradient_m_step(stats, b, sigma2, rec.step_size);
        }
        const double sigma2_new =
            config.update_variance ? variance_update(stats, b_new, config.variance_min, config.variance_max) : sigma2;
        rec.surrogate_after = surrogate_value(stats, b_new, sigma2_new);
        rec.b = b_new;
        rec.sigma2 = sigma2_new;
        trace.iterations.push_back(rec);

        params = with_active_coefficients(std::move(params), dag, target, b_new, intercept);
        params.variances(target) = sigma2_new;

        const double db = (b_new - b).norm();
        const double ds = std::abs(sigma2_new - sigma2);
        b = std::move(b_new);
        sigma2 = sigma2_new;
        if (!std::isfinite(db) || !std::isfinite(sigma2)) {
            throw NumericalError("EM iterate diverged at iteration " + std::to_string(r + 1));
        }
        if (db <= config.tol_b && (!config.update_variance || ds <= config.tol_sigma)) {
            trace.termination = Termination::Converged;
            break;
        }
    }
    result.params = std::move(params);
    return result;
}

Vector impute_adapted(const SemParams& params, const DagSpec& dag, int target, const Matrix& observed) {
    return impute_batch(conditional_law(params, dag, target), observed);
}

void write_trace_csv(std::ostream& out, const EmTrace& trace) {
    const auto d = trace.initial_b.size();
    out << "iteration";
    for (Eigen::Index j = 0; j < d; ++j) {
        out << ",b" << j;
    }
    out << ",sigma2,surrogate,grad_norm,eta\n";
    const auto old_precision = out.precision(12);
    auto row = [&](int iteration, const Vector& b, double s2, double q, double g, double eta) {
        out << iteration;
        for (Eigen::Index j = 0; j < d; ++j) {
            out << ',' << b(j);
        }
        out << ',' << s2 << ',' << q << ',' << g << ',';
        if (std::isfinite(eta)) {
            out << eta;
        }
        out << '\n';
    };
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (trace.iterations.empty()) {
        row(0, trace.initial_b, trace.initial_sigma2, nan, nan, nan);
    } else {
        const auto& first = trace.iterations.front();
        row(0, trace.initial_b, trace.initial_sigma2, first.surrogate_before, first.grad_norm, nan);
    }
    for (const auto& it : trace.iterations) {
        row(it.iteration, it.b, it.sigma2, it.surrogate_after, it.grad_norm, it.step_size);
    }
    out.precision(old_precision);
}

}  // namespace dagem
