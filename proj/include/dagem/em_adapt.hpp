#pragma once

#include "dagem/dag_model.hpp"

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace dagem {

enum class MStepMode { Gradient, Exact };
enum class StepRule { SafeDefault, Fixed };

struct EmConfig {
    MStepMode m_step_mode = MStepMode::Gradient;
    StepRule step_rule = StepRule::SafeDefault;
    double fixed_step = 1.0;  // used when step_rule == Fixed
    bool update_variance = true;
    double variance_min = 1e-6;
    double variance_max = 1e6;
    double tol_b = 1e-8;
    double tol_sigma = 1e-8;
    int max_iterations = 500;
    std::vector<std::string> refit_roots;
    bool include_intercept = true;
    bool allow_parentless_target = false;
    // Every K-th iteration uses the exact M-step; 0 disables.
    int exact_refit_every = 0;
    // Largest accepted condition number of the parent moment in exact mode.
    double condition_cap = 1e12;

    /// Throws ConfigError with the offending field name.
    void validate() const;
};

/// E-step output for the active mechanism at the target node.
///
/// `design` holds one row per target sample: the parent values, followed by
/// a constant 1 when the intercept is active. It never changes across EM
/// iterations, so it is shared rather than copied.
struct ImputedStats {
    std::shared_ptr<const Matrix> design;
    Matrix parent_moment;       // (1/n) design^T design
    Vector cross_moment;        // (1/n) design^T (mu - response_offset)
    Vector conditional_means;   // mu_t(x_-t^(i)) per sample
    double conditional_variance = 0.0;
    // Intercept held fixed when the intercept is not part of the active block.
    double response_offset = 0.0;
    // (1/n) sum_i (mu_i - response_offset)^2
    double response_second_moment = 0.0;

    [[nodiscard]] Eigen::Index sample_count() const { return conditional_means.size(); }
};

struct EmIteration {
    int iteration = 0;
    Vector b;                 // active coefficients after the update
    double sigma2 = 0.0;      // noise variance after the update
    double surrogate_before = 0.0;
    double surrogate_after = 0.0;
    double grad_norm = 0.0;
    double step_size = 0.0;
};

enum class Termination { Converged, MaxIterations };

struct EmTrace {
    Vector initial_b;
    double initial_sigma2 = 0.0;
    std::vector<EmIteration> iterations;
    Termination termination = Termination::MaxIterations;

    /// Active-block iterates theta^(r) = (b, log sigma^2), starting with the
    /// initial point.
    [[nodiscard]] std::vector<Vector> active_path() const;
};

struct AdaptResult {
    SemParams params;
    EmTrace trace;
};

/// Parent design for the target mechanism from an n x (p-1) observed matrix.
[[nodiscard]] Matrix parent_design(const DagSpec& dag, int target, const Matrix& observed, bool include_intercept);

/// Active coefficients (parents in DAG order, then the intercept if active).
[[nodiscard]] Vector active_coefficients(const SemParams& params, const DagSpec& dag, int target,
                                         bool include_intercept);

/// Copy of `params` with the target's coefficients (and intercept) replaced.
[[nodiscard]] SemParams with_active_coefficients(SemParams params, const DagSpec& dag, int target, const Vector& b,
                                                 bool include_intercept);

[[nodiscard]] ImputedStats e_step(const SemParams& params, const DagSpec& dag, int target, const Matrix& observed,
                                  bool include_intercept);

/// E-step reusing a precomputed design and parent moment.
[[nodiscard]] ImputedStats e_step(const SemParams& params, const DagSpec& dag, int target, const Matrix& observed,
                                  std::shared_ptr<const Matrix> design, const Matrix& parent_moment,
                                  bool include_intercept);

/// Expected complete-data log-likelihood of the target mechanism, up to an
/// additive constant:
///   (1/s2)(b'v - b'Mb/2) - (log s2 + (V + mean(mu^2))/s2)/2.
[[nodiscard]] double surrogate_value(const ImputedStats& stats, const Vector& b, double sigma2);

/// (v - M b) / s2.
[[nodiscard]] Vector surrogate_gradient(const ImputedStats& stats, const Vector& b, double sigma2);

/// One ascent step b + (eta / s2)(v - M b).
[[nodiscard]] Vector gradient_m_step(const ImputedStats& stats, const Vector& b, double sigma2, double eta);

/// eta = s2 / lambda_max(M), i.e. the inverse smoothness constant.
/// Throws NumericalError when lambda_max(M) is not positive.
[[nodiscard]] double default_step_size(const ImputedStats& stats, double sigma2);

/// M^-1 v. Throws NumericalError when M is singular or its condition number
/// exceeds `condition_cap`.
[[nodiscard]] Vector exact_m_step(const ImputedStats& stats, double condition_cap = 1e12);

/// Closed-form variance update (1/n) sum_i [V + (mu_i - b'x_i)^2], clamped to
/// [variance_min, variance_max].
[[nodiscard]] double variance_update(const ImputedStats& stats, const Vector& b_new, double variance_min,
                                     double variance_max);

/// Domain-adaptive EM. Starting from the source fit, only the mechanism of
/// `target` (its parent coefficients, intercept and noise variance) and the
/// configured root marginals are changed; every other entry of the returned
/// parameters is bit-identical to `source_params`.
[[nodiscard]] AdaptResult adapt(const SemParams& source_params, const DagSpec& dag, int target,
                                const Matrix& observed, const EmConfig& config = {});

/// Conditional-mean imputation of the missing target under `params`.
[[nodiscard]] Vector impute_adapted(const SemParams& params, const DagSpec& dag, int target, const Matrix& observed);

/// CSV: iteration, b_0..b_{d-1}, sigma2, surrogate, grad_norm, eta.
/// Row 0 is the initial point.
void write_trace_csv(std::ostream& out, const EmTrace& trace);

}  // namespace dagem
