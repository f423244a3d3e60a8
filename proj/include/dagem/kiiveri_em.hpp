#pragma once

#include "dagem/dag_model.hpp"
#include "dagem/em_adapt.hpp"

namespace dagem {

/// First and second conditional moments of the full vector given x_{-t}.
struct CompletedMoments {
    Vector mean;    // observed coordinates copied, coordinate t = mu_t(x)
    Matrix second;  // mean mean^T plus V_t at (t, t)
};

[[nodiscard]] CompletedMoments expected_complete_moments(const SemParams& params, const DagSpec& dag, int target,
                                                         const Vector& observed_row);

/// Averaged completed second moments of (x, 1), i.e. a (p+1) x (p+1) Gram
/// matrix whose last row/column holds the completed means.
[[nodiscard]] Matrix completed_gram(const SemParams& params, const DagSpec& dag, int target, const Matrix& observed);

/// Gram matrix of fully observed data (no completion needed).
[[nodiscard]] Matrix complete_data_gram(const Matrix& data);

/// Re-estimates every mechanism from an augmented Gram matrix by solving the
/// normal equations of each node on (parents, 1). Variances are clamped to
/// [variance_min, variance_max]. Throws NumericalError when a node's design
/// moment is singular or its condition number exceeds `condition_cap`.
[[nodiscard]] SemParams kiiveri_m_step(const DagSpec& dag, const Matrix& gram, double variance_min,
                                       double variance_max, double condition_cap = 1e12);

/// Average observed-data log-likelihood (1/n) sum_i log p(x_{-t}^(i)).
[[nodiscard]] double observed_log_likelihood(const SemParams& params, const DagSpec& dag, int target,
                                             const Matrix& observed);

/// Classical full EM with the target latent: every mechanism is free.
/// The trace stores the target mechanism per iteration; its surrogate
/// fields carry the observed-data log-likelihood before/after the update.
[[nodiscard]] AdaptResult kiiveri_adapt(const SemParams& init, const DagSpec& dag, int target,
                                        const Matrix& observed, const EmConfig& config = {});

}  // namespace dagem
