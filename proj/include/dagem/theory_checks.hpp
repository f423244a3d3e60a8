#pragma once

#include "dagem/dag_model.hpp"
#include "dagem/em_adapt.hpp"

#include <cstdint>
#include <vector>

namespace dagem {

struct CurvatureReport {
    double lambda_b = 0.0;
    double mu_b = 0.0;
    double lambda_alpha = 0.0;
    double mu_alpha = 0.0;
    double rho = 0.0;
    double lambda = 0.0;  // combined strong-concavity constant
    double mu = 0.0;      // combined smoothness constant
    double gamma = 0.0;
    double margin = 0.0;  // lambda - gamma
    double kappa = 0.0;   // gamma / lambda, +inf when lambda <= 0
    // rho^2 < lambda_b * lambda_alpha, i.e. the combined lambda is positive.
    bool schur_ok = true;
};

/// Curvature constants of the active block from the parent moment M, the
/// noise-variance range [delta_min, delta_max], the residual second-moment
/// range [v_min, v_max] and the cross-term bound rho:
///   lambda_b = lmin(M)/delta_max, mu_b = lmax(M)/delta_min,
///   lambda_a = v_min/(2 delta_max), mu_a = v_max/(2 delta_min),
///   lambda = (lambda_b + lambda_a - sqrt((lambda_b - lambda_a)^2 + 4 rho^2)) / 2,
///   mu     = (mu_b + mu_a + sqrt((mu_b - mu_a)^2 + 4 rho^2)) / 2.
/// Throws ConfigError for invalid ranges and NumericalError when M is not SPD.
[[nodiscard]] CurvatureReport curvature_constants(const Matrix& parent_moment, double delta_min, double delta_max,
                                                  double v_min, double v_max, double rho, double gamma = 0.0);

/// Curvature constants over the ball of radius r around the current active
/// block (b, log sigma^2), using the E-step moments at `params`.
[[nodiscard]] CurvatureReport ball_curvature(const SemParams& params, const DagSpec& dag, int target,
                                             const Matrix& observed, double radius, bool include_intercept = true,
                                             double gamma = 0.0);

/// Derivatives of the implied mean m(theta) (p x D) and of the conditional
/// slope A(theta) = K_tt^-1 K_{t,-t} ((p-1) x D) with respect to the active
/// block theta = (b, log sigma^2), D = d + 1, by central differences.
struct ActiveJacobians {
    Matrix mean;
    Matrix slope;
    Vector slope_value;  // A(theta), length p-1
    double precision_tt = 0.0;
};

[[nodiscard]] ActiveJacobians active_jacobians(const SemParams& params, const DagSpec& dag, int target,
                                               bool include_intercept = true, double step = 1e-6);

struct LipschitzEnvelope {
    double c_m = 0.0;  // sup ||d m / d theta||
    double c_k = 0.0;  // sup ||d A / d theta||
    double c_a = 0.0;  // sup ||A||
    int probes = 0;
};

/// Ball suprema estimated as maxima over the ball centre plus `probe_count`
/// points drawn uniformly in the ball. These are lower bounds of the true
/// suprema. Probe k depends only on (seed, k), so enlarging probe_count never
/// lowers a constant. Throws NumericalError when K_tt falls below `k_floor`
/// at a probe.
[[nodiscard]] LipschitzEnvelope lipschitz_envelope(const SemParams& params, const DagSpec& dag, int target,
                                                   double radius, int probe_count, std::uint64_t seed = 0,
                                                   bool include_intercept = true, double k_floor = 1e-12);

/// (1/delta_min) mean_i ||x_pa,i|| (C0 + C_K ||x_-t,i - m_-t||) with
/// C0 = C_m + C_A C_m + C_K C_m r. `design` holds x_pa per row (with the
/// constant column when the intercept is active); `reference_mean` is m_-t.
[[nodiscard]] double gamma_bound(const LipschitzEnvelope& envelope, double radius, double delta_min,
                                 const Matrix& design, const Matrix& observed, const Vector& reference_mean);

struct InformationReport {
    Matrix i_obs;   // Richardson-refined finite-difference Hessian
    Matrix i_comp;
    Matrix i_miss;
    double residual = 0.0;        // ||I_obs - (I_comp - I_miss)||_F with the refined I_obs
    double residual_plain = 0.0;  // same with the plain step-h Hessian
    double residual_half = 0.0;   // same with the plain step-h/2 Hessian
    bool fd_stable = true;        // residual_half <= max(2 residual_plain, 1e-6)
    double min_eig_miss = 0.0;
    double min_eig_comp_minus_obs = 0.0;
};

/// Average observed-data negative log-likelihood of x_-t (constant dropped).
[[nodiscard]] double observed_nll(const SemParams& params, const DagSpec& dag, int target, const Matrix& observed);

/// Louis decomposition of the observed information of the active block,
/// evaluated at `params`. I_comp and I_miss are closed forms averaged over
/// the samples; I_obs is a central-difference Hessian of observed_nll with
/// steps fd_step * max(1, |theta_i|).
[[nodiscard]] InformationReport louis_check(const SemParams& params, const DagSpec& dag, int target,
                                            const Matrix& observed, double fd_step = 1e-3,
                                            bool include_intercept = true);

struct ContractionEstimate {
    double kappa = 0.0;
    double floor = 0.0;
    int plateau_start = -1;  // index into errors; -1 when no plateau
    std::vector<double> errors;
    std::vector<double> ratios;
};

/// Per-iteration contraction estimate from an EM trace against a reference
/// active block (b, log sigma^2). The plateau starts at the first ratio above
/// 0.98; kappa is the geometric mean of the ratios before it and the floor is
/// the mean error from the plateau on. Throws DataError with fewer than five
/// iterations.
[[nodiscard]] ContractionEstimate contraction_rate(const EmTrace& trace, const Vector& reference);

/// Same, from an explicit sequence of iterates.
[[nodiscard]] ContractionEstimate contraction_rate(const std::vector<Vector>& path, const Vector& reference);

}  // namespace dagem
