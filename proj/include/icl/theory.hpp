#pragma once

#include "icl/attention.hpp"
#include "icl/linalg.hpp"
#include "icl/taskgen.hpp"

namespace icl {

// ---------------------------------------------------------------- moments --

// E[W A W] for W = Σᵢ₌₁ⁿ xᵢxᵢᵀ, xᵢ ~ N(0, Σ):  n·tr(AΣ)·Σ + n(n+1)·ΣAΣ.
Mat wishart_quadratic_mean(const SymMatrix& sigma, double n, const SymMatrix& a);

// E[xᵀAx · xᵀBx] = tr(AΣ)tr(BΣ) + 2tr(AΣBΣ).
double gaussian_quartic_mean(const SymMatrix& sigma, const SymMatrix& a, const SymMatrix& b);

// E[xᵀAx · xᵀBx · xᵀCx] for symmetric A, B, C (Isserlis, 15 pairings).
double gaussian_sextic_scalar(const SymMatrix& sigma, const SymMatrix& a, const SymMatrix& b, const SymMatrix& c);

// E[x xᵀA x xᵀB x xᵀ] for arbitrary square A, B.
Mat gaussian_sextic_matrix(const SymMatrix& sigma, const Mat& a, const Mat& b);
// Reduced form of the same expectation for B = Aᵀ.
Mat gaussian_sextic_matrix_transpose_pair(const SymMatrix& sigma, const Mat& a);

// ------------------------------------------------------------------ errors --

// Covariance of the pair (x, y) under a task: [[Σ, Σθ], [θᵀΣ, θᵀΣθ + σ²]].
struct JointCov {
    Mat sigma;
    Vec sigma_theta;
    double yy = 0.0;

    Mat full() const;
};

JointCov joint_cov(const TaskSpec& task);

// Second moments of the three centred quantities ŷ_Net-FS, ŷ_ZS and y (all
// have mean zero), and their cross moments.
struct MomentReport {
    double var_netfs = 0.0;
    double var_zs = 0.0;
    double var_y = 0.0;
    double cov_netfs_zs = 0.0;
    double cov_netfs_y = 0.0;
    double cov_zs_y = 0.0;
};

// Closed-form moments for arbitrary v21, v22, Q11, q21 and q (n may be any
// real ≥ 1; the few-shot error is a rational function of n).
MomentReport prediction_moments(const AttentionParams& p, const TaskSpec& task, double n);

// E[(ŷ_ZS − y)²].
double zs_error(const AttentionParams& p, const TaskSpec& task);
// E[(ŷ_FS − y)²] via
//   (n²·E(N−y)² + E(Z−y)² + 2n·E(N−y)(Z−y)) / (n+1)²,
// exact for every parameter setting (no v22 ≠ 0 restriction).
double fs_error(const AttentionParams& p, const TaskSpec& task, double n);
// lim_{n→∞} fs_error = (Mᵀ Σ_joint v − θ)ᵀ Σ (Mᵀ Σ_joint v − θ) + σ², where
// M = [Q11; q21ᵀ] and v = [v21; v22].
double fs_error_limit(const AttentionParams& p, const TaskSpec& task);

// Few-shot error for Q11 = Σ⁻¹, q = 0, q21 = 0 as an explicit polynomial in
// (v21, v22) divided by (n+1)².
double fixq_fs_error(const Vec& v21, double v22, const TaskSpec& task, double n);
// Its n → ∞ limit: (v21 + (v22−1)θ)ᵀΣ(v21 + (v22−1)θ) + σ².
double fixq_fs_error_limit(const Vec& v21, double v22, const TaskSpec& task);

// ------------------------------------------------------- optimal parameters --

// Pretraining optimum for context length m. With `limit` set, returns the
// m → ∞ parameters Q11 = Σ⁻¹, v22 = 1.
AttentionParams optimal_pretrain(double m, const EigenDecomp& sigma, bool limit = false);

// Zero-shot optimum under full fine-tuning: v21 = wθ₀, v22 = 1, q = 1/w.
AttentionParams optimal_full_ft(const Vec& theta0, double w);

// Zero-shot optimum under value-only fine-tuning from the limit pretrained
// query–key matrix: v21 = θ₀/(d+4), v22 = w, Q11 = Σ⁻¹.
AttentionParams optimal_value_ft(const Vec& theta0, double w, const EigenDecomp& sigma);

// Few-shot-optimal w on task θ for the value-FT family fitted to θ₀ (the
// noise level and Σ are taken from `task`; its θ is ignored).
double w_star_task(double n, const Vec& theta, const Vec& theta0, const TaskSpec& task);
// Few-shot-optimal w averaged over θ ~ N(0, I).
double w_star_avg(double n, const TaskSpec& task);
// Few-shot penalty on θ from using w★(n; θ₀) instead of w★(n; θ).
double excess_error(double n, const Vec& theta, const Vec& theta0, const TaskSpec& task);
// The same penalty written through the Σ-cosine ρ(θ, θ₀) when θᵀΣθ = θ₀ᵀΣθ₀ = c.
double excess_error_cosine(double n, double rho, double c, double noise_var, int d);

// --------------------------------------------------------------- condition --

struct ConditionTriple {
    SymMatrix A;
    SymMatrix B;
    SymMatrix C;
    double c = 0.0;
    // (v21 − A⁻¹Bθ)ᵀ A (v21 − A⁻¹Bθ)
    double lhs = 0.0;
    // lhs ≤ c, i.e. the zero-shot error does not exceed the n-shot error.
    bool zs_not_worse = false;
};

// Requires v22 = 1, q21 = 0 and a symmetric positive-definite Q11; throws
// HypothesisViolated otherwise, and if A is near-singular (eigenvalue < 1e-10).
ConditionTriple zs_vs_fs_condition(const AttentionParams& p, const TaskSpec& task, double n);

// Context length beyond which the m-shot pretrained model's few-shot error on
// θ is below its zero-shot error:
//   Σᵢaᵢ²(λ₁‖θ‖² + σ²) / (a_d(2−a_d)λ₁‖θ‖²) − 1,  aᵢ = mλᵢ/((m+1)λᵢ + trΣ).
// With `limit`, aᵢ = 1 (m → ∞). Throws ZeroSignal if λ₁‖θ‖² = 0.
double pretrain_threshold(double m, const TaskSpec& task, bool limit = false);

// Real root in [lo, hi] of fs_error(n) − zs_error by bisection; the two ends
// must bracket a sign change.
double error_crossing(const AttentionParams& p, const TaskSpec& task, double lo, double hi);

// ---------------------------------------------------------------- dynamics --

// Parameters with v21 = αθ₀, v22 = 1, q = β, Q11 = γI, everything else zero.
AttentionParams abg_params(double alpha, double beta, double gamma, const Vec& theta0);

// Zero-shot error of abg_params for Σ = I:
//   ((β + (d+2)γ)α − 1)²‖θ₀‖² + 2(d+2)γ²α²‖θ₀‖² + σ².
double abg_zs_error(double alpha, double beta, double gamma, double theta_norm2, double noise_var, int d);

struct AbgStep {
    double loss = 0.0;         // asymptotic few-shot loss ‖θ₀‖²(γα + γ − 1)² + σ²
    double d_alpha = 0.0;      // gradient-descent update of α
    double d_gamma = 0.0;      // gradient-descent update of γ
    double zs_increase = 0.0;  // zero-shot error after the step minus before
};

// One gradient step of size η on the asymptotic few-shot loss (β has zero
// gradient there).
AbgStep abg_fs_limit_and_step(double alpha, double beta, double gamma, double eta, double theta_norm2,
                              double noise_var, int d);
// 16(d+2)(d+4)η²‖θ₀‖⁶: the zero-shot increase of that step from (1, 1, 0).
double abg_zs_increase_from_optimum(double eta, double theta_norm2, int d);

}  // namespace icl
