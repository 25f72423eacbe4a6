#pragma once

#include <cstdint>

#include "icl/linalg.hpp"
#include "icl/rng.hpp"

namespace icl {

// A linear-regression task: y = θᵀx + e with x ~ N(0, Σ) and e ~ N(0, σ²).
struct TaskSpec {
    Vec theta;
    EigenDecomp sigma;  // Σ = U diag(λ) Uᵀ, all λ > 0
    double noise_var = 0.0;

    int dim() const { return static_cast<int>(theta.size()); }
    // Σ as a dense matrix.
    const Mat& cov() const { return cov_; }
    // U·diag(√λ): maps a standard normal z to x ~ N(0, Σ).
    const Mat& sqrt_factor() const { return sqrt_factor_; }

    // Validates the invariants and caches Σ and its square-root factor.
    static TaskSpec make(Vec theta, EigenDecomp sigma, double noise_var);

private:
    Mat cov_;
    Mat sqrt_factor_;
};

// Prior over task vectors: N(0, I_d) for pretraining, or a fixed θ₀ for
// fine-tuning.
struct ThetaPrior {
    enum class Kind { StandardNormal, Fixed };
    Kind kind = Kind::StandardNormal;
    Vec theta0;

    static ThetaPrior standard_normal() { return {Kind::StandardNormal, Vec()}; }
    static ThetaPrior fixed(Vec theta0) { return {Kind::Fixed, std::move(theta0)}; }
};

// n context pairs plus a query whose label is held out. n = 0 is the
// zero-shot prompt.
struct Prompt {
    Mat context_x;  // d × n, one column per example
    Vec context_y;  // n
    Vec query_x;    // d
    double query_y = 0.0;

    int n() const { return static_cast<int>(context_y.size()); }
    int dim() const { return static_cast<int>(query_x.size()); }
};

TaskSpec sample_task(const ThetaPrior& prior, int d, const EigenDecomp& sigma, double noise_var, Rng& rng);

// Draws n context pairs and the query: x from the prompts stream, label noise
// from the noise stream.
Prompt sample_prompt(const TaskSpec& task, int n, SampleStreams& streams);
// Allocation-free variant for hot loops; `out` is resized as needed.
void sample_prompt_into(const TaskSpec& task, int n, SampleStreams& streams, Prompt& out);

// The (d+2)×(n+1) prompt matrix: row 0 all ones, rows 1..d inputs, row d+1
// labels, with the query's label masked to 0 in the last column.
Mat prompt_matrix(const Prompt& p);
// Inverse of prompt_matrix; query_y cannot be recovered and is set to 0.
Prompt prompt_from_matrix(const Mat& z);

// Isotropic or diagonal covariance helpers.
EigenDecomp covariance_from_eigenvalues(const Vec& eigenvalues);
// Σ = R diag(λ) Rᵀ with R a Haar-like random rotation drawn from `rotation_seed`.
EigenDecomp covariance_with_rotation(const Vec& eigenvalues, std::uint64_t rotation_seed);

}  // namespace icl
