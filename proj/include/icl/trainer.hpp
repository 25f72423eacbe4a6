#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "icl/attention.hpp"
#include "icl/montecarlo.hpp"
#include "icl/taskgen.hpp"

namespace icl {

enum class Regime { Pretrain, FullZs, ValueZs, ValueZsFs, QkZs };

std::string regime_name(Regime r);
Regime regime_from_string(const std::string& name);
// Mask implied by a regime: pretrain and full_zs train every block, value
// regimes only V, qk_zs only Q.
RegimeMask regime_mask(Regime r);

// Linearly decaying weight on the auxiliary few-shot loss.
struct Anneal {
    double omega0 = 1.0;
    std::int64_t horizon = 1;

    // ω₀ · max(0, 1 − step/horizon); exactly 0 from the horizon on.
    double weight(std::int64_t step) const;
};

struct TrainConfig {
    enum class Init { Zeros, Pretrained, SmallGaussian };

    Regime regime = Regime::Pretrain;
    RegimeMask mask = RegimeMask::all();
    int context_len = 20;  // m for pretraining, n for the auxiliary few-shot loss
    std::int64_t steps = 1000;
    int batch = 256;
    double step_size = 1e-2;
    std::optional<Anneal> anneal;
    std::uint64_t seed = 0;
    Init init = Init::SmallGaussian;
    double init_scale = 1e-2;

    // Throws InvalidConfig if fields are inconsistent (e.g. anneal without the
    // value_zs_fs regime, or a mask that differs from the regime's).
    void validate() const;
};

struct LossMode {
    enum class Kind { FewShot, ZeroShot, Mixed };
    Kind kind = Kind::ZeroShot;
    double omega = 0.0;  // weight of the few-shot term in Mixed

    static LossMode few_shot() { return {Kind::FewShot, 0.0}; }
    static LossMode zero_shot() { return {Kind::ZeroShot, 0.0}; }
    static LossMode mixed(double omega) { return {Kind::Mixed, omega}; }
};

struct LossGrad {
    double loss = 0.0;
    AttentionParams grad;  // zero on masked-out blocks
};

// Empirical mean squared error on the batch (zero-shot uses only each query;
// Mixed = zero-shot + ω·few-shot) and its exact gradient.
LossGrad loss_and_grad(const AttentionParams& p, const std::vector<Prompt>& batch, LossMode mode,
                       const RegimeMask& mask = RegimeMask::all());

struct TrainTrace {
    std::vector<double> loss;         // batch loss before each update
    std::vector<double> w_extracted;  // extract_w after each update
    AttentionParams final_params;
    double step_size = 0.0;
};

// Free scalar of the fine-tuned families read off trained parameters.
//   value regimes (and pretrain): v22 · tr(Q11Σ)/d, the v22 of the equivalent
//     model rescaled to Q11 ≈ Σ⁻¹ (equals v22 when Q11 = Σ⁻¹);
//   full_zs: (v21ᵀθ₀ / θ₀ᵀθ₀) / v22, the w of the equivalent v22 = 1 model
//     (equals v21ᵀθ₀/θ₀ᵀθ₀ when v22 = 1).
// Throws ZeroTheta if θ₀ = 0.
double extract_w(const AttentionParams& p, const Vec& theta0, Regime regime, const Mat& sigma);

// Plain gradient descent. Pretraining draws θ ~ N(0, I) per prompt, the
// fine-tuning regimes use `theta0`. `start` is required for Init::Pretrained.
// Throws Diverged if the loss exceeds 1e6 or becomes non-finite.
TrainTrace train(const TrainConfig& config, const EigenDecomp& sigma, double noise_var, const Vec& theta0,
                 const AttentionParams* start = nullptr);

// Runs train() for each step size and keeps the run with the smallest mean
// loss over its last 10% of steps; diverged runs are skipped.
TrainTrace train_sweep(TrainConfig config, const std::vector<double>& step_sizes, const EigenDecomp& sigma,
                       double noise_var, const Vec& theta0, const AttentionParams* start = nullptr);

// One row per context length: the n-shot error of the trained model from the
// closed form, from Monte Carlo, and from the reference curve the regime is
// compared against (if supplied).
struct ErrorRow {
    int n = 0;
    double theory = 0.0;     // closed form for the trained parameters themselves
    double reference = 0.0;  // reference curve (NaN if none supplied)
    McEstimate mc;
};
using ErrorReport = std::vector<ErrorRow>;

ErrorReport eval_trained(const AttentionParams& p, const TaskSpec& task, const std::vector<int>& n_list,
                         std::int64_t n_samples, std::uint64_t seed, const AttentionParams* reference = nullptr);

}  // namespace icl
