#include "icl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "icl/errors.hpp"
#include "icl/theory.hpp"

namespace icl {

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::Pretrain: return "pretrain";
        case Regime::FullZs: return "full_zs";
        case Regime::ValueZs: return "value_zs";
        case Regime::ValueZsFs: return "value_zs_fs";
        case Regime::QkZs: return "qk_zs";
    }
    return "unknown";
}

Regime regime_from_string(const std::string& name) {
    for (Regime r : {Regime::Pretrain, Regime::FullZs, Regime::ValueZs, Regime::ValueZsFs, Regime::QkZs})
        if (regime_name(r) == name) return r;
    throw InvalidConfig("unknown regime '" + name + "'");
}

RegimeMask regime_mask(Regime r) {
    switch (r) {
        case Regime::ValueZs:
        case Regime::ValueZsFs: return RegimeMask::value_only();
        case Regime::QkZs: return RegimeMask::qk_only();
        case Regime::Pretrain:
        case Regime::FullZs: break;
    }
    return RegimeMask::all();
}

double Anneal::weight(std::int64_t step) const {
    if (step >= horizon) return 0.0;
    return omega0 * (1.0 - static_cast<double>(step) / static_cast<double>(horizon));
}

void TrainConfig::validate() const {
    if (steps < 1) throw InvalidConfig("steps must be positive");
    if (batch < 1) throw InvalidConfig("batch must be positive");
    if (!(step_size > 0.0)) throw InvalidConfig("step size must be positive");
    if (!mask.any()) throw InvalidConfig("mask trains no block");
    if (anneal.has_value() != (regime == Regime::ValueZsFs)) {
        throw InvalidConfig("an anneal schedule is required for value_zs_fs and only for it");
    }
    if (anneal && (anneal->horizon < 1 || !(anneal->omega0 >= 0.0))) throw InvalidConfig("bad anneal schedule");
    const auto want = regime_mask(regime).flat(1);
    if (mask.flat(1) != want) throw InvalidConfig("mask does not match regime " + regime_name(regime));
    if ((regime == Regime::Pretrain || regime == Regime::ValueZsFs) && context_len < 1) {
        throw InvalidConfig("few-shot losses need context length ≥ 1");
    }
    if (regime != Regime::Pretrain && init != Init::Pretrained) {
        throw InvalidConfig("fine-tuning starts from the pretrained snapshot");
    }
}

namespace {

// Computes ŷ for one prompt and accumulates weight(ŷ)·∂ŷ/∂params into g.
// `few_shot` selects ŷ_FS (all n+1 columns, divisor n+1) versus ŷ_ZS (query
// column only). Returns ŷ.
template <class Weight>
double predict_with_grad(const AttentionParams& p, const Prompt& pr, bool few_shot, Weight&& weight,
                         AttentionParams& g) {
    const Vec& x = pr.query_x;
    const Vec qx = p.Q11 * x;
    const double aq = p.v21.dot(x);
    const double bq = x.dot(qx) + p.q;
    if (!few_shot) {
        const double pred = aq * bq;
        const double r = weight(pred);
        g.v21.noalias() += (r * bq) * x;
        g.q += r * aq;
        g.Q11.noalias() += (r * aq) * x * x.transpose();
        return pred;
    }
    const int n = pr.n();
    const double h = p.q21.dot(x);
    const Vec a = pr.context_x.transpose() * p.v21 + p.v22 * pr.context_y;
    const Vec b = (pr.context_x.transpose() * qx + h * pr.context_y).array() + p.q;
    const double scale = 1.0 / (n + 1.0);
    const double pred = (a.dot(b) + aq * bq) * scale;
    const double rs = weight(pred) * scale;
    g.v21.noalias() += rs * (pr.context_x * b + bq * x);
    g.v22 += rs * b.dot(pr.context_y);
    g.q += rs * (a.sum() + aq);
    const Vec u = pr.context_x * a + aq * x;
    g.Q11.noalias() += rs * u * x.transpose();
    g.q21.noalias() += (rs * a.dot(pr.context_y)) * x;
    return pred;
}

void apply_mask(AttentionParams& g, const RegimeMask& m) {
    if (!m.V11) g.V11.setZero();
    if (!m.v12) g.v12.setZero();
    if (!m.v21) g.v21.setZero();
    if (!m.v22) g.v22 = 0.0;
    if (!m.q) g.q = 0.0;
    if (!m.Q11) g.Q11.setZero();
    if (!m.q12) g.q12.setZero();
    if (!m.q21) g.q21.setZero();
    if (!m.q22) g.q22 = 0.0;
}

}  // namespace

LossGrad loss_and_grad(const AttentionParams& p, const std::vector<Prompt>& batch, LossMode mode,
                       const RegimeMask& mask) {
    if (batch.empty()) throw EmptyBatch("loss_and_grad needs at least one prompt");
    p.check_dims();
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const bool use_zs = mode.kind != LossMode::Kind::FewShot;
    const bool use_fs = mode.kind != LossMode::Kind::ZeroShot;
    const double fs_weight = mode.kind == LossMode::Kind::Mixed ? mode.omega : 1.0;

    LossGrad out;
    out.grad = AttentionParams::zeros(p.d);
    double zs_sum = 0.0, fs_sum = 0.0;
    for (const Prompt& pr : batch) {
        if (pr.dim() != p.d) throw DimensionMismatch("prompt dimension differs from d");
        if (use_zs) {
            predict_with_grad(p, pr, false, [&](double pred) {
                const double res = pred - pr.query_y;
                zs_sum += res * res;
                return 2.0 * res * inv_b;
            }, out.grad);
        }
        if (use_fs) {
            if (pr.n() < 1) throw EmptyContext("few-shot loss needs prompts with n ≥ 1");
            predict_with_grad(p, pr, true, [&](double pred) {
                const double res = pred - pr.query_y;
                fs_sum += res * res;
                return 2.0 * fs_weight * res * inv_b;
            }, out.grad);
        }
    }
    out.loss = zs_sum * inv_b + fs_weight * fs_sum * inv_b;
    apply_mask(out.grad, mask);
    return out;
}

double extract_w(const AttentionParams& p, const Vec& theta0, Regime regime, const Mat& sigma) {
    const double tt = theta0.squaredNorm();
    if (tt == 0.0) throw ZeroTheta("extract_w needs a nonzero θ₀");
    if (regime == Regime::FullZs) return p.v21.dot(theta0) / tt / p.v22;
    return p.v22 * trace_prod(p.Q11, sigma) / static_cast<double>(p.d);
}

TrainTrace train(const TrainConfig& config, const EigenDecomp& sigma, double noise_var, const Vec& theta0,
                 const AttentionParams* start) {
    config.validate();
    const int d = sigma.dim();
    if (theta0.size() != d) throw DimensionMismatch("θ₀ and Σ differ in size");

    AttentionParams p = AttentionParams::zeros(d);
    switch (config.init) {
        case TrainConfig::Init::Zeros: break;
        case TrainConfig::Init::Pretrained:
            if (!start) throw InvalidConfig("pretrained initialization needs a snapshot");
            p = *start;
            if (p.d != d) throw DimensionMismatch("snapshot has a different d");
            break;
        case TrainConfig::Init::SmallGaussian: {
            Rng rng(mix_seed(config.seed, 0x1417), 0);
            Vec flat(AttentionParams::flat_size(d));
            for (Eigen::Index i = 0; i < flat.size(); ++i) flat(i) = config.init_scale * rng.normal();
            p = AttentionParams::unflatten(d, flat);
            break;
        }
    }

    const bool pretrain = config.regime == Regime::Pretrain;
    const bool needs_context = pretrain || config.regime == Regime::ValueZsFs;
    const int n = needs_context ? config.context_len : 0;
    TaskSpec task = TaskSpec::make(theta0, sigma, noise_var);
    const Mat& cov = task.cov();

    TrainTrace trace;
    trace.step_size = config.step_size;
    trace.loss.reserve(config.steps);
    trace.w_extracted.reserve(config.steps);
    std::vector<Prompt> batch(config.batch);
    for (std::int64_t step = 0; step < config.steps; ++step) {
        for (int b = 0; b < config.batch; ++b) {
            const auto idx = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(config.batch) + b;
            SampleStreams streams = SampleStreams::for_sample(config.seed, idx);
            if (pretrain) {
                for (int i = 0; i < d; ++i) task.theta(i) = streams.tasks.normal();
            }
            sample_prompt_into(task, n, streams, batch[b]);
        }
        LossMode mode = LossMode::zero_shot();
        if (pretrain) mode = LossMode::few_shot();
        if (config.regime == Regime::ValueZsFs) mode = LossMode::mixed(config.anneal->weight(step));

        const LossGrad lg = loss_and_grad(p, batch, mode, config.mask);
        if (!std::isfinite(lg.loss) || lg.loss > 1e6) {
            throw Diverged("loss " + std::to_string(lg.loss) + " at step " + std::to_string(step));
        }
        const Vec updated = p.flatten() - config.step_size * lg.grad.flatten();
        p = AttentionParams::unflatten(d, updated);
        trace.loss.push_back(lg.loss);
        trace.w_extracted.push_back(extract_w(p, pretrain ? Vec::Ones(d) : theta0, config.regime, cov));
    }
    trace.final_params = p;
    return trace;
}

TrainTrace train_sweep(TrainConfig config, const std::vector<double>& step_sizes, const EigenDecomp& sigma,
                       double noise_var, const Vec& theta0, const AttentionParams* start) {
    std::optional<TrainTrace> best;
    double best_loss = std::numeric_limits<double>::infinity();
    for (double lr : step_sizes) {
        config.step_size = lr;
        try {
            TrainTrace t = train(config, sigma, noise_var, theta0, start);
            const std::size_t tail = std::max<std::size_t>(1, t.loss.size() / 10);
            double s = 0.0;
            for (std::size_t i = t.loss.size() - tail; i < t.loss.size(); ++i) s += t.loss[i];
            const double tail_loss = s / static_cast<double>(tail);
            if (tail_loss < best_loss) {
                best_loss = tail_loss;
                best = std::move(t);
            }
        } catch (const Diverged&) {
            continue;
        }
    }
    if (!best) throw Diverged("every step size in the sweep diverged");
    return std::move(*best);
}

ErrorReport eval_trained(const AttentionParams& p, const TaskSpec& task, const std::vector<int>& n_list,
                         std::int64_t n_samples, std::uint64_t seed, const AttentionParams* reference) {
    ErrorReport out;
    for (int n : n_list) {
        ErrorRow row;
        row.n = n;
        row.theory = n == 0 ? zs_error(p, task) : fs_error(p, task, n);
        row.reference = std::numeric_limits<double>::quiet_NaN();
        if (reference) row.reference = n == 0 ? zs_error(*reference, task) : fs_error(*reference, task, n);
        row.mc = mc_test_error(p, task, n, n_samples, seed);
        out.push_back(row);
    }
    return out;
}

}  // namespace icl
