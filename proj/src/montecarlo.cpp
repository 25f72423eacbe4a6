#include "icl/montecarlo.hpp"

#include <cmath>
#include <string>

#include "icl/errors.hpp"
#include "icl/parallel.hpp"

namespace icl {

Welford::Welford(int components) : mean_(components, 0.0), m2_(components, 0.0) {}

void Welford::add(const double* values) {
    ++count_;
    const double inv = 1.0 / static_cast<double>(count_);
    for (std::size_t k = 0; k < mean_.size(); ++k) {
        const double delta = values[k] - mean_[k];
        mean_[k] += delta * inv;
        m2_[k] += delta * (values[k] - mean_[k]);
    }
}

void Welford::merge(const Welford& other) {
    if (other.count_ == 0) return;
    if (count_ == 0) {
        *this = other;
        return;
    }
    const double na = static_cast<double>(count_);
    const double nb = static_cast<double>(other.count_);
    const double n = na + nb;
    for (std::size_t k = 0; k < mean_.size(); ++k) {
        const double delta = other.mean_[k] - mean_[k];
        mean_[k] += delta * nb / n;
        m2_[k] += other.m2_[k] + delta * delta * na * nb / n;
    }
    count_ += other.count_;
}

McEstimate Welford::estimate(int component, std::uint64_t seed) const {
    McEstimate e;
    e.n_samples = count_;
    e.seed = seed;
    e.mean = mean_[component];
    e.std_error = count_ > 1 ? std::sqrt(m2_[component] / static_cast<double>(count_ - 1) /
                                         static_cast<double>(count_))
                             : 0.0;
    return e;
}

std::vector<McEstimate> mc_accumulate(std::int64_t n_samples, int components, std::uint64_t seed,
                                      const std::function<void(std::int64_t, double*)>& sample) {
    if (n_samples < 1) throw InvalidConfig("Monte Carlo needs at least one sample");
    const std::int64_t chunks = (n_samples + kMcChunk - 1) / kMcChunk;
    std::vector<Welford> acc(chunks, Welford(components));
    parallel_for(chunks, [&](std::int64_t c) {
        std::vector<double> buf(components);
        const std::int64_t end = std::min(n_samples, (c + 1) * kMcChunk);
        for (std::int64_t i = c * kMcChunk; i < end; ++i) {
            sample(i, buf.data());
            acc[c].add(buf.data());
        }
    });
    // Pairwise tree reduction in chunk order.
    for (std::int64_t stride = 1; stride < chunks; stride *= 2) {
        for (std::int64_t i = 0; i + stride < chunks; i += 2 * stride) acc[i].merge(acc[i + stride]);
    }
    std::vector<McEstimate> out;
    out.reserve(components);
    for (int k = 0; k < components; ++k) out.push_back(acc[0].estimate(k, seed));
    return out;
}

McEstimate mc_test_error(const AttentionParams& p, const TaskSpec& task, int n, std::int64_t n_samples,
                         std::uint64_t seed) {
    if (p.d != task.dim()) throw DimensionMismatch("parameters and task have different d");
    if (n < 0) throw InvalidConfig("context length must be non-negative");
    return mc_accumulate(n_samples, 1, seed, [&](std::int64_t i, double* out) {
        thread_local Prompt pr;
        SampleStreams streams = SampleStreams::for_sample(seed, static_cast<std::uint64_t>(i));
        sample_prompt_into(task, n, streams, pr);
        const double pred = n == 0 ? predict_zs(pr.query_x, p) : predict_fs(pr, p);
        const double r = pred - pr.query_y;
        out[0] = r * r;
    })[0];
}

std::vector<McEstimate> mc_sweep(const AttentionParams& p, const TaskSpec& task, const std::vector<int>& n_list,
                                 std::int64_t n_samples, std::uint64_t seed) {
    std::vector<McEstimate> out;
    out.reserve(n_list.size());
    for (int n : n_list) out.push_back(mc_test_error(p, task, n, n_samples, seed));
    return out;
}

MomentKind moment_kind_from_string(const std::string& name) {
    if (name == "wishart_quad") return MomentKind::WishartQuad;
    if (name == "quartic") return MomentKind::Quartic;
    if (name == "sextic_scalar") return MomentKind::SexticScalar;
    if (name == "sextic_matrix") return MomentKind::SexticMatrix;
    if (name == "prediction_moments") return MomentKind::PredictionMoments;
    throw UnknownKind("no moment kind named '" + name + "'");
}

namespace {

void draw_gaussian(const Mat& l, Rng& rng, Vec& z, Vec& x) {
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
    x.noalias() = l * z;
}

}  // namespace

std::vector<McEstimate> mc_moment(MomentKind kind, const MomentInputs& in, std::int64_t n_samples,
                                  std::uint64_t seed) {
    if (kind == MomentKind::PredictionMoments) {
        const AttentionParams& p = in.params;
        const TaskSpec& task = in.task;
        if (p.d != task.dim()) throw DimensionMismatch("parameters and task have different d");
        if (in.n < 1) throw InvalidConfig("prediction moments need n ≥ 1");
        return mc_accumulate(n_samples, 6, seed, [&](std::int64_t i, double* out) {
            thread_local Prompt pr;
            SampleStreams streams = SampleStreams::for_sample(seed, static_cast<std::uint64_t>(i));
            sample_prompt_into(task, in.n, streams, pr);
            const double net = predict_netfs(pr, p);
            const double zs = predict_zs(pr.query_x, p);
            const double y = pr.query_y;
            out[0] = net * net;
            out[1] = zs * zs;
            out[2] = y * y;
            out[3] = net * zs;
            out[4] = net * y;
            out[5] = zs * y;
        });
    }

    const int d = in.sigma.dim();
    const EigenDecomp e = sym_eigen(in.sigma);
    const Mat l = e.rotation * e.eigenvalues.cwiseSqrt().asDiagonal();
    auto check = [&](const Mat& m, const char* name) {
        if (m.rows() != d || m.cols() != d) throw DimensionMismatch(std::string(name) + " must be d×d");
    };

    switch (kind) {
        case MomentKind::WishartQuad: {
            check(in.a, "A");
            if (in.n < 1) throw InvalidConfig("Wishart degrees of freedom must be ≥ 1");
            return mc_accumulate(n_samples, d * d, seed, [&](std::int64_t i, double* out) {
                Rng rng = SampleStreams::for_sample(seed, static_cast<std::uint64_t>(i)).prompts;
                Vec z(d), x(d);
                Mat w = Mat::Zero(d, d);
                for (int k = 0; k < in.n; ++k) {
                    draw_gaussian(l, rng, z, x);
                    w.noalias() += x * x.transpose();
                }
                const Mat r = w * in.a * w;
                for (int row = 0; row < d; ++row)
                    for (int col = 0; col < d; ++col) out[row * d + col] = r(row, col);
            });
        }
        case MomentKind::Quartic:
        case MomentKind::SexticScalar: {
            check(in.a, "A");
            check(in.b, "B");
            const bool sextic = kind == MomentKind::SexticScalar;
            if (sextic) check(in.c, "C");
            return mc_accumulate(n_samples, 1, seed, [&](std::int64_t i, double* out) {
                Rng rng = SampleStreams::for_sample(seed, static_cast<std::uint64_t>(i)).prompts;
                Vec z(d), x(d);
                draw_gaussian(l, rng, z, x);
                double v = x.dot(in.a * x) * x.dot(in.b * x);
                if (sextic) v *= x.dot(in.c * x);
                out[0] = v;
            });
        }
        case MomentKind::SexticMatrix: {
            check(in.a, "A");
            check(in.b, "B");
            return mc_accumulate(n_samples, d * d, seed, [&](std::int64_t i, double* out) {
                Rng rng = SampleStreams::for_sample(seed, static_cast<std::uint64_t>(i)).prompts;
                Vec z(d), x(d);
                draw_gaussian(l, rng, z, x);
                const double s = x.dot(in.a * x) * x.dot(in.b * x);
                for (int row = 0; row < d; ++row)
                    for (int col = 0; col < d; ++col) out[row * d + col] = s * x(row) * x(col);
            });
        }
        case MomentKind::PredictionMoments:
            break;
    }
    throw UnknownKind("unhandled moment kind");
}

}  // namespace icl
