#include "icl/taskgen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "icl/errors.hpp"

namespace icl {

TaskSpec TaskSpec::make(Vec theta, EigenDecomp sigma, double noise_var) {
    if (theta.size() != sigma.dim()) throw DimensionMismatch("task vector and covariance sizes differ");
    if (sigma.dim() > 0 && sigma.eigenvalues.minCoeff() <= 0.0) {
        throw NotPositiveDefinite("covariance eigenvalues must be strictly positive");
    }
    if (!(noise_var >= 0.0)) throw InvalidConfig("noise variance must be non-negative");
    TaskSpec t;
    t.theta = std::move(theta);
    t.sigma = std::move(sigma);
    t.noise_var = noise_var;
    t.cov_ = t.sigma.matrix().mat();
    t.sqrt_factor_ = t.sigma.rotation * t.sigma.eigenvalues.cwiseSqrt().asDiagonal();
    return t;
}

TaskSpec sample_task(const ThetaPrior& prior, int d, const EigenDecomp& sigma, double noise_var, Rng& rng) {
    if (d < 1) throw InvalidConfig("dimension must be at least 1");
    Vec theta(d);
    if (prior.kind == ThetaPrior::Kind::Fixed) {
        if (prior.theta0.size() != d) throw DimensionMismatch("fixed θ₀ has wrong length");
        theta = prior.theta0;
    } else {
        for (int i = 0; i < d; ++i) theta(i) = rng.normal();
    }
    return TaskSpec::make(std::move(theta), sigma, noise_var);
}

void sample_prompt_into(const TaskSpec& task, int n, SampleStreams& streams, Prompt& out) {
    const int d = task.dim();
    if (n < 0) throw InvalidConfig("context length must be non-negative");
    out.context_x.resize(d, n);
    out.context_y.resize(n);
    out.query_x.resize(d);
    Vec z(d);
    const Mat& l = task.sqrt_factor();
    const double noise_sd = std::sqrt(task.noise_var);
    for (int j = 0; j <= n; ++j) {
        for (int i = 0; i < d; ++i) z(i) = streams.prompts.normal();
        const double e = noise_sd * streams.noise.normal();
        if (j < n) {
            out.context_x.col(j).noalias() = l * z;
            out.context_y(j) = task.theta.dot(out.context_x.col(j)) + e;
        } else {
            out.query_x.noalias() = l * z;
            out.query_y = task.theta.dot(out.query_x) + e;
        }
    }
}

Prompt sample_prompt(const TaskSpec& task, int n, SampleStreams& streams) {
    Prompt p;
    sample_prompt_into(task, n, streams, p);
    return p;
}

Mat prompt_matrix(const Prompt& p) {
    const int d = p.dim();
    const int n = p.n();
    Mat z = Mat::Zero(d + 2, n + 1);
    z.row(0).setOnes();
    z.block(1, 0, d, n) = p.context_x;
    z.block(1, n, d, 1) = p.query_x;
    z.block(d + 1, 0, 1, n) = p.context_y.transpose();
    z(d + 1, n) = 0.0;  // masked query label
    return z;
}

Prompt prompt_from_matrix(const Mat& z) {
    if (z.rows() < 3 || z.cols() < 1) throw DimensionMismatch("prompt matrix must be at least 3×1");
    const int d = static_cast<int>(z.rows()) - 2;
    const int n = static_cast<int>(z.cols()) - 1;
    Prompt p;
    p.context_x = z.block(1, 0, d, n);
    p.context_y = z.block(d + 1, 0, 1, n).transpose();
    p.query_x = z.block(1, n, d, 1);
    p.query_y = 0.0;
    return p;
}

EigenDecomp covariance_from_eigenvalues(const Vec& eigenvalues) {
    const int d = static_cast<int>(eigenvalues.size());
    std::vector<double> lam(eigenvalues.data(), eigenvalues.data() + d);
    std::vector<int> order(d);
    for (int i = 0; i < d; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return lam[a] > lam[b]; });
    EigenDecomp e{Mat::Zero(d, d), Vec(d)};
    for (int k = 0; k < d; ++k) {
        e.eigenvalues(k) = lam[order[k]];
        e.rotation(order[k], k) = 1.0;
    }
    return e;
}

EigenDecomp covariance_with_rotation(const Vec& eigenvalues, std::uint64_t rotation_seed) {
    const int d = static_cast<int>(eigenvalues.size());
    Rng rng(rotation_seed, static_cast<std::uint64_t>(Stream::Tasks));
    Mat g(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Mat> qr(g);
    Mat r = qr.householderQ() * Mat::Identity(d, d);
    // Sign-fix so that the rotation is uniformly distributed.
    const Mat rr = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < d; ++j)
        if (rr(j, j) < 0) r.col(j) = -r.col(j);
    EigenDecomp sorted = covariance_from_eigenvalues(eigenvalues);
    sorted.rotation = r * sorted.rotation;
    return sorted;
}

}  // namespace icl
