#include <doctest.h>

#include <cstdlib>
#include <string>

#include "icl/errors.hpp"
#include "icl/montecarlo.hpp"
#include "icl/theory.hpp"

using namespace icl;

namespace {

TaskSpec task5() {
    Vec theta = Vec::Zero(5);
    theta(0) = 1;
    return TaskSpec::make(theta, covariance_from_eigenvalues(Vec::Ones(5)), 0.1);
}

// Runs `f` with ICL_THREADS set to `threads`, restoring the previous value.
template <class F>
auto with_threads(const char* threads, F f) {
    const char* old = std::getenv("ICL_THREADS");
    const std::string saved = old ? old : "";
    setenv("ICL_THREADS", threads, 1);
    auto out = f();
    if (old) setenv("ICL_THREADS", saved.c_str(), 1);
    else unsetenv("ICL_THREADS");
    return out;
}

}  // namespace

TEST_CASE("Welford matches the two-pass formulas and merges exactly") {
    const double xs[] = {1.0, 4.0, -2.0, 3.5, 0.25, 9.0};
    Welford all, a, b;
    for (int i = 0; i < 6; ++i) {
        all.add(xs[i]);
        (i < 2 ? a : b).add(xs[i]);
    }
    a.merge(b);
    double mean = 0;
    for (double x : xs) mean += x / 6;
    double ss = 0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const McEstimate e = all.estimate(0, 0);
    CHECK(e.mean == doctest::Approx(mean).epsilon(1e-15));
    CHECK(e.std_error == doctest::Approx(std::sqrt(ss / 5 / 6)).epsilon(1e-14));
    CHECK(a.estimate(0, 0).mean == doctest::Approx(mean).epsilon(1e-15));
    CHECK(a.count() == 6);
}

TEST_CASE("Monte Carlo error is bit-identical across thread counts") {
    const TaskSpec task = task5();
    const AttentionParams p = optimal_pretrain(20, task.sigma);
    const auto one = with_threads("1", [&] { return mc_test_error(p, task, 7, 10000, 3); });
    const auto many = with_threads("5", [&] { return mc_test_error(p, task, 7, 10000, 3); });
    CHECK(one.mean == many.mean);
    CHECK(one.std_error == many.std_error);
    CHECK(one.n_samples == 10000);
}

TEST_CASE("Monte Carlo agrees with the closed form") {
    const TaskSpec task = task5();
    const AttentionParams p = optimal_pretrain(20, task.sigma);
    for (int n : {0, 3, 20}) {
        const McEstimate e = mc_test_error(p, task, n, 100000, 17);
        const double exact = n == 0 ? zs_error(p, task) : fs_error(p, task, n);
        CHECK(std::abs(e.mean - exact) <= 5 * e.std_error);
    }
}

TEST_CASE("exact predictor has zero Monte Carlo error") {
    // σ² = 0 and a model that predicts 0 on θ = 0 tasks: every sample is exact.
    const TaskSpec task = TaskSpec::make(Vec::Zero(3), covariance_from_eigenvalues(Vec::Ones(3)), 0.0);
    const AttentionParams p = optimal_pretrain(20, task.sigma);
    const McEstimate e = mc_test_error(p, task, 5, 5000, 1);
    CHECK(e.mean == 0.0);
    CHECK(e.std_error == 0.0);
    CHECK(fs_error(p, task, 5) == 0.0);
}

TEST_CASE("moment estimator: sanity and unknown kinds") {
    MomentInputs in;
    in.sigma = SymMatrix::identity(1);
    in.a = in.b = in.c = Mat::Ones(1, 1);
    const auto q = mc_moment(MomentKind::Quartic, in, 200000, 5);
    REQUIRE(q.size() == 1u);
    CHECK(std::abs(q[0].mean - 3.0) <= 5 * q[0].std_error);
    in.sigma = SymMatrix::identity(2);
    in.a = in.b = Mat::Identity(2, 2);
    CHECK(mc_moment(MomentKind::SexticMatrix, in, 1000, 5).size() == 4u);
    CHECK(moment_kind_from_string("wishart_quad") == MomentKind::WishartQuad);
    CHECK_THROWS_AS(moment_kind_from_string("octic"), UnknownKind);
}

TEST_CASE("sweep uses the same seed for every n") {
    const TaskSpec task = task5();
    const AttentionParams p = optimal_pretrain(20, task.sigma);
    const auto s = mc_sweep(p, task, {1, 4}, 4096, 9);
    CHECK(s[1].mean == mc_test_error(p, task, 4, 4096, 9).mean);
}
