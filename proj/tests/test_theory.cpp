#include <doctest.h>

#include <cmath>

#include "icl/errors.hpp"
#include "icl/rng.hpp"
#include "icl/theory.hpp"

using namespace icl;

namespace {

TaskSpec unit_task(int d, double noise_var, Vec theta = Vec()) {
    if (theta.size() == 0) {
        theta = Vec::Zero(d);
        theta(0) = 1.0;
    }
    return TaskSpec::make(theta, covariance_from_eigenvalues(Vec::Ones(d)), noise_var);
}

Mat random_mat(Rng& r, int d) {
    Mat m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = r.normal();
    return m;
}

}  // namespace

TEST_CASE("moment identities at the scalar sanity points") {
    const SymMatrix one = SymMatrix::identity(1);
    CHECK(gaussian_quartic_mean(one, one, one) == 3.0);
    CHECK(gaussian_sextic_scalar(one, one, one, one) == 15.0);
    for (int n = 1; n <= 6; ++n) CHECK(wishart_quadratic_mean(one, n, one)(0, 0) == n * (n + 2.0));
    // E[x xᵀ x xᵀ x xᵀ] = 15 for d = 1.
    CHECK(gaussian_sextic_matrix(one, Mat::Ones(1, 1), Mat::Ones(1, 1))(0, 0) == 15.0);
}

TEST_CASE("isotropic moment identities") {
    // x ~ N(0, I_d): E[(xᵀx)²] = d(d+2), E[(xᵀx)³] = d(d+2)(d+4).
    for (int d : {2, 3, 5}) {
        const SymMatrix i = SymMatrix::identity(d);
        CHECK(gaussian_quartic_mean(i, i, i) == doctest::Approx(d * (d + 2.0)));
        CHECK(gaussian_sextic_scalar(i, i, i, i) == doctest::Approx(d * (d + 2.0) * (d + 4.0)));
        // E[W W] for W Wishart(n, I): n(n+d+1) I.
        const Mat w = wishart_quadratic_mean(i, 4, i);
        CHECK((w - 4.0 * (4 + d + 1) * Mat::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("sextic matrix identity: trace reduces to the scalar identity and the transpose pair") {
    Rng r(4, 0);
    const int d = 3;
    const SymMatrix s = SymMatrix::from_upper(random_mat(r, d) * random_mat(r, d).transpose() + Mat::Identity(d, d));
    const Mat a = random_mat(r, d), b = random_mat(r, d);
    const Mat m = gaussian_sextic_matrix(s, a, b);
    // tr(E[x xᵀA x xᵀB x xᵀ] C) = E[xᵀAx · xᵀBx · xᵀCx] for symmetric A, B, C.
    const SymMatrix as = SymMatrix::from_upper(a + a.transpose()), bs = SymMatrix::from_upper(b + b.transpose());
    const SymMatrix c = SymMatrix::from_upper(random_mat(r, d) + random_mat(r, d).transpose());
    CHECK((gaussian_sextic_matrix(s, as.mat(), bs.mat()) * c.mat()).trace() ==
          doctest::Approx(gaussian_sextic_scalar(s, as, bs, c)).epsilon(1e-12));
    CHECK((gaussian_sextic_matrix_transpose_pair(s, a) - gaussian_sextic_matrix(s, a, a.transpose()))
              .cwiseAbs()
              .maxCoeff() < 1e-10 * m.cwiseAbs().maxCoeff() + 1e-12);
}

TEST_CASE("d = 1 closed forms") {
    // Pretrained-type model v21 = 0, v22 = 1, Q11 = 1, q = 0 on θ = 1:
    // n-shot error θ²(2n+1)/(n+1)² + σ²(n/(n+1)² + 1).
    AttentionParams p = AttentionParams::zeros(1);
    p.v22 = 1;
    p.Q11(0, 0) = 1;
    const double s2 = 0.3;
    const TaskSpec task = unit_task(1, s2);
    for (int n : {1, 2, 5, 40}) {
        const double want = (2.0 * n + 1) / ((n + 1.0) * (n + 1.0)) + s2 * (n / ((n + 1.0) * (n + 1.0)) + 1);
        CHECK(fs_error(p, task, n) == doctest::Approx(want).epsilon(1e-13));
    }
    // Zero-shot: pred = a·x·(g x² + b); error 15a²g² + 6ag(ab−θ) + (ab−θ)² + σ².
    AttentionParams z = AttentionParams::zeros(1);
    const double a = 0.7, g = -0.4, b = 1.3;
    z.v21(0) = a;
    z.Q11(0, 0) = g;
    z.q = b;
    CHECK(zs_error(z, task) ==
          doctest::Approx(15 * a * a * g * g + 6 * a * g * (a * b - 1) + (a * b - 1) * (a * b - 1) + s2).epsilon(1e-13));
}

TEST_CASE("frozen reference values for d = 5, sigma^2 = 0.1, unit theta") {
    const int d = 5;
    const TaskSpec task = unit_task(d, 0.1);
    const EigenDecomp sigma = task.sigma;
    // Limit-pretrained model at n = 20.
    CHECK(fs_error(optimal_pretrain(0, sigma, true), task, 20) == doctest::Approx(0.397052).epsilon(1e-6));
    // Full fine-tuning family at w = 0.52.
    const AttentionParams full = optimal_full_ft(task.theta, 0.52);
    CHECK(zs_error(full, task) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(fs_error(full, task, 20) == doctest::Approx(1.411302).epsilon(1e-6));
    CHECK(fs_error_limit(full, task) == doctest::Approx(1.1).epsilon(1e-12));
    // Value fine-tuning: zero-shot error σ² + 2/(d+4), independent of w.
    for (double w : {0.3, 0.77, 1.0, 2.0}) {
        CHECK(zs_error(optimal_value_ft(task.theta, w, sigma), task) == doctest::Approx(0.1 + 2.0 / 9).epsilon(1e-12));
    }
    CHECK(w_star_task(20, task.theta, task.theta, task) == doctest::Approx(0.654088).epsilon(1e-6));
    CHECK(w_star_avg(20, task) == doctest::Approx(0.804598).epsilon(1e-6));
}

TEST_CASE("general and fixed-Q error paths agree") {
    Rng r(21, 0);
    const int d = 4;
    Vec lam(d);
    lam << 3, 1.5, 1, 0.4;
    Vec theta(d);
    for (int i = 0; i < d; ++i) theta(i) = r.normal();
    const TaskSpec task = TaskSpec::make(theta, covariance_with_rotation(lam, 8), 0.2);
    AttentionParams p = AttentionParams::zeros(d);
    for (int i = 0; i < d; ++i) p.v21(i) = 0.3 * r.normal();
    p.v22 = 0.8;
    p.Q11 = spd_inverse(task.sigma.matrix()).mat();
    for (double n : {1.0, 3.0, 20.0, 1e3}) {
        CHECK(fs_error(p, task, n) == doctest::Approx(fixq_fs_error(p.v21, p.v22, task, n)).epsilon(1e-11));
    }
    CHECK(fs_error_limit(p, task) == doctest::Approx(fixq_fs_error_limit(p.v21, p.v22, task)).epsilon(1e-11));
    CHECK(fs_error(p, task, 1e7) == doctest::Approx(fs_error_limit(p, task)).epsilon(1e-5));
}

TEST_CASE("rescaling v22 into Q leaves the error unchanged when v21 = 0") {
    const TaskSpec task = unit_task(3, 0.1, Vec::LinSpaced(3, 0.2, 1.0));
    AttentionParams p = AttentionParams::zeros(3);
    p.v22 = 0.6;
    p.Q11 = Mat::Identity(3, 3) * 1.2;
    p.Q11(0, 1) = 0.3;
    AttentionParams r = p;
    r.v22 = 1.0;
    r.Q11 *= 0.6;
    for (double n : {1.0, 7.0, 50.0}) CHECK(fs_error(p, task, n) == doctest::Approx(fs_error(r, task, n)).epsilon(1e-12));
}

TEST_CASE("w* minimises the value-family few-shot error (parabola in w)") {
    const TaskSpec task = unit_task(5, 0.1);
    for (double n : {5.0, 20.0, 100.0}) {
        const double ws = w_star_task(n, task.theta, task.theta, task);
        auto f = [&](double w) {
            const AttentionParams p = optimal_value_ft(task.theta, w, task.sigma);
            return fixq_fs_error(p.v21, p.v22, task, n);
        };
        // Quadratic in w: three points fix the vertex exactly.
        const double h = 0.1, f0 = f(ws - h), f1 = f(ws), f2 = f(ws + h);
        const double vertex = ws - h * (f2 - f0) / (2 * (f2 - 2 * f1 + f0));
        CHECK(vertex == doctest::Approx(ws).epsilon(1e-9));
    }
    CHECK(w_star_task(1e9, task.theta, task.theta, task) == doctest::Approx(8.0 / 9).epsilon(1e-7));
    CHECK(w_star_avg(1e9, task) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("excess error: zero at theta0 and consistent with the cosine form") {
    const TaskSpec task = unit_task(5, 0.1);
    const Vec th0 = task.theta;
    CHECK(excess_error(20, th0, th0, task) == doctest::Approx(0.0).epsilon(1e-14));
    Vec th = Vec::Zero(5);
    th(1) = 1;  // orthogonal, same norm
    const double direct = excess_error(20, th, th0, task);
    CHECK(direct > 0);
    CHECK(direct == doctest::Approx(excess_error_cosine(20, 0.0, 1.0, 0.1, 5)).epsilon(1e-12));
    CHECK(excess_error(20, -th0, th0, task) == doctest::Approx(excess_error_cosine(20, -1.0, 1.0, 0.1, 5)).epsilon(1e-12));
}

TEST_CASE("zero-shot vs few-shot condition matches the sign of the error difference") {
    Rng r(5, 0);
    const int d = 3;
    for (int trial = 0; trial < 20; ++trial) {
        Vec theta(d);
        for (int i = 0; i < d; ++i) theta(i) = r.normal();
        const TaskSpec task = TaskSpec::make(theta, covariance_from_eigenvalues(Vec::LinSpaced(d, 2, 0.5)), 0.1);
        AttentionParams p = AttentionParams::zeros(d);
        p.v22 = 1;
        const Mat g = random_mat(r, d);
        p.Q11 = SymMatrix::from_upper(g * g.transpose() + 0.5 * Mat::Identity(d, d)).mat();
        for (int i = 0; i < d; ++i) p.v21(i) = 0.5 * r.normal();
        p.q = trial % 2 ? 0.0 : 0.4 * r.normal();
        const double n = 1 + trial;
        const ConditionTriple c = zs_vs_fs_condition(p, task, n);
        const double diff = fs_error(p, task, n) - zs_error(p, task);
        CHECK((c.c - c.lhs) == doctest::Approx(diff * (n + 1) * (n + 1) / n).epsilon(1e-9));
        CHECK(c.zs_not_worse == (diff >= 0));
    }
    AttentionParams bad = AttentionParams::zeros(d);
    bad.v22 = 0.5;
    bad.Q11 = Mat::Identity(d, d);
    CHECK_THROWS_AS(zs_vs_fs_condition(bad, unit_task(d, 0.1), 5), HypothesisViolated);
}

TEST_CASE("pretrained threshold matches the crossing point") {
    for (int d : {5, 10}) {
        const TaskSpec task = unit_task(d, 0.0);
        const AttentionParams p = optimal_pretrain(1000, task.sigma);
        const double a = 1000.0 / (1001.0 + d);
        CHECK(pretrain_threshold(1000, task) == doctest::Approx(d * a / (2 - a) - 1).epsilon(1e-12));
        CHECK(error_crossing(p, task, 1, 100) == doctest::Approx(pretrain_threshold(1000, task)).epsilon(1e-6));
    }
    CHECK_THROWS_AS(pretrain_threshold(10, unit_task(3, 0.1, Vec::Zero(3))), ZeroSignal);
}

TEST_CASE("family constructors validate w") {
    const TaskSpec task = unit_task(3, 0.1);
    CHECK_THROWS_AS(optimal_full_ft(task.theta, 0.0), NonPositiveW);
    CHECK_THROWS_AS(optimal_value_ft(task.theta, 0.0, task.sigma), ZeroW);
}

TEST_CASE("gradient-step dynamics from the zero-shot optimum") {
    const AbgStep s = abg_fs_limit_and_step(1, 1, 0, 1e-3, 1, 0.1, 5);
    CHECK(s.zs_increase == doctest::Approx(16 * 7 * 9 * 1e-6).epsilon(1e-12));
    CHECK(abg_zs_increase_from_optimum(1e-3, 1, 5) == doctest::Approx(1.008e-3).epsilon(1e-14));
    // (1, 1, 0) is the zero-shot optimum: error σ².
    CHECK(abg_zs_error(1, 1, 0, 1, 0.1, 5) == doctest::Approx(0.1));
    // abg_params agree with the general zero-shot error.
    const TaskSpec task = unit_task(5, 0.1);
    CHECK(zs_error(abg_params(0.8, 0.3, 0.2, task.theta), task) ==
          doctest::Approx(abg_zs_error(0.8, 0.3, 0.2, 1, 0.1, 5)).epsilon(1e-12));
}

TEST_CASE("prediction moments reproduce the error decomposition") {
    const TaskSpec task = unit_task(3, 0.2, Vec::LinSpaced(3, -0.5, 1.0));
    AttentionParams p = AttentionParams::zeros(3);
    p.v21 << 0.1, -0.2, 0.3;
    p.v22 = 0.9;
    p.Q11 = Mat::Identity(3, 3) * 0.8;
    p.q21 << 0.05, 0, -0.05;
    p.q = 0.2;
    const double n = 6;
    const MomentReport m = prediction_moments(p, task, n);
    // FS = (n·N + Z)/(n+1); error = E[(FS − y)²].
    const double k = n / (n + 1), l = 1 / (n + 1);
    const double fs = k * k * m.var_netfs + l * l * m.var_zs + m.var_y + 2 * k * l * m.cov_netfs_zs -
                      2 * k * m.cov_netfs_y - 2 * l * m.cov_zs_y;
    CHECK(fs_error(p, task, n) == doctest::Approx(fs).epsilon(1e-12));
    CHECK(zs_error(p, task) == doctest::Approx(m.var_zs - 2 * m.cov_zs_y + m.var_y).epsilon(1e-12));
}
