#include <doctest.h>

#include <cmath>

#include "icl/errors.hpp"
#include "icl/theory.hpp"
#include "icl/trainer.hpp"

using namespace icl;

namespace {

std::vector<Prompt> batch_for(const TaskSpec& task, int n, int size, std::uint64_t seed) {
    std::vector<Prompt> b;
    for (int i = 0; i < size; ++i) {
        SampleStreams st = SampleStreams::for_sample(seed, i);
        b.push_back(sample_prompt(task, n, st));
    }
    return b;
}

AttentionParams random_params(int d, std::uint64_t seed, double scale) {
    Rng r(seed, 0);
    Vec f(AttentionParams::flat_size(d));
    for (int i = 0; i < f.size(); ++i) f(i) = scale * r.normal();
    return AttentionParams::unflatten(d, f);
}

TaskSpec task3() {
    return TaskSpec::make(Vec::LinSpaced(3, -1, 1), covariance_from_eigenvalues(Vec::LinSpaced(3, 2, 0.5)), 0.1);
}

}  // namespace

TEST_CASE("analytic gradient matches central differences") {
    const TaskSpec task = task3();
    const auto batch = batch_for(task, 4, 3, 1);
    for (LossMode mode : {LossMode::few_shot(), LossMode::zero_shot(), LossMode::mixed(0.6)}) {
        const AttentionParams p = random_params(3, 2, 0.5);
        const Vec g = loss_and_grad(p, batch, mode).grad.flatten();
        const Vec f = p.flatten();
        const double h = 1e-6;
        for (int i = 0; i < f.size(); ++i) {
            Vec up = f, dn = f;
            up(i) += h;
            dn(i) -= h;
            const double fd = (loss_and_grad(AttentionParams::unflatten(3, up), batch, mode).loss -
                               loss_and_grad(AttentionParams::unflatten(3, dn), batch, mode).loss) /
                              (2 * h);
            CHECK(g(i) == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
        }
    }
}

TEST_CASE("loss is the empirical squared error") {
    const TaskSpec task = task3();
    const auto batch = batch_for(task, 5, 4, 3);
    const AttentionParams p = random_params(3, 4, 0.5);
    double fs = 0, zs = 0;
    for (const Prompt& pr : batch) {
        fs += std::pow(predict_fs(pr, p) - pr.query_y, 2) / 4;
        zs += std::pow(predict_zs(pr.query_x, p) - pr.query_y, 2) / 4;
    }
    CHECK(loss_and_grad(p, batch, LossMode::few_shot()).loss == doctest::Approx(fs).epsilon(1e-13));
    CHECK(loss_and_grad(p, batch, LossMode::zero_shot()).loss == doctest::Approx(zs).epsilon(1e-13));
    CHECK(loss_and_grad(p, batch, LossMode::mixed(0.25)).loss == doctest::Approx(zs + 0.25 * fs).epsilon(1e-13));
    CHECK_THROWS_AS(loss_and_grad(p, {}, LossMode::zero_shot()), EmptyBatch);
}

TEST_CASE("masked blocks get exactly zero gradient and never move") {
    const TaskSpec task = task3();
    const auto batch = batch_for(task, 4, 3, 5);
    const AttentionParams p = random_params(3, 6, 0.5);
    const auto g = loss_and_grad(p, batch, LossMode::few_shot(), RegimeMask::value_only()).grad.flatten();
    const auto flags = RegimeMask::value_only().flat(3);
    for (int i = 0; i < g.size(); ++i) {
        if (!flags[i]) CHECK(g(i) == 0.0);
    }

    TrainConfig cfg;
    cfg.regime = Regime::QkZs;
    cfg.mask = regime_mask(Regime::QkZs);
    cfg.context_len = 4;
    cfg.steps = 20;
    cfg.batch = 8;
    cfg.init = TrainConfig::Init::Pretrained;
    // Random start: from the pretrained optimum (v21 = 0) the zero-shot loss
    // does not depend on Q at all.
    const AttentionParams start = random_params(3, 9, 0.3);
    const TrainTrace t = train(cfg, task.sigma, 0.1, task.theta, &start);
    CHECK(t.final_params.v21 == start.v21);
    CHECK(t.final_params.v22 == start.v22);
    CHECK(t.final_params.V11 == start.V11);
    CHECK(t.final_params.Q11 != start.Q11);
}

TEST_CASE("anneal weight reaches zero at the horizon and mixed(0) is zero-shot") {
    const Anneal a{0.8, 100};
    CHECK(a.weight(0) == 0.8);
    CHECK(a.weight(50) == doctest::Approx(0.4));
    CHECK(a.weight(100) == 0.0);
    CHECK(a.weight(1000) == 0.0);
    const TaskSpec task = task3();
    const auto batch = batch_for(task, 6, 4, 7);
    const AttentionParams p = random_params(3, 8, 0.5);
    const LossGrad m = loss_and_grad(p, batch, LossMode::mixed(a.weight(100)));
    const LossGrad z = loss_and_grad(p, batch, LossMode::zero_shot());
    CHECK(m.loss == z.loss);
    CHECK(m.grad.flatten() == z.grad.flatten());
}

TEST_CASE("config validation") {
    TrainConfig c;
    c.regime = Regime::ValueZs;
    c.mask = regime_mask(Regime::ValueZs);
    c.init = TrainConfig::Init::Pretrained;
    CHECK_NOTHROW(c.validate());
    c.anneal = Anneal{1.0, 10};
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c.regime = Regime::ValueZsFs;
    CHECK_NOTHROW(c.validate());
    c.anneal.reset();
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    TrainConfig m;
    m.regime = Regime::FullZs;
    m.mask = RegimeMask::value_only();
    m.init = TrainConfig::Init::Pretrained;
    CHECK_THROWS_AS(m.validate(), InvalidConfig);
    CHECK(regime_from_string("qk_zs") == Regime::QkZs);
    CHECK(regime_name(Regime::ValueZsFs) == "value_zs_fs");
    CHECK_THROWS_AS(regime_from_string("all"), InvalidConfig);
}

TEST_CASE("extract_w round-trips the families") {
    const int d = 5;
    Vec th0 = Vec::LinSpaced(d, 0.1, 0.5);
    const EigenDecomp sigma = covariance_from_eigenvalues(Vec::LinSpaced(d, 2, 0.5));
    const Mat s = sigma.reconstruct();
    for (double w : {0.3, 0.52, 1.0, 1.7}) {
        CHECK(extract_w(optimal_full_ft(th0, w), th0, Regime::FullZs, s) == doctest::Approx(w).epsilon(1e-12));
        CHECK(extract_w(optimal_value_ft(th0, w, sigma), th0, Regime::ValueZs, s) == doctest::Approx(w).epsilon(1e-12));
    }
    CHECK_THROWS_AS(extract_w(optimal_full_ft(th0, 1), Vec::Zero(d), Regime::FullZs, s), ZeroTheta);
}

TEST_CASE("training is deterministic and lowers the loss") {
    const TaskSpec task = task3();
    TrainConfig c;
    c.context_len = 10;
    c.steps = 200;
    c.batch = 64;
    c.step_size = 1e-2;
    c.seed = 3;
    const TrainTrace a = train(c, task.sigma, 0.1, task.theta);
    const TrainTrace b = train(c, task.sigma, 0.1, task.theta);
    CHECK(a.final_params.flatten() == b.final_params.flatten());
    double head = 0, tail = 0;
    for (int i = 0; i < 20; ++i) {
        head += a.loss[i];
        tail += a.loss[a.loss.size() - 1 - i];
    }
    CHECK(tail < 0.8 * head);
}

TEST_CASE("huge step sizes diverge and the sweep skips them") {
    const TaskSpec task = task3();
    TrainConfig c;
    c.context_len = 10;
    c.steps = 200;
    c.batch = 16;
    c.step_size = 50.0;
    c.init_scale = 0.1;
    CHECK_THROWS_AS(train(c, task.sigma, 0.1, task.theta), Diverged);
    const TrainTrace t = train_sweep(c, {50.0, 1e-2}, task.sigma, 0.1, task.theta);
    CHECK(t.step_size == 1e-2);
}

TEST_CASE("eval_trained reports the closed form next to Monte Carlo") {
    const TaskSpec task = task3();
    const AttentionParams p = optimal_pretrain(20, task.sigma);
    const ErrorReport r = eval_trained(p, task, {0, 5}, 20000, 1, &p);
    REQUIRE(r.size() == 2u);
    CHECK(r[0].theory == doctest::Approx(zs_error(p, task)));
    CHECK(r[1].theory == doctest::Approx(fs_error(p, task, 5)));
    CHECK(r[1].reference == r[1].theory);
    CHECK(std::abs(r[1].mc.mean - r[1].theory) < 5 * r[1].mc.std_error);
}
