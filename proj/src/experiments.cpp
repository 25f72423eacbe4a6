#include "icl/experiments.hpp"

#include <cmath>
#include <limits>

#include "icl/errors.hpp"
#include "icl/theory.hpp"

namespace icl {

// ----------------------------------------------------------------- config --

namespace {

template <class T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw InvalidConfig("configuration must be a JSON object");
    static const char* kKnown[] = {"d",          "noise_var",      "sigma_eigenvalues", "sigma_rotation_seed",
                                   "theta0",     "m",              "n_aux",             "n_grid",
                                   "samples",    "seed",           "pretrain_steps",    "pretrain_batch",
                                   "finetune_steps", "finetune_batch", "step_sizes",    "omega0",
                                   "anneal_fraction", "fig1_dims", "fig1_m",            "fig2_w",
                                   "fig3_w",     "n_max"};
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : kKnown) known = known || item.key() == k;
        if (!known) throw InvalidConfig("unknown configuration key '" + item.key() + "'");
    }
    ExperimentConfig c;
    try {
        read_opt(j, "d", c.d);
        read_opt(j, "noise_var", c.noise_var);
        read_opt(j, "sigma_eigenvalues", c.sigma_eigenvalues);
        read_opt(j, "sigma_rotation_seed", c.sigma_rotation_seed);
        read_opt(j, "theta0", c.theta0);
        read_opt(j, "m", c.m);
        read_opt(j, "n_aux", c.n_aux);
        read_opt(j, "n_grid", c.n_grid);
        read_opt(j, "samples", c.samples);
        read_opt(j, "seed", c.seed);
        read_opt(j, "pretrain_steps", c.pretrain_steps);
        read_opt(j, "pretrain_batch", c.pretrain_batch);
        read_opt(j, "finetune_steps", c.finetune_steps);
        read_opt(j, "finetune_batch", c.finetune_batch);
        read_opt(j, "step_sizes", c.step_sizes);
        read_opt(j, "omega0", c.omega0);
        read_opt(j, "anneal_fraction", c.anneal_fraction);
        read_opt(j, "fig1_dims", c.fig1_dims);
        read_opt(j, "fig1_m", c.fig1_m);
        read_opt(j, "fig2_w", c.fig2_w);
        read_opt(j, "fig3_w", c.fig3_w);
        read_opt(j, "n_max", c.n_max);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(std::string("bad configuration value: ") + e.what());
    }
    if (c.d < 1) throw InvalidConfig("d must be positive");
    if (c.noise_var < 0) throw InvalidConfig("noise_var must be non-negative");
    if (!c.sigma_eigenvalues.empty() && static_cast<int>(c.sigma_eigenvalues.size()) != c.d) {
        throw InvalidConfig("sigma_eigenvalues must have d entries");
    }
    if (!c.theta0.empty() && static_cast<int>(c.theta0.size()) != c.d) throw InvalidConfig("theta0 must have d entries");
    for (std::size_t i = 1; i < c.n_grid.size(); ++i) {
        if (c.n_grid[i] <= c.n_grid[i - 1]) throw InvalidConfig("n_grid must be strictly increasing");
    }
    if (!c.n_grid.empty() && c.n_grid.front() < 0) throw InvalidConfig("n_grid entries must be non-negative");
    if (c.samples < 1000) throw InvalidConfig("samples must be at least 1000");
    if (c.step_sizes.empty()) throw InvalidConfig("step_sizes must not be empty");
    if (!(c.anneal_fraction > 0 && c.anneal_fraction <= 1)) throw InvalidConfig("anneal_fraction must be in (0, 1]");
    if (c.m < 1 || c.n_aux < 1 || c.n_max < 1) throw InvalidConfig("context lengths must be positive");
    return c;
}

nlohmann::json ExperimentConfig::to_json() const {
    return {{"d", d},
            {"noise_var", noise_var},
            {"sigma_eigenvalues", sigma_eigenvalues},
            {"sigma_rotation_seed", sigma_rotation_seed},
            {"theta0", theta0},
            {"m", m},
            {"n_aux", n_aux},
            {"n_grid", n_grid},
            {"samples", samples},
            {"seed", seed},
            {"pretrain_steps", pretrain_steps},
            {"pretrain_batch", pretrain_batch},
            {"finetune_steps", finetune_steps},
            {"finetune_batch", finetune_batch},
            {"step_sizes", step_sizes},
            {"omega0", omega0},
            {"anneal_fraction", anneal_fraction},
            {"fig1_dims", fig1_dims},
            {"fig1_m", fig1_m},
            {"fig2_w", fig2_w},
            {"fig3_w", fig3_w},
            {"n_max", n_max}};
}

std::uint64_t ExperimentConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : to_json().dump()) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

EigenDecomp ExperimentConfig::sigma() const {
    Vec lam = Vec::Ones(d);
    if (!sigma_eigenvalues.empty()) lam = Eigen::Map<const Vec>(sigma_eigenvalues.data(), d);
    if (sigma_rotation_seed >= 0) return covariance_with_rotation(lam, static_cast<std::uint64_t>(sigma_rotation_seed));
    return covariance_from_eigenvalues(lam);
}

Vec ExperimentConfig::theta0_vec() const {
    if (!theta0.empty()) return Eigen::Map<const Vec>(theta0.data(), d);
    // Random direction with θ₀ᵀΣθ₀ = 1.
    Rng rng(mix_seed(seed, 0x7e7a), static_cast<std::uint64_t>(Stream::Tasks));
    Vec t(d);
    for (int i = 0; i < d; ++i) t(i) = rng.normal();
    const Mat s = sigma().reconstruct();
    return t / std::sqrt(t.dot(s * t));
}

TaskSpec ExperimentConfig::task(const Vec& theta) const { return TaskSpec::make(theta, sigma(), noise_var); }

// ---------------------------------------------------------------- training --

RegimeSuite run_regime_suite(const ExperimentConfig& cfg) {
    const EigenDecomp sigma = cfg.sigma();
    RegimeSuite suite;
    suite.theta0 = cfg.theta0_vec();

    TrainConfig pre;
    pre.regime = Regime::Pretrain;
    pre.mask = regime_mask(Regime::Pretrain);
    pre.context_len = cfg.m;
    pre.steps = cfg.pretrain_steps;
    pre.batch = cfg.pretrain_batch;
    pre.seed = mix_seed(cfg.seed, 1);
    pre.init = TrainConfig::Init::SmallGaussian;
    pre.init_scale = 1e-2;
    suite.pretrain = train_sweep(pre, cfg.step_sizes, sigma, cfg.noise_var, suite.theta0);

    for (Regime r : {Regime::FullZs, Regime::ValueZs, Regime::ValueZsFs, Regime::QkZs}) {
        TrainConfig ft;
        ft.regime = r;
        ft.mask = regime_mask(r);
        ft.context_len = cfg.n_aux;
        ft.steps = cfg.finetune_steps;
        ft.batch = cfg.finetune_batch;
        ft.seed = mix_seed(cfg.seed, 10 + static_cast<std::uint64_t>(r));
        ft.init = TrainConfig::Init::Pretrained;
        if (r == Regime::ValueZsFs) {
            ft.anneal = Anneal{cfg.omega0, std::max<std::int64_t>(
                                               1, static_cast<std::int64_t>(cfg.anneal_fraction * cfg.finetune_steps))};
        }
        suite.finetuned.emplace(
            r, train_sweep(ft, cfg.step_sizes, sigma, cfg.noise_var, suite.theta0, &suite.pretrain.final_params));
    }
    return suite;
}

// ----------------------------------------------------------------- figures --

namespace {

// Pretrained-family parameters for a given effective w: the m-shot optimum
// with v22 chosen so that extract_w returns w.
AttentionParams pretrained_family(const ExperimentConfig& cfg, const EigenDecomp& sigma, double w) {
    AttentionParams p = optimal_pretrain(cfg.m, sigma);
    p.v22 = 1.0;
    const double kappa = extract_w(p, Vec::Ones(cfg.d), Regime::Pretrain, sigma.reconstruct());
    p.v22 = w / kappa;
    return p;
}

}  // namespace

std::vector<Figure4Row> figure4_rows(const ExperimentConfig& cfg, const RegimeSuite& suite) {
    const EigenDecomp sigma = cfg.sigma();
    const Mat s = sigma.reconstruct();
    const Vec& th0 = suite.theta0;
    const TaskSpec task = cfg.task(th0);
    const double d = cfg.d;

    struct Profile {
        std::string name;
        Regime regime;
        const AttentionParams* params;
        double w_nominal;
    };
    const double w_pre = cfg.m / (cfg.m + 1.0 + d);
    const std::vector<Profile> profiles{
        {"a", Regime::Pretrain, &suite.pretrain.final_params, w_pre},
        {"b", Regime::FullZs, &suite.finetuned.at(Regime::FullZs).final_params, 0.52},
        {"c", Regime::ValueZs, &suite.finetuned.at(Regime::ValueZs).final_params, w_pre},
        {"d", Regime::ValueZsFs, &suite.finetuned.at(Regime::ValueZsFs).final_params,
         w_star_task(cfg.n_aux, th0, th0, task)},
    };

    auto family = [&](Regime r, double w) {
        switch (r) {
            case Regime::Pretrain: return pretrained_family(cfg, sigma, w);
            case Regime::FullZs: return optimal_full_ft(th0, w);
            default: return optimal_value_ft(th0, w, sigma);
        }
    };

    std::vector<Figure4Row> rows;
    std::uint64_t tag = 100;
    for (const Profile& pr : profiles) {
        const double w = extract_w(*pr.params, th0, pr.regime, s);
        const AttentionParams ref = family(pr.regime, w);
        const AttentionParams nom = pr.regime == Regime::Pretrain ? optimal_pretrain(cfg.m, sigma)
                                                                  : family(pr.regime, pr.w_nominal);
        const auto mc = mc_sweep(*pr.params, task, cfg.n_grid, cfg.samples, mix_seed(cfg.seed, tag++));
        for (std::size_t i = 0; i < cfg.n_grid.size(); ++i) {
            const int n = cfg.n_grid[i];
            auto err = [&](const AttentionParams& p) { return n == 0 ? zs_error(p, task) : fs_error(p, task, n); };
            rows.push_back({pr.name, w, pr.w_nominal, n, err(ref), err(nom), err(*pr.params), mc[i]});
        }
    }
    return rows;
}

std::vector<Figure5Row> figure5_rows(const ExperimentConfig& cfg, const RegimeSuite& suite, int n) {
    const Vec& th0 = suite.theta0;
    std::vector<std::pair<std::string, const AttentionParams*>> models{{"pretrain", &suite.pretrain.final_params}};
    for (Regime r : {Regime::FullZs, Regime::ValueZs, Regime::ValueZsFs, Regime::QkZs}) {
        models.emplace_back(regime_name(r), &suite.finetuned.at(r).final_params);
    }
    std::vector<Figure5Row> rows;
    std::uint64_t tag = 200;
    for (const auto& [target, theta] : {std::pair<std::string, Vec>{"theta0", th0}, {"neg_theta0", -th0}}) {
        const TaskSpec task = cfg.task(theta);
        for (const auto& [name, p] : models) {
            rows.push_back({name, target, n, fs_error(*p, task, n),
                            mc_test_error(*p, task, n, cfg.samples, mix_seed(cfg.seed, tag++))});
        }
    }
    return rows;
}

std::vector<Table1Row> table1_rows(const ExperimentConfig& cfg, double n_proxy) {
    const EigenDecomp sigma = cfg.sigma();
    const Vec th0 = cfg.theta0_vec();
    const TaskSpec pos = cfg.task(th0);
    const TaskSpec neg = cfg.task(-th0);
    const double d = cfg.d;
    struct Entry {
        std::string name;
        double w;
        AttentionParams p;
    };
    const std::vector<Entry> entries{
        {"pretrain", 1.0, optimal_pretrain(0, sigma, true)},
        {"full_ft", 0.52, optimal_full_ft(th0, 0.52)},
        {"value_ft_zs", 1.0, optimal_value_ft(th0, 1.0, sigma)},
        {"value_ft_zs_fs", (d + 3) / (d + 4), optimal_value_ft(th0, (d + 3) / (d + 4), sigma)},
    };
    std::vector<Table1Row> rows;
    for (const Entry& e : entries) {
        Table1Row r;
        r.regime = e.name;
        r.w = e.w;
        r.zs_theta0 = zs_error(e.p, pos);
        r.fs_theta0 = fs_error(e.p, pos, n_proxy);
        r.fs_neg_theta0 = fs_error(e.p, neg, n_proxy);
        r.limit_zs_theta0 = r.zs_theta0;
        r.limit_fs_theta0 = fs_error_limit(e.p, pos);
        r.limit_fs_neg_theta0 = fs_error_limit(e.p, neg);
        rows.push_back(r);
    }
    return rows;
}

namespace {

Table long_table() { return Table{{"series", "d", "w", "n", "value"}, {}}; }

void add_row(Table& t, const std::string& series, int d, double w, double n, double value) {
    t.rows.push_back({series, d, w, n, value});
}

}  // namespace

Table figure1_table(const ExperimentConfig& cfg) {
    Table t = long_table();
    for (int d : cfg.fig1_dims) {
        const EigenDecomp sigma = covariance_from_eigenvalues(Vec::Ones(d));
        Vec theta = Vec::Zero(d);
        theta(0) = 1.0;
        const TaskSpec task = TaskSpec::make(theta, sigma, 0.0);
        const AttentionParams p = optimal_pretrain(cfg.fig1_m, sigma);
        const double zs = zs_error(p, task);
        for (int n = 1; n <= cfg.n_max; ++n) {
            add_row(t, "zs", d, p.v22, n, zs);
            add_row(t, "fs", d, p.v22, n, fs_error(p, task, n));
        }
        const double nan = std::numeric_limits<double>::quiet_NaN();
        add_row(t, "threshold", d, p.v22, nan, pretrain_threshold(cfg.fig1_m, task));
        double crossing = nan;
        try {
            crossing = error_crossing(p, task, 1.0, cfg.n_max);
        } catch (const InvalidConfig&) {
            // no sign change in range (e.g. d ≤ 2): leave NaN
        }
        add_row(t, "crossing", d, p.v22, nan, crossing);
    }
    return t;
}

Table figure2_table(const ExperimentConfig& cfg) {
    Table t = long_table();
    const Vec th0 = cfg.theta0_vec();
    const TaskSpec task = cfg.task(th0);
    for (double w : cfg.fig2_w) {
        const AttentionParams p = optimal_full_ft(th0, w);
        add_row(t, "zs", cfg.d, w, 0, zs_error(p, task));
        for (int n = 1; n <= cfg.n_max; ++n) add_row(t, "fs", cfg.d, w, n, fs_error(p, task, n));
        add_row(t, "limit", cfg.d, w, std::numeric_limits<double>::infinity(), fs_error_limit(p, task));
    }
    return t;
}

Table figure3_table(const ExperimentConfig& cfg) {
    Table t = long_table();
    const EigenDecomp sigma = cfg.sigma();
    const Vec th0 = cfg.theta0_vec();
    const TaskSpec task = cfg.task(th0);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (double w : cfg.fig3_w) {
        const AttentionParams p = optimal_value_ft(th0, w, sigma);
        add_row(t, "zs", cfg.d, w, 0, zs_error(p, task));
        for (int n = 1; n <= cfg.n_max; ++n) add_row(t, "fs", cfg.d, w, n, fs_error(p, task, n));
        add_row(t, "limit", cfg.d, w, std::numeric_limits<double>::infinity(), fs_error_limit(p, task));
    }
    for (int n = 1; n <= cfg.n_max; ++n) {
        add_row(t, "w_star_task", cfg.d, nan, n, w_star_task(n, th0, th0, task));
        add_row(t, "w_star_avg", cfg.d, nan, n, w_star_avg(n, task));
    }
    return t;
}

// -------------------------------------------------------------- validation --

namespace {

double uniform_in(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

// Random SPD covariance with condition number at most `max_cond`.
EigenDecomp random_covariance(Rng& rng, int d, double max_cond) {
    Vec lam(d);
    for (int i = 0; i < d; ++i) lam(i) = std::exp(uniform_in(rng, 0.0, std::log(max_cond)));
    lam /= lam.mean();
    return covariance_with_rotation(lam, rng.next_u64());
}

Mat random_matrix(Rng& rng, int d, double scale) {
    Mat m(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = scale * rng.normal();
    return m;
}

Mat random_symmetric(Rng& rng, int d, double scale) {
    const Mat m = random_matrix(rng, d, scale);
    return SymMatrix::from_upper(m).mat();
}

}  // namespace

std::vector<ValidationRow> validate_errors(int settings, std::int64_t samples, std::uint64_t seed) {
    std::vector<ValidationRow> rows;
    for (int s = 0; s < settings; ++s) {
        Rng rng(mix_seed(seed, 1000 + s), 0);
        const int d = 1 + static_cast<int>(rng.uniform() * 6);
        const int n = 1 + static_cast<int>(rng.uniform() * 32);
        const EigenDecomp sigma = random_covariance(rng, d, 50.0);
        Vec theta(d);
        for (int i = 0; i < d; ++i) theta(i) = rng.normal() / std::sqrt(static_cast<double>(d));
        const TaskSpec task = TaskSpec::make(theta, sigma, uniform_in(rng, 0.0, 0.5));

        AttentionParams p = AttentionParams::zeros(d);
        const double sd = 1.0 / std::sqrt(static_cast<double>(d));
        for (int i = 0; i < d; ++i) {
            p.v21(i) = 0.5 * sd * rng.normal();
            p.q21(i) = 0.3 * sd * rng.normal();
        }
        p.Q11 = random_matrix(rng, d, 0.5 * sd) + spd_inverse(sigma.matrix()).mat() * uniform_in(rng, 0.0, 1.0);
        p.v22 = uniform_in(rng, -1.5, 1.5);
        p.q = 0.5 * rng.normal();

        const double cond = sigma.eigenvalues(0) / sigma.eigenvalues(d - 1);
        for (int which = 0; which < 2; ++which) {
            ValidationRow r;
            r.setting = s;
            r.d = d;
            r.n = which == 0 ? 0 : n;
            r.condition = cond;
            r.quantity = which == 0 ? "zs" : "fs";
            r.theory = which == 0 ? zs_error(p, task) : fs_error(p, task, n);
            r.mc = mc_test_error(p, task, r.n, samples, mix_seed(seed, 2000 + 2 * s + which));
            const double diff = r.mc.mean - r.theory;
            r.z = r.mc.std_error > 0 ? diff / r.mc.std_error : (diff == 0 ? 0.0 : std::copysign(1e300, diff));
            r.within = std::abs(r.z) <= 5.0;
            rows.push_back(r);
        }
    }
    return rows;
}

std::vector<MomentCheckRow> validate_moments(int instances, std::int64_t samples, std::uint64_t seed) {
    std::vector<MomentCheckRow> rows;
    const MomentKind kinds[] = {MomentKind::WishartQuad, MomentKind::Quartic, MomentKind::SexticScalar,
                                MomentKind::SexticMatrix};
    const char* names[] = {"wishart_quad", "quartic", "sextic_scalar", "sextic_matrix"};
    for (int k = 0; k < 4; ++k) {
        for (int inst = 0; inst < instances; ++inst) {
            Rng rng(mix_seed(seed, 3000 + 100 * k + inst), 0);
            const int d = 1 + static_cast<int>(rng.uniform() * 4);
            MomentInputs in;
            in.sigma = random_covariance(rng, d, 10.0).matrix();
            in.n = 1 + static_cast<int>(rng.uniform() * 5);
            Mat expected;
            switch (kinds[k]) {
                case MomentKind::WishartQuad:
                    in.a = random_symmetric(rng, d, 1.0);
                    expected = wishart_quadratic_mean(in.sigma, in.n, SymMatrix(in.a));
                    break;
                case MomentKind::Quartic:
                    in.a = random_symmetric(rng, d, 1.0);
                    in.b = random_symmetric(rng, d, 1.0);
                    expected = Mat::Constant(1, 1, gaussian_quartic_mean(in.sigma, SymMatrix(in.a), SymMatrix(in.b)));
                    break;
                case MomentKind::SexticScalar:
                    in.a = random_symmetric(rng, d, 1.0);
                    in.b = random_symmetric(rng, d, 1.0);
                    in.c = random_symmetric(rng, d, 1.0);
                    expected = Mat::Constant(
                        1, 1, gaussian_sextic_scalar(in.sigma, SymMatrix(in.a), SymMatrix(in.b), SymMatrix(in.c)));
                    break;
                case MomentKind::SexticMatrix:
                    in.a = random_matrix(rng, d, 1.0);
                    in.b = random_matrix(rng, d, 1.0);
                    expected = gaussian_sextic_matrix(in.sigma, in.a, in.b);
                    break;
                case MomentKind::PredictionMoments: break;
            }
            const auto est = mc_moment(kinds[k], in, samples, mix_seed(seed, 4000 + 100 * k + inst));
            MomentCheckRow r;
            r.kind = names[k];
            r.instance = inst;
            r.d = d;
            r.entries = static_cast<int>(est.size());
            for (int e = 0; e < r.entries; ++e) {
                const double want = expected.size() == 1 ? expected(0, 0) : expected(e / d, e % d);
                const double z = (est[e].mean - want) / est[e].std_error;
                r.max_abs_z = std::max(r.max_abs_z, std::abs(z));
            }
            r.within = r.max_abs_z <= 5.0;
            rows.push_back(r);
        }
    }
    return rows;
}

}  // namespace icl
