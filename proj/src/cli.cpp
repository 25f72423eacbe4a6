#include "icl/cli.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "icl/errors.hpp"
#include "icl/theory.hpp"

namespace fs = std::filesystem;

namespace icl {

// --------------------------------------------------------------------- CSV --

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::string format_cell(const nlohmann::json& value) {
    if (value.is_number_integer() || value.is_number_unsigned()) return value.dump();
    if (value.is_number_float()) return format_double(value.get<double>());
    if (value.is_boolean()) return value.get<bool>() ? "true" : "false";
    if (value.is_null()) return "";
    const std::string s = value.is_string() ? value.get<std::string>() : value.dump();
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char ch : s) {
        if (ch == '"') quoted += '"';
        quoted += ch;
    }
    return quoted + "\"";
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw InvalidConfig("cannot write '" + tmp.string() + "'");
        f << text;
        if (!f.flush()) throw InvalidConfig("failed writing '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

void write_csv(const fs::path& path, const std::vector<std::string>& columns,
               const std::vector<std::vector<nlohmann::json>>& rows, std::uint64_t seed, std::uint64_t config_hash) {
    std::ostringstream os;
    for (const auto& c : columns) os << c << ',';
    os << "seed,config_hash\n";
    char hash[17];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash));
    for (const auto& row : rows) {
        if (row.size() != columns.size()) throw DimensionMismatch("CSV row width differs from the header");
        for (const auto& cell : row) os << format_cell(cell) << ',';
        os << seed << ',' << hash << '\n';
    }
    write_text_atomic(path, os.str());
}

ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed,
                             std::optional<std::int64_t> samples) {
    nlohmann::json j = nlohmann::json::object();
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw InvalidConfig("cannot open config '" + path + "'");
        try {
            j = nlohmann::json::parse(f);
        } catch (const nlohmann::json::exception& e) {
            throw InvalidConfig(std::string("config is not valid JSON: ") + e.what());
        }
    }
    if (seed) j["seed"] = *seed;
    if (samples) j["samples"] = *samples;
    return ExperimentConfig::from_json(j);
}

namespace {

void write_table(const fs::path& path, const Table& t, const ExperimentConfig& cfg) {
    write_csv(path, t.columns, t.rows, cfg.seed, cfg.hash());
}

bool report(std::ostream& log, bool ok, const std::string& what) {
    log << (ok ? "[ok]   " : "[FAIL] ") << what << '\n';
    return ok;
}

// ----------------------------------------------------------- theory checks --

bool check_figure1(const ExperimentConfig& cfg, const Table& t, std::ostream& log) {
    bool ok = true;
    for (int d : cfg.fig1_dims) {
        std::vector<double> zs, fs;
        double threshold = 0, crossing = 0;
        for (const auto& r : t.rows) {
            if (r[1].get<int>() != d) continue;
            const std::string s = r[0];
            const double v = r[4];
            if (s == "zs") zs.push_back(v);
            if (s == "fs") fs.push_back(v);
            if (s == "threshold") threshold = v;
            if (s == "crossing") crossing = v;
        }
        bool pattern = true;
        for (std::size_t i = 0; i < fs.size(); ++i) {
            const int n = static_cast<int>(i) + 1;
            pattern = pattern && (n <= d - 2 ? fs[i] > zs[i] : fs[i] < zs[i]);
        }
        ok &= report(log, pattern, "figure1 d=" + std::to_string(d) + ": FS above ZS exactly for n <= d-2");
        ok &= report(log, std::abs(crossing - threshold) <= 0.1,
                     "figure1 d=" + std::to_string(d) + ": crossing " + format_double(crossing) + " vs threshold " +
                         format_double(threshold));
    }
    return ok;
}

bool check_figure2(const ExperimentConfig& cfg, const Table& t, std::ostream& log) {
    const Vec th0 = cfg.theta0_vec();
    const TaskSpec task = cfg.task(th0);
    const double want_zs = cfg.noise_var;
    const double want_limit = cfg.noise_var + th0.dot(task.cov() * th0);
    bool zs_ok = true, lim_ok = true;
    for (const auto& r : t.rows) {
        const std::string s = r[0];
        if (s == "zs") zs_ok = zs_ok && std::abs(r[4].get<double>() - want_zs) <= 1e-12;
        if (s == "limit") lim_ok = lim_ok && std::abs(r[4].get<double>() - want_limit) <= 1e-12;
    }
    bool ok = report(log, zs_ok, "figure2: every w has zero-shot error sigma^2 = " + format_double(want_zs));
    ok &= report(log, lim_ok, "figure2: every w has few-shot limit " + format_double(want_limit));
    return ok;
}

bool check_figure3(const ExperimentConfig& cfg, std::ostream& log) {
    const Vec th0 = cfg.theta0_vec();
    const TaskSpec task = cfg.task(th0);
    const double d = cfg.d;
    const double target = (d + 3) / (d + 4);
    double prev = w_star_task(100, th0, th0, task);
    bool monotone = true;
    for (double n : {1e3, 1e4}) {
        const double w = w_star_task(n, th0, th0, task);
        monotone = monotone && std::abs(w - target) < std::abs(prev - target);
        prev = w;
    }
    bool ok = report(log, monotone && std::abs(prev - target) <= 1e-3,
                     "figure3: task-wise w* approaches (d+3)/(d+4) = " + format_double(target) + " (n=1e4: " +
                         format_double(prev) + ")");
    const double avg = w_star_avg(1e4, task);
    ok &= report(log, std::abs(avg - 1.0) <= 1e-3, "figure3: averaged w* approaches 1 (n=1e4: " + format_double(avg) + ")");
    return ok;
}

// --------------------------------------------------------- trained output --

void write_suite(const fs::path& out, const ExperimentConfig& cfg, const RegimeSuite& suite) {
    std::vector<std::vector<nlohmann::json>> trace_rows;
    auto add = [&](const std::string& name, const TrainTrace& t) {
        for (std::size_t s = 0; s < t.loss.size(); ++s) {
            trace_rows.push_back({name, static_cast<std::int64_t>(s), t.step_size, t.loss[s], t.w_extracted[s]});
        }
        nlohmann::json p = params_to_json(t.final_params);
        write_text_atomic(out / ("params_" + name + ".json"), p.dump(2) + "\n");
    };
    add("pretrain", suite.pretrain);
    for (const auto& [r, t] : suite.finetuned) add(regime_name(r), t);
    write_csv(out / "training_trace.csv", {"regime", "step", "step_size", "loss", "w_extracted"}, trace_rows,
              cfg.seed, cfg.hash());
}

int reproduce_figure4(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    const RegimeSuite suite = run_regime_suite(cfg);
    write_suite(out, cfg, suite);
    const auto rows = figure4_rows(cfg, suite);
    std::vector<std::vector<nlohmann::json>> cells;
    bool ok = true;
    for (const auto& r : rows) {
        const double rel = std::abs(r.mc.mean - r.reference) / r.reference;
        ok = ok && rel <= 0.05;
        cells.push_back({r.profile, r.w_extracted, r.w_nominal, r.n, r.reference, r.nominal, r.exact, r.mc.mean,
                         r.mc.std_error, rel});
    }
    write_csv(out / "figure4.csv",
              {"profile", "w_extracted", "w_nominal", "n", "theory", "theory_nominal_w", "theory_trained_params",
               "mc_mean", "mc_se", "rel_dev"},
              cells, cfg.seed, cfg.hash());
    report(log, ok, "figure4: every empirical point within 5% of its theory curve");
    return ok ? 0 : 1;
}

int reproduce_figure5(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    const RegimeSuite suite = run_regime_suite(cfg);
    write_suite(out, cfg, suite);
    const auto rows = figure5_rows(cfg, suite, cfg.n_aux);
    std::vector<std::vector<nlohmann::json>> cells;
    const Figure5Row* best = nullptr;
    for (const auto& r : rows) {
        cells.push_back({r.regime, r.target, r.n, r.exact, r.mc.mean, r.mc.std_error});
        if (r.target == "neg_theta0" && r.regime != "pretrain" && (!best || r.mc.mean < best->mc.mean)) best = &r;
    }
    write_csv(out / "figure5.csv", {"regime", "target", "n", "theory", "mc_mean", "mc_se"}, cells, cfg.seed,
              cfg.hash());
    const bool ok = best && best->regime == "value_zs";
    report(log, ok, "figure5: lowest error on -theta0 is " + (best ? best->regime : std::string("none")));
    return ok ? 0 : 1;
}

int reproduce_table1(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    const auto rows = table1_rows(cfg);
    std::vector<std::vector<nlohmann::json>> cells;
    bool ok = true;
    for (const auto& r : rows) {
        cells.push_back({r.regime, r.w, r.zs_theta0, r.fs_theta0, r.fs_neg_theta0, r.limit_fs_theta0,
                         r.limit_fs_neg_theta0});
        ok = ok && std::abs(r.fs_theta0 - r.limit_fs_theta0) <= 0.01 * r.limit_fs_theta0 &&
             std::abs(r.fs_neg_theta0 - r.limit_fs_neg_theta0) <= 0.01 * r.limit_fs_neg_theta0;
    }
    write_csv(out / "table1.csv",
              {"regime", "w", "zs_theta0", "fs_theta0", "fs_neg_theta0", "limit_fs_theta0", "limit_fs_neg_theta0"},
              cells, cfg.seed, cfg.hash());
    report(log, ok, "table1: n = 1e4 errors within 1% of the exact limits");
    return ok ? 0 : 1;
}

}  // namespace

// ---------------------------------------------------------------- commands --

int cmd_theory(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    const Table t1 = figure1_table(cfg);
    const Table t2 = figure2_table(cfg);
    const Table t3 = figure3_table(cfg);
    write_table(out / "figure1.csv", t1, cfg);
    write_table(out / "figure2.csv", t2, cfg);
    write_table(out / "figure3.csv", t3, cfg);
    bool ok = check_figure1(cfg, t1, log);
    ok &= check_figure2(cfg, t2, log);
    ok &= check_figure3(cfg, log);
    return ok ? 0 : 1;
}

int cmd_validate(const ExperimentConfig& cfg, const fs::path& out, std::ostream& log, int settings,
                 int moment_instances) {
    const auto rows = validate_errors(settings, cfg.samples, cfg.seed);
    std::vector<std::vector<nlohmann::json>> cells;
    int failed_settings = 0;
    for (std::size_t i = 0; i < rows.size(); i += 2) {
        if (!rows[i].within || !rows[i + 1].within) ++failed_settings;
    }
    for (const auto& r : rows) {
        cells.push_back({r.setting, r.d, r.n, r.condition, r.quantity, r.theory, r.mc.mean, r.mc.std_error, r.z,
                         r.within});
    }
    write_csv(out / "validate_errors.csv",
              {"setting", "d", "n", "condition", "quantity", "theory", "mc_mean", "mc_se", "z", "within_5se"}, cells,
              cfg.seed, cfg.hash());
    bool ok = report(log, failed_settings <= 2,
                     std::to_string(settings - failed_settings) + "/" + std::to_string(settings) +
                         " settings within 5 SE");

    const auto moments = validate_moments(moment_instances, cfg.samples, cfg.seed);
    std::vector<std::vector<nlohmann::json>> mcells;
    int moment_failures = 0;
    for (const auto& r : moments) {
        mcells.push_back({r.kind, r.instance, r.d, r.entries, r.max_abs_z, r.within});
        moment_failures += r.within ? 0 : 1;
    }
    write_csv(out / "validate_moments.csv", {"kind", "instance", "d", "entries", "max_abs_z", "within_5se"}, mcells,
              cfg.seed, cfg.hash());
    ok &= report(log, moment_failures == 0,
                 std::to_string(moments.size() - moment_failures) + "/" + std::to_string(moments.size()) +
                     " moment instances within 5 SE");
    return ok ? 0 : 1;
}

int cmd_reproduce(const std::string& figure, const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    if (figure == "1") {
        const Table t = figure1_table(cfg);
        write_table(out / "figure1.csv", t, cfg);
        return check_figure1(cfg, t, log) ? 0 : 1;
    }
    if (figure == "2") {
        const Table t = figure2_table(cfg);
        write_table(out / "figure2.csv", t, cfg);
        return check_figure2(cfg, t, log) ? 0 : 1;
    }
    if (figure == "3") {
        write_table(out / "figure3.csv", figure3_table(cfg), cfg);
        return check_figure3(cfg, log) ? 0 : 1;
    }
    if (figure == "4") return reproduce_figure4(cfg, out, log);
    if (figure == "5") return reproduce_figure5(cfg, out, log);
    if (figure == "table1") return reproduce_table1(cfg, out, log);
    throw InvalidConfig("unknown figure '" + figure + "' (expected 1, 2, 3, 4, 5 or table1)");
}

int cmd_train(const std::string& regime_str, const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    const Regime regime = regime_from_string(regime_str);
    const RegimeSuite suite = run_regime_suite(cfg);
    write_suite(out, cfg, suite);
    const TrainTrace& t = regime == Regime::Pretrain ? suite.pretrain : suite.finetuned.at(regime);
    const EigenDecomp sigma = cfg.sigma();
    const TaskSpec task = cfg.task(suite.theta0);
    const ErrorReport rep = eval_trained(t.final_params, task, cfg.n_grid, cfg.samples, mix_seed(cfg.seed, 300));
    std::vector<std::vector<nlohmann::json>> cells;
    for (const auto& r : rep) cells.push_back({regime_str, r.n, r.theory, r.mc.mean, r.mc.std_error});
    write_csv(out / ("eval_" + regime_str + ".csv"), {"regime", "n", "theory", "mc_mean", "mc_se"}, cells, cfg.seed,
              cfg.hash());
    log << regime_str << ": step size " << format_double(t.step_size) << ", final loss "
        << format_double(t.loss.back()) << ", w " << format_double(t.w_extracted.back()) << ", zero-shot error "
        << format_double(zs_error(t.final_params, task)) << '\n';
    (void)sigma;
    return 0;
}

int cmd_mc(const std::string& params_path, const ExperimentConfig& cfg, const fs::path& out, std::ostream& log) {
    AttentionParams p;
    if (params_path.empty()) {
        p = optimal_pretrain(cfg.m, cfg.sigma());
    } else {
        std::ifstream f(params_path);
        if (!f) throw InvalidConfig("cannot open params '" + params_path + "'");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(f);
        } catch (const nlohmann::json::exception& e) {
            throw InvalidConfig(std::string("params file is not valid JSON: ") + e.what());
        }
        p = params_from_json(j);
    }
    if (p.d != cfg.d) throw DimensionMismatch("params dimension differs from config d");
    const TaskSpec task = cfg.task(cfg.theta0_vec());
    std::vector<int> grid{0};
    grid.insert(grid.end(), cfg.n_grid.begin(), cfg.n_grid.end());
    if (grid.size() > 1 && grid[1] == 0) grid.erase(grid.begin());
    const ErrorReport rep = eval_trained(p, task, grid, cfg.samples, cfg.seed);
    std::vector<std::vector<nlohmann::json>> cells;
    int outside = 0;
    for (const auto& r : rep) {
        const double z = (r.mc.mean - r.theory) / r.mc.std_error;
        outside += std::abs(z) <= 5.0 ? 0 : 1;
        cells.push_back({r.n, r.theory, r.mc.mean, r.mc.std_error, z});
    }
    write_csv(out / "mc.csv", {"n", "theory", "mc_mean", "mc_se", "z"}, cells, cfg.seed, cfg.hash());
    return report(log, outside == 0, "mc: theory within 5 SE at every n") ? 0 : 1;
}

}  // namespace icl
