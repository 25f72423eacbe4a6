#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "icl/attention.hpp"
#include "icl/montecarlo.hpp"
#include "icl/taskgen.hpp"
#include "icl/trainer.hpp"

namespace icl {

// Shared settings of the linear-regression experiments. Defaults follow the
// reference setup: d = 5, σ² = 0.1, Σ = I, θ₀ᵀΣθ₀ = 1, m = n = 20.
struct ExperimentConfig {
    int d = 5;
    double noise_var = 0.1;
    std::vector<double> sigma_eigenvalues;  // empty → all ones
    std::int64_t sigma_rotation_seed = -1;  // < 0 → axis-aligned Σ
    std::vector<double> theta0;             // empty → random unit vector from `seed`
    int m = 20;                             // pretraining context length
    int n_aux = 20;                         // shots in the auxiliary few-shot loss
    std::vector<int> n_grid{1, 5, 10, 20, 50};
    std::int64_t samples = 200000;          // Monte Carlo samples per estimate
    std::uint64_t seed = 20240601;

    // Training budget.
    std::int64_t pretrain_steps = 3000;
    int pretrain_batch = 512;
    std::int64_t finetune_steps = 8000;
    int finetune_batch = 512;
    std::vector<double> step_sizes{1e-2, 3e-3, 1e-3};
    double omega0 = 1.0;
    double anneal_fraction = 0.75;  // horizon = fraction × finetune_steps

    // Theory-curve settings (Figures 1–3).
    std::vector<int> fig1_dims{5, 10, 20};
    double fig1_m = 1000;
    std::vector<double> fig2_w{0.25, 0.52, 1.0, 2.0};
    std::vector<double> fig3_w{0.5, 0.66, 0.77, 8.0 / 9.0, 1.0};
    int n_max = 100;

    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    // Stable 64-bit FNV-1a hash of the canonical JSON dump.
    std::uint64_t hash() const;

    EigenDecomp sigma() const;
    Vec theta0_vec() const;
    TaskSpec task(const Vec& theta) const;
};

// A pretrained snapshot and the four fine-tuned models derived from it.
struct RegimeSuite {
    TrainTrace pretrain;
    std::map<Regime, TrainTrace> finetuned;
    Vec theta0;
};

RegimeSuite run_regime_suite(const ExperimentConfig& cfg);

// One point of a Figure 4 profile.
struct Figure4Row {
    std::string profile;  // a (pretrained), b (full_zs), c (value_zs), d (value_zs_fs)
    double w_extracted = 0.0;
    double w_nominal = 0.0;
    int n = 0;
    double reference = 0.0;  // the profile's closed-form curve at w_extracted
    double nominal = 0.0;    // the same curve at the profile's nominal w
    double exact = 0.0;      // closed form for the trained parameters
    McEstimate mc;
};

std::vector<Figure4Row> figure4_rows(const ExperimentConfig& cfg, const RegimeSuite& suite);

// One bar of Figure 5: n-shot error of a fine-tuned model on θ₀ or −θ₀.
struct Figure5Row {
    std::string regime;
    std::string target;  // "theta0" or "neg_theta0"
    int n = 0;
    double exact = 0.0;
    McEstimate mc;
};

std::vector<Figure5Row> figure5_rows(const ExperimentConfig& cfg, const RegimeSuite& suite, int n = 20);

// Table 1: zero-shot and n-shot errors (n large as the asymptotic proxy) of
// the four regimes' closed-form optima on θ₀ and −θ₀.
struct Table1Row {
    std::string regime;
    double w = 0.0;
    double zs_theta0 = 0.0;
    double fs_theta0 = 0.0;
    double fs_neg_theta0 = 0.0;
    double limit_zs_theta0 = 0.0;
    double limit_fs_theta0 = 0.0;
    double limit_fs_neg_theta0 = 0.0;
};

std::vector<Table1Row> table1_rows(const ExperimentConfig& cfg, double n_proxy = 1e4);

// Generic tabular result: column names plus rows of numbers or strings.
struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<nlohmann::json>> rows;
};

// Figure 1: n-shot vs zero-shot error of the m-shot pretrained model for
// each d (σ² = 0, Σ = I).
Table figure1_table(const ExperimentConfig& cfg);
// Figure 2: few-shot error of the full-FT family over n for several w.
Table figure2_table(const ExperimentConfig& cfg);
// Figure 3: few-shot error of the value-FT family over n for several w, with
// the task-wise and task-averaged w★ columns.
Table figure3_table(const ExperimentConfig& cfg);

// Theory-vs-Monte-Carlo validation over random admissible settings.
struct ValidationRow {
    int setting = 0;
    int d = 0;
    int n = 0;
    double condition = 0.0;
    std::string quantity;  // "zs" or "fs"
    double theory = 0.0;
    McEstimate mc;
    double z = 0.0;        // (mc − theory)/SE; 0 when both are exact
    bool within = false;   // |z| ≤ 5
};

std::vector<ValidationRow> validate_errors(int settings, std::int64_t samples, std::uint64_t seed);

struct MomentCheckRow {
    std::string kind;
    int instance = 0;
    int d = 0;
    int entries = 0;
    double max_abs_z = 0.0;
    bool within = false;  // every entry within 5 SE
};

std::vector<MomentCheckRow> validate_moments(int instances, std::int64_t samples, std::uint64_t seed);

}  // namespace icl
