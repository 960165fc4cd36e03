#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pmm/baselines.hpp"
#include "pmm/engine.hpp"
#include "pmm/world.hpp"

namespace pmm {

struct ExperimentConfig {
    std::vector<int> m_values = {4, 5, 6};
    double rho = 0.3;
    double b = 1.0;
    double eta_theta = 0.2;
    double eta_w = 0.2;
    double alpha = 0.0;
    int runs = 100;
    int rounds = 300;
    std::string world_mode = "dynamic";               // static | dynamic
    std::string family = "complete";                  // complete | base_only | base_pairs | base_pairs_k3
    std::string noise_model = "uniform_price";        // score_perturbation | uniform_price
    std::string model = "parlay_amm";
    std::uint64_t seed = 12345;
    bool independent_parlay_init_uniform_model = true;  // parlay books open at 2^-|S|
    int threads = 0;                                    // 0 = hardware concurrency

    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

Family parse_family(const std::string& name);
PricerKind parse_model(const std::string& name);
NoiseModel parse_noise_model(const std::string& name);

struct RiskMetrics {
    double mean = 0;
    double var95 = 0;
    double cvar95 = 0;
};

// Empirical VaR at the lower-rank convention and the tail mean above it.
RiskMetrics risk_metrics(std::vector<double> losses);

struct MetricsRow {
    int m = 0;
    long n_markets = 0;
    double mean_loss = 0;      // per round per market
    double halving_ratio = 0;  // l_{m+1} / l_m, NaN on the last row
    double loss_x_2m = 0;
    double total_per_round = 0;
    double var95 = 0;   // of per-round per-market loss
    double cvar95 = 0;
};

using MetricsTable = std::vector<MetricsRow>;

void emit_csv(const MetricsTable& table, const std::string& path);

// Generic CSV helpers shared by every emitter (10 significant digits,
// deterministic order).
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
std::vector<std::vector<double>> parse_csv(const std::string& path,
                                           std::vector<std::string>* header = nullptr);

// ---- simulation cells ----

struct RunResult {
    double total_kl = 0;
    std::vector<double> per_round_loss;
    std::vector<double> param_err;   // engine models only, per round
    std::vector<double> price_mae;   // engine models only, per round
};

// One (model, m, seed) cell. The pairwise-oracle fit is taken from the
// shared cache so all cells of an m value reuse one I-projection.
RunResult simulate_run(PricerKind kind, int m, Family family, const ExperimentConfig& cfg,
                       int run_index, bool track_convergence = false,
                       const IsingParams<double>* phi_star = nullptr);

MetricsTable run_scaling(const ExperimentConfig& cfg);

struct AblationResult {
    std::vector<PricerKind> models;
    std::vector<double> mean_complete;    // mean per-round loss per model
    std::vector<double> mean_base_only;
    std::vector<std::vector<double>> per_run_complete;   // [model][run] total loss
    std::vector<std::vector<double>> per_run_base_only;
};

AblationResult run_ablation(const ExperimentConfig& cfg, int m);

struct NoisePoint {
    double alpha = 0;
    double mean_loss = 0;  // per round per market
    double cvar95 = 0;
};

std::vector<NoisePoint> run_noise_sweep(const ExperimentConfig& cfg, int m,
                                        const std::vector<double>& alphas);

struct ConvergenceCurves {
    std::vector<double> price_mae;      // per round, mean over runs
    std::vector<double> price_mae_std;  // across runs
    std::vector<double> param_err;      // mean ||phi_t - phi*||^2
};

ConvergenceCurves run_convergence(const ExperimentConfig& cfg, int m);
void emit_convergence_csv(const ConvergenceCurves& curves, const std::string& path);

// ---- multinomial experiment ----

struct PottsExperimentConfig {
    std::vector<int> k = {2, 3, 4, 4, 5};
    double rho = 0.3;
    double b = 10.0;
    double eta = 0.2;
    int steps = 300;
    int runs = 200;
    double base_weight = 0.5;
    double two_leg_weight = 0.3;   // remainder is 3-leg
    int parlay_cap = 300;          // per leg count
    double jump_rate = 0.0;
    std::uint64_t seed = 777;
    int threads = 0;
};

struct PottsModelStats {
    std::string model;
    double mean = 0;
    double median = 0;
    double var95 = 0;
    double cvar95 = 0;
};

std::vector<PottsModelStats> run_potts(const PottsExperimentConfig& cfg);
void emit_potts_csv(const std::vector<PottsModelStats>& stats, const std::string& path);

// ---- statistics ----

// One-sided p-value that mean(diffs) > 0, Student-t with n-1 dof.
double paired_t_pvalue_one_sided(const std::vector<double>& diffs);

// P(Binomial(n, 1/2) >= k), the one-sided sign-test p-value.
double sign_test_pvalue(int wins, int n);

void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace pmm
