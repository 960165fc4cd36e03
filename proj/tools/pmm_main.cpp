// Command-line driver: simulation experiments, replay, and model utilities.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "pmm/harness.hpp"
#include "pmm/replay.hpp"

using namespace pmm;

namespace {

ExperimentConfig load_config(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    nlohmann::json j;
    in >> j;
    return ExperimentConfig::from_json(j);
}

void add_overrides(CLI::App* cmd, ExperimentConfig& cfg) {
    cmd->add_option("--m-values", cfg.m_values, "base-event counts to sweep");
    cmd->add_option("--rho", cfg.rho, "pairwise score correlation");
    cmd->add_option("--b", cfg.b, "LMSR liquidity");
    cmd->add_option("--eta-theta", cfg.eta_theta, "field step size");
    cmd->add_option("--eta-w", cfg.eta_w, "coupling step size");
    cmd->add_option("--alpha", cfg.alpha, "noise-trader fraction");
    cmd->add_option("--runs", cfg.runs, "independent simulation runs");
    cmd->add_option("--rounds", cfg.rounds, "trades per run");
    cmd->add_option("--world-mode", cfg.world_mode, "static | dynamic");
    cmd->add_option("--family", cfg.family,
                    "complete | base_only | base_pairs | base_pairs_k3");
    cmd->add_option("--noise-model", cfg.noise_model, "score_perturbation | uniform_price");
    cmd->add_option("--model", cfg.model, "pricer to simulate");
    cmd->add_option("--seed", cfg.seed, "root seed");
    cmd->add_option("--threads", cfg.threads, "worker threads (0 = auto)");
}

void print_table(const MetricsTable& table) {
    std::printf("%3s %9s %12s %8s %10s %14s %12s %12s\n", "m", "n_markets", "mean_loss", "ratio",
                "loss_x_2m", "total_per_round", "var95", "cvar95");
    for (const auto& r : table)
        std::printf("%3d %9ld %12.6g %8.4g %10.4g %14.6g %12.6g %12.6g\n", r.m, r.n_markets,
                    r.mean_loss, r.halving_ratio, r.loss_x_2m, r.total_per_round, r.var95,
                    r.cvar95);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"parlay market maker: shared Ising belief state over LMSR books"};
    app.require_subcommand(1);

    std::string config_path, out_path;
    ExperimentConfig cfg;

    // Load --config before CLI11 binds defaults, so explicit flags override
    // file values.
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--config" && i + 1 < argc) config_path = argv[i + 1];
        else if (arg.rfind("--config=", 0) == 0) config_path = arg.substr(9);
    }
    if (!config_path.empty()) cfg = load_config(config_path);

    // scaling
    auto* scaling = app.add_subcommand("scaling", "complete-parlay loss scaling sweep");
    scaling->add_option("--config", config_path, "JSON config file");
    scaling->add_option("--out", out_path, "CSV output path");
    add_overrides(scaling, cfg);

    // ablation
    int ablation_m = 6;
    auto* ablation = app.add_subcommand("ablation", "complete vs base-only flow ranking");
    ablation->add_option("--config", config_path);
    ablation->add_option("--m", ablation_m, "base-event count");
    ablation->add_option("--out", out_path, "CSV output path");
    add_overrides(ablation, cfg);

    // noise sweep
    std::vector<double> alphas = {0.0, 0.25, 0.5, 0.75, 1.0};
    int noise_m = 5;
    auto* noise = app.add_subcommand("noise", "noise-trader fraction sweep");
    noise->add_option("--config", config_path);
    noise->add_option("--alphas", alphas, "noise fractions");
    noise->add_option("--m", noise_m, "base-event count");
    noise->add_option("--out", out_path, "CSV output path");
    add_overrides(noise, cfg);

    // convergence
    int conv_m = 4;
    auto* converge = app.add_subcommand("converge", "price/parameter convergence curves");
    converge->add_option("--config", config_path);
    converge->add_option("--m", conv_m, "base-event count");
    converge->add_option("--out", out_path, "CSV output path");
    add_overrides(converge, cfg);

    // potts
    PottsExperimentConfig pcfg;
    auto* potts = app.add_subcommand("potts", "multinomial Potts experiment");
    potts->add_option("--k", pcfg.k, "category counts per market");
    potts->add_option("--runs", pcfg.runs);
    potts->add_option("--steps", pcfg.steps);
    potts->add_option("--b", pcfg.b);
    potts->add_option("--eta", pcfg.eta);
    potts->add_option("--rho", pcfg.rho);
    potts->add_option("--jump-rate", pcfg.jump_rate, "Poisson jump intensity per step");
    potts->add_option("--seed", pcfg.seed);
    potts->add_option("--threads", pcfg.threads);
    potts->add_option("--out", out_path, "CSV output path");

    // replay
    std::string stream_path, truth_path, mode_name = "full_market", gen_path, truth_out;
    ReplayConfig rcfg;
    SyntheticStreamConfig gen_cfg;
    auto* replay_cmd = app.add_subcommand("replay", "trade-log replay / fixture generation");
    replay_cmd->add_option("--stream", stream_path, "JSONL stream to replay");
    replay_cmd->add_option("--truth", truth_path, "per-trade truth CSV (synthetic streams)");
    replay_cmd->add_option("--mode", mode_name, "full_market | standalone");
    replay_cmd->add_option("--eta-theta", rcfg.eta_theta);
    replay_cmd->add_option("--eta-w", rcfg.eta_w);
    replay_cmd->add_option("--b", rcfg.b, "replay book liquidity");
    replay_cmd->add_option("--size-cap", rcfg.size_cap);
    replay_cmd->add_option("--out", out_path, "metrics CSV output");
    replay_cmd->add_option("--generate", gen_path, "write a synthetic fixture stream here");
    replay_cmd->add_option("--truth-out", truth_out, "write fixture truths here");
    replay_cmd->add_option("--fee-epsilon", gen_cfg.fee, "uniform additive fee for fixtures");
    replay_cmd->add_option("--gen-m", gen_cfg.m, "fixture market count");
    replay_cmd->add_option("--gen-trades", gen_cfg.n_trades, "fixture trade count");
    replay_cmd->add_option("--gen-seed", gen_cfg.seed, "fixture seed");

    // check-hessian
    int hess_m = 4;
    auto* check_hessian =
        app.add_subcommand("check-hessian", "composite-loss curvature at the origin");
    check_hessian->add_option("--m", hess_m, "base-event count");

    // fit-moments
    double fit_rho = 0.3;
    int fit_m = 4;
    std::string fit_out;
    auto* fit_cmd =
        app.add_subcommand("fit-moments", "I-projection of equicorrelated world moments");
    fit_cmd->add_option("--m", fit_m);
    fit_cmd->add_option("--rho", fit_rho);
    fit_cmd->add_option("--out", fit_out, "write fitted params JSON here");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*scaling) {
            const auto table = run_scaling(cfg);
            print_table(table);
            if (!out_path.empty()) emit_csv(table, out_path);
        } else if (*ablation) {
            const auto res = run_ablation(cfg, ablation_m);
            std::printf("%-22s %16s %16s\n", "model", "complete", "base_only");
            for (size_t i = 0; i < res.models.size(); ++i)
                std::printf("%-22s %16.6g %16.6g\n", pricer_name(res.models[i]),
                            res.mean_complete[i], res.mean_base_only[i]);
            if (!out_path.empty()) {
                std::vector<std::vector<double>> rows;
                for (size_t i = 0; i < res.models.size(); ++i)
                    rows.push_back({double(i), res.mean_complete[i], res.mean_base_only[i]});
                write_csv(out_path, {"model_index", "mean_complete", "mean_base_only"}, rows);
            }
        } else if (*noise) {
            const auto points = run_noise_sweep(cfg, noise_m, alphas);
            std::printf("%8s %12s %12s\n", "alpha", "mean_loss", "cvar95");
            std::vector<std::vector<double>> rows;
            for (const auto& p : points) {
                std::printf("%8.3f %12.6g %12.6g\n", p.alpha, p.mean_loss, p.cvar95);
                rows.push_back({p.alpha, p.mean_loss, p.cvar95});
            }
            if (!out_path.empty()) write_csv(out_path, {"alpha", "mean_loss", "cvar95"}, rows);
        } else if (*converge) {
            const auto curves = run_convergence(cfg, conv_m);
            std::printf("round 0: price_mae=%.6g param_err=%.6g\n", curves.price_mae.front(),
                        curves.param_err.front());
            std::printf("round %zu: price_mae=%.6g param_err=%.6g\n",
                        curves.price_mae.size() - 1, curves.price_mae.back(),
                        curves.param_err.back());
            if (!out_path.empty()) emit_convergence_csv(curves, out_path);
        } else if (*potts) {
            const auto stats = run_potts(pcfg);
            std::printf("%-12s %12s %12s %12s %12s\n", "model", "mean", "median", "var95",
                        "cvar95");
            for (const auto& s : stats)
                std::printf("%-12s %12.6g %12.6g %12.6g %12.6g\n", s.model.c_str(), s.mean,
                            s.median, s.var95, s.cvar95);
            if (!out_path.empty()) emit_potts_csv(stats, out_path);
        } else if (*replay_cmd) {
            if (!gen_path.empty()) {
                const auto fixture = generate_synthetic_stream(gen_cfg);
                std::ofstream out(gen_path);
                write_stream(out, fixture.events);
                if (!truth_out.empty()) {
                    std::vector<std::vector<double>> rows;
                    for (size_t i = 0; i < fixture.trade_truths.size(); ++i)
                        rows.push_back({double(i), fixture.trade_truths[i]});
                    write_csv(truth_out, {"trade_index", "p_true"}, rows);
                }
                std::printf("wrote %zu events (%zu trades) to %s\n", fixture.events.size(),
                            fixture.trade_truths.size(), gen_path.c_str());
                return 0;
            }
            if (stream_path.empty())
                throw std::runtime_error("replay: provide --stream or --generate");
            std::ifstream in(stream_path);
            if (!in) throw std::runtime_error("cannot open " + stream_path);
            const auto events = parse_stream(in);
            rcfg.mode = mode_name == "standalone" ? ReplayMode::standalone
                                                  : ReplayMode::full_market;
            std::vector<double> truths;
            if (!truth_path.empty()) {
                for (const auto& row : parse_csv(truth_path)) truths.push_back(row.at(1));
            }
            ReplaySession session(events, rcfg);
            const auto metrics = session.run(events, truths.empty() ? nullptr : &truths);
            std::printf("candles=%ld trades=%ld accepted=%ld rejected=%ld accept_rate=%.4f\n",
                        metrics.n_candles, metrics.n_trades, metrics.n_accepted,
                        metrics.n_rejected, metrics.accept_rate);
            if (metrics.has_truth)
                std::printf("err_all=%.5f err_accepted=%.5f win_rate=%.4f pnl=%.4f sharpe=%.4f\n",
                            metrics.mean_abs_err_all, metrics.mean_abs_err_accepted,
                            metrics.win_rate, metrics.total_pnl, metrics.sharpe);
            if (!out_path.empty()) {
                write_csv(out_path,
                          {"n_candles", "n_trades", "n_accepted", "n_rejected", "accept_rate",
                           "pool_revenue", "err_all", "err_accepted", "win_rate", "pnl",
                           "sharpe"},
                          {{double(metrics.n_candles), double(metrics.n_trades),
                            double(metrics.n_accepted), double(metrics.n_rejected),
                            metrics.accept_rate, metrics.pool_revenue, metrics.mean_abs_err_all,
                            metrics.mean_abs_err_accepted, metrics.win_rate, metrics.total_pnl,
                            metrics.sharpe}});
            }
        } else if (*check_hessian) {
            IsingParams<double> params(hess_m);
            const auto targets = moments(joint_table(params));
            const VecXd weights = VecXd::Ones(params.dim());
            const auto h = hessian_composite(params, weights, targets);
            double dmin = 1e300, dmax = 0;
            for (int i = 0; i < params.dim(); ++i) {
                dmin = std::min(dmin, h(i, i));
                dmax = std::max(dmax, h(i, i));
            }
            std::printf("m=%d field curvature=%.10g coupling curvature=%.10g condition=%.10g\n",
                        hess_m, h(0, 0), h(params.dim() - 1, params.dim() - 1), dmax / dmin);
        } else if (*fit_cmd) {
            GaussianWorld<double> world(fit_m, fit_rho);
            const auto fitted = fit_to_moments(true_moments(world), 1e-8);
            const auto j = to_json(fitted);
            std::printf("%s\n", j.dump(2).c_str());
            if (!fit_out.empty()) {
                std::ofstream out(fit_out);
                out << j.dump(2) << "\n";
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
