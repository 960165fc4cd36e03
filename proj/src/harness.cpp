#include "pmm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "pmm/potts_engine.hpp"
#include "pmm/rng.hpp"

namespace pmm {

using nlohmann::json;

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig cfg;
    if (j.contains("m_values")) cfg.m_values = j["m_values"].get<std::vector<int>>();
    if (j.contains("rho")) cfg.rho = j["rho"].get<double>();
    if (j.contains("b")) cfg.b = j["b"].get<double>();
    if (j.contains("eta_theta")) cfg.eta_theta = j["eta_theta"].get<double>();
    if (j.contains("eta_w")) cfg.eta_w = j["eta_w"].get<double>();
    if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
    if (j.contains("runs")) cfg.runs = j["runs"].get<int>();
    if (j.contains("rounds")) cfg.rounds = j["rounds"].get<int>();
    if (j.contains("world_mode")) cfg.world_mode = j["world_mode"].get<std::string>();
    if (j.contains("family")) cfg.family = j["family"].get<std::string>();
    if (j.contains("noise_model")) cfg.noise_model = j["noise_model"].get<std::string>();
    if (j.contains("model")) cfg.model = j["model"].get<std::string>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("independent_parlay_init_uniform_model"))
        cfg.independent_parlay_init_uniform_model =
            j["independent_parlay_init_uniform_model"].get<bool>();
    if (j.contains("threads")) cfg.threads = j["threads"].get<int>();
    if (cfg.runs < 1 || cfg.rounds < 1) throw std::invalid_argument("config: runs/rounds >= 1");
    if (cfg.alpha < 0 || cfg.alpha > 1) throw std::invalid_argument("config: alpha in [0,1]");
    return cfg;
}

json ExperimentConfig::to_json() const {
    json j;
    j["m_values"] = m_values;
    j["rho"] = rho;
    j["b"] = b;
    j["eta_theta"] = eta_theta;
    j["eta_w"] = eta_w;
    j["alpha"] = alpha;
    j["runs"] = runs;
    j["rounds"] = rounds;
    j["world_mode"] = world_mode;
    j["family"] = family;
    j["noise_model"] = noise_model;
    j["model"] = model;
    j["seed"] = seed;
    j["independent_parlay_init_uniform_model"] = independent_parlay_init_uniform_model;
    j["threads"] = threads;
    return j;
}

Family parse_family(const std::string& name) {
    if (name == "complete") return Family::complete;
    if (name == "base_only") return Family::base_only;
    if (name == "base_pairs") return Family::base_pairs;
    if (name == "base_pairs_k3") return Family::base_pairs_k3;
    throw std::invalid_argument("unknown family: " + name);
}

PricerKind parse_model(const std::string& name) {
    if (name == "parlay_amm") return PricerKind::parlay_amm;
    if (name == "independent_lmsr") return PricerKind::independent_lmsr;
    if (name == "product_independence") return PricerKind::product_independence;
    if (name == "pairwise_oracle") return PricerKind::pairwise_oracle;
    if (name == "gaussian_oracle") return PricerKind::gaussian_oracle;
    if (name == "true_oracle") return PricerKind::true_oracle;
    throw std::invalid_argument("unknown model: " + name);
}

NoiseModel parse_noise_model(const std::string& name) {
    if (name == "score_perturbation") return NoiseModel::score_perturbation;
    if (name == "uniform_price") return NoiseModel::uniform_price;
    throw std::invalid_argument("unknown noise model: " + name);
}

RiskMetrics risk_metrics(std::vector<double> losses) {
    if (losses.empty()) throw std::invalid_argument("risk_metrics: empty sample");
    RiskMetrics out;
    for (double x : losses) out.mean += x;
    out.mean /= double(losses.size());
    std::sort(losses.begin(), losses.end());
    const size_t n = losses.size();
    const size_t rank = size_t(std::ceil(0.95 * double(n)));  // lower-rank convention
    out.var95 = losses[std::min(n - 1, rank == 0 ? 0 : rank - 1)];
    double tail = 0;
    long count = 0;
    for (double x : losses)
        if (x >= out.var95) {
            tail += x;
            ++count;
        }
    out.cvar95 = tail / double(count);
    return out;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << "\n";
    char buf[64];
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.10g", row[i]);
            out << (i ? "," : "") << buf;
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<std::vector<double>> parse_csv(const std::string& path,
                                           std::vector<std::string>* header) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::vector<std::vector<double>> rows;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        size_t start = 0;
        while (true) {
            const size_t comma = line.find(',', start);
            cells.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (first) {
            if (header) *header = cells;
            first = false;
            continue;
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) row.push_back(std::stod(c));
        rows.push_back(std::move(row));
    }
    return rows;
}

void emit_csv(const MetricsTable& table, const std::string& path) {
    std::vector<std::vector<double>> rows;
    for (const auto& r : table)
        rows.push_back({double(r.m), double(r.n_markets), r.mean_loss, r.halving_ratio,
                        r.loss_x_2m, r.total_per_round, r.var95, r.cvar95});
    write_csv(path,
              {"m", "n_markets", "mean_loss", "ratio", "loss_x_2m", "total_per_round", "var95",
               "cvar95"},
              rows);
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 0) threads = int(std::thread::hardware_concurrency());
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::mutex err_mutex;
    std::exception_ptr err;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!err) err = std::current_exception();
                    return;
                }
            }
        });
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

// Pairwise-oracle fits keyed by (m, rho): the t=0 moments are shared across
// seeds, so one I-projection serves every cell.
namespace {
std::map<std::pair<int, long>, IsingParams<double>> g_pairwise_cache;
std::mutex g_pairwise_mutex;

IsingParams<double> pairwise_fit(int m, double rho) {
    const auto key = std::make_pair(m, std::lround(rho * 1e9));
    std::lock_guard<std::mutex> lock(g_pairwise_mutex);
    auto it = g_pairwise_cache.find(key);
    if (it == g_pairwise_cache.end()) {
        GaussianWorld<double> world(m, rho);
        it = g_pairwise_cache.emplace(key, fit_to_moments(true_moments(world), 1e-8)).first;
    }
    return it->second;
}
}  // namespace

RunResult simulate_run(PricerKind kind, int m, Family family, const ExperimentConfig& cfg,
                       int run_index, bool track_convergence,
                       const IsingParams<double>* phi_star) {
    const bool dynamic = cfg.world_mode == "dynamic";
    const NoiseModel noise_model = parse_noise_model(cfg.noise_model);
    GaussianWorld<double> world(m, cfg.rho);
    const auto family_ids = make_family(m, family);

    auto make_pricer = [&]() -> Pricer<double> {
        switch (kind) {
            case PricerKind::parlay_amm:
                return Pricer<double>(ParlayEngine<double>(m, cfg.eta_theta, cfg.eta_w, cfg.b));
            case PricerKind::independent_lmsr:
                return Pricer<double>(
                    IndependentLmsr<double>(m, cfg.b, cfg.independent_parlay_init_uniform_model));
            case PricerKind::product_independence:
                return Pricer<double>(ProductIndependence<double>(m, cfg.b));
            case PricerKind::pairwise_oracle:
                return Pricer<double>(PairwiseOracle<double>(pairwise_fit(m, cfg.rho), cfg.b));
            case PricerKind::gaussian_oracle:
                return Pricer<double>(GaussianOracle<double>(world, cfg.b));
            case PricerKind::true_oracle:
                return Pricer<double>(TrueOracle<double>(&world, cfg.b));
        }
        throw std::logic_error("bad pricer kind");
    };
    Pricer<double> pricer = make_pricer();

    auto rng_world = make_stream(cfg.seed, std::uint64_t(run_index), "world");
    auto rng_arrival = make_stream(cfg.seed, std::uint64_t(run_index), "arrival");

    RunResult result;
    result.per_round_loss.reserve(cfg.rounds);
    const double dt = world.horizon / double(cfg.rounds);

    for (int round = 0; round < cfg.rounds; ++round) {
        const auto arrival =
            sample_arrival(world, family_ids, cfg.alpha, rng_arrival, noise_model);
        const auto outcome = pricer.process_trade(arrival.market, arrival.target);
        result.total_kl += outcome.kl_loss;
        result.per_round_loss.push_back(outcome.kl_loss);
        if (track_convergence) {
            auto* engine = pricer.engine();
            if (phi_star && engine)
                result.param_err.push_back(
                    (engine->params.flat() - phi_star->flat()).squaredNorm());
            double mae = 0;
            for (const auto id : family_ids)
                mae += std::abs(double(parlay_signal(world, id)) -
                                (engine ? double(engine->prob(id)) : pricer.quote(id)));
            result.price_mae.push_back(mae / double(family_ids.size()));
        }
        if (dynamic) step_scores(world, dt, rng_world);
    }
    return result;
}

MetricsTable run_scaling(const ExperimentConfig& cfg) {
    const PricerKind kind = parse_model(cfg.model);
    const Family family = parse_family(cfg.family);
    MetricsTable table;
    std::vector<std::vector<double>> pooled(cfg.m_values.size());

    for (size_t mi = 0; mi < cfg.m_values.size(); ++mi) {
        const int m = cfg.m_values[mi];
        if (kind == PricerKind::pairwise_oracle) pairwise_fit(m, cfg.rho);
        std::vector<RunResult> results(cfg.runs);
        parallel_for(cfg.runs, cfg.threads, [&](int run) {
            results[run] = simulate_run(kind, m, family, cfg, run);
        });
        const double n_markets = double(make_family(m, family).size());
        MetricsRow row;
        row.m = m;
        row.n_markets = long(n_markets);
        double total = 0;
        auto& samples = pooled[mi];
        for (const auto& r : results) {
            total += r.total_kl;
            for (double x : r.per_round_loss) samples.push_back(x / n_markets);
        }
        row.total_per_round = total / double(cfg.runs * cfg.rounds);
        row.mean_loss = row.total_per_round / n_markets;
        row.loss_x_2m = row.mean_loss * std::pow(2.0, m);
        const auto risk = risk_metrics(samples);
        row.var95 = risk.var95;
        row.cvar95 = risk.cvar95;
        row.halving_ratio = std::numeric_limits<double>::quiet_NaN();
        table.push_back(row);
    }
    for (size_t mi = 0; mi + 1 < table.size(); ++mi)
        if (table[mi + 1].m == table[mi].m + 1)
            table[mi].halving_ratio = table[mi + 1].mean_loss / table[mi].mean_loss;
    return table;
}

AblationResult run_ablation(const ExperimentConfig& cfg, int m) {
    AblationResult out;
    out.models = {PricerKind::parlay_amm, PricerKind::independent_lmsr,
                  PricerKind::product_independence, PricerKind::pairwise_oracle,
                  PricerKind::gaussian_oracle, PricerKind::true_oracle};
    pairwise_fit(m, cfg.rho);
    const int n_models = int(out.models.size());
    out.per_run_complete.assign(n_models, std::vector<double>(cfg.runs, 0.0));
    out.per_run_base_only.assign(n_models, std::vector<double>(cfg.runs, 0.0));

    parallel_for(cfg.runs * n_models * 2, cfg.threads, [&](int cell) {
        const int run = cell % cfg.runs;
        const int model_i = (cell / cfg.runs) % n_models;
        const bool complete = cell / (cfg.runs * n_models) == 0;
        const auto r = simulate_run(out.models[model_i], m,
                                    complete ? Family::complete : Family::base_only, cfg, run);
        (complete ? out.per_run_complete : out.per_run_base_only)[model_i][run] = r.total_kl;
    });
    for (int i = 0; i < n_models; ++i) {
        double a = 0, b2 = 0;
        for (int run = 0; run < cfg.runs; ++run) {
            a += out.per_run_complete[i][run];
            b2 += out.per_run_base_only[i][run];
        }
        out.mean_complete.push_back(a / double(cfg.runs * cfg.rounds));
        out.mean_base_only.push_back(b2 / double(cfg.runs * cfg.rounds));
    }
    return out;
}

std::vector<NoisePoint> run_noise_sweep(const ExperimentConfig& cfg, int m,
                                        const std::vector<double>& alphas) {
    std::vector<NoisePoint> out(alphas.size());
    const PricerKind kind = parse_model(cfg.model);
    const Family family = parse_family(cfg.family);
    pairwise_fit(m, cfg.rho);
    const double n_markets = double(make_family(m, family).size());
    for (size_t ai = 0; ai < alphas.size(); ++ai) {
        ExperimentConfig local = cfg;
        local.alpha = alphas[ai];
        std::vector<RunResult> results(cfg.runs);
        parallel_for(cfg.runs, cfg.threads, [&](int run) {
            results[run] = simulate_run(kind, m, family, local, run);
        });
        std::vector<double> samples;
        double total = 0;
        for (const auto& r : results) {
            total += r.total_kl;
            for (double x : r.per_round_loss) samples.push_back(x / n_markets);
        }
        out[ai].alpha = alphas[ai];
        out[ai].mean_loss = total / double(cfg.runs * cfg.rounds) / n_markets;
        out[ai].cvar95 = risk_metrics(samples).cvar95;
    }
    return out;
}

ConvergenceCurves run_convergence(const ExperimentConfig& cfg, int m) {
    ExperimentConfig local = cfg;
    local.world_mode = "static";
    GaussianWorld<double> world(m, cfg.rho);
    const auto phi_star = fit_to_moments(true_moments(world), 1e-9);
    const Family family = parse_family(cfg.family);

    std::vector<RunResult> results(cfg.runs);
    parallel_for(cfg.runs, cfg.threads, [&](int run) {
        results[run] =
            simulate_run(PricerKind::parlay_amm, m, family, local, run, true, &phi_star);
    });
    ConvergenceCurves curves;
    curves.price_mae.assign(cfg.rounds, 0.0);
    curves.price_mae_std.assign(cfg.rounds, 0.0);
    curves.param_err.assign(cfg.rounds, 0.0);
    for (const auto& r : results)
        for (int t = 0; t < cfg.rounds; ++t) {
            curves.price_mae[t] += r.price_mae[t];
            curves.param_err[t] += r.param_err[t];
        }
    for (int t = 0; t < cfg.rounds; ++t) {
        curves.price_mae[t] /= double(cfg.runs);
        curves.param_err[t] /= double(cfg.runs);
    }
    for (const auto& r : results)
        for (int t = 0; t < cfg.rounds; ++t) {
            const double d = r.price_mae[t] - curves.price_mae[t];
            curves.price_mae_std[t] += d * d;
        }
    for (int t = 0; t < cfg.rounds; ++t)
        curves.price_mae_std[t] =
            cfg.runs > 1 ? std::sqrt(curves.price_mae_std[t] / double(cfg.runs - 1)) : 0.0;
    return curves;
}

void emit_convergence_csv(const ConvergenceCurves& curves, const std::string& path) {
    std::vector<std::vector<double>> rows;
    for (size_t t = 0; t < curves.price_mae.size(); ++t)
        rows.push_back({double(t), curves.price_mae[t], curves.price_mae_std[t],
                        curves.param_err[t]});
    write_csv(path, {"round", "price_mae", "price_mae_std", "param_err"}, rows);
}

// ---- multinomial experiment ----

namespace {

struct ParlayUniverse {
    std::vector<CategoricalParlay> one_leg;   // outcome contracts, grouped by market
    std::vector<int> one_leg_offset;          // per-market start into one_leg
    std::vector<CategoricalParlay> two_leg;
    std::vector<CategoricalParlay> three_leg;
};

ParlayUniverse build_universe(const std::vector<int>& k, int cap, std::uint64_t seed) {
    ParlayUniverse u;
    const int m = int(k.size());
    u.one_leg_offset.assign(m + 1, 0);
    for (int i = 0; i < m; ++i) {
        for (int c = 0; c < k[i]; ++c) u.one_leg.push_back({std::uint32_t(1) << i, {c}});
        u.one_leg_offset[i + 1] = int(u.one_leg.size());
    }
    auto enumerate = [&](int legs, std::vector<CategoricalParlay>& out) {
        std::vector<int> idx(legs);
        std::function<void(int, int)> picks = [&](int start, int depth) {
            if (depth == legs) {
                std::uint32_t mask = 0;
                for (int i : idx) mask |= std::uint32_t(1) << i;
                std::vector<int> cats(legs, 0);
                while (true) {
                    CategoricalParlay p;
                    p.markets = mask;
                    p.targets = cats;
                    out.push_back(p);
                    int d = 0;
                    for (; d < legs; ++d) {
                        if (++cats[d] < k[idx[d]]) break;
                        cats[d] = 0;
                    }
                    if (d == legs) break;
                }
                return;
            }
            for (int i = start; i < m; ++i) {
                idx[depth] = i;
                picks(i + 1, depth + 1);
            }
        };
        picks(0, 0);
    };
    enumerate(2, u.two_leg);
    enumerate(3, u.three_leg);
    auto cap_list = [&](std::vector<CategoricalParlay>& v, std::uint64_t salt) {
        if (int(v.size()) <= cap) return;
        std::mt19937_64 rng(splitmix64(seed ^ salt));
        std::shuffle(v.begin(), v.end(), rng);
        v.resize(size_t(cap));
    };
    cap_list(u.two_leg, 0x2);
    cap_list(u.three_leg, 0x3);
    return u;
}

}  // namespace

std::vector<PottsModelStats> run_potts(const PottsExperimentConfig& cfg) {
    const auto universe = build_universe(cfg.k, cfg.parlay_cap, cfg.seed);
    const int m = int(cfg.k.size());

    // per model, pooled per-step losses
    std::vector<std::vector<double>> pooled(3);
    for (auto& v : pooled) v.resize(size_t(cfg.runs) * size_t(cfg.steps));

    parallel_for(cfg.runs, cfg.threads, [&](int run) {
        CategoricalWorld<double> world(cfg.k, cfg.rho, 1.0, 1.0, cfg.jump_rate);
        PottsEngine<double> amm(cfg.k, cfg.eta, cfg.b);
        IndependentCategorical<double> ind(cfg.k, cfg.b);
        CategoricalTrueOracle<double> oracle(&world, cfg.b);

        auto rng_world = make_stream(cfg.seed, std::uint64_t(run), "world");
        auto rng_arrival = make_stream(cfg.seed, std::uint64_t(run), "arrival");
        auto rng_jump = make_stream(cfg.seed, std::uint64_t(run), "jumps");
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const double dt = 1.0 / double(cfg.steps);

        for (int step = 0; step < cfg.steps; ++step) {
            // every traded contract is a categorical parlay; base trades are
            // the 1-leg outcome contracts
            const double mix = unif(rng_arrival);
            const size_t base_offset = size_t(run) * size_t(cfg.steps) + size_t(step);
            const CategoricalParlay* parlay;
            if (mix < cfg.base_weight) {
                const int market = int(rng_arrival() % std::uint64_t(m));
                const int cat = int(rng_arrival() % std::uint64_t(cfg.k[size_t(market)]));
                parlay = &universe.one_leg[size_t(universe.one_leg_offset[market] + cat)];
            } else {
                const bool two = mix < cfg.base_weight + cfg.two_leg_weight;
                const auto& pool = two ? universe.two_leg : universe.three_leg;
                parlay = &pool[size_t(rng_arrival() % pool.size())];
            }
            const double target = joint_categorical_signal(world, *parlay);
            pooled[0][base_offset] = amm.process_parlay_trade(*parlay, target);
            pooled[1][base_offset] = ind.process_parlay_trade(*parlay, target);
            pooled[2][base_offset] = oracle.process_parlay_trade(*parlay, target);
            step_scores(world.base, dt, rng_world);
            jump_step(world, dt, rng_jump);
        }
    });

    const char* names[3] = {"potts_amm", "independent", "true_oracle"};
    std::vector<PottsModelStats> out;
    for (int i = 0; i < 3; ++i) {
        PottsModelStats s;
        s.model = names[i];
        auto samples = pooled[i];
        const auto risk = risk_metrics(samples);
        s.mean = risk.mean;
        s.var95 = risk.var95;
        s.cvar95 = risk.cvar95;
        std::sort(samples.begin(), samples.end());
        const size_t n = samples.size();
        s.median = n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
        out.push_back(s);
    }
    return out;
}

void emit_potts_csv(const std::vector<PottsModelStats>& stats, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "model,mean,median,var95,cvar95\n";
    char buf[64];
    for (const auto& s : stats) {
        out << s.model;
        for (double v : {s.mean, s.median, s.var95, s.cvar95}) {
            std::snprintf(buf, sizeof buf, "%.10g", v);
            out << "," << buf;
        }
        out << "\n";
    }
}

// ---- statistics ----

namespace {

// Regularized incomplete beta via the continued-fraction expansion.
double betacf(double a, double b, double x) {
    const int max_iter = 300;
    const double eps = 3e-14, fpmin = 1e-300;
    const double qab = a + b, qap = a + 1, qam = a - 1;
    double c = 1, d = 1 - qab * x / qap;
    if (std::abs(d) < fpmin) d = fpmin;
    d = 1 / d;
    double h = d;
    for (int it = 1; it <= max_iter; ++it) {
        const int m2 = 2 * it;
        double aa = it * (b - it) * x / ((qam + m2) * (a + m2));
        d = 1 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1 / d;
        h *= d * c;
        aa = -(a + it) * (qab + it) * x / ((a + m2) * (qap + m2));
        d = 1 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1) < eps) break;
    }
    return h;
}

double ibeta(double a, double b, double x) {
    if (x <= 0) return 0;
    if (x >= 1) return 1;
    const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log1p(-x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1) / (a + b + 2)) return bt * betacf(a, b, x) / a;
    return 1 - bt * betacf(b, a, 1 - x) / b;
}

}  // namespace

double paired_t_pvalue_one_sided(const std::vector<double>& diffs) {
    const int n = int(diffs.size());
    if (n < 2) throw std::invalid_argument("paired t: need at least 2 pairs");
    double mean = 0;
    for (double d : diffs) mean += d;
    mean /= n;
    double var = 0;
    for (double d : diffs) var += (d - mean) * (d - mean);
    var /= (n - 1);
    if (var == 0) return mean > 0 ? 0.0 : 1.0;
    const double t = mean / std::sqrt(var / n);
    const double dof = n - 1;
    // one-sided upper tail of Student t
    const double x = dof / (dof + t * t);
    const double tail = 0.5 * ibeta(dof / 2, 0.5, x);
    return t > 0 ? tail : 1 - tail;
}

double sign_test_pvalue(int wins, int n) {
    // P(Bin(n, 1/2) >= wins)
    double p = 0;
    for (int k = wins; k <= n; ++k) {
        const double logc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
        p += std::exp(logc - n * std::log(2.0));
    }
    return std::min(1.0, p);
}

}  // namespace pmm
