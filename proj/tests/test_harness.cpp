#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "pmm/harness.hpp"

using namespace pmm;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("risk_metrics: stated rank convention and degenerate samples") {
    std::vector<double> losses;
    for (int i = 1; i <= 100; ++i) losses.push_back(double(i));
    std::mt19937_64 rng(3);
    std::shuffle(losses.begin(), losses.end(), rng);
    const auto r = risk_metrics(losses);
    CHECK(r.var95 == doctest::Approx(95.0));
    CHECK(r.cvar95 == doctest::Approx((95 + 96 + 97 + 98 + 99 + 100) / 6.0));
    CHECK(r.cvar95 == doctest::Approx(97.5));

    const auto c = risk_metrics(std::vector<double>(17, 3.25));
    CHECK(c.mean == doctest::Approx(3.25));
    CHECK(c.var95 == doctest::Approx(3.25));
    CHECK(c.cvar95 == doctest::Approx(3.25));

    CHECK_THROWS_AS(risk_metrics({}), std::invalid_argument);

    // cvar dominates var on random samples
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> xs;
        for (int i = 0; i < 200; ++i) xs.push_back(u(rng));
        const auto m = risk_metrics(xs);
        CHECK(m.cvar95 >= m.var95);
        CHECK(m.var95 >= m.mean);  // 95th percentile above the mean for these draws
    }
}

TEST_CASE("emit_csv: header-only empty table, byte-identical re-emission, parse-back") {
    const std::string path = "/tmp/pmm_test_metrics.csv";
    emit_csv({}, path);
    CHECK(slurp(path) ==
          "m,n_markets,mean_loss,ratio,loss_x_2m,total_per_round,var95,cvar95\n");

    MetricsTable table;
    MetricsRow row;
    row.m = 4;
    row.n_markets = 15;
    row.mean_loss = 0.0123456789123;
    row.halving_ratio = 0.5;
    row.loss_x_2m = 0.19753086;
    row.total_per_round = 0.1851851837;
    row.var95 = 0.025;
    row.cvar95 = 0.0314159;
    table.push_back(row);
    emit_csv(table, path);
    const std::string first = slurp(path);
    emit_csv(table, path);
    CHECK(slurp(path) == first);

    std::vector<std::string> header;
    const auto rows = parse_csv(path, &header);
    REQUIRE(rows.size() == 1);
    CHECK(header.size() == 8);
    CHECK(rows[0][0] == doctest::Approx(4.0));
    CHECK(rows[0][2] == doctest::Approx(row.mean_loss).epsilon(1e-9));
    CHECK(rows[0][7] == doctest::Approx(row.cvar95).epsilon(1e-9));
}

TEST_CASE("config: JSON round trip preserves every field") {
    ExperimentConfig cfg;
    cfg.m_values = {3, 5};
    cfg.rho = 0.25;
    cfg.alpha = 0.5;
    cfg.runs = 7;
    cfg.rounds = 42;
    cfg.world_mode = "static";
    cfg.family = "base_pairs";
    cfg.noise_model = "score_perturbation";
    cfg.model = "independent_lmsr";
    cfg.seed = 99;
    const auto restored = ExperimentConfig::from_json(cfg.to_json());
    CHECK(restored.to_json() == cfg.to_json());
    CHECK_THROWS_AS(ExperimentConfig::from_json({{"runs", 0}}), std::invalid_argument);
}

TEST_CASE("determinism: identical config and seed give byte-identical CSV") {
    ExperimentConfig cfg;
    cfg.m_values = {3, 4};
    cfg.runs = 6;
    cfg.rounds = 40;
    cfg.threads = 2;
    const auto t1 = run_scaling(cfg);
    emit_csv(t1, "/tmp/pmm_scaling_a.csv");
    const auto t2 = run_scaling(cfg);
    emit_csv(t2, "/tmp/pmm_scaling_b.csv");
    CHECK(slurp("/tmp/pmm_scaling_a.csv") == slurp("/tmp/pmm_scaling_b.csv"));
    // a different seed changes the output
    cfg.seed += 1;
    const auto t3 = run_scaling(cfg);
    CHECK(t3[0].mean_loss != t1[0].mean_loss);
}

TEST_CASE("scaling table: accounting identity and quantile consistency") {
    ExperimentConfig cfg;
    cfg.m_values = {4};
    cfg.runs = 10;
    cfg.rounds = 60;
    const auto table = run_scaling(cfg);
    REQUIRE(table.size() == 1);
    const auto& row = table[0];
    CHECK(row.n_markets == 15);
    // per-market attribution times the family size equals the per-round total
    CHECK(row.mean_loss * double(row.n_markets) ==
          doctest::Approx(row.total_per_round).epsilon(1e-12));
    CHECK(row.cvar95 >= row.var95);
    CHECK(row.loss_x_2m == doctest::Approx(row.mean_loss * 16).epsilon(1e-12));
}

TEST_CASE("noise sweep: alpha = 0 matches the scaling run under the same seed") {
    ExperimentConfig cfg;
    cfg.m_values = {4};
    cfg.runs = 8;
    cfg.rounds = 50;
    const auto table = run_scaling(cfg);
    const auto sweep = run_noise_sweep(cfg, 4, {0.0, 0.5});
    CHECK(sweep[0].mean_loss == doctest::Approx(table[0].mean_loss).epsilon(1e-12));
    CHECK(sweep[1].alpha == 0.5);
}

TEST_CASE("convergence curves: both decrease; parameter error mirrors the engine") {
    ExperimentConfig cfg;
    cfg.runs = 10;
    cfg.rounds = 300;
    cfg.world_mode = "static";
    const auto curves = run_convergence(cfg, 4);
    REQUIRE(int(curves.price_mae.size()) == cfg.rounds);
    // decreasing after smoothing: compare block means
    auto block = [&](const std::vector<double>& v, int lo, int hi) {
        double acc = 0;
        for (int t = lo; t < hi; ++t) acc += v[size_t(t)];
        return acc / (hi - lo);
    };
    CHECK(block(curves.price_mae, 250, 300) < block(curves.price_mae, 0, 50));
    CHECK(block(curves.param_err, 250, 300) < block(curves.param_err, 0, 50));
    emit_convergence_csv(curves, "/tmp/pmm_conv.csv");
    std::vector<std::string> header;
    const auto rows = parse_csv("/tmp/pmm_conv.csv", &header);
    CHECK(header == std::vector<std::string>{"round", "price_mae", "price_mae_std", "param_err"});
    CHECK(rows.size() == size_t(cfg.rounds));
}

TEST_CASE("statistics: paired t and sign test reference values") {
    // t distribution sanity: symmetric diffs give p ~ 0.5
    std::vector<double> diffs;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int i = 0; i < 400; ++i) diffs.push_back(g(rng));
    const double p_null = paired_t_pvalue_one_sided(diffs);
    CHECK(p_null > 0.05);
    CHECK(p_null < 0.95);
    for (auto& d : diffs) d += 1.0;
    CHECK(paired_t_pvalue_one_sided(diffs) < 1e-6);

    // sign test: exact binomial tails
    CHECK(sign_test_pvalue(0, 100) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sign_test_pvalue(59, 100) == doctest::Approx(0.0443).epsilon(2e-2));
    CHECK(sign_test_pvalue(58, 100) > 0.05);
    CHECK(sign_test_pvalue(59, 100) < 0.05);
    CHECK(sign_test_pvalue(100, 100) < 1e-25);
}

TEST_CASE("potts experiment: smoke run keeps ordering potts <= independent") {
    PottsExperimentConfig cfg;
    cfg.k = {2, 3, 3};
    cfg.runs = 6;
    cfg.steps = 80;
    cfg.threads = 2;
    const auto stats = run_potts(cfg);
    REQUIRE(stats.size() == 3);
    CHECK(stats[0].model == "potts_amm");
    CHECK(stats[1].model == "independent");
    CHECK(stats[2].model == "true_oracle");
    CHECK(std::abs(stats[2].mean) < 1e-10);  // true oracle quotes the truth
    CHECK(stats[0].mean > 0.0);
    CHECK(stats[1].mean > 0.0);  // bracketing at scale is the acceptance suite's job
    emit_potts_csv(stats, "/tmp/pmm_potts.csv");
    CHECK(slurp("/tmp/pmm_potts.csv").rfind("model,mean,median,var95,cvar95\n", 0) == 0);
}
