#include <doctest.h>

#include <random>

#include "pmm/potts.hpp"
#include "pmm/potts_engine.hpp"

using namespace pmm;

namespace {

PottsParams<double> random_potts(const std::vector<int>& k, std::mt19937_64& rng,
                                 double theta_range = 0.8, double w_range = 0.5) {
    std::uniform_real_distribution<double> ut(-theta_range, theta_range), uw(-w_range, w_range);
    PottsParams<double> p(k);
    for (int i = 0; i < p.m; ++i)
        for (int c = 1; c < k[i]; ++c) p.theta[i][c] = ut(rng);
    for (int i = 0; i < p.m; ++i)
        for (int j = i + 1; j < p.m; ++j)
            for (int a = 1; a < k[i]; ++a)
                for (int c = 1; c < k[j]; ++c) p.w_ref(i, j)(a, c) = uw(rng);
    return p;
}

}  // namespace

TEST_CASE("threshold_init: K=2 gives the zero threshold; K=4 the quartile points") {
    const auto t2 = threshold_init(2, 1.0, 1.0);
    REQUIRE(t2.size() == 1);
    CHECK(t2[0] == doctest::Approx(0.0).epsilon(1e-12));

    const auto t4 = threshold_init(4, 1.0, 1.0);
    REQUIRE(t4.size() == 3);
    CHECK(t4[0] == doctest::Approx(-0.6744897502).epsilon(1e-8));
    CHECK(t4[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(t4[2] == doctest::Approx(0.6744897502).epsilon(1e-8));
    CHECK_THROWS_AS(threshold_init(1, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("categorical_signal: partition of unity and equiprobable start") {
    CategoricalWorld<double> world({3, 4, 5}, 0.3);
    for (int i = 0; i < 3; ++i) {
        const auto p = categorical_signal_vec(world, i);
        CHECK(std::abs(p.sum() - 1.0) < 1e-12);
        for (int c = 0; c < world.categories(i); ++c)
            CHECK(p[c] == doctest::Approx(1.0 / world.categories(i)).epsilon(1e-9));
    }
    // symmetric 2-category split at the midpoint
    CategoricalWorld<double> w2({2, 2}, 0.0);
    CHECK(categorical_signal(w2, 0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(categorical_signal(w2, 0, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("joint_categorical_signal: reductions, independence, partition of unity") {
    CategoricalWorld<double> world({3, 4}, 0.3);
    world.base.scores << 0.4, -0.7;
    CategoricalParlay single{0b01u, {2}};
    CHECK(joint_categorical_signal(world, single) ==
          doctest::Approx(categorical_signal(world, 0, 2)).epsilon(1e-12));

    CategoricalWorld<double> indep({3, 4}, 0.0);
    indep.base.scores << 0.4, -0.7;
    for (int a = 0; a < 3; ++a)
        for (int c = 0; c < 4; ++c) {
            CategoricalParlay p{0b11u, {a, c}};
            CHECK(joint_categorical_signal(indep, p) ==
                  doctest::Approx(categorical_signal(indep, 0, a) *
                                  categorical_signal(indep, 1, c))
                      .epsilon(1e-8));
        }

    // summing over all target vectors partitions unity
    double total = 0;
    for (int a = 0; a < 3; ++a)
        for (int c = 0; c < 4; ++c) total += joint_categorical_signal(world, {0b11u, {a, c}});
    CHECK(total == doctest::Approx(1.0).epsilon(1e-8));

    CategoricalParlay too_big{0b1111u, {0, 0, 0, 0}};
    CategoricalWorld<double> w4({2, 2, 2, 2}, 0.3);
    CHECK_THROWS_AS(joint_categorical_signal(w4, too_big), std::invalid_argument);
}

TEST_CASE("potts_marginals: uniform at zero parameters; K=2 matches the Ising reduction") {
    PottsParams<double> zero({2, 3, 4});
    const auto inf = potts_marginals(zero);
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < zero.k[i]; ++c)
            CHECK(inf.single[i][c] == doctest::Approx(1.0 / zero.k[i]).epsilon(1e-12));

    // binary embedding: theta_i[1] = theta_ising, W[1][1] = W_ising
    std::mt19937_64 rng(3);
    IsingParams<double> ip(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 3; ++i) ip.theta[i] = u(rng);
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) ip.w_ref(i, j) = u(rng);
    PottsParams<double> pp({2, 2, 2});
    for (int i = 0; i < 3; ++i) pp.theta[i][1] = ip.theta[i];
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) pp.w_ref(i, j)(1, 1) = ip.w(i, j);
    const auto pm = potts_marginals(pp);
    const auto im = moments(joint_table(ip));
    for (int i = 0; i < 3; ++i)
        CHECK(pm.single[i][1] == doctest::Approx(im.p_single[i]).epsilon(1e-9));
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j)
            CHECK(pm.pair[pair_index(i, j, 3)](1, 1) ==
                  doctest::Approx(im.p_pair[pair_index(i, j, 3)]).epsilon(1e-9));
}

TEST_CASE("potts BP: chain equals exact enumeration within 1e-9") {
    std::mt19937_64 rng(5);
    std::vector<int> k = {3, 4, 2, 5, 3};
    PottsParams<double> p(k);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    for (int i = 0; i < p.m; ++i)
        for (int c = 1; c < k[i]; ++c) p.theta[i][c] = u(rng);
    for (int i = 0; i + 1 < p.m; ++i)
        for (int a = 1; a < k[i]; ++a)
            for (int c = 1; c < k[i + 1]; ++c) p.w_ref(i, i + 1)(a, c) = u(rng);

    BpOptions tight;
    tight.tol = 1e-13;
    tight.max_iter = 500;
    const auto bp = potts_bp(p, tight);
    const auto exact = potts_exact(p);
    CHECK(bp.converged);
    for (int i = 0; i < p.m; ++i)
        CHECK((bp.single[i] - exact.single[i]).cwiseAbs().maxCoeff() < 1e-9);
    for (int i = 0; i + 1 < p.m; ++i) {
        const int e = pair_index(i, i + 1, p.m);
        CHECK((bp.pair[e] - exact.pair[e]).cwiseAbs().maxCoeff() < 1e-9);
    }
    CHECK(bp.log_z == doctest::Approx(exact.log_z).epsilon(1e-9));
}

TEST_CASE("potts_event_prob: BP clamping agrees with enumeration on a chain") {
    std::mt19937_64 rng(7);
    std::vector<int> k = {3, 3, 3, 3, 3, 3, 3, 3};  // 6561 states -> BP path
    PottsParams<double> p(k);
    std::uniform_real_distribution<double> u(-0.6, 0.6);
    for (int i = 0; i < p.m; ++i)
        for (int c = 1; c < k[i]; ++c) p.theta[i][c] = u(rng);
    for (int i = 0; i + 1 < p.m; ++i)
        for (int a = 1; a < 3; ++a)
            for (int c = 1; c < 3; ++c) p.w_ref(i, i + 1)(a, c) = u(rng);
    REQUIRE(p.state_count() > kPottsExactCutoff);

    // exact reference via a brute enumeration of the same chain
    PottsParams<double> small = p;
    double z = 0, q = 0;
    CategoricalParlay parlay{(1u << 1) | (1u << 5), {2, 1}};
    detail::potts_enumerate(small, [&](const std::vector<int>& x, double e) {
        const double w = std::exp(e);
        z += w;
        if (x[1] == 2 && x[5] == 1) q += w;
    });
    BpOptions tight;
    tight.tol = 1e-13;
    tight.max_iter = 500;
    CHECK(potts_event_prob(p, parlay, tight) == doctest::Approx(q / z).epsilon(1e-8));
}

TEST_CASE("potts_sgd_step: zero at match, finite differences, pinning preserved") {
    std::mt19937_64 rng(11);
    const std::vector<int> k = {2, 3, 4};
    auto params = random_potts(k, rng);
    CategoricalParlay parlay{0b101u, {1, 2}};

    const double q = potts_event_prob(params, parlay);
    auto copy = params;
    potts_sgd_step(copy, parlay, q, 0.2, 0.2);
    for (int i = 0; i < 3; ++i)
        CHECK((copy.theta[i] - params.theta[i]).cwiseAbs().maxCoeff() < 1e-12);

    // finite differences of CE(0.3, q(params)) on free coordinates
    const double target = 0.3;
    auto ce = [&](const PottsParams<double>& pp) {
        const double qq = potts_event_prob(pp, parlay);
        return -target * std::log(qq) - (1 - target) * std::log(1 - qq);
    };
    const auto g = potts_grad_ce(params, parlay, target);
    const double h = 1e-5;
    for (int i = 0; i < 3; ++i)
        for (int c = 1; c < k[i]; ++c) {
            auto up = params, dn = params;
            up.theta[i][c] += h;
            dn.theta[i][c] -= h;
            const double fd = (ce(up) - ce(dn)) / (2 * h);
            CHECK(std::abs(g.theta[i][c] - fd) / std::max(std::abs(fd), 1e-7) < 1e-5);
        }
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j)
            for (int a = 1; a < k[i]; ++a)
                for (int c = 1; c < k[j]; ++c) {
                    auto up = params, dn = params;
                    up.w_ref(i, j)(a, c) += h;
                    dn.w_ref(i, j)(a, c) -= h;
                    const double fd = (ce(up) - ce(dn)) / (2 * h);
                    CHECK(std::abs(g.w[pair_index(i, j, 3)](a, c) - fd) /
                              std::max(std::abs(fd), 1e-7) <
                          1e-5);
                }

    // identifiability after many random steps
    std::uniform_real_distribution<double> ut(0.05, 0.95);
    auto live = params;
    for (int step = 0; step < 10000; ++step) {
        CategoricalParlay pl{0b011u, {int(rng() % 2), int(rng() % 3)}};
        potts_sgd_step(live, pl, ut(rng), 0.1, 0.1);
    }
    for (int i = 0; i < 3; ++i) CHECK(live.theta[i][0] == 0.0);
    for (const auto& wm : live.w) {
        CHECK(wm.row(0).cwiseAbs().maxCoeff() == 0.0);
        CHECK(wm.col(0).cwiseAbs().maxCoeff() == 0.0);
    }
    for (int i = 0; i < 3; ++i) CHECK(live.theta[i].allFinite());
}

TEST_CASE("parameter count: reference pinning leaves the stated free dimensions") {
    PottsParams<double> p({2, 3, 4, 4, 5});
    int expect = 0;
    const std::vector<int> k = {2, 3, 4, 4, 5};
    for (int i = 0; i < 5; ++i) expect += k[i] - 1;
    for (int i = 0; i < 5; ++i)
        for (int j = i + 1; j < 5; ++j) expect += (k[i] - 1) * (k[j] - 1);
    CHECK(p.free_param_count() == expect);
}

TEST_CASE("kstate book: no-op fill, binary equivalence, bounded loss") {
    KStateBook<double> book(3, 5.0);
    const auto p0 = book.prices();
    CHECK(std::abs(p0.sum() - 1.0) < 1e-12);
    CHECK(kstate_fill_to_target(book, p0) == doctest::Approx(0.0).epsilon(1e-12));

    // K = 2 fills cost exactly what the scalar binary book charges
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> up(0.05, 0.95);
    KStateBook<double> k2(2, 7.0);
    BinaryBook<double> bin(7.0);
    for (int t = 0; t < 50; ++t) {
        const double target = up(rng);
        Vec<double> dist(2);
        dist << 1 - target, target;
        const double cash_k = kstate_fill_to_target(k2, dist);
        const double cash_b = fill_to_price(bin, target).cash;
        CHECK(cash_k == doctest::Approx(cash_b).epsilon(1e-10));
        CHECK(k2.prices()[1] == doctest::Approx(price(bin)).epsilon(1e-12));
    }

    // worst-case settlement loss <= b ln K over adversarial sequences
    const double b = 2.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int K = 2 + int(rng() % 4);
        KStateBook<double> bk(K, b);
        const int n = 1 + int(rng() % 12);
        for (int t = 0; t < n; ++t) {
            Vec<double> target(K);
            for (int c = 0; c < K; ++c) target[c] = 0.01 + up(rng);
            target /= target.sum();
            kstate_fill_to_target(bk, target);
        }
        for (int w = 0; w < K; ++w)
            CHECK(kstate_settle(bk, w) <= b * std::log(double(K)) + 1e-9);
    }
}

TEST_CASE("jump_step: zero rate preserves paths; jumps land on thresholds") {
    CategoricalWorld<double> a({3, 4}, 0.3, 1.0, 1.0, 0.0);
    CategoricalWorld<double> b({3, 4}, 0.3, 1.0, 1.0, 0.0);
    std::mt19937_64 ra(17), rb(17), rj(18);
    for (int t = 0; t < 100; ++t) {
        step_scores(a.base, 0.002, ra);
        step_scores(b.base, 0.002, rb);
        jump_step(a, 0.002, rj);  // rate 0: consumes nothing, changes nothing
    }
    CHECK((a.base.scores - b.base.scores).cwiseAbs().maxCoeff() == 0.0);

    CategoricalWorld<double> c({4}, 0.0, 1.0, 1.0, 0.5);
    std::mt19937_64 rc(19);
    long jumps = 0;
    const int steps = 100000;
    for (int t = 0; t < steps; ++t) {
        const double before = c.base.scores[0];
        jump_step(c, 0.001, rc);
        if (c.base.scores[0] != before) {
            bool on_threshold = false;
            for (int k = 0; k < c.taus[0].size(); ++k)
                if (c.base.scores[0] == c.taus[0][k]) on_threshold = true;
            CHECK(on_threshold);
            ++jumps;
            c.base.scores[0] = before + 0.37;  // move off the threshold set
        }
    }
    // Poisson(0.5) per step; a jump is observable unless the score already
    // sits on the chosen threshold, so the observed rate tracks
    // P(N >= 1) = 1 - e^{-0.5} within 3 sigma.
    const double p_observable = 1 - std::exp(-0.5);
    const double se = std::sqrt(p_observable * (1 - p_observable) / steps);
    CHECK(std::abs(double(jumps) / steps - p_observable) < 3 * se + 1e-3);
}

TEST_CASE("potts engine: shadow sync holds and quotes stay coherent") {
    std::mt19937_64 rng(23);
    PottsEngine<double> eng({2, 3, 3}, 0.2, 10.0);
    std::uniform_real_distribution<double> up(0.05, 0.95);
    std::vector<CategoricalParlay> parlays = {
        {0b011u, {1, 2}}, {0b110u, {0, 2}}, {0b111u, {1, 1, 1}}};
    for (const auto& p : parlays) eng.quote_parlay(p);
    for (int t = 0; t < 50; ++t) {
        if (t % 2 == 0) {
            Vec<double> target(eng.params.k[t % 3]);
            for (int c = 0; c < target.size(); ++c) target[c] = 0.05 + up(rng);
            target /= target.sum();
            eng.process_base_trade(t % 3, target);
        } else {
            eng.process_parlay_trade(parlays[size_t(t) % parlays.size()], up(rng));
        }
        // books mirror the model after every trade
        const auto inf = potts_exact(eng.params);
        for (int i = 0; i < 3; ++i)
            CHECK((eng.base_books[i].prices() - inf.single[i]).cwiseAbs().maxCoeff() < 1e-9);
        for (const auto& p : parlays)
            CHECK(std::abs(eng.quote_parlay(p) - potts_event_prob(eng.params, p)) < 1e-9);
    }
}
