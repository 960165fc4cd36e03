#include <doctest.h>

#include <cmath>
#include <random>

#include "pmm/world.hpp"

using namespace pmm;

TEST_CASE("step_scores: dt = 0 leaves scores unchanged; horizon enforced") {
    GaussianWorld<double> world(3, 0.3);
    std::mt19937_64 rng(1);
    const VecXd before = world.scores;
    step_scores(world, 0.0, rng);
    CHECK((world.scores - before).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(step_scores(world, 1.5, rng), std::invalid_argument);
}

TEST_CASE("step_scores: sample covariance of increments matches sigma_i sigma_j rho_ij dt") {
    const double rho = 0.3, dt = 0.01;
    GaussianWorld<double> world(3, rho);
    std::mt19937_64 rng(2);
    const int n = 100000;
    Eigen::Matrix3d acc = Eigen::Matrix3d::Zero();
    for (int k = 0; k < n; ++k) {
        GaussianWorld<double> w = world;
        step_scores(w, dt, rng);
        const VecXd d = w.scores;
        acc += d * d.transpose();
    }
    acc /= n;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double expect = (i == j ? 1.0 : rho) * dt;
            const double se = dt * std::sqrt((1.0 + (i == j ? 2.0 : rho * rho)) / n) * 2;
            CHECK(std::abs(acc(i, j) - expect) < 3 * se + 3e-4 * dt);
        }
}

TEST_CASE("step_scores: identity correlation gives uncorrelated increments") {
    GaussianWorld<double> world(2, 0.0);
    std::mt19937_64 rng(3);
    const int n = 100000;
    double sxy = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
    for (int k = 0; k < n; ++k) {
        GaussianWorld<double> w = world;
        step_scores(w, 1.0, rng);
        sx += w.scores[0];
        sy += w.scores[1];
        sxy += w.scores[0] * w.scores[1];
        sxx += w.scores[0] * w.scores[0];
        syy += w.scores[1] * w.scores[1];
    }
    const double n_ = n;
    const double corr = (sxy / n_ - sx / n_ * sy / n_) /
                        std::sqrt((sxx / n_ - sx * sx / n_ / n_) * (syy / n_ - sy * sy / n_ / n_));
    CHECK(std::abs(corr) < 0.01);
}

TEST_CASE("base_signal: threshold cases and monotonicity") {
    GaussianWorld<double> world(2, 0.3);
    CHECK(base_signal(world, 0) == doctest::Approx(0.5).epsilon(1e-14));
    world.scores[0] = 1.0;  // sigma sqrt(T - t) = 1
    CHECK(base_signal(world, 0) == doctest::Approx(0.8413447461).epsilon(1e-9));
    double prev = 0;
    for (double s = -3; s <= 3; s += 0.25) {
        world.scores[0] = s;
        const double p = base_signal(world, 0);
        CHECK(p > prev);
        prev = p;
    }
}

TEST_CASE("parlay_signal: reductions and the bivariate arcsine identity") {
    GaussianWorld<double> world(2, 0.3);
    CHECK(parlay_signal(world, MarketId{0b01u}) == doctest::Approx(base_signal(world, 0)));

    GaussianWorld<double> indep(2, 0.0);
    CHECK(parlay_signal(indep, MarketId{0b11u}) == doctest::Approx(0.25).epsilon(1e-12));

    // rho = 0.3, both legs at threshold: 1/4 + arcsin(0.3) / (2 pi)
    const double expect = 0.25 + std::asin(0.3) / (2 * M_PI);
    CHECK(parlay_signal(world, MarketId{0b11u}) == doctest::Approx(expect).epsilon(1e-9));
    CHECK(expect == doctest::Approx(0.29855).epsilon(1e-4));
}

TEST_CASE("parlay_signal: QMC path agrees with quadrature on equicorrelated instances") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> urho(0.05, 0.8), us(-1.5, 1.5);
    int checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int m = 2 + int(rng() % 3);
        const double rho = urho(rng);
        GaussianWorld<double> world(m, rho);
        for (int i = 0; i < m; ++i) world.scores[i] = us(rng);
        std::uint32_t mask = 1 + rng() % ((1u << m) - 1);
        if (popcount(mask) < 2) mask = (1u << m) - 1;
        std::vector<int> legs;
        std::vector<double> w;
        for (int i = 0; i < m; ++i)
            if (mask >> i & 1u) {
                legs.push_back(i);
                w.push_back(standardized_margin(world, i, world.scores));
            }
        const double quad = orthant_equicorr(w, rho);
        const auto qmc = orthant_qmc(world.chol, legs, w, world.qmc_seed);
        CHECK(std::abs(qmc.value - quad) <= 3 * qmc.std_error + 2e-4);
        ++checked;
    }
    CHECK(checked == 100);
}

TEST_CASE("noisy_signal: stays in (0,1) and centers on the informed signal") {
    GaussianWorld<double> world(2, 0.3);
    world.scores << 0.4, -0.2;
    std::mt19937_64 rng(7);
    const double informed = base_signal(world, 0);
    int above = 0;
    const int n = 20000;
    for (int k = 0; k < n; ++k) {
        const double p = noisy_signal(world, MarketId{0b01u}, rng);
        CHECK(p > 0);
        CHECK(p < 1);
        if (p > informed) ++above;
    }
    // median of the noisy signal is the informed signal (monotone map of a
    // centered Gaussian perturbation)
    CHECK(std::abs(above / double(n) - 0.5) < 3 * 0.5 / std::sqrt(double(n)) + 0.01);
}

TEST_CASE("true_joint: product case, normalization, cross-check vs parlay_signal") {
    GaussianWorld<double> indep(3, 0.0);
    indep.scores << 0.3, -0.4, 1.0;
    const auto table = true_joint(indep);
    CHECK(std::abs(table.probs.sum() - 1.0) < 1e-10);
    for (std::uint32_t x = 0; x < 8; ++x) {
        double expect = 1;
        for (int i = 0; i < 3; ++i) {
            const double p = base_signal(indep, i);
            expect *= (x >> i & 1u) ? p : 1 - p;
        }
        CHECK(table.probs[x] == doctest::Approx(expect).epsilon(1e-10));
    }

    GaussianWorld<double> world(2, 0.3);
    world.scores << 0.2, 0.5;
    const auto t2 = true_joint(world);
    CHECK(t2.probs[3] == doctest::Approx(parlay_signal(world, MarketId{0b11u})).epsilon(1e-8));
    CHECK(std::abs(t2.probs.sum() - 1.0) < 1e-10);
}

TEST_CASE("true_joint: marginal sums reproduce parlay_signal within 1e-8") {
    GaussianWorld<double> world(4, 0.3);
    world.scores << 0.1, -0.6, 0.9, 0.2;
    const auto table = true_joint(world);
    for (std::uint32_t mask = 1; mask < 16; ++mask) {
        const double from_table = event_prob(table, mask);
        const double direct = parlay_signal(world, MarketId{mask});
        CHECK(from_table == doctest::Approx(direct).epsilon(1e-8));
    }
}

TEST_CASE("sample_arrival: alpha extremes and uniform market frequencies") {
    GaussianWorld<double> world(3, 0.3);
    const auto family = make_family(3, Family::complete);
    std::mt19937_64 rng(11);
    for (int k = 0; k < 50; ++k) {
        CHECK(sample_arrival(world, family, 0.0, rng).kind == TraderKind::informed);
        CHECK(sample_arrival(world, family, 1.0, rng).kind == TraderKind::noise);
    }
    // chi-square uniformity over 7 markets at 1e5 draws
    const int n = 100000;
    std::vector<int> counts(family.size(), 0);
    for (int k = 0; k < n; ++k) {
        const auto a = sample_arrival(world, family, 0.0, rng);
        for (size_t idx = 0; idx < family.size(); ++idx)
            if (family[idx].legs == a.market.legs) ++counts[idx];
    }
    double chi2 = 0;
    const double expect = double(n) / family.size();
    for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
    // Wilson-Hilferty bound at ~3.1 sigma for dof = 6
    const double dof = 6;
    const double crit = dof * std::pow(1 - 2 / (9 * dof) + 3.1 * std::sqrt(2 / (9 * dof)), 3);
    CHECK(chi2 < crit);
}

TEST_CASE("resolve: degenerate thresholds and frequency match against true_joint") {
    GaussianWorld<double> world(3, 0.3);
    world.thresholds = VecXd::Constant(3, -1e9);
    std::mt19937_64 rng(13);
    CHECK(resolve(world, rng) == 0b111u);

    GaussianWorld<double> w2(2, 0.3);
    w2.scores << 0.3, -0.1;
    const auto table = true_joint(w2);
    const int n = 100000;
    std::vector<int> counts(4, 0);
    for (int k = 0; k < n; ++k) ++counts[resolve(w2, rng)];
    for (int x = 0; x < 4; ++x) {
        const double p = table.probs[x];
        const double se = std::sqrt(p * (1 - p) / n);
        CHECK(std::abs(counts[x] / double(n) - p) < 3 * se + 1e-3);
    }

    // at t = T resolution is the deterministic threshold of current scores
    GaussianWorld<double> w3(2, 0.3);
    w3.t = w3.horizon;
    w3.scores << 1.0, -1.0;
    CHECK(resolve(w3, rng) == 0b01u);
}

TEST_CASE("seed determinism: identical seeds give identical paths and arrivals") {
    const auto family = make_family(3, Family::complete);
    auto run = [&](std::uint64_t seed) {
        GaussianWorld<double> world(3, 0.3);
        std::mt19937_64 rng(seed);
        std::vector<double> log;
        for (int k = 0; k < 20; ++k) {
            step_scores(world, 0.01, rng);
            const auto a = sample_arrival(world, family, 0.3, rng);
            log.push_back(double(a.market.legs));
            log.push_back(a.target);
            log.insert(log.end(), world.scores.data(), world.scores.data() + 3);
        }
        return log;
    };
    CHECK(run(99) == run(99));
    CHECK(run(99) != run(100));
}

TEST_CASE("static mode: frozen world yields constant informed signals") {
    GaussianWorld<double> world(3, 0.3);
    world.scores << 0.5, -0.2, 0.1;
    const double p1 = parlay_signal(world, MarketId{0b101u});
    for (int k = 0; k < 5; ++k)
        CHECK(parlay_signal(world, MarketId{0b101u}) == doctest::Approx(p1).epsilon(1e-15));
}

TEST_CASE("true_moments: consistency with signals") {
    GaussianWorld<double> world(3, 0.3);
    world.scores << 0.2, 0.0, -0.5;
    const auto mv = true_moments(world);
    for (int i = 0; i < 3; ++i) CHECK(mv.p_single[i] == doctest::Approx(base_signal(world, i)));
    CHECK(mv.p_pair[pair_index(0, 1, 3)] ==
          doctest::Approx(parlay_signal(world, MarketId{0b011u})));
}
