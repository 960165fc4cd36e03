#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "pmm/core.hpp"
#include "pmm/engine.hpp"
#include "pmm/ising.hpp"
#include "pmm/quadrature.hpp"
#include "pmm/rng.hpp"

namespace pmm {

enum class TraderKind { informed, noise };

struct TraderArrival {
    MarketId market;
    TraderKind kind = TraderKind::informed;
    double target = 0.5;
};

enum class NoiseModel { score_perturbation, uniform_price };

// Correlated arithmetic Brownian scores S_i with per-event thresholds K_i:
// event i resolves YES iff S_i(T) > K_i. Equicorrelated instances price
// orthants by one-factor Gauss-Hermite quadrature; general correlation uses
// a fixed-seed lattice QMC rule.
template <typename Scalar>
struct GaussianWorld {
    int m = 0;
    Vec<Scalar> sigma;      // score volatility per sqrt(time)
    Mat<Scalar> rho;        // correlation of the driving Brownian motions
    Vec<Scalar> thresholds; // K_i
    Scalar horizon = 1;     // T
    Vec<Scalar> scores;     // S_t
    Scalar t = 0;

    Mat<Scalar> chol;  // factor L with rho = L L^T
    bool equicorr = false;
    Scalar rho_scalar = 0;
    std::uint64_t qmc_seed = 0x51a77e5d5f3ull;

    GaussianWorld() = default;

    // Equicorrelated world with the simulation defaults: sigma = 1, K = 0.
    GaussianWorld(int m_, Scalar rho_, Scalar horizon_ = Scalar(1))
        : m(m_),
          sigma(Vec<Scalar>::Ones(m_)),
          thresholds(Vec<Scalar>::Zero(m_)),
          horizon(horizon_),
          scores(Vec<Scalar>::Zero(m_)),
          equicorr(true),
          rho_scalar(rho_) {
        rho = Mat<Scalar>::Constant(m_, m_, rho_);
        rho.diagonal().setOnes();
        factorize();
    }

    GaussianWorld(Vec<Scalar> sigma_, Mat<Scalar> rho_, Vec<Scalar> thresholds_, Scalar horizon_)
        : m(int(sigma_.size())),
          sigma(std::move(sigma_)),
          rho(std::move(rho_)),
          thresholds(std::move(thresholds_)),
          horizon(horizon_),
          scores(Vec<Scalar>::Zero(m)) {
        detect_equicorr();
        factorize();
    }

    void detect_equicorr() {
        equicorr = true;
        rho_scalar = m > 1 ? rho(0, 1) : Scalar(0);
        for (int i = 0; i < m && equicorr; ++i)
            for (int j = 0; j < m; ++j) {
                const Scalar expect = i == j ? Scalar(1) : rho_scalar;
                if (std::abs(rho(i, j) - expect) > Scalar(1e-12)) {
                    equicorr = false;
                    break;
                }
            }
        if (equicorr && rho_scalar < Scalar(0)) equicorr = false;  // factor form needs rho >= 0
    }

    void factorize() {
        Eigen::LLT<Mat<Scalar>> llt(rho);
        if (llt.info() == Eigen::Success) {
            chol = llt.matrixL();
            return;
        }
        // Semi-definite fallback (e.g. perfectly correlated legs).
        Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(rho);
        Vec<Scalar> ev = es.eigenvalues();
        for (int i = 0; i < m; ++i) {
            if (ev[i] < Scalar(-1e-10)) throw std::invalid_argument("rho is not positive semidefinite");
            ev[i] = std::max(ev[i], Scalar(0));
        }
        chol = es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
    }

    Scalar time_left() const { return horizon - t; }
};

template <typename Scalar>
void step_scores(GaussianWorld<Scalar>& world, Scalar dt, std::mt19937_64& rng) {
    if (world.t + dt > world.horizon + Scalar(1e-12))
        throw std::invalid_argument("step_scores: stepping past the horizon");
    if (dt == Scalar(0)) return;
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec<Scalar> xi(world.m);
    for (int i = 0; i < world.m; ++i) xi[i] = Scalar(normal(rng));
    world.scores += std::sqrt(dt) * (world.sigma.array() * (world.chol * xi).array()).matrix();
    world.t += dt;
}

// Standardized distance to threshold: P(YES) = Phi(-w_i).
template <typename Scalar>
Scalar standardized_margin(const GaussianWorld<Scalar>& world, int i, const Vec<Scalar>& scores) {
    const Scalar tau = world.time_left();
    if (tau <= Scalar(0)) {
        return scores[i] > world.thresholds[i] ? Scalar(-std::numeric_limits<Scalar>::infinity())
                                               : Scalar(std::numeric_limits<Scalar>::infinity());
    }
    return (world.thresholds[i] - scores[i]) / (world.sigma[i] * std::sqrt(tau));
}

template <typename Scalar>
Scalar base_signal_at(const GaussianWorld<Scalar>& world, int i, const Vec<Scalar>& scores) {
    const Scalar tau = world.time_left();
    if (tau <= Scalar(0)) return scores[i] > world.thresholds[i] ? Scalar(1) : Scalar(0);
    return norm_cdf(-standardized_margin(world, i, scores));
}

template <typename Scalar>
Scalar base_signal(const GaussianWorld<Scalar>& world, int i) {
    return base_signal_at(world, i, world.scores);
}

struct OrthantResult {
    double value = 0;
    double std_error = 0;  // zero for quadrature
    bool used_qmc = false;
};

// P(∩_{i in legs} Z_i > w_i) for equicorrelated standard normals via the
// one-factor representation Z_i = sqrt(rho) U + sqrt(1-rho) V_i.
template <typename Scalar>
Scalar orthant_equicorr(const std::vector<Scalar>& w, Scalar rho) {
    if (w.empty()) return Scalar(1);
    if (rho == Scalar(0)) {
        Scalar p = 1;
        for (Scalar wi : w) p *= norm_cdf(-wi);
        return p;
    }
    if (rho >= Scalar(1) - Scalar(1e-14)) {
        Scalar wmax = w[0];
        for (Scalar wi : w) wmax = std::max(wmax, wi);
        return norm_cdf(-wmax);
    }
    const auto& gh = GaussHermite<Scalar>::standard();
    const Scalar sr = std::sqrt(rho), sc = std::sqrt(Scalar(1) - rho);
    Scalar acc = 0;
    for (int k = 0; k < gh.nodes.size(); ++k) {
        const Scalar u = gh.nodes[k];
        Scalar prod = 1;
        for (Scalar wi : w) prod *= norm_cdf((sr * u - wi) / sc);
        acc += gh.weights[k] * prod;
    }
    return acc;
}

// General-correlation orthant probability via randomized lattice QMC with a
// fixed seed; the point set depends only on (dim, seed), so repeated queries
// are deterministic.
template <typename Scalar>
OrthantResult orthant_qmc(const Mat<Scalar>& chol, const std::vector<int>& legs,
                          const std::vector<Scalar>& w, std::uint64_t seed,
                          std::uint64_t n_points = 1u << 16, int shifts = 8) {
    const int d = int(chol.rows());
    LatticeRule<double> rule(d, n_points, shifts, seed);
    Eigen::MatrixXd L = chol.template cast<double>();
    std::vector<double> z(d);
    auto f = [&](const std::vector<double>& u) -> double {
        for (int j = 0; j < d; ++j) {
            double uj = u[j];
            // keep the quantile finite
            uj = std::min(std::max(uj, 1e-12), 1.0 - 1e-12);
            z[j] = norm_quantile(uj);
        }
        for (size_t a = 0; a < legs.size(); ++a) {
            double zi = 0;
            const int i = legs[a];
            for (int j = 0; j <= i; ++j) zi += L(i, j) * z[j];
            if (!(zi > double(w[a]))) return 0.0;
        }
        return 1.0;
    };
    const QmcEstimate est = qmc_mean(rule, f);
    return {est.value, est.std_error, true};
}

// Exact conditional parlay probability P(∩_{i in S} {S_i(T) > K_i} | S_t).
template <typename Scalar>
OrthantResult parlay_signal_at(const GaussianWorld<Scalar>& world, std::uint32_t legs_mask,
                               const Vec<Scalar>& scores) {
    std::vector<int> legs;
    std::vector<Scalar> w;
    for (int i = 0; i < world.m; ++i)
        if (legs_mask >> i & 1u) {
            legs.push_back(i);
            w.push_back(standardized_margin(world, i, scores));
        }
    if (legs.empty()) throw std::invalid_argument("parlay_signal: empty leg set");
    if (world.time_left() <= Scalar(0)) {
        double p = 1;
        for (size_t a = 0; a < legs.size(); ++a)
            p *= scores[legs[a]] > world.thresholds[legs[a]] ? 1.0 : 0.0;
        return {p, 0.0, false};
    }
    if (legs.size() == 1) return {double(norm_cdf(-w[0])), 0.0, false};
    if (world.equicorr) return {double(orthant_equicorr(w, world.rho_scalar)), 0.0, false};
    return orthant_qmc(world.chol, legs, w, world.qmc_seed);
}

template <typename Scalar>
Scalar parlay_signal(const GaussianWorld<Scalar>& world, MarketId id) {
    return Scalar(parlay_signal_at(world, id.legs, world.scores).value);
}

// Signal computed at independently perturbed scores, epsilon_i ~
// N(0, sigma_i^2 (T - t)).
template <typename Scalar>
Scalar noisy_signal(const GaussianWorld<Scalar>& world, MarketId id, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const Scalar tau = world.time_left();
    Vec<Scalar> perturbed = world.scores;
    for (int i = 0; i < world.m; ++i)
        perturbed[i] += world.sigma[i] * std::sqrt(std::max(tau, Scalar(0))) * Scalar(normal(rng));
    return clamp_prob(Scalar(parlay_signal_at(world, id.legs, perturbed).value));
}

// Exact joint outcome distribution implied by the current scores.
template <typename Scalar>
JointTable<Scalar> true_joint(const GaussianWorld<Scalar>& world) {
    detail::check_exact_dim(world.m);
    const int m = world.m;
    const std::uint32_t n = std::uint32_t(1) << m;
    JointTable<Scalar> table;
    table.m = m;
    table.probs = Vec<Scalar>::Zero(n);

    if (world.time_left() <= Scalar(0)) {
        std::uint32_t mask = 0;
        for (int i = 0; i < m; ++i)
            if (world.scores[i] > world.thresholds[i]) mask |= std::uint32_t(1) << i;
        table.probs[mask] = Scalar(1);
        return table;
    }

    std::vector<Scalar> w(m);
    for (int i = 0; i < m; ++i) w[i] = standardized_margin(world, i, world.scores);

    if (world.equicorr && world.rho_scalar < Scalar(1) - Scalar(1e-14)) {
        const auto& gh = GaussHermite<Scalar>::standard();
        const Scalar sr = std::sqrt(std::max(world.rho_scalar, Scalar(0)));
        const Scalar sc = std::sqrt(Scalar(1) - world.rho_scalar);
        for (int k = 0; k < gh.nodes.size(); ++k) {
            const Scalar u = gh.nodes[k];
            // cell probabilities by recursive doubling over events
            Vec<Scalar> cells = Vec<Scalar>::Ones(1);
            for (int i = 0; i < m; ++i) {
                const Scalar qi = norm_cdf((sr * u - w[i]) / sc);
                Vec<Scalar> nxt(cells.size() * 2);
                nxt.head(cells.size()) = cells * (Scalar(1) - qi);
                nxt.tail(cells.size()) = cells * qi;
                cells.swap(nxt);
            }
            table.probs += gh.weights[k] * cells;
        }
        return table;
    }

    // General correlation: bin the shared QMC point set into outcome cells so
    // that any event probability from this table telescopes consistently.
    LatticeRule<double> rule(m, 1u << 16, 1, world.qmc_seed);
    Eigen::MatrixXd L = world.chol.template cast<double>();
    std::vector<double> z(m);
    const std::uint64_t np = rule.n_points;
    for (std::uint64_t k = 0; k < np; ++k) {
        for (int j = 0; j < m; ++j) {
            double uj = rule.point(0, k, j);
            uj = std::min(std::max(uj, 1e-12), 1.0 - 1e-12);
            z[j] = norm_quantile(uj);
        }
        std::uint32_t mask = 0;
        for (int i = 0; i < m; ++i) {
            double zi = 0;
            for (int j = 0; j <= i; ++j) zi += L(i, j) * z[j];
            if (zi > double(w[i])) mask |= std::uint32_t(1) << i;
        }
        table.probs[mask] += Scalar(1);
    }
    table.probs /= Scalar(double(np));
    return table;
}

// One trader arrival: uniform market choice, informed with probability
// 1 - alpha.
template <typename Scalar>
TraderArrival sample_arrival(const GaussianWorld<Scalar>& world,
                             const std::vector<MarketId>& family, Scalar alpha,
                             std::mt19937_64& rng,
                             NoiseModel noise_model = NoiseModel::score_perturbation) {
    if (family.empty()) throw std::invalid_argument("sample_arrival: empty family");
    std::uniform_int_distribution<size_t> pick(0, family.size() - 1);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    TraderArrival arrival;
    arrival.market = family[pick(rng)];
    const bool noise = unif(rng) < double(alpha);
    arrival.kind = noise ? TraderKind::noise : TraderKind::informed;
    if (!noise) {
        arrival.target = double(parlay_signal(world, arrival.market));
    } else if (noise_model == NoiseModel::uniform_price) {
        arrival.target = kProbEps + (1.0 - 2 * kProbEps) * unif(rng);
    } else {
        arrival.target = double(noisy_signal(world, arrival.market, rng));
    }
    arrival.target = clamp_prob(arrival.target);
    return arrival;
}

// Simulate S_T | S_t in one Gaussian step and threshold.
template <typename Scalar>
std::uint32_t resolve(const GaussianWorld<Scalar>& world, std::mt19937_64& rng) {
    const Scalar tau = std::max(world.time_left(), Scalar(0));
    Vec<Scalar> final_scores = world.scores;
    if (tau > Scalar(0)) {
        std::normal_distribution<double> normal(0.0, 1.0);
        Vec<Scalar> xi(world.m);
        for (int i = 0; i < world.m; ++i) xi[i] = Scalar(normal(rng));
        final_scores += std::sqrt(tau) * (world.sigma.array() * (world.chol * xi).array()).matrix();
    }
    std::uint32_t mask = 0;
    for (int i = 0; i < world.m; ++i)
        if (final_scores[i] > world.thresholds[i]) mask |= std::uint32_t(1) << i;
    return mask;
}

// True singleton/pair moments at the current scores (orthant-exact).
template <typename Scalar>
MomentVector<Scalar> true_moments(const GaussianWorld<Scalar>& world) {
    MomentVector<Scalar> mv;
    mv.p_single.resize(world.m);
    mv.p_pair.resize(n_pairs(world.m));
    for (int i = 0; i < world.m; ++i) mv.p_single[i] = base_signal(world, i);
    for (int i = 0; i < world.m; ++i)
        for (int j = i + 1; j < world.m; ++j) {
            const std::uint32_t mask = (std::uint32_t(1) << i) | (std::uint32_t(1) << j);
            mv.p_pair[pair_index(i, j, world.m)] = parlay_signal(world, MarketId{mask});
        }
    return mv;
}

}  // namespace pmm
