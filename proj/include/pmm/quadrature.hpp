#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pmm/core.hpp"
#include "pmm/rng.hpp"

namespace pmm {

// Nodes/weights for integrals of the form  ∫ φ(u) f(u) du  (standard normal
// weight), derived from physicists' Gauss-Hermite via Golub-Welsch on the
// Jacobi matrix.
template <typename Scalar>
struct GaussHermite {
    Vec<Scalar> nodes;    // evaluation points u_k
    Vec<Scalar> weights;  // sum to 1

    explicit GaussHermite(int n) {
        Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
        for (int k = 1; k < n; ++k) {
            const double off = std::sqrt(k / 2.0);
            J(k, k - 1) = off;
            J(k - 1, k) = off;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
        nodes.resize(n);
        weights.resize(n);
        for (int k = 0; k < n; ++k) {
            // Hermite node x_k maps to u = sqrt(2) x_k under the change of
            // variables from e^{-x^2} to the normal density.
            nodes[k] = Scalar(std::sqrt(2.0) * es.eigenvalues()[k]);
            const double v0 = es.eigenvectors()(0, k);
            weights[k] = Scalar(v0 * v0);  // already normalized: sum = 1
        }
    }

    static const GaussHermite& standard() {
        static const GaussHermite gh(64);
        return gh;
    }
};

// Randomized rank-1 lattice for quasi-Monte Carlo integration over [0,1)^d.
// Deterministic for a fixed seed; `shifts` Cranley-Patterson randomizations
// give a standard-error estimate.
template <typename Scalar>
struct LatticeRule {
    int dim;
    std::uint64_t n_points;
    int n_shifts;
    std::vector<Scalar> alpha;                // generator: frac(sqrt(prime))
    std::vector<std::vector<Scalar>> shifts;  // [shift][dim]

    LatticeRule(int d, std::uint64_t n, int shifts_count, std::uint64_t seed)
        : dim(d), n_points(n), n_shifts(shifts_count) {
        static const int primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31,
                                     37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79,
                                     83, 89, 97, 101, 103, 107, 109, 113, 127, 131};
        alpha.resize(d);
        for (int j = 0; j < d; ++j) {
            const double r = std::sqrt(double(primes[j % 32])) * (1 + j / 32);
            alpha[j] = Scalar(r - std::floor(r));
        }
        std::mt19937_64 rng(splitmix64(seed));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        shifts.assign(n_shifts, std::vector<Scalar>(d));
        for (auto& sh : shifts)
            for (auto& x : sh) x = Scalar(unif(rng));
    }

    // Point k of shift s, coordinate j.
    Scalar point(int s, std::uint64_t k, int j) const {
        const Scalar x = Scalar(k) * alpha[j] + shifts[s][j];
        return x - std::floor(x);
    }
};

struct QmcEstimate {
    double value = 0;
    double std_error = 0;
};

// Mean of f over [0,1)^d estimated with the lattice rule; the standard error
// comes from the spread across random shifts.
template <typename F>
QmcEstimate qmc_mean(const LatticeRule<double>& rule, F&& f) {
    QmcEstimate out;
    std::vector<double> per_shift(rule.n_shifts, 0.0);
    std::vector<double> u(rule.dim);
    for (int s = 0; s < rule.n_shifts; ++s) {
        double acc = 0;
        for (std::uint64_t k = 0; k < rule.n_points; ++k) {
            for (int j = 0; j < rule.dim; ++j) u[j] = rule.point(s, k, j);
            acc += f(u);
        }
        per_shift[s] = acc / double(rule.n_points);
    }
    double mean = 0;
    for (double v : per_shift) mean += v;
    mean /= rule.n_shifts;
    double var = 0;
    for (double v : per_shift) var += (v - mean) * (v - mean);
    var = rule.n_shifts > 1 ? var / (rule.n_shifts - 1) / rule.n_shifts : 0.0;
    out.value = mean;
    out.std_error = std::sqrt(var);
    return out;
}

}  // namespace pmm
