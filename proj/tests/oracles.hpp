#pragma once

// Test-only oracles, kept independent of the library's inference path:
// brute-force enumeration over raw std::vector state, finite differences,
// and simple statistics.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

struct Model {
    int m = 0;
    std::vector<double> theta;                 // m
    std::vector<std::vector<double>> w;        // full symmetric m x m
    explicit Model(int m_) : m(m_), theta(m_, 0.0), w(m_, std::vector<double>(m_, 0.0)) {}
};

inline std::vector<double> enumerate_probs(const Model& mod) {
    const std::uint32_t n = 1u << mod.m;
    std::vector<double> weight(n);
    double z = 0;
    for (std::uint32_t x = 0; x < n; ++x) {
        double e = 0;
        for (int i = 0; i < mod.m; ++i) {
            if (!(x >> i & 1u)) continue;
            e += mod.theta[i];
            for (int j = i + 1; j < mod.m; ++j)
                if (x >> j & 1u) e += mod.w[i][j];
        }
        weight[x] = std::exp(e);
        z += weight[x];
    }
    for (auto& p : weight) p /= z;
    return weight;
}

inline double event_prob(const Model& mod, std::uint32_t subset) {
    const auto probs = enumerate_probs(mod);
    double q = 0;
    for (std::uint32_t x = 0; x < probs.size(); ++x)
        if ((x & subset) == subset) q += probs[x];
    return q;
}

// Central finite difference of a scalar function of the flattened
// (theta, upper-w) coordinates.
inline std::vector<double> finite_diff(const Model& mod, std::uint32_t subset, double h = 1e-5) {
    auto eval = [&](const Model& mm) { return event_prob(mm, subset); };
    std::vector<double> g;
    for (int i = 0; i < mod.m; ++i) {
        Model up = mod, dn = mod;
        up.theta[i] += h;
        dn.theta[i] -= h;
        g.push_back((eval(up) - eval(dn)) / (2 * h));
    }
    for (int i = 0; i < mod.m; ++i)
        for (int j = i + 1; j < mod.m; ++j) {
            Model up = mod, dn = mod;
            up.w[i][j] += h;
            up.w[j][i] += h;
            dn.w[i][j] -= h;
            dn.w[j][i] -= h;
            g.push_back((eval(up) - eval(dn)) / (2 * h));
        }
    return g;
}

inline std::vector<double> finite_diff_scalar(const Model& mod,
                                              const std::function<double(const Model&)>& f,
                                              double h = 1e-5) {
    std::vector<double> g;
    for (int i = 0; i < mod.m; ++i) {
        Model up = mod, dn = mod;
        up.theta[i] += h;
        dn.theta[i] -= h;
        g.push_back((f(up) - f(dn)) / (2 * h));
    }
    for (int i = 0; i < mod.m; ++i)
        for (int j = i + 1; j < mod.m; ++j) {
            Model up = mod, dn = mod;
            up.w[i][j] += h;
            up.w[j][i] += h;
            dn.w[i][j] -= h;
            dn.w[j][i] -= h;
            g.push_back((f(up) - f(dn)) / (2 * h));
        }
    return g;
}

inline Model random_model(int m, std::mt19937_64& rng, double theta_range = 1.5,
                          double w_range = 0.8) {
    std::uniform_real_distribution<double> ut(-theta_range, theta_range);
    std::uniform_real_distribution<double> uw(-w_range, w_range);
    Model mod(m);
    for (int i = 0; i < m; ++i) mod.theta[i] = ut(rng);
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) mod.w[i][j] = mod.w[j][i] = uw(rng);
    return mod;
}

}  // namespace oracle
