#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "pmm/core.hpp"
#include "pmm/bp.hpp"
#include "pmm/quadrature.hpp"
#include "pmm/world.hpp"

namespace pmm {

// Categorical pairwise MRF with per-market category counts. Identifiability:
// theta_i[0] = 0 and W_ij[0,:] = W_ij[:,0] = 0 (first category as reference).
template <typename Scalar>
struct PottsParams {
    int m = 0;
    std::vector<int> k;                 // categories per market, K_i >= 2
    std::vector<Vec<Scalar>> theta;     // theta[i] has K_i entries
    std::vector<Mat<Scalar>> w;         // upper-triangle pair order, K_i x K_j

    PottsParams() = default;
    explicit PottsParams(std::vector<int> k_) : m(int(k_.size())), k(std::move(k_)) {
        theta.reserve(m);
        for (int i = 0; i < m; ++i) theta.push_back(Vec<Scalar>::Zero(k[i]));
        w.reserve(n_pairs(m));
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) w.push_back(Mat<Scalar>::Zero(k[i], k[j]));
    }

    Mat<Scalar>& w_ref(int i, int j) { return w[pair_index(i, j, m)]; }
    const Mat<Scalar>& w_at(int i, int j) const { return w[pair_index(i, j, m)]; }

    std::int64_t state_count() const {
        std::int64_t n = 1;
        for (int ki : k) n *= ki;
        return n;
    }

    // Free parameters after reference pinning.
    int free_param_count() const {
        int n = 0;
        for (int i = 0; i < m; ++i) n += k[i] - 1;
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) n += (k[i] - 1) * (k[j] - 1);
        return n;
    }

    // Zero out reference-category coordinates (gradient masking uses the
    // same pattern).
    void enforce_pinning() {
        for (int i = 0; i < m; ++i) theta[i][0] = Scalar(0);
        for (auto& wm : w) {
            wm.row(0).setZero();
            wm.col(0).setZero();
        }
    }
};

// A categorical parlay (S, c): pays 1 iff X_i = c_i for every i in S.
struct CategoricalParlay {
    std::uint32_t markets = 0;  // leg bitmask
    std::vector<int> targets;   // one category per set bit, low bit first

    int size() const { return popcount(markets); }
};

inline constexpr std::int64_t kPottsExactCutoff = 4096;

// ---- exact inference by state enumeration ----

template <typename Scalar>
struct PottsInference {
    std::vector<Vec<Scalar>> single;  // distribution per market
    std::vector<Mat<Scalar>> pair;    // joint tables, upper-triangle order
    Scalar log_z = 0;
    bool converged = true;
    Scalar residual = 0;
};

namespace detail {

template <typename Scalar, typename Visit>
void potts_enumerate(const PottsParams<Scalar>& params, Visit&& visit) {
    const int m = params.m;
    std::vector<int> x(m, 0);
    while (true) {
        Scalar e = 0;
        for (int i = 0; i < m; ++i) e += params.theta[i][x[i]];
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) e += params.w_at(i, j)(x[i], x[j]);
        visit(x, e);
        int i = 0;
        for (; i < m; ++i) {
            if (++x[i] < params.k[i]) break;
            x[i] = 0;
        }
        if (i == m) break;
    }
}

}  // namespace detail

// Exact marginals when the state space is small enough; throws otherwise
// (BP entry point below dispatches).
template <typename Scalar, typename Pred>
PottsInference<Scalar> potts_exact_masked(const PottsParams<Scalar>& params, Pred&& pred) {
    if (params.state_count() > kPottsExactCutoff)
        throw std::length_error("potts exact inference beyond the state-space cutoff");
    const int m = params.m;
    PottsInference<Scalar> out;
    out.single.reserve(m);
    for (int i = 0; i < m; ++i) out.single.push_back(Vec<Scalar>::Zero(params.k[i]));
    out.pair.reserve(n_pairs(m));
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) out.pair.push_back(Mat<Scalar>::Zero(params.k[i], params.k[j]));

    // two passes: max energy for stability, then accumulate
    Scalar emax = -std::numeric_limits<Scalar>::infinity();
    detail::potts_enumerate(params, [&](const std::vector<int>& x, Scalar e) {
        if (pred(x) && e > emax) emax = e;
    });
    if (!std::isfinite(emax)) throw std::runtime_error("potts inference: event has zero support");
    Scalar z = 0;
    detail::potts_enumerate(params, [&](const std::vector<int>& x, Scalar e) {
        if (!pred(x)) return;
        const Scalar wgt = std::exp(e - emax);
        z += wgt;
        for (int i = 0; i < m; ++i) out.single[i][x[i]] += wgt;
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) out.pair[pair_index(i, j, m)](x[i], x[j]) += wgt;
    });
    for (auto& s : out.single) s /= z;
    for (auto& p : out.pair) p /= z;
    out.log_z = emax + std::log(z);
    return out;
}

template <typename Scalar>
PottsInference<Scalar> potts_exact(const PottsParams<Scalar>& params) {
    return potts_exact_masked(params, [](const std::vector<int>&) { return true; });
}

// ---- loopy BP for the Potts MRF ----

template <typename Scalar>
PottsInference<Scalar> potts_bp(const PottsParams<Scalar>& params, const BpOptions& opt = {}) {
    const int m = params.m;
    struct Edge {
        int i, j, widx;
    };
    std::vector<Edge> edges;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            if (params.w_at(i, j).cwiseAbs().maxCoeff() != Scalar(0))
                edges.push_back({i, j, pair_index(i, j, m)});
    const int ne = int(edges.size());

    // log messages; msg[2e] i->j (over x_j), msg[2e+1] j->i (over x_i)
    std::vector<Vec<Scalar>> msg(2 * ne), next(2 * ne);
    for (int e = 0; e < ne; ++e) {
        msg[2 * e] = Vec<Scalar>::Zero(params.k[edges[e].j]);
        msg[2 * e + 1] = Vec<Scalar>::Zero(params.k[edges[e].i]);
    }
    std::vector<Vec<Scalar>> total(m);
    auto refresh_totals = [&] {
        for (int i = 0; i < m; ++i) total[i] = params.theta[i];
        for (int e = 0; e < ne; ++e) {
            total[edges[e].j] += msg[2 * e];
            total[edges[e].i] += msg[2 * e + 1];
        }
    };

    PottsInference<Scalar> out;
    out.converged = ne == 0;
    Scalar resid = ne > 0 ? std::numeric_limits<Scalar>::infinity() : Scalar(0);
    refresh_totals();
    for (int it = 0; it < opt.max_iter && ne > 0; ++it) {
        resid = 0;
        for (int e = 0; e < ne; ++e) {
            const auto& wm = params.w[edges[e].widx];
            for (int dir = 0; dir < 2; ++dir) {
                const int from = dir == 0 ? edges[e].i : edges[e].j;
                const int to = dir == 0 ? edges[e].j : edges[e].i;
                const Vec<Scalar> cav = total[from] - msg[2 * e + (1 - dir)];
                Vec<Scalar> fresh(params.k[to]);
                for (int xt = 0; xt < params.k[to]; ++xt) {
                    Vec<Scalar> acc(params.k[from]);
                    for (int xf = 0; xf < params.k[from]; ++xf)
                        acc[xf] = cav[xf] + (dir == 0 ? wm(xf, xt) : wm(xt, xf));
                    fresh[xt] = log_sum_exp(acc);
                }
                fresh.array() -= fresh.maxCoeff();  // gauge
                const Vec<Scalar> mixed = Scalar(opt.damping) * msg[2 * e + dir] +
                                          (Scalar(1) - Scalar(opt.damping)) * fresh;
                resid = std::max(resid, (mixed - msg[2 * e + dir]).cwiseAbs().maxCoeff());
                next[2 * e + dir] = mixed;
            }
        }
        msg.swap(next);
        refresh_totals();
        if (resid <= Scalar(opt.tol)) {
            out.converged = true;
            break;
        }
    }
    out.residual = resid;

    out.single.reserve(m);
    for (int i = 0; i < m; ++i) {
        Vec<Scalar> b = total[i];
        b.array() -= log_sum_exp(b);
        out.single.push_back(b.array().exp());
    }
    out.pair.reserve(n_pairs(m));
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            out.pair.push_back(out.single[i] * out.single[j].transpose());

    Scalar energy = 0, entropy = 0;
    std::vector<int> degree(m, 0);
    for (int e = 0; e < ne; ++e) {
        const int i = edges[e].i, j = edges[e].j;
        ++degree[i];
        ++degree[j];
        const auto& wm = params.w[edges[e].widx];
        const Vec<Scalar> cav_i = total[i] - msg[2 * e + 1];
        const Vec<Scalar> cav_j = total[j] - msg[2 * e];
        Mat<Scalar> lb(params.k[i], params.k[j]);
        for (int a = 0; a < params.k[i]; ++a)
            for (int c = 0; c < params.k[j]; ++c) lb(a, c) = cav_i[a] + cav_j[c] + wm(a, c);
        const Scalar mx = lb.maxCoeff();
        Mat<Scalar> b = (lb.array() - mx).exp();
        b /= b.sum();
        out.pair[edges[e].widx] = b;
        for (int a = 0; a < params.k[i]; ++a)
            for (int c = 0; c < params.k[j]; ++c) {
                energy -= b(a, c) * wm(a, c);
                if (b(a, c) > Scalar(0)) entropy -= b(a, c) * std::log(b(a, c));
            }
    }
    for (int i = 0; i < m; ++i) {
        Scalar hi = 0;
        for (int a = 0; a < params.k[i]; ++a) {
            const Scalar bi = std::max(out.single[i][a], Scalar(1e-15));
            energy -= out.single[i][a] * params.theta[i][a];
            hi -= bi * std::log(bi);
        }
        entropy += (Scalar(1) - Scalar(degree[i])) * hi;
    }
    out.log_z = -(energy - entropy);
    return out;
}

// Exact enumeration below the state-space cutoff, damped BP above.
template <typename Scalar>
PottsInference<Scalar> potts_marginals(const PottsParams<Scalar>& params,
                                       const BpOptions& opt = {}) {
    if (params.state_count() <= kPottsExactCutoff) return potts_exact(params);
    return potts_bp(params, opt);
}

namespace detail {

template <typename Scalar>
bool parlay_matches(const CategoricalParlay& parlay, const std::vector<int>& x) {
    int t = 0;
    for (int i = 0; i < int(x.size()); ++i)
        if (parlay.markets >> i & 1u) {
            if (x[i] != parlay.targets[t]) return false;
            ++t;
        }
    return true;
}

// Clamp X_i = c_i for i in the parlay: reduced model plus log-constant.
template <typename Scalar>
struct PottsClamped {
    PottsParams<Scalar> reduced;
    Scalar log_const = 0;
    std::vector<int> index_map;
};

template <typename Scalar>
PottsClamped<Scalar> potts_clamp(const PottsParams<Scalar>& params,
                                 const CategoricalParlay& parlay) {
    const int m = params.m;
    std::vector<int> fixed(m, -1);
    int t = 0;
    for (int i = 0; i < m; ++i)
        if (parlay.markets >> i & 1u) fixed[i] = parlay.targets[t++];
    PottsClamped<Scalar> out;
    std::vector<int> keep_k;
    for (int i = 0; i < m; ++i)
        if (fixed[i] < 0) {
            out.index_map.push_back(i);
            keep_k.push_back(params.k[i]);
        }
    out.reduced = PottsParams<Scalar>(keep_k);
    for (int i = 0; i < m; ++i)
        if (fixed[i] >= 0) out.log_const += params.theta[i][fixed[i]];
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            if (fixed[i] >= 0 && fixed[j] >= 0)
                out.log_const += params.w_at(i, j)(fixed[i], fixed[j]);
        }
    for (size_t a = 0; a < out.index_map.size(); ++a) {
        const int i = out.index_map[a];
        out.reduced.theta[a] = params.theta[i];
        for (int j = 0; j < m; ++j)
            if (fixed[j] >= 0) {
                const auto& wm = params.w_at(std::min(i, j), std::max(i, j));
                if (i < j)
                    out.reduced.theta[a] += wm.col(fixed[j]);
                else
                    out.reduced.theta[a] += wm.row(fixed[j]).transpose();
            }
        for (size_t b = a + 1; b < out.index_map.size(); ++b)
            out.reduced.w_ref(int(a), int(b)) = params.w_at(out.index_map[a], out.index_map[b]);
    }
    return out;
}

}  // namespace detail

// P(X_i = c_i for all i in S) under the model.
template <typename Scalar>
Scalar potts_event_prob(const PottsParams<Scalar>& params, const CategoricalParlay& parlay,
                        const BpOptions& opt = {}) {
    if (parlay.markets == 0) throw std::invalid_argument("potts_event_prob: empty parlay");
    if (params.state_count() <= kPottsExactCutoff) {
        Scalar q = 0;
        const auto base = potts_exact(params);
        // direct masked sum (cheap at this size)
        Scalar z = 0;
        detail::potts_enumerate(params, [&](const std::vector<int>& x, Scalar e) {
            const Scalar wgt = std::exp(e - base.log_z);
            z += wgt;
            if (detail::parlay_matches<Scalar>(parlay, x)) q += wgt;
        });
        return q / z;
    }
    if (parlay.size() > kBpJointQueryCap)
        throw std::invalid_argument("potts_event_prob: parlay too large for the BP backend");
    const auto base = potts_bp(params, opt);
    const auto cm = detail::potts_clamp(params, parlay);
    Scalar log_zc = cm.log_const;
    if (cm.reduced.m > 0) log_zc += potts_bp(cm.reduced, opt).log_z;
    return std::min(Scalar(1), std::exp(log_zc - base.log_z));
}

// Gradient containers mirror the parameter layout.
template <typename Scalar>
struct PottsGrad {
    std::vector<Vec<Scalar>> theta;
    std::vector<Mat<Scalar>> w;

    explicit PottsGrad(const PottsParams<Scalar>& p) {
        theta.reserve(p.m);
        for (int i = 0; i < p.m; ++i) theta.push_back(Vec<Scalar>::Zero(p.k[i]));
        w.reserve(p.w.size());
        for (const auto& wm : p.w) w.push_back(Mat<Scalar>::Zero(wm.rows(), wm.cols()));
    }
};

// Cross-entropy gradient of a parlay's YES probability, reference
// coordinates masked to preserve identifiability.
template <typename Scalar>
PottsGrad<Scalar> potts_grad_ce(const PottsParams<Scalar>& params, const CategoricalParlay& parlay,
                                Scalar p_target) {
    const auto base = potts_exact(params);
    const auto cond = potts_exact_masked(
        params, [&](const std::vector<int>& x) { return detail::parlay_matches<Scalar>(parlay, x); });
    Scalar q = 0;
    {
        // q from the same enumeration used for cond (ratio of partition sums)
        q = std::exp(cond.log_z - base.log_z);
    }
    q = clamp_prob(q);
    const Scalar scale = (q - p_target) / (Scalar(1) - q);
    PottsGrad<Scalar> g(params);
    for (int i = 0; i < params.m; ++i) g.theta[i] = scale * (cond.single[i] - base.single[i]);
    for (size_t e = 0; e < params.w.size(); ++e) g.w[e] = scale * (cond.pair[e] - base.pair[e]);
    // identifiability mask
    for (int i = 0; i < params.m; ++i) g.theta[i][0] = Scalar(0);
    for (auto& wm : g.w) {
        wm.row(0).setZero();
        wm.col(0).setZero();
    }
    return g;
}

// SGD step on the parlay cross-entropy (Eq.-style single-trade update).
template <typename Scalar>
void potts_sgd_step(PottsParams<Scalar>& params, const CategoricalParlay& parlay, Scalar p_target,
                    Scalar eta_theta, Scalar eta_w) {
    const auto g = potts_grad_ce(params, parlay, clamp_prob(p_target));
    for (int i = 0; i < params.m; ++i) params.theta[i] -= eta_theta * g.theta[i];
    for (size_t e = 0; e < params.w.size(); ++e) params.w[e] -= eta_w * g.w[e];
    params.enforce_pinning();
}

// Categorical CE step for a base-market trade toward a full target
// distribution: grad = E[T] - sum_k target_k E[T | X_i = k].
template <typename Scalar>
void potts_base_step(PottsParams<Scalar>& params, int market, const Vec<Scalar>& target,
                     Scalar eta_theta, Scalar eta_w) {
    const auto base = potts_exact(params);
    PottsGrad<Scalar> g(params);
    for (int i = 0; i < params.m; ++i) g.theta[i] = base.single[i];
    for (size_t e = 0; e < params.w.size(); ++e) g.w[e] = base.pair[e];
    for (int c = 0; c < params.k[market]; ++c) {
        if (target[c] <= Scalar(0)) continue;
        const auto cond = potts_exact_masked(params, [&](const std::vector<int>& x) {
            return x[market] == c;
        });
        for (int i = 0; i < params.m; ++i) g.theta[i] -= target[c] * cond.single[i];
        for (size_t e = 0; e < params.w.size(); ++e) g.w[e] -= target[c] * cond.pair[e];
    }
    for (int i = 0; i < params.m; ++i) g.theta[i][0] = Scalar(0);
    for (auto& wm : g.w) {
        wm.row(0).setZero();
        wm.col(0).setZero();
    }
    for (int i = 0; i < params.m; ++i) params.theta[i] -= eta_theta * g.theta[i];
    for (size_t e = 0; e < params.w.size(); ++e) params.w[e] -= eta_w * g.w[e];
    params.enforce_pinning();
}

// ---- K-state LMSR book ----

// Reference-pinned gauge (scores[0] == 0): deterministic state, exact cash
// agreement with the binary scalar-z book at K = 2.
template <typename Scalar>
struct KStateBook {
    Vec<Scalar> scores;
    Scalar b = 1;
    Scalar cumulative_cost = 0;
    Vec<Scalar> shares_outstanding;

    KStateBook() = default;
    KStateBook(int k, Scalar liquidity)
        : scores(Vec<Scalar>::Zero(k)), b(liquidity), shares_outstanding(Vec<Scalar>::Zero(k)) {}

    Scalar cost() const { return b * log_sum_exp(Vec<Scalar>(scores / b)); }

    Vec<Scalar> prices() const {
        Vec<Scalar> p = scores / b;
        p.array() -= log_sum_exp(Vec<Scalar>(scores / b));
        return p.array().exp();
    }
};

// Move prices to the target distribution; returns trader cash paid.
template <typename Scalar>
Scalar kstate_fill_to_target(KStateBook<Scalar>& book, const Vec<Scalar>& target) {
    if (target.size() != book.scores.size())
        throw std::invalid_argument("kstate_fill_to_target: size mismatch");
    Vec<Scalar> t = target;
    for (int i = 0; i < t.size(); ++i)
        if (!(t[i] > Scalar(0))) t[i] = Scalar(kProbEps);
    t /= t.sum();
    const Scalar cost_pre = book.cost();
    Vec<Scalar> s_new = book.b * t.array().log();
    s_new.array() -= s_new[0];  // reference gauge
    book.shares_outstanding += s_new - book.scores;
    book.scores = s_new;
    const Scalar cash = book.cost() - cost_pre;
    book.cumulative_cost += cash;
    return cash;
}

// Zero-cash reprice (shadow sync).
template <typename Scalar>
void kstate_resync(KStateBook<Scalar>& book, const Vec<Scalar>& target) {
    Vec<Scalar> t = target;
    for (int i = 0; i < t.size(); ++i)
        if (!(t[i] > Scalar(0))) t[i] = Scalar(kProbEps);
    t /= t.sum();
    Vec<Scalar> s_new = book.b * t.array().log();
    s_new.array() -= s_new[0];
    book.scores = s_new;
}

template <typename Scalar>
Scalar kstate_settle(const KStateBook<Scalar>& book, int winner) {
    return book.shares_outstanding[winner] - book.cumulative_cost;
}

// Categorical KL loss of one informed trade, in currency. Both arguments
// are smoothed onto the same interior simplex so the divergence stays
// nonnegative at boundary signals.
template <typename Scalar>
Scalar expected_loss_kl_cat(const Vec<Scalar>& p_true, const Vec<Scalar>& p_posted, Scalar b) {
    const int k = int(p_true.size());
    const Scalar eps = Scalar(kProbEps);
    const Scalar norm_p = p_true.sum() + k * eps;
    const Scalar norm_q = p_posted.sum() + k * eps;
    Scalar kl = 0;
    for (int i = 0; i < k; ++i) {
        const Scalar p = (p_true[i] + eps) / norm_p;
        const Scalar q = (p_posted[i] + eps) / norm_q;
        kl += p * std::log(p / q);
    }
    return b * kl;
}

// ---- categorical Gaussian world ----

// Equiprobable-category thresholds tau^k = sigma sqrt(T) Phi^{-1}(k / K).
template <typename Scalar>
Vec<Scalar> threshold_init(int k, Scalar sigma, Scalar horizon) {
    if (k < 2) throw std::invalid_argument("threshold_init: K >= 2 required");
    Vec<Scalar> tau(k - 1);
    for (int j = 1; j < k; ++j)
        tau[j - 1] = sigma * std::sqrt(horizon) * norm_quantile(Scalar(j) / Scalar(k));
    return tau;
}

template <typename Scalar>
struct CategoricalWorld {
    GaussianWorld<Scalar> base;       // score process (thresholds member unused)
    std::vector<Vec<Scalar>> taus;    // ordered finite thresholds per market
    Scalar jump_rate = 0;             // Poisson intensity per step

    CategoricalWorld(std::vector<int> k, Scalar rho, Scalar horizon = Scalar(1),
                     Scalar sigma = Scalar(1), Scalar jump_rate_ = Scalar(0))
        : base(int(k.size()), rho, horizon), jump_rate(jump_rate_) {
        base.sigma.setConstant(sigma);
        taus.reserve(k.size());
        for (int ki : k) taus.push_back(threshold_init(ki, sigma, horizon));
    }

    int m() const { return base.m; }
    int categories(int i) const { return int(taus[i].size()) + 1; }
};

// P(X_i = k | S_t): Phi((tau^k - s)/(sigma sqrt(tau))) - Phi(lower).
template <typename Scalar>
Scalar categorical_signal(const CategoricalWorld<Scalar>& world, int i, int k) {
    const Scalar tau_left = world.base.time_left();
    const Scalar s = world.base.scores[i];
    const int K = world.categories(i);
    if (k < 0 || k >= K) throw std::invalid_argument("categorical_signal: bad category");
    if (tau_left <= Scalar(0)) {
        int cat = 0;
        while (cat < K - 1 && s > world.taus[i][cat]) ++cat;
        return cat == k ? Scalar(1) : Scalar(0);
    }
    const Scalar denom = world.base.sigma[i] * std::sqrt(tau_left);
    const Scalar hi = k == K - 1 ? Scalar(1) : norm_cdf((world.taus[i][k] - s) / denom);
    const Scalar lo = k == 0 ? Scalar(0) : norm_cdf((world.taus[i][k - 1] - s) / denom);
    return hi - lo;
}

template <typename Scalar>
Vec<Scalar> categorical_signal_vec(const CategoricalWorld<Scalar>& world, int i) {
    Vec<Scalar> p(world.categories(i));
    for (int k = 0; k < world.categories(i); ++k) p[k] = categorical_signal(world, i, k);
    return p;
}

// Equicorrelated joint CDF P(∩ Z_i <= z_i) via the one-factor quadrature.
template <typename Scalar>
Scalar mvn_cdf_equicorr(const std::vector<Scalar>& z, Scalar rho) {
    if (z.empty()) return Scalar(1);
    if (rho == Scalar(0)) {
        Scalar p = 1;
        for (Scalar zi : z) p *= norm_cdf(zi);
        return p;
    }
    const auto& gh = GaussHermite<Scalar>::standard();
    const Scalar sr = std::sqrt(rho), sc = std::sqrt(Scalar(1) - rho);
    Scalar acc = 0;
    for (int k = 0; k < gh.nodes.size(); ++k) {
        const Scalar u = gh.nodes[k];
        Scalar prod = 1;
        for (Scalar zi : z) prod *= norm_cdf((zi - sr * u) / sc);
        acc += gh.weights[k] * prod;
    }
    return acc;
}

// P(∩ X_i = c_i | S_t) by inclusion-exclusion over the threshold
// hyperrectangle; capped at 3 legs.
template <typename Scalar>
Scalar joint_categorical_signal(const CategoricalWorld<Scalar>& world,
                                const CategoricalParlay& parlay) {
    const int d = parlay.size();
    if (d == 0) throw std::invalid_argument("joint_categorical_signal: empty parlay");
    if (d > 3)
        throw std::invalid_argument("joint_categorical_signal: more than 3 legs unsupported");
    std::vector<int> legs;
    for (int i = 0; i < world.m(); ++i)
        if (parlay.markets >> i & 1u) legs.push_back(i);
    if (d == 1) return categorical_signal(world, legs[0], parlay.targets[0]);

    const Scalar tau_left = world.base.time_left();
    if (tau_left <= Scalar(0)) {
        Scalar p = 1;
        for (int a = 0; a < d; ++a)
            p *= categorical_signal(world, legs[a], parlay.targets[a]);
        return p;
    }
    const Scalar inf = std::numeric_limits<Scalar>::infinity();
    std::vector<Scalar> lo(d), hi(d);
    for (int a = 0; a < d; ++a) {
        const int i = legs[a];
        const int c = parlay.targets[a];
        const int K = world.categories(i);
        const Scalar denom = world.base.sigma[i] * std::sqrt(tau_left);
        const Scalar s = world.base.scores[i];
        lo[a] = c == 0 ? -inf : (world.taus[i][c - 1] - s) / denom;
        hi[a] = c == K - 1 ? inf : (world.taus[i][c] - s) / denom;
    }

    // equicorrelated CDF or QMC CDF on the correlation submatrix
    auto cdf = [&](const std::vector<Scalar>& z) -> Scalar {
        std::vector<Scalar> zf;
        std::vector<int> keep;
        for (int a = 0; a < d; ++a) {
            if (z[a] == inf) continue;  // drop +inf coordinates
            zf.push_back(z[a]);
            keep.push_back(legs[a]);
        }
        if (zf.empty()) return Scalar(1);
        if (world.base.equicorr) return mvn_cdf_equicorr(zf, world.base.rho_scalar);
        // P(∩ Z <= z) = P(∩ (-Z) > -z); -Z shares the correlation matrix
        std::vector<Scalar> w(zf.size());
        for (size_t a = 0; a < zf.size(); ++a) w[a] = -zf[a];
        return Scalar(orthant_qmc(world.base.chol, keep, w, world.base.qmc_seed).value);
    };

    Scalar total = 0;
    for (int corner = 0; corner < (1 << d); ++corner) {
        std::vector<Scalar> z(d);
        int sign = 1;
        bool zero = false;
        for (int a = 0; a < d; ++a) {
            if (corner >> a & 1) {
                z[a] = hi[a];
            } else {
                z[a] = lo[a];
                sign = -sign;
                if (lo[a] == -inf) zero = true;  // CDF at -inf vanishes
            }
        }
        if (zero) continue;
        total += Scalar(sign) * cdf(z);
    }
    return std::min(Scalar(1), std::max(Scalar(0), total));
}

// Poisson jump overlay: on each jump the score relocates to one of the
// market's finite thresholds, chosen uniformly. No RNG is consumed when the
// rate is zero.
template <typename Scalar>
void jump_step(CategoricalWorld<Scalar>& world, Scalar /*dt*/, std::mt19937_64& rng) {
    if (world.jump_rate <= Scalar(0)) return;
    std::poisson_distribution<int> pois(double(world.jump_rate));
    for (int i = 0; i < world.m(); ++i) {
        const int n = pois(rng);
        if (n <= 0) continue;
        std::uniform_int_distribution<int> pick(0, int(world.taus[i].size()) - 1);
        for (int jmp = 0; jmp < n; ++jmp) world.base.scores[i] = world.taus[i][pick(rng)];
    }
}

// Resolve every market to its category at the horizon.
template <typename Scalar>
std::vector<int> categorical_resolve(const CategoricalWorld<Scalar>& world,
                                     std::mt19937_64& rng) {
    const Scalar tau = std::max(world.base.time_left(), Scalar(0));
    Vec<Scalar> final_scores = world.base.scores;
    if (tau > Scalar(0)) {
        std::normal_distribution<double> normal(0.0, 1.0);
        Vec<Scalar> xi(world.m());
        for (int i = 0; i < world.m(); ++i) xi[i] = Scalar(normal(rng));
        final_scores +=
            std::sqrt(tau) * (world.base.sigma.array() * (world.base.chol * xi).array()).matrix();
    }
    std::vector<int> out(world.m());
    for (int i = 0; i < world.m(); ++i) {
        int cat = 0;
        while (cat < world.categories(i) - 1 && final_scores[i] > world.taus[i][cat]) ++cat;
        out[i] = cat;
    }
    return out;
}

}  // namespace pmm
