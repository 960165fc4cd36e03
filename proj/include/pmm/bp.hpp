#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "pmm/core.hpp"
#include "pmm/ising.hpp"

namespace pmm {

struct BpOptions {
    int max_iter = 200;
    double damping = 0.5;  // weight on the previous message
    double tol = 1e-8;     // max message residual
};

template <typename Scalar>
struct BpResult {
    MomentVector<Scalar> marginals;
    Scalar log_z_bethe = 0;  // Bethe approximation to log Z
    bool converged = false;
    Scalar residual = 0;
};

// Damped synchronous sum-product on the pairwise graph of nonzero couplings.
// Edge pair marginals come from the edge beliefs; non-edge pair moments are
// filled with the Bethe product of singleton beliefs (callers needing exact
// tree values for non-adjacent pairs should use clamped queries instead).
template <typename Scalar>
BpResult<Scalar> loopy_bp_raw(const IsingParams<Scalar>& params, const BpOptions& opt = {}) {
    const int m = params.m;
    struct Edge {
        int i, j;
        Scalar w;
    };
    std::vector<Edge> edges;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            if (params.w(i, j) != Scalar(0)) edges.push_back({i, j, params.w(i, j)});
    const int ne = int(edges.size());

    // Directed messages stored as log-odds on the receiving variable.
    // msg[2e] = i->j, msg[2e+1] = j->i.
    std::vector<Scalar> msg(2 * ne, Scalar(0)), next(2 * ne);

    // Node totals: theta_i plus all incoming message log-odds.
    Vec<Scalar> total(m);
    auto refresh_totals = [&] {
        total = params.theta;
        for (int e = 0; e < ne; ++e) {
            total[edges[e].j] += msg[2 * e];
            total[edges[e].i] += msg[2 * e + 1];
        }
    };

    BpResult<Scalar> out;
    Scalar resid = ne > 0 ? std::numeric_limits<Scalar>::infinity() : Scalar(0);
    refresh_totals();
    for (int it = 0; it < opt.max_iter && ne > 0; ++it) {
        resid = 0;
        for (int e = 0; e < ne; ++e) {
            const Scalar w = edges[e].w;
            for (int dir = 0; dir < 2; ++dir) {
                const int from = dir == 0 ? edges[e].i : edges[e].j;
                // Cavity log-odds at the sender, excluding the reverse message.
                const Scalar lo = total[from] - msg[2 * e + (1 - dir)];
                const Scalar fresh = softplus(lo + w) - softplus(lo);
                const Scalar mixed =
                    Scalar(opt.damping) * msg[2 * e + dir] + (Scalar(1) - Scalar(opt.damping)) * fresh;
                next[2 * e + dir] = mixed;
                resid = std::max(resid, std::abs(mixed - msg[2 * e + dir]));
            }
        }
        msg.swap(next);
        refresh_totals();
        if (resid <= Scalar(opt.tol)) {
            out.converged = true;
            break;
        }
    }
    if (ne == 0) out.converged = true;
    out.residual = resid;

    // Singleton beliefs.
    Vec<Scalar> belief(m);
    for (int i = 0; i < m; ++i) belief[i] = sigmoid(total[i]);

    // Edge beliefs b_ij(x_i, x_j) and Bethe free energy.
    out.marginals.p_single = belief;
    out.marginals.p_pair = Vec<Scalar>::Zero(n_pairs(m));
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            out.marginals.p_pair[pair_index(i, j, m)] = belief[i] * belief[j];

    Scalar energy = 0, entropy = 0;
    std::vector<int> degree(m, 0);
    for (int e = 0; e < ne; ++e) {
        const int i = edges[e].i, j = edges[e].j;
        ++degree[i];
        ++degree[j];
        const Scalar loi = total[i] - msg[2 * e + 1];
        const Scalar loj = total[j] - msg[2 * e];
        // Unnormalized b_ij in log domain over (x_i, x_j).
        Scalar lb[4] = {Scalar(0), loj, loi, loi + loj + edges[e].w};
        Scalar mx = lb[0];
        for (int k = 1; k < 4; ++k) mx = std::max(mx, lb[k]);
        Scalar z = 0;
        for (int k = 0; k < 4; ++k) z += std::exp(lb[k] - mx);
        Scalar b[4];
        for (int k = 0; k < 4; ++k) b[k] = std::exp(lb[k] - mx) / z;
        out.marginals.p_pair[pair_index(i, j, m)] = b[3];
        // Energy term: -E_b[ log psi_ij ], psi includes only the coupling here;
        // unary factors are accounted once per node below.
        energy -= b[3] * edges[e].w;
        for (int k = 0; k < 4; ++k)
            if (b[k] > Scalar(0)) entropy -= b[k] * std::log(b[k]);
    }
    for (int i = 0; i < m; ++i) {
        const Scalar bi = clamp_prob(belief[i], Scalar(1e-15));
        energy -= bi * params.theta[i];
        const Scalar hi = -(bi * std::log(bi) + (Scalar(1) - bi) * std::log1p(-bi));
        entropy += (Scalar(1) - Scalar(degree[i])) * hi;
    }
    out.log_z_bethe = -(energy - entropy);
    return out;
}

// Spec-facing BP marginals with the stated defaults.
template <typename Scalar>
BpResult<Scalar> loopy_bp(const IsingParams<Scalar>& params, int max_iter = 200,
                          Scalar damping = Scalar(0.5), Scalar tol = Scalar(1e-8)) {
    BpOptions opt;
    opt.max_iter = max_iter;
    opt.damping = double(damping);
    opt.tol = double(tol);
    return loopy_bp_raw(params, opt);
}

namespace detail {

// q_S under BP by conditioned clamping: clamp all of S to 1 and take the
// Bethe free-energy difference.
template <typename Scalar>
Scalar bp_event_prob_clamped(const IsingParams<Scalar>& params, std::uint32_t subset,
                             const BpResult<Scalar>& base, const BpOptions& opt = {}) {
    const ClampedModel<Scalar> cm = clamp_reduce(params, subset);
    Scalar log_zc = cm.log_const;
    if (cm.reduced.m > 0) log_zc += loopy_bp_raw(cm.reduced, opt).log_z_bethe;
    const Scalar lq = log_zc - base.log_z_bethe;
    return std::min(Scalar(1), std::exp(lq));
}

}  // namespace detail

// How many events a joint BP query may clamp at once.
inline constexpr int kBpJointQueryCap = 3;

// P(all of S occur): exact enumeration up to the cutoff, BP above it
// (singletons and pairs from beliefs, |S| == 3 by clamping, larger
// subsets unsupported under the BP backend).
template <typename Scalar>
Scalar event_prob(const IsingParams<Scalar>& params, std::uint32_t subset) {
    if (subset == 0) throw std::invalid_argument("event_prob: empty subset");
    if (params.m <= kExactCutoff) return event_prob(joint_table(params), subset);
    const int k = popcount(subset);
    if (k > kBpJointQueryCap) {
        std::ostringstream os;
        os << "event_prob: |S| = " << k << " unsupported under BP backend (cap "
           << kBpJointQueryCap << ")";
        throw std::invalid_argument(os.str());
    }
    const BpResult<Scalar> base = loopy_bp_raw(params);
    if (k == 1) {
        int i = __builtin_ctz(subset);
        return base.marginals.p_single[i];
    }
    if (k == 2) {
        int i = __builtin_ctz(subset);
        int j = 31 - __builtin_clz(subset);
        // Edge beliefs when the edge exists; clamping for non-adjacent pairs.
        if (params.w(i, j) != Scalar(0)) return base.marginals.p_pair[pair_index(i, j, params.m)];
        return detail::bp_event_prob_clamped(params, subset, base);
    }
    return detail::bp_event_prob_clamped(params, subset, base);
}

// Singleton and pairwise moments: exact below the cutoff, BP beliefs above.
template <typename Scalar>
MomentVector<Scalar> moments(const IsingParams<Scalar>& params) {
    if (params.m <= kExactCutoff) return moments(joint_table(params));
    return loopy_bp_raw(params).marginals;
}

template <typename Scalar>
Vec<Scalar> grad_ce_bp(const IsingParams<Scalar>& params, std::uint32_t subset, Scalar p_target,
                       const BpOptions& opt = {});

// Parameter-facing gradients with the same exact/BP dispatch as event_prob.
template <typename Scalar>
Vec<Scalar> grad_ce(const IsingParams<Scalar>& params, std::uint32_t subset, Scalar p_target) {
    if (params.m <= kExactCutoff) return grad_ce(joint_table(params), subset, p_target);
    return grad_ce_bp(params, subset, p_target, BpOptions{});
}

template <typename Scalar>
Vec<Scalar> grad_event_prob(const IsingParams<Scalar>& params, std::uint32_t subset) {
    if (params.m <= kExactCutoff) return grad_event_prob(joint_table(params), subset);
    // q grad = -q(1-q)/(q - p) * grad_ce at any p != q; use p = 0 so the
    // scale is q/(1-q) against the clamped-conditional difference.
    const Scalar q = event_prob(params, subset);
    const Vec<Scalar> g = grad_ce_bp(params, subset, Scalar(0));
    // grad_ce(p=0) = (q/(1-q)) (E[T|S]-E[T]); rescale to q (E[T|S]-E[T]).
    return (Scalar(1) - q) * g;
}

// Pairwise moments on sparse graphs where exactness matters (trees): edges
// from beliefs, non-adjacent pairs by clamping.
template <typename Scalar>
MomentVector<Scalar> bp_moments_clamped(const IsingParams<Scalar>& params,
                                        const BpOptions& opt = {}) {
    const BpResult<Scalar> base = loopy_bp_raw(params, opt);
    MomentVector<Scalar> mv = base.marginals;
    const int m = params.m;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            if (params.w(i, j) == Scalar(0)) {
                const std::uint32_t mask = (std::uint32_t(1) << i) | (std::uint32_t(1) << j);
                mv.p_pair[pair_index(i, j, m)] =
                    detail::bp_event_prob_clamped(params, mask, base, opt);
            }
    return mv;
}

// Conditional sufficient-statistic expectations under BP via a clamped run;
// used by the gradient path for models beyond the exact cutoff.
template <typename Scalar>
Vec<Scalar> bp_suff_expect(const IsingParams<Scalar>& params, const MomentVector<Scalar>& mv) {
    const int m = params.m;
    Vec<Scalar> s(param_dim(m));
    s.head(m) = mv.p_single;
    s.tail(n_pairs(m)) = mv.p_pair;
    return s;
}

template <typename Scalar>
Vec<Scalar> grad_ce_bp(const IsingParams<Scalar>& params, std::uint32_t subset, Scalar p_target,
                       const BpOptions& opt) {
    const BpResult<Scalar> base = loopy_bp_raw(params, opt);
    const Scalar q = clamp_prob(detail::bp_event_prob_clamped(params, subset, base, opt));
    const ClampedModel<Scalar> cm = clamp_reduce(params, subset);
    MomentVector<Scalar> cond_mv;
    if (cm.reduced.m > 0) cond_mv = loopy_bp_raw(cm.reduced, opt).marginals;
    const int m = params.m;
    Vec<Scalar> cond(param_dim(m));
    // Map reduced beliefs back: clamped coordinates are identically 1.
    Vec<Scalar> single = Vec<Scalar>::Ones(m);
    for (size_t a = 0; a < cm.index_map.size(); ++a) single[cm.index_map[a]] = cond_mv.p_single[a];
    cond.head(m) = single;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            const bool ci = subset >> i & 1u, cj = subset >> j & 1u;
            Scalar pij;
            if (ci && cj) {
                pij = Scalar(1);
            } else if (ci) {
                pij = single[j];
            } else if (cj) {
                pij = single[i];
            } else {
                // both free: reduced-model pair belief
                int a = -1, b = -1;
                for (size_t t = 0; t < cm.index_map.size(); ++t) {
                    if (cm.index_map[t] == i) a = int(t);
                    if (cm.index_map[t] == j) b = int(t);
                }
                pij = cond_mv.p_pair[pair_index(a, b, cm.reduced.m)];
            }
            cond[m + pair_index(i, j, m)] = pij;
        }
    Vec<Scalar> uncond = bp_suff_expect(params, base.marginals);
    // The traded subset's own coupling coordinates dominate the update; give
    // their unconditional pair moments the clamped estimate when they are not
    // graph edges (the belief-product fill is too loose there).
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            if ((subset >> i & 1u) && (subset >> j & 1u) && params.w(i, j) == Scalar(0)) {
                const std::uint32_t pair_mask = (std::uint32_t(1) << i) | (std::uint32_t(1) << j);
                uncond[m + pair_index(i, j, m)] =
                    detail::bp_event_prob_clamped(params, pair_mask, base, opt);
            }
    const Scalar scale = (q - p_target) / (Scalar(1) - q);
    return scale * (cond - uncond);
}

}  // namespace pmm
