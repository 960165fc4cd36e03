#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "pmm/core.hpp"

namespace pmm {

// Natural parameters of the pairwise binary exponential family: per-event
// fields theta and symmetric couplings with zero diagonal, stored as the
// strictly-upper triangle in row-major order.
template <typename Scalar>
struct IsingParams {
    int m = 0;
    Vec<Scalar> theta;    // length m
    Vec<Scalar> w_upper;  // length m(m-1)/2

    IsingParams() = default;
    explicit IsingParams(int m_)
        : m(m_), theta(Vec<Scalar>::Zero(m_)), w_upper(Vec<Scalar>::Zero(n_pairs(m_))) {}

    Scalar w(int i, int j) const {
        if (i == j) return Scalar(0);
        return w_upper[pair_index(i, j, m)];
    }
    Scalar& w_ref(int i, int j) { return w_upper[pair_index(i, j, m)]; }

    int dim() const { return param_dim(m); }

    // Flattened view (fields first, then couplings) and its inverse.
    Vec<Scalar> flat() const {
        Vec<Scalar> v(dim());
        v.head(m) = theta;
        v.tail(n_pairs(m)) = w_upper;
        return v;
    }
    void set_flat(const Vec<Scalar>& v) {
        theta = v.head(m);
        w_upper = v.tail(n_pairs(m));
    }

    Scalar norm() const { return std::sqrt(theta.squaredNorm() + w_upper.squaredNorm()); }

    // Scale onto the ball of radius `radius` if outside it.
    void project_to_ball(Scalar radius) {
        const Scalar n = norm();
        if (n > radius) {
            const Scalar s = radius / n;
            theta *= s;
            w_upper *= s;
        }
    }

    bool all_finite() const { return theta.allFinite() && w_upper.allFinite(); }
};

// Explicit probability table over 2^m outcomes, indexed by bitmask.
template <typename Scalar>
struct JointTable {
    int m = 0;
    Vec<Scalar> probs;  // length 2^m, sums to 1

    std::uint32_t size() const { return std::uint32_t(1) << m; }
};

// Target moments: event probabilities and joint pair probabilities.
template <typename Scalar>
struct MomentVector {
    Vec<Scalar> p_single;  // length m
    Vec<Scalar> p_pair;    // length m(m-1)/2, row-major upper triangle

    int m() const { return int(p_single.size()); }
};

// Strict interior of the pairwise marginal polytope.
template <typename Scalar>
void validate_moment_vector(const MomentVector<Scalar>& mv) {
    const int m = mv.m();
    for (int i = 0; i < m; ++i)
        if (!(mv.p_single[i] > Scalar(0) && mv.p_single[i] < Scalar(1)))
            throw std::invalid_argument("moment vector: singleton probability not interior");
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            const Scalar pi = mv.p_single[i], pj = mv.p_single[j];
            const Scalar pij = mv.p_pair[pair_index(i, j, m)];
            const Scalar lo = std::max(Scalar(0), pi + pj - Scalar(1));
            const Scalar hi = std::min(pi, pj);
            if (!(pij > lo && pij < hi))
                throw std::invalid_argument("moment vector: pair probability outside Frechet interior");
        }
}

namespace detail {
inline void check_exact_dim(int m) {
    if (m > kExactCutoff) {
        std::ostringstream os;
        os << "exact inference requires m <= " << kExactCutoff << ", got m = " << m;
        throw std::length_error(os.str());
    }
}
}  // namespace detail

// P(x) ∝ exp(Σ θ_i x_i + Σ_{i<j} W_ij x_i x_j), normalized by enumeration.
template <typename Scalar>
JointTable<Scalar> joint_table(const IsingParams<Scalar>& params) {
    detail::check_exact_dim(params.m);
    const int m = params.m;
    const std::uint32_t n = std::uint32_t(1) << m;
    Vec<Scalar> energy(n);
    int bits[32];
    for (std::uint32_t x = 0; x < n; ++x) {
        Scalar e = 0;
        int nb = 0;
        for (int i = 0; i < m; ++i)
            if (x >> i & 1u) {
                e += params.theta[i];
                bits[nb++] = i;
            }
        for (int a = 0; a < nb; ++a)
            for (int b = a + 1; b < nb; ++b) e += params.w_upper[pair_index(bits[a], bits[b], m)];
        energy[x] = e;
    }
    const Scalar lse = log_sum_exp(energy);
    JointTable<Scalar> table;
    table.m = m;
    table.probs = (energy.array() - lse).exp();
    return table;
}

// Log partition function by enumeration.
template <typename Scalar>
Scalar log_partition(const IsingParams<Scalar>& params) {
    detail::check_exact_dim(params.m);
    const int m = params.m;
    const std::uint32_t n = std::uint32_t(1) << m;
    Vec<Scalar> energy(n);
    int bits[32];
    for (std::uint32_t x = 0; x < n; ++x) {
        Scalar e = 0;
        int nb = 0;
        for (int i = 0; i < m; ++i)
            if (x >> i & 1u) {
                e += params.theta[i];
                bits[nb++] = i;
            }
        for (int a = 0; a < nb; ++a)
            for (int b = a + 1; b < nb; ++b) e += params.w_upper[pair_index(bits[a], bits[b], m)];
        energy[x] = e;
    }
    return log_sum_exp(energy);
}

// Superset sums f[S] = Σ_{x ⊇ S} p(x), for every mask at once.
template <typename Scalar>
Vec<Scalar> superset_sums(const JointTable<Scalar>& table) {
    Vec<Scalar> f = table.probs;
    const std::uint32_t n = table.size();
    for (int b = 0; b < table.m; ++b) {
        const std::uint32_t bit = std::uint32_t(1) << b;
        for (std::uint32_t x = 0; x < n; ++x)
            if (!(x & bit)) f[x] += f[x | bit];
    }
    return f;
}

// P(all events in `subset` occur), from an existing table.
template <typename Scalar>
Scalar event_prob(const JointTable<Scalar>& table, std::uint32_t subset) {
    Scalar q = 0;
    const std::uint32_t n = table.size();
    for (std::uint32_t x = subset; x < n; ++x)
        if ((x & subset) == subset) q += table.probs[x];
    return q;
}

// P(events in `yes` occur and events in `no` do not).
template <typename Scalar>
Scalar event_prob_sided(const JointTable<Scalar>& table, std::uint32_t yes, std::uint32_t no) {
    Scalar q = 0;
    const std::uint32_t n = table.size();
    for (std::uint32_t x = 0; x < n; ++x)
        if ((x & yes) == yes && (x & no) == 0) q += table.probs[x];
    return q;
}

// E[T(X)] with T = (X_1..X_m, X_i X_j) over masks where `pred` holds,
// renormalized. pred(x) == true for all x gives the unconditional moments.
template <typename Scalar, typename Pred>
Vec<Scalar> masked_suff_expect(const JointTable<Scalar>& table, Pred&& pred) {
    const int m = table.m;
    Vec<Scalar> s = Vec<Scalar>::Zero(param_dim(m));
    Scalar z = 0;
    const std::uint32_t n = table.size();
    int bits[32];
    for (std::uint32_t x = 0; x < n; ++x) {
        if (!pred(x)) continue;
        const Scalar p = table.probs[x];
        z += p;
        int nb = 0;
        for (int i = 0; i < m; ++i)
            if (x >> i & 1u) {
                s[i] += p;
                bits[nb++] = i;
            }
        for (int a = 0; a < nb; ++a)
            for (int b = a + 1; b < nb; ++b) s[m + pair_index(bits[a], bits[b], m)] += p;
    }
    if (z <= Scalar(0)) throw std::runtime_error("masked_suff_expect: event has zero probability");
    return s / z;
}

template <typename Scalar>
Vec<Scalar> suff_expect(const JointTable<Scalar>& table) {
    return masked_suff_expect(table, [](std::uint32_t) { return true; });
}

template <typename Scalar>
Vec<Scalar> cond_suff_expect(const JointTable<Scalar>& table, std::uint32_t subset) {
    return masked_suff_expect(table, [subset](std::uint32_t x) { return (x & subset) == subset; });
}

template <typename Scalar>
Vec<Scalar> cond_suff_expect_sided(const JointTable<Scalar>& table, std::uint32_t yes,
                                   std::uint32_t no) {
    return masked_suff_expect(
        table, [yes, no](std::uint32_t x) { return (x & yes) == yes && (x & no) == 0; });
}

template <typename Scalar>
MomentVector<Scalar> moments(const JointTable<Scalar>& table) {
    const Vec<Scalar> s = suff_expect(table);
    MomentVector<Scalar> mv;
    mv.p_single = s.head(table.m);
    mv.p_pair = s.tail(n_pairs(table.m));
    return mv;
}

// ∇_φ q_S = q_S (E[T|S] - E[T])  (covariance identity).
template <typename Scalar>
Vec<Scalar> grad_event_prob(const JointTable<Scalar>& table, std::uint32_t subset) {
    const Scalar q = event_prob(table, subset);
    return q * (cond_suff_expect(table, subset) - suff_expect(table));
}

// ∇_φ CE(p_target, q_S) = ((q - p)/(1 - q)) (E[T|S] - E[T]), q clamped
// before the division.
template <typename Scalar>
Vec<Scalar> grad_ce(const JointTable<Scalar>& table, std::uint32_t subset, Scalar p_target) {
    const Scalar q = clamp_prob(event_prob(table, subset));
    const Scalar scale = (q - p_target) / (Scalar(1) - q);
    return scale * (cond_suff_expect(table, subset) - suff_expect(table));
}

// Same gradient for a mixed-side event (used by the replay pipeline).
template <typename Scalar>
Vec<Scalar> grad_ce_sided(const JointTable<Scalar>& table, std::uint32_t yes, std::uint32_t no,
                          Scalar p_target) {
    const Scalar q = clamp_prob(event_prob_sided(table, yes, no));
    const Scalar scale = (q - p_target) / (Scalar(1) - q);
    return scale * (cond_suff_expect_sided(table, yes, no) - suff_expect(table));
}

// Parameter-facing overloads that dispatch between exact enumeration and
// loopy BP live in bp.hpp; these exact variants build the table once.
template <typename Scalar>
Scalar event_prob_exact(const IsingParams<Scalar>& params, std::uint32_t subset) {
    return event_prob(joint_table(params), subset);
}

template <typename Scalar>
MomentVector<Scalar> moments_exact(const IsingParams<Scalar>& params) {
    return moments(joint_table(params));
}

// Composite cross-entropy loss over singleton and pair events with unit
// weights unless given: Σ_E λ_E CE(target_E, q_E(φ)).
template <typename Scalar>
Scalar composite_loss(const IsingParams<Scalar>& params, const MomentVector<Scalar>& target,
                      const Vec<Scalar>* weights = nullptr) {
    const JointTable<Scalar> table = joint_table(params);
    const MomentVector<Scalar> mv = moments(table);
    const int m = params.m;
    Scalar loss = 0;
    for (int i = 0; i < m; ++i) {
        const Scalar w = weights ? (*weights)[i] : Scalar(1);
        loss += w * cross_entropy(target.p_single[i], mv.p_single[i]);
    }
    for (int k = 0; k < n_pairs(m); ++k) {
        const Scalar w = weights ? (*weights)[m + k] : Scalar(1);
        loss += w * cross_entropy(target.p_pair[k], mv.p_pair[k]);
    }
    return loss;
}

template <typename Scalar>
Vec<Scalar> composite_grad(const IsingParams<Scalar>& params, const MomentVector<Scalar>& target,
                           const Vec<Scalar>* weights = nullptr) {
    const JointTable<Scalar> table = joint_table(params);
    const Vec<Scalar> base = suff_expect(table);
    const int m = params.m;
    Vec<Scalar> g = Vec<Scalar>::Zero(params.dim());
    auto add_event = [&](std::uint32_t mask, Scalar tgt, Scalar w) {
        const Scalar q = clamp_prob(event_prob(table, mask));
        const Scalar scale = w * (q - tgt) / (Scalar(1) - q);
        g += scale * (cond_suff_expect(table, mask) - base);
    };
    for (int i = 0; i < m; ++i)
        add_event(std::uint32_t(1) << i, target.p_single[i], weights ? (*weights)[i] : Scalar(1));
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            const int k = pair_index(i, j, m);
            add_event((std::uint32_t(1) << i) | (std::uint32_t(1) << j), target.p_pair[k],
                      weights ? (*weights)[m + k] : Scalar(1));
        }
    return g;
}

namespace detail {

// Masks of the sufficient statistics in flat order: singleton bits first,
// then pair unions.
inline std::vector<std::uint32_t> stat_masks(int m) {
    std::vector<std::uint32_t> masks;
    masks.reserve(param_dim(m));
    for (int i = 0; i < m; ++i) masks.push_back(std::uint32_t(1) << i);
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            masks.push_back((std::uint32_t(1) << i) | (std::uint32_t(1) << j));
    return masks;
}

}  // namespace detail

// Exact Hessian of the composite loss, assembled from superset sums: every
// entry E[T_a T_b] is the probability of the union event, so one pass over
// the table prices the whole matrix.
template <typename Scalar>
Mat<Scalar> composite_hessian_exact(const IsingParams<Scalar>& params,
                                    const MomentVector<Scalar>& target,
                                    const Vec<Scalar>* weights = nullptr) {
    const int m = params.m;
    const int d = params.dim();
    const JointTable<Scalar> table = joint_table(params);
    const Vec<Scalar> sos = superset_sums(table);
    const auto masks = detail::stat_masks(m);

    Vec<Scalar> u(d);  // E[T]
    for (int a = 0; a < d; ++a) u[a] = sos[masks[a]];
    Mat<Scalar> big(d, d);  // E[T T^T]
    for (int a = 0; a < d; ++a)
        for (int b = a; b < d; ++b) big(a, b) = big(b, a) = sos[masks[a] | masks[b]];

    Mat<Scalar> h = Mat<Scalar>::Zero(d, d);
    for (int e = 0; e < d; ++e) {
        const std::uint32_t emask = masks[e];
        const Scalar q = sos[emask];
        const Scalar qc = clamp_prob(q);
        const Scalar tgt = e < m ? target.p_single[e] : target.p_pair[e - m];
        const Scalar lam = weights ? (*weights)[e] : Scalar(1);
        Vec<Scalar> c(d);  // E[T | E]
        Mat<Scalar> me(d, d);
        for (int a = 0; a < d; ++a) c[a] = sos[masks[a] | emask] / qc;
        for (int a = 0; a < d; ++a)
            for (int b = a; b < d; ++b) me(a, b) = me(b, a) = sos[masks[a] | masks[b] | emask] / qc;
        const Vec<Scalar> grad_q = q * (c - u);
        const Scalar denom = qc * (Scalar(1) - qc);
        const Scalar s = (q - tgt) / denom;
        // Hess of q: q [M^E - M - c u^T - u c^T + 2 u u^T]
        h += lam * (grad_q * grad_q.transpose()) / denom;
        h += lam * s * q *
             (me - big - c * u.transpose() - u * c.transpose() + 2 * u * u.transpose());
    }
    return h;
}

// I-projection onto the Ising family: damped Newton steps on the composite
// loss (whose unique minimizer is the moment match), falling back to plain
// gradient steps whenever the Hessian solve is unusable. Stops at max moment
// gap <= tol.
template <typename Scalar>
IsingParams<Scalar> fit_to_moments(const MomentVector<Scalar>& target, Scalar tol = Scalar(1e-8),
                                   int max_iter = 10000) {
    validate_moment_vector(target);
    const int m = target.m();
    detail::check_exact_dim(m);
    IsingParams<Scalar> params(m);

    auto moment_gap = [&](const IsingParams<Scalar>& p) {
        const MomentVector<Scalar> mv = moments(joint_table(p));
        Scalar gap = (mv.p_single - target.p_single).cwiseAbs().maxCoeff();
        if (m > 1) gap = std::max(gap, (mv.p_pair - target.p_pair).cwiseAbs().maxCoeff());
        return gap;
    };

    Scalar loss = composite_loss(params, target);
    for (int iter = 0; iter < max_iter; ++iter) {
        if (moment_gap(params) <= tol) return params;
        const Vec<Scalar> g = composite_grad(params, target);
        Vec<Scalar> dir = g;  // gradient fallback
        Mat<Scalar> h = composite_hessian_exact(params, target);
        h.diagonal().array() += Scalar(1e-10);
        const Eigen::LDLT<Mat<Scalar>> ldlt(h);
        if (ldlt.info() == Eigen::Success) {
            const Vec<Scalar> nd = ldlt.solve(g);
            if (nd.allFinite() && nd.dot(g) > Scalar(0)) dir = nd;
        }
        const Vec<Scalar> flat = params.flat();
        IsingParams<Scalar> cand(m);
        Scalar step = Scalar(1);
        bool accepted = false;
        for (int halvings = 0; halvings < 60; ++halvings) {
            cand.set_flat(flat - step * dir);
            const Scalar cand_loss = composite_loss(cand, target);
            if (cand_loss <= loss) {
                params = cand;
                loss = cand_loss;
                accepted = true;
                break;
            }
            step *= Scalar(0.5);
        }
        if (!accepted) {
            if (moment_gap(params) <= tol) return params;
            std::ostringstream os;
            os << "fit_to_moments: line search stalled, moment gap " << moment_gap(params);
            throw std::runtime_error(os.str());
        }
    }
    const Scalar gap = moment_gap(params);
    if (gap <= tol) return params;
    std::ostringstream os;
    os << "fit_to_moments: no convergence after " << max_iter << " iterations, moment gap " << gap;
    throw std::runtime_error(os.str());
}

// Per-event curvature of the composite loss, each CE term differentiated
// along its own natural coordinate (theta_i for singleton events, W_ij for
// pair events). Along that coordinate q_E is an exact logistic, so the
// curvature is λ_E q_E (1 - q_E) independent of the target; the result is
// diagonal by construction.
template <typename Scalar>
Mat<Scalar> hessian_composite(const IsingParams<Scalar>& params, const Vec<Scalar>& weights,
                              const MomentVector<Scalar>& targets) {
    detail::check_exact_dim(params.m);
    (void)targets;  // CE curvature in the natural parameter does not depend on the target
    const int m = params.m;
    const int d = params.dim();
    if (weights.size() != d) throw std::invalid_argument("hessian_composite: weights size != dim");
    const JointTable<Scalar> table = joint_table(params);
    Mat<Scalar> h = Mat<Scalar>::Zero(d, d);
    for (int i = 0; i < m; ++i) {
        const Scalar q = event_prob(table, std::uint32_t(1) << i);
        h(i, i) = weights[i] * q * (Scalar(1) - q);
    }
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            const int k = m + pair_index(i, j, m);
            const Scalar q = event_prob(table, (std::uint32_t(1) << i) | (std::uint32_t(1) << j));
            h(k, k) = weights[k] * q * (Scalar(1) - q);
        }
    return h;
}

// Clamp the events in `subset` to 1: returns the reduced model over the
// remaining variables, the additive log-weight constant of the clamped part,
// and the map from reduced indices to original indices.
template <typename Scalar>
struct ClampedModel {
    IsingParams<Scalar> reduced;
    Scalar log_const = 0;
    std::vector<int> index_map;  // reduced index -> original index
};

template <typename Scalar>
ClampedModel<Scalar> clamp_reduce(const IsingParams<Scalar>& params, std::uint32_t subset) {
    const int m = params.m;
    ClampedModel<Scalar> out;
    std::vector<int> keep;
    for (int i = 0; i < m; ++i)
        if (!(subset >> i & 1u)) keep.push_back(i);
    out.index_map = keep;
    out.reduced = IsingParams<Scalar>(int(keep.size()));
    for (int i = 0; i < m; ++i)
        if (subset >> i & 1u) out.log_const += params.theta[i];
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            if ((subset >> i & 1u) && (subset >> j & 1u)) out.log_const += params.w(i, j);
    for (size_t a = 0; a < keep.size(); ++a) {
        Scalar th = params.theta[keep[a]];
        for (int i = 0; i < m; ++i)
            if (subset >> i & 1u) th += params.w(i, keep[a]);
        out.reduced.theta[a] = th;
        for (size_t b = a + 1; b < keep.size(); ++b)
            out.reduced.w_ref(int(a), int(b)) = params.w(keep[a], keep[b]);
    }
    return out;
}

}  // namespace pmm
