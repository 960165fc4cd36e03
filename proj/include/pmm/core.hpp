#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace pmm {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VecXd = Vec<double>;
using MatXd = Mat<double>;

// Probability clamp applied before any logit or division by q(1-q).
inline constexpr double kProbEps = 1e-6;

// Exact joint enumeration is used up to this many events; BP above.
inline constexpr int kExactCutoff = 14;

template <typename Scalar>
Scalar clamp_prob(Scalar p, Scalar eps = Scalar(kProbEps)) {
    if (p < eps) return eps;
    if (p > Scalar(1) - eps) return Scalar(1) - eps;
    return p;
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar logit(Scalar p) {
    p = clamp_prob(p);
    return std::log(p) - std::log1p(-p);
}

// log(1 + e^x), overflow-safe.
template <typename Scalar>
Scalar softplus(Scalar x) {
    if (x > Scalar(0)) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

// Binary cross-entropy CE(p, q) = -p log q - (1-p) log(1-q).
template <typename Scalar>
Scalar cross_entropy(Scalar p, Scalar q) {
    q = clamp_prob(q);
    return -p * std::log(q) - (Scalar(1) - p) * std::log1p(-q);
}

// KL(p || q) between Bernoulli distributions.
template <typename Scalar>
Scalar bernoulli_kl(Scalar p, Scalar q) {
    p = clamp_prob(p);
    q = clamp_prob(q);
    return p * std::log(p / q) + (Scalar(1) - p) * std::log((Scalar(1) - p) / (Scalar(1) - q));
}

template <typename Scalar>
Scalar log_sum_exp(const Vec<Scalar>& v) {
    const Scalar m = v.maxCoeff();
    return m + std::log((v.array() - m).exp().sum());
}

// Standard normal CDF.
template <typename Scalar>
Scalar norm_cdf(Scalar x) {
    return Scalar(0.5) * std::erfc(-x / Scalar(std::sqrt(2.0)));
}

template <typename Scalar>
Scalar norm_pdf(Scalar x) {
    static const Scalar inv_sqrt_2pi = Scalar(0.3989422804014326779);
    return inv_sqrt_2pi * std::exp(Scalar(-0.5) * x * x);
}

// Inverse standard normal CDF: Acklam's rational approximation refined by
// one Halley step against erfc, accurate to ~1e-15 on (0,1).
template <typename Scalar>
Scalar norm_quantile(Scalar p) {
    if (!(p > Scalar(0) && p < Scalar(1)))
        throw std::domain_error("norm_quantile: p must be in (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double pl = 0.02425;
    double x;
    const double pd = static_cast<double>(p);
    if (pd < pl) {
        const double q = std::sqrt(-2.0 * std::log(pd));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (pd <= 1.0 - pl) {
        const double q = pd - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-pd));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley refinement.
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - pd;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
    return Scalar(x);
}

// ---- bitmask helpers (event subsets over up to 32 base events) ----

inline int popcount(std::uint32_t m) { return __builtin_popcount(m); }

// Index of pair (i,j), i<j, in row-major strictly-upper-triangular storage.
inline int pair_index(int i, int j, int m) {
    if (i > j) std::swap(i, j);
    return i * m - i * (i + 1) / 2 + (j - i - 1);
}

inline int n_pairs(int m) { return m * (m - 1) / 2; }

// Dimension of the natural-parameter vector (fields then couplings).
inline int param_dim(int m) { return m + n_pairs(m); }

}  // namespace pmm
