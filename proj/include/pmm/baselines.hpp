#pragma once

#include <cstdint>
#include <memory>
#include <unordered_map>
#include <variant>
#include <vector>

#include "pmm/engine.hpp"
#include "pmm/ising.hpp"
#include "pmm/lmsr.hpp"
#include "pmm/world.hpp"

namespace pmm {

enum class PricerKind {
    parlay_amm,
    independent_lmsr,
    product_independence,
    pairwise_oracle,
    gaussian_oracle,
    true_oracle,
};

inline const char* pricer_name(PricerKind k) {
    switch (k) {
        case PricerKind::parlay_amm: return "parlay_amm";
        case PricerKind::independent_lmsr: return "independent_lmsr";
        case PricerKind::product_independence: return "product_independence";
        case PricerKind::pairwise_oracle: return "pairwise_oracle";
        case PricerKind::gaussian_oracle: return "gaussian_oracle";
        case PricerKind::true_oracle: return "true_oracle";
    }
    return "?";
}

struct TradeOutcome {
    double posted_pre = 0;
    double kl_loss = 0;
};

// One isolated LMSR book per market; parlay books open at the uniform-model
// price 2^{-|S|} (configurable to 0.5).
template <typename Scalar>
class IndependentLmsr {
public:
    IndependentLmsr(int m, Scalar b, bool uniform_model_init = true)
        : m_(m), b_(b), uniform_model_init_(uniform_model_init) {}

    Scalar quote(MarketId id) { return price(book(id)); }

    TradeOutcome process_trade(MarketId id, Scalar p_target) {
        auto& bk = book(id);
        TradeOutcome out;
        out.posted_pre = double(price(bk));
        out.kl_loss = double(expected_loss_kl(p_target, price(bk), b_));
        fill_to_price(bk, p_target);
        return out;
    }

private:
    int m_;
    Scalar b_;
    bool uniform_model_init_;
    std::unordered_map<std::uint32_t, BinaryBook<Scalar>> books_;

    BinaryBook<Scalar>& book(MarketId id) {
        auto it = books_.find(id.legs);
        if (it == books_.end()) {
            const Scalar p0 =
                uniform_model_init_ ? Scalar(std::pow(0.5, popcount(id.legs))) : Scalar(0.5);
            it = books_.emplace(id.legs, BinaryBook<Scalar>(b_, p0)).first;
        }
        return it->second;
    }
};

// Base books only; parlays quoted as the product of leg prices. Parlay
// trades never propagate to the base books.
template <typename Scalar>
class ProductIndependence {
public:
    ProductIndependence(int m, Scalar b) : m_(m), b_(b) {
        books_.reserve(m);
        for (int i = 0; i < m; ++i) books_.emplace_back(b, Scalar(0.5));
    }

    Scalar quote(MarketId id) {
        Scalar p = 1;
        for (int i = 0; i < m_; ++i)
            if (id.legs >> i & 1u) p *= price(books_[i]);
        return p;
    }

    TradeOutcome process_trade(MarketId id, Scalar p_target) {
        TradeOutcome out;
        out.posted_pre = double(quote(id));
        out.kl_loss = double(expected_loss_kl(p_target, Scalar(out.posted_pre), b_));
        if (popcount(id.legs) == 1) fill_to_price(books_[__builtin_ctz(id.legs)], p_target);
        return out;
    }

private:
    int m_;
    Scalar b_;
    std::vector<BinaryBook<Scalar>> books_;
};

// Ising model fitted once to the exact true singleton/pair moments; quotes
// never move.
template <typename Scalar>
class PairwiseOracle {
public:
    PairwiseOracle(const IsingParams<Scalar>& fitted, Scalar b) : b_(b), params_(fitted) {
        sos_ = superset_sums(joint_table(params_));
    }

    static PairwiseOracle fit_from_world(const GaussianWorld<Scalar>& world, Scalar b,
                                         Scalar tol = Scalar(1e-8)) {
        return PairwiseOracle(fit_to_moments(true_moments(world), tol), b);
    }

    Scalar quote(MarketId id) const { return sos_[id.legs]; }

    TradeOutcome process_trade(MarketId id, Scalar p_target) {
        TradeOutcome out;
        out.posted_pre = double(quote(id));
        out.kl_loss = double(expected_loss_kl(p_target, Scalar(out.posted_pre), b_));
        return out;
    }

    const IsingParams<Scalar>& params() const { return params_; }

private:
    Scalar b_;
    IsingParams<Scalar> params_;
    Vec<Scalar> sos_;
};

// Prices joint events through the true Gaussian copula, frozen at
// construction time; informative exactly then, stale afterwards.
template <typename Scalar>
class GaussianOracle {
public:
    GaussianOracle(const GaussianWorld<Scalar>& world, Scalar b) : b_(b), frozen_(world) {}

    Scalar quote(MarketId id) {
        auto it = cache_.find(id.legs);
        if (it == cache_.end()) it = cache_.emplace(id.legs, parlay_signal(frozen_, id)).first;
        return it->second;
    }

    TradeOutcome process_trade(MarketId id, Scalar p_target) {
        TradeOutcome out;
        out.posted_pre = double(quote(id));
        out.kl_loss = double(expected_loss_kl(p_target, Scalar(out.posted_pre), b_));
        return out;
    }

private:
    Scalar b_;
    GaussianWorld<Scalar> frozen_;
    std::unordered_map<std::uint32_t, Scalar> cache_;
};

// Quotes the current conditional truth; the lower bound on achievable loss.
template <typename Scalar>
class TrueOracle {
public:
    TrueOracle(const GaussianWorld<Scalar>* world, Scalar b) : b_(b), world_(world) {}

    Scalar quote(MarketId id) { return parlay_signal(*world_, id); }

    TradeOutcome process_trade(MarketId id, Scalar p_target) {
        TradeOutcome out;
        out.posted_pre = double(quote(id));
        out.kl_loss = double(expected_loss_kl(p_target, Scalar(out.posted_pre), b_));
        return out;
    }

private:
    Scalar b_;
    const GaussianWorld<Scalar>* world_;
};

// Uniform run-time interface over the engine and the four baselines.
template <typename Scalar>
class Pricer {
public:
    using Variant = std::variant<ParlayEngine<Scalar>, IndependentLmsr<Scalar>,
                                 ProductIndependence<Scalar>, PairwiseOracle<Scalar>,
                                 GaussianOracle<Scalar>, TrueOracle<Scalar>>;

    explicit Pricer(Variant v) : v_(std::move(v)) {}

    Scalar quote(MarketId id) {
        return std::visit([&](auto& p) { return p.quote(id); }, v_);
    }

    TradeOutcome process_trade(MarketId id, Scalar p_target) {
        return std::visit(
            [&](auto& p) -> TradeOutcome {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, ParlayEngine<Scalar>>) {
                    const auto rec = p.process_trade(id, p_target);
                    return {double(rec.posted_pre), double(rec.kl_loss)};
                } else {
                    return p.process_trade(id, p_target);
                }
            },
            v_);
    }

    ParlayEngine<Scalar>* engine() { return std::get_if<ParlayEngine<Scalar>>(&v_); }

private:
    Variant v_;
};

}  // namespace pmm
