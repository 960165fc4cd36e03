#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "pmm/lmsr.hpp"
#include "pmm/potts.hpp"

namespace pmm {

// Pack (markets, targets) into a map key; parlays are capped at 3 legs and
// categories at 15, so 4 bits per leg suffice.
inline std::uint64_t parlay_key(const CategoricalParlay& p) {
    std::uint64_t key = p.markets;
    int shift = 32;
    for (int t : p.targets) {
        key |= std::uint64_t(t & 0xF) << shift;
        shift += 4;
    }
    return key;
}

// Shared-state multinomial AMM: one Potts belief vector prices every base
// book (K-state LMSR) and every categorical parlay (binary LMSR); each trade
// applies one masked SGD step and shadow-resyncs all materialized books.
template <typename Scalar>
class PottsEngine {
public:
    PottsParams<Scalar> params;
    Scalar eta_theta = Scalar(0.2);
    Scalar eta_w = Scalar(0.2);
    Scalar b = Scalar(10);
    std::vector<KStateBook<Scalar>> base_books;
    long round = 0;

    PottsEngine(std::vector<int> k, Scalar eta, Scalar liquidity)
        : params(std::move(k)), eta_theta(eta), eta_w(eta), b(liquidity) {
        for (int i = 0; i < params.m; ++i) base_books.emplace_back(params.k[i], b);
        build_state_table();
    }

    Vec<Scalar> quote_base(int market) {
        refresh();
        Vec<Scalar> p = Vec<Scalar>::Zero(params.k[market]);
        for (size_t s = 0; s < state_probs_.size(); ++s)
            p[state_cat_[s * params.m + market]] += state_probs_[s];
        kstate_resync(base_books[market], p);
        return p;
    }

    Scalar quote_parlay(const CategoricalParlay& parlay) {
        refresh();
        auto it = books_.find(parlay_key(parlay));
        if (it == books_.end()) {
            it = books_
                     .emplace(parlay_key(parlay),
                              ParlayBook{parlay, match_list(parlay),
                                         BinaryBook<Scalar>(b, Scalar(0.5))})
                     .first;
        }
        const Scalar q = clamp_prob(sum_over(it->second.matches));
        resync_to(it->second.book, q);
        return q;
    }

    // Informed base trade toward a full category distribution.
    Scalar process_base_trade(int market, const Vec<Scalar>& target) {
        const Vec<Scalar> posted = quote_base(market);
        const Scalar kl = expected_loss_kl_cat(target, posted, b);
        kstate_fill_to_target(base_books[market], target);
        potts_base_step(params, market, target, eta_theta, eta_w);
        dirty_ = true;
        ++round;
        sync_all();
        return kl;
    }

    Scalar process_parlay_trade(const CategoricalParlay& parlay, Scalar p_target) {
        p_target = clamp_prob(p_target);
        const Scalar posted = quote_parlay(parlay);
        const Scalar kl = expected_loss_kl(p_target, posted, b);
        fill_to_price(books_.at(parlay_key(parlay)).book, p_target);
        potts_sgd_step(params, parlay, p_target, eta_theta, eta_w);
        dirty_ = true;
        ++round;
        sync_all();
        return kl;
    }

    void sync_all() {
        refresh();
        for (int i = 0; i < params.m; ++i) {
            Vec<Scalar> p = Vec<Scalar>::Zero(params.k[i]);
            for (size_t s = 0; s < state_probs_.size(); ++s)
                p[state_cat_[s * params.m + i]] += state_probs_[s];
            kstate_resync(base_books[i], p);
        }
        for (auto& [key, pb] : books_) resync_to(pb.book, clamp_prob(sum_over(pb.matches)));
    }

private:
    struct ParlayBook {
        CategoricalParlay parlay;
        std::vector<int> matches;  // indices of matching joint states
        BinaryBook<Scalar> book;
    };

    std::unordered_map<std::uint64_t, ParlayBook> books_;
    std::vector<Scalar> state_probs_;
    std::vector<std::int8_t> state_cat_;  // state index * m + market -> category
    bool dirty_ = true;

    void build_state_table() {
        const auto n = size_t(params.state_count());
        if (std::int64_t(n) > kPottsExactCutoff)
            throw std::length_error("PottsEngine: state space beyond the exact cutoff");
        state_cat_.resize(n * params.m);
        std::vector<int> x(params.m, 0);
        for (size_t s = 0; s < n; ++s) {
            for (int i = 0; i < params.m; ++i) state_cat_[s * params.m + i] = std::int8_t(x[i]);
            for (int i = 0; i < params.m; ++i) {
                if (++x[i] < params.k[i]) break;
                x[i] = 0;
            }
        }
        state_probs_.assign(n, Scalar(0));
    }

    void refresh() {
        if (!dirty_) return;
        const size_t n = state_probs_.size();
        Vec<Scalar> energy(n);
        for (size_t s = 0; s < n; ++s) {
            Scalar e = 0;
            const std::int8_t* cats = &state_cat_[s * params.m];
            for (int i = 0; i < params.m; ++i) e += params.theta[i][cats[i]];
            for (int i = 0; i < params.m; ++i)
                for (int j = i + 1; j < params.m; ++j)
                    e += params.w_at(i, j)(cats[i], cats[j]);
            energy[Eigen::Index(s)] = e;
        }
        const Scalar lse = log_sum_exp(energy);
        for (size_t s = 0; s < n; ++s) state_probs_[s] = std::exp(energy[Eigen::Index(s)] - lse);
        dirty_ = false;
    }

    std::vector<int> match_list(const CategoricalParlay& parlay) const {
        std::vector<int> out;
        for (size_t s = 0; s < state_probs_.size(); ++s) {
            bool ok = true;
            int t = 0;
            for (int i = 0; i < params.m && ok; ++i)
                if (parlay.markets >> i & 1u) {
                    if (state_cat_[s * params.m + i] != parlay.targets[t]) ok = false;
                    ++t;
                }
            if (ok) out.push_back(int(s));
        }
        return out;
    }

    Scalar sum_over(const std::vector<int>& idx) const {
        Scalar q = 0;
        for (int s : idx) q += state_probs_[s];
        return q;
    }
};

// Disjoint market makers: a K-state book per base market and an isolated
// binary book per categorical parlay, initialized at the product of uniform
// category probabilities.
template <typename Scalar>
class IndependentCategorical {
public:
    // uniform_model_init prices a fresh parlay book at the uniform-Potts
    // probability of its outcome vector; otherwise each contract opens as a
    // fresh two-state LMSR at 0.5.
    IndependentCategorical(std::vector<int> k, Scalar liquidity, bool uniform_model_init = false)
        : k_(std::move(k)), b_(liquidity), uniform_model_init_(uniform_model_init) {
        for (int ki : k_) base_books_.emplace_back(ki, b_);
    }

    Vec<Scalar> quote_base(int market) { return base_books_[market].prices(); }

    Scalar quote_parlay(const CategoricalParlay& parlay) { return price(book(parlay)); }

    Scalar process_base_trade(int market, const Vec<Scalar>& target) {
        const Scalar kl = expected_loss_kl_cat(target, base_books_[market].prices(), b_);
        kstate_fill_to_target(base_books_[market], target);
        return kl;
    }

    Scalar process_parlay_trade(const CategoricalParlay& parlay, Scalar p_target) {
        p_target = clamp_prob(p_target);
        auto& bk = book(parlay);
        const Scalar kl = expected_loss_kl(p_target, price(bk), b_);
        fill_to_price(bk, p_target);
        return kl;
    }

private:
    std::vector<int> k_;
    Scalar b_;
    bool uniform_model_init_;
    std::vector<KStateBook<Scalar>> base_books_;
    std::unordered_map<std::uint64_t, BinaryBook<Scalar>> books_;

    BinaryBook<Scalar>& book(const CategoricalParlay& parlay) {
        const std::uint64_t key = parlay_key(parlay);
        auto it = books_.find(key);
        if (it == books_.end()) {
            Scalar p0 = Scalar(0.5);
            if (uniform_model_init_) {
                p0 = 1;
                for (size_t i = 0; i < k_.size(); ++i)
                    if (parlay.markets >> i & 1u) p0 /= Scalar(k_[i]);
            }
            it = books_.emplace(key, BinaryBook<Scalar>(b_, clamp_prob(p0))).first;
        }
        return it->second;
    }
};

// Quotes the exact conditional truth each step.
template <typename Scalar>
class CategoricalTrueOracle {
public:
    CategoricalTrueOracle(const CategoricalWorld<Scalar>* world, Scalar liquidity)
        : world_(world), b_(liquidity) {}

    Scalar process_base_trade(int market, const Vec<Scalar>& target) {
        return expected_loss_kl_cat(target, categorical_signal_vec(*world_, market), b_);
    }

    Scalar process_parlay_trade(const CategoricalParlay& parlay, Scalar p_target) {
        return expected_loss_kl(clamp_prob(p_target),
                                clamp_prob(joint_categorical_signal(*world_, parlay)), b_);
    }

private:
    const CategoricalWorld<Scalar>* world_;
    Scalar b_;
};

}  // namespace pmm
