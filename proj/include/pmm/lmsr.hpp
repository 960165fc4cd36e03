#pragma once

#include <cmath>

#include "pmm/core.hpp"

namespace pmm {

template <typename Scalar>
struct TradeFill {
    Scalar delta_shares = 0;
    Scalar cash = 0;  // trader pays positive
    Scalar price_pre = 0;
    Scalar price_post = 0;
};

// Two-outcome LMSR book on the net YES-minus-NO imbalance z, cost
// C(z) = b log(1 + e^{z/b}), posted price sigmoid(z/b). Shadow resyncs move z
// without touching the fill ledger; settlement counts real fills only.
template <typename Scalar>
struct BinaryBook {
    Scalar z = 0;
    Scalar b = 1;
    Scalar cumulative_cost = 0;   // cash paid in by traders over real fills
    Scalar shares_outstanding = 0;  // net YES shares sold via real fills

    BinaryBook() = default;
    explicit BinaryBook(Scalar liquidity, Scalar initial_price = Scalar(0.5)) : b(liquidity) {
        z = b * logit(initial_price);
    }

    Scalar cost() const { return b * softplus(z / b); }
};

template <typename Scalar>
Scalar price(const BinaryBook<Scalar>& book) {
    return sigmoid(book.z / book.b);
}

template <typename Scalar>
TradeFill<Scalar> fill_to_price(BinaryBook<Scalar>& book, Scalar p_target) {
    p_target = clamp_prob(p_target);
    TradeFill<Scalar> fill;
    fill.price_pre = price(book);
    const Scalar z_new = book.b * logit(p_target);
    fill.delta_shares = z_new - book.z;
    const Scalar cost_pre = book.cost();
    book.z = z_new;
    fill.cash = book.cost() - cost_pre;
    fill.price_post = price(book);
    book.cumulative_cost += fill.cash;
    book.shares_outstanding += fill.delta_shares;
    return fill;
}

// Buy a fixed number of shares (negative sells).
template <typename Scalar>
TradeFill<Scalar> fill_shares(BinaryBook<Scalar>& book, Scalar delta) {
    TradeFill<Scalar> fill;
    fill.price_pre = price(book);
    fill.delta_shares = delta;
    const Scalar cost_pre = book.cost();
    book.z += delta;
    fill.cash = book.cost() - cost_pre;
    fill.price_post = price(book);
    book.cumulative_cost += fill.cash;
    book.shares_outstanding += delta;
    return fill;
}

// Price change from a YES order of x shares.
template <typename Scalar>
Scalar impact(const BinaryBook<Scalar>& book, Scalar x) {
    return sigmoid((book.z + x) / book.b) - sigmoid(book.z / book.b);
}

// Expected market-maker loss from one informed trade at true probability
// p_true against a posted quote: b KL(p_true || p_posted).
template <typename Scalar>
Scalar expected_loss_kl(Scalar p_true, Scalar p_posted, Scalar b) {
    return b * bernoulli_kl(p_true, p_posted);
}

// Shadow reprice: set the posted quote without cash flow or share issuance.
template <typename Scalar>
void resync_to(BinaryBook<Scalar>& book, Scalar p) {
    book.z = book.b * logit(clamp_prob(p));
}

// Realized market-maker loss at resolution: payout owed on net YES shares
// minus the cash collected over real fills.
template <typename Scalar>
Scalar settle(const BinaryBook<Scalar>& book, int outcome) {
    const Scalar payout = outcome ? book.shares_outstanding : Scalar(0);
    return payout - book.cumulative_cost;
}

}  // namespace pmm
