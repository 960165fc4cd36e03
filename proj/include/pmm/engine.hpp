#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "pmm/bp.hpp"
#include "pmm/core.hpp"
#include "pmm/ising.hpp"
#include "pmm/lmsr.hpp"

namespace pmm {

// A market is a nonempty set of base events; the contract pays 1 iff all of
// them occur.
struct MarketId {
    std::uint32_t legs = 0;

    int size() const { return popcount(legs); }
    bool valid(int m) const { return legs != 0 && (legs >> m) == 0; }
    friend bool operator==(MarketId a, MarketId b) { return a.legs == b.legs; }
};

template <typename Scalar>
struct TradeRecord {
    long round = 0;
    MarketId market;
    Scalar trader_target = 0;
    Scalar posted_pre = 0;
    Scalar kl_loss = 0;
    TradeFill<Scalar> fill;
};

struct CoherenceViolation {
    std::uint32_t subset = 0;    // S
    std::uint32_t superset = 0;  // T ⊇ S
    double prob_subset = 0;
    double prob_superset = 0;
    double ratio = 0;  // q_T / q_S, > 1 on violation
};

// Monotonicity audit over an arbitrary quote vector: for S ⊆ T any joint law
// requires q_T <= q_S (the Frechet upper bound is the pair case).
template <typename Scalar>
std::vector<CoherenceViolation> coherence_check(
    const std::vector<std::pair<std::uint32_t, Scalar>>& quotes, Scalar tol = Scalar(1e-12)) {
    std::vector<CoherenceViolation> out;
    for (const auto& [s, qs] : quotes)
        for (const auto& [t, qt] : quotes) {
            if (s == t || (s & t) != s) continue;  // need S ⊂ T
            if (qt > qs + tol)
                out.push_back({s, t, double(qs), double(qt), double(qt) / double(qs)});
        }
    return out;
}

// The shared-state AMM: one Ising belief vector generates every quote, each
// trade applies one SGD step, and shadow trades resync every materialized
// book to the updated marginals.
template <typename Scalar>
class ParlayEngine {
public:
    IsingParams<Scalar> params;
    std::unordered_map<std::uint32_t, BinaryBook<Scalar>> books;
    Scalar eta_theta = Scalar(0.2);
    Scalar eta_w = Scalar(0.2);
    Scalar b = Scalar(1);
    std::optional<Scalar> projection_radius;
    long round = 0;

    ParlayEngine() = default;
    ParlayEngine(int m, Scalar eta_theta_, Scalar eta_w_, Scalar liquidity)
        : params(m), eta_theta(eta_theta_), eta_w(eta_w_), b(liquidity) {}
    explicit ParlayEngine(IsingParams<Scalar> p, Scalar eta_theta_ = Scalar(0.2),
                          Scalar eta_w_ = Scalar(0.2), Scalar liquidity = Scalar(1))
        : params(std::move(p)), eta_theta(eta_theta_), eta_w(eta_w_), b(liquidity) {}

    bool exact_backend() const { return params.m <= kExactCutoff; }

    // Current model probability of a market, through the active backend.
    Scalar prob(MarketId id) {
        refresh();
        if (exact_backend()) return sos_[id.legs];
        return event_prob(params, id.legs);
    }

    Scalar quote(MarketId id) {
        if (!id.valid(params.m)) throw std::invalid_argument("quote: invalid market id");
        const Scalar p = prob(id);
        auto it = books.find(id.legs);
        if (it == books.end()) it = books.emplace(id.legs, BinaryBook<Scalar>(b, p)).first;
        resync_to(it->second, p);
        return p;
    }

    std::vector<Scalar> quote_all(const std::vector<MarketId>& family) {
        if (family.empty()) throw std::invalid_argument("quote_all: empty family");
        std::vector<Scalar> out;
        out.reserve(family.size());
        for (MarketId id : family) out.push_back(quote(id));
        return out;
    }

    // Prices only (no book materialization); used for loss-free audits.
    std::vector<Scalar> peek_all(const std::vector<MarketId>& family) {
        std::vector<Scalar> out;
        out.reserve(family.size());
        for (MarketId id : family) out.push_back(prob(id));
        return out;
    }

    TradeRecord<Scalar> process_trade(MarketId id, Scalar p_target) {
        p_target = clamp_prob(p_target);
        TradeRecord<Scalar> rec;
        rec.market = id;
        rec.trader_target = p_target;
        rec.posted_pre = quote(id);
        rec.kl_loss = expected_loss_kl(p_target, rec.posted_pre, b);
        rec.fill = fill_to_price(books.at(id.legs), p_target);

        Vec<Scalar> g;
        if (exact_backend())
            g = grad_ce(table_, id.legs, p_target);
        else
            g = grad_ce_bp(params, id.legs, p_target);
        params.theta -= eta_theta * g.head(params.m);
        params.w_upper -= eta_w * g.tail(n_pairs(params.m));
        if (projection_radius) params.project_to_ball(*projection_radius);
        dirty_ = true;
        rec.round = round++;

        sync_shadow_books();
        return rec;
    }

    // Shadow trades: zero-cash resync of every materialized book to the
    // current marginals.
    void sync_shadow_books() {
        refresh();
        for (auto& [legs, book] : books)
            resync_to(book, exact_backend() ? sos_[legs] : event_prob(params, legs));
    }

    std::vector<CoherenceViolation> coherence_report(const std::vector<MarketId>& family) {
        std::vector<std::pair<std::uint32_t, Scalar>> quotes;
        quotes.reserve(family.size());
        refresh();
        for (MarketId id : family)
            quotes.emplace_back(id.legs, exact_backend() ? sos_[id.legs] : event_prob(params, id.legs));
        return coherence_check(quotes);
    }

private:
    JointTable<Scalar> table_;
    Vec<Scalar> sos_;  // superset sums of the cached table
    bool dirty_ = true;

    void refresh() {
        if (!dirty_) return;
        if (exact_backend()) {
            table_ = joint_table(params);
            sos_ = superset_sums(table_);
        }
        dirty_ = false;
    }

public:
    // Gradient access for diagnostics (exact backend only).
    Vec<Scalar> trade_gradient(MarketId id, Scalar p_target) {
        if (!exact_backend()) throw std::logic_error("trade_gradient: exact backend required");
        refresh();
        return grad_ce(table_, id.legs, clamp_prob(p_target));
    }
};

// ---- checkpoint serialization ----

template <typename Scalar>
nlohmann::json to_json(const IsingParams<Scalar>& p) {
    nlohmann::json j;
    j["m"] = p.m;
    j["theta"] = std::vector<double>(p.theta.data(), p.theta.data() + p.theta.size());
    j["w_upper"] = std::vector<double>(p.w_upper.data(), p.w_upper.data() + p.w_upper.size());
    return j;
}

template <typename Scalar>
IsingParams<Scalar> ising_from_json(const nlohmann::json& j) {
    IsingParams<Scalar> p(j.at("m").get<int>());
    const auto th = j.at("theta").get<std::vector<double>>();
    const auto wu = j.at("w_upper").get<std::vector<double>>();
    if (int(th.size()) != p.m || int(wu.size()) != n_pairs(p.m))
        throw std::invalid_argument("ising_from_json: inconsistent sizes");
    for (int i = 0; i < p.m; ++i) p.theta[i] = Scalar(th[i]);
    for (int k = 0; k < n_pairs(p.m); ++k) p.w_upper[k] = Scalar(wu[k]);
    return p;
}

template <typename Scalar>
nlohmann::json engine_checkpoint(const ParlayEngine<Scalar>& e) {
    nlohmann::json j;
    j["params"] = to_json(e.params);
    j["round"] = e.round;
    j["eta_theta"] = double(e.eta_theta);
    j["eta_w"] = double(e.eta_w);
    j["b"] = double(e.b);
    if (e.projection_radius) j["projection_radius"] = double(*e.projection_radius);
    return j;
}

template <typename Scalar>
ParlayEngine<Scalar> engine_from_checkpoint(const nlohmann::json& j) {
    ParlayEngine<Scalar> e(ising_from_json<Scalar>(j.at("params")), Scalar(j.at("eta_theta").get<double>()),
                           Scalar(j.at("eta_w").get<double>()), Scalar(j.at("b").get<double>()));
    e.round = j.at("round").get<long>();
    if (j.contains("projection_radius")) e.projection_radius = Scalar(j["projection_radius"].get<double>());
    return e;
}

// All nonempty subsets of [m], or restricted families.
enum class Family { complete, base_only, base_pairs, base_pairs_k3 };

inline std::vector<MarketId> make_family(int m, Family f) {
    std::vector<MarketId> out;
    const std::uint32_t n = std::uint32_t(1) << m;
    for (std::uint32_t mask = 1; mask < n; ++mask) {
        const int k = popcount(mask);
        const bool keep = f == Family::complete || (f == Family::base_only && k == 1) ||
                          (f == Family::base_pairs && k <= 2) ||
                          (f == Family::base_pairs_k3 && k <= 3);
        if (keep) out.push_back({mask});
    }
    return out;
}

}  // namespace pmm
