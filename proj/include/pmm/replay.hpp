#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "pmm/bp.hpp"
#include "pmm/ising.hpp"
#include "pmm/lmsr.hpp"

namespace pmm {

struct CandleRecord {
    std::string market_key;
    std::int64_t ts = 0;  // milliseconds
    double mid = 0.5;
};

struct ComboLeg {
    std::string market_key;
    bool yes = true;
};

struct ComboTrade {
    std::int64_t ts = 0;
    std::vector<ComboLeg> legs;
    double exec_price = 0.5;
    double size = 1.0;
};

struct ReplayEvent {
    std::int64_t ts() const {
        return std::holds_alternative<CandleRecord>(body) ? std::get<CandleRecord>(body).ts
                                                          : std::get<ComboTrade>(body).ts;
    }
    std::variant<CandleRecord, ComboTrade> body;
};

// Canonical all-YES representation of a mixed-side event: terms of the
// alternating expansion P(A yes, B no) = sum_{C subset B} (-1)^{|C|} P(A u C),
// priced through the supplied lookup (observed quotes where available, model
// values otherwise). A uniform additive fee on every observed term cancels
// exactly whenever B is nonempty.
struct CanonicalTarget {
    std::vector<std::pair<std::uint32_t, int>> terms;  // (subset, sign)
    double target_prob = 0;
};

using YesPriceLookup = std::function<std::optional<double>(std::uint32_t)>;

inline CanonicalTarget canonicalize_masks(std::uint32_t yes_mask, std::uint32_t no_mask,
                                          const YesPriceLookup& lookup) {
    if (yes_mask == 0 && no_mask == 0)
        throw std::invalid_argument("canonicalize: empty leg set");
    if ((yes_mask & no_mask) != 0)
        throw std::invalid_argument("canonicalize: leg on both sides");
    if (popcount(no_mask) > 12)
        throw std::invalid_argument("canonicalize: NO-side expansion too large");
    CanonicalTarget out;
    std::vector<std::uint32_t> missing;
    double acc = 0;
    std::uint32_t sub = no_mask;
    while (true) {
        const int sign = popcount(sub) % 2 == 0 ? 1 : -1;
        const std::uint32_t term = yes_mask | sub;
        out.terms.emplace_back(term, sign);
        if (const auto p = lookup(term))
            acc += sign * *p;
        else
            missing.push_back(term);
        if (sub == 0) break;
        sub = (sub - 1) & no_mask;
    }
    if (!missing.empty()) {
        std::ostringstream os;
        os << "canonicalize: no price for subsets";
        for (auto mask : missing) os << " " << mask;
        throw std::runtime_error(os.str());
    }
    out.target_prob = std::min(1.0, std::max(0.0, acc));
    return out;
}

// Field initialization from candle history: theta_i = logit(median mid),
// couplings zero.
inline IsingParams<double> init_from_candles(const std::vector<std::vector<double>>& mids) {
    const int m = int(mids.size());
    IsingParams<double> params(m);
    for (int i = 0; i < m; ++i) {
        if (mids[i].empty()) {
            std::ostringstream os;
            os << "init_from_candles: market " << i << " has no candles";
            throw std::invalid_argument(os.str());
        }
        std::vector<double> v(mids[i].begin(), mids[i].end());
        std::sort(v.begin(), v.end());
        const size_t n = v.size();
        const double median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
        params.theta[i] = logit(median);
    }
    return params;
}

enum class ReplayMode { full_market, standalone };

struct ReplayConfig {
    ReplayMode mode = ReplayMode::full_market;
    double eta_theta = 0.1;
    double eta_w = 0.01;
    double b = 100.0;
    double size_cap = 100.0;  // order-flow gradient cap (standalone)
    double tick = 0.01;       // pseudo-target offset (standalone)
    int candle_init_count = 30;
    int sharpe_buckets = 5;
};

struct ReplayMetrics {
    long n_candles = 0;
    long n_trades = 0;
    long n_accepted = 0;
    long n_rejected = 0;
    double accept_rate = 0;
    double pool_revenue = 0;         // full-market LMSR revenue
    double mean_abs_err_all = 0;     // |quote - truth| over all trades (needs truths)
    double mean_abs_err_accepted = 0;
    double win_rate = 0;             // accepted fills with positive mark-to-truth
    double total_pnl = 0;            // mark-to-truth PnL of the ledger
    double sharpe = 0;               // over fixed event-time buckets
    std::vector<double> bucket_pnl;
    bool has_truth = false;
};

struct LedgerFill {
    std::int64_t ts = 0;
    double exec_price = 0;
    double size = 0;
    double quote = 0;
};

// Single-pass chronological fold over a merged candle/trade stream.
// Truths, when provided, carry the fee-free probability of each trade event
// in stream order (synthetic fixtures only) and unlock the mark-to-truth
// metrics.
class ReplaySession {
public:
    ReplaySession(const std::vector<ReplayEvent>& events, const ReplayConfig& cfg)
        : cfg_(cfg) {
        // market universe and candle-init prepass
        std::map<std::string, std::vector<double>> head_mids;
        std::int64_t last_ts = std::numeric_limits<std::int64_t>::min();
        for (const auto& ev : events) {
            if (ev.ts() < last_ts) throw std::runtime_error("replay: stream out of order");
            last_ts = ev.ts();
            if (const auto* c = std::get_if<CandleRecord>(&ev.body)) {
                auto& v = head_mids[c->market_key];
                if (int(v.size()) < cfg.candle_init_count) v.push_back(c->mid);
            }
        }
        for (const auto& [key, mids] : head_mids) {
            index_[key] = int(key_order_.size());
            key_order_.push_back(key);
            init_mids_.push_back(mids);
        }
        params_ = init_from_candles(init_mids_);
        last_mid_.assign(key_order_.size(), -1.0);
    }

    int market_index(const std::string& key) const {
        const auto it = index_.find(key);
        if (it == index_.end()) throw std::runtime_error("replay: unknown market key " + key);
        return it->second;
    }

    const IsingParams<double>& params() const { return params_; }

    ReplayMetrics run(const std::vector<ReplayEvent>& events,
                      const std::vector<double>* truths = nullptr) {
        ReplayMetrics metrics;
        metrics.has_truth = truths != nullptr;
        long trade_idx = 0;
        double err_all = 0, err_acc = 0;
        long wins = 0;
        const std::int64_t t0 = events.empty() ? 0 : events.front().ts();
        const std::int64_t t1 = events.empty() ? 1 : std::max(events.back().ts(), t0 + 1);
        metrics.bucket_pnl.assign(cfg_.sharpe_buckets, 0.0);

        for (const auto& ev : events) {
            if (const auto* c = std::get_if<CandleRecord>(&ev.body)) {
                apply_candle(*c);
                ++metrics.n_candles;
                continue;
            }
            const auto& trade = std::get<ComboTrade>(ev.body);
            std::uint32_t yes = 0, no = 0;
            for (const auto& leg : trade.legs) {
                const std::uint32_t bit = std::uint32_t(1) << market_index(leg.market_key);
                (leg.yes ? yes : no) |= bit;
            }
            refresh();
            const double quote = mixed_prob(yes, no);
            const double truth =
                truths && trade_idx < long(truths->size()) ? (*truths)[trade_idx] : -1;
            if (truth >= 0) err_all += std::abs(quote - truth);

            if (cfg_.mode == ReplayMode::full_market) {
                auto& book = book_for(yes, no, quote);
                const auto fill = fill_to_price(book, trade.exec_price);
                metrics.pool_revenue += fill.cash;
                const auto target = canonicalize_masks(yes, no, trade_lookup(yes, no, trade));
                sgd_step(yes, no, target.target_prob, cfg_.eta_theta, cfg_.eta_w);
                sync_books();
                ledger_.push_back({trade.ts, trade.exec_price, trade.size, quote});
                ++metrics.n_accepted;
                if (truth >= 0) {
                    err_acc += std::abs(quote - truth);
                    const double pnl = (trade.exec_price - truth) * trade.size;
                    metrics.total_pnl += pnl;
                    if (pnl > 0) ++wins;
                    bucket_of(metrics, trade.ts, t0, t1) += pnl;
                }
            } else {
                // standalone: conservative trader with reservation price at the
                // observed execution level
                const bool accept = quote <= trade.exec_price + 1e-12;
                if (accept) {
                    ++metrics.n_accepted;
                    ledger_.push_back({trade.ts, trade.exec_price, trade.size, quote});
                    const double eta_scale =
                        std::min(trade.size, cfg_.size_cap) / cfg_.size_cap;
                    const double pseudo_target = clamp_prob(quote + cfg_.tick);
                    sgd_step(yes, no, pseudo_target, cfg_.eta_theta * eta_scale,
                             cfg_.eta_w * eta_scale);
                    if (truth >= 0) {
                        err_acc += std::abs(quote - truth);
                        const double pnl = (trade.exec_price - truth) * trade.size;
                        metrics.total_pnl += pnl;
                        if (pnl > 0) ++wins;
                        bucket_of(metrics, trade.ts, t0, t1) += pnl;
                    }
                } else {
                    ++metrics.n_rejected;
                }
            }
            ++trade_idx;
            ++metrics.n_trades;
        }

        metrics.accept_rate =
            metrics.n_trades > 0 ? double(metrics.n_accepted) / double(metrics.n_trades) : 0.0;
        if (metrics.n_trades > 0 && metrics.has_truth)
            metrics.mean_abs_err_all = err_all / double(metrics.n_trades);
        if (metrics.n_accepted > 0 && metrics.has_truth) {
            metrics.mean_abs_err_accepted = err_acc / double(metrics.n_accepted);
            metrics.win_rate = double(wins) / double(metrics.n_accepted);
        }
        // Sharpe over event-time buckets
        if (metrics.has_truth && cfg_.sharpe_buckets > 1) {
            double mean = 0;
            for (double p : metrics.bucket_pnl) mean += p;
            mean /= metrics.bucket_pnl.size();
            double var = 0;
            for (double p : metrics.bucket_pnl) var += (p - mean) * (p - mean);
            var /= (metrics.bucket_pnl.size() - 1);
            metrics.sharpe = var > 0 ? mean / std::sqrt(var) : 0.0;
        }
        return metrics;
    }

    const std::vector<LedgerFill>& ledger() const { return ledger_; }
    const std::vector<std::string>& market_keys() const { return key_order_; }

    // Model price of a mixed-side event through the active backend.
    double mixed_prob(std::uint32_t yes, std::uint32_t no) {
        refresh();
        if (exact_backend()) return event_prob_sided(table_, yes, no);
        // BP backend: alternating sum of all-YES clamped queries
        const auto target = canonicalize_masks(yes, no, model_lookup());
        return std::min(1.0, std::max(0.0, target.target_prob));
    }

private:
    ReplayConfig cfg_;
    IsingParams<double> params_;
    std::unordered_map<std::string, int> index_;
    std::vector<std::string> key_order_;
    std::vector<std::vector<double>> init_mids_;
    std::vector<double> last_mid_;  // latest observed candle mid per market, -1 if none
    std::unordered_map<std::uint64_t, BinaryBook<double>> books_;  // key: yes | no << 32
    std::vector<LedgerFill> ledger_;
    JointTable<double> table_;
    bool dirty_ = true;

    bool exact_backend() const { return params_.m <= kExactCutoff; }

    void refresh() {
        if (!dirty_) return;
        if (exact_backend()) table_ = joint_table(params_);
        dirty_ = false;
    }

    double& bucket_of(ReplayMetrics& metrics, std::int64_t ts, std::int64_t t0, std::int64_t t1) {
        int k = int((ts - t0) * metrics.bucket_pnl.size() / std::max<std::int64_t>(1, t1 - t0));
        k = std::min(k, int(metrics.bucket_pnl.size()) - 1);
        return metrics.bucket_pnl[size_t(k)];
    }

    YesPriceLookup model_lookup() {
        return [this](std::uint32_t subset) -> std::optional<double> {
            if (subset == 0) return 1.0;
            if (exact_backend()) return event_prob(table_, subset);
            if (popcount(subset) > kBpJointQueryCap) return std::nullopt;
            return event_prob(params_, subset);
        };
    }

    // Observed quotes take precedence over the model: the trade's own
    // execution price for an all-YES contract, latest candle mids for
    // singleton terms, model values for everything else.
    YesPriceLookup trade_lookup(std::uint32_t yes, std::uint32_t no, const ComboTrade& trade) {
        const double exec = trade.exec_price;
        return [this, yes, no, exec](std::uint32_t subset) -> std::optional<double> {
            if (subset == 0) return 1.0;
            if (no == 0 && subset == yes) return exec;
            if (popcount(subset) == 1) {
                const int i = __builtin_ctz(subset);
                if (i < int(last_mid_.size()) && last_mid_[i] >= 0) return last_mid_[i];
            }
            return model_lookup()(subset);
        };
    }

    void apply_candle(const CandleRecord& c) {
        const int i = market_index(c.market_key);
        last_mid_[i] = c.mid;
        refresh();
        Vec<double> g;
        if (exact_backend())
            g = grad_ce(table_, std::uint32_t(1) << i, clamp_prob(c.mid));
        else
            g = grad_ce_bp(params_, std::uint32_t(1) << i, clamp_prob(c.mid));
        // candles train the local fields only
        params_.theta -= cfg_.eta_theta * g.head(params_.m);
        dirty_ = true;
    }

    void sgd_step(std::uint32_t yes, std::uint32_t no, double target, double eta_theta,
                  double eta_w) {
        refresh();
        Vec<double> g;
        if (exact_backend()) {
            g = grad_ce_sided(table_, yes, no, clamp_prob(target));
        } else {
            // signed combination of all-YES gradients over the expansion
            g = Vec<double>::Zero(params_.dim());
            double q = 0;
            std::uint32_t sub = no;
            while (true) {
                const int sign = popcount(sub) % 2 == 0 ? 1 : -1;
                const std::uint32_t term = yes | sub;
                if (popcount(term) > kBpJointQueryCap)
                    throw std::runtime_error("replay: expansion term too large for BP backend");
                g += sign * grad_event_prob(params_, term);
                q += sign * event_prob(params_, term);
                if (sub == 0) break;
                sub = (sub - 1) & no;
            }
            q = clamp_prob(std::min(1.0, std::max(0.0, q)));
            g *= (q - clamp_prob(target)) / (q * (1 - q));
        }
        params_.theta -= eta_theta * g.head(params_.m);
        params_.w_upper -= eta_w * g.tail(n_pairs(params_.m));
        dirty_ = true;
    }

    BinaryBook<double>& book_for(std::uint32_t yes, std::uint32_t no, double init_price) {
        const std::uint64_t key = std::uint64_t(yes) | (std::uint64_t(no) << 32);
        auto it = books_.find(key);
        if (it == books_.end())
            it = books_.emplace(key, BinaryBook<double>(cfg_.b, clamp_prob(init_price))).first;
        return it->second;
    }

    void sync_books() {
        refresh();
        for (auto& [key, book] : books_) {
            const std::uint32_t yes = std::uint32_t(key & 0xFFFFFFFFu);
            const std::uint32_t no = std::uint32_t(key >> 32);
            resync_to(book, clamp_prob(mixed_prob(yes, no)));
        }
    }
};

// ---- JSONL stream IO and synthetic fixtures (implemented in replay_io.cpp) ----

std::vector<ReplayEvent> parse_stream(std::istream& in);
void write_stream(std::ostream& out, const std::vector<ReplayEvent>& events);

struct SyntheticStreamConfig {
    int m = 6;
    double rho = 0.3;
    int candles_per_market = 30;
    int n_trades = 400;
    double fee = 0.02;
    int max_legs = 3;
    double no_leg_prob = 0.3;  // per-leg chance of a NO side
    double candle_noise = 0.01;
    std::uint64_t seed = 1;
};

struct SyntheticStream {
    std::vector<ReplayEvent> events;
    std::vector<double> trade_truths;  // fee-free probability per trade, stream order
};

SyntheticStream generate_synthetic_stream(const SyntheticStreamConfig& cfg);

}  // namespace pmm
