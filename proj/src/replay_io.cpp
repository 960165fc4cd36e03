#include <json.hpp>

#include <iostream>
#include <random>

#include "pmm/replay.hpp"
#include "pmm/rng.hpp"
#include "pmm/world.hpp"

namespace pmm {

using nlohmann::json;

std::vector<ReplayEvent> parse_stream(std::istream& in) {
    std::vector<ReplayEvent> events;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("stream line " + std::to_string(line_no) + ": " + e.what());
        }
        const std::string type = j.at("type").get<std::string>();
        ReplayEvent ev;
        if (type == "candle") {
            CandleRecord c;
            c.market_key = j.at("market").get<std::string>();
            c.ts = j.at("ts").get<std::int64_t>();
            c.mid = j.at("mid").get<double>();
            if (!(c.mid > 0 && c.mid < 1))
                throw std::runtime_error("stream line " + std::to_string(line_no) +
                                         ": candle mid outside (0,1)");
            ev.body = c;
        } else if (type == "trade") {
            ComboTrade t;
            t.ts = j.at("ts").get<std::int64_t>();
            t.exec_price = j.at("price").get<double>();
            t.size = j.at("size").get<double>();
            if (!(t.exec_price > 0 && t.exec_price < 1))
                throw std::runtime_error("stream line " + std::to_string(line_no) +
                                         ": trade price outside (0,1)");
            if (!(t.size > 0))
                throw std::runtime_error("stream line " + std::to_string(line_no) +
                                         ": non-positive size");
            for (const auto& leg : j.at("legs")) {
                ComboLeg l;
                l.market_key = leg.at("market").get<std::string>();
                const std::string side = leg.at("side").get<std::string>();
                if (side != "YES" && side != "NO")
                    throw std::runtime_error("stream line " + std::to_string(line_no) +
                                             ": bad side " + side);
                l.yes = side == "YES";
                t.legs.push_back(std::move(l));
            }
            if (t.legs.empty())
                throw std::runtime_error("stream line " + std::to_string(line_no) + ": no legs");
            ev.body = t;
        } else {
            throw std::runtime_error("stream line " + std::to_string(line_no) +
                                     ": unknown record type " + type);
        }
        events.push_back(std::move(ev));
    }
    return events;
}

void write_stream(std::ostream& out, const std::vector<ReplayEvent>& events) {
    for (const auto& ev : events) {
        json j;
        if (const auto* c = std::get_if<CandleRecord>(&ev.body)) {
            j["type"] = "candle";
            j["market"] = c->market_key;
            j["ts"] = c->ts;
            j["mid"] = c->mid;
        } else {
            const auto& t = std::get<ComboTrade>(ev.body);
            j["type"] = "trade";
            j["ts"] = t.ts;
            json legs = json::array();
            for (const auto& l : t.legs)
                legs.push_back({{"market", l.market_key}, {"side", l.yes ? "YES" : "NO"}});
            j["legs"] = legs;
            j["price"] = t.exec_price;
            j["size"] = t.size;
        }
        out << j.dump() << "\n";
    }
}

// A candle phase (per-market mid series around the drifting truth) followed
// by an interleaved candle/trade phase. Trade prices carry the uniform
// additive fee on top of the exact mixed-event probability.
SyntheticStream generate_synthetic_stream(const SyntheticStreamConfig& cfg) {
    SyntheticStream out;
    GaussianWorld<double> world(cfg.m, cfg.rho);
    auto rng_w = make_stream(cfg.seed, 0, "fixture-world");
    auto rng_t = make_stream(cfg.seed, 0, "fixture-trades");
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<std::string> keys;
    for (int i = 0; i < cfg.m; ++i) keys.push_back("M" + std::to_string(i));

    const int candle_ticks = cfg.candles_per_market;
    const int total_ticks = candle_ticks + cfg.n_trades;
    const double dt = world.horizon * 0.8 / total_ticks;  // keep clear of expiry
    std::int64_t ts = 0;

    // candle initialization phase
    for (int tick = 0; tick < candle_ticks; ++tick) {
        for (int i = 0; i < cfg.m; ++i) {
            CandleRecord c;
            c.market_key = keys[i];
            c.ts = ts;
            const double noisy = base_signal(world, i) + cfg.candle_noise * gauss(rng_t);
            c.mid = std::min(0.99, std::max(0.01, noisy));
            out.events.push_back({c});
            ts += 7;
        }
        step_scores(world, dt, rng_w);
    }

    // trading phase: a candle sweep every few trades keeps fields fresh
    for (int k = 0; k < cfg.n_trades; ++k) {
        if (k % 10 == 0) {
            for (int i = 0; i < cfg.m; ++i) {
                CandleRecord c;
                c.market_key = keys[i];
                c.ts = ts;
                const double noisy = base_signal(world, i) + cfg.candle_noise * gauss(rng_t);
                c.mid = std::min(0.99, std::max(0.01, noisy));
                out.events.push_back({c});
                ts += 3;
            }
        }
        ComboTrade t;
        t.ts = ts;
        ts += 11;
        const int n_legs = 1 + int(rng_t() % std::uint64_t(cfg.max_legs));
        std::uint32_t yes = 0, no = 0;
        while (popcount(yes | no) < n_legs) {
            const int i = int(rng_t() % std::uint64_t(cfg.m));
            const std::uint32_t bit = std::uint32_t(1) << i;
            if ((yes | no) & bit) continue;
            if (unif(rng_t) < cfg.no_leg_prob)
                no |= bit;
            else
                yes |= bit;
        }
        if (yes == 0) {  // keep at least one YES leg
            const int i = __builtin_ctz(no);
            no &= ~(std::uint32_t(1) << i);
            yes |= std::uint32_t(1) << i;
        }
        for (int i = 0; i < cfg.m; ++i) {
            if (yes >> i & 1u) t.legs.push_back({keys[i], true});
            if (no >> i & 1u) t.legs.push_back({keys[i], false});
        }
        const auto table = true_joint(world);
        const double truth = event_prob_sided(table, yes, no);
        t.exec_price = std::min(1.0 - 1e-6, std::max(1e-6, truth + cfg.fee));
        t.size = 1.0 + double(rng_t() % 200);
        out.events.push_back({t});
        out.trade_truths.push_back(truth);
        step_scores(world, dt, rng_w);
    }
    return out;
}

}  // namespace pmm
