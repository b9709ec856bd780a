#include "crisiscast/auto_order.hpp"

#include "crisiscast/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>

namespace crisiscast::auto_order {

using sarimax::FittedSarimax;
using sarimax::SarimaOrder;

namespace {

constexpr const char *kModule = "auto-order";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

auto order_key(const SarimaOrder &o) { return std::tie(o.p, o.d, o.q, o.P, o.D, o.Q); }

struct Evaluation {
    LeaderboardEntry entry;
    std::optional<FittedSarimax> model;
};

Evaluation evaluate(const series::WeeklySeries &y, std::span<const series::FlagSeries> exog, const SarimaOrder &order,
                    const sarimax::FitOptions &opts) {
    Evaluation ev;
    ev.entry.order = order;
    try {
        ev.model = sarimax::fit(y, exog, order, opts);
        ev.entry.aicc = ev.model->aicc;
        ev.entry.loglik = ev.model->loglik;
        ev.entry.converged = true;
    } catch (const Error &e) {
        if (e.kind() == ErrorKind::Usage) throw;
        ev.entry.aicc = kNaN;
        ev.entry.loglik = kNaN;
        ev.entry.note = e.code();
    }
    return ev;
}

/// Strict weak order: converged first, then AICc, then lexicographic order.
bool better(const LeaderboardEntry &a, const LeaderboardEntry &b) {
    if (a.converged != b.converged) return a.converged;
    if (a.converged && a.aicc != b.aicc) return a.aicc < b.aicc;
    return order_key(a.order) < order_key(b.order);
}

bool in_set(const std::vector<int> &set, int v) { return std::find(set.begin(), set.end(), v) != set.end(); }

}  // namespace

void SearchSpace::validate() const {
    auto bad = [](const std::string &what) { throw_usage(kModule, "BadParameter", what); };
    if (max_p < 0 || max_p > 5 || max_q < 0 || max_q > 5) bad("max_p and max_q must lie in 0..5");
    if (max_P < 0 || max_P > 2 || max_Q < 0 || max_Q > 2) bad("max_P and max_Q must lie in 0..2");
    if (d_set.empty() || D_set.empty()) bad("d_set and D_set must be non-empty");
    for (int v : d_set) {
        if (v < 0 || v > 2) bad("d_set values must lie in 0..2");
    }
    for (int v : D_set) {
        if (v < 0 || v > 2) bad("D_set values must lie in 0..2");
    }
    if (s < 2) bad("seasonal period must be >= 2");
    if (stepwise_patience < 1) bad("stepwise_patience must be positive");
}

std::size_t SearchSpace::grid_size() const {
    auto distinct = [](std::vector<int> v) {
        std::sort(v.begin(), v.end());
        return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
    };
    return static_cast<std::size_t>(max_p + 1) * static_cast<std::size_t>(max_q + 1) *
           static_cast<std::size_t>(max_P + 1) * static_cast<std::size_t>(max_Q + 1) * distinct(d_set) *
           distinct(D_set);
}

std::vector<SarimaOrder> SearchSpace::grid() const {
    auto sorted = [](std::vector<int> v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        return v;
    };
    const auto ds = sorted(d_set);
    const auto Ds = sorted(D_set);
    std::vector<SarimaOrder> out;
    out.reserve(grid_size());
    for (int p = 0; p <= max_p; ++p)
        for (int d : ds)
            for (int q = 0; q <= max_q; ++q)
                for (int P = 0; P <= max_P; ++P)
                    for (int D : Ds)
                        for (int Q = 0; Q <= max_Q; ++Q) out.push_back({p, d, q, P, D, Q, s});
    return out;
}

SearchResult select_order(const series::WeeklySeries &y, std::span<const series::FlagSeries> exog,
                          const SearchSpace &space, const sarimax::FitOptions &opts) {
    space.validate();
    series::require_aligned(y, exog, kModule);

    std::map<std::tuple<int, int, int, int, int, int>, Evaluation> done;
    std::optional<LeaderboardEntry> best_entry;

    auto run = [&](const SarimaOrder &o) -> bool {
        const auto key = order_key(o);
        if (done.contains(key)) return false;
        auto ev = evaluate(y, exog, o, opts);
        const bool improved = ev.entry.converged && (!best_entry || better(ev.entry, *best_entry));
        if (improved) best_entry = ev.entry;
        done.emplace(key, std::move(ev));
        return improved;
    };

    if (space.mode == SearchMode::Exhaustive) {
        for (const auto &o : space.grid()) run(o);
    } else {
        const int d0 = *std::min_element(space.d_set.begin(), space.d_set.end());
        const int D0 = *std::min_element(space.D_set.begin(), space.D_set.end());
        auto clamp = [&](SarimaOrder o) {
            o.p = std::min(o.p, space.max_p);
            o.q = std::min(o.q, space.max_q);
            o.P = std::min(o.P, space.max_P);
            o.Q = std::min(o.Q, space.max_Q);
            return o;
        };
        const SarimaOrder starts[] = {clamp({2, d0, 2, 1, D0, 1, space.s}), clamp({0, d0, 0, 0, D0, 0, space.s}),
                                      clamp({1, d0, 0, 1, D0, 0, space.s}), clamp({0, d0, 1, 0, D0, 1, space.s})};
        for (const auto &o : starts) run(o);

        int stale = 0;
        bool moved = best_entry.has_value();
        while (moved && stale < space.stepwise_patience) {
            moved = false;
            const SarimaOrder cur = best_entry->order;
            std::vector<SarimaOrder> neighbours;
            for (int delta : {-1, 1}) {
                SarimaOrder o = cur;
                o.p += delta;
                if (o.p >= 0 && o.p <= space.max_p) neighbours.push_back(o);
                o = cur;
                o.q += delta;
                if (o.q >= 0 && o.q <= space.max_q) neighbours.push_back(o);
                o = cur;
                o.P += delta;
                if (o.P >= 0 && o.P <= space.max_P) neighbours.push_back(o);
                o = cur;
                o.Q += delta;
                if (o.Q >= 0 && o.Q <= space.max_Q) neighbours.push_back(o);
                o = cur;
                o.d += delta;
                if (in_set(space.d_set, o.d)) neighbours.push_back(o);
                o = cur;
                o.D += delta;
                if (in_set(space.D_set, o.D)) neighbours.push_back(o);
            }
            for (const auto &o : neighbours) {
                if (done.contains(order_key(o))) continue;
                if (run(o)) {
                    stale = 0;
                    moved = true;
                    break;
                }
                if (++stale >= space.stepwise_patience) break;
            }
        }
    }

    SearchResult result;
    result.n_evaluated = static_cast<int>(done.size());
    result.leaderboard.reserve(done.size());
    for (const auto &[key, ev] : done) result.leaderboard.push_back(ev.entry);
    std::sort(result.leaderboard.begin(), result.leaderboard.end(), better);
    if (!best_entry) {
        throw_numerical(kModule, "NoConvergedCandidate",
                        "none of " + std::to_string(result.n_evaluated) + " candidates produced a converged fit");
    }
    result.best = *done.at(order_key(best_entry->order)).model;
    return result;
}

void write_leaderboard_csv(std::ostream &os, const SearchResult &result) {
    os << "p,d,q,P,D,Q,s,aicc,loglik,converged,note\n";
    os << std::setprecision(17);
    for (const auto &e : result.leaderboard) {
        const auto &o = e.order;
        os << o.p << ',' << o.d << ',' << o.q << ',' << o.P << ',' << o.D << ',' << o.Q << ',' << o.s << ',';
        if (e.converged) os << e.aicc << ',' << e.loglik;
        else os << ',';
        os << ',' << (e.converged ? "true" : "false") << ',' << e.note << '\n';
    }
}

}  // namespace crisiscast::auto_order
