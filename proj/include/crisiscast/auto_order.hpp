#pragma once

#include "crisiscast/sarimax.hpp"
#include "crisiscast/series.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace crisiscast::auto_order {

using sarimax::aicc;

enum class SearchMode { Exhaustive, Stepwise };

struct SearchSpace {
    int max_p = 3;
    int max_q = 3;
    int max_P = 2;
    int max_Q = 2;
    std::vector<int> d_set{0, 1};
    std::vector<int> D_set{0, 1};
    int s = 52;
    SearchMode mode = SearchMode::Exhaustive;
    int stepwise_patience = 50;  ///< stepwise stops after this many evaluations without improvement

    void validate() const;
    [[nodiscard]] std::size_t grid_size() const;
    /// Every candidate in lexicographic (p,d,q,P,D,Q) order.
    [[nodiscard]] std::vector<sarimax::SarimaOrder> grid() const;
};

struct LeaderboardEntry {
    sarimax::SarimaOrder order;
    double aicc = 0.0;    ///< NaN when the candidate did not produce a converged fit
    double loglik = 0.0;  ///< NaN when the candidate did not produce a converged fit
    bool converged = false;
    std::string note;     ///< error code of a skipped or failed candidate
};

struct SearchResult {
    sarimax::FittedSarimax best;
    std::vector<LeaderboardEntry> leaderboard;  ///< converged by ascending AICc, then the rest
    int n_evaluated = 0;
};

/// Minimum-AICc order over the search space. Candidates that cannot be fitted are kept on the
/// leaderboard as non-converged. Ties break on lexicographic order, so results do not depend on
/// evaluation order.
SearchResult select_order(const series::WeeklySeries &y, std::span<const series::FlagSeries> exog,
                          const SearchSpace &space, const sarimax::FitOptions &opts = {});

/// Columns: p,d,q,P,D,Q,s,aicc,loglik,converged,note
void write_leaderboard_csv(std::ostream &os, const SearchResult &result);

}  // namespace crisiscast::auto_order
