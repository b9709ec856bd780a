#pragma once

#include "crisiscast/series.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

// Two-regime Markov-switching autoregression
//   g_t = mu_s + sum_j phi_{s,j} g_{t-j} + sigma_s e_t,   s = S_t in {0 = Normal, 1 = COVID}
// conditioned on the first ar_order observations. Estimated by EM (Hamilton filter, Kim smoother).

namespace crisiscast::msar {

enum class GrowthMode { Weekly, Yoy };

/// weekly: g[i] = y[i+1]/y[i] - 1; yoy: g[i] = y[i+52]/y[i] - 1.
series::WeeklySeries to_growth(const series::WeeklySeries &y, GrowthMode mode);

struct TransitionMatrix {
    double p00 = 0.95, p01 = 0.05, p10 = 0.05, p11 = 0.95;

    [[nodiscard]] double p(int from, int to) const;
    /// Stationary distribution; (0.5, 0.5) when the chain has no unique one.
    [[nodiscard]] std::array<double, 2> stationary() const;
};

struct RegimeParams {
    double intercept = 0.0;
    std::vector<double> ar;
    double sigma2 = 1.0;
};

using Probs = std::array<double, 2>;

struct FilterResult {
    std::vector<Probs> filtered;   ///< P(S_t | g_1..g_t)
    std::vector<Probs> predicted;  ///< P(S_t | g_1..g_{t-1})
    double loglik = 0.0;
};

/// Hamilton filter over t = ar_order .. n-1. `initial` defaults to the stationary distribution.
FilterResult hamilton_filter(std::span<const double> g, const std::array<RegimeParams, 2> &regimes,
                             const TransitionMatrix &trans, std::optional<Probs> initial = std::nullopt);

/// Kim smoother: P(S_t | all data).
std::vector<Probs> kim_smoother(const FilterResult &filter, const TransitionMatrix &trans);

struct RegimeFit {
    int ar_order = 1;
    std::array<RegimeParams, 2> regimes;  ///< regime 1 has the larger innovation variance ("COVID")
    TransitionMatrix trans;
    series::Date start{};                 ///< week of the first modelled observation
    std::vector<Probs> filtered;
    std::vector<Probs> smoothed;
    double loglik = 0.0;
    std::vector<double> loglik_trace;     ///< EM log-likelihood per iteration of the selected restart
    int iterations = 0;
    bool converged = false;
};

struct MsarOptions {
    int max_iterations = 500;
    double rel_tol = 1e-8;
    int restarts = 5;
    int variance_window = 8;  ///< rolling-variance window for the initial regime split
    std::uint64_t seed = 0;
};

RegimeFit fit_msar(const series::WeeklySeries &g, int ar_order = 1, const MsarOptions &opts = {});

struct RegimeRun {
    std::size_t first = 0;  ///< index into the fit's probability vectors
    std::size_t last = 0;   ///< inclusive
    series::Date start{};
    series::Date end{};     ///< Monday of the last week
    std::string label;
};

/// Maximal runs where the smoothed COVID probability exceeds `threshold`.
std::vector<RegimeRun> regime_report(const RegimeFit &fit, double threshold = 0.5);

/// Columns: week_start,p_normal,p_covid,label (label at the 0.5 threshold).
void write_regimes_csv(std::ostream &os, const RegimeFit &fit);

}  // namespace crisiscast::msar
