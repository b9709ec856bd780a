#pragma once

#include "crisiscast/series.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

// Vector autoregression with exogenous flags, fitted equation by equation:
//   y_t = c + sum_{j=1..p} A_j y_{t-j} + B x_t + e_t,   Cov(e_t) = Sigma
// on log, seasonally differenced components. Flags enter in the differenced equation.

namespace crisiscast::varx {

/// Aligned component series (same start week and length), at least two.
struct MultiSeries {
    std::vector<series::WeeklySeries> components;

    [[nodiscard]] std::size_t dimension() const noexcept { return components.size(); }
    [[nodiscard]] std::size_t length() const { return components.empty() ? 0 : components.front().size(); }
    /// Throws BadParameter for fewer than two components, MisalignedSeries for differing spans.
    void validate() const;
};

/// Log then lag-`season` difference of every component.
MultiSeries prepare(const MultiSeries &levels, int season = 52);

struct VarxFit {
    int lag_order = 1;
    std::vector<std::string> names;       ///< component names, equation order
    std::vector<std::string> exog_names;
    std::vector<Eigen::MatrixXd> A;       ///< A[j-1] is the m x m lag-j matrix; A[j-1](i,k): effect of y_k on y_i
    Eigen::MatrixXd B;                    ///< m x exog
    Eigen::VectorXd intercept;
    Eigen::MatrixXd sigma;                ///< residual covariance, denominator n - (m p + exog + 1)
    Eigen::MatrixXd residuals;            ///< n_eff x m
    std::size_t n_obs = 0;                ///< equations' sample size n_eff

    [[nodiscard]] std::size_t dimension() const noexcept { return names.size(); }
    /// Largest eigenvalue modulus of the companion matrix.
    [[nodiscard]] double spectral_radius() const;
};

/// `exog` must be aligned with the (already differenced) components.
VarxFit fit_varx(const MultiSeries &ms, std::span<const series::FlagSeries> exog, int lag_order = 1);

/// Iterated one-step means in the modelled space. Rows are horizons, columns components.
/// `history` is the modelled (differenced) data the recursion starts from.
Eigen::MatrixXd forecast_modelled(const VarxFit &fit, const MultiSeries &history,
                                  std::span<const series::FlagSeries> exog_future, int horizon);

struct VarxForecast {
    std::vector<series::WeeklySeries> means;  ///< level-space means, one per component
    Eigen::MatrixXd modelled;                 ///< differenced-log means (horizon x m)
    bool means_only = true;                   ///< no variance propagation
    bool nonstationary = false;               ///< companion spectral radius >= 1
};

/// Forecast from level data: prepare, iterate, undifference, exponentiate.
/// Future flags start the week after the last observation and cover at least `horizon` weeks.
VarxForecast forecast_varx(const VarxFit &fit, const MultiSeries &levels,
                           std::span<const series::FlagSeries> exog_future, int horizon, int season = 52);

/// One row per target series; columns intercept, "<name>_lag<j>" per component and lag, then flags.
void write_coefficients_csv(std::ostream &os, const VarxFit &fit);

}  // namespace crisiscast::varx
