#pragma once

#include "crisiscast/optim.hpp"
#include "crisiscast/series.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace crisiscast::sarimax {

using series::FlagSeries;
using series::WeeklySeries;

/// SARIMA(p,d,q)(P,D,Q)_s order. Engine limits: p,q <= 5; P,Q <= 2; d,D <= 2.
struct SarimaOrder {
    int p = 0, d = 0, q = 0;
    int P = 0, D = 0, Q = 0;
    int s = 52;

    void validate() const;
    [[nodiscard]] bool has_intercept() const noexcept { return d + D == 0; }
    /// Observations lost to differencing.
    [[nodiscard]] int differencing_loss() const noexcept { return d + s * D; }
    [[nodiscard]] int arma_param_count() const noexcept { return p + q + P + Q; }
    [[nodiscard]] std::string to_string() const;

    auto operator<=>(const SarimaOrder &) const = default;
};

/// Constrained model parameters. intercept is used only when d + D == 0.
struct SarimaxParams {
    std::vector<double> ar, ma, seasonal_ar, seasonal_ma;
    std::vector<double> exog_betas;
    double intercept = 0.0;
    double sigma2 = 1.0;
};

struct FittedSarimax {
    SarimaOrder order;
    std::vector<double> ar_coeffs, ma_coeffs, seasonal_ar_coeffs, seasonal_ma_coeffs;
    std::vector<double> exog_betas;
    std::vector<std::string> exog_names;
    double intercept = 0.0;
    double sigma2 = 1.0;
    double loglik = 0.0;
    double aicc = 0.0;
    int n_obs = 0;         ///< observations after differencing
    bool log_space = false;
    bool converged = false;
    int iterations = 0;    ///< Nelder-Mead iterations over all restarts

    /// Free parameters including the innovation variance.
    [[nodiscard]] int parameter_count() const;
    [[nodiscard]] SarimaxParams params() const;
};

struct FitOptions {
    optim::NelderMeadOptions nelder_mead{0.1, 1e-8, 2000};
    int restarts = 3;
    double restart_jitter = 0.25;
    std::uint64_t seed = 0;
};

/// Per-horizon predictive means and variances. Values are in log space when log_space is set.
struct ForecastDistribution {
    int horizon = 0;
    std::vector<double> means;
    std::vector<double> variances;
    bool log_space = false;
};

/// (1-B)^d (1-B^s)^D applied to x; output is shorter by d + s*D.
std::vector<double> difference(std::span<const double> x, int d, int D, int s);

/// Gaussian MLE of SARIMAX via the Kalman filter on the differenced, regression-adjusted series.
FittedSarimax fit(const WeeklySeries &y, std::span<const FlagSeries> exog, const SarimaOrder &order,
                  const FitOptions &opts = {});

/// Exact Gaussian log-likelihood at the given constrained parameters.
double loglikelihood(const WeeklySeries &y, std::span<const FlagSeries> exog, const SarimaOrder &order,
                     const SarimaxParams &params);

/// Raw-vector variant: coefficients are validated against the root conditions.
double loglikelihood(std::span<const double> y, const std::vector<std::vector<double>> &exog,
                     const SarimaOrder &order, const SarimaxParams &params);

ForecastDistribution forecast(const FittedSarimax &m, const WeeklySeries &y, std::span<const FlagSeries> exog,
                              std::span<const FlagSeries> exog_future, int horizon);

/// One-step-ahead in-sample predictions on the model scale; NaN during the differencing warm-up.
std::vector<double> fitted_values(const FittedSarimax &m, const WeeklySeries &y, std::span<const FlagSeries> exog);

/// Gaussian quantile at horizon h (1-based); log-normal when the distribution is in log space.
double quantile(const ForecastDistribution &f, int h, double tau);

/// Standard normal inverse CDF.
double normal_quantile(double tau);

/// Small-sample corrected AIC: -2 loglik + 2 k n / (n - k - 1).
double aicc(double loglik, int k, int n);

}  // namespace crisiscast::sarimax
