#pragma once

#include "crisiscast/sarimax.hpp"
#include "crisiscast/series.hpp"

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

// Baseline forecasters, error metrics and rolling-origin backtesting.

namespace crisiscast::eval {

/// Mean absolute percentage error, in percent. Throws ZeroActual on a zero actual.
double mape(std::span<const double> actual, std::span<const double> predicted);
double rmse(std::span<const double> actual, std::span<const double> predicted);
/// Mean quantile loss; tau in (0,1).
double pinball(std::span<const double> actual, std::span<const double> predicted, double tau);

struct EvaluationPair {
    std::vector<double> actual;
    std::vector<double> predicted;
};

struct Aggregate {
    double macro = 0.0;  ///< mean of per-pair losses
    double micro = 0.0;  ///< loss over all points pooled
};

Aggregate aggregate_pinball(std::span<const EvaluationPair> pairs, double tau);

/// Growth g = mean of y[t]/y[t-52] over the last 12 weeks; forecast[h] = g * y[T+h-52], reusing
/// its own outputs once the lag passes the end of history.
std::vector<double> trailing_yoy_benchmark(const series::WeeklySeries &y, int horizon);

struct BaselineMethod {
    enum class Kind { Naive, SeasonalNaive, MovingAverage, Ses };
    Kind kind = Kind::Naive;
    int window = 0;
    double alpha = 0.0;

    static BaselineMethod naive() { return {Kind::Naive, 0, 0.0}; }
    static BaselineMethod seasonal_naive() { return {Kind::SeasonalNaive, 0, 0.0}; }
    static BaselineMethod moving_average(int w) { return {Kind::MovingAverage, w, 0.0}; }
    static BaselineMethod ses(double a) { return {Kind::Ses, 0, a}; }

    [[nodiscard]] std::string name() const;
};

/// Moving-average windows benchmarked by default.
inline constexpr int kDefaultMovingAverageWindows[] = {2, 3, 4, 7};

std::vector<double> baseline_forecast(const series::WeeklySeries &y, const BaselineMethod &method, int horizon);

struct BacktestPlan {
    int initial_train_weeks = 156;
    int step_weeks = 13;
    int horizon_weeks = 13;
    int n_folds = 4;

    void validate() const;
};

/// Point (p50) and upper (p90) forecasts for one fold. Point forecasters repeat p50 as p90.
struct FoldForecast {
    std::vector<double> p50;
    std::vector<double> p90;
};

using Forecaster = std::function<FoldForecast(const series::WeeklySeries &train,
                                              std::span<const series::FlagSeries> exog_train,
                                              std::span<const series::FlagSeries> exog_test, int horizon)>;

struct ModelSpec {
    std::string name;
    Forecaster forecaster;
};

ModelSpec baseline_spec(const BaselineMethod &method);
ModelSpec yoy_benchmark_spec();
/// Fixed-order SARIMAX; fits in log space when `log_space` is set and reports level-space quantiles.
ModelSpec sarimax_spec(const sarimax::SarimaOrder &order, bool log_space, const sarimax::FitOptions &opts = {});

struct FoldMetrics {
    double mape = 0.0;
    double rmse = 0.0;
    double pinball50 = 0.0;
    double pinball90 = 0.0;
};

struct FoldResult {
    int fold = 0;
    std::size_t train_first = 0, train_last = 0;  ///< inclusive indices
    std::size_t test_first = 0, test_last = 0;
    FoldMetrics metrics;
    FoldForecast forecast;
};

struct BacktestReport {
    std::string model;
    std::vector<FoldResult> folds;
    FoldMetrics mean;
};

/// Fold f trains on the first initial + f*step weeks and tests on the next horizon weeks.
BacktestReport backtest(const series::WeeklySeries &y, std::span<const series::FlagSeries> exog,
                        const ModelSpec &model, const BacktestPlan &plan);

/// Columns: model,fold,train_start,train_end,test_start,test_end,mape,rmse,pinball50,pinball90
void write_backtest_csv(std::ostream &os, const series::WeeklySeries &y, std::span<const BacktestReport> reports);
void write_backtest_json(std::ostream &os, const series::WeeklySeries &y, std::span<const BacktestReport> reports);

}  // namespace crisiscast::eval
