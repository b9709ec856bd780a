#include "crisiscast/eval.hpp"

#include "crisiscast/error.hpp"

#include <json.hpp>

#include <cmath>
#include <iomanip>
#include <ostream>

namespace crisiscast::eval {

namespace {

constexpr const char *kModule = "baselines-eval";
constexpr std::size_t kSeason = 52;
constexpr std::size_t kTrailingWeeks = 12;

void check_pair(std::span<const double> actual, std::span<const double> predicted) {
    if (actual.empty() || actual.size() != predicted.size()) {
        throw_data(kModule, "LengthMismatch",
                   "actual and predicted need equal nonzero length (" + std::to_string(actual.size()) + " vs " +
                       std::to_string(predicted.size()) + ")");
    }
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (!std::isfinite(actual[i]) || !std::isfinite(predicted[i])) {
            throw_data(kModule, "NonFiniteValue", "non-finite value at index " + std::to_string(i));
        }
    }
}

void check_tau(double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw_usage(kModule, "TauOutOfRange", "tau must lie in (0,1)");
}

double pinball_sum(std::span<const double> actual, std::span<const double> predicted, double tau) {
    double s = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        const double a = actual[i], f = predicted[i];
        s += a >= f ? tau * (a - f) : (1.0 - tau) * (f - a);
    }
    return s;
}

void check_horizon(int horizon) {
    if (horizon < 1) throw_usage(kModule, "BadParameter", "horizon must be at least 1");
}

}  // namespace

double mape(std::span<const double> actual, std::span<const double> predicted) {
    check_pair(actual, predicted);
    double s = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (actual[i] == 0.0) throw_data(kModule, "ZeroActual", "actual value is zero at index " + std::to_string(i));
        s += std::abs((actual[i] - predicted[i]) / actual[i]);
    }
    return s / static_cast<double>(actual.size()) * 100.0;
}

double rmse(std::span<const double> actual, std::span<const double> predicted) {
    check_pair(actual, predicted);
    double s = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) s += (actual[i] - predicted[i]) * (actual[i] - predicted[i]);
    return std::sqrt(s / static_cast<double>(actual.size()));
}

double pinball(std::span<const double> actual, std::span<const double> predicted, double tau) {
    check_tau(tau);
    check_pair(actual, predicted);
    return pinball_sum(actual, predicted, tau) / static_cast<double>(actual.size());
}

Aggregate aggregate_pinball(std::span<const EvaluationPair> pairs, double tau) {
    check_tau(tau);
    if (pairs.empty()) throw_data(kModule, "LengthMismatch", "no evaluation pairs to aggregate");
    Aggregate out;
    double pooled = 0.0;
    std::size_t points = 0;
    for (const auto &p : pairs) {
        check_pair(p.actual, p.predicted);
        const double s = pinball_sum(p.actual, p.predicted, tau);
        out.macro += s / static_cast<double>(p.actual.size());
        pooled += s;
        points += p.actual.size();
    }
    out.macro /= static_cast<double>(pairs.size());
    out.micro = pooled / static_cast<double>(points);
    return out;
}

std::vector<double> trailing_yoy_benchmark(const series::WeeklySeries &y, int horizon) {
    check_horizon(horizon);
    const std::size_t n = y.size();
    if (n < kSeason + kTrailingWeeks) {
        throw_data(kModule, "SeriesTooShort",
                   "trailing YoY benchmark needs 64 weeks, have " + std::to_string(n));
    }
    double g = 0.0;
    for (std::size_t t = n - kTrailingWeeks; t < n; ++t) {
        const double lag = y[t - kSeason];
        if (lag == 0.0) {
            throw_data(kModule, "ZeroLagValue",
                       "year-ago value is zero for week " + series::format_date(y.week_at(t)));
        }
        g += y[t] / lag;
    }
    g /= static_cast<double>(kTrailingWeeks);

    std::vector<double> out(static_cast<std::size_t>(horizon));
    for (std::size_t h = 1; h <= out.size(); ++h) {
        // index T + h - 52 with T = n - 1
        out[h - 1] = h <= kSeason ? g * y[n - 1 + h - kSeason] : g * out[h - 1 - kSeason];
    }
    return out;
}

std::string BaselineMethod::name() const {
    switch (kind) {
    case Kind::Naive: return "naive";
    case Kind::SeasonalNaive: return "seasonal_naive";
    case Kind::MovingAverage: return "moving_average_" + std::to_string(window);
    case Kind::Ses: {
        std::ostringstream os;
        os << "ses_" << alpha;
        return os.str();
    }
    }
    return "unknown";
}

std::vector<double> baseline_forecast(const series::WeeklySeries &y, const BaselineMethod &method, int horizon) {
    check_horizon(horizon);
    const std::size_t n = y.size();
    const auto h = static_cast<std::size_t>(horizon);
    std::vector<double> out(h);
    switch (method.kind) {
    case BaselineMethod::Kind::Naive:
        std::fill(out.begin(), out.end(), y[n - 1]);
        break;
    case BaselineMethod::Kind::SeasonalNaive:
        if (n < kSeason) throw_data(kModule, "SeriesTooShort", "seasonal naive needs 52 weeks of history");
        for (std::size_t i = 0; i < h; ++i) out[i] = y[n - kSeason + i % kSeason];
        break;
    case BaselineMethod::Kind::MovingAverage: {
        if (method.window < 1) throw_usage(kModule, "BadParameter", "moving-average window must be positive");
        const auto w = static_cast<std::size_t>(method.window);
        if (n < w) throw_data(kModule, "SeriesTooShort", "moving average needs " + std::to_string(w) + " weeks");
        double s = 0.0;
        for (std::size_t i = n - w; i < n; ++i) s += y[i];
        std::fill(out.begin(), out.end(), s / static_cast<double>(w));
        break;
    }
    case BaselineMethod::Kind::Ses: {
        if (!(method.alpha > 0.0 && method.alpha <= 1.0)) {
            throw_usage(kModule, "BadParameter", "SES alpha must lie in (0,1]");
        }
        double level = y[0];
        for (std::size_t i = 1; i < n; ++i) level = method.alpha * y[i] + (1.0 - method.alpha) * level;
        std::fill(out.begin(), out.end(), level);
        break;
    }
    }
    return out;
}

void BacktestPlan::validate() const {
    if (initial_train_weeks < 1 || step_weeks < 1 || horizon_weeks < 1 || n_folds < 1) {
        throw_usage(kModule, "BadParameter", "backtest plan fields must be positive");
    }
}

ModelSpec baseline_spec(const BaselineMethod &method) {
    return {method.name(), [method](const series::WeeklySeries &train, std::span<const series::FlagSeries>,
                                    std::span<const series::FlagSeries>, int horizon) {
                auto p = baseline_forecast(train, method, horizon);
                return FoldForecast{p, p};
            }};
}

ModelSpec yoy_benchmark_spec() {
    return {"trailing_yoy", [](const series::WeeklySeries &train, std::span<const series::FlagSeries>,
                               std::span<const series::FlagSeries>, int horizon) {
                auto p = trailing_yoy_benchmark(train, horizon);
                return FoldForecast{p, p};
            }};
}

ModelSpec sarimax_spec(const sarimax::SarimaOrder &order, bool log_space, const sarimax::FitOptions &opts) {
    return {"sarimax" + order.to_string(),
            [order, log_space, opts](const series::WeeklySeries &train, std::span<const series::FlagSeries> exog_train,
                                     std::span<const series::FlagSeries> exog_test, int horizon) {
                const auto y = log_space ? series::log_transform(train) : train;
                const auto m = sarimax::fit(y, exog_train, order, opts);
                const auto f = sarimax::forecast(m, y, exog_train, exog_test, horizon);
                FoldForecast out;
                for (int h = 1; h <= horizon; ++h) {
                    out.p50.push_back(sarimax::quantile(f, h, 0.5));
                    out.p90.push_back(sarimax::quantile(f, h, 0.9));
                }
                return out;
            }};
}

BacktestReport backtest(const series::WeeklySeries &y, std::span<const series::FlagSeries> exog,
                        const ModelSpec &model, const BacktestPlan &plan) {
    plan.validate();
    series::require_aligned(y, exog, kModule);
    const long need = static_cast<long>(plan.n_folds) * plan.step_weeks + plan.initial_train_weeks + plan.horizon_weeks;
    if (need > static_cast<long>(y.size())) {
        throw_usage(kModule, "PlanTooLarge",
                    "plan needs " + std::to_string(need) + " weeks, series has " + std::to_string(y.size()));
    }
    BacktestReport report;
    report.model = model.name;
    const auto h = static_cast<std::size_t>(plan.horizon_weeks);
    for (int f = 0; f < plan.n_folds; ++f) {
        const auto train_len = static_cast<std::size_t>(plan.initial_train_weeks + f * plan.step_weeks);
        FoldResult r;
        r.fold = f;
        r.train_first = 0;
        r.train_last = train_len - 1;
        r.test_first = train_len;
        r.test_last = train_len + h - 1;
        if (!(r.train_last < r.test_first)) throw_numerical(kModule, "LeakDetected", "training window overlaps test window");

        const auto train = y.slice(0, train_len);
        std::vector<series::FlagSeries> ex_train, ex_test;
        for (const auto &e : exog) {
            ex_train.push_back(e.slice(0, train_len));
            ex_test.push_back(e.slice(train_len, h));
        }
        r.forecast = model.forecaster(train, ex_train, ex_test, plan.horizon_weeks);
        const auto actual = y.view().subspan(train_len, h);
        r.metrics.mape = mape(actual, r.forecast.p50);
        r.metrics.rmse = rmse(actual, r.forecast.p50);
        r.metrics.pinball50 = pinball(actual, r.forecast.p50, 0.5);
        r.metrics.pinball90 = pinball(actual, r.forecast.p90, 0.9);
        report.mean.mape += r.metrics.mape;
        report.mean.rmse += r.metrics.rmse;
        report.mean.pinball50 += r.metrics.pinball50;
        report.mean.pinball90 += r.metrics.pinball90;
        report.folds.push_back(std::move(r));
    }
    const auto nf = static_cast<double>(plan.n_folds);
    report.mean.mape /= nf;
    report.mean.rmse /= nf;
    report.mean.pinball50 /= nf;
    report.mean.pinball90 /= nf;
    return report;
}

void write_backtest_csv(std::ostream &os, const series::WeeklySeries &y, std::span<const BacktestReport> reports) {
    os << "model,fold,train_start,train_end,test_start,test_end,mape,rmse,pinball50,pinball90\n"
       << std::setprecision(17);
    auto row = [&](const std::string &model, const std::string &fold, const std::string &a, const std::string &b,
                   const std::string &c, const std::string &d, const FoldMetrics &m) {
        os << model << ',' << fold << ',' << a << ',' << b << ',' << c << ',' << d << ',' << m.mape << ',' << m.rmse
           << ',' << m.pinball50 << ',' << m.pinball90 << '\n';
    };
    for (const auto &rep : reports) {
        for (const auto &f : rep.folds) {
            row(rep.model, std::to_string(f.fold), series::format_date(y.week_at(f.train_first)),
                series::format_date(y.week_at(f.train_last)), series::format_date(y.week_at(f.test_first)),
                series::format_date(y.week_at(f.test_last)), f.metrics);
        }
        row(rep.model, "mean", "", "", "", "", rep.mean);
    }
}

void write_backtest_json(std::ostream &os, const series::WeeklySeries &y, std::span<const BacktestReport> reports) {
    auto metrics = [](const FoldMetrics &m) {
        return nlohmann::json{{"mape", m.mape}, {"rmse", m.rmse}, {"pinball50", m.pinball50}, {"pinball90", m.pinball90}};
    };
    nlohmann::json doc = nlohmann::json::array();
    for (const auto &rep : reports) {
        nlohmann::json folds = nlohmann::json::array();
        for (const auto &f : rep.folds) {
            folds.push_back({{"fold", f.fold},
                             {"train_start", series::format_date(y.week_at(f.train_first))},
                             {"train_end", series::format_date(y.week_at(f.train_last))},
                             {"test_start", series::format_date(y.week_at(f.test_first))},
                             {"test_end", series::format_date(y.week_at(f.test_last))},
                             {"metrics", metrics(f.metrics)}});
        }
        doc.push_back({{"model", rep.model}, {"folds", folds}, {"mean", metrics(rep.mean)}});
    }
    os << doc.dump(2) << '\n';
}

}  // namespace crisiscast::eval
