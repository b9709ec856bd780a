#include "crisiscast/error.hpp"
#include "crisiscast/eval.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <json.hpp>
#include <random>
#include <sstream>

using namespace crisiscast;
using eval::BaselineMethod;

namespace {

const series::Date kStart = series::parse_date("2017-01-02");

series::WeeklySeries make(std::vector<double> v) { return {"y", kStart, std::move(v)}; }

// Direct loops, written independently of the library.
double loop_mape(const std::vector<double> &a, const std::vector<double> &f) {
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs((a[i] - f[i]) / a[i]);
    return static_cast<double>(100.0L * s / a.size());
}
double loop_rmse(const std::vector<double> &a, const std::vector<double> &f) {
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (long double)(a[i] - f[i]) * (a[i] - f[i]);
    return std::sqrt(static_cast<double>(s / a.size()));
}
double loop_pinball(const std::vector<double> &a, const std::vector<double> &f, double tau) {
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double e = a[i] - f[i];
        s += std::max(tau * e, (tau - 1.0) * e);
    }
    return static_cast<double>(s / a.size());
}

}  // namespace

TEST_CASE("metric hand cases") {
    const std::vector<double> a{100, 200}, f{110, 180};
    CHECK(eval::mape(a, f) == doctest::Approx(10.0).epsilon(1e-15));
    CHECK(eval::mape(a, a) == 0.0);
    CHECK(eval::rmse(std::vector<double>{1, 2, 3}, std::vector<double>{2, 2, 2}) ==
          doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-15));
    CHECK(eval::rmse(a, a) == 0.0);
    CHECK(eval::pinball(std::vector<double>{10}, std::vector<double>{8}, 0.9) == doctest::Approx(1.8).epsilon(1e-15));
    CHECK(eval::pinball(std::vector<double>{10}, std::vector<double>{12}, 0.9) == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(eval::pinball(a, a, 0.3) == 0.0);

    CHECK(error_code([] { (void)eval::mape(std::vector<double>{1, 0}, std::vector<double>{1, 1}); }) == "ZeroActual");
    CHECK(error_code([] { (void)eval::pinball(std::vector<double>{1}, std::vector<double>{1}, 1.0); }) ==
          "TauOutOfRange");
    CHECK(error_code([] { (void)eval::rmse(std::vector<double>{1}, std::vector<double>{1, 2}); }) == "LengthMismatch");
}

TEST_CASE("metrics match direct loops on 1000 random pairs") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-1000.0, 1000.0);
    std::uniform_int_distribution<int> len(1, 60);
    std::uniform_real_distribution<double> tau_d(0.01, 0.99);
    for (int rep = 0; rep < 1000; ++rep) {
        std::vector<double> a(static_cast<std::size_t>(len(rng))), f(a.size());
        for (auto &x : a) {
            do x = u(rng);
            while (x == 0.0);
        }
        for (auto &x : f) x = u(rng);
        const double tau = tau_d(rng);
        REQUIRE(std::abs(eval::mape(a, f) - loop_mape(a, f)) <= 1e-12 * std::max(1.0, loop_mape(a, f)));
        REQUIRE(std::abs(eval::rmse(a, f) - loop_rmse(a, f)) <= 1e-12 * std::max(1.0, loop_rmse(a, f)));
        REQUIRE(std::abs(eval::pinball(a, f, tau) - loop_pinball(a, f, tau)) <=
                1e-12 * std::max(1.0, loop_pinball(a, f, tau)));
        // tau = 0.5 is half the mean absolute error
        long double mae = 0;
        for (std::size_t i = 0; i < a.size(); ++i) mae += std::fabs(a[i] - f[i]);
        REQUIRE(std::abs(eval::pinball(a, f, 0.5) - static_cast<double>(mae / a.size()) / 2.0) <=
                1e-12 * std::max(1.0, static_cast<double>(mae / a.size())));
    }
    // scaling both vectors scales rmse
    const std::vector<double> a{1, -2, 3.5}, f{0.5, 1, 2};
    std::vector<double> a3, f3;
    for (double x : a) a3.push_back(-3 * x);
    for (double x : f) f3.push_back(-3 * x);
    CHECK(eval::rmse(a3, f3) == doctest::Approx(3 * eval::rmse(a, f)).epsilon(1e-14));
}

TEST_CASE("macro and micro aggregation") {
    const std::vector<eval::EvaluationPair> pairs{{{10}, {8}}, {{1, 1, 1}, {1, 1, 0}}};
    const auto agg = eval::aggregate_pinball(pairs, 0.9);
    CHECK(agg.macro == doctest::Approx((1.8 + 0.9 / 3.0) / 2.0).epsilon(1e-15));
    CHECK(agg.micro == doctest::Approx((1.8 + 0.9) / 4.0).epsilon(1e-15));
}

TEST_CASE("trailing YoY benchmark") {
    const auto c = eval::trailing_yoy_benchmark(make(std::vector<double>(70, 12.5)), 120);
    for (double v : c) CHECK(v == 12.5);

    // every week 1.10x the year-ago week
    std::vector<double> v(120);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(50, 150);
    for (std::size_t i = 0; i < 52; ++i) v[i] = u(rng);
    for (std::size_t i = 52; i < v.size(); ++i) v[i] = 1.10 * v[i - 52];
    const auto y = make(v);
    const int horizon = 110;
    const auto f = eval::trailing_yoy_benchmark(y, horizon);
    const std::size_t T = v.size() - 1;
    for (int h = 1; h <= 52; ++h) {
        CHECK(f[static_cast<std::size_t>(h - 1)] == doctest::Approx(1.10 * v[T + h - 52]).epsilon(1e-12));
    }
    // unrolled: forecast[h] = g * forecast[h - 52] = g^2 * y[T + h - 104]
    for (int h = 53; h <= 104; ++h) {
        CHECK(f[static_cast<std::size_t>(h - 1)] == doctest::Approx(1.10 * f[static_cast<std::size_t>(h - 53)]).epsilon(1e-12));
        CHECK(f[static_cast<std::size_t>(h - 1)] == doctest::Approx(1.21 * v[T + h - 104]).epsilon(1e-12));
    }
    CHECK(f[104] == doctest::Approx(1.331 * v[T + 105 - 156]).epsilon(1e-12));

    CHECK(error_code([] { (void)eval::trailing_yoy_benchmark(make(std::vector<double>(63, 1.0)), 4); }) ==
          "SeriesTooShort");
    std::vector<double> z(80, 1.0);
    z[80 - 52 - 1] = 0.0;
    CHECK(error_code([&] { (void)eval::trailing_yoy_benchmark(make(z), 4); }) == "ZeroLagValue");
}

TEST_CASE("baseline forecasts") {
    std::vector<double> v(104);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 10.0 + static_cast<double>(i % 52);
    v.back() = 7.0;
    const auto y = make(v);
    for (double x : eval::baseline_forecast(y, BaselineMethod::naive(), 9)) CHECK(x == 7.0);

    std::vector<double> per(156);
    for (std::size_t i = 0; i < per.size(); ++i) per[i] = std::sin(static_cast<double>(i % 52)) + 5.0;
    const auto sn = eval::baseline_forecast(make(per), BaselineMethod::seasonal_naive(), 130);
    for (std::size_t h = 0; h < sn.size(); ++h) CHECK(sn[h] == per[(156 + h) % 52]);

    const auto ma = eval::baseline_forecast(make({1, 2, 3, 4, 5, 6, 7}), BaselineMethod::moving_average(3), 2);
    CHECK(ma[0] == 6.0);
    CHECK(ma[1] == 6.0);

    CHECK(eval::baseline_forecast(y, BaselineMethod::ses(1.0), 5) == eval::baseline_forecast(y, BaselineMethod::naive(), 5));
    const auto s = eval::baseline_forecast(make({2, 4}), BaselineMethod::ses(0.25), 1);
    CHECK(s[0] == 2.5);

    CHECK(error_code([] { (void)eval::baseline_forecast(make({1, 2}), BaselineMethod::seasonal_naive(), 1); }) ==
          "SeriesTooShort");
    CHECK(error_code([] { (void)eval::baseline_forecast(make({1, 2}), BaselineMethod::moving_average(3), 1); }) ==
          "SeriesTooShort");
    CHECK(error_code([] { (void)eval::baseline_forecast(make({1, 2}), BaselineMethod::ses(0.0), 1); }) ==
          "BadParameter");
    CHECK(BaselineMethod::moving_average(7).name() == "moving_average_7");
}

TEST_CASE("backtest") {
    const auto c = make(std::vector<double>(40, 3.0));
    const auto r = eval::backtest(c, {}, eval::baseline_spec(BaselineMethod::naive()), {20, 5, 5, 1});
    REQUIRE(r.folds.size() == 1);
    CHECK(r.mean.mape == 0.0);
    CHECK(r.mean.rmse == 0.0);
    CHECK(r.mean.pinball50 == 0.0);
    CHECK(r.mean.pinball90 == 0.0);

    CHECK(error_code([&] { (void)eval::backtest(c, {}, eval::baseline_spec(BaselineMethod::naive()), {20, 5, 5, 4}); }) ==
          "PlanTooLarge");

    // folds are contiguous prefixes followed by the adjacent block
    const auto r4 = eval::backtest(make(std::vector<double>(60, 1.0)), {},
                                   eval::baseline_spec(BaselineMethod::naive()), {20, 5, 7, 4});
    for (std::size_t f = 0; f < r4.folds.size(); ++f) {
        const auto &fold = r4.folds[f];
        CHECK(fold.train_first == 0);
        CHECK(fold.train_last == 19 + 5 * f);
        CHECK(fold.test_first == fold.train_last + 1);
        CHECK(fold.test_last == fold.test_first + 6);
    }

    // forecasters only see the training prefix
    std::size_t longest = 0;
    const eval::ModelSpec spy{"spy", [&](const series::WeeklySeries &train, std::span<const series::FlagSeries> ex_train,
                                         std::span<const series::FlagSeries> ex_test, int h) {
                                  longest = std::max(longest, train.size());
                                  CHECK(ex_train.front().size() == train.size());
                                  CHECK(ex_test.front().size() == static_cast<std::size_t>(h));
                                  CHECK(ex_test.front().start_week() == train.week_at(train.size()));
                                  std::vector<double> p(static_cast<std::size_t>(h), 1.0);
                                  return eval::FoldForecast{p, p};
                              }};
    const auto y60 = make(std::vector<double>(60, 1.0));
    const series::FlagSeries flag("peak", kStart, std::vector<int>(60, 0));
    const std::vector<series::FlagSeries> ex{flag};
    (void)eval::backtest(y60, ex, spy, {20, 5, 7, 4});
    CHECK(longest == 35);
}

TEST_CASE("seasonal naive beats naive on a periodic series with noise") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> v(260);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 100.0 + 20.0 * std::sin(2.0 * M_PI * static_cast<double>(i) / 52.0) + nd(rng);
    const auto y = make(v);
    const eval::BacktestPlan plan{104, 13, 13, 8};
    const auto sn = eval::backtest(y, {}, eval::baseline_spec(BaselineMethod::seasonal_naive()), plan);
    const auto nv = eval::backtest(y, {}, eval::baseline_spec(BaselineMethod::naive()), plan);
    CHECK(sn.mean.mape < nv.mean.mape);

    const std::vector<eval::BacktestReport> reps{sn, nv};
    std::ostringstream csv, js;
    eval::write_backtest_csv(csv, y, reps);
    eval::write_backtest_json(js, y, reps);
    CHECK(csv.str().rfind("model,fold,train_start,train_end,test_start,test_end,mape,rmse,pinball50,pinball90\n", 0) == 0);
    CHECK(csv.str().find("seasonal_naive,0,2017-01-02,") != std::string::npos);
    const auto doc = nlohmann::json::parse(js.str());
    CHECK(doc.size() == 2);
    CHECK(doc[0]["folds"].size() == 8);
    CHECK(doc[0]["mean"]["mape"].get<double>() == sn.mean.mape);
}

TEST_CASE("SARIMAX backtest spec") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> nd(0.0, 0.05);
    std::vector<double> v(120);
    double x = 0.0;
    for (auto &val : v) {
        x = 0.7 * x + nd(rng);
        val = std::exp(4.0 + x);
    }
    const auto r = eval::backtest(make(v), {}, eval::sarimax_spec({1, 0, 0, 0, 0, 0, 52}, true), {80, 10, 10, 2});
    REQUIRE(r.folds.size() == 2);
    for (const auto &f : r.folds) {
        for (std::size_t h = 0; h < f.forecast.p50.size(); ++h) CHECK(f.forecast.p90[h] > f.forecast.p50[h]);
    }
    CHECK(r.mean.mape < 10.0);
}
