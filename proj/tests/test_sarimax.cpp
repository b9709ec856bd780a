#include "crisiscast/arma_state_space.hpp"
#include "crisiscast/error.hpp"
#include "crisiscast/sarimax.hpp"
#include "oracles.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace crisiscast;
using namespace crisiscast::sarimax;
using series::Date;
using series::FlagSeries;
using series::WeeklySeries;

namespace {

const Date kStart = series::parse_date("2015-01-05");

WeeklySeries make(const std::vector<double> &v, bool log_space = false) {
    return WeeklySeries("y", kStart, v, log_space);
}

std::vector<double> random_ar2(std::mt19937_64 &rng, int order) {
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    while (true) {
        std::vector<double> a(static_cast<std::size_t>(order));
        for (auto &c : a) c = u(rng);
        if (oracle::ar2_stationary(a) && oracle::ar2_max_inverse_root(a) < 0.9) return a;
    }
}

}  // namespace

TEST_CASE("difference operator") {
    const std::vector<double> x{1, 2, 4, 8, 16, 32};
    const auto d1 = difference(x, 1, 0, 4);
    CHECK(d1 == std::vector<double>{1, 2, 4, 8, 16});
    const auto ds = difference(x, 0, 1, 2);
    CHECK(ds == std::vector<double>{3, 6, 12, 24});
    const auto both = difference(x, 1, 1, 2);
    CHECK(both == std::vector<double>{3, 6, 12});
}

TEST_CASE("constrained parameters always satisfy the root conditions") {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> nd(0.0, 2.0);
    for (int rep = 0; rep < 1000; ++rep) {
        std::vector<double> raw(static_cast<std::size_t>(1 + rep % 5));
        for (auto &v : raw) v = nd(rng);
        const auto ar = constrain_ar(raw);
        const auto ma = constrain_ma(raw);
        REQUIRE(max_inverse_root(ar) < 1.0);
        REQUIRE(is_invertible(ma));
        const auto back = unconstrain_ar(ar);
        for (std::size_t i = 0; i < raw.size(); ++i) {
            if (std::abs(raw[i]) < 3.0) REQUIRE(back[i] == doctest::Approx(raw[i]).epsilon(1e-6));
        }
    }
    CHECK(error_code([] { (void)unconstrain_ar(std::vector<double>{1.2}); }) == "NonStationaryParams");
}

TEST_CASE("autocovariances match the truncated psi-weight sum") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 30; ++rep) {
        const auto ar = random_ar2(rng, rep % 3);
        const auto ma_neg = random_ar2(rng, (rep / 3) % 3);
        std::vector<double> ma(ma_neg.size());
        for (std::size_t i = 0; i < ma.size(); ++i) ma[i] = -ma_neg[i];
        const auto got = autocovariances({ar, ma}, 6);
        const auto want = oracle::acvf_by_psi_sum(ar, ma, 6);
        for (int k = 0; k <= 6; ++k) CHECK(got[static_cast<std::size_t>(k)] == doctest::Approx(want[static_cast<std::size_t>(k)]).epsilon(1e-9));
    }
}

TEST_CASE("stationary state covariance solves the Lyapunov equation") {
    const auto poly = expand_seasonal(std::vector<double>{0.5, -0.2}, std::vector<double>{0.3},
                                      std::vector<double>{0.4}, std::vector<double>{-0.3}, 4);
    const auto p0 = stationary_state_covariance(poly);
    const Eigen::VectorXd rv = selection_vector(poly);
    const Eigen::MatrixXd tp = apply_transition(poly, apply_transition(poly, p0).transpose()).transpose();
    const Eigen::MatrixXd rhs = tp + rv * rv.transpose();
    CHECK((rhs - p0).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("iid log-likelihood is the sum of normal log-densities") {
    const std::vector<double> y{0.3, -1.2, 0.8, 2.0, -0.1};
    SarimaxParams params;
    params.sigma2 = 1.0;
    SarimaOrder order{0, 0, 0, 0, 0, 0, 52};
    double expected = 0.0;
    for (double v : y) expected += -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * v * v;
    CHECK(loglikelihood(make(y), {}, order, params) == doctest::Approx(expected).epsilon(1e-13));
}

TEST_CASE("MA(1) log-likelihood equals the dense covariance evaluation") {
    std::mt19937_64 rng(5);
    const auto y = oracle::simulate_arma({}, {0.5}, 1.3, 10, rng);
    SarimaOrder order{0, 0, 1, 0, 0, 0, 52};
    SarimaxParams params;
    params.ma = {0.5};
    params.sigma2 = 1.7;
    params.intercept = 0.2;
    std::vector<double> u(y);
    for (auto &v : u) v -= 0.2;
    const double want = oracle::dense_gaussian_logdensity(u, oracle::acvf_by_psi_sum({}, {0.5}, 9), 1.7);
    CHECK(std::abs(loglikelihood(make(y), {}, order, params) - want) < 1e-8);
}

TEST_CASE("Kalman likelihood equals dense covariance for random ARMA(p<=2,q<=2)") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unif(0.2, 3.0);
    for (int rep = 0; rep < 50; ++rep) {
        const int p = rep % 3, q = (rep / 3) % 3;
        const auto ar = random_ar2(rng, p);
        auto ma = random_ar2(rng, q);
        for (auto &c : ma) c = -c;
        const auto y = oracle::simulate_arma(ar, ma, 1.0, 20, rng);
        std::vector<int> flag_values(20, 0);
        for (std::size_t i = 3; i < 20; i += 5) flag_values[i] = 1;
        const FlagSeries flag("f", kStart, flag_values);

        SarimaxParams params;
        params.ar = ar;
        params.ma = ma;
        params.sigma2 = unif(rng);
        params.intercept = 0.4;
        params.exog_betas = {1.5};
        std::vector<double> u(y);
        for (std::size_t i = 0; i < u.size(); ++i) u[i] -= 0.4 + 1.5 * flag_values[i];

        const double want = oracle::dense_gaussian_logdensity(u, oracle::acvf_by_psi_sum(ar, ma, 19), params.sigma2);
        const std::vector<FlagSeries> exog{flag};
        const double got = loglikelihood(make(y), exog, SarimaOrder{p, 0, q, 0, 0, 0, 52}, params);
        REQUIRE(std::abs(got - want) < 1e-8);
    }
}

TEST_CASE("seasonal likelihood with differencing matches the dense oracle on the differenced series") {
    std::mt19937_64 rng(99);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> y(24);
    double level = 10.0;
    for (auto &v : y) {
        level += nd(rng);
        v = level;
    }
    SarimaOrder order{1, 1, 0, 0, 1, 1, 4};
    SarimaxParams params;
    params.ar = {0.3};
    params.seasonal_ma = {-0.4};
    params.sigma2 = 0.8;
    // expanded polynomials: AR 1 - 0.3B ; MA 1 - 0.4 B^4
    const std::vector<double> ar{0.3};
    const std::vector<double> ma{0.0, 0.0, 0.0, -0.4};
    const auto w = difference(y, 1, 1, 4);
    const double want = oracle::dense_gaussian_logdensity(
        w, oracle::acvf_by_psi_sum(ar, ma, static_cast<int>(w.size()) - 1), 0.8);
    CHECK(std::abs(loglikelihood(make(y), {}, order, params) - want) < 1e-8);
}

TEST_CASE("loglikelihood rejects non-stationary parameters") {
    SarimaxParams params;
    params.ar = {1.05};
    CHECK(error_code([&] { (void)loglikelihood(make({1, 2, 3, 4, 5}), {}, SarimaOrder{1, 0, 0, 0, 0, 0, 52}, params); }) ==
          "NonStationaryParams");
    params.ar = {0.5};
    params.ma = {-1.5};
    CHECK(error_code([&] { (void)loglikelihood(make({1, 2, 3, 4, 5}), {}, SarimaOrder{1, 0, 1, 0, 0, 0, 52}, params); }) ==
          "NonStationaryParams");
}

TEST_CASE("fit recovers simple models") {
    SUBCASE("white noise variance") {
        std::mt19937_64 rng(1);
        const auto y = oracle::simulate_arma({}, {}, 1.0, 200, rng);
        const auto m = fit(make(y), {}, SarimaOrder{0, 0, 0, 0, 0, 0, 52});
        CHECK(m.sigma2 == doctest::Approx(1.0).epsilon(0.15));
        CHECK(m.converged);
    }
    SUBCASE("AR(1)") {
        std::mt19937_64 rng(2);
        const auto y = oracle::simulate_arma({0.8}, {}, 1.0, 520, rng);
        const auto m = fit(make(y), {}, SarimaOrder{1, 0, 0, 0, 0, 0, 52});
        CHECK(std::abs(m.ar_coeffs[0] - 0.8) < 0.1);
        CHECK(is_stationary(m.ar_coeffs));
        // loglik is reproducible from the returned parameters
        CHECK(std::abs(loglikelihood(make(y), {}, m.order, m.params()) - m.loglik) < 1e-6);
        CHECK(m.aicc == doctest::Approx(aicc(m.loglik, m.parameter_count(), m.n_obs)));
    }
    SUBCASE("exogenous flag coefficient matches OLS") {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> nd(0.0, 0.1);
        std::vector<int> flag(150, 0);
        std::vector<double> y(150);
        for (std::size_t i = 0; i < y.size(); ++i) {
            flag[i] = (i % 7 == 0) ? 1 : ((i % 11 == 0) ? -1 : 0);
            y[i] = 5.0 * flag[i] + nd(rng);
        }
        const std::vector<FlagSeries> exog{FlagSeries("f", kStart, flag)};
        const auto m = fit(make(y), exog, SarimaOrder{0, 0, 0, 0, 0, 0, 52});
        Eigen::MatrixXd x(150, 2);
        Eigen::VectorXd yy(150);
        for (Eigen::Index i = 0; i < 150; ++i) {
            x(i, 0) = flag[static_cast<std::size_t>(i)];
            x(i, 1) = 1.0;
            yy(i) = y[static_cast<std::size_t>(i)];
        }
        const auto beta = oracle::ols(x, yy);
        CHECK(m.exog_betas[0] == doctest::Approx(beta(0)).epsilon(1e-9));
        CHECK(std::abs(m.exog_betas[0] - 5.0) < 0.05);
    }
}

TEST_CASE("fitted parameters are a local optimum and fits are deterministic") {
    std::mt19937_64 rng(17);
    const auto y = oracle::simulate_arma({0.5}, {0.3}, 1.0, 300, rng);
    const SarimaOrder order{1, 0, 1, 0, 0, 0, 52};
    const auto m = fit(make(y), {}, order);
    const auto again = fit(make(y), {}, order);
    CHECK(m.ar_coeffs == again.ar_coeffs);
    CHECK(m.ma_coeffs == again.ma_coeffs);
    CHECK(m.sigma2 == again.sigma2);

    const auto base = m.params();
    const double ll0 = loglikelihood(make(y), {}, order, base);
    for (double delta : {-0.05, 0.05}) {
        for (int coord = 0; coord < 4; ++coord) {
            auto p = base;
            if (coord == 0) p.ar[0] += delta;
            if (coord == 1) p.ma[0] += delta;
            if (coord == 2) p.intercept += delta;
            if (coord == 3) p.sigma2 += delta;
            CHECK(loglikelihood(make(y), {}, order, p) <= ll0);
        }
    }
}

TEST_CASE("fit preconditions") {
    CHECK(error_code([] { (void)fit(make(std::vector<double>(56, 1.0)), {}, SarimaOrder{1, 0, 0, 0, 1, 0, 52}); }) ==
          "SeriesTooShort");
    std::vector<double> y(120);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    for (auto &v : y) v = nd(rng);
    const std::vector<FlagSeries> zero{FlagSeries("z", kStart, std::vector<int>(120, 0))};
    CHECK(error_code([&] { (void)fit(make(y), zero, SarimaOrder{0, 0, 0, 0, 0, 0, 52}); }) == "DegenerateExog");
    std::vector<int> a(120, 0);
    a[5] = 1;
    const std::vector<FlagSeries> twins{FlagSeries("a", kStart, a), FlagSeries("b", kStart, a)};
    CHECK(error_code([&] { (void)fit(make(y), twins, SarimaOrder{0, 0, 0, 0, 0, 0, 52}); }) == "DegenerateExog");
    CHECK(error_code([&] { (void)fit(make(y), {}, SarimaOrder{6, 0, 0, 0, 0, 0, 52}); }) == "BadOrder");
}

TEST_CASE("forecast closed forms") {
    SUBCASE("iid") {
        FittedSarimax m;
        m.order = {0, 0, 0, 0, 0, 0, 52};
        m.sigma2 = 2.5;
        const auto f = forecast(m, make({1.0, -1.0, 0.5}), {}, {}, 12);
        REQUIRE(f.means.size() == 12);
        for (int h = 0; h < 12; ++h) {
            CHECK(f.means[static_cast<std::size_t>(h)] == 0.0);
            CHECK(f.variances[static_cast<std::size_t>(h)] == doctest::Approx(2.5).epsilon(1e-14));
        }
    }
    SUBCASE("AR(1) with known coefficient") {
        FittedSarimax m;
        m.order = {1, 0, 0, 0, 0, 0, 52};
        m.ar_coeffs = {0.7};
        m.sigma2 = 1.3;
        std::mt19937_64 rng(8);
        const auto y = oracle::simulate_arma({0.7}, {}, 1.0, 60, rng);
        const auto f = forecast(m, make(y), {}, {}, 20);
        for (int h = 1; h <= 20; ++h) {
            const double mean = std::pow(0.7, h) * y.back();
            const double var = 1.3 * (1.0 - std::pow(0.7, 2 * h)) / (1.0 - 0.49);
            CHECK(std::abs(f.means[static_cast<std::size_t>(h - 1)] - mean) < 1e-9);
            CHECK(std::abs(f.variances[static_cast<std::size_t>(h - 1)] - var) < 1e-9);
        }
    }
    SUBCASE("random walk continues the last level") {
        std::mt19937_64 rng(4);
        std::normal_distribution<double> nd;
        std::vector<double> y(80);
        double level = 0.0;
        for (auto &v : y) v = (level += nd(rng));
        const auto m = fit(make(y), {}, SarimaOrder{0, 1, 0, 0, 0, 0, 52});
        const auto f = forecast(m, make(y), {}, {}, 78);
        REQUIRE(f.means.size() == 78);
        for (std::size_t h = 0; h < 78; ++h) {
            CHECK(f.means[h] == y.back());
            CHECK(f.variances[h] == doctest::Approx(m.sigma2 * static_cast<double>(h + 1)).epsilon(1e-10));
        }
    }
    SUBCASE("seasonal random walk repeats the last season") {
        std::vector<double> y(30);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<double>(i % 4) + 0.01 * static_cast<double>(i * i % 5);
        FittedSarimax m;
        m.order = {0, 0, 0, 0, 1, 0, 4};
        m.sigma2 = 1.0;
        const auto f = forecast(m, make(y), {}, {}, 9);
        for (std::size_t h = 0; h < 9; ++h) CHECK(f.means[h] == y[26 + h % 4]);
        CHECK(f.variances[0] == doctest::Approx(1.0));
        CHECK(f.variances[4] == doctest::Approx(2.0));
        CHECK(f.variances[8] == doctest::Approx(3.0));
    }
}

TEST_CASE("forecast with future regressors") {
    FittedSarimax m;
    m.order = {0, 0, 0, 0, 0, 0, 52};
    m.sigma2 = 1.0;
    m.exog_betas = {2.0};
    m.intercept = 1.0;
    const std::vector<FlagSeries> hist{FlagSeries("f", kStart, {0, 0, 1})};
    const WeeklySeries y = make({1.0, 1.0, 3.0});
    const std::vector<FlagSeries> fut{FlagSeries("f", y.week_at(3), {1, 0, -1})};
    const auto f = forecast(m, y, hist, fut, 3);
    CHECK(f.means == std::vector<double>{3.0, 1.0, -1.0});
    CHECK(error_code([&] { (void)forecast(m, y, hist, {}, 3); }) == "MissingFutureExog");
    CHECK(error_code([&] { (void)forecast(m, y, hist, fut, 4); }) == "MissingFutureExog");
}

TEST_CASE("quantiles") {
    ForecastDistribution f;
    f.horizon = 2;
    f.means = {3.0, 0.0};
    f.variances = {4.0, 1.0};
    CHECK(quantile(f, 1, 0.5) == 3.0);
    CHECK(std::abs(quantile(f, 2, 0.9) - oracle::normal_inverse_by_bisection(0.9)) < 1e-10);
    CHECK(std::abs(quantile(f, 2, 0.9) - 1.2816) < 1e-4);
    ForecastDistribution lg;
    lg.horizon = 1;
    lg.means = {0.0};
    lg.variances = {0.0};
    lg.log_space = true;
    CHECK(quantile(lg, 1, 0.9) == 1.0);
    CHECK(error_code([&] { (void)quantile(f, 3, 0.5); }) == "HorizonOutOfRange");
    CHECK(error_code([&] { (void)quantile(f, 1, 1.0); }) == "TauOutOfRange");
}
