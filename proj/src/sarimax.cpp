#include "crisiscast/sarimax.hpp"

#include "crisiscast/arma_state_space.hpp"
#include "crisiscast/error.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace crisiscast::sarimax {

namespace {

constexpr const char *kModule = "sarimax";

/// Differenced response in column 0, differenced regressors (exog then intercept) after it.
struct Design {
    Eigen::MatrixXd data;
    int n_exog = 0;
    bool intercept = false;

    [[nodiscard]] Eigen::Index n() const { return data.rows(); }
    [[nodiscard]] Eigen::Index regressors() const { return data.cols() - 1; }
};

std::vector<std::vector<double>> exog_columns(std::span<const FlagSeries> exog) {
    std::vector<std::vector<double>> cols;
    cols.reserve(exog.size());
    for (const auto &f : exog) cols.push_back(f.as_doubles());
    return cols;
}

Design build_design(std::span<const double> y, const std::vector<std::vector<double>> &exog,
                    const SarimaOrder &order) {
    const auto wy = difference(y, order.d, order.D, order.s);
    Design des;
    des.n_exog = static_cast<int>(exog.size());
    des.intercept = order.has_intercept();
    const auto n = static_cast<Eigen::Index>(wy.size());
    des.data.resize(n, 1 + des.n_exog + (des.intercept ? 1 : 0));
    for (Eigen::Index t = 0; t < n; ++t) des.data(t, 0) = wy[static_cast<std::size_t>(t)];
    for (int j = 0; j < des.n_exog; ++j) {
        if (exog[static_cast<std::size_t>(j)].size() != y.size()) {
            throw_data(kModule, "MisalignedExog", "regressor length does not match the series");
        }
        const auto wx = difference(exog[static_cast<std::size_t>(j)], order.d, order.D, order.s);
        for (Eigen::Index t = 0; t < n; ++t) des.data(t, 1 + j) = wx[static_cast<std::size_t>(t)];
    }
    if (des.intercept) des.data.col(des.data.cols() - 1).setOnes();
    return des;
}

ArmaPolynomials polys_from(const SarimaOrder &order, const SarimaxParams &p) {
    return expand_seasonal(p.ar, p.ma, p.seasonal_ar, p.seasonal_ma, order.s);
}

SarimaxParams constrain(const SarimaOrder &order, std::span<const double> raw) {
    SarimaxParams p;
    std::size_t at = 0;
    auto take = [&](int count) {
        auto s = raw.subspan(at, static_cast<std::size_t>(count));
        at += static_cast<std::size_t>(count);
        return s;
    };
    p.ar = constrain_ar(take(order.p));
    p.ma = constrain_ma(take(order.q));
    p.seasonal_ar = constrain_ar(take(order.P));
    p.seasonal_ma = constrain_ma(take(order.Q));
    return p;
}

struct Profile {
    double neg_loglik = std::numeric_limits<double>::infinity();
    Eigen::VectorXd beta;
    double sigma2 = 0.0;
};

/// Likelihood with regression coefficients and sigma2 concentrated out (exact GLS given the ARMA part).
Profile profile(const ArmaPolynomials &poly, const Design &des) {
    const KalmanOutput k = kalman_filter(poly, des.data);
    const Eigen::Index n = des.n();
    Eigen::VectorXd w(n);
    double sum_log_f = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const double f = k.F[static_cast<std::size_t>(t)];
        w(t) = 1.0 / std::sqrt(f);
        sum_log_f += std::log(f);
    }
    Profile out;
    Eigen::VectorXd resid = k.innovations.col(0);
    if (des.regressors() > 0) {
        const Eigen::MatrixXd vx = k.innovations.rightCols(des.regressors()).array().colwise() * w.array();
        const Eigen::VectorXd vy = k.innovations.col(0).array() * w.array();
        out.beta = vx.colPivHouseholderQr().solve(vy);
        resid -= k.innovations.rightCols(des.regressors()) * out.beta;
    }
    const double ss = (resid.array() * w.array()).square().sum();
    out.sigma2 = ss / static_cast<double>(n);
    if (!(out.sigma2 > 0.0) || !std::isfinite(out.sigma2)) return out;
    out.neg_loglik = 0.5 * static_cast<double>(n) * (std::log(2.0 * std::numbers::pi * out.sigma2) + 1.0) +
                     0.5 * sum_log_f;
    return out;
}

void check_exog_design(const Design &des) {
    for (int j = 0; j < des.n_exog; ++j) {
        if (des.data.col(1 + j).cwiseAbs().maxCoeff() == 0.0) {
            throw_data(kModule, "DegenerateExog", "regressor " + std::to_string(j) +
                                                      " is identically zero after differencing");
        }
    }
    if (des.regressors() > 0) {
        const Eigen::MatrixXd x = des.data.rightCols(des.regressors());
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
        qr.setThreshold(1e-10);
        if (qr.rank() < x.cols()) {
            throw_data(kModule, "DegenerateExog", "regressors are collinear after differencing");
        }
    }
}

}  // namespace

void SarimaOrder::validate() const {
    auto bad = [&](const std::string &what) { throw_usage(kModule, "BadOrder", to_string() + ": " + what); };
    if (p < 0 || d < 0 || q < 0 || P < 0 || D < 0 || Q < 0) bad("orders must be non-negative");
    if (p > 5 || q > 5) bad("p and q are limited to 5");
    if (P > 2 || Q > 2) bad("P and Q are limited to 2");
    if (d > 2 || D > 2) bad("d and D are limited to 2");
    if (P + D + Q > 0 && s < 2) bad("seasonal period must be >= 2");
}

std::string SarimaOrder::to_string() const {
    return "(" + std::to_string(p) + "," + std::to_string(d) + "," + std::to_string(q) + ")(" + std::to_string(P) +
           "," + std::to_string(D) + "," + std::to_string(Q) + ")[" + std::to_string(s) + "]";
}

int FittedSarimax::parameter_count() const {
    return order.arma_param_count() + static_cast<int>(exog_betas.size()) + (order.has_intercept() ? 1 : 0) + 1;
}

SarimaxParams FittedSarimax::params() const {
    SarimaxParams p;
    p.ar = ar_coeffs;
    p.ma = ma_coeffs;
    p.seasonal_ar = seasonal_ar_coeffs;
    p.seasonal_ma = seasonal_ma_coeffs;
    p.exog_betas = exog_betas;
    p.intercept = intercept;
    p.sigma2 = sigma2;
    return p;
}

std::vector<double> difference(std::span<const double> x, int d, int D, int s) {
    std::vector<double> out(x.begin(), x.end());
    auto lag_diff = [&](std::size_t lag) {
        if (out.size() <= lag) {
            out.clear();
            return;
        }
        for (std::size_t i = out.size(); i-- > lag;) out[i] -= out[i - lag];
        out.erase(out.begin(), out.begin() + static_cast<long>(lag));
    };
    for (int k = 0; k < D; ++k) lag_diff(static_cast<std::size_t>(s));
    for (int k = 0; k < d; ++k) lag_diff(1);
    return out;
}

double aicc(double loglik, int k, int n) {
    if (n <= k + 1) {
        throw_numerical("auto-order", "DegenerateSampleSize",
                        "AICc needs n > k + 1 (n=" + std::to_string(n) + ", k=" + std::to_string(k) + ")");
    }
    const double nd = n, kd = k;
    return -2.0 * loglik + 2.0 * kd * nd / (nd - kd - 1.0);
}

double loglikelihood(std::span<const double> y, const std::vector<std::vector<double>> &exog,
                     const SarimaOrder &order, const SarimaxParams &params) {
    order.validate();
    if (static_cast<int>(params.ar.size()) != order.p || static_cast<int>(params.ma.size()) != order.q ||
        static_cast<int>(params.seasonal_ar.size()) != order.P ||
        static_cast<int>(params.seasonal_ma.size()) != order.Q || params.exog_betas.size() != exog.size()) {
        throw_usage(kModule, "BadParameter", "parameter dimensions do not match the order and regressors");
    }
    if (!(params.sigma2 > 0.0)) throw_usage(kModule, "BadParameter", "sigma2 must be positive");
    if (!is_stationary(params.ar) || !is_stationary(params.seasonal_ar)) {
        throw_numerical(kModule, "NonStationaryParams", "AR polynomial has a root on or inside the unit circle");
    }
    if (!is_invertible(params.ma) || !is_invertible(params.seasonal_ma)) {
        throw_numerical(kModule, "NonStationaryParams", "MA polynomial has a root on or inside the unit circle");
    }
    const Design des = build_design(y, exog, order);
    if (des.n() < 1) throw_data(kModule, "SeriesTooShort", "no observations left after differencing");

    Eigen::MatrixXd u = des.data.col(0);
    for (int j = 0; j < des.n_exog; ++j) u.col(0) -= params.exog_betas[static_cast<std::size_t>(j)] * des.data.col(1 + j);
    if (des.intercept) u.col(0).array() -= params.intercept;

    const KalmanOutput k = kalman_filter(polys_from(order, params), u);
    double ll = 0.0;
    for (Eigen::Index t = 0; t < des.n(); ++t) {
        const double f = params.sigma2 * k.F[static_cast<std::size_t>(t)];
        const double v = k.innovations(t, 0);
        ll -= 0.5 * (std::log(2.0 * std::numbers::pi * f) + v * v / f);
    }
    return ll;
}

double loglikelihood(const WeeklySeries &y, std::span<const FlagSeries> exog, const SarimaOrder &order,
                     const SarimaxParams &params) {
    series::require_aligned(y, exog, kModule);
    return loglikelihood(y.view(), exog_columns(exog), order, params);
}

FittedSarimax fit(const WeeklySeries &y, std::span<const FlagSeries> exog, const SarimaOrder &order,
                  const FitOptions &opts) {
    order.validate();
    series::require_aligned(y, exog, kModule);
    const auto cols = exog_columns(exog);

    const int k_total = order.arma_param_count() + static_cast<int>(exog.size()) + (order.has_intercept() ? 1 : 0) + 1;
    const long n_w = static_cast<long>(y.size()) - order.differencing_loss();
    if (n_w < k_total + 5) {
        throw_data(kModule, "SeriesTooShort",
                   order.to_string() + " needs at least " + std::to_string(k_total + 5) +
                       " observations after differencing, have " + std::to_string(std::max(n_w, 0L)));
    }
    const Design des = build_design(y.view(), cols, order);
    check_exog_design(des);

    auto objective = [&](const std::vector<double> &raw) {
        const SarimaxParams p = constrain(order, raw);
        return profile(polys_from(order, p), des).neg_loglik;
    };

    const auto dim = static_cast<std::size_t>(order.arma_param_count());
    std::vector<double> best_raw(dim, 0.0);
    double best_value = objective(best_raw);
    bool converged = dim == 0;
    int iterations = 0;

    if (dim > 0) {
        std::seed_seq seq{static_cast<std::uint32_t>(opts.seed), static_cast<std::uint32_t>(opts.seed >> 32),
                          static_cast<std::uint32_t>(order.p), static_cast<std::uint32_t>(order.d),
                          static_cast<std::uint32_t>(order.q), static_cast<std::uint32_t>(order.P),
                          static_cast<std::uint32_t>(order.D), static_cast<std::uint32_t>(order.Q),
                          static_cast<std::uint32_t>(order.s)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> jitter(0.0, opts.restart_jitter);

        for (int run = 0; run <= opts.restarts; ++run) {
            std::vector<double> start = best_raw;
            if (run > 0) {
                for (auto &v : start) v += jitter(rng);
            }
            const auto res = optim::nelder_mead(objective, start, opts.nelder_mead);
            iterations += res.iterations;
            converged = converged || res.converged;
            if (res.value < best_value) {
                best_value = res.value;
                best_raw = res.x;
            }
        }
    }
    if (!converged || !std::isfinite(best_value)) {
        throw_numerical(kModule, "NonConvergence", order.to_string() + ": optimizer exhausted restarts");
    }

    const SarimaxParams p = constrain(order, best_raw);
    const Profile prof = profile(polys_from(order, p), des);

    FittedSarimax m;
    m.order = order;
    m.ar_coeffs = p.ar;
    m.ma_coeffs = p.ma;
    m.seasonal_ar_coeffs = p.seasonal_ar;
    m.seasonal_ma_coeffs = p.seasonal_ma;
    for (int j = 0; j < des.n_exog; ++j) m.exog_betas.push_back(prof.beta(j));
    for (const auto &f : exog) m.exog_names.push_back(f.name());
    if (des.intercept) m.intercept = prof.beta(des.regressors() - 1);
    m.sigma2 = prof.sigma2;
    m.loglik = -prof.neg_loglik;
    m.n_obs = static_cast<int>(des.n());
    m.aicc = aicc(m.loglik, m.parameter_count(), m.n_obs);
    m.log_space = y.log_space();
    m.converged = converged;
    m.iterations = iterations;
    return m;
}

namespace {

/// Kalman pass over the regression-adjusted history of a fitted model.
struct FilteredHistory {
    Design design;
    KalmanOutput kalman;
    ArmaPolynomials poly;
};

FilteredHistory filter_history(const FittedSarimax &m, std::span<const double> y,
                               const std::vector<std::vector<double>> &exog) {
    if (exog.size() != m.exog_betas.size()) {
        throw_data(kModule, "MissingFutureExog", "model was fitted with " + std::to_string(m.exog_betas.size()) +
                                                     " regressors, got " + std::to_string(exog.size()));
    }
    FilteredHistory fh;
    fh.design = build_design(y, exog, m.order);
    if (fh.design.n() < 1) throw_data(kModule, "SeriesTooShort", "no observations left after differencing");
    Eigen::MatrixXd u = fh.design.data.col(0);
    for (int j = 0; j < fh.design.n_exog; ++j) {
        u.col(0) -= m.exog_betas[static_cast<std::size_t>(j)] * fh.design.data.col(1 + j);
    }
    if (fh.design.intercept) u.col(0).array() -= m.intercept;
    fh.poly = expand_seasonal(m.ar_coeffs, m.ma_coeffs, m.seasonal_ar_coeffs, m.seasonal_ma_coeffs, m.order.s);
    fh.kalman = kalman_filter(fh.poly, u, true);
    return fh;
}

/// Coefficients c_j of (1-B)^d (1-B^s)^D = 1 - sum_j c_j B^j.
std::vector<double> integration_coeffs(const SarimaOrder &o) {
    std::vector<double> poly{1.0};
    auto mul = [&](std::size_t lag) {
        std::vector<double> out(poly.size() + lag, 0.0);
        for (std::size_t i = 0; i < poly.size(); ++i) {
            out[i] += poly[i];
            out[i + lag] -= poly[i];
        }
        poly = std::move(out);
    };
    for (int k = 0; k < o.d; ++k) mul(1);
    for (int k = 0; k < o.D; ++k) mul(static_cast<std::size_t>(o.s));
    std::vector<double> c(poly.size() - 1);
    for (std::size_t j = 1; j < poly.size(); ++j) c[j - 1] = -poly[j];
    return c;
}

}  // namespace

ForecastDistribution forecast(const FittedSarimax &m, const WeeklySeries &y, std::span<const FlagSeries> exog,
                              std::span<const FlagSeries> exog_future, int horizon) {
    if (horizon < 1) throw_usage(kModule, "BadParameter", "horizon must be >= 1");
    series::require_aligned(y, exog, kModule);
    if (exog_future.size() != m.exog_betas.size()) {
        throw_data(kModule, "MissingFutureExog", "need future values for " + std::to_string(m.exog_betas.size()) +
                                                     " regressors, got " + std::to_string(exog_future.size()));
    }
    const auto next_week = y.week_at(y.size());
    for (const auto &f : exog_future) {
        if (static_cast<int>(f.size()) < horizon) {
            throw_data(kModule, "MissingFutureExog", "regressor '" + f.name() + "' covers only " +
                                                         std::to_string(f.size()) + " of " +
                                                         std::to_string(horizon) + " future weeks");
        }
        if (f.start_week() != next_week) {
            throw_data(kModule, "MisalignedExog", "future regressor '" + f.name() + "' must start on " +
                                                      series::format_date(next_week));
        }
    }

    const auto hist_cols = exog_columns(exog);
    const FilteredHistory fh = filter_history(m, y.view(), hist_cols);
    const auto &poly = fh.poly;
    const auto h_count = static_cast<std::size_t>(horizon);

    // Regression effect on the differenced scale over the forecast weeks.
    std::vector<double> reg_effect(h_count, m.order.has_intercept() ? m.intercept : 0.0);
    for (std::size_t j = 0; j < exog_future.size(); ++j) {
        std::vector<double> full = hist_cols[j];
        for (std::size_t h = 0; h < h_count; ++h) full.push_back(exog_future[j][h]);
        const auto diffed = difference(full, m.order.d, m.order.D, m.order.s);
        const std::size_t offset = diffed.size() - h_count;
        for (std::size_t h = 0; h < h_count; ++h) reg_effect[h] += m.exog_betas[j] * diffed[offset + h];
    }

    const Eigen::VectorXd rv = selection_vector(poly);
    const Eigen::MatrixXd rr = rv * rv.transpose();
    Eigen::VectorXd a = fh.kalman.filtered_state.col(0);
    Eigen::MatrixXd c = fh.kalman.filtered_cov;

    std::vector<double> w_mean(h_count);
    std::vector<Eigen::MatrixXd> covs;
    covs.reserve(h_count);
    for (std::size_t h = 0; h < h_count; ++h) {
        a = apply_transition(poly, a);
        c = apply_transition(poly, apply_transition(poly, c).transpose()).transpose() + rr;
        w_mean[h] = a(0) + reg_effect[h];
        covs.push_back(c);
    }
    // Covariance of differenced-scale forecast errors: Cov(w_{n+k}, w_{n+h}) = e1' T^{h-k} C_k e1 for h >= k.
    Eigen::MatrixXd sigma_w(horizon, horizon);
    for (std::size_t k = 0; k < h_count; ++k) {
        Eigen::MatrixXd x = covs[k].col(0);
        sigma_w(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = x(0, 0);
        for (std::size_t h = k + 1; h < h_count; ++h) {
            x = apply_transition(poly, x);
            sigma_w(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(h)) = x(0, 0);
            sigma_w(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(k)) = x(0, 0);
        }
    }

    // Re-integrate: y_t = w_t + sum_j c_j y_{t-j}; errors integrate through xi = 1 / delta(B).
    const auto c_int = integration_coeffs(m.order);
    std::vector<double> levels(y.values());
    std::vector<double> xi(h_count, 0.0);
    xi[0] = 1.0;
    for (std::size_t i = 1; i < h_count; ++i) {
        for (std::size_t j = 1; j <= c_int.size() && j <= i; ++j) xi[i] += c_int[j - 1] * xi[i - j];
    }

    ForecastDistribution out;
    out.horizon = horizon;
    out.log_space = m.log_space;
    out.means.resize(h_count);
    out.variances.resize(h_count);
    for (std::size_t h = 0; h < h_count; ++h) {
        double mean = w_mean[h];
        const std::size_t t = levels.size();
        for (std::size_t j = 1; j <= c_int.size(); ++j) mean += c_int[j - 1] * levels[t - j];
        levels.push_back(mean);
        out.means[h] = mean;

        double var = 0.0;
        for (std::size_t k = 0; k <= h; ++k) {
            for (std::size_t l = 0; l <= h; ++l) {
                var += xi[h - k] * xi[h - l] * sigma_w(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
            }
        }
        out.variances[h] = std::max(0.0, var * m.sigma2);
    }
    return out;
}

std::vector<double> fitted_values(const FittedSarimax &m, const WeeklySeries &y, std::span<const FlagSeries> exog) {
    series::require_aligned(y, exog, kModule);
    const FilteredHistory fh = filter_history(m, y.view(), exog_columns(exog));
    std::vector<double> out(y.size(), std::numeric_limits<double>::quiet_NaN());
    const auto loss = static_cast<std::size_t>(m.order.differencing_loss());
    for (Eigen::Index t = 0; t < fh.design.n(); ++t) {
        const std::size_t idx = loss + static_cast<std::size_t>(t);
        out[idx] = y[idx] - fh.kalman.innovations(t, 0);
    }
    return out;
}

double normal_quantile(double tau) { return boost::math::quantile(boost::math::normal(), tau); }

double quantile(const ForecastDistribution &f, int h, double tau) {
    if (h < 1 || h > f.horizon) {
        throw_usage(kModule, "HorizonOutOfRange", "h=" + std::to_string(h) + " outside 1.." + std::to_string(f.horizon));
    }
    if (!(tau > 0.0 && tau < 1.0)) throw_usage(kModule, "TauOutOfRange", "tau must lie in (0,1)");
    const auto i = static_cast<std::size_t>(h - 1);
    const double sd = std::sqrt(f.variances[i]);
    const double q = tau == 0.5 ? f.means[i] : f.means[i] + normal_quantile(tau) * sd;
    return f.log_space ? std::exp(q) : q;
}

}  // namespace crisiscast::sarimax
