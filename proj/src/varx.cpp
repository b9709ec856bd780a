#include "crisiscast/varx.hpp"

#include "crisiscast/error.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <iomanip>
#include <ostream>

namespace crisiscast::varx {

namespace {

constexpr const char *kModule = "varx";

void check_future_exog(const VarxFit &fit, std::span<const series::FlagSeries> exog, series::Date first_week,
                       int horizon) {
    if (exog.size() != fit.exog_names.size()) {
        throw_data(kModule, "MissingFutureExog",
                   "model has " + std::to_string(fit.exog_names.size()) + " flags, got " +
                       std::to_string(exog.size()) + " future flag series");
    }
    for (const auto &f : exog) {
        if (f.size() < static_cast<std::size_t>(horizon) || f.start_week() != first_week) {
            throw_data(kModule, "MissingFutureExog",
                       "future flag '" + f.name() + "' must start " + series::format_date(first_week) +
                           " and cover " + std::to_string(horizon) + " weeks");
        }
    }
}

}  // namespace

void MultiSeries::validate() const {
    if (components.size() < 2) throw_usage(kModule, "BadParameter", "a VARX needs at least two component series");
    for (const auto &c : components) {
        if (c.size() != components.front().size() || c.start_week() != components.front().start_week()) {
            throw_data(kModule, "MisalignedSeries",
                       "'" + c.name() + "' does not share the span of '" + components.front().name() + "'");
        }
    }
}

MultiSeries prepare(const MultiSeries &levels, int season) {
    levels.validate();
    MultiSeries out;
    for (const auto &c : levels.components) {
        out.components.push_back(series::seasonal_difference(series::log_transform(c), season));
    }
    return out;
}

double VarxFit::spectral_radius() const {
    const auto m = static_cast<Eigen::Index>(dimension());
    const auto p = static_cast<Eigen::Index>(lag_order);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(m * p, m * p);
    for (Eigen::Index j = 0; j < p; ++j) c.block(0, j * m, m, m) = A[static_cast<std::size_t>(j)];
    if (p > 1) c.block(m, 0, m * (p - 1), m * (p - 1)).setIdentity();
    return c.eigenvalues().cwiseAbs().maxCoeff();
}

VarxFit fit_varx(const MultiSeries &ms, std::span<const series::FlagSeries> exog, int lag_order) {
    ms.validate();
    if (lag_order < 1 || lag_order > 4) throw_usage(kModule, "BadParameter", "lag_order must lie in 1..4");
    for (const auto &c : ms.components) series::require_aligned(c, exog, kModule);

    const std::size_t m = ms.dimension(), p = static_cast<std::size_t>(lag_order), k = exog.size();
    const std::size_t n = ms.length();
    if (n < m * p + k + 10) {
        throw_data(kModule, "SeriesTooShort",
                   "need at least " + std::to_string(m * p + k + 10) + " modelled weeks, have " + std::to_string(n));
    }
    for (const auto &c : ms.components)
        for (double v : c.values())
            if (!std::isfinite(v)) throw_data(kModule, "NonFiniteValue", "'" + c.name() + "' has a non-finite value");

    const std::size_t n_eff = n - p;
    const std::size_t cols = 1 + m * p + k;
    Eigen::MatrixXd X(n_eff, cols);
    Eigen::MatrixXd Y(n_eff, m);
    for (std::size_t r = 0; r < n_eff; ++r) {
        const std::size_t t = r + p;
        const auto ri = static_cast<Eigen::Index>(r);
        X(ri, 0) = 1.0;
        for (std::size_t j = 0; j < p; ++j)
            for (std::size_t c = 0; c < m; ++c) X(ri, static_cast<Eigen::Index>(1 + j * m + c)) = ms.components[c][t - 1 - j];
        for (std::size_t e = 0; e < k; ++e) X(ri, static_cast<Eigen::Index>(1 + m * p + e)) = exog[e][t];
        for (std::size_t c = 0; c < m; ++c) Y(ri, static_cast<Eigen::Index>(c)) = ms.components[c][t];
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < static_cast<Eigen::Index>(cols)) {
        throw_data(kModule, "RankDeficientDesign",
                   "design has rank " + std::to_string(qr.rank()) + " < " + std::to_string(cols) + " columns");
    }
    const Eigen::MatrixXd coef = qr.solve(Y);  // cols x m, one column per equation

    VarxFit fit;
    fit.lag_order = lag_order;
    for (const auto &c : ms.components) fit.names.push_back(c.name());
    for (const auto &f : exog) fit.exog_names.push_back(f.name());
    const auto mi = static_cast<Eigen::Index>(m);
    fit.intercept = coef.row(0).transpose();
    for (std::size_t j = 0; j < p; ++j) {
        fit.A.push_back(coef.block(static_cast<Eigen::Index>(1 + j * m), 0, mi, mi).transpose());
    }
    fit.B = coef.block(static_cast<Eigen::Index>(1 + m * p), 0, static_cast<Eigen::Index>(k), mi).transpose();
    fit.residuals = Y - X * coef;
    fit.n_obs = n_eff;
    const double dof = static_cast<double>(n_eff) - static_cast<double>(cols);
    fit.sigma = (fit.residuals.transpose() * fit.residuals) / dof;
    return fit;
}

Eigen::MatrixXd forecast_modelled(const VarxFit &fit, const MultiSeries &history,
                                  std::span<const series::FlagSeries> exog_future, int horizon) {
    history.validate();
    if (horizon < 1) throw_usage(kModule, "BadParameter", "horizon must be >= 1");
    const std::size_t m = fit.dimension(), p = static_cast<std::size_t>(fit.lag_order);
    if (history.dimension() != m) throw_usage(kModule, "BadParameter", "history has a different number of series");
    if (history.length() < p) throw_data(kModule, "SeriesTooShort", "history shorter than the lag order");
    check_future_exog(fit, exog_future, history.components.front().end_week() + std::chrono::days{7}, horizon);

    const std::size_t n = history.length();
    // rows: past p values followed by the forecasts
    Eigen::MatrixXd path(static_cast<Eigen::Index>(p) + horizon, static_cast<Eigen::Index>(m));
    for (std::size_t j = 0; j < p; ++j)
        for (std::size_t c = 0; c < m; ++c)
            path(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) = history.components[c][n - p + j];
    Eigen::VectorXd x(static_cast<Eigen::Index>(fit.exog_names.size()));
    for (int h = 0; h < horizon; ++h) {
        const auto row = static_cast<Eigen::Index>(p) + h;
        Eigen::VectorXd next = fit.intercept;
        for (std::size_t j = 0; j < p; ++j) {
            next.noalias() += fit.A[j] * path.row(row - 1 - static_cast<Eigen::Index>(j)).transpose();
        }
        for (std::size_t e = 0; e < exog_future.size(); ++e) {
            x(static_cast<Eigen::Index>(e)) = exog_future[e][static_cast<std::size_t>(h)];
        }
        if (x.size() > 0) next.noalias() += fit.B * x;
        path.row(row) = next.transpose();
    }
    return path.bottomRows(horizon);
}

VarxForecast forecast_varx(const VarxFit &fit, const MultiSeries &levels,
                           std::span<const series::FlagSeries> exog_future, int horizon, int season) {
    const MultiSeries modelled = prepare(levels, season);
    VarxForecast out;
    out.modelled = forecast_modelled(fit, modelled, exog_future, horizon);
    out.nonstationary = !(fit.spectral_radius() < 1.0);
    const auto s = static_cast<std::size_t>(season);
    const series::Date first = levels.components.front().end_week() + std::chrono::days{7};
    for (std::size_t c = 0; c < levels.dimension(); ++c) {
        const auto logged = series::log_transform(levels.components[c]);
        const auto head = logged.view().last(s);
        std::vector<double> diffs(static_cast<std::size_t>(horizon));
        for (int h = 0; h < horizon; ++h) diffs[static_cast<std::size_t>(h)] = out.modelled(h, static_cast<Eigen::Index>(c));
        const auto rebuilt = series::undifference(head, diffs, season);
        std::vector<double> level(rebuilt.begin() + static_cast<long>(s), rebuilt.end());
        for (auto &v : level) v = std::exp(v);
        out.means.emplace_back(levels.components[c].name(), first, std::move(level));
    }
    return out;
}

void write_coefficients_csv(std::ostream &os, const VarxFit &fit) {
    os << "target,intercept";
    for (int j = 1; j <= fit.lag_order; ++j)
        for (const auto &n : fit.names) os << ',' << n << "_lag" << j;
    for (const auto &e : fit.exog_names) os << ',' << e;
    os << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < fit.dimension(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        os << fit.names[i] << ',' << fit.intercept(ii);
        for (const auto &a : fit.A)
            for (Eigen::Index c = 0; c < a.cols(); ++c) os << ',' << a(ii, c);
        for (Eigen::Index e = 0; e < fit.B.cols(); ++e) os << ',' << fit.B(ii, e);
        os << '\n';
    }
}

}  // namespace crisiscast::varx
