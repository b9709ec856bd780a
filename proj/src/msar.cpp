#include "crisiscast/msar.hpp"

#include "crisiscast/error.hpp"
#include "crisiscast/optim.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <random>

namespace crisiscast::msar {

namespace {

constexpr const char *kModule = "msar";
constexpr double kProbFloor = 1e-8;

struct Em {
    std::array<RegimeParams, 2> regimes;
    TransitionMatrix trans;
};

double log_density(double y, double mean, double sigma2) {
    const double e = y - mean;
    return -0.5 * (std::log(2.0 * std::numbers::pi * sigma2) + e * e / sigma2);
}

double regime_mean(std::span<const double> g, std::size_t t, const RegimeParams &p) {
    double m = p.intercept;
    for (std::size_t j = 0; j < p.ar.size(); ++j) m += p.ar[j] * g[t - 1 - j];
    return m;
}

TransitionMatrix from_stay(double p00, double p11) { return {p00, 1.0 - p00, 1.0 - p11, p11}; }

/// Expected complete-data log-likelihood of the transition block, including the initial distribution.
double transition_q(const TransitionMatrix &tr, const std::array<std::array<double, 2>, 2> &n, const Probs &first) {
    double q = 0.0;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            if (n[i][j] > 0.0) q += n[i][j] * std::log(tr.p(i, j));
        }
    const auto pi = tr.stationary();
    for (int i = 0; i < 2; ++i) {
        if (first[i] > 0.0) q += first[i] * std::log(pi[i]);
    }
    return q;
}

double logit(double p) { return std::log(p / (1.0 - p)); }
double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Weighted least squares for one regime.
RegimeParams weighted_fit(std::span<const double> g, int r, std::span<const double> w) {
    const auto k = static_cast<Eigen::Index>(r + 1);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd x(k);
    const auto ru = static_cast<std::size_t>(r);
    for (std::size_t t = ru; t < g.size(); ++t) {
        const double wt = w[t - ru];
        if (wt <= 0.0) continue;
        x(0) = 1.0;
        for (std::size_t j = 0; j < ru; ++j) x(static_cast<Eigen::Index>(j + 1)) = g[t - 1 - j];
        a.noalias() += wt * x * x.transpose();
        b.noalias() += wt * g[t] * x;
    }
    const Eigen::VectorXd beta = a.ldlt().solve(b);
    RegimeParams p;
    p.intercept = beta(0);
    for (std::size_t j = 0; j < ru; ++j) p.ar.push_back(beta(static_cast<Eigen::Index>(j + 1)));
    double ss = 0.0, mass = 0.0;
    for (std::size_t t = ru; t < g.size(); ++t) {
        const double e = g[t] - regime_mean(g, t, p);
        ss += w[t - ru] * e * e;
        mass += w[t - ru];
    }
    p.sigma2 = ss / mass;
    return p;
}

struct Run {
    Em params;
    FilterResult filter;
    std::vector<Probs> smoothed;
    std::vector<double> trace;
    int iterations = 0;
    bool converged = false;
};

void check_regimes(const std::array<RegimeParams, 2> &regimes, double scale) {
    for (const auto &p : regimes) {
        if (!std::isfinite(p.intercept) || !std::isfinite(p.sigma2) || !(p.sigma2 > 1e-12 * scale)) {
            throw_numerical(kModule, "DegenerateRegime", "a regime collapsed to zero variance");
        }
        for (double c : p.ar) {
            if (!std::isfinite(c)) throw_numerical(kModule, "DegenerateRegime", "regime regression is singular");
        }
    }
}

Run run_em(std::span<const double> g, int r, Em em, const MsarOptions &opts, double scale) {
    Run run;
    const std::size_t K = g.size() - static_cast<std::size_t>(r);
    double prev = 0.0;
    for (int it = 0;; ++it) {
        run.filter = hamilton_filter(g, em.regimes, em.trans);
        run.smoothed = kim_smoother(run.filter, em.trans);
        const double ll = run.filter.loglik;
        if (!std::isfinite(ll)) throw_numerical(kModule, "NonConvergence", "log-likelihood is not finite");
        run.trace.push_back(ll);
        run.iterations = it;
        if (it > 0 && std::abs(ll - prev) <= opts.rel_tol * std::abs(prev)) {
            run.converged = true;
            break;
        }
        if (it == opts.max_iterations) break;
        prev = ll;

        // M-step, regression block
        std::array<std::vector<double>, 2> w;
        for (int j = 0; j < 2; ++j) {
            w[static_cast<std::size_t>(j)].resize(K);
            double mass = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                w[static_cast<std::size_t>(j)][k] = run.smoothed[k][static_cast<std::size_t>(j)];
                mass += w[static_cast<std::size_t>(j)][k];
            }
            if (mass < 1e-3 * static_cast<double>(K)) {
                throw_numerical(kModule, "DegenerateRegime",
                                "regime " + std::to_string(j) + " carries less than 0.1% of the sample");
            }
        }
        for (int j = 0; j < 2; ++j) em.regimes[static_cast<std::size_t>(j)] = weighted_fit(g, r, w[static_cast<std::size_t>(j)]);
        check_regimes(em.regimes, scale);

        // M-step, transition block. The initial distribution depends on the matrix, so the closed form
        // is only a candidate; keep whichever of old / closed form / numerical optimum has the largest Q.
        std::array<std::array<double, 2>, 2> n{};
        for (std::size_t k = 0; k + 1 < K; ++k) {
            const auto &f = run.filter.filtered[k];
            const auto &pr = run.filter.predicted[k + 1];
            const auto &s = run.smoothed[k + 1];
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) {
                    const auto ju = static_cast<std::size_t>(j);
                    if (pr[ju] > 0.0) n[i][j] += f[static_cast<std::size_t>(i)] * em.trans.p(i, j) * s[ju] / pr[ju];
                }
        }
        const Probs first = run.smoothed.front();
        auto q_of = [&](double a, double b) { return transition_q(from_stay(a, b), n, first); };
        auto clampp = [](double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); };
        double best_a = em.trans.p00, best_b = em.trans.p11;
        double best_q = q_of(best_a, best_b);
        const double ca = clampp(n[0][0] / std::max(n[0][0] + n[0][1], 1e-300));
        const double cb = clampp(n[1][1] / std::max(n[1][0] + n[1][1], 1e-300));
        if (const double q = q_of(ca, cb); q > best_q) {
            best_q = q;
            best_a = ca;
            best_b = cb;
        }
        const auto nm = optim::nelder_mead(
            [&](const std::vector<double> &x) { return -q_of(clampp(logistic(x[0])), clampp(logistic(x[1]))); },
            {logit(ca), logit(cb)}, {0.5, 1e-10, 400});
        if (-nm.value > best_q) {
            best_a = clampp(logistic(nm.x[0]));
            best_b = clampp(logistic(nm.x[1]));
        }
        em.trans = from_stay(best_a, best_b);
    }
    run.params = em;
    return run;
}

/// Trailing variance used to split the sample into tentative calm / turbulent regimes.
std::vector<double> rolling_variance(std::span<const double> g, int r, int window) {
    const std::size_t K = g.size() - static_cast<std::size_t>(r);
    std::vector<double> v(K);
    const auto w = static_cast<std::size_t>(std::max(window, 2));
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t t = k + static_cast<std::size_t>(r);
        const std::size_t hi = std::max(t + 1, std::min(w, g.size()));
        const std::size_t lo = hi >= w ? hi - w : 0;
        double m = 0.0;
        for (std::size_t i = lo; i < hi; ++i) m += g[i];
        m /= static_cast<double>(hi - lo);
        double ss = 0.0;
        for (std::size_t i = lo; i < hi; ++i) ss += (g[i] - m) * (g[i] - m);
        v[k] = ss / static_cast<double>(hi - lo - 1);
    }
    return v;
}

}  // namespace

double TransitionMatrix::p(int from, int to) const {
    if (from == 0) return to == 0 ? p00 : p01;
    return to == 0 ? p10 : p11;
}

std::array<double, 2> TransitionMatrix::stationary() const {
    const double d = p01 + p10;
    if (!(d > 0.0)) return {0.5, 0.5};
    return {p10 / d, p01 / d};
}

series::WeeklySeries to_growth(const series::WeeklySeries &y, GrowthMode mode) {
    const std::size_t lag = mode == GrowthMode::Weekly ? 1 : 52;
    if (y.size() < lag + 1) {
        throw_data(kModule, "SeriesTooShort",
                   std::string(mode == GrowthMode::Weekly ? "weekly" : "yoy") + " growth needs at least " +
                       std::to_string(lag + 1) + " weeks, have " + std::to_string(y.size()));
    }
    std::vector<double> g(y.size() - lag);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (y[i] == 0.0) {
            throw_data(kModule, "DivisionByZeroValue", "zero value in week " + series::format_date(y.week_at(i)));
        }
        g[i] = y[i + lag] / y[i] - 1.0;
    }
    return {y.name() + (mode == GrowthMode::Weekly ? "_growth" : "_yoy"), y.week_at(lag), std::move(g)};
}

FilterResult hamilton_filter(std::span<const double> g, const std::array<RegimeParams, 2> &regimes,
                             const TransitionMatrix &trans, std::optional<Probs> initial) {
    const std::size_t r = regimes[0].ar.size();
    if (regimes[1].ar.size() != r) throw_usage(kModule, "BadParameter", "regimes need the same AR order");
    FilterResult out;
    if (g.size() <= r) return out;
    const std::size_t K = g.size() - r;
    out.filtered.resize(K);
    out.predicted.resize(K);
    Probs pred = initial.value_or(trans.stationary());
    for (std::size_t k = 0; k < K; ++k) {
        const std::size_t t = k + r;
        if (k > 0) {
            const auto &f = out.filtered[k - 1];
            pred = {f[0] * trans.p00 + f[1] * trans.p10, f[0] * trans.p01 + f[1] * trans.p11};
        }
        out.predicted[k] = pred;
        std::array<double, 2> ld{};
        for (std::size_t j = 0; j < 2; ++j) ld[j] = log_density(g[t], regime_mean(g, t, regimes[j]), regimes[j].sigma2);
        const double m = std::max(pred[0] > 0.0 ? ld[0] : ld[1], pred[1] > 0.0 ? ld[1] : ld[0]);
        const Probs joint{pred[0] * std::exp(ld[0] - m), pred[1] * std::exp(ld[1] - m)};
        const double s = joint[0] + joint[1];
        if (!(s > 0.0)) {
            out.filtered[k] = pred;
            out.loglik = -std::numeric_limits<double>::infinity();
            continue;
        }
        out.filtered[k] = {joint[0] / s, joint[1] / s};
        out.loglik += m + std::log(s);
    }
    return out;
}

std::vector<Probs> kim_smoother(const FilterResult &filter, const TransitionMatrix &trans) {
    const std::size_t K = filter.filtered.size();
    std::vector<Probs> sm(K);
    if (K == 0) return sm;
    sm[K - 1] = filter.filtered[K - 1];
    for (std::size_t k = K - 1; k-- > 0;) {
        const auto &f = filter.filtered[k];
        const auto &pr = filter.predicted[k + 1];
        Probs s{};
        for (int i = 0; i < 2; ++i) {
            double acc = 0.0;
            for (int j = 0; j < 2; ++j) {
                const auto ju = static_cast<std::size_t>(j);
                if (pr[ju] > 0.0) acc += trans.p(i, j) * sm[k + 1][ju] / pr[ju];
            }
            s[static_cast<std::size_t>(i)] = f[static_cast<std::size_t>(i)] * acc;
        }
        const double tot = s[0] + s[1];
        sm[k] = tot > 0.0 ? Probs{s[0] / tot, s[1] / tot} : f;
    }
    return sm;
}

RegimeFit fit_msar(const series::WeeklySeries &g, int ar_order, const MsarOptions &opts) {
    if (ar_order < 0 || ar_order > 4) throw_usage(kModule, "BadParameter", "ar_order must lie in 0..4");
    if (opts.restarts < 1 || opts.max_iterations < 1) throw_usage(kModule, "BadParameter", "restarts and iterations must be positive");
    const auto need = static_cast<std::size_t>(10 * (ar_order + 3));
    if (g.size() < need) {
        throw_data(kModule, "SeriesTooShort",
                   "MSAR(" + std::to_string(ar_order) + ") needs " + std::to_string(need) + " weeks, have " +
                       std::to_string(g.size()));
    }
    const auto y = g.view();
    const std::size_t K = y.size() - static_cast<std::size_t>(ar_order);

    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double scale = 0.0;
    for (double v : y) scale += (v - mean) * (v - mean);
    scale /= static_cast<double>(y.size());
    if (!(scale > 0.0)) throw_numerical(kModule, "DegenerateRegime", "series is constant");

    // tentative split at the median rolling variance
    const auto rv = rolling_variance(y, ar_order, opts.variance_window);
    auto sorted = rv;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(K / 2), sorted.end());
    const double median = sorted[K / 2];

    std::optional<Run> best;
    std::string last_error = "NonConvergence";
    for (int restart = 0; restart < opts.restarts; ++restart) {
        std::seed_seq seq{static_cast<std::uint32_t>(opts.seed), static_cast<std::uint32_t>(opts.seed >> 32),
                          static_cast<std::uint32_t>(restart)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> jitter(0.0, 0.2);
        std::uniform_real_distribution<double> stay(0.8, 0.98);

        std::vector<double> w1(K), w0(K);
        for (std::size_t k = 0; k < K; ++k) {
            double p = rv[k] > median ? 0.9 : 0.1;
            if (restart > 0) p = std::clamp(p + jitter(rng), 0.02, 0.98);
            w1[k] = p;
            w0[k] = 1.0 - p;
        }
        try {
            Em em;
            em.regimes = {weighted_fit(y, ar_order, w0), weighted_fit(y, ar_order, w1)};
            check_regimes(em.regimes, scale);
            em.trans = restart == 0 ? from_stay(0.9, 0.9) : from_stay(stay(rng), stay(rng));
            Run run = run_em(y, ar_order, em, opts, scale);
            if (!best || run.filter.loglik > best->filter.loglik) best = std::move(run);
        } catch (const Error &e) {
            last_error = e.code();
        }
    }
    if (!best) {
        if (last_error == "DegenerateRegime") {
            throw_numerical(kModule, "DegenerateRegime", "every EM restart collapsed a regime");
        }
        throw_numerical(kModule, "NonConvergence", "no EM restart produced a finite likelihood");
    }

    RegimeFit fit;
    fit.ar_order = ar_order;
    fit.regimes = best->params.regimes;
    fit.trans = best->params.trans;
    fit.filtered = std::move(best->filter.filtered);
    fit.smoothed = std::move(best->smoothed);
    fit.loglik = best->filter.loglik;
    fit.loglik_trace = std::move(best->trace);
    fit.iterations = best->iterations;
    fit.converged = best->converged;
    fit.start = g.week_at(static_cast<std::size_t>(ar_order));

    if (fit.regimes[0].sigma2 > fit.regimes[1].sigma2) {
        std::swap(fit.regimes[0], fit.regimes[1]);
        fit.trans = {fit.trans.p11, fit.trans.p10, fit.trans.p01, fit.trans.p00};
        for (auto &p : fit.filtered) std::swap(p[0], p[1]);
        for (auto &p : fit.smoothed) std::swap(p[0], p[1]);
    }
    return fit;
}

std::vector<RegimeRun> regime_report(const RegimeFit &fit, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw_usage(kModule, "BadParameter", "threshold must lie in (0,1)");
    std::vector<RegimeRun> runs;
    const std::size_t K = fit.smoothed.size();
    for (std::size_t k = 0; k < K;) {
        if (!(fit.smoothed[k][1] > threshold)) {
            ++k;
            continue;
        }
        std::size_t e = k;
        while (e + 1 < K && fit.smoothed[e + 1][1] > threshold) ++e;
        runs.push_back({k, e, fit.start + std::chrono::days{7 * static_cast<long>(k)},
                        fit.start + std::chrono::days{7 * static_cast<long>(e)}, "COVID"});
        k = e + 1;
    }
    return runs;
}

void write_regimes_csv(std::ostream &os, const RegimeFit &fit) {
    os << "week_start,p_normal,p_covid,label\n" << std::setprecision(17);
    for (std::size_t k = 0; k < fit.smoothed.size(); ++k) {
        const auto &p = fit.smoothed[k];
        os << series::format_date(fit.start + std::chrono::days{7 * static_cast<long>(k)}) << ',' << p[0] << ','
           << p[1] << ',' << (p[1] > 0.5 ? "COVID" : "Normal") << '\n';
    }
}

}  // namespace crisiscast::msar
