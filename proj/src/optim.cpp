#include "crisiscast/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace crisiscast::optim {

namespace {

double safe_eval(const std::function<double(const std::vector<double> &)> &f, const std::vector<double> &x,
                 int &evals) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double> &)> &f,
                             std::vector<double> x0, const NelderMeadOptions &opts) {
    const std::size_t n = x0.size();
    NelderMeadResult res;
    if (n == 0) {
        res.value = safe_eval(f, x0, res.evaluations);
        res.x = std::move(x0);
        res.converged = true;
        return res;
    }

    constexpr double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;

    std::vector<std::vector<double>> simplex(n + 1, x0);
    std::vector<double> values(n + 1);
    for (std::size_t i = 0; i < n; ++i) {
        simplex[i + 1][i] += opts.initial_step;
    }
    for (std::size_t i = 0; i <= n; ++i) {
        values[i] = safe_eval(f, simplex[i], res.evaluations);
    }

    std::vector<std::size_t> order(n + 1);
    std::vector<double> centroid(n), trial(n), trial2(n);

    auto point = [&](double t, const std::vector<double> &worst, std::vector<double> &out) {
        for (std::size_t j = 0; j < n; ++j) {
            out[j] = centroid[j] + t * (worst[j] - centroid[j]);
        }
    };

    for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
        std::iota(order.begin(), order.end(), 0);
        // Stable sort keeps ties in index order so runs are reproducible.
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
        const auto &best = simplex[order.front()];

        double diameter = 0.0;
        for (std::size_t i = 1; i <= n; ++i) {
            const auto &v = simplex[order[i]];
            double d2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                d2 += (v[j] - best[j]) * (v[j] - best[j]);
            }
            diameter = std::max(diameter, std::sqrt(d2));
        }
        if (diameter < opts.diameter_tol && std::isfinite(values[order.front()])) {
            res.converged = true;
            break;
        }

        const std::size_t worst = order.back();
        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto &v = simplex[order[i]];
            for (std::size_t j = 0; j < n; ++j) {
                centroid[j] += v[j] / static_cast<double>(n);
            }
        }

        point(-alpha, simplex[worst], trial);
        const double f_reflect = safe_eval(f, trial, res.evaluations);
        const double f_best = values[order.front()];
        const double f_second_worst = values[order[n - 1]];

        if (f_reflect < f_best) {
            point(-gamma, simplex[worst], trial2);
            const double f_expand = safe_eval(f, trial2, res.evaluations);
            if (f_expand < f_reflect) {
                simplex[worst] = trial2;
                values[worst] = f_expand;
            } else {
                simplex[worst] = trial;
                values[worst] = f_reflect;
            }
            continue;
        }
        if (f_reflect < f_second_worst) {
            simplex[worst] = trial;
            values[worst] = f_reflect;
            continue;
        }
        if (f_reflect < values[worst]) {
            point(-rho, simplex[worst], trial2);  // outside contraction
            const double f_c = safe_eval(f, trial2, res.evaluations);
            if (f_c <= f_reflect) {
                simplex[worst] = trial2;
                values[worst] = f_c;
                continue;
            }
        } else {
            point(rho, simplex[worst], trial2);  // inside contraction
            const double f_c = safe_eval(f, trial2, res.evaluations);
            if (f_c < values[worst]) {
                simplex[worst] = trial2;
                values[worst] = f_c;
                continue;
            }
        }
        // shrink toward best
        const auto best_copy = simplex[order.front()];
        for (std::size_t i = 1; i <= n; ++i) {
            auto &v = simplex[order[i]];
            for (std::size_t j = 0; j < n; ++j) {
                v[j] = best_copy[j] + sigma * (v[j] - best_copy[j]);
            }
            values[order[i]] = safe_eval(f, v, res.evaluations);
        }
    }

    const auto best_it = std::min_element(values.begin(), values.end());
    const auto best_idx = static_cast<std::size_t>(best_it - values.begin());
    res.x = simplex[best_idx];
    res.value = *best_it;
    return res;
}

}  // namespace crisiscast::optim
