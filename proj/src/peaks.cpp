#include "crisiscast/peaks.hpp"

#include "crisiscast/error.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace crisiscast::peaks {

namespace {

constexpr const char *kModule = "peaks";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

WindowStats mean_sd(std::span<const double> w) {
    double sum = 0.0;
    for (double v : w) sum += v;
    const double avg = sum / static_cast<double>(w.size());
    double ss = 0.0;
    for (double v : w) ss += (v - avg) * (v - avg);
    return {avg, std::sqrt(ss / static_cast<double>(w.size() - 1))};
}

}  // namespace

void PeakConfig::validate() const {
    if (window_n < 2) throw_usage(kModule, "BadParameter", "window_n must be at least 2");
    if (!(k > 0.0) || !std::isfinite(k)) throw_usage(kModule, "BadParameter", "k must be positive");
}

WindowStats moving_stats(std::span<const double> values, int window_n, std::size_t at) {
    if (window_n < 2) throw_usage(kModule, "BadParameter", "window_n must be at least 2");
    const auto n = static_cast<std::size_t>(window_n);
    if (at < n || at > values.size()) {
        throw_usage(kModule, "IndexOutOfRange",
                    "index " + std::to_string(at) + " needs a full window of " + std::to_string(n) + " prior values in a "
                        "series of length " + std::to_string(values.size()));
    }
    return mean_sd(values.subspan(at - n, n));
}

PeakScanResult scan_peaks(const series::WeeklySeries &f, const PeakConfig &cfg) {
    cfg.validate();
    const std::size_t len = f.size();
    const auto n = static_cast<std::size_t>(cfg.window_n);
    if (len <= n) {
        throw_data(kModule, "SeriesTooShort",
                   "series of length " + std::to_string(len) + " needs more than " + std::to_string(n) + " values");
    }
    std::vector<double> adj(f.values().begin(), f.values().end());
    std::vector<bool> flags(len, false);
    std::vector<WindowStats> stats(len, WindowStats{kNaN, kNaN});
    std::vector<double> rolling(len, kNaN);  // rolling[i] = average of adj[i-n, i)

    for (std::size_t i = n; i < len; ++i) {
        const WindowStats w = moving_stats(adj, cfg.window_n, i);
        rolling[i] = w.avg;
        WindowStats decision = w;
        if (cfg.sd_mode == SdMode::RollingAverage) {
            const std::size_t first = i + 1 >= 2 * n ? i + 1 - n : n;
            if (i - first + 1 < 2) continue;  // SD needs two averages
            decision.sd = mean_sd(std::span<const double>(rolling).subspan(first, i - first + 1)).sd;
        }
        stats[i] = decision;
        if (std::abs(f[i] - decision.avg) > cfg.k * decision.sd) {
            flags[i] = true;
            adj[i] = (adj[i - 1] + f[i]) / 2.0;
        }
    }
    return {std::move(flags), series::WeeklySeries(f.name(), f.start_week(), std::move(adj), f.log_space()),
            std::move(stats)};
}

void write_peaks_csv(std::ostream &os, const series::WeeklySeries &raw, const PeakScanResult &scan) {
    os << "week_start,raw,adjusted,flagged,moving_avg,sd\n" << std::setprecision(17);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        os << series::format_date(raw.week_at(i)) << ',' << raw[i] << ',' << scan.adjusted[i] << ','
           << (scan.flags[i] ? 1 : 0) << ',';
        if (!std::isnan(scan.stats[i].avg)) os << scan.stats[i].avg;
        os << ',';
        if (!std::isnan(scan.stats[i].sd)) os << scan.stats[i].sd;
        os << '\n';
    }
}

}  // namespace crisiscast::peaks
