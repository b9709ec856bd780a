#pragma once

#include "crisiscast/series.hpp"

#include <iosfwd>
#include <span>
#include <vector>

// False-peak detection on forecast streams: a value further than k standard deviations from
// the trailing n-week average is flagged and replaced by the mean of itself and the previous
// (adjusted) value. Later windows see the adjusted values.

namespace crisiscast::peaks {

enum class SdMode {
    WindowValues,    ///< SD of the n values in the trailing window (default)
    RollingAverage,  ///< SD of the last n trailing n-week averages
};

struct PeakConfig {
    int window_n = 8;
    double k = 3.0;
    SdMode sd_mode = SdMode::WindowValues;

    /// Throws BadParameter unless window_n >= 2 and k > 0.
    void validate() const;
};

struct WindowStats {
    double avg = 0.0;
    double sd = 0.0;
};

struct PeakScanResult {
    std::vector<bool> flags;
    series::WeeklySeries adjusted;
    std::vector<WindowStats> stats;  ///< statistics used for the decision at each index; NaN where none was made
};

/// Mean and sample SD (n-1 divisor) of values[at - window_n, at).
WindowStats moving_stats(std::span<const double> values, int window_n, std::size_t at);

PeakScanResult scan_peaks(const series::WeeklySeries &f, const PeakConfig &cfg = {});

/// Columns: week_start,raw,adjusted,flagged,moving_avg,sd
void write_peaks_csv(std::ostream &os, const series::WeeklySeries &raw, const PeakScanResult &scan);

}  // namespace crisiscast::peaks
