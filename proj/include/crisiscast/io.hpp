#pragma once

#include "crisiscast/sarimax.hpp"
#include "crisiscast/series.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

// Ingestion, synthetic data, model serialization and the yearly summary table.

namespace crisiscast::io {

using series::FlagSeries;
using series::WeeklySeries;

struct IngestOptions {
    std::vector<std::string> metric_columns;  ///< empty: every non-flag column
    std::vector<std::string> flag_columns;
    bool interpolate_gaps = false;            ///< linear fill of missing weeks; filled flags are 0
};

struct Dataset {
    std::vector<WeeklySeries> metrics;
    std::vector<FlagSeries> flags;

    [[nodiscard]] const WeeklySeries &metric(const std::string &name) const;
};

/// CSV with a `week_start` column of Mondays (YYYY-MM-DD). Errors name the offending line.
/// Throws ParseError, GapError, NonMondayDate, MissingColumn.
Dataset ingest_csv(std::istream &is, const IngestOptions &opts = {});
/// Throws IngestError when the file cannot be opened.
Dataset ingest_file(const std::filesystem::path &path, const IngestOptions &opts = {});

/// week_start then metric columns then flag columns, 17 significant digits.
void write_dataset_csv(std::ostream &os, const Dataset &d);

struct MetricProfile {
    std::string name;
    double base_level = 1.0;       ///< level of the first week
    double annual_growth = 0.05;   ///< multiplicative trend per year
    double covid_sensitivity = 1.0;
};

struct SyntheticParams {
    std::vector<MetricProfile> metrics{{"tpv", 1.0e6, 0.08, 1.0},
                                       {"buyers_new", 5.0e3, 0.05, 1.3},
                                       {"buyers_reengaged", 8.0e3, 0.03, 0.8},
                                       {"merchants", 1.2e3, 0.06, 0.5}};
    series::IsoWeek start{2015, 1};
    double seasonal_amplitude = 0.15;  ///< annual cosine profile, peak in late December
    double black_friday_multiplier = 2.0;
    double cyber_monday_multiplier = 1.6;
    double noise_sigma = 0.04;         ///< lognormal noise
    bool covid_shock = true;
    series::IsoWeek covid_start{2020, 12};
    int covid_weeks = 40;
    double covid_level_shift = 0.15;   ///< log-scale shift while the shock lasts
    double covid_spike = 0.45;         ///< initial extra log-scale jump, decays geometrically
    double covid_decay = 0.85;
};

/// trend * seasonal profile * BF/CM multiplier * COVID shock * lognormal noise, per ISO week.
/// Deterministic in (years, seed, params). Throws BadParameter.
Dataset generate_synthetic(int years, std::uint64_t seed, const SyntheticParams &params = {});

std::string model_to_json(const sarimax::FittedSarimax &m);
sarimax::FittedSarimax model_from_json(const std::string &text);

struct SummaryRow {
    std::string label;
    std::vector<double> values;  ///< one per year; NaN where undefined
};

struct SummaryTable {
    std::vector<int> years;          ///< complete ISO week-years
    std::vector<bool> forecast_year; ///< year contains forecast weeks
    std::vector<SummaryRow> levels;  ///< annual sums, then TTM
    std::vector<SummaryRow> yoy;     ///< percent change of each level row
    std::vector<SummaryRow> average; ///< annual means of weekly shares, percent
};

struct SummaryInputs {
    std::vector<WeeklySeries> metrics;         ///< history followed by forecasts, aligned
    std::vector<std::string> labels;           ///< row label per metric
    std::optional<std::size_t> ttm_metric;     ///< metric whose trailing-52-week sum is reported
    std::vector<std::size_t> share_group;      ///< metrics whose weekly shares of the group total are averaged
    std::optional<series::Date> forecast_start;
};

/// Throws IncompleteYear when no ISO year is fully covered.
SummaryTable emit_summary(const SummaryInputs &in);
/// Long format: block,row,year,value,forecast.
void write_summary_csv(std::ostream &os, const SummaryTable &t);
std::string summary_to_json(const SummaryTable &t);

}  // namespace crisiscast::io
