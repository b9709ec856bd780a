#pragma once

#include <chrono>
#include <compare>
#include <span>
#include <string>
#include <vector>

namespace crisiscast::series {

using Date = std::chrono::sys_days;

/// ISO-8601 week identifier, e.g. 2020-W12.
struct IsoWeek {
    int year = 0;
    int week = 0;

    auto operator<=>(const IsoWeek &) const = default;
};

[[nodiscard]] IsoWeek iso_week_of(Date d);
/// Monday that starts the given ISO week.
[[nodiscard]] Date monday_of(IsoWeek w);
/// Number of ISO weeks (52 or 53) in an ISO week-year.
[[nodiscard]] int iso_weeks_in_year(int year);
[[nodiscard]] bool is_monday(Date d);

/// Parses "YYYY-MM-DD". Throws Error(ParseError) on malformed input.
[[nodiscard]] Date parse_date(const std::string &text);
[[nodiscard]] std::string format_date(Date d);
/// Parses "YYYY-Www".
[[nodiscard]] IsoWeek parse_iso_week(const std::string &text);
[[nodiscard]] std::string format_iso_week(IsoWeek w);
/// Inclusive enumeration of ISO weeks from `first` to `last`.
[[nodiscard]] std::vector<IsoWeek> iso_week_range(IsoWeek first, IsoWeek last);

/**
 * Ordered weekly observations of one metric. Index i corresponds to
 * start_week + 7*i days. Immutable after construction.
 */
class WeeklySeries {
public:
    WeeklySeries(std::string name, Date start_week, std::vector<double> values, bool log_space = false);

    [[nodiscard]] const std::string &name() const noexcept { return name_; }
    [[nodiscard]] Date start_week() const noexcept { return start_; }
    [[nodiscard]] const std::vector<double> &values() const noexcept { return values_; }
    [[nodiscard]] std::span<const double> view() const noexcept { return values_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] double operator[](std::size_t i) const { return values_[i]; }
    [[nodiscard]] Date week_at(std::size_t i) const;
    [[nodiscard]] Date end_week() const { return week_at(values_.size() - 1); }
    /// True when values were produced by log_transform and must be exponentiated on output.
    [[nodiscard]] bool log_space() const noexcept { return log_space_; }

    /// Weeks [first, first + count).
    [[nodiscard]] WeeklySeries slice(std::size_t first, std::size_t count) const;
    [[nodiscard]] WeeklySeries renamed(std::string name) const;

private:
    std::string name_;
    Date start_;
    std::vector<double> values_;
    bool log_space_ = false;
};

/// Exogenous indicator aligned 1:1 with a WeeklySeries, values in {-1, 0, 1}.
class FlagSeries {
public:
    FlagSeries(std::string name, Date start_week, std::vector<int> values);

    [[nodiscard]] const std::string &name() const noexcept { return name_; }
    [[nodiscard]] Date start_week() const noexcept { return start_; }
    [[nodiscard]] const std::vector<int> &values() const noexcept { return values_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] int operator[](std::size_t i) const { return values_[i]; }
    [[nodiscard]] FlagSeries slice(std::size_t first, std::size_t count) const;
    [[nodiscard]] std::vector<double> as_doubles() const;

private:
    std::string name_;
    Date start_;
    std::vector<int> values_;
};

/// Checks that every flag has the same start week and length as `y`.
void require_aligned(const WeeklySeries &y, std::span<const FlagSeries> flags, const std::string &module);

/// COVID scenario: weeks flagged +1 / -1 and the forecast horizon.
struct ScenarioConfig {
    std::vector<IsoWeek> covid_positive_weeks;
    std::vector<IsoWeek> covid_negative_weeks;
    int horizon_weeks = 78;

    /// 2020-W12..W26 positive, 2021-W12..W26 negative, 78-week horizon.
    static ScenarioConfig default_config();
    void validate() const;
};

[[nodiscard]] WeeklySeries log_transform(const WeeklySeries &s);
/// Inverse of log_transform; clears the log-space tag.
[[nodiscard]] WeeklySeries exp_transform(const WeeklySeries &s);

/// output[i] = input[i + lag] - input[i]. Starts lag weeks after the input.
[[nodiscard]] WeeklySeries seasonal_difference(const WeeklySeries &s, int lag);
/// Rebuilds the original series from its first `lag` values and the lag-differences.
[[nodiscard]] std::vector<double> undifference(std::span<const double> head, std::span<const double> diffs,
                                               int lag);

/// US Black Friday: the Friday after the fourth Thursday of November.
[[nodiscard]] Date black_friday(int year);
[[nodiscard]] Date cyber_monday(int year);

[[nodiscard]] FlagSeries build_peak_flag(Date start_week, int n_weeks);
[[nodiscard]] FlagSeries build_covid_flag(Date start_week, int n_weeks, const ScenarioConfig &cfg);

}  // namespace crisiscast::series
