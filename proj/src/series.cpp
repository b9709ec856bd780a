#include "crisiscast/series.hpp"

#include "crisiscast/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

namespace crisiscast::series {

namespace {

constexpr const char *kModule = "series-core";

using namespace std::chrono;

int parse_int(const std::string &text, std::size_t pos, std::size_t len, const std::string &whole) {
    int value = 0;
    const char *first = text.data() + pos;
    const char *last = first + len;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw_data(kModule, "ParseError", "malformed value '" + whole + "'");
    }
    return value;
}

}  // namespace

IsoWeek iso_week_of(Date d) {
    // The ISO week-year is the year of the week's Thursday.
    const weekday wd{d};
    const int iso_wd = static_cast<int>(wd.iso_encoding());  // Mon=1..Sun=7
    const Date thursday = d + days{4 - iso_wd};
    const year_month_day ymd{thursday};
    const Date jan1 = sys_days{ymd.year() / January / 1};
    const int ordinal = static_cast<int>((thursday - jan1).count());
    return IsoWeek{static_cast<int>(ymd.year()), ordinal / 7 + 1};
}

Date monday_of(IsoWeek w) {
    // Jan 4th always falls in ISO week 1.
    const Date jan4 = sys_days{year{w.year} / January / 4};
    const int iso_wd = static_cast<int>(weekday{jan4}.iso_encoding());
    const Date week1_monday = jan4 - days{iso_wd - 1};
    return week1_monday + days{7 * (w.week - 1)};
}

int iso_weeks_in_year(int y) {
    return iso_week_of(sys_days{year{y} / December / 28}).week;
}

bool is_monday(Date d) { return weekday{d} == Monday; }

Date parse_date(const std::string &text) {
    if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
        throw_data(kModule, "ParseError", "expected YYYY-MM-DD, got '" + text + "'");
    }
    const int y = parse_int(text, 0, 4, text);
    const int m = parse_int(text, 5, 2, text);
    const int d = parse_int(text, 8, 2, text);
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) {
        throw_data(kModule, "ParseError", "invalid calendar date '" + text + "'");
    }
    return sys_days{ymd};
}

std::string format_date(Date d) {
    const year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

IsoWeek parse_iso_week(const std::string &text) {
    if (text.size() < 7 || text.size() > 8 || text[4] != '-' || text[5] != 'W') {
        throw_data(kModule, "ParseError", "expected YYYY-Www, got '" + text + "'");
    }
    const IsoWeek w{parse_int(text, 0, 4, text), parse_int(text, 6, text.size() - 6, text)};
    if (w.week < 1 || w.week > iso_weeks_in_year(w.year)) {
        throw_data(kModule, "ParseError", "week out of range in '" + text + "'");
    }
    return w;
}

std::string format_iso_week(IsoWeek w) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-W%02d", w.year, w.week);
    return buf;
}

std::vector<IsoWeek> iso_week_range(IsoWeek first, IsoWeek last) {
    std::vector<IsoWeek> out;
    for (Date d = monday_of(first); d <= monday_of(last); d += days{7}) {
        out.push_back(iso_week_of(d));
    }
    return out;
}

WeeklySeries::WeeklySeries(std::string name, Date start_week, std::vector<double> values, bool log_space)
    : name_(std::move(name)), start_(start_week), values_(std::move(values)), log_space_(log_space) {
    if (values_.empty()) {
        throw_data(kModule, "EmptySeries", "series '" + name_ + "' has no values");
    }
    if (!is_monday(start_)) {
        throw_data(kModule, "NonMondayDate", "series '" + name_ + "' starts on " + format_date(start_));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            throw_data(kModule, "NonFiniteValue",
                       "series '" + name_ + "' has a non-finite value at index " + std::to_string(i));
        }
    }
}

Date WeeklySeries::week_at(std::size_t i) const { return start_ + days{7 * static_cast<long>(i)}; }

WeeklySeries WeeklySeries::slice(std::size_t first, std::size_t count) const {
    if (first + count > values_.size() || count == 0) {
        throw_data(kModule, "SeriesTooShort", "slice out of range for '" + name_ + "'");
    }
    std::vector<double> v(values_.begin() + static_cast<long>(first),
                          values_.begin() + static_cast<long>(first + count));
    return WeeklySeries(name_, week_at(first), std::move(v), log_space_);
}

WeeklySeries WeeklySeries::renamed(std::string name) const {
    return WeeklySeries(std::move(name), start_, values_, log_space_);
}

FlagSeries::FlagSeries(std::string name, Date start_week, std::vector<int> values)
    : name_(std::move(name)), start_(start_week), values_(std::move(values)) {
    if (values_.empty()) {
        throw_data(kModule, "EmptySeries", "flag '" + name_ + "' has no values");
    }
    if (!is_monday(start_)) {
        throw_data(kModule, "NonMondayDate", "flag '" + name_ + "' starts on " + format_date(start_));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (values_[i] < -1 || values_[i] > 1) {
            throw_data(kModule, "ParseError",
                       "flag '" + name_ + "' value " + std::to_string(values_[i]) + " at index " +
                           std::to_string(i) + " is outside {-1,0,1}");
        }
    }
}

FlagSeries FlagSeries::slice(std::size_t first, std::size_t count) const {
    if (first + count > values_.size() || count == 0) {
        throw_data(kModule, "SeriesTooShort", "slice out of range for flag '" + name_ + "'");
    }
    std::vector<int> v(values_.begin() + static_cast<long>(first),
                       values_.begin() + static_cast<long>(first + count));
    return FlagSeries(name_, start_ + days{7 * static_cast<long>(first)}, std::move(v));
}

std::vector<double> FlagSeries::as_doubles() const { return {values_.begin(), values_.end()}; }

void require_aligned(const WeeklySeries &y, std::span<const FlagSeries> flags, const std::string &module) {
    for (const auto &f : flags) {
        if (f.size() != y.size() || f.start_week() != y.start_week()) {
            throw_data(module, "MisalignedExog",
                       "flag '" + f.name() + "' is not aligned with series '" + y.name() + "'");
        }
    }
}

ScenarioConfig ScenarioConfig::default_config() {
    ScenarioConfig cfg;
    cfg.covid_positive_weeks = iso_week_range({2020, 12}, {2020, 26});
    cfg.covid_negative_weeks = iso_week_range({2021, 12}, {2021, 26});
    cfg.horizon_weeks = 78;
    return cfg;
}

void ScenarioConfig::validate() const {
    if (horizon_weeks < 1) {
        throw_usage(kModule, "BadParameter", "horizon_weeks must be >= 1");
    }
    const std::set<IsoWeek> pos(covid_positive_weeks.begin(), covid_positive_weeks.end());
    for (const auto &w : covid_negative_weeks) {
        if (pos.contains(w)) {
            throw_usage(kModule, "OverlappingWeekSets",
                        "week " + format_iso_week(w) + " is both positive and negative");
        }
    }
}

WeeklySeries log_transform(const WeeklySeries &s) {
    std::vector<double> out(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!(s[i] > 0.0)) {
            throw_data(kModule, "NonPositiveValue",
                       "series '" + s.name() + "' has non-positive value at index " + std::to_string(i));
        }
        out[i] = std::log(s[i]);
    }
    return WeeklySeries(s.name(), s.start_week(), std::move(out), true);
}

WeeklySeries exp_transform(const WeeklySeries &s) {
    std::vector<double> out(s.size());
    std::transform(s.values().begin(), s.values().end(), out.begin(), [](double v) { return std::exp(v); });
    return WeeklySeries(s.name(), s.start_week(), std::move(out), false);
}

WeeklySeries seasonal_difference(const WeeklySeries &s, int lag) {
    if (lag < 1) {
        throw_usage(kModule, "BadParameter", "lag must be positive");
    }
    const auto n = s.size();
    const auto l = static_cast<std::size_t>(lag);
    if (n <= l) {
        throw_data(kModule, "SeriesTooShort",
                   "series '" + s.name() + "' of length " + std::to_string(n) + " cannot be differenced at lag " +
                       std::to_string(lag));
    }
    std::vector<double> out(n - l);
    for (std::size_t i = 0; i + l < n; ++i) {
        out[i] = s[i + l] - s[i];
    }
    return WeeklySeries(s.name(), s.week_at(l), std::move(out), s.log_space());
}

std::vector<double> undifference(std::span<const double> head, std::span<const double> diffs, int lag) {
    const auto l = static_cast<std::size_t>(lag);
    if (head.size() != l) {
        throw_usage(kModule, "BadParameter", "undifference needs exactly `lag` head values");
    }
    std::vector<double> out(head.begin(), head.end());
    out.reserve(l + diffs.size());
    for (std::size_t i = 0; i < diffs.size(); ++i) {
        out.push_back(out[i] + diffs[i]);
    }
    return out;
}

Date black_friday(int y) {
    const Date thanksgiving = sys_days{year{y} / November / Thursday[4]};
    return thanksgiving + days{1};
}

Date cyber_monday(int y) { return black_friday(y) + days{3}; }

FlagSeries build_peak_flag(Date start_week, int n_weeks) {
    if (n_weeks < 1) {
        throw_usage(kModule, "BadParameter", "n_weeks must be >= 1");
    }
    std::vector<int> flags(static_cast<std::size_t>(n_weeks), 0);
    const Date end = start_week + days{7 * n_weeks};
    const int first_year = static_cast<int>(year_month_day{start_week}.year());
    const int last_year = static_cast<int>(year_month_day{end}.year());
    for (int y = first_year; y <= last_year; ++y) {
        for (Date event : {black_friday(y), cyber_monday(y)}) {
            if (event < start_week || event >= end) {
                continue;
            }
            const auto idx = static_cast<std::size_t>((event - start_week).count() / 7);
            flags[idx] = 1;
        }
    }
    return FlagSeries("peak", start_week, std::move(flags));
}

FlagSeries build_covid_flag(Date start_week, int n_weeks, const ScenarioConfig &cfg) {
    cfg.validate();
    if (n_weeks < 1) {
        throw_usage(kModule, "BadParameter", "n_weeks must be >= 1");
    }
    std::vector<int> flags(static_cast<std::size_t>(n_weeks), 0);
    auto mark = [&](const std::vector<IsoWeek> &weeks, int value) {
        for (const auto &w : weeks) {
            const Date monday = monday_of(w);
            const long offset = (monday - start_week).count();
            if (offset < 0 || offset % 7 != 0 || offset / 7 >= n_weeks) {
                continue;
            }
            flags[static_cast<std::size_t>(offset / 7)] = value;
        }
    };
    mark(cfg.covid_positive_weeks, 1);
    mark(cfg.covid_negative_weeks, -1);
    return FlagSeries("covid", start_week, std::move(flags));
}

}  // namespace crisiscast::series
