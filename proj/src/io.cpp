#include "crisiscast/io.hpp"

#include "crisiscast/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace crisiscast::io {

namespace {

constexpr const char *kModule = "io-cli";
using json = nlohmann::json;
using std::chrono::days;

std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

[[noreturn]] void parse_error(std::size_t lineno, const std::string &msg) {
    throw_data(kModule, "ParseError", "line " + std::to_string(lineno) + ": " + msg);
}

double parse_value(const std::string &cell, std::size_t lineno, const std::string &column) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(cell, &used);
    } catch (const std::exception &) {
        used = 0;
    }
    if (cell.empty() || used != cell.size() || !std::isfinite(v)) {
        parse_error(lineno, "column '" + column + "' has non-numeric value '" + cell + "'");
    }
    return v;
}

int parse_flag(const std::string &cell, std::size_t lineno, const std::string &column) {
    if (cell != "0" && cell != "1" && cell != "-1") {
        parse_error(lineno, "flag column '" + column + "' must be -1, 0 or 1, got '" + cell + "'");
    }
    return std::stoi(cell);
}

json row_json(const SummaryRow &r) {
    json vals = json::array();
    for (double v : r.values) vals.push_back(std::isfinite(v) ? json(v) : json(nullptr));
    return {{"label", r.label}, {"values", vals}};
}

}  // namespace

const WeeklySeries &Dataset::metric(const std::string &name) const {
    for (const auto &m : metrics)
        if (m.name() == name) return m;
    throw_usage(kModule, "MissingColumn", "no metric named '" + name + "'");
}

Dataset ingest_csv(std::istream &is, const IngestOptions &opts) {
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(is, line)) throw_data(kModule, "ParseError", "line 1: empty input, expected a header");
    const auto header = split_csv_line(line);
    const auto find_col = [&](const std::string &name) -> std::optional<std::size_t> {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };
    const auto date_col = find_col("week_start");
    if (!date_col) throw_data(kModule, "MissingColumn", "header lacks a 'week_start' column");

    std::vector<std::size_t> flag_idx, metric_idx;
    for (const auto &f : opts.flag_columns) {
        const auto c = find_col(f);
        if (!c) throw_data(kModule, "MissingColumn", "flag column '" + f + "' not in header");
        flag_idx.push_back(*c);
    }
    if (opts.metric_columns.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (c != *date_col && std::find(flag_idx.begin(), flag_idx.end(), c) == flag_idx.end()) metric_idx.push_back(c);
        }
    } else {
        for (const auto &m : opts.metric_columns) {
            const auto c = find_col(m);
            if (!c) throw_data(kModule, "MissingColumn", "metric column '" + m + "' not in header");
            metric_idx.push_back(*c);
        }
    }
    if (metric_idx.empty()) throw_data(kModule, "MissingColumn", "no metric columns");

    std::vector<series::Date> weeks;
    std::vector<std::vector<double>> mvals(metric_idx.size());
    std::vector<std::vector<int>> fvals(flag_idx.size());
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            parse_error(lineno, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()));
        }
        series::Date d{};
        try {
            d = series::parse_date(cells[*date_col]);
        } catch (const Error &) {
            parse_error(lineno, "bad date '" + cells[*date_col] + "'");
        }
        if (!series::is_monday(d)) {
            throw_data(kModule, "NonMondayDate", "line " + std::to_string(lineno) + ": " + cells[*date_col] + " is not a Monday");
        }
        if (!weeks.empty()) {
            if (d <= weeks.back()) parse_error(lineno, "week " + cells[*date_col] + " is out of order or duplicated");
            if (d != weeks.back() + days{7}) {
                if (!opts.interpolate_gaps) {
                    throw_data(kModule, "GapError",
                               "line " + std::to_string(lineno) + ": missing week " +
                                   series::format_date(weeks.back() + days{7}) + " before " + cells[*date_col]);
                }
                const auto missing = static_cast<std::size_t>((d - weeks.back()).count() / 7 - 1);
                std::vector<double> next(metric_idx.size());
                for (std::size_t k = 0; k < metric_idx.size(); ++k) next[k] = parse_value(cells[metric_idx[k]], lineno, header[metric_idx[k]]);
                for (std::size_t j = 1; j <= missing; ++j) {
                    weeks.push_back(weeks.back() + days{7});
                    const double frac = static_cast<double>(j) / static_cast<double>(missing + 1);
                    for (std::size_t k = 0; k < metric_idx.size(); ++k) {
                        const double prev = mvals[k][mvals[k].size() - j];
                        mvals[k].push_back(prev + frac * (next[k] - prev));
                    }
                    for (auto &f : fvals) f.push_back(0);
                }
            }
        }
        weeks.push_back(d);
        for (std::size_t k = 0; k < metric_idx.size(); ++k) mvals[k].push_back(parse_value(cells[metric_idx[k]], lineno, header[metric_idx[k]]));
        for (std::size_t k = 0; k < flag_idx.size(); ++k) fvals[k].push_back(parse_flag(cells[flag_idx[k]], lineno, header[flag_idx[k]]));
    }
    if (weeks.empty()) throw_data(kModule, "ParseError", "no data rows");

    Dataset out;
    for (std::size_t k = 0; k < metric_idx.size(); ++k) out.metrics.emplace_back(header[metric_idx[k]], weeks.front(), std::move(mvals[k]));
    for (std::size_t k = 0; k < flag_idx.size(); ++k) out.flags.emplace_back(header[flag_idx[k]], weeks.front(), std::move(fvals[k]));
    return out;
}

Dataset ingest_file(const std::filesystem::path &path, const IngestOptions &opts) {
    std::ifstream in(path);
    if (!in) throw_data(kModule, "IngestError", "cannot open input '" + path.string() + "'");
    return ingest_csv(in, opts);
}

void write_dataset_csv(std::ostream &os, const Dataset &d) {
    if (d.metrics.empty()) throw_usage(kModule, "BadParameter", "dataset has no metrics");
    os << "week_start";
    for (const auto &m : d.metrics) os << ',' << m.name();
    for (const auto &f : d.flags) os << ',' << f.name();
    os << '\n' << std::setprecision(17);
    const auto &first = d.metrics.front();
    for (std::size_t i = 0; i < first.size(); ++i) {
        os << series::format_date(first.week_at(i));
        for (const auto &m : d.metrics) os << ',' << m[i];
        for (const auto &f : d.flags) os << ',' << f[i];
        os << '\n';
    }
}

Dataset generate_synthetic(int years, std::uint64_t seed, const SyntheticParams &p) {
    if (years < 2) throw_usage(kModule, "BadParameter", "synthetic data needs at least 2 years");
    if (p.metrics.empty()) throw_usage(kModule, "BadParameter", "no metric profiles");
    if (!(p.noise_sigma >= 0.0) || !(p.black_friday_multiplier > 0.0) || !(p.cyber_monday_multiplier > 0.0) ||
        p.covid_weeks < 0 || !(p.covid_decay >= 0.0 && p.covid_decay < 1.0)) {
        throw_usage(kModule, "BadParameter", "invalid synthetic parameters");
    }
    const series::Date start = series::monday_of(p.start);
    const series::Date end = series::monday_of({p.start.year + years, p.start.week});
    const auto n = static_cast<std::size_t>((end - start).count() / 7);
    const series::Date covid_start = series::monday_of(p.covid_start);

    Dataset out;
    for (std::size_t m = 0; m < p.metrics.size(); ++m) {
        const auto &prof = p.metrics[m];
        if (!(prof.base_level > 0.0)) throw_usage(kModule, "BadParameter", "base level must be positive");
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(m)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> z(0.0, 1.0);
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) {
            const series::Date week = start + days{7 * static_cast<long>(i)};
            const std::chrono::year_month_day ymd{week + days{3}};  // Thursday fixes the calendar position
            const auto doy = (week + days{3} - std::chrono::sys_days{ymd.year() / std::chrono::January / 1}).count();
            const double years_in = static_cast<double>(i) * 7.0 / 365.25;
            double log_level = std::log(prof.base_level) + years_in * std::log1p(prof.annual_growth);
            log_level += p.seasonal_amplitude * std::cos(2.0 * std::numbers::pi * (static_cast<double>(doy) - 358.0) / 365.25);
            const int y = static_cast<int>(ymd.year());
            const series::Date bf = series::black_friday(y) - days{4};  // Monday of the Black Friday week
            if (week == bf) log_level += std::log(p.black_friday_multiplier);
            if (week == bf + days{7}) log_level += std::log(p.cyber_monday_multiplier);
            if (p.covid_shock && week >= covid_start) {
                const auto k = (week - covid_start).count() / 7;
                if (k < p.covid_weeks) {
                    log_level += prof.covid_sensitivity *
                                 (p.covid_level_shift + p.covid_spike * std::pow(p.covid_decay, static_cast<double>(k)));
                }
            }
            v[i] = std::exp(log_level + p.noise_sigma * z(rng));
        }
        out.metrics.emplace_back(prof.name, start, std::move(v));
    }
    return out;
}

std::string model_to_json(const sarimax::FittedSarimax &m) {
    json j;
    j["order"] = {{"p", m.order.p}, {"d", m.order.d}, {"q", m.order.q}, {"P", m.order.P},
                  {"D", m.order.D}, {"Q", m.order.Q}, {"s", m.order.s}};
    j["ar"] = m.ar_coeffs;
    j["ma"] = m.ma_coeffs;
    j["seasonal_ar"] = m.seasonal_ar_coeffs;
    j["seasonal_ma"] = m.seasonal_ma_coeffs;
    j["exog_names"] = m.exog_names;
    j["exog_betas"] = m.exog_betas;
    j["intercept"] = m.intercept;
    j["sigma2"] = m.sigma2;
    j["loglik"] = m.loglik;
    j["aicc"] = m.aicc;
    j["n_obs"] = m.n_obs;
    j["log_space"] = m.log_space;
    j["converged"] = m.converged;
    j["iterations"] = m.iterations;
    return j.dump(2);  // nlohmann writes doubles with round-trip (17 significant digit) precision
}

sarimax::FittedSarimax model_from_json(const std::string &text) {
    sarimax::FittedSarimax m;
    try {
        const json j = json::parse(text);
        const auto &o = j.at("order");
        m.order = {o.at("p"), o.at("d"), o.at("q"), o.at("P"), o.at("D"), o.at("Q"), o.at("s")};
        m.ar_coeffs = j.at("ar").get<std::vector<double>>();
        m.ma_coeffs = j.at("ma").get<std::vector<double>>();
        m.seasonal_ar_coeffs = j.at("seasonal_ar").get<std::vector<double>>();
        m.seasonal_ma_coeffs = j.at("seasonal_ma").get<std::vector<double>>();
        m.exog_names = j.at("exog_names").get<std::vector<std::string>>();
        m.exog_betas = j.at("exog_betas").get<std::vector<double>>();
        m.intercept = j.at("intercept");
        m.sigma2 = j.at("sigma2");
        m.loglik = j.at("loglik");
        m.aicc = j.at("aicc");
        m.n_obs = j.at("n_obs");
        m.log_space = j.at("log_space");
        m.converged = j.at("converged");
        m.iterations = j.at("iterations");
    } catch (const json::exception &e) {
        throw_data(kModule, "ParseError", std::string("model JSON: ") + e.what());
    }
    m.order.validate();
    if (m.exog_names.size() != m.exog_betas.size()) {
        throw_data(kModule, "ParseError", "model JSON: exog names and betas differ in length");
    }
    return m;
}

SummaryTable emit_summary(const SummaryInputs &in) {
    if (in.metrics.empty() || in.labels.size() != in.metrics.size()) {
        throw_usage(kModule, "BadParameter", "summary needs one label per metric");
    }
    const auto &first = in.metrics.front();
    for (const auto &m : in.metrics) {
        if (m.size() != first.size() || m.start_week() != first.start_week()) {
            throw_data(kModule, "MisalignedSeries", "summary metrics must share their span");
        }
    }
    // index range of every complete ISO week-year
    std::map<int, std::pair<std::size_t, std::size_t>> spans;
    for (std::size_t i = 0; i < first.size(); ++i) {
        const int y = series::iso_week_of(first.week_at(i)).year;
        auto [it, fresh] = spans.try_emplace(y, i, i);
        if (!fresh) it->second.second = i;
    }
    SummaryTable t;
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    for (const auto &[y, r] : spans) {
        if (r.second - r.first + 1 == static_cast<std::size_t>(series::iso_weeks_in_year(y))) {
            t.years.push_back(y);
            ranges.push_back(r);
            t.forecast_year.push_back(in.forecast_start && first.week_at(r.second) >= *in.forecast_start);
        }
    }
    if (t.years.empty()) throw_data(kModule, "IncompleteYear", "no complete ISO year in the summary input");
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();

    for (std::size_t m = 0; m < in.metrics.size(); ++m) {
        SummaryRow row{in.labels[m], {}};
        for (const auto &[a, b] : ranges) {
            double s = 0.0;
            for (std::size_t i = a; i <= b; ++i) s += in.metrics[m][i];
            row.values.push_back(s);
        }
        t.levels.push_back(std::move(row));
    }
    if (in.ttm_metric) {
        const auto &s = in.metrics.at(*in.ttm_metric);
        SummaryRow row{"TTM " + in.labels[*in.ttm_metric], {}};
        for (const auto &r : ranges) {
            const std::size_t end = r.second;
            if (end + 1 < 52) {
                row.values.push_back(nan);
                continue;
            }
            double sum = 0.0;
            for (std::size_t i = end + 1 - 52; i <= end; ++i) sum += s[i];
            row.values.push_back(sum);
        }
        t.levels.push_back(std::move(row));
    }
    for (const auto &lv : t.levels) {
        SummaryRow row{lv.label, {nan}};
        for (std::size_t k = 1; k < lv.values.size(); ++k) {
            const bool adjacent = t.years[k] == t.years[k - 1] + 1;
            row.values.push_back(adjacent && lv.values[k - 1] != 0.0 ? (lv.values[k] / lv.values[k - 1] - 1.0) * 100.0 : nan);
        }
        t.yoy.push_back(std::move(row));
    }
    if (in.share_group.size() >= 2) {
        for (std::size_t g : in.share_group) {
            SummaryRow row{in.labels.at(g) + " (%)", {}};
            for (const auto &[a, b] : ranges) {
                double acc = 0.0;
                for (std::size_t i = a; i <= b; ++i) {
                    double tot = 0.0;
                    for (std::size_t h : in.share_group) tot += in.metrics[h][i];
                    acc += tot != 0.0 ? 100.0 * in.metrics[g][i] / tot : nan;
                }
                row.values.push_back(acc / static_cast<double>(b - a + 1));
            }
            t.average.push_back(std::move(row));
        }
    }
    return t;
}

void write_summary_csv(std::ostream &os, const SummaryTable &t) {
    os << "block,row,year,value,forecast\n" << std::setprecision(17);
    auto block = [&](const char *name, const std::vector<SummaryRow> &rows) {
        for (const auto &r : rows)
            for (std::size_t k = 0; k < t.years.size(); ++k) {
                os << name << ',' << r.label << ',' << t.years[k] << ',';
                if (std::isfinite(r.values[k])) os << r.values[k];
                os << ',' << (t.forecast_year[k] ? 1 : 0) << '\n';
            }
    };
    block("level", t.levels);
    block("yoy", t.yoy);
    block("average", t.average);
}

std::string summary_to_json(const SummaryTable &t) {
    json j;
    j["years"] = t.years;
    j["forecast_year"] = t.forecast_year;
    for (const auto &[name, rows] : {std::pair{"levels", &t.levels}, {"yoy", &t.yoy}, {"average", &t.average}}) {
        j[name] = json::array();
        for (const auto &r : *rows) j[name].push_back(row_json(r));
    }
    return j.dump(2);
}

}  // namespace crisiscast::io
