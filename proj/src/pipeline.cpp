#include "crisiscast/pipeline.hpp"

#include "crisiscast/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace crisiscast::pipeline {

namespace {

constexpr const char *kModule = "io-cli";
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
using std::chrono::days;

[[noreturn]] void bad_config(const std::string &msg) { throw_usage(kModule, "BadConfig", msg); }

void check_keys(const json &j, std::initializer_list<const char *> allowed, const std::string &where) {
    if (!j.is_object()) bad_config("'" + where + "' must be an object");
    for (const auto &[k, v] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char *a) { return k == a; })) {
            bad_config("unknown key '" + k + "' in " + where);
        }
    }
}

template <class T>
void read(const json &j, const char *key, T &out, const std::string &where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception &) {
        bad_config("'" + where + "." + key + "' has the wrong type");
    }
}

series::IsoWeek parse_week(const std::string &s) {
    try {
        return series::parse_iso_week(s);
    } catch (const Error &) {
        bad_config("bad ISO week '" + s + "'");
    }
}

/// "YYYY-Www" or "YYYY-Www..YYYY-Www".
std::vector<series::IsoWeek> parse_week_list(const std::vector<std::string> &items) {
    std::vector<series::IsoWeek> out;
    for (const auto &it : items) {
        const auto dots = it.find("..");
        if (dots == std::string::npos) {
            out.push_back(parse_week(it));
        } else {
            const auto range = series::iso_week_range(parse_week(it.substr(0, dots)), parse_week(it.substr(dots + 2)));
            out.insert(out.end(), range.begin(), range.end());
        }
    }
    return out;
}

/// Compresses consecutive weeks back into "a..b" ranges.
std::vector<std::string> format_week_list(const std::vector<series::IsoWeek> &weeks) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < weeks.size();) {
        std::size_t j = i;
        while (j + 1 < weeks.size() && series::monday_of(weeks[j + 1]) == series::monday_of(weeks[j]) + days{7}) ++j;
        out.push_back(j == i ? series::format_iso_week(weeks[i])
                             : series::format_iso_week(weeks[i]) + ".." + series::format_iso_week(weeks[j]));
        i = j + 1;
    }
    return out;
}

std::string num(double v) {
    if (!std::isfinite(v)) return {};
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

bool all_zero(const series::FlagSeries &f) {
    return std::all_of(f.values().begin(), f.values().end(), [](int v) { return v == 0; });
}

struct Bundle {
    std::map<std::string, std::string> files;  // relative path -> content

    void add(const std::string &path, std::string content) { files[path] = std::move(content); }
};

struct ScenarioRun {
    sarimax::SarimaOrder order;
    std::vector<std::string> flag_names;
};

std::string timestamp_utc() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
    return os.str();
}

std::filesystem::path commit(const Bundle &bundle, const PipelineConfig &cfg) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (ec) throw_data(kModule, "OutputError", "cannot create '" + cfg.output_dir.string() + "': " + ec.message());
    const std::string base = "run_" + timestamp_utc() + "_seed" + std::to_string(cfg.seed);
    fs::path final_dir = cfg.output_dir / base;
    for (int k = 2; fs::exists(final_dir); ++k) final_dir = cfg.output_dir / (base + "_" + std::to_string(k));
    const fs::path tmp = cfg.output_dir / ("." + final_dir.filename().string() + ".partial");
    fs::remove_all(tmp, ec);
    try {
        for (const auto &[rel, content] : bundle.files) {
            const fs::path p = tmp / rel;
            fs::create_directories(p.parent_path());
            std::ofstream out(p, std::ios::binary);
            out << content;
            if (!out) throw_data(kModule, "OutputError", "failed writing '" + p.string() + "'");
        }
        fs::rename(tmp, final_dir);
    } catch (...) {
        fs::remove_all(tmp, ec);
        throw;
    }
    return final_dir;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception &e) {
        bad_config(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, {"seed", "output_dir", "input", "synthetic", "target", "summary", "scenario", "scenarios",
                   "without_covid_cutoff", "log_transform", "search", "fit", "peaks", "msar", "backtest"},
               "config");
    PipelineConfig c;
    read(j, "seed", c.seed, "config");
    std::string text_value = c.output_dir.string();
    read(j, "output_dir", text_value, "config");
    c.output_dir = text_value;
    read(j, "target", c.target, "config");
    read(j, "log_transform", c.log_transform, "config");
    read(j, "scenarios", c.scenarios, "config");
    if (j.contains("without_covid_cutoff")) {
        read(j, "without_covid_cutoff", text_value, "config");
        c.without_covid_cutoff = parse_week(text_value);
    }

    if (j.contains("input")) {
        const auto &in = j.at("input");
        check_keys(in, {"path", "metric_columns", "flag_columns", "interpolate_gaps"}, "input");
        std::string path;
        read(in, "path", path, "input");
        if (!path.empty()) c.input_path = path;
        read(in, "metric_columns", c.ingest.metric_columns, "input");
        read(in, "flag_columns", c.ingest.flag_columns, "input");
        read(in, "interpolate_gaps", c.ingest.interpolate_gaps, "input");
    }
    if (j.contains("synthetic")) {
        const auto &s = j.at("synthetic");
        check_keys(s, {"years", "start", "seasonal_amplitude", "black_friday_multiplier", "cyber_monday_multiplier",
                       "noise_sigma", "covid_shock", "covid_start", "covid_weeks", "covid_level_shift", "covid_spike",
                       "covid_decay", "metrics"},
                   "synthetic");
        auto &p = c.synthetic;
        read(s, "years", c.synthetic_years, "synthetic");
        if (s.contains("start")) {
            read(s, "start", text_value, "synthetic");
            p.start = parse_week(text_value);
        }
        read(s, "seasonal_amplitude", p.seasonal_amplitude, "synthetic");
        read(s, "black_friday_multiplier", p.black_friday_multiplier, "synthetic");
        read(s, "cyber_monday_multiplier", p.cyber_monday_multiplier, "synthetic");
        read(s, "noise_sigma", p.noise_sigma, "synthetic");
        read(s, "covid_shock", p.covid_shock, "synthetic");
        if (s.contains("covid_start")) {
            read(s, "covid_start", text_value, "synthetic");
            p.covid_start = parse_week(text_value);
        }
        read(s, "covid_weeks", p.covid_weeks, "synthetic");
        read(s, "covid_level_shift", p.covid_level_shift, "synthetic");
        read(s, "covid_spike", p.covid_spike, "synthetic");
        read(s, "covid_decay", p.covid_decay, "synthetic");
        if (s.contains("metrics")) {
            p.metrics.clear();
            for (const auto &m : s.at("metrics")) {
                check_keys(m, {"name", "base_level", "annual_growth", "covid_sensitivity"}, "synthetic.metrics");
                io::MetricProfile prof;
                read(m, "name", prof.name, "synthetic.metrics");
                read(m, "base_level", prof.base_level, "synthetic.metrics");
                read(m, "annual_growth", prof.annual_growth, "synthetic.metrics");
                read(m, "covid_sensitivity", prof.covid_sensitivity, "synthetic.metrics");
                p.metrics.push_back(prof);
            }
        }
    }
    if (j.contains("summary")) {
        const auto &s = j.at("summary");
        check_keys(s, {"rows", "ttm_metric", "share_group"}, "summary");
        if (s.contains("rows")) {
            c.summary_rows.clear();
            for (const auto &r : s.at("rows")) {
                check_keys(r, {"metric", "label"}, "summary.rows");
                SummaryRowSpec spec;
                read(r, "metric", spec.metric, "summary.rows");
                spec.label = spec.metric;
                read(r, "label", spec.label, "summary.rows");
                c.summary_rows.push_back(spec);
            }
        }
        read(s, "ttm_metric", c.ttm_metric, "summary");
        read(s, "share_group", c.share_group, "summary");
    }
    if (j.contains("scenario")) {
        const auto &s = j.at("scenario");
        check_keys(s, {"covid_positive_weeks", "covid_negative_weeks", "horizon_weeks"}, "scenario");
        std::vector<std::string> pos, neg;
        read(s, "covid_positive_weeks", pos, "scenario");
        read(s, "covid_negative_weeks", neg, "scenario");
        if (s.contains("covid_positive_weeks")) c.scenario.covid_positive_weeks = parse_week_list(pos);
        if (s.contains("covid_negative_weeks")) c.scenario.covid_negative_weeks = parse_week_list(neg);
        read(s, "horizon_weeks", c.scenario.horizon_weeks, "scenario");
    }
    if (j.contains("search")) {
        const auto &s = j.at("search");
        check_keys(s, {"mode", "max_p", "max_q", "max_P", "max_Q", "d", "D", "s", "patience"}, "search");
        std::string mode = "stepwise";
        read(s, "mode", mode, "search");
        if (mode == "stepwise") c.search.mode = auto_order::SearchMode::Stepwise;
        else if (mode == "exhaustive") c.search.mode = auto_order::SearchMode::Exhaustive;
        else bad_config("search.mode must be 'stepwise' or 'exhaustive'");
        read(s, "max_p", c.search.max_p, "search");
        read(s, "max_q", c.search.max_q, "search");
        read(s, "max_P", c.search.max_P, "search");
        read(s, "max_Q", c.search.max_Q, "search");
        read(s, "d", c.search.d_set, "search");
        read(s, "D", c.search.D_set, "search");
        read(s, "s", c.search.s, "search");
        read(s, "patience", c.search.stepwise_patience, "search");
    }
    if (j.contains("fit")) {
        const auto &s = j.at("fit");
        check_keys(s, {"restarts", "max_iterations", "tolerance"}, "fit");
        read(s, "restarts", c.fit.restarts, "fit");
        read(s, "max_iterations", c.fit.nelder_mead.max_iterations, "fit");
        read(s, "tolerance", c.fit.nelder_mead.diameter_tol, "fit");
    }
    if (j.contains("peaks")) {
        const auto &s = j.at("peaks");
        check_keys(s, {"window", "k", "sd_mode"}, "peaks");
        read(s, "window", c.peaks.window_n, "peaks");
        read(s, "k", c.peaks.k, "peaks");
        std::string mode = "window_values";
        read(s, "sd_mode", mode, "peaks");
        if (mode == "window_values") c.peaks.sd_mode = peaks::SdMode::WindowValues;
        else if (mode == "rolling_average") c.peaks.sd_mode = peaks::SdMode::RollingAverage;
        else bad_config("peaks.sd_mode must be 'window_values' or 'rolling_average'");
    }
    if (j.contains("msar")) {
        const auto &s = j.at("msar");
        check_keys(s, {"ar_order", "growth", "restarts", "max_iterations", "tolerance"}, "msar");
        read(s, "ar_order", c.msar.ar_order, "msar");
        std::string growth = "yoy";
        read(s, "growth", growth, "msar");
        if (growth == "yoy") c.msar.growth = msar::GrowthMode::Yoy;
        else if (growth == "weekly") c.msar.growth = msar::GrowthMode::Weekly;
        else bad_config("msar.growth must be 'weekly' or 'yoy'");
        read(s, "restarts", c.msar.options.restarts, "msar");
        read(s, "max_iterations", c.msar.options.max_iterations, "msar");
        read(s, "tolerance", c.msar.options.rel_tol, "msar");
    }
    if (j.contains("backtest")) {
        const auto &s = j.at("backtest");
        check_keys(s, {"initial", "step", "horizon", "folds", "moving_average_windows", "ses_alpha"}, "backtest");
        read(s, "initial", c.backtest.initial_train_weeks, "backtest");
        read(s, "step", c.backtest.step_weeks, "backtest");
        read(s, "horizon", c.backtest.horizon_weeks, "backtest");
        read(s, "folds", c.backtest.n_folds, "backtest");
        read(s, "moving_average_windows", c.moving_average_windows, "backtest");
        read(s, "ses_alpha", c.ses_alpha, "backtest");
    }
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::from_file(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw_usage(kModule, "BadConfig", "cannot read config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string PipelineConfig::to_json() const {
    ojson j;
    j["seed"] = seed;
    j["output_dir"] = output_dir.string();
    j["input"] = {{"path", input_path ? input_path->string() : std::string{}},
                  {"metric_columns", ingest.metric_columns},
                  {"flag_columns", ingest.flag_columns},
                  {"interpolate_gaps", ingest.interpolate_gaps}};
    ojson metrics = ojson::array();
    for (const auto &m : synthetic.metrics) {
        metrics.push_back({{"name", m.name}, {"base_level", m.base_level}, {"annual_growth", m.annual_growth},
                           {"covid_sensitivity", m.covid_sensitivity}});
    }
    j["synthetic"] = {{"years", synthetic_years},
                      {"start", series::format_iso_week(synthetic.start)},
                      {"seasonal_amplitude", synthetic.seasonal_amplitude},
                      {"black_friday_multiplier", synthetic.black_friday_multiplier},
                      {"cyber_monday_multiplier", synthetic.cyber_monday_multiplier},
                      {"noise_sigma", synthetic.noise_sigma},
                      {"covid_shock", synthetic.covid_shock},
                      {"covid_start", series::format_iso_week(synthetic.covid_start)},
                      {"covid_weeks", synthetic.covid_weeks},
                      {"covid_level_shift", synthetic.covid_level_shift},
                      {"covid_spike", synthetic.covid_spike},
                      {"covid_decay", synthetic.covid_decay},
                      {"metrics", metrics}};
    j["target"] = target;
    ojson rows = ojson::array();
    for (const auto &r : summary_rows) rows.push_back({{"metric", r.metric}, {"label", r.label}});
    j["summary"] = {{"rows", rows}, {"ttm_metric", ttm_metric}, {"share_group", share_group}};
    j["scenario"] = {{"covid_positive_weeks", format_week_list(scenario.covid_positive_weeks)},
                     {"covid_negative_weeks", format_week_list(scenario.covid_negative_weeks)},
                     {"horizon_weeks", scenario.horizon_weeks}};
    j["scenarios"] = scenarios;
    j["without_covid_cutoff"] = series::format_iso_week(without_covid_cutoff);
    j["log_transform"] = log_transform;
    j["search"] = {{"mode", search.mode == auto_order::SearchMode::Stepwise ? "stepwise" : "exhaustive"},
                   {"max_p", search.max_p}, {"max_q", search.max_q}, {"max_P", search.max_P},
                   {"max_Q", search.max_Q}, {"d", search.d_set}, {"D", search.D_set},
                   {"s", search.s}, {"patience", search.stepwise_patience}};
    j["fit"] = {{"restarts", fit.restarts}, {"max_iterations", fit.nelder_mead.max_iterations},
                {"tolerance", fit.nelder_mead.diameter_tol}};
    j["peaks"] = {{"window", peaks.window_n}, {"k", peaks.k},
                  {"sd_mode", peaks.sd_mode == peaks::SdMode::WindowValues ? "window_values" : "rolling_average"}};
    j["msar"] = {{"ar_order", msar.ar_order}, {"growth", msar.growth == msar::GrowthMode::Yoy ? "yoy" : "weekly"},
                 {"restarts", msar.options.restarts}, {"max_iterations", msar.options.max_iterations},
                 {"tolerance", msar.options.rel_tol}};
    j["backtest"] = {{"initial", backtest.initial_train_weeks}, {"step", backtest.step_weeks},
                     {"horizon", backtest.horizon_weeks}, {"folds", backtest.n_folds},
                     {"moving_average_windows", moving_average_windows}, {"ses_alpha", ses_alpha}};
    return j.dump(2) + "\n";
}

void PipelineConfig::validate() const {
    scenario.validate();
    search.validate();
    peaks.validate();
    backtest.validate();
    if (scenarios.empty()) bad_config("at least one scenario is required");
    for (const auto &s : scenarios) {
        if (s != "with_covid" && s != "without_covid") bad_config("unknown scenario '" + s + "'");
    }
    if (std::set<std::string>(scenarios.begin(), scenarios.end()).size() != scenarios.size()) {
        bad_config("duplicate scenario");
    }
    if (!input_path && synthetic_years < 2) bad_config("synthetic.years must be >= 2");
    if (summary_rows.empty()) bad_config("summary.rows must not be empty");
    const auto in_rows = [&](const std::string &m) {
        return std::any_of(summary_rows.begin(), summary_rows.end(), [&](const auto &r) { return r.metric == m; });
    };
    if (!ttm_metric.empty() && !in_rows(ttm_metric)) bad_config("summary.ttm_metric must be one of the summary rows");
    for (const auto &m : share_group) {
        if (!in_rows(m)) bad_config("summary.share_group metric '" + m + "' is not a summary row");
    }
    if (msar.ar_order < 0 || msar.ar_order > 4) bad_config("msar.ar_order must lie in 0..4");
    if (msar.options.restarts < 1 || msar.options.max_iterations < 1) bad_config("msar restarts and iterations must be positive");
    if (fit.restarts < 0 || fit.nelder_mead.max_iterations < 1) bad_config("fit settings out of range");
    for (int w : moving_average_windows) {
        if (w < 1) bad_config("moving-average windows must be positive");
    }
    if (!(ses_alpha > 0.0 && ses_alpha <= 1.0)) bad_config("backtest.ses_alpha must lie in (0,1]");
}

io::Dataset load_data(const PipelineConfig &cfg) {
    if (cfg.input_path) return io::ingest_file(*cfg.input_path, cfg.ingest);
    return io::generate_synthetic(cfg.synthetic_years, cfg.seed, cfg.synthetic);
}

std::vector<series::FlagSeries> calendar_flags(series::Date first, int n, const series::ScenarioConfig &cfg,
                                               bool with_covid) {
    std::vector<series::FlagSeries> out;
    const auto peak = series::build_peak_flag(first, n);
    out.emplace_back("peak", first, peak.values());
    if (with_covid) {
        const auto covid = series::build_covid_flag(first, n, cfg);
        out.emplace_back("covid", first, covid.values());
    }
    return out;
}

eval::ModelSpec backtest_sarimax(const sarimax::SarimaOrder &order, bool log_space, const sarimax::FitOptions &opts) {
    const auto inner = eval::sarimax_spec(order, log_space, opts);
    return {inner.name, [inner](const series::WeeklySeries &train, std::span<const series::FlagSeries> ex_train,
                                std::span<const series::FlagSeries> ex_test, int horizon) {
                std::vector<series::FlagSeries> tr, te;
                for (std::size_t i = 0; i < ex_train.size(); ++i) {
                    if (!all_zero(ex_train[i])) {
                        tr.push_back(ex_train[i]);
                        te.push_back(ex_test[i]);
                    }
                }
                return inner.forecaster(train, tr, te, horizon);
            }};
}

FlagSet scenario_flags(const io::Dataset &data, std::size_t train_n, const PipelineConfig &cfg, bool with_covid,
                       int horizon) {
    if (data.metrics.empty() || train_n == 0 || train_n > data.metrics.front().size()) {
        throw_usage(kModule, "BadParameter", "training span outside the data");
    }
    const std::size_t n = data.metrics.front().size();
    const series::Date start = data.metrics.front().start_week();
    const series::Date next = start + days{7 * static_cast<long>(train_n)};
    FlagSet out;
    const auto cal = calendar_flags(start, static_cast<int>(train_n), cfg.scenario, with_covid);
    const auto cal_future = calendar_flags(next, horizon, cfg.scenario, with_covid);
    for (std::size_t i = 0; i < cal.size(); ++i) {
        if (all_zero(cal[i])) continue;
        out.history.push_back(cal[i]);
        out.future.push_back(cal_future[i]);
    }
    for (const auto &f : data.flags) {
        const auto tr = f.slice(0, train_n);
        if (all_zero(tr)) continue;
        out.history.push_back(tr);
        std::vector<int> fut(static_cast<std::size_t>(horizon), 0);
        for (std::size_t h = 0; h < fut.size() && train_n + h < n; ++h) fut[h] = f[train_n + h];
        out.future.emplace_back(f.name(), next, std::move(fut));
    }
    return out;
}

std::filesystem::path run_pipeline(const PipelineConfig &cfg) {
    cfg.validate();
    const io::Dataset data = load_data(cfg);
    const auto &target = data.metric(cfg.target);
    for (const auto &r : cfg.summary_rows) (void)data.metric(r.metric);
    const std::size_t n = target.size();
    const series::Date start = target.start_week();
    const int horizon = cfg.scenario.horizon_weeks;

    sarimax::FitOptions fit_opts = cfg.fit;
    fit_opts.seed = cfg.seed;

    Bundle bundle;
    bundle.add("config.json", cfg.to_json());
    {
        std::ostringstream os;
        io::write_dataset_csv(os, data);
        bundle.add("data.csv", os.str());
    }

    // regimes on the growth of the full target history
    const auto growth = msar::to_growth(target, cfg.msar.growth);
    msar::MsarOptions mopts = cfg.msar.options;
    mopts.seed = cfg.seed;
    const auto regimes = msar::fit_msar(growth, cfg.msar.ar_order, mopts);
    std::map<series::Date, double> regime_prob;
    for (std::size_t k = 0; k < regimes.smoothed.size(); ++k) {
        regime_prob[regimes.start + days{7 * static_cast<long>(k)}] = regimes.smoothed[k][1];
    }
    {
        std::ostringstream os;
        msar::write_regimes_csv(os, regimes);
        bundle.add("regimes.csv", os.str());
        ojson j;
        j["growth"] = cfg.msar.growth == msar::GrowthMode::Yoy ? "yoy" : "weekly";
        j["ar_order"] = regimes.ar_order;
        j["loglik"] = regimes.loglik;
        j["iterations"] = regimes.iterations;
        j["converged"] = regimes.converged;
        j["transition"] = {{"p00", regimes.trans.p00}, {"p01", regimes.trans.p01},
                           {"p10", regimes.trans.p10}, {"p11", regimes.trans.p11}};
        j["regimes"] = ojson::array();
        for (std::size_t r = 0; r < 2; ++r) {
            const auto &p = regimes.regimes[r];
            j["regimes"].push_back({{"label", r == 0 ? "Normal" : "COVID"}, {"intercept", p.intercept},
                                    {"ar", p.ar}, {"sigma2", p.sigma2}});
        }
        j["covid_runs"] = ojson::array();
        for (const auto &run : msar::regime_report(regimes, 0.5)) {
            j["covid_runs"].push_back({{"start", series::format_date(run.start)}, {"end", series::format_date(run.end)},
                                       {"weeks", run.last - run.first + 1}});
        }
        bundle.add("regimes.json", j.dump(2) + "\n");
    }

    std::optional<ScenarioRun> primary;
    for (const auto &scenario : cfg.scenarios) {
        const bool with_covid = scenario == "with_covid";
        std::size_t train_n = n;
        if (!with_covid) {
            const series::Date cut = series::monday_of(cfg.without_covid_cutoff);
            if (cut <= start || cut > target.end_week()) {
                throw_data(kModule, "CutoffOutsideData",
                           "without-COVID cutoff " + series::format_iso_week(cfg.without_covid_cutoff) +
                               " is not inside the data span");
            }
            train_n = static_cast<std::size_t>((cut - start).count() / 7);
        }
        const series::Date next = start + days{7 * static_cast<long>(train_n)};

        const auto fs = scenario_flags(data, train_n, cfg, with_covid, horizon);
        const auto &flags = fs.history;
        const auto &future = fs.future;

        auto prepare = [&](const series::WeeklySeries &m) {
            const auto tr = m.slice(0, train_n);
            return cfg.log_transform ? series::log_transform(tr) : tr;
        };
        const auto y = prepare(target);
        const auto search = auto_order::select_order(y, flags, cfg.search, fit_opts);
        const auto &model = search.best;
        const auto fd = sarimax::forecast(model, y, flags, future, horizon);
        std::vector<double> p50, p90;
        for (int h = 1; h <= horizon; ++h) {
            p50.push_back(sarimax::quantile(fd, h, 0.5));
            p90.push_back(sarimax::quantile(fd, h, 0.9));
        }
        const series::WeeklySeries p50_series(cfg.target + "_p50", next, p50);
        const auto scan = peaks::scan_peaks(p50_series, cfg.peaks);

        if (!primary) {
            primary = ScenarioRun{model.order, {}};
            for (const auto &f : flags) primary->flag_names.push_back(f.name());
        }

        const std::string dir = scenario + "/";
        {
            std::ostringstream os;
            os << "week_start,p50,p90,flagged\n";
            for (int h = 0; h < horizon; ++h) {
                const auto hu = static_cast<std::size_t>(h);
                os << series::format_date(p50_series.week_at(hu)) << ',' << num(p50[hu]) << ',' << num(p90[hu]) << ','
                   << (scan.flags[hu] ? 1 : 0) << '\n';
            }
            bundle.add(dir + "forecast.csv", os.str());
        }
        {
            std::ostringstream os;
            peaks::write_peaks_csv(os, p50_series, scan);
            bundle.add(dir + "peaks.csv", os.str());
        }
        {
            std::ostringstream os;
            auto_order::write_leaderboard_csv(os, search);
            bundle.add(dir + "leaderboard.csv", os.str());
        }
        bundle.add(dir + "model.json", io::model_to_json(model) + "\n");

        // summary: history plus P50 forecasts of every summary metric, same order and flags
        io::SummaryInputs sin;
        for (std::size_t r = 0; r < cfg.summary_rows.size(); ++r) {
            const auto &spec = cfg.summary_rows[r];
            const auto &metric = data.metric(spec.metric);
            std::vector<double> fc;
            if (spec.metric == cfg.target) {
                fc = p50;
            } else {
                const auto ym = prepare(metric);
                const auto mm = sarimax::fit(ym, flags, model.order, fit_opts);
                const auto mf = sarimax::forecast(mm, ym, flags, future, horizon);
                for (int h = 1; h <= horizon; ++h) fc.push_back(sarimax::quantile(mf, h, 0.5));
            }
            std::vector<double> joined(metric.values().begin(), metric.values().begin() + static_cast<long>(train_n));
            joined.insert(joined.end(), fc.begin(), fc.end());
            sin.metrics.emplace_back(spec.metric, start, std::move(joined));
            sin.labels.push_back(spec.label);
            if (spec.metric == cfg.ttm_metric) sin.ttm_metric = r;
        }
        for (const auto &m : cfg.share_group) {
            for (std::size_t r = 0; r < cfg.summary_rows.size(); ++r) {
                if (cfg.summary_rows[r].metric == m) {
                    sin.share_group.push_back(r);
                    break;
                }
            }
        }
        sin.forecast_start = next;
        const auto table = io::emit_summary(sin);
        {
            std::ostringstream os;
            io::write_summary_csv(os, table);
            bundle.add(dir + "summary.csv", os.str());
            bundle.add(dir + "summary.json", io::summary_to_json(table) + "\n");
        }

        // tidy plot file over the data span and the forecast span
        {
            const auto fitted = sarimax::fitted_values(model, y, flags);
            const std::size_t rows = std::max(n, train_n + static_cast<std::size_t>(horizon));
            std::ostringstream os;
            os << "week_start,actual,fitted,p50,p90,regime_prob,flags\n";
            for (std::size_t i = 0; i < rows; ++i) {
                const series::Date week = start + days{7 * static_cast<long>(i)};
                os << series::format_date(week) << ',' << (i < n ? num(target[i]) : std::string{}) << ',';
                if (i < train_n) os << num(cfg.log_transform ? std::exp(fitted[i]) : fitted[i]);
                os << ',';
                const bool in_fc = i >= train_n && i < train_n + static_cast<std::size_t>(horizon);
                if (in_fc) os << num(p50[i - train_n]) << ',' << num(p90[i - train_n]);
                else os << ',';
                os << ',';
                if (const auto it = regime_prob.find(week); it != regime_prob.end()) os << num(it->second);
                os << ',';
                std::string active;
                const auto &src = i < train_n ? flags : future;
                const std::size_t idx = i < train_n ? i : i - train_n;
                if (i < train_n || in_fc) {
                    for (const auto &f : src) {
                        if (f[idx] != 0) active += (active.empty() ? "" : ";") + f.name() + "=" + std::to_string(f[idx]);
                    }
                }
                os << active << '\n';
            }
            bundle.add(dir + "plot.csv", os.str());
        }
    }

    // rolling-origin backtest of the primary scenario's order against the baselines
    {
        std::vector<series::FlagSeries> flags;
        for (const auto &f : calendar_flags(start, static_cast<int>(n), cfg.scenario, true)) {
            if (std::find(primary->flag_names.begin(), primary->flag_names.end(), f.name()) != primary->flag_names.end()) {
                flags.push_back(f);
            }
        }
        for (const auto &f : data.flags) {
            if (std::find(primary->flag_names.begin(), primary->flag_names.end(), f.name()) != primary->flag_names.end()) {
                flags.push_back(f);
            }
        }
        std::vector<eval::ModelSpec> specs{eval::baseline_spec(eval::BaselineMethod::naive()),
                                           eval::baseline_spec(eval::BaselineMethod::seasonal_naive())};
        for (int w : cfg.moving_average_windows) specs.push_back(eval::baseline_spec(eval::BaselineMethod::moving_average(w)));
        specs.push_back(eval::baseline_spec(eval::BaselineMethod::ses(cfg.ses_alpha)));
        specs.push_back(eval::yoy_benchmark_spec());
        specs.push_back(backtest_sarimax(primary->order, cfg.log_transform, fit_opts));
        std::vector<eval::BacktestReport> reports;
        for (const auto &s : specs) reports.push_back(eval::backtest(target, flags, s, cfg.backtest));
        std::ostringstream csv, js;
        eval::write_backtest_csv(csv, target, reports);
        eval::write_backtest_json(js, target, reports);
        bundle.add("backtest.csv", csv.str());
        bundle.add("backtest.json", js.str());
    }

    return commit(bundle, cfg);
}

}  // namespace crisiscast::pipeline
