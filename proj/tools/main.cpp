// crisiscast command-line front end.

#include "crisiscast/error.hpp"
#include "crisiscast/keywords.hpp"
#include "crisiscast/pipeline.hpp"
#include "crisiscast/varx.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace crisiscast;
namespace fs = std::filesystem;

namespace {

constexpr const char *kModule = "io-cli";

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

struct DataArgs {
    std::string input;
    std::string metric;
    std::vector<std::string> flag_columns;
    bool interpolate = false;
    bool no_covid = false;

    void attach(CLI::App *sub, bool with_metric = true) {
        sub->add_option("--input", input, "weekly CSV (default: synthetic data from the config)");
        if (with_metric) sub->add_option("--metric", metric, "metric column (default: config target)");
        sub->add_option("--flag-columns", flag_columns, "flag columns in the input")->delimiter(',');
        sub->add_flag("--interpolate", interpolate, "fill missing weeks linearly");
        sub->add_flag("--no-covid", no_covid, "omit the COVID calendar flag");
    }
};

pipeline::PipelineConfig load_config(const Globals &g) {
    auto cfg = g.config.empty() ? pipeline::PipelineConfig{} : pipeline::PipelineConfig::from_file(g.config);
    if (g.seed) cfg.seed = *g.seed;
    return cfg;
}

io::Dataset load(const pipeline::PipelineConfig &base, const DataArgs &a) {
    auto cfg = base;
    if (!a.input.empty()) cfg.input_path = a.input;
    if (!a.flag_columns.empty()) cfg.ingest.flag_columns = a.flag_columns;
    if (a.interpolate) cfg.ingest.interpolate_gaps = true;
    return pipeline::load_data(cfg);
}

fs::path out_dir(const Globals &g) { return g.out.empty() ? fs::path(".") : fs::path(g.out); }

void write_file(const Globals &g, const std::string &name, const std::string &content) {
    const fs::path dir = out_dir(g);
    std::error_code ec;
    fs::create_directories(dir, ec);
    const fs::path p = dir / name;
    std::ofstream os(p, std::ios::binary);
    os << content;
    if (!os) throw_data(kModule, "OutputError", "cannot write '" + p.string() + "'");
    std::cout << "wrote " << p.string() << '\n';
}

template <class Fn>
std::string render(Fn &&fn) {
    std::ostringstream os;
    fn(os);
    return os.str();
}

std::string num(double v) {
    if (!std::isfinite(v)) return {};
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

sarimax::SarimaOrder parse_order(const std::string &text) {
    std::vector<int> v;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        try {
            v.push_back(std::stoi(part));
        } catch (const std::exception &) {
            throw_usage(kModule, "BadParameter", "order must be p,d,q,P,D,Q[,s]");
        }
    }
    if (v.size() != 6 && v.size() != 7) throw_usage(kModule, "BadParameter", "order must be p,d,q,P,D,Q[,s]");
    sarimax::SarimaOrder o{v[0], v[1], v[2], v[3], v[4], v[5], v.size() == 7 ? v[6] : 52};
    o.validate();
    return o;
}

series::WeeklySeries model_scale(const series::WeeklySeries &y, bool log_space) {
    return log_space ? series::log_transform(y) : y;
}

/// Flags in the order a fitted model names them.
std::vector<series::FlagSeries> pick(const std::vector<series::FlagSeries> &all, const std::vector<std::string> &names) {
    std::vector<series::FlagSeries> out;
    for (const auto &n : names) {
        const auto it = std::find_if(all.begin(), all.end(), [&](const auto &f) { return f.name() == n; });
        if (it == all.end()) throw_data(kModule, "MissingColumn", "model needs flag '" + n + "'");
        out.push_back(*it);
    }
    return out;
}

keywords::Corpus read_corpus(const std::string &path) {
    std::ifstream is(path);
    if (!is) throw_data(kModule, "IngestError", "cannot open corpus '" + path + "'");
    return keywords::Corpus::from_lines(is);
}

std::string forecast_csv(const series::WeeklySeries &p50, const std::vector<double> &p90, const peaks::PeakScanResult &scan) {
    std::ostringstream os;
    os << "week_start,p50,p90,flagged\n";
    for (std::size_t h = 0; h < p50.size(); ++h) {
        os << series::format_date(p50.week_at(h)) << ',' << num(p50[h]) << ',' << num(p90[h]) << ','
           << (scan.flags[h] ? 1 : 0) << '\n';
    }
    return os.str();
}

int run(int argc, char **argv) {
    CLI::App app{"Crisis-aware weekly retail forecasting"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "JSON configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "random seed (overrides the config)");
    app.add_option("--out", g.out, "output directory");

    // ingest
    DataArgs ingest_args;
    auto *ingest = app.add_subcommand("ingest", "validate a weekly CSV and write the normalized dataset");
    ingest_args.attach(ingest, false);
    ingest->callback([&] {
        if (ingest_args.input.empty()) throw_usage(kModule, "BadParameter", "ingest needs --input");
        const auto d = load(load_config(g), ingest_args);
        const auto &first = d.metrics.front();
        std::cout << d.metrics.size() << " metrics, " << d.flags.size() << " flags, " << first.size() << " weeks from "
                  << series::format_date(first.start_week()) << " to " << series::format_date(first.end_week()) << '\n';
        write_file(g, "dataset.csv", render([&](std::ostream &os) { io::write_dataset_csv(os, d); }));
    });

    // generate
    int years = 0;
    auto *generate = app.add_subcommand("generate", "write seeded synthetic weekly data");
    generate->add_option("--years", years, "ISO years to generate (default: config)");
    generate->callback([&] {
        const auto cfg = load_config(g);
        const auto d = io::generate_synthetic(years > 0 ? years : cfg.synthetic_years, cfg.seed, cfg.synthetic);
        write_file(g, "synthetic.csv", render([&](std::ostream &os) { io::write_dataset_csv(os, d); }));
    });

    // fit
    DataArgs fit_args;
    std::string fit_method = "sarimax", fit_order;
    std::vector<std::string> varx_metrics;
    int varx_lags = 1;
    auto *fit = app.add_subcommand("fit", "fit a fixed-order SARIMAX, or a VARX on several metrics");
    fit_args.attach(fit);
    fit->add_option("--method", fit_method, "sarimax or varx")->check(CLI::IsMember({"sarimax", "varx"}));
    fit->add_option("--order", fit_order, "p,d,q,P,D,Q[,s] for SARIMAX");
    fit->add_option("--metrics", varx_metrics, "VARX metrics")->delimiter(',');
    fit->add_option("--lags", varx_lags, "VARX lag order");
    fit->callback([&] {
        const auto cfg = load_config(g);
        const auto d = load(cfg, fit_args);
        if (fit_method == "varx") {
            varx::MultiSeries ms;
            for (const auto &m : varx_metrics) ms.components.push_back(d.metric(m));
            const auto prepared = varx::prepare(ms);
            const std::size_t lost = ms.length() - prepared.length();
            const int horizon = cfg.scenario.horizon_weeks;
            const auto all = pipeline::scenario_flags(d, d.metrics.front().size(), cfg, !fit_args.no_covid, horizon);
            // flags aligned with the differenced span; drop those left constant at zero
            std::vector<series::FlagSeries> hist, fut;
            for (std::size_t i = 0; i < all.history.size(); ++i) {
                const auto h = all.history[i].slice(lost, prepared.length());
                if (std::any_of(h.values().begin(), h.values().end(), [](int v) { return v != 0; })) {
                    hist.push_back(h);
                    fut.push_back(all.future[i]);
                }
            }
            const auto vf = varx::fit_varx(prepared, hist, varx_lags);
            std::cout << "spectral radius " << num(vf.spectral_radius()) << '\n';
            const auto fc = varx::forecast_varx(vf, ms, fut, horizon);
            if (fc.nonstationary) std::cerr << "warning: VARX companion matrix is not stable\n";
            write_file(g, "varx_coefficients.csv", render([&](std::ostream &os) { varx::write_coefficients_csv(os, vf); }));
            write_file(g, "varx_forecast.csv", render([&](std::ostream &os) {
                           os << "week_start";
                           for (const auto &m : fc.means) os << ',' << m.name();
                           os << '\n';
                           for (std::size_t h = 0; h < fc.means.front().size(); ++h) {
                               os << series::format_date(fc.means.front().week_at(h));
                               for (const auto &m : fc.means) os << ',' << num(m[h]);
                               os << '\n';
                           }
                       }));
            return;
        }
        if (fit_order.empty()) throw_usage(kModule, "BadParameter", "fit needs --order (or use autofit)");
        const auto fs = pipeline::scenario_flags(d, d.metrics.front().size(), cfg, !fit_args.no_covid, 1);
        const auto &y = d.metric(fit_args.metric.empty() ? cfg.target : fit_args.metric);
        auto opts = cfg.fit;
        opts.seed = cfg.seed;
        const auto m = sarimax::fit(model_scale(y, cfg.log_transform), fs.history, parse_order(fit_order), opts);
        std::cout << "loglik " << num(m.loglik) << "  AICc " << num(m.aicc) << '\n';
        write_file(g, "model.json", io::model_to_json(m) + "\n");
    });

    // autofit
    DataArgs auto_args;
    std::string auto_mode;
    auto *autofit = app.add_subcommand("autofit", "search SARIMAX orders by AICc");
    auto_args.attach(autofit);
    autofit->add_option("--mode", auto_mode, "stepwise or exhaustive")->check(CLI::IsMember({"stepwise", "exhaustive"}));
    autofit->callback([&] {
        auto cfg = load_config(g);
        if (auto_mode == "stepwise") cfg.search.mode = auto_order::SearchMode::Stepwise;
        if (auto_mode == "exhaustive") cfg.search.mode = auto_order::SearchMode::Exhaustive;
        const auto d = load(cfg, auto_args);
        const auto fs = pipeline::scenario_flags(d, d.metrics.front().size(), cfg, !auto_args.no_covid, 1);
        const auto &y = d.metric(auto_args.metric.empty() ? cfg.target : auto_args.metric);
        auto opts = cfg.fit;
        opts.seed = cfg.seed;
        const auto r = auto_order::select_order(model_scale(y, cfg.log_transform), fs.history, cfg.search, opts);
        const auto &o = r.best.order;
        std::cout << "selected (" << o.p << ',' << o.d << ',' << o.q << ")(" << o.P << ',' << o.D << ',' << o.Q << ")["
                  << o.s << "]  AICc " << num(r.best.aicc) << '\n';
        write_file(g, "leaderboard.csv", render([&](std::ostream &os) { auto_order::write_leaderboard_csv(os, r); }));
        write_file(g, "model.json", io::model_to_json(r.best) + "\n");
    });

    // forecast
    DataArgs fc_args;
    std::string fc_model;
    int fc_horizon = 0;
    auto *forecast = app.add_subcommand("forecast", "P50/P90 forecast from a saved model, with the peak scan");
    fc_args.attach(forecast);
    forecast->add_option("--model", fc_model, "model.json from fit or autofit")->required()->check(CLI::ExistingFile);
    forecast->add_option("--horizon", fc_horizon, "weeks ahead (default: config)");
    forecast->callback([&] {
        const auto cfg = load_config(g);
        const auto d = load(cfg, fc_args);
        std::ifstream is(fc_model);
        std::stringstream text;
        text << is.rdbuf();
        const auto m = io::model_from_json(text.str());
        const int horizon = fc_horizon > 0 ? fc_horizon : cfg.scenario.horizon_weeks;
        const auto &y = d.metric(fc_args.metric.empty() ? cfg.target : fc_args.metric);
        const auto fs = pipeline::scenario_flags(d, y.size(), cfg, !fc_args.no_covid, horizon);
        const auto hist = pick(fs.history, m.exog_names);
        const auto fut = pick(fs.future, m.exog_names);
        const auto fd = sarimax::forecast(m, model_scale(y, m.log_space), hist, fut, horizon);
        std::vector<double> p50, p90;
        for (int h = 1; h <= horizon; ++h) {
            p50.push_back(sarimax::quantile(fd, h, 0.5));
            p90.push_back(sarimax::quantile(fd, h, 0.9));
        }
        const series::WeeklySeries p50s(y.name() + "_p50", y.end_week() + std::chrono::days{7}, p50);
        const auto scan = peaks::scan_peaks(p50s, cfg.peaks);
        write_file(g, "forecast.csv", forecast_csv(p50s, p90, scan));
        write_file(g, "peaks.csv", render([&](std::ostream &os) { peaks::write_peaks_csv(os, p50s, scan); }));
    });

    // peaks
    DataArgs peak_args;
    auto *peak = app.add_subcommand("peaks", "flag and damp spikes in a weekly series");
    peak_args.attach(peak);
    peak->callback([&] {
        const auto cfg = load_config(g);
        const auto d = load(cfg, peak_args);
        const auto &y = d.metric(peak_args.metric.empty() ? cfg.target : peak_args.metric);
        const auto scan = peaks::scan_peaks(y, cfg.peaks);
        std::cout << std::count(scan.flags.begin(), scan.flags.end(), true) << " weeks flagged\n";
        write_file(g, "peaks.csv", render([&](std::ostream &os) { peaks::write_peaks_csv(os, y, scan); }));
    });

    // regimes
    DataArgs reg_args;
    auto *regimes = app.add_subcommand("regimes", "two-regime Markov-switching AR on growth rates");
    reg_args.attach(regimes);
    regimes->callback([&] {
        const auto cfg = load_config(g);
        const auto d = load(cfg, reg_args);
        const auto &y = d.metric(reg_args.metric.empty() ? cfg.target : reg_args.metric);
        auto opts = cfg.msar.options;
        opts.seed = cfg.seed;
        const auto r = msar::fit_msar(msar::to_growth(y, cfg.msar.growth), cfg.msar.ar_order, opts);
        std::cout << "loglik " << num(r.loglik) << "  p00 " << num(r.trans.p00) << "  p11 " << num(r.trans.p11) << '\n';
        for (const auto &run : msar::regime_report(r, 0.5)) {
            std::cout << "COVID regime " << series::format_date(run.start) << " .. " << series::format_date(run.end) << '\n';
        }
        write_file(g, "regimes.csv", render([&](std::ostream &os) { msar::write_regimes_csv(os, r); }));
    });

    // keywords
    std::string corpus, seeds_path, emb_path, recent_path, baseline_path;
    keywords::LdaOptions lda;
    keywords::ScoreOptions score;
    double holdout = 0.0;
    auto *kw = app.add_subcommand("keywords", "topic model and score search terms");
    kw->add_option("--corpus", corpus, "one document per line")->required()->check(CLI::ExistingFile);
    kw->add_option("--seeds", seeds_path, "term,score seed tags")->check(CLI::ExistingFile);
    kw->add_option("--embeddings", emb_path, "term followed by vector components")->check(CLI::ExistingFile);
    kw->add_option("--recent", recent_path, "recent corpus for trend ratios")->check(CLI::ExistingFile);
    kw->add_option("--baseline", baseline_path, "baseline corpus for trend ratios")->check(CLI::ExistingFile);
    kw->add_option("--topics", lda.topics, "number of topics");
    kw->add_option("--iterations", lda.iterations, "Gibbs sweeps");
    kw->add_option("--lambda", score.lambda, "relevance weight");
    kw->add_option("--neighbors", score.neighbors, "seed neighbours for essentiality");
    kw->add_option("--min-count", score.min_count, "trend count floor");
    kw->add_option("--holdout", holdout, "fraction of documents held out for perplexity");
    kw->callback([&] {
        const auto cfg = load_config(g);
        auto c = read_corpus(corpus);
        std::optional<keywords::Corpus> held;
        if (holdout > 0.0) {
            auto [train, test] = keywords::split_corpus(c, holdout, cfg.seed);
            c = std::move(train);
            held = std::move(test);
        }
        lda.seed = cfg.seed;
        const auto m = keywords::fit_lda(c, lda);
        if (held) std::cout << "held-out perplexity " << num(keywords::heldout_perplexity(m, *held, 50, cfg.seed)) << '\n';
        keywords::SeedTags seeds;
        keywords::EmbeddingTable emb;
        if (!seeds_path.empty()) {
            std::ifstream is(seeds_path);
            seeds = keywords::read_seed_tags(is);
        }
        if (!emb_path.empty()) {
            std::ifstream is(emb_path);
            emb = keywords::read_embeddings(is);
        }
        if (recent_path.empty() != baseline_path.empty()) {
            throw_usage(kModule, "BadParameter", "--recent and --baseline go together");
        }
        std::optional<keywords::Corpus> recent, baseline;
        if (!recent_path.empty()) {
            recent = read_corpus(recent_path);
            baseline = read_corpus(baseline_path);
        }
        const auto rows = keywords::score_terms(m, c, seeds, emb, recent ? &*recent : nullptr,
                                                baseline ? &*baseline : nullptr, score);
        write_file(g, "keywords.csv", render([&](std::ostream &os) { keywords::write_scores_csv(os, rows); }));
    });

    // backtest
    DataArgs bt_args;
    std::string bt_order;
    auto *bt = app.add_subcommand("backtest", "rolling-origin comparison against baselines and the YoY benchmark");
    bt_args.attach(bt);
    bt->add_option("--order", bt_order, "SARIMAX order p,d,q,P,D,Q[,s] to include");
    bt->callback([&] {
        const auto cfg = load_config(g);
        const auto d = load(cfg, bt_args);
        const auto &y = d.metric(bt_args.metric.empty() ? cfg.target : bt_args.metric);
        const auto fs = pipeline::scenario_flags(d, y.size(), cfg, !bt_args.no_covid, 1);
        std::vector<eval::ModelSpec> specs{eval::baseline_spec(eval::BaselineMethod::naive()),
                                           eval::baseline_spec(eval::BaselineMethod::seasonal_naive())};
        for (int w : cfg.moving_average_windows) specs.push_back(eval::baseline_spec(eval::BaselineMethod::moving_average(w)));
        specs.push_back(eval::baseline_spec(eval::BaselineMethod::ses(cfg.ses_alpha)));
        specs.push_back(eval::yoy_benchmark_spec());
        std::vector<series::FlagSeries> flags;
        if (!bt_order.empty()) {
            auto opts = cfg.fit;
            opts.seed = cfg.seed;
            specs.push_back(pipeline::backtest_sarimax(parse_order(bt_order), cfg.log_transform, opts));
            flags = fs.history;
        }
        std::vector<eval::BacktestReport> reports;
        for (const auto &s : specs) reports.push_back(eval::backtest(y, flags, s, cfg.backtest));
        write_file(g, "backtest.csv", render([&](std::ostream &os) { eval::write_backtest_csv(os, y, reports); }));
        write_file(g, "backtest.json", render([&](std::ostream &os) { eval::write_backtest_json(os, y, reports); }));
    });

    // report
    DataArgs rep_args;
    auto *report = app.add_subcommand("report", "yearly summary table of the history");
    rep_args.attach(report, false);
    report->callback([&] {
        const auto cfg = load_config(g);
        const auto d = load(cfg, rep_args);
        io::SummaryInputs in;
        for (std::size_t r = 0; r < cfg.summary_rows.size(); ++r) {
            in.metrics.push_back(d.metric(cfg.summary_rows[r].metric));
            in.labels.push_back(cfg.summary_rows[r].label);
            if (cfg.summary_rows[r].metric == cfg.ttm_metric) in.ttm_metric = r;
            if (std::find(cfg.share_group.begin(), cfg.share_group.end(), cfg.summary_rows[r].metric) != cfg.share_group.end()) {
                in.share_group.push_back(r);
            }
        }
        const auto t = io::emit_summary(in);
        write_file(g, "summary.csv", render([&](std::ostream &os) { io::write_summary_csv(os, t); }));
        write_file(g, "summary.json", io::summary_to_json(t) + "\n");
    });

    // pipeline
    std::string pipe_input;
    auto *pipe = app.add_subcommand("pipeline", "run every stage into a fresh run directory");
    pipe->add_option("--input", pipe_input, "weekly CSV (default: synthetic data)");
    pipe->callback([&] {
        auto cfg = load_config(g);
        if (!g.out.empty()) cfg.output_dir = g.out;
        if (!pipe_input.empty()) cfg.input_path = pipe_input;
        std::cout << pipeline::run_pipeline(cfg).string() << '\n';
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char **argv) {
    try {
        return run(argc, argv);
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
