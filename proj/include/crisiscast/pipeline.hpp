#pragma once

#include "crisiscast/auto_order.hpp"
#include "crisiscast/eval.hpp"
#include "crisiscast/io.hpp"
#include "crisiscast/msar.hpp"
#include "crisiscast/peaks.hpp"
#include "crisiscast/sarimax.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

// End-to-end orchestration: data -> flags -> order search -> fit -> forecast -> peak scan
// -> regimes -> backtest -> summary, written atomically into one run directory.

namespace crisiscast::pipeline {

struct SummaryRowSpec {
    std::string metric;
    std::string label;
};

struct MsarSettings {
    int ar_order = 1;
    msar::GrowthMode growth = msar::GrowthMode::Yoy;
    msar::MsarOptions options;
};

struct PipelineConfig {
    std::uint64_t seed = 42;
    std::filesystem::path output_dir = "runs";

    std::optional<std::filesystem::path> input_path;  ///< unset: synthetic data
    io::IngestOptions ingest;
    int synthetic_years = 6;
    io::SyntheticParams synthetic;

    std::string target = "tpv";
    std::vector<SummaryRowSpec> summary_rows{{"buyers_new", "New"}, {"buyers_reengaged", "Reengaged"}, {"tpv", "TPV"}};
    std::string ttm_metric = "tpv";
    std::vector<std::string> share_group{"buyers_new", "buyers_reengaged"};

    series::ScenarioConfig scenario = series::ScenarioConfig::default_config();
    std::vector<std::string> scenarios{"with_covid", "without_covid"};
    series::IsoWeek without_covid_cutoff{2020, 1};  ///< first week excluded from without-COVID training
    bool log_transform = true;

    auto_order::SearchSpace search = [] {
        auto_order::SearchSpace s;
        s.mode = auto_order::SearchMode::Stepwise;
        return s;
    }();
    sarimax::FitOptions fit;
    peaks::PeakConfig peaks;
    MsarSettings msar;
    eval::BacktestPlan backtest;
    std::vector<int> moving_average_windows{2, 3, 4, 7};
    double ses_alpha = 0.3;

    /// Parses the JSON document; unknown keys and malformed values raise BadConfig (usage).
    static PipelineConfig from_json(const std::string &text);
    static PipelineConfig from_file(const std::filesystem::path &path);
    /// Fully resolved configuration, stable key order.
    [[nodiscard]] std::string to_json() const;
    void validate() const;
};

/// Input data per the config: the CSV when input_path is set, otherwise the seeded generator.
io::Dataset load_data(const PipelineConfig &cfg);

/// Weeks [first, first + n) of the peak and COVID flags.
std::vector<series::FlagSeries> calendar_flags(series::Date first, int n, const series::ScenarioConfig &cfg,
                                               bool with_covid);

struct FlagSet {
    std::vector<series::FlagSeries> history;
    std::vector<series::FlagSeries> future;
};

/// Calendar flags plus the dataset's flag columns over its first `train_n` weeks, and the `horizon`
/// weeks after them. Flags that are all zero in the history are dropped; flag columns are 0 past the data.
FlagSet scenario_flags(const io::Dataset &data, std::size_t train_n, const PipelineConfig &cfg, bool with_covid,
                       int horizon);

/// Fixed-order SARIMAX for backtests. Flags that are all zero in a fold's training window are dropped
/// for that fold: they carry no information and would make the regression singular.
eval::ModelSpec backtest_sarimax(const sarimax::SarimaOrder &order, bool log_space, const sarimax::FitOptions &opts);

/// Runs every stage and writes the bundle; returns the run directory.
/// Nothing is left in output_dir when a stage fails.
std::filesystem::path run_pipeline(const PipelineConfig &cfg);

}  // namespace crisiscast::pipeline
