#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mlzero {

// One benchmark run of one agent on one dataset. valid mirrors the fixture
// column: a run without a metric value is invalid, but a valid run may still
// lack a time measurement.
struct RunRecord {
    std::string agent;
    std::string dataset;
    int run = 1;
    std::optional<double> metric_value;
    std::optional<double> time_seconds;
    bool valid = false;
};

// Direction row for one benchmark dataset.
struct BenchmarkDataset {
    std::string dataset;
    std::string metric;
    bool higher_is_better = true;
};

struct MedalThresholds {
    std::string dataset_id;
    double gold = 0.0;
    double silver = 0.0;
    double bronze = 0.0;
    double median = 0.0;
    bool higher_is_better = true;
};

// One leaderboard cell: an empty value is a failed dataset.
struct MedalResult {
    std::string method;
    std::string dataset_id;
    std::optional<double> value;
};

// Scoring description shipped next to a dataset (metadata.json).
struct DatasetMetadata {
    std::string dataset_name;
    std::string metric_name;
    std::string problem_type;
    std::string label_column;
    std::vector<std::string> modality;
};

enum class Medal { Gold, Silver, Bronze, AboveMedian, BelowMedian };

struct EvaluationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Prediction-format violation (wrong columns, wrong row count, wrong extension).
struct FormatError : EvaluationError {
    using EvaluationError::EvaluationError;
};

// Metric named in the metadata but not implemented here.
struct UnsupportedMetricError : EvaluationError {
    using EvaluationError::EvaluationError;
};

std::vector<RunRecord> load_run_records(const std::string& csv_path);
std::vector<BenchmarkDataset> load_benchmark_datasets(const std::string& csv_path);
std::vector<MedalThresholds> load_medal_thresholds(const std::string& csv_path);
std::vector<MedalResult> load_medal_results(const std::string& csv_path);
DatasetMetadata load_dataset_metadata(const std::string& json_path);

// Agents in first-appearance order; the fixtures keep the published row order.
std::vector<std::string> agents_in_order(const std::vector<RunRecord>& records);

// Percentage of valid (dataset, run) combinations out of |datasets| * runs_per_dataset,
// with the dataset universe taken across all agents in the records.
double success_rate(const std::vector<RunRecord>& records, const std::string& agent,
                    int runs_per_dataset = 3);

// Mean over datasets valid for both agents of mean-time(agent)/mean-time(reference).
// Empty when the two share no timed dataset.
std::optional<double> relative_time(const std::vector<RunRecord>& records,
                                    const std::string& agent,
                                    const std::string& reference_agent);

// How agents with no valid run on a dataset are ranked: sharing the
// tie-averaged bottom block, or each taking the worst position.
enum class InvalidRankPolicy { TieAveragedBottom, WorstPosition };

// Per-dataset direction-aware ranking with tie averaging, averaged over all
// datasets. Stored values for lower-is-better metrics may be raw or
// pre-negated; orientation uses -|value| so both land on the same scale.
std::map<std::string, double> average_rank(const std::vector<RunRecord>& records,
                                           const std::vector<std::string>& agents,
                                           const std::vector<BenchmarkDataset>& datasets,
                                           InvalidRankPolicy policy =
                                               InvalidRankPolicy::TieAveragedBottom);

// Compare against thresholds in the metric's better direction, meets-or-beats.
// negated_input says lower-is-better values were stored with a negative sign.
Medal classify_medal(double value, const MedalThresholds& thresholds, bool negated_input);

const char* medal_name(Medal medal);

struct MedalTally {
    int gold = 0;
    int silver = 0;
    int bronze = 0;
    int above_median = 0;
    int below_median = 0;
    int failed = 0;
    int total = 0;
};

MedalTally tally_medals(const std::vector<MedalResult>& results, const std::string& method,
                        const std::vector<MedalThresholds>& thresholds, bool negated_input);

// Line-by-line ordered comparison of a predictions file against ground truth.
// Enforces same extension, exact label-column name (a "predicted_" prefix is a
// format failure), and matching row counts. Implemented metrics: rmse, f1,
// f1_weighted, accuracy, r2; the remaining benchmark metrics raise
// UnsupportedMetricError.
double score_predictions(const std::string& results_file, const std::string& truth_file,
                         const DatasetMetadata& metadata);

struct AgentReportRow {
    std::string agent;
    double success = 0.0;
    double rank = 0.0;
    std::optional<double> rel_time;
};

// Success / Avg. Rank / Rel. Time per agent, reported in fixture row order
// with the published rounding (one decimal for success, two for the others).
std::vector<AgentReportRow> evaluate_benchmark(const std::vector<RunRecord>& records,
                                               const std::vector<BenchmarkDataset>& datasets,
                                               const std::string& reference_agent,
                                               InvalidRankPolicy policy =
                                                   InvalidRankPolicy::TieAveragedBottom);

std::string render_benchmark_report(const std::vector<AgentReportRow>& rows);

}  // namespace mlzero
