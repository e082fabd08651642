#include "mlzero/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mlzero/strings.hpp"

namespace fs = std::filesystem;

namespace mlzero {

namespace {

// Minimal CSV: comma-separated, optional double-quoted fields with "" escapes.
std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(current);
            current.clear();
        } else if (c != '\r') {
            current += c;
        }
    }
    fields.push_back(current);
    return fields;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return static_cast<int>(i);
        }
        throw EvaluationError("missing column: " + name);
    }
};

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw EvaluationError("cannot open " + path);
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() && in.peek() == EOF) break;
        auto fields = split_csv_row(line);
        if (first) {
            table.header = fields;
            first = false;
        } else {
            table.rows.push_back(fields);
        }
    }
    if (first) throw EvaluationError("empty csv: " + path);
    return table;
}

std::optional<double> parse_optional_real(const std::string& text) {
    std::string t = trim(text);
    if (t.empty()) return std::nullopt;
    return std::stod(t);
}

bool parse_csv_bool(const std::string& text, const std::string& path) {
    std::string t = to_lower(trim(text));
    if (t == "true") return true;
    if (t == "false") return false;
    throw EvaluationError("bad boolean '" + text + "' in " + path);
}

double mean(const std::vector<double>& values) {
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

double round_to(double value, int decimals) {
    double scale = std::pow(10.0, decimals);
    return std::round(value * scale) / scale;
}

}  // namespace

std::vector<RunRecord> load_run_records(const std::string& csv_path) {
    CsvTable table = read_csv(csv_path);
    const int agent = table.column("agent");
    const int dataset = table.column("dataset");
    const int run = table.column("run");
    const int value = table.column("value");
    const int time = table.column("time");
    const int valid = table.column("valid");

    std::vector<RunRecord> records;
    records.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        RunRecord record;
        record.agent = row[agent];
        record.dataset = row[dataset];
        record.run = std::stoi(row[run]);
        record.metric_value = parse_optional_real(row[value]);
        record.time_seconds = parse_optional_real(row[time]);
        record.valid = parse_csv_bool(row[valid], csv_path);
        if (record.valid != record.metric_value.has_value()) {
            throw EvaluationError("validity disagrees with value presence for " + record.agent +
                                  "/" + record.dataset + " run " + row[run]);
        }
        records.push_back(std::move(record));
    }
    return records;
}

std::vector<BenchmarkDataset> load_benchmark_datasets(const std::string& csv_path) {
    CsvTable table = read_csv(csv_path);
    const int dataset = table.column("dataset");
    const int metric = table.column("metric");
    const int higher = table.column("higher_is_better");

    std::vector<BenchmarkDataset> datasets;
    datasets.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        datasets.push_back({row[dataset], row[metric], parse_csv_bool(row[higher], csv_path)});
    }
    return datasets;
}

std::vector<MedalThresholds> load_medal_thresholds(const std::string& csv_path) {
    CsvTable table = read_csv(csv_path);
    const int id = table.column("dataset_id");
    const int gold = table.column("gold");
    const int silver = table.column("silver");
    const int bronze = table.column("bronze");
    const int median = table.column("median");
    const int higher = table.column("higher_is_better");

    std::vector<MedalThresholds> thresholds;
    thresholds.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        MedalThresholds t;
        t.dataset_id = row[id];
        t.gold = std::stod(row[gold]);
        t.silver = std::stod(row[silver]);
        t.bronze = std::stod(row[bronze]);
        t.median = std::stod(row[median]);
        t.higher_is_better = parse_csv_bool(row[higher], csv_path);
        thresholds.push_back(std::move(t));
    }
    return thresholds;
}

std::vector<MedalResult> load_medal_results(const std::string& csv_path) {
    CsvTable table = read_csv(csv_path);
    const int method = table.column("method");
    const int id = table.column("dataset_id");
    const int value = table.column("value");

    std::vector<MedalResult> results;
    results.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        results.push_back({row[method], row[id], parse_optional_real(row[value])});
    }
    return results;
}

DatasetMetadata load_dataset_metadata(const std::string& json_path) {
    std::ifstream in(json_path, std::ios::binary);
    if (!in) throw EvaluationError("cannot open " + json_path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw EvaluationError("bad metadata json: " + std::string(e.what()));
    }
    DatasetMetadata meta;
    meta.dataset_name = doc.value("dataset_name", "");
    meta.metric_name = doc.value("metric_name", "");
    meta.problem_type = doc.value("problem_type", "");
    meta.label_column = doc.value("label_column", "");
    if (doc.contains("modality")) {
        for (const auto& m : doc["modality"]) meta.modality.push_back(m.get<std::string>());
    }
    if (meta.metric_name.empty()) throw EvaluationError("metadata missing metric_name");
    if (meta.label_column.empty()) throw EvaluationError("metadata missing label_column");
    return meta;
}

std::vector<std::string> agents_in_order(const std::vector<RunRecord>& records) {
    std::vector<std::string> agents;
    std::set<std::string> seen;
    for (const auto& record : records) {
        if (seen.insert(record.agent).second) agents.push_back(record.agent);
    }
    return agents;
}

double success_rate(const std::vector<RunRecord>& records, const std::string& agent,
                    int runs_per_dataset) {
    std::set<std::string> datasets;
    int valid = 0;
    for (const auto& record : records) {
        datasets.insert(record.dataset);
        if (record.agent == agent && record.valid) ++valid;
    }
    if (datasets.empty()) return 0.0;
    return static_cast<double>(valid) /
           (static_cast<double>(datasets.size()) * runs_per_dataset) * 100.0;
}

std::optional<double> relative_time(const std::vector<RunRecord>& records,
                                    const std::string& agent,
                                    const std::string& reference_agent) {
    std::map<std::string, std::vector<double>> agent_times;
    std::map<std::string, std::vector<double>> reference_times;
    for (const auto& record : records) {
        if (!record.valid || !record.time_seconds) continue;
        if (record.agent == agent) agent_times[record.dataset].push_back(*record.time_seconds);
        if (record.agent == reference_agent) {
            reference_times[record.dataset].push_back(*record.time_seconds);
        }
    }
    double sum = 0.0;
    int common = 0;
    for (const auto& [dataset, times] : agent_times) {
        auto it = reference_times.find(dataset);
        if (it == reference_times.end()) continue;
        sum += mean(times) / mean(it->second);
        ++common;
    }
    if (common == 0) return std::nullopt;
    return sum / common;
}

std::map<std::string, double> average_rank(const std::vector<RunRecord>& records,
                                           const std::vector<std::string>& agents,
                                           const std::vector<BenchmarkDataset>& datasets,
                                           InvalidRankPolicy policy) {
    std::map<std::pair<std::string, std::string>, std::vector<double>> values;
    for (const auto& record : records) {
        if (record.valid) values[{record.agent, record.dataset}].push_back(*record.metric_value);
    }

    std::map<std::string, double> totals;
    for (const auto& agent : agents) totals[agent] = 0.0;

    const double n_agents = static_cast<double>(agents.size());
    for (const auto& dataset : datasets) {
        // Oriented score: loss metrics are nonnegative, so -|v| puts raw and
        // pre-negated cells on the same descending scale.
        std::vector<std::pair<std::string, double>> oriented;
        std::vector<std::string> invalid;
        for (const auto& agent : agents) {
            auto it = values.find({agent, dataset.dataset});
            if (it == values.end()) {
                invalid.push_back(agent);
                continue;
            }
            const double score = mean(it->second);
            oriented.emplace_back(agent, dataset.higher_is_better ? score : -std::fabs(score));
        }
        std::stable_sort(oriented.begin(), oriented.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });

        size_t i = 0;
        while (i < oriented.size()) {
            size_t j = i;
            while (j + 1 < oriented.size() && oriented[j + 1].second == oriented[i].second) ++j;
            const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
            for (size_t k = i; k <= j; ++k) totals[oriented[k].first] += rank;
            i = j + 1;
        }

        const double n_valid = static_cast<double>(oriented.size());
        for (const auto& agent : invalid) {
            totals[agent] += policy == InvalidRankPolicy::TieAveragedBottom
                                 ? (n_valid + 1.0 + n_agents) / 2.0
                                 : n_agents;
        }
    }

    std::map<std::string, double> averages;
    for (const auto& agent : agents) {
        averages[agent] = totals[agent] / static_cast<double>(datasets.size());
    }
    return averages;
}

Medal classify_medal(double value, const MedalThresholds& thresholds, bool negated_input) {
    double v = value;
    if (negated_input && !thresholds.higher_is_better) v = -v;
    auto beats = [&](double threshold) {
        return thresholds.higher_is_better ? v >= threshold : v <= threshold;
    };
    if (beats(thresholds.gold)) return Medal::Gold;
    if (beats(thresholds.silver)) return Medal::Silver;
    if (beats(thresholds.bronze)) return Medal::Bronze;
    if (beats(thresholds.median)) return Medal::AboveMedian;
    return Medal::BelowMedian;
}

const char* medal_name(Medal medal) {
    switch (medal) {
        case Medal::Gold: return "gold";
        case Medal::Silver: return "silver";
        case Medal::Bronze: return "bronze";
        case Medal::AboveMedian: return "above_median";
        case Medal::BelowMedian: return "below_median";
    }
    return "unknown";
}

MedalTally tally_medals(const std::vector<MedalResult>& results, const std::string& method,
                        const std::vector<MedalThresholds>& thresholds, bool negated_input) {
    std::map<std::string, const MedalThresholds*> by_id;
    for (const auto& t : thresholds) by_id[t.dataset_id] = &t;

    MedalTally tally;
    for (const auto& result : results) {
        if (result.method != method) continue;
        ++tally.total;
        if (!result.value) {
            ++tally.failed;
            continue;
        }
        auto it = by_id.find(result.dataset_id);
        if (it == by_id.end()) {
            throw EvaluationError("no thresholds for dataset " + result.dataset_id);
        }
        switch (classify_medal(*result.value, *it->second, negated_input)) {
            case Medal::Gold: ++tally.gold; break;
            case Medal::Silver: ++tally.silver; break;
            case Medal::Bronze: ++tally.bronze; break;
            case Medal::AboveMedian: ++tally.above_median; break;
            case Medal::BelowMedian: ++tally.below_median; break;
        }
    }
    return tally;
}

namespace {

double parse_numeric_cell(const std::string& text, const std::string& column) {
    try {
        size_t consumed = 0;
        double v = std::stod(trim(text), &consumed);
        if (consumed != trim(text).size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw FormatError("non-numeric value '" + text + "' in column " + column);
    }
}

double rmse(const std::vector<double>& predicted, const std::vector<double>& truth) {
    double sum = 0.0;
    for (size_t i = 0; i < truth.size(); ++i) {
        const double d = predicted[i] - truth[i];
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(truth.size()));
}

double r2(const std::vector<double>& predicted, const std::vector<double>& truth) {
    const double truth_mean = mean(truth);
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (size_t i = 0; i < truth.size(); ++i) {
        ss_res += (truth[i] - predicted[i]) * (truth[i] - predicted[i]);
        ss_tot += (truth[i] - truth_mean) * (truth[i] - truth_mean);
    }
    if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
    return 1.0 - ss_res / ss_tot;
}

double accuracy(const std::vector<std::string>& predicted, const std::vector<std::string>& truth) {
    size_t hits = 0;
    for (size_t i = 0; i < truth.size(); ++i) {
        if (predicted[i] == truth[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double f1_for_class(const std::vector<std::string>& predicted,
                    const std::vector<std::string>& truth, const std::string& positive) {
    double tp = 0.0, fp = 0.0, fn = 0.0;
    for (size_t i = 0; i < truth.size(); ++i) {
        const bool p = predicted[i] == positive;
        const bool t = truth[i] == positive;
        if (p && t) ++tp;
        else if (p && !t) ++fp;
        else if (!p && t) ++fn;
    }
    if (tp == 0.0) return 0.0;
    const double precision = tp / (tp + fp);
    const double recall = tp / (tp + fn);
    return 2.0 * precision * recall / (precision + recall);
}

double binary_f1(const std::vector<std::string>& predicted,
                 const std::vector<std::string>& truth) {
    std::set<std::string> classes(truth.begin(), truth.end());
    std::string positive;
    if (classes.count("1")) positive = "1";
    else positive = *classes.rbegin();
    return f1_for_class(predicted, truth, positive);
}

double weighted_f1(const std::vector<std::string>& predicted,
                   const std::vector<std::string>& truth) {
    std::map<std::string, size_t> support;
    for (const auto& label : truth) ++support[label];
    double sum = 0.0;
    for (const auto& [label, count] : support) {
        sum += f1_for_class(predicted, truth, label) * static_cast<double>(count);
    }
    return sum / static_cast<double>(truth.size());
}

}  // namespace

double score_predictions(const std::string& results_file, const std::string& truth_file,
                         const DatasetMetadata& metadata) {
    const std::string results_ext = fs::path(results_file).extension().string();
    const std::string truth_ext = fs::path(truth_file).extension().string();
    if (results_ext != truth_ext) {
        throw FormatError("results extension '" + results_ext + "' does not match test data '" +
                          truth_ext + "'");
    }

    CsvTable results = read_csv(results_file);
    CsvTable truth = read_csv(truth_file);

    const std::string& label = metadata.label_column;
    for (const auto& column : results.header) {
        if (starts_with(column, "predicted_")) {
            throw FormatError("prediction column '" + column + "' carries a predicted_ prefix");
        }
    }
    int results_col = -1;
    for (size_t i = 0; i < results.header.size(); ++i) {
        if (results.header[i] == label) results_col = static_cast<int>(i);
    }
    if (results_col < 0) {
        throw FormatError("results file lacks the label column '" + label + "'");
    }
    const int truth_col = truth.column(label);

    if (results.rows.size() != truth.rows.size()) {
        throw FormatError("row count mismatch: results " + std::to_string(results.rows.size()) +
                          " vs truth " + std::to_string(truth.rows.size()));
    }
    if (results.rows.empty()) throw FormatError("empty predictions");

    std::vector<std::string> predicted_text;
    std::vector<std::string> truth_text;
    predicted_text.reserve(results.rows.size());
    truth_text.reserve(truth.rows.size());
    for (size_t i = 0; i < results.rows.size(); ++i) {
        predicted_text.push_back(trim(results.rows[i][results_col]));
        truth_text.push_back(trim(truth.rows[i][truth_col]));
    }

    const std::string metric = to_lower(metadata.metric_name);
    if (metric == "rmse" || metric == "r2") {
        std::vector<double> predicted;
        std::vector<double> actual;
        predicted.reserve(predicted_text.size());
        actual.reserve(truth_text.size());
        for (size_t i = 0; i < predicted_text.size(); ++i) {
            predicted.push_back(parse_numeric_cell(predicted_text[i], label));
            actual.push_back(parse_numeric_cell(truth_text[i], label));
        }
        return metric == "rmse" ? rmse(predicted, actual) : r2(predicted, actual);
    }
    if (metric == "accuracy") return accuracy(predicted_text, truth_text);
    if (metric == "f1") return binary_f1(predicted_text, truth_text);
    if (metric == "f1_weighted") return weighted_f1(predicted_text, truth_text);

    throw UnsupportedMetricError("metric '" + metadata.metric_name + "' is not implemented");
}

std::vector<AgentReportRow> evaluate_benchmark(const std::vector<RunRecord>& records,
                                               const std::vector<BenchmarkDataset>& datasets,
                                               const std::string& reference_agent,
                                               InvalidRankPolicy policy) {
    const std::vector<std::string> agents = agents_in_order(records);
    const auto ranks = average_rank(records, agents, datasets, policy);

    std::vector<AgentReportRow> rows;
    rows.reserve(agents.size());
    for (const auto& agent : agents) {
        AgentReportRow row;
        row.agent = agent;
        row.success = round_to(success_rate(records, agent), 1);
        row.rank = round_to(ranks.at(agent), 2);
        if (auto rel = relative_time(records, agent, reference_agent)) {
            row.rel_time = round_to(*rel, 2);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string render_benchmark_report(const std::vector<AgentReportRow>& rows) {
    size_t width = 5;
    for (const auto& row : rows) width = std::max(width, row.agent.size());

    std::ostringstream out;
    out << "agent";
    out << std::string(width - 5, ' ') << "  success  avg_rank  rel_time\n";
    char buffer[64];
    for (const auto& row : rows) {
        out << row.agent << std::string(width - row.agent.size(), ' ');
        std::snprintf(buffer, sizeof(buffer), "  %7.1f  %8.2f", row.success, row.rank);
        out << buffer;
        if (row.rel_time) {
            std::snprintf(buffer, sizeof(buffer), "  %8.2f", *row.rel_time);
            out << buffer;
        } else {
            out << "       N/A";
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace mlzero
