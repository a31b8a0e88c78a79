#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "brima/metrics.hpp"

namespace brima {

struct CellMetrics {
    std::optional<double> srcc;  // absent when the correlation is undefined
    double mse = 0.0;
    double rl2 = 0.0;
};

// Per-run evaluation record. `cells[t][k]` holds task-k metrics after
// session t; cells above the diagonal (tasks not yet seen) stay absent.
struct SessionReport {
    std::string variant;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string mask_hash;
    int tasks = 0;
    int sessions = 0;

    std::vector<std::vector<std::optional<CellMetrics>>> cells;
    std::vector<CellMetrics> session_metrics;  // cumulative eval union per session

    // Final-session row aggregates: SRCC via Fisher-z, MSE/RL2 arithmetic.
    std::optional<double> final_srcc_fisher;
    double final_mse = 0.0;
    double final_rl2 = 0.0;
    // Averages of the per-session cumulative metrics.
    std::optional<double> session_avg_srcc_fisher;
    double session_avg_mse = 0.0;
    double session_avg_rl2 = 0.0;

    double average_forgetting = 0.0;
    Vector per_task_forgetting;
    bool fisher_clamped = false;
};

std::string report_to_json(const SessionReport& report);
// One row per session x task cell: variant, seed, session, task, srcc, mse,
// rl2. Absent values are empty fields.
std::string report_to_csv(const SessionReport& report, bool header = true);
SessionReport report_from_json(const std::string& text);

struct AggregateRow {
    std::string variant;
    int runs = 0;
    double srcc_mean = 0.0, srcc_stddev = 0.0;
    double mse_mean = 0.0, mse_stddev = 0.0;
    double rl2_mean = 0.0, rl2_stddev = 0.0;
    double forgetting_mean = 0.0, forgetting_stddev = 0.0;
};

std::string aggregate_to_json(const std::vector<AggregateRow>& rows);
std::string aggregate_to_csv(const std::vector<AggregateRow>& rows);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace brima
