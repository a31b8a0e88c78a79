#include "brima/report.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "json_write.hpp"

namespace brima {

namespace {

void append_optional(std::string& out, const std::optional<double>& v) {
    if (v.has_value()) {
        jsonw::number(out, *v);
    } else {
        out += "null";
    }
}

void append_cell(std::string& out, const std::optional<CellMetrics>& cell) {
    if (!cell.has_value()) {
        out += "null";
        return;
    }
    out += "{\"srcc\":";
    append_optional(out, cell->srcc);
    out += ",\"mse\":";
    jsonw::number(out, cell->mse);
    out += ",\"rl2\":";
    jsonw::number(out, cell->rl2);
    out += '}';
}

}  // namespace

std::string report_to_json(const SessionReport& report) {
    std::string out;
    out += "{\n  \"variant\": ";
    jsonw::string(out, report.variant);
    out += ",\n  \"seed\": " + std::to_string(report.seed);
    out += ",\n  \"config_hash\": ";
    jsonw::string(out, report.config_hash);
    out += ",\n  \"mask_hash\": ";
    jsonw::string(out, report.mask_hash);
    out += ",\n  \"tasks\": " + std::to_string(report.tasks);
    out += ",\n  \"sessions\": " + std::to_string(report.sessions);
    out += ",\n  \"cells\": [";
    for (int t = 0; t < report.sessions; ++t) {
        out += t ? ",\n    [" : "\n    [";
        for (int k = 0; k < report.tasks; ++k) {
            if (k) out += ',';
            append_cell(out, report.cells[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)]);
        }
        out += ']';
    }
    out += "\n  ],\n  \"session_metrics\": [";
    for (int t = 0; t < report.sessions; ++t) {
        if (t) out += ',';
        std::optional<CellMetrics> cell = report.session_metrics[static_cast<std::size_t>(t)];
        append_cell(out, cell);
    }
    out += "],\n  \"final\": {\"srcc_fisher\": ";
    append_optional(out, report.final_srcc_fisher);
    out += ", \"mse\": ";
    jsonw::number(out, report.final_mse);
    out += ", \"rl2\": ";
    jsonw::number(out, report.final_rl2);
    out += "},\n  \"session_average\": {\"srcc_fisher\": ";
    append_optional(out, report.session_avg_srcc_fisher);
    out += ", \"mse\": ";
    jsonw::number(out, report.session_avg_mse);
    out += ", \"rl2\": ";
    jsonw::number(out, report.session_avg_rl2);
    out += "},\n  \"forgetting\": {\"average\": ";
    jsonw::number(out, report.average_forgetting);
    out += ", \"per_task\": [";
    for (std::size_t i = 0; i < report.per_task_forgetting.size(); ++i) {
        if (i) out += ',';
        jsonw::number(out, report.per_task_forgetting[i]);
    }
    out += "]},\n  \"fisher_clamped\": ";
    out += report.fisher_clamped ? "true" : "false";
    out += "\n}\n";
    return out;
}

std::string report_to_csv(const SessionReport& report, bool header) {
    std::string out;
    if (header) out += "variant,seed,session,task,srcc,mse,rl2\n";
    for (int t = 0; t < report.sessions; ++t) {
        for (int k = 0; k < report.tasks; ++k) {
            out += report.variant + ',' + std::to_string(report.seed) + ',' +
                   std::to_string(t + 1) + ',' + std::to_string(k + 1) + ',';
            const auto& cell = report.cells[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)];
            if (cell.has_value()) {
                if (cell->srcc.has_value()) jsonw::number(out, *cell->srcc);
                out += ',';
                jsonw::number(out, cell->mse);
                out += ',';
                jsonw::number(out, cell->rl2);
            } else {
                out += ",,";
            }
            out += '\n';
        }
    }
    return out;
}

namespace {

std::optional<double> optional_from(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

std::optional<CellMetrics> cell_from(const nlohmann::json& j) {
    if (j.is_null()) return std::nullopt;
    CellMetrics cell;
    cell.srcc = optional_from(j.at("srcc"));
    cell.mse = j.at("mse").get<double>();
    cell.rl2 = j.at("rl2").get<double>();
    return cell;
}

}  // namespace

SessionReport report_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw ParseError(std::string("report_from_json: ") + e.what());
    }
    SessionReport report;
    try {
        report.variant = j.at("variant").get<std::string>();
        report.seed = j.at("seed").get<std::uint64_t>();
        report.config_hash = j.at("config_hash").get<std::string>();
        report.mask_hash = j.at("mask_hash").get<std::string>();
        report.tasks = j.at("tasks").get<int>();
        report.sessions = j.at("sessions").get<int>();
        for (const auto& row : j.at("cells")) {
            std::vector<std::optional<CellMetrics>> cells;
            for (const auto& cell : row) cells.push_back(cell_from(cell));
            report.cells.push_back(std::move(cells));
        }
        for (const auto& cell : j.at("session_metrics")) {
            auto parsed = cell_from(cell);
            report.session_metrics.push_back(parsed.value_or(CellMetrics{}));
        }
        report.final_srcc_fisher = optional_from(j.at("final").at("srcc_fisher"));
        report.final_mse = j.at("final").at("mse").get<double>();
        report.final_rl2 = j.at("final").at("rl2").get<double>();
        report.session_avg_srcc_fisher = optional_from(j.at("session_average").at("srcc_fisher"));
        report.session_avg_mse = j.at("session_average").at("mse").get<double>();
        report.session_avg_rl2 = j.at("session_average").at("rl2").get<double>();
        report.average_forgetting = j.at("forgetting").at("average").get<double>();
        report.per_task_forgetting = j.at("forgetting").at("per_task").get<Vector>();
        report.fisher_clamped = j.at("fisher_clamped").get<bool>();
    } catch (const std::exception& e) {
        throw SchemaError(std::string("report_from_json: ") + e.what());
    }
    return report;
}

std::string aggregate_to_json(const std::vector<AggregateRow>& rows) {
    std::string out = "[\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const AggregateRow& r = rows[i];
        out += "  {\"variant\": ";
        jsonw::string(out, r.variant);
        out += ", \"runs\": " + std::to_string(r.runs);
        out += ", \"srcc_mean\": ";
        jsonw::number(out, r.srcc_mean);
        out += ", \"srcc_stddev\": ";
        jsonw::number(out, r.srcc_stddev);
        out += ", \"mse_mean\": ";
        jsonw::number(out, r.mse_mean);
        out += ", \"mse_stddev\": ";
        jsonw::number(out, r.mse_stddev);
        out += ", \"rl2_mean\": ";
        jsonw::number(out, r.rl2_mean);
        out += ", \"rl2_stddev\": ";
        jsonw::number(out, r.rl2_stddev);
        out += ", \"forgetting_mean\": ";
        jsonw::number(out, r.forgetting_mean);
        out += ", \"forgetting_stddev\": ";
        jsonw::number(out, r.forgetting_stddev);
        out += i + 1 < rows.size() ? "},\n" : "}\n";
    }
    out += "]\n";
    return out;
}

std::string aggregate_to_csv(const std::vector<AggregateRow>& rows) {
    std::string out =
        "variant,runs,srcc_mean,srcc_stddev,mse_mean,mse_stddev,rl2_mean,rl2_stddev,"
        "forgetting_mean,forgetting_stddev\n";
    for (const AggregateRow& r : rows) {
        out += r.variant + ',' + std::to_string(r.runs) + ',';
        jsonw::number(out, r.srcc_mean);
        out += ',';
        jsonw::number(out, r.srcc_stddev);
        out += ',';
        jsonw::number(out, r.mse_mean);
        out += ',';
        jsonw::number(out, r.mse_stddev);
        out += ',';
        jsonw::number(out, r.rl2_mean);
        out += ',';
        jsonw::number(out, r.rl2_stddev);
        out += ',';
        jsonw::number(out, r.forgetting_mean);
        out += ',';
        jsonw::number(out, r.forgetting_stddev);
        out += '\n';
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream file(path, std::ios::binary);
    if (!file) throw ParseError("write_text_file: cannot open " + path);
    file.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!file) throw ParseError("write_text_file: write to " + path + " failed");
}

std::string read_text_file(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw ParseError("read_text_file: cannot open " + path);
    std::ostringstream ss;
    ss << file.rdbuf();
    return ss.str();
}

}  // namespace brima
