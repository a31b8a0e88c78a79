// Command-line front end: generate synthetic streams, train a variant,
// run ablation grids and dump reports.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "brima/config.hpp"
#include "brima/data.hpp"
#include "brima/report.hpp"
#include "brima/rng.hpp"
#include "brima/trainer.hpp"

namespace fs = std::filesystem;

namespace {

brima::FileConfig load_or_default(const std::string& path) {
    if (path.empty()) return brima::FileConfig{};
    return brima::load_config_file(path);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void write_run_outputs(const brima::SessionReport& report, const fs::path& dir) {
    fs::create_directories(dir);
    brima::write_text_file((dir / "report.json").string(), brima::report_to_json(report));
    brima::write_text_file((dir / "report.csv").string(), brima::report_to_csv(report));
}

int cmd_generate(const std::string& config_path, const std::string& out_path,
                 std::optional<double> beta, std::optional<std::uint64_t> seed) {
    brima::FileConfig cfg = load_or_default(config_path);
    if (seed.has_value()) cfg.stream.seed = *seed;
    if (beta.has_value()) cfg.stream.missing_rate = *beta;
    cfg.stream.validate();
    brima::TaskStream stream = brima::generate_synthetic_stream(cfg.stream);
    stream = brima::apply_missing_pattern(stream, cfg.stream.missing_rate, cfg.stream.seed);
    brima::save_stream(stream, out_path);
    std::cout << "wrote " << out_path << " (tasks=" << stream.task_count()
              << ", mask=" << brima::mask_hash(stream) << ")\n";
    return 0;
}

int cmd_train(const std::string& data_path, const std::string& config_path,
              const std::string& variant, std::optional<std::uint64_t> seed,
              const std::string& out_dir) {
    brima::FileConfig cfg = load_or_default(config_path);
    if (!variant.empty()) cfg.trainer.variant = brima::variant_from_name(variant);
    if (seed.has_value()) cfg.trainer.seed = *seed;
    const brima::TaskStream stream = brima::load_stream(data_path);

    brima::MemoryBuffer final_buffer;
    brima::ModelState final_model;
    auto observer = [&](const brima::TrainerState& state, int) {
        final_buffer = state.buffer;
        final_model = state.model;
    };
    const brima::SessionReport report = brima::run_stream(stream, cfg.trainer, observer);

    const fs::path dir(out_dir);
    write_run_outputs(report, dir);
    brima::save_checkpoint(final_model, (dir / "model.ckpt").string());
    brima::export_buffer(final_buffer, stream, (dir / "buffer.jsonl").string());
    std::cout << "variant=" << report.variant << " seed=" << report.seed;
    if (report.final_srcc_fisher.has_value()) {
        std::cout << " final_srcc=" << *report.final_srcc_fisher;
    }
    std::cout << " final_mse=" << report.final_mse << " final_rl2=" << report.final_rl2
              << "\nwrote " << (dir / "report.json").string() << "\n";
    return 0;
}

int cmd_ablate(const std::string& data_path, const std::string& config_path,
               const std::string& variants_arg, const std::string& seeds_arg,
               const std::string& out_dir, int jobs) {
    brima::FileConfig cfg = load_or_default(config_path);
    const brima::TaskStream stream = brima::load_stream(data_path);

    std::vector<brima::Variant> variants;
    for (const std::string& name : split_list(variants_arg)) {
        variants.push_back(brima::variant_from_name(name));
    }
    std::vector<std::uint64_t> seeds;
    for (const std::string& s : split_list(seeds_arg)) {
        seeds.push_back(std::stoull(s));
    }
    const brima::AblationResult result =
        brima::run_ablation_grid(stream, cfg.trainer, variants, seeds, jobs);

    const fs::path dir(out_dir);
    fs::create_directories(dir);
    for (std::size_t v = 0; v < variants.size(); ++v) {
        for (std::size_t s = 0; s < seeds.size(); ++s) {
            const brima::SessionReport& run = result.runs[v * seeds.size() + s];
            write_run_outputs(run, dir / (run.variant + "-seed" + std::to_string(run.seed)));
        }
    }
    brima::write_text_file((dir / "aggregate.json").string(), brima::aggregate_to_json(result.table));
    brima::write_text_file((dir / "aggregate.csv").string(), brima::aggregate_to_csv(result.table));
    std::cout << brima::aggregate_to_csv(result.table);
    return 0;
}

int cmd_report(const std::string& in_dir, const std::string& format) {
    const fs::path dir(in_dir);
    std::vector<fs::path> report_files;
    if (fs::exists(dir / "report.json")) {
        report_files.push_back(dir / "report.json");
    } else {
        std::vector<fs::path> subdirs;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_directory() && fs::exists(entry.path() / "report.json")) {
                subdirs.push_back(entry.path() / "report.json");
            }
        }
        std::sort(subdirs.begin(), subdirs.end());
        report_files = std::move(subdirs);
    }
    if (report_files.empty()) {
        throw brima::ParseError("report: no report.json found under " + in_dir);
    }
    if (format == "json") {
        std::cout << "[\n";
        for (std::size_t i = 0; i < report_files.size(); ++i) {
            std::string text = brima::read_text_file(report_files[i].string());
            while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
            std::cout << text;
            std::cout << (i + 1 < report_files.size() ? ",\n" : "\n");
        }
        std::cout << "]\n";
    } else {
        bool header = true;
        for (const fs::path& path : report_files) {
            const brima::SessionReport report =
                brima::report_from_json(brima::read_text_file(path.string()));
            std::cout << brima::report_to_csv(report, header);
            header = false;
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Continual multi-modal score regression with bridged imputation and prioritized replay"};
    app.require_subcommand(1);

    std::string config_path, out_path, data_path, variant, variants_arg, seeds_arg, format = "csv";
    std::optional<double> beta;
    std::optional<std::uint64_t> seed;
    int jobs = 1;

    auto* generate = app.add_subcommand("generate", "Generate a synthetic task stream");
    generate->add_option("--config", config_path, "Config file (JSON)");
    generate->add_option("--out", out_path, "Output stream path")->required();
    generate->add_option("--beta", beta, "Missing-modality rate override");
    generate->add_option("--seed", seed, "Stream seed override");

    auto* train = app.add_subcommand("train", "Train one variant on a stream");
    train->add_option("--data", data_path, "Stream file")->required();
    train->add_option("--config", config_path, "Config file (JSON)");
    train->add_option("--variant", variant, "Method variant");
    train->add_option("--seed", seed, "Trainer seed override");
    train->add_option("--out", out_path, "Output directory")->required();

    auto* ablate = app.add_subcommand("ablate", "Run a variant x seed grid");
    ablate->add_option("--data", data_path, "Stream file")->required();
    ablate->add_option("--config", config_path, "Config file (JSON)");
    ablate->add_option("--variants", variants_arg, "Comma-separated variants")->required();
    ablate->add_option("--seeds", seeds_arg, "Comma-separated seeds")->required();
    ablate->add_option("--out", out_path, "Output directory")->required();
    ablate->add_option("--jobs", jobs, "Parallel workers");

    auto* report = app.add_subcommand("report", "Print stored reports as CSV or JSON");
    report->add_option("--in", data_path, "Run or grid directory")->required();
    report->add_option("--format", format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) return cmd_generate(config_path, out_path, beta, seed);
        if (train->parsed()) return cmd_train(data_path, config_path, variant, seed, out_path);
        if (ablate->parsed()) {
            return cmd_ablate(data_path, config_path, variants_arg, seeds_arg, out_path, jobs);
        }
        if (report->parsed()) return cmd_report(data_path, format);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
