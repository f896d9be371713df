// Command-line front end: dataset generation, single runs, sweeps, reports,
// and the built-in invariant suite.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmlab/config.hpp"
#include "mmlab/harness.hpp"
#include "mmlab/noisegen.hpp"
#include "mmlab/selfcheck.hpp"
#include "mmlab/trainer.hpp"

namespace fs = std::filesystem;
using namespace mmlab;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRunsFailed = 2;

struct CommonArgs {
    std::string config = "default";
    std::string out;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("-c,--config", args.config, "Config file (JSON) or preset: default, quick, paper_grid");
    cmd->add_option("-o,--out", args.out, "Output directory (falls back to $MENTORMIX_OUT, then ./mmlab_out)");
    cmd->add_option("--override", args.overrides, "key=value applied after the config file")->take_all();
}

fs::path output_dir(const std::string& flag) {
    fs::path dir = flag;
    if (dir.empty()) {
        const char* env = std::getenv("MENTORMIX_OUT");
        dir = env && *env ? env : "mmlab_out";
    }
    fs::create_directories(dir);
    return dir;
}

int cmd_gen_data(const CommonArgs& args) {
    const AppConfig cfg = load_config(args.config, args.overrides);
    const fs::path dir = output_dir(args.out);
    const NoisySplit split = make_config_split(cfg);
    const fs::path path = dir / ("dataset_" + std::string(to_string(split.noise_type)) + "_" +
                                 std::to_string(split.noise_level) + ".txt");
    write_dataset(path.string(), split);
    std::cout << "wrote " << path.string() << " (" << split.train.size() << " train, " << split.val.size()
              << " val)\n";
    return kOk;
}

int cmd_train(const CommonArgs& args) {
    const AppConfig cfg = load_config(args.config, args.overrides);
    const fs::path dir = output_dir(args.out);
    const NoisySplit split = make_config_split(cfg);
    const TrainConfig train = make_train_config(cfg);
    const std::string provenance = config_to_json(cfg);

    std::ofstream log(dir / "log.txt", std::ios::binary | std::ios::trunc);
    if (!log) throw IoError("cannot write " + (dir / "log.txt").string());
    log << "# config: " << provenance << '\n';

    nlohmann::json out;
    out["config"] = nlohmann::json::parse(provenance);
    int code = kOk;
    try {
        const RunResult r = train_run(split, train, &log);
        out["status"] = "ok";
        out["peak_accuracy"] = r.peak_accuracy;
        out["final_accuracy"] = r.final_accuracy;
        out["drop"] = r.drop;
        out["fingerprint"] = r.fingerprint;
        out["wall_steps"] = r.wall_steps;
        auto& hist = out["eval_history"] = nlohmann::json::array();
        for (const auto& e : r.eval_history) {
            hist.push_back({{"step", e.step}, {"train_acc", e.train_acc}, {"val_acc", e.val_acc}});
        }
        std::cout << "peak " << format_double(r.peak_accuracy) << " final " << format_double(r.final_accuracy)
                  << " drop " << format_double(r.drop) << '\n';
    } catch (const DivergedError& e) {
        out["status"] = "diverged";
        out["diverged_step"] = e.step();
        std::cerr << e.what() << '\n';
        code = kRunsFailed;
    }
    std::ofstream result(dir / "result.json", std::ios::binary | std::ios::trunc);
    result << out.dump(2) << '\n';
    return code;
}

void write_reports(const SweepResult& result, const fs::path& dir, const std::string& provenance) {
    export_markdown_table(result, (dir / "table.md").string(), provenance);
    std::ofstream curves(dir / "drop_curves.csv", std::ios::binary | std::ios::trunc);
    if (!curves) throw IoError("cannot write " + (dir / "drop_curves.csv").string());
    export_drop_curves(result, curves, provenance);
}

int cmd_sweep(const CommonArgs& args) {
    const AppConfig cfg = load_config(args.config, args.overrides);
    const fs::path dir = output_dir(args.out);
    SweepSpec spec = make_sweep_spec(cfg);
    const std::string provenance = provenance_json(cfg);
    spec.runs_dir = (dir / "runs").string();
    spec.provenance = provenance;

    std::size_t trials = 0;
    for (const auto& g : spec.methods) trials += expand_grid(g).size();
    trials *= spec.noise_types.size() * spec.levels.size() * spec.seeds.size();
    std::cout << "running " << trials << " trials with parallelism " << spec.parallelism << '\n';

    const SweepResult result = run_sweep(spec);
    export_csv(result, (dir / "trials.csv").string(), provenance);
    write_reports(result, dir, provenance);
    std::cout << "wrote " << (dir / "trials.csv").string() << ", table.md, drop_curves.csv\n";
    return result.any_failed() ? kRunsFailed : kOk;
}

int cmd_report(const std::string& dir_flag) {
    const fs::path dir = output_dir(dir_flag);
    const ParsedCsv parsed = parse_csv_file((dir / "trials.csv").string());
    write_reports(parsed.result, dir, parsed.provenance);
    std::cout << "rendered " << parsed.result.cells.size() << " cells into " << (dir / "table.md").string() << '\n';
    return parsed.result.any_failed() ? kRunsFailed : kOk;
}

int cmd_selftest() {
    bool ok = true;
    for (const auto& r : selfcheck::run_all()) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
        ok = ok && r.passed;
    }
    return ok ? kOk : kInvalid;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust training under label noise: MentorMix and baselines on synthetic tasks"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_args, sweep_args;
    auto* gen = app.add_subcommand("gen-data", "Write the noisy split described by the config");
    add_common(gen, gen_args);
    auto* train = app.add_subcommand("train", "Train one model and write result.json and log.txt");
    add_common(train, train_args);
    auto* sweep = app.add_subcommand("sweep", "Run the noise-type x level x method x grid x seed sweep");
    add_common(sweep, sweep_args);
    std::string report_dir;
    auto* report = app.add_subcommand("report", "Re-render tables and curves from a sweep's trials.csv");
    report->add_option("-d,--dir,-o,--out", report_dir, "Sweep output directory");
    auto* selftest = app.add_subcommand("selftest", "Run the invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kInvalid;
    }

    try {
        if (*gen) return cmd_gen_data(gen_args);
        if (*train) return cmd_train(train_args);
        if (*sweep) return cmd_sweep(sweep_args);
        if (*report) return cmd_report(report_dir);
        if (*selftest) return cmd_selftest();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kInvalid;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kInvalid;
    }
    return kInvalid;
}
