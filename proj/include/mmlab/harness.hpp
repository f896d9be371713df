#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "mmlab/mentormix.hpp"
#include "mmlab/noisegen.hpp"
#include "mmlab/trainer.hpp"

namespace mmlab {

/// Hyperparameter grid for one method. Lists a method does not use are ignored
/// (vanilla uses neither, mixup only alpha, mentornet only gamma_p).
struct MethodGrid {
    Method method = Method::vanilla;
    std::vector<double> alpha{1.0};
    std::vector<double> gamma_p{80.0};
};

struct HparamSetting {
    std::optional<double> alpha;
    std::optional<double> gamma_p;

    friend bool operator==(const HparamSetting&, const HparamSetting&) = default;
};

/// Grid expansion in row-major (alpha outer, gamma_p inner) order.
std::vector<HparamSetting> expand_grid(const MethodGrid& grid);

struct SweepSpec {
    GaussianTaskSpec task;
    int pool_clusters = 20;
    // Open-set cluster offset in units of the task's within-class std.
    double red_proximity = 1.5;
    std::vector<NoiseType> noise_types{NoiseType::blue, NoiseType::red};
    std::vector<int> levels{kCanonicalLevels.begin(), kCanonicalLevels.end()};
    std::vector<MethodGrid> methods;
    std::vector<std::uint64_t> seeds{1};
    std::size_t parallelism = 1;
    std::uint64_t master_seed = 0;
    // Method fields and seed are overwritten per trial.
    TrainConfig train;
    // When set, each trial appends its run log under <runs_dir>/<trial-hash>/log.txt.
    std::optional<std::string> runs_dir;
    // Written as the first line of each run log when non-empty.
    std::string provenance;

    void validate() const;
};

enum class TrialStatus { ok, diverged, failed };

std::string_view to_string(TrialStatus s);

struct TrialResult {
    NoiseType noise_type = NoiseType::blue;
    int level = 0;
    Method method = Method::vanilla;
    HparamSetting hparams;
    std::uint64_t seed = 0;
    double peak = 0.0;
    double final_accuracy = 0.0;
    double drop = 0.0;
    std::uint64_t steps = 0;
    TrialStatus status = TrialStatus::ok;

    friend bool operator==(const TrialResult&, const TrialResult&) = default;
};

struct CellKey {
    NoiseType noise_type;
    int level;
    Method method;

    friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

struct CellSummary {
    bool failed = false;
    HparamSetting best;
    double mean_peak = 0.0;
    double mean_final = 0.0;
    double mean_drop = 0.0;
    // 95% normal-approximation half-widths across seeds.
    double ci95_peak = 0.0;
    double ci95_final = 0.0;
    std::size_t seeds = 0;
};

struct SweepResult {
    std::vector<TrialResult> trials;
    std::map<CellKey, CellSummary> cells;

    bool any_failed() const;
};

/// Cells recomputed from raw trials. The best hparam setting is the one with
/// the highest mean peak across seeds (first in grid order on ties); settings
/// with a failed seed are excluded, and a cell with none left is failed.
std::map<CellKey, CellSummary> aggregate(const std::vector<TrialResult>& trials);

/// Seed for one trial, derived from its coordinates only.
std::uint64_t trial_seed(std::uint64_t master_seed, NoiseType type, int level, Method method,
                         std::size_t hparam_index, std::size_t seed_index);

/// The split every method trains on for (type, level, seed).
NoisySplit make_split(const SweepSpec& spec, NoiseType type, int level, std::size_t seed_index);

SweepResult run_sweep(const SweepSpec& spec);

struct CurvePoint {
    int level = 0;
    std::optional<double> mean_drop;  // empty for missing or failed cells
};

std::vector<CurvePoint> drop_curve(const SweepResult& result, NoiseType type, Method method);

/// Population std of the best-trial mean final accuracy over levels.
double std_across_levels(const SweepResult& result, NoiseType type, Method method);

/// Mean and 95% half-width of best-trial mean peak accuracy across levels.
std::pair<double, double> across_level_peak_ci(const SweepResult& result, NoiseType type, Method method);

/// Population standard deviation.
double population_std(const std::vector<double>& xs);

inline constexpr std::string_view kCsvHeader = "noise_type,level,method,alpha,gamma_p,seed,peak,final,drop,steps,status";

/// Raw trial rows. A non-empty provenance string becomes a leading `# ` line.
void export_csv(const SweepResult& result, std::ostream& out, const std::string& provenance = {});
void export_csv(const SweepResult& result, const std::string& path, const std::string& provenance = {});

struct ParsedCsv {
    SweepResult result;
    std::string provenance;
};
ParsedCsv parse_csv(std::istream& in);
ParsedCsv parse_csv_file(const std::string& path);

/// Best-trial peak/final table ("XX.X/YY.Y", failed cells "---") plus
/// across-level aggregates.
void export_markdown_table(const SweepResult& result, std::ostream& out, const std::string& provenance = {});
void export_markdown_table(const SweepResult& result, const std::string& path, const std::string& provenance = {});

/// Plot-ready drop curves: noise_type,method,level,mean_drop.
void export_drop_curves(const SweepResult& result, std::ostream& out, const std::string& provenance = {});

std::string format_peak_final(double peak, double final_accuracy);

}  // namespace mmlab
