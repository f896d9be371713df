#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmlab/harness.hpp"
#include "mmlab/noisegen.hpp"
#include "mmlab/trainer.hpp"

namespace mmlab {

struct NoiseSettings {
    NoiseType type = NoiseType::blue;
    int level = 40;
    int pool_clusters = 20;
    double red_proximity = 1.5;  // in within-class std units
};

struct SweepSettings {
    std::vector<NoiseType> noise_types{NoiseType::blue, NoiseType::red};
    std::vector<int> levels{kCanonicalLevels.begin(), kCanonicalLevels.end()};
    std::vector<Method> methods{Method::vanilla, Method::mixup, Method::mentornet, Method::mentormix};
    MethodGrid mixup{Method::mixup, {0.4, 1.0, 2.0}, {}};
    MethodGrid mentornet{Method::mentornet, {}, {90.0, 80.0, 70.0}};
    MethodGrid mentormix{Method::mentormix, {0.4, 1.0, 2.0}, {90.0, 80.0, 70.0}};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::size_t parallelism = 1;
};

/// Fully resolved configuration. Every random stream derives from master_seed.
struct AppConfig {
    std::uint64_t master_seed = 1;
    GaussianTaskSpec task;
    NoiseSettings noise;
    TrainConfig train;
    SweepSettings sweep;
};

/// Malformed or unknown configuration; `line` is 1-based, 0 when unknown.
class ConfigFileError : public ConfigError {
public:
    ConfigFileError(const std::string& message, std::size_t line)
        : ConfigError(line ? "line " + std::to_string(line) + ": " + message : message), message_(message),
          line_(line) {}
    std::size_t line() const noexcept { return line_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::string message_;
    std::size_t line_;
};

/// Parse JSON config text on top of the defaults, then apply `key=value`
/// overrides. Keys may be dotted paths or unambiguous leaf names.
AppConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});

/// Resolve `--config` argument: a file path, or the name of a built-in preset.
AppConfig load_config(const std::string& path_or_preset, const std::vector<std::string>& overrides = {});

std::optional<std::string> builtin_preset(const std::string& name);

/// Canonical JSON of the resolved config (sorted keys, one line).
std::string config_to_json(const AppConfig& config);

/// Same, without execution-only keys (sweep.parallelism) so that provenance
/// headers do not depend on how a sweep was scheduled.
std::string provenance_json(const AppConfig& config);

/// Split the task, noise, and seed settings into a single training split.
NoisySplit make_config_split(const AppConfig& config);

/// Training settings with the run seed derived from master_seed.
TrainConfig make_train_config(const AppConfig& config);

SweepSpec make_sweep_spec(const AppConfig& config);

}  // namespace mmlab
