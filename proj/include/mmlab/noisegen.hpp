#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "mmlab/matrix.hpp"

namespace mmlab {

enum class Provenance : int { correct = 0, flipped = 1, open_set = 2 };

/// One training or validation example. `provenance_arg` carries the original
/// class for flipped labels, the pool cluster id for open-set substitutions,
/// and -1 for correct examples.
struct LabeledExample {
    std::uint64_t id = 0;
    std::vector<double> features;
    int observed_label = 0;
    Provenance provenance = Provenance::correct;
    int provenance_arg = -1;

    bool is_correct() const noexcept { return provenance == Provenance::correct; }
    friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

/// Isotropic Gaussian classes whose means lie on a sphere of radius
/// `mean_scale` around the origin.
struct GaussianTaskSpec {
    int num_classes = 10;
    int dim = 20;
    double mean_scale = 3.0;
    double within_std = 1.0;
    int examples_per_class = 200;
    int val_per_class = 100;
    std::uint64_t seed = 0;

    void validate() const;
};

struct CleanTask {
    GaussianTaskSpec spec;
    std::vector<LabeledExample> train;
    std::vector<LabeledExample> val;
    Matrix class_means;  // num_classes x dim
};

enum class NoiseType { blue, red };

std::string_view to_string(NoiseType t);
NoiseType parse_noise_type(std::string_view s);

/// The ten noise levels (percent) used throughout the benchmark.
inline constexpr std::array<int, 10> kCanonicalLevels{0, 5, 10, 15, 20, 30, 40, 50, 60, 80};

bool is_canonical_level(int percent);

/// Number of corrupted examples for a class of `class_size` at `percent`,
/// rounding half up.
int corrupted_count(int percent, int class_size);

struct NoisySplit {
    std::vector<LabeledExample> train;
    std::vector<LabeledExample> val;
    NoiseType noise_type = NoiseType::blue;
    int noise_level = 0;
    int num_classes = 0;
    int dim = 0;
    std::uint64_t seed = 0;
    // Serialized JSON of the config that produced this split; may be empty.
    std::string provenance;

    friend bool operator==(const NoisySplit&, const NoisySplit&) = default;
};

struct OpenSetCluster {
    std::vector<double> mean;
    double std = 1.0;
    int nearest_class = 0;
    std::vector<std::vector<double>> examples;
};

struct OpenSetPool {
    std::vector<OpenSetCluster> clusters;
};

CleanTask make_clean_task(const GaussianTaskSpec& spec);

/// Symmetric label flips: per class exactly corrupted_count() examples are
/// relabeled to a uniformly random other class. Targets are drawn as a random
/// class-balanced assignment, so the observed-label histogram is preserved.
NoisySplit inject_blue(const CleanTask& task, int percent, std::uint64_t seed);

/// Open-vocabulary clusters placed `proximity` feature units away from an
/// anchor class mean. Cluster k is anchored at class k mod m.
OpenSetPool make_open_set_pool(const CleanTask& task, int n_clusters, double proximity,
                               int examples_per_cluster, std::uint64_t seed);

/// Feature substitution from the pool; labels are left untouched.
NoisySplit inject_red(const CleanTask& task, int percent, const OpenSetPool& pool, std::uint64_t seed);

/// Index of the class mean nearest to `x` (ties to the lowest index).
int nearest_class_mean(const Matrix& class_means, const std::vector<double>& x);

// Dataset files: a `# {json}` metadata line, then one record per example:
// id,split,observed_label,provenance_code,provenance_arg,f_1,...,f_d
void write_dataset(std::ostream& out, const NoisySplit& split);
void write_dataset(const std::string& path, const NoisySplit& split);
NoisySplit read_dataset(std::istream& in);
NoisySplit read_dataset_file(const std::string& path);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);
double parse_double(std::string_view text);

}  // namespace mmlab
