#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mmlab/mentormix.hpp"
#include "mmlab/nn.hpp"
#include "mmlab/noisegen.hpp"

namespace mmlab {

struct ModelSpec {
    std::vector<std::size_t> hidden{128};
    Activation activation = Activation::relu;
};

struct TrainConfig {
    MentorMixConfig method;
    ModelSpec model;
    double lr = 0.1;
    double lr_decay_factor = 0.9;
    // Steps between decays; 0 means every two epochs.
    std::uint64_t lr_decay_every = 0;
    double momentum = 0.9;
    bool nesterov = true;
    double weight_decay = 0.0;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 60;
    // Steps between evaluations; 0 means once per epoch.
    std::uint64_t eval_every = 0;
    std::uint64_t seed = 0;

    void validate() const;
    /// Canonical one-line key=value rendering, used for fingerprints.
    std::string describe() const;
};

struct EvalPoint {
    std::uint64_t step = 0;
    double train_acc = 0.0;  // against the observed (noisy) labels
    double val_acc = 0.0;    // against the clean validation labels
    double gamma = 0.0;
    double mean_weight = 1.0;

    friend bool operator==(const EvalPoint&, const EvalPoint&) = default;
};

struct RunResult {
    std::vector<EvalPoint> eval_history;
    double peak_accuracy = 0.0;
    double final_accuracy = 0.0;
    double drop = 0.0;
    std::string fingerprint;
    std::uint64_t wall_steps = 0;

    friend bool operator==(const RunResult&, const RunResult&) = default;
};

/// (peak - final) / peak, or 0 when peak is 0.
double relative_drop(double peak, double final_accuracy);

/// Fills peak/final/drop from eval_history.
void summarize(RunResult& result);

/// Argmax accuracy against observed labels; ties go to the lowest class.
double evaluate(const MLPModel& model, const std::vector<LabeledExample>& examples);

/// Full training run. When `log` is given, one record per evaluation is
/// appended: step,train_acc,val_acc,gamma,mean_weight.
/// Throws DivergedError on a non-finite loss.
RunResult train_run(const NoisySplit& split, const TrainConfig& config, std::ostream* log = nullptr);

std::string run_log_header();

}  // namespace mmlab
