#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "mmlab/matrix.hpp"
#include "mmlab/nn.hpp"
#include "mmlab/random.hpp"

namespace mmlab {

enum class Method { vanilla, mixup, mentornet, mentormix };

std::string_view to_string(Method m);
Method parse_method(std::string_view s);

/// A mini-batch of features with integer (possibly noisy) labels.
struct Batch {
    Matrix features;
    std::vector<int> labels;

    std::size_t size() const noexcept { return labels.size(); }
};

/// Loss threshold gamma tracked as an exponential moving average of the
/// gamma_p-th percentile of mini-batch losses. The optional second stage
/// thresholds mixed losses independently.
struct CurriculumState {
    double gamma = 0.0;
    double gamma_p = 80.0;
    double ema_decay = 0.95;
    bool initialized = false;
    std::unique_ptr<CurriculumState> second_stage;

    CurriculumState() = default;
    CurriculumState(double gamma_p, double ema_decay, bool with_second_stage = false);
    CurriculumState(const CurriculumState& other);
    CurriculumState& operator=(const CurriculumState& other);
    CurriculumState(CurriculumState&&) noexcept = default;
    CurriculumState& operator=(CurriculumState&&) noexcept = default;
};

struct MentorMixConfig {
    Method method = Method::mentormix;
    double alpha = 0.4;
    double gamma_p = 80.0;
    double temperature = 1.0;
    double ema_decay = 0.95;
    bool second_weighting = false;

    void validate() const;
    CurriculumState make_state() const;
};

/// Everything a MentorMix-family batch computed before the gradient step.
struct BatchDiagnostics {
    std::vector<double> raw_losses;
    std::vector<double> weights_v;
    std::vector<double> sampling_probs;
    std::vector<std::size_t> partner_index;
    std::vector<double> lambda_raw;
    std::vector<double> lambda_adjusted;
    std::vector<double> mixed_losses;
    std::optional<std::vector<double>> second_weights;
    double gamma_used = 0.0;
};

/// Overrides for tests. Unset fields leave the normal computation in place.
/// Forced partners or lambdas consume no random draws.
struct BatchHooks {
    std::optional<double> gamma;
    std::optional<double> second_gamma;
    std::optional<std::vector<double>> weights;
    std::optional<std::vector<double>> sampling_probs;
    std::optional<std::vector<std::size_t>> partners;
    std::optional<double> lambda;
    // Mixup only: replace each lambda by max(lambda, 1 - lambda).
    bool mixup_lambda_max = false;
};

struct BatchResult {
    double loss = 0.0;
    Gradients gradients;
    BatchDiagnostics diagnostics;
};

/// Nearest-rank percentile: element ceil(q/100 * n) - 1 of the sorted values.
double percentile(std::span<const double> values, double q);

/// First call seeds gamma with the value; later calls blend with ema_decay.
void ema_update(CurriculumState& state, double batch_percentile);

/// 1 where loss <= gamma, else 0.
std::vector<double> threshold_weights(std::span<const double> losses, double gamma);

/// Softmax of weights / t over the batch.
std::vector<double> sampling_distribution(std::span<const double> weights, double temperature);

/// Inverse-CDF draw of one index from a probability vector.
std::size_t sample_partner(std::span<const double> probs, Rng& rng);

/// Draw from Beta(alpha, alpha).
double sample_lambda(double alpha, Rng& rng);

/// max(l, 1-l) for selected examples, min(l, 1-l) otherwise.
double adjust_lambda(double lambda, double v_star);

/// Convex combination of two examples and their label distributions.
std::pair<std::vector<double>, std::vector<double>> mixup_pair(std::span<const double> x_i,
                                                               std::span<const double> x_j,
                                                               std::span<const double> y_i,
                                                               std::span<const double> y_j, double lambda);

BatchResult vanilla_batch(const Batch& batch, const MLPModel& model);

BatchResult mentornet_batch(const Batch& batch, const MLPModel& model, CurriculumState& state,
                            const BatchHooks& hooks = {});

BatchResult mixup_batch(const Batch& batch, const MLPModel& model, double alpha, Rng& rng,
                        const BatchHooks& hooks = {});

BatchResult mentormix_batch(const Batch& batch, const MLPModel& model, CurriculumState& state,
                            const MentorMixConfig& config, Rng& rng, const BatchHooks& hooks = {});

/// Dispatch on config.method.
BatchResult method_batch(const Batch& batch, const MLPModel& model, CurriculumState& state,
                         const MentorMixConfig& config, Rng& rng);

/// Expected MentorMix loss with every partner integrated out under `probs`:
/// (1/b) sum_i sum_j probs[j] * ce(mix(i, j, adjust_lambda(lambdas[i], weights[i]))).
double expected_mentormix_loss(const Batch& batch, const MLPModel& model, std::span<const double> weights,
                               std::span<const double> probs, std::span<const double> lambdas);

}  // namespace mmlab
