#include "mmlab/mentormix.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace mmlab {

namespace {

void check_batch(const Batch& batch, const MLPModel& model, std::size_t min_size) {
    if (batch.size() < min_size) {
        throw ContractError("batch of size " + std::to_string(batch.size()) + " is too small (need " +
                            std::to_string(min_size) + ")");
    }
    if (batch.features.rows() != batch.size()) throw DimensionError("batch features/labels row mismatch");
    if (batch.features.cols() != model.input_dim()) throw DimensionError("batch width does not match model input");
}

double weighted_mean(std::span<const double> losses, std::span<const double> weights) {
    double s = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) s += weights[i] * losses[i];
    return s / static_cast<double>(losses.size());
}

struct Mixed {
    Matrix features;
    Matrix targets;
};

Mixed mix_batch(const Batch& batch, const Matrix& targets, std::span<const std::size_t> partners,
                std::span<const double> lambdas) {
    const std::size_t b = batch.size();
    Mixed out{Matrix(b, batch.features.cols()), Matrix(b, targets.cols())};
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t j = partners[i];
        auto [x, y] = mixup_pair(batch.features.row(i), batch.features.row(j), targets.row(i), targets.row(j),
                                 lambdas[i]);
        std::copy(x.begin(), x.end(), out.features.row(i).begin());
        std::copy(y.begin(), y.end(), out.targets.row(i).begin());
    }
    return out;
}

// Loss and gradient of (1/b) sum_i w_i ce_i on an already-formed batch.
struct Evaluated {
    std::vector<double> losses;
    double loss = 0.0;
    Gradients gradients;
};

Evaluated evaluate_weighted(const MLPModel& model, const Matrix& features, const Matrix& targets,
                            std::span<const double> weights) {
    auto fw = forward(model, features);
    Evaluated e;
    e.losses = softmax_ce(fw.logits, targets);
    e.loss = weighted_mean(e.losses, weights);
    e.gradients = backward(model, fw.cache, fw.logits, targets, weights);
    return e;
}

std::vector<double> raw_losses(const MLPModel& model, const Matrix& features, const Matrix& targets) {
    return softmax_ce(predict_logits(model, features), targets);
}

void check_override(const std::optional<std::vector<double>>& v, std::size_t b, const char* what) {
    if (v && v->size() != b) throw DimensionError(std::string("hook '") + what + "' has wrong length");
}

}  // namespace

std::string_view to_string(Method m) {
    switch (m) {
        case Method::vanilla: return "vanilla";
        case Method::mixup: return "mixup";
        case Method::mentornet: return "mentornet";
        case Method::mentormix: return "mentormix";
    }
    return "unknown";
}

Method parse_method(std::string_view s) {
    if (s == "vanilla") return Method::vanilla;
    if (s == "mixup") return Method::mixup;
    if (s == "mentornet") return Method::mentornet;
    if (s == "mentormix") return Method::mentormix;
    throw ConfigError("unknown method '" + std::string(s) + "'");
}

CurriculumState::CurriculumState(double gamma_p_, double ema_decay_, bool with_second_stage)
    : gamma_p(gamma_p_), ema_decay(ema_decay_) {
    if (with_second_stage) second_stage = std::make_unique<CurriculumState>(gamma_p_, ema_decay_, false);
}

CurriculumState::CurriculumState(const CurriculumState& other)
    : gamma(other.gamma), gamma_p(other.gamma_p), ema_decay(other.ema_decay), initialized(other.initialized),
      second_stage(other.second_stage ? std::make_unique<CurriculumState>(*other.second_stage) : nullptr) {}

CurriculumState& CurriculumState::operator=(const CurriculumState& other) {
    if (this != &other) *this = CurriculumState(other);
    return *this;
}

void MentorMixConfig::validate() const {
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (!(gamma_p > 0.0 && gamma_p <= 100.0)) throw ConfigError("gamma_p must lie in (0, 100]");
    if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw ConfigError("ema_decay must lie in [0, 1)");
}

CurriculumState MentorMixConfig::make_state() const { return {gamma_p, ema_decay, second_weighting}; }

double percentile(std::span<const double> values, double q) {
    if (values.empty()) throw ContractError("percentile of an empty vector");
    if (!(q > 0.0 && q <= 100.0)) throw ContractError("percentile rank must lie in (0, 100]");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(q * n / 100.0));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

void ema_update(CurriculumState& state, double batch_percentile) {
    if (!state.initialized) {
        state.gamma = batch_percentile;
        state.initialized = true;
        return;
    }
    state.gamma = state.ema_decay * state.gamma + (1.0 - state.ema_decay) * batch_percentile;
}

std::vector<double> threshold_weights(std::span<const double> losses, double gamma) {
    std::vector<double> w(losses.size());
    std::transform(losses.begin(), losses.end(), w.begin(), [gamma](double l) { return l <= gamma ? 1.0 : 0.0; });
    return w;
}

std::vector<double> sampling_distribution(std::span<const double> weights, double temperature) {
    if (!(temperature > 0.0)) throw ContractError("temperature must be positive");
    if (weights.empty()) return {};
    std::vector<double> p(weights.size());
    const double mx = *std::max_element(weights.begin(), weights.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp((weights[i] - mx) / temperature);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

std::size_t sample_partner(std::span<const double> probs, Rng& rng) {
    if (probs.empty()) throw ContractError("cannot sample from an empty distribution");
    const double u = rng.uniform();
    double cum = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] > 0.0) last_positive = i;
        cum += probs[i];
        if (u < cum) return i;
    }
    // u landed in the rounding gap above the accumulated mass.
    return last_positive;
}

double sample_lambda(double alpha, Rng& rng) {
    if (!(alpha > 0.0)) throw ContractError("alpha must be positive");
    return rng.beta(alpha, alpha);
}

double adjust_lambda(double lambda, double v_star) {
    return v_star * std::max(lambda, 1.0 - lambda) + (1.0 - v_star) * std::min(lambda, 1.0 - lambda);
}

std::pair<std::vector<double>, std::vector<double>> mixup_pair(std::span<const double> x_i,
                                                               std::span<const double> x_j,
                                                               std::span<const double> y_i,
                                                               std::span<const double> y_j, double lambda) {
    if (x_i.size() != x_j.size() || y_i.size() != y_j.size()) throw DimensionError("mixup_pair: operand widths differ");
    std::pair<std::vector<double>, std::vector<double>> out;
    auto& [x, y] = out;
    x.resize(x_i.size());
    y.resize(y_i.size());
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = lambda * x_i[k] + (1.0 - lambda) * x_j[k];
    for (std::size_t k = 0; k < y.size(); ++k) y[k] = lambda * y_i[k] + (1.0 - lambda) * y_j[k];
    return out;
}

BatchResult vanilla_batch(const Batch& batch, const MLPModel& model) {
    check_batch(batch, model, 1);
    const Matrix targets = one_hot(batch.labels, model.num_classes());
    const std::vector<double> ones(batch.size(), 1.0);
    auto e = evaluate_weighted(model, batch.features, targets, ones);
    BatchResult r;
    r.loss = e.loss;
    r.gradients = std::move(e.gradients);
    auto& d = r.diagnostics;
    d.raw_losses = e.losses;
    d.weights_v = ones;
    d.gamma_used = std::numeric_limits<double>::infinity();
    return r;
}

BatchResult mentornet_batch(const Batch& batch, const MLPModel& model, CurriculumState& state,
                            const BatchHooks& hooks) {
    check_batch(batch, model, 1);
    check_override(hooks.weights, batch.size(), "weights");
    const Matrix targets = one_hot(batch.labels, model.num_classes());
    auto fw = forward(model, batch.features);
    BatchResult r;
    auto& d = r.diagnostics;
    d.raw_losses = softmax_ce(fw.logits, targets);
    ema_update(state, percentile(d.raw_losses, state.gamma_p));
    d.gamma_used = hooks.gamma.value_or(state.gamma);
    d.weights_v = hooks.weights ? *hooks.weights : threshold_weights(d.raw_losses, d.gamma_used);
    r.loss = weighted_mean(d.raw_losses, d.weights_v);
    r.gradients = backward(model, fw.cache, fw.logits, targets, d.weights_v);
    return r;
}

BatchResult mixup_batch(const Batch& batch, const MLPModel& model, double alpha, Rng& rng, const BatchHooks& hooks) {
    check_batch(batch, model, 2);
    const std::size_t b = batch.size();
    if (hooks.partners && hooks.partners->size() != b) throw DimensionError("hook 'partners' has wrong length");
    const Matrix targets = one_hot(batch.labels, model.num_classes());

    BatchResult r;
    auto& d = r.diagnostics;
    d.weights_v.assign(b, 1.0);
    d.sampling_probs.assign(b, 1.0 / static_cast<double>(b));
    d.gamma_used = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t j = hooks.partners ? (*hooks.partners)[i] : sample_partner(d.sampling_probs, rng);
        const double lam = hooks.lambda ? *hooks.lambda : sample_lambda(alpha, rng);
        d.partner_index.push_back(j);
        d.lambda_raw.push_back(lam);
        d.lambda_adjusted.push_back(hooks.mixup_lambda_max ? std::max(lam, 1.0 - lam) : lam);
    }
    const auto mixed = mix_batch(batch, targets, d.partner_index, d.lambda_adjusted);
    const std::vector<double> ones(b, 1.0);
    auto e = evaluate_weighted(model, mixed.features, mixed.targets, ones);
    d.mixed_losses = std::move(e.losses);
    r.loss = e.loss;
    r.gradients = std::move(e.gradients);
    return r;
}

BatchResult mentormix_batch(const Batch& batch, const MLPModel& model, CurriculumState& state,
                            const MentorMixConfig& config, Rng& rng, const BatchHooks& hooks) {
    check_batch(batch, model, 2);
    config.validate();
    const std::size_t b = batch.size();
    check_override(hooks.weights, b, "weights");
    check_override(hooks.sampling_probs, b, "sampling_probs");
    if (hooks.partners && hooks.partners->size() != b) throw DimensionError("hook 'partners' has wrong length");
    const Matrix targets = one_hot(batch.labels, model.num_classes());

    BatchResult r;
    auto& d = r.diagnostics;

    // Weight: raw losses, percentile, moving-average threshold, binary weights.
    // None of this participates in the gradient.
    d.raw_losses = raw_losses(model, batch.features, targets);
    ema_update(state, percentile(d.raw_losses, state.gamma_p));
    d.gamma_used = hooks.gamma.value_or(state.gamma);
    d.weights_v = hooks.weights ? *hooks.weights : threshold_weights(d.raw_losses, d.gamma_used);

    // Sample: partner distribution within the batch.
    d.sampling_probs = hooks.sampling_probs ? *hooks.sampling_probs
                                            : sampling_distribution(d.weights_v, config.temperature);

    // Mixup: one partner and one lambda per example.
    for (std::size_t i = 0; i < b; ++i) {
        const std::size_t j = hooks.partners ? (*hooks.partners)[i] : sample_partner(d.sampling_probs, rng);
        const double lam = hooks.lambda ? *hooks.lambda : sample_lambda(config.alpha, rng);
        d.partner_index.push_back(j);
        d.lambda_raw.push_back(lam);
        d.lambda_adjusted.push_back(adjust_lambda(lam, d.weights_v[i]));
    }
    const auto mixed = mix_batch(batch, targets, d.partner_index, d.lambda_adjusted);
    auto fw = forward(model, mixed.features);
    d.mixed_losses = softmax_ce(fw.logits, mixed.targets);

    // Weight again: an independent threshold over the mixed losses.
    std::vector<double> final_weights(b, 1.0);
    if (config.second_weighting) {
        if (!state.second_stage) state.second_stage = std::make_unique<CurriculumState>(state.gamma_p, state.ema_decay);
        auto& second = *state.second_stage;
        ema_update(second, percentile(d.mixed_losses, second.gamma_p));
        final_weights = threshold_weights(d.mixed_losses, hooks.second_gamma.value_or(second.gamma));
        d.second_weights = final_weights;
    }

    // The denominator stays |batch| even when second-stage weights are zero.
    r.loss = weighted_mean(d.mixed_losses, final_weights);
    r.gradients = backward(model, fw.cache, fw.logits, mixed.targets, final_weights);
    return r;
}

BatchResult method_batch(const Batch& batch, const MLPModel& model, CurriculumState& state,
                         const MentorMixConfig& config, Rng& rng) {
    switch (config.method) {
        case Method::vanilla: return vanilla_batch(batch, model);
        case Method::mixup: return mixup_batch(batch, model, config.alpha, rng);
        case Method::mentornet: return mentornet_batch(batch, model, state);
        case Method::mentormix: return mentormix_batch(batch, model, state, config, rng);
    }
    throw ConfigError("unknown method");
}

double expected_mentormix_loss(const Batch& batch, const MLPModel& model, std::span<const double> weights,
                               std::span<const double> probs, std::span<const double> lambdas) {
    check_batch(batch, model, 1);
    const std::size_t b = batch.size();
    if (weights.size() != b || probs.size() != b || lambdas.size() != b) {
        throw DimensionError("expected_mentormix_loss: vectors must match the batch size");
    }
    const Matrix targets = one_hot(batch.labels, model.num_classes());
    double total = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
        // Every example paired with partner j at once.
        const std::vector<std::size_t> partners(b, j);
        std::vector<double> adjusted(b);
        for (std::size_t i = 0; i < b; ++i) adjusted[i] = adjust_lambda(lambdas[i], weights[i]);
        const auto mixed = mix_batch(batch, targets, partners, adjusted);
        const auto losses = raw_losses(model, mixed.features, mixed.targets);
        total += probs[j] * std::accumulate(losses.begin(), losses.end(), 0.0);
    }
    return total / static_cast<double>(b);
}

}  // namespace mmlab
