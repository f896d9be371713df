#include "mmlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

#include "mmlab/random.hpp"

namespace mmlab {

namespace {

constexpr std::size_t kEvalChunk = 512;

bool is_mixing(Method m) { return m == Method::mixup || m == Method::mentormix; }

Batch gather(const std::vector<LabeledExample>& examples, std::span<const std::size_t> idx, std::size_t dim) {
    Batch batch{Matrix(idx.size(), dim), {}};
    batch.labels.reserve(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const auto& ex = examples[idx[r]];
        std::copy(ex.features.begin(), ex.features.end(), batch.features.row(r).begin());
        batch.labels.push_back(ex.observed_label);
    }
    return batch;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

void TrainConfig::validate() const {
    method.validate();
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and >= 0");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw ConfigError("lr_decay_factor must lie in (0, 1]");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (batch_size < 2 && is_mixing(method.method)) throw ConfigError("mixup-family methods need batch_size >= 2");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    for (std::size_t h : model.hidden) {
        if (h == 0) throw ConfigError("hidden layer widths must be positive");
    }
}

std::string TrainConfig::describe() const {
    std::ostringstream os;
    os << "method=" << to_string(method.method) << ";alpha=" << format_double(method.alpha)
       << ";gamma_p=" << format_double(method.gamma_p) << ";temperature=" << format_double(method.temperature)
       << ";ema_decay=" << format_double(method.ema_decay) << ";second_weighting=" << method.second_weighting
       << ";hidden=";
    for (std::size_t i = 0; i < model.hidden.size(); ++i) os << (i ? "x" : "") << model.hidden[i];
    os << ";activation=" << (model.activation == Activation::relu ? "relu" : "tanh")
       << ";lr=" << format_double(lr) << ";lr_decay_factor=" << format_double(lr_decay_factor)
       << ";lr_decay_every=" << lr_decay_every << ";momentum=" << format_double(momentum)
       << ";nesterov=" << nesterov << ";weight_decay=" << format_double(weight_decay)
       << ";batch_size=" << batch_size << ";max_epochs=" << max_epochs << ";eval_every=" << eval_every
       << ";seed=" << seed;
    return os.str();
}

double relative_drop(double peak, double final_accuracy) {
    return peak > 0.0 ? (peak - final_accuracy) / peak : 0.0;
}

void summarize(RunResult& result) {
    if (result.eval_history.empty()) {
        result.peak_accuracy = result.final_accuracy = result.drop = 0.0;
        return;
    }
    result.peak_accuracy = 0.0;
    for (const auto& e : result.eval_history) result.peak_accuracy = std::max(result.peak_accuracy, e.val_acc);
    result.final_accuracy = result.eval_history.back().val_acc;
    result.drop = relative_drop(result.peak_accuracy, result.final_accuracy);
}

double evaluate(const MLPModel& model, const std::vector<LabeledExample>& examples) {
    if (examples.empty()) throw ContractError("evaluate on an empty set");
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < examples.size(); start += kEvalChunk) {
        const std::size_t end = std::min(examples.size(), start + kEvalChunk);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const Batch batch = gather(examples, idx, model.input_dim());
        const Matrix logits = predict_logits(model, batch.features);
        for (std::size_t r = 0; r < logits.rows(); ++r) {
            auto row = logits.row(r);
            const auto pred = std::max_element(row.begin(), row.end()) - row.begin();
            if (pred == batch.labels[r]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

std::string run_log_header() { return "step,train_acc,val_acc,gamma,mean_weight"; }

RunResult train_run(const NoisySplit& split, const TrainConfig& config, std::ostream* log) {
    config.validate();
    if (split.train.size() < config.batch_size) throw ConfigError("training set smaller than one batch");
    if (split.val.empty()) throw ConfigError("validation set is empty");

    const auto dim = static_cast<std::size_t>(split.dim);
    std::vector<std::size_t> dims{dim};
    dims.insert(dims.end(), config.model.hidden.begin(), config.model.hidden.end());
    dims.push_back(static_cast<std::size_t>(split.num_classes));

    Rng init_rng(hash_words({config.seed, 1}));
    Rng shuffle_rng(hash_words({config.seed, 2}));
    Rng method_rng(hash_words({config.seed, 3}));

    MLPModel model = make_random_model(dims, config.model.activation, init_rng);
    OptimizerState opt =
        OptimizerState::for_model(model, config.lr, config.momentum, config.weight_decay, config.nesterov);
    CurriculumState state = config.method.make_state();

    const std::size_t steps_per_epoch = split.train.size() / config.batch_size;
    const std::uint64_t decay_every = config.lr_decay_every ? config.lr_decay_every : 2 * steps_per_epoch;
    const std::uint64_t eval_every = config.eval_every ? config.eval_every : steps_per_epoch;
    const std::uint64_t total_steps = steps_per_epoch * config.max_epochs;
    const bool curriculum =
        config.method.method == Method::mentornet || config.method.method == Method::mentormix;

    RunResult result;
    result.fingerprint = hex64(fnv1a(config.describe()));
    if (log) *log << run_log_header() << '\n';

    double weight_sum = 0.0;
    std::size_t weight_count = 0;
    auto record = [&](std::uint64_t step) {
        EvalPoint p;
        p.step = step;
        p.train_acc = evaluate(model, split.train);
        p.val_acc = evaluate(model, split.val);
        p.gamma = curriculum ? state.gamma : 0.0;
        p.mean_weight = weight_count ? weight_sum / static_cast<double>(weight_count) : 1.0;
        weight_sum = 0.0;
        weight_count = 0;
        result.eval_history.push_back(p);
        if (log) {
            *log << p.step << ',' << format_double(p.train_acc) << ',' << format_double(p.val_acc) << ','
                 << format_double(p.gamma) << ',' << format_double(p.mean_weight) << '\n';
        }
    };

    std::vector<std::size_t> order(split.train.size());
    std::iota(order.begin(), order.end(), 0);
    std::uint64_t step = 0;
    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            const Batch batch = gather(split.train, std::span(order).subspan(s * config.batch_size, config.batch_size), dim);
            const BatchResult br = method_batch(batch, model, state, config.method, method_rng);
            if (!std::isfinite(br.loss)) throw DivergedError(step);
            for (double w : br.diagnostics.weights_v) weight_sum += w;
            weight_count += br.diagnostics.weights_v.size();

            opt.learning_rate = config.lr * std::pow(config.lr_decay_factor, static_cast<double>(step / decay_every));
            sgd_step(model, opt, br.gradients);
            ++step;
            if (step % eval_every == 0 || step == total_steps) record(step);
        }
    }
    result.wall_steps = step;
    for (const auto& layer : model.layers) {
        if (!layer.weight.all_finite()) throw DivergedError(step);
    }
    summarize(result);
    return result;
}

}  // namespace mmlab
