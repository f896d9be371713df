#include "mmlab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mmlab {

namespace {

void check_dims(const std::vector<std::size_t>& dims) {
    if (dims.size() < 2) throw DimensionError("model needs at least input and output widths");
    for (std::size_t d : dims) {
        if (d == 0) throw DimensionError("layer widths must be positive");
    }
}

double activate(Activation a, double z) { return a == Activation::relu ? std::max(z, 0.0) : std::tanh(z); }

// Derivative expressed through pre-activation z and activation value y.
double activate_grad(Activation a, double z, double y) {
    return a == Activation::relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - y * y;
}

// out = in * W^T + b
Matrix affine(const Matrix& in, const DenseLayer& layer) {
    const std::size_t n = in.rows(), k = in.cols(), o = layer.weight.rows();
    Matrix out(n, o);
    for (std::size_t r = 0; r < n; ++r) {
        const double* x = in.row(r).data();
        double* y = out.row(r).data();
        for (std::size_t j = 0; j < o; ++j) {
            const double* w = layer.weight.row(j).data();
            double acc = layer.bias[j];
            for (std::size_t c = 0; c < k; ++c) acc += x[c] * w[c];
            y[j] = acc;
        }
    }
    return out;
}

void check_input(const MLPModel& model, const Matrix& features) {
    if (model.layers.empty()) throw DimensionError("model has no layers");
    if (features.rows() == 0) throw DimensionError("empty batch");
    if (features.cols() != model.input_dim()) {
        throw DimensionError("feature width " + std::to_string(features.cols()) +
                             " does not match model input " + std::to_string(model.input_dim()));
    }
}

}  // namespace

std::size_t MLPModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

MLPModel make_zero_model(std::vector<std::size_t> layer_dims, Activation activation) {
    check_dims(layer_dims);
    MLPModel model;
    model.activation = activation;
    for (std::size_t k = 0; k + 1 < layer_dims.size(); ++k) {
        model.layers.push_back({Matrix(layer_dims[k + 1], layer_dims[k]),
                                std::vector<double>(layer_dims[k + 1], 0.0)});
    }
    model.layer_dims = std::move(layer_dims);
    return model;
}

MLPModel make_random_model(std::vector<std::size_t> layer_dims, Activation activation, Rng& rng) {
    MLPModel model = make_zero_model(std::move(layer_dims), activation);
    for (auto& layer : model.layers) {
        const double fan_in = static_cast<double>(layer.weight.cols());
        const double fan_out = static_cast<double>(layer.weight.rows());
        const double limit = activation == Activation::relu ? std::sqrt(6.0 / fan_in)
                                                            : std::sqrt(6.0 / (fan_in + fan_out));
        for (double& w : layer.weight.data()) w = (2.0 * rng.uniform() - 1.0) * limit;
    }
    return model;
}

Gradients Gradients::zeros_like(const MLPModel& model) {
    Gradients g;
    for (const auto& l : model.layers) {
        g.weight.emplace_back(l.weight.rows(), l.weight.cols());
        g.bias.emplace_back(l.bias.size(), 0.0);
    }
    return g;
}

bool Gradients::all_zero() const noexcept {
    for (const auto& w : weight) {
        if (std::any_of(w.data().begin(), w.data().end(), [](double v) { return v != 0.0; })) return false;
    }
    for (const auto& b : bias) {
        if (std::any_of(b.begin(), b.end(), [](double v) { return v != 0.0; })) return false;
    }
    return true;
}

ForwardResult forward(const MLPModel& model, const Matrix& features) {
    check_input(model, features);
    ForwardResult res;
    auto& cache = res.cache;
    cache.activations.push_back(features);
    const std::size_t last = model.layers.size() - 1;
    for (std::size_t k = 0; k <= last; ++k) {
        Matrix z = affine(cache.activations.back(), model.layers[k]);
        if (k == last) {
            res.logits = z;
            cache.pre_activations.push_back(std::move(z));
        } else {
            Matrix a = z;
            for (double& v : a.data()) v = activate(model.activation, v);
            cache.pre_activations.push_back(std::move(z));
            cache.activations.push_back(std::move(a));
        }
    }
    return res;
}

Matrix predict_logits(const MLPModel& model, const Matrix& features) {
    check_input(model, features);
    Matrix a = features;
    for (std::size_t k = 0; k < model.layers.size(); ++k) {
        a = affine(a, model.layers[k]);
        if (k + 1 < model.layers.size()) {
            for (double& v : a.data()) v = activate(model.activation, v);
        }
    }
    return a;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto in = logits.row(r);
        auto o = out.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            o[c] = std::exp(in[c] - mx);
            sum += o[c];
        }
        for (double& v : o) v /= sum;
    }
    return out;
}

std::vector<double> softmax_ce(const Matrix& logits, const Matrix& soft_targets) {
    if (logits.rows() != soft_targets.rows() || logits.cols() != soft_targets.cols()) {
        throw DimensionError("logits " + shape_string(logits) + " vs targets " +
                             shape_string(soft_targets));
    }
    std::vector<double> losses(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto z = logits.row(r);
        auto t = soft_targets.row(r);
        double tsum = 0.0;
        for (double v : t) {
            if (!(v >= 0.0)) throw ContractError("target row " + std::to_string(r) + " has a negative entry");
            tsum += v;
        }
        if (std::abs(tsum - 1.0) > 1e-9) {
            throw ContractError("target row " + std::to_string(r) + " sums to " + std::to_string(tsum));
        }
        const double mx = *std::max_element(z.begin(), z.end());
        double se = 0.0;
        for (double v : z) se += std::exp(v - mx);
        const double lse = mx + std::log(se);
        double loss = 0.0;
        for (std::size_t c = 0; c < z.size(); ++c) {
            if (t[c] != 0.0) loss += t[c] * (lse - z[c]);
        }
        losses[r] = std::max(loss, 0.0);
    }
    return losses;
}

Gradients backward(const MLPModel& model, const ForwardCache& cache, const Matrix& logits,
                   const Matrix& soft_targets, std::span<const double> per_example_weights) {
    if (cache.empty() || cache.pre_activations.size() != model.layers.size()) {
        throw ContractError("backward called without a matching forward cache");
    }
    const std::size_t b = cache.batch_size();
    if (logits.rows() != b || soft_targets.rows() != b || per_example_weights.size() != b ||
        logits.cols() != model.num_classes() || soft_targets.cols() != logits.cols()) {
        throw DimensionError("backward: batch shapes disagree");
    }
    for (double w : per_example_weights) {
        if (!(w >= 0.0 && w <= 1.0)) throw ContractError("per-example weights must lie in [0,1]");
    }

    // dL/dlogits = w_i (softmax_i - t_i) / b
    Matrix delta = softmax_rows(logits);
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t r = 0; r < b; ++r) {
        const double scale = per_example_weights[r] * inv_b;
        auto d = delta.row(r);
        auto t = soft_targets.row(r);
        for (std::size_t c = 0; c < d.size(); ++c) d[c] = scale == 0.0 ? 0.0 : scale * (d[c] - t[c]);
    }

    Gradients g = Gradients::zeros_like(model);
    for (std::size_t k = model.layers.size(); k-- > 0;) {
        const Matrix& in = cache.activations[k];
        const DenseLayer& layer = model.layers[k];
        Matrix& gw = g.weight[k];
        auto& gb = g.bias[k];
        const std::size_t out_dim = layer.weight.rows(), in_dim = layer.weight.cols();
        for (std::size_t r = 0; r < b; ++r) {
            const double* d = delta.row(r).data();
            const double* x = in.row(r).data();
            for (std::size_t j = 0; j < out_dim; ++j) {
                if (d[j] == 0.0) continue;
                gb[j] += d[j];
                double* gwr = gw.row(j).data();
                for (std::size_t c = 0; c < in_dim; ++c) gwr[c] += d[j] * x[c];
            }
        }
        if (k == 0) break;
        Matrix prev(b, in_dim);
        const Matrix& z_prev = cache.pre_activations[k - 1];
        for (std::size_t r = 0; r < b; ++r) {
            const double* d = delta.row(r).data();
            double* p = prev.row(r).data();
            for (std::size_t j = 0; j < out_dim; ++j) {
                if (d[j] == 0.0) continue;
                const double* w = layer.weight.row(j).data();
                for (std::size_t c = 0; c < in_dim; ++c) p[c] += d[j] * w[c];
            }
            for (std::size_t c = 0; c < in_dim; ++c) {
                p[c] *= activate_grad(model.activation, z_prev(r, c), in(r, c));
            }
        }
        delta = std::move(prev);
    }
    return g;
}

Matrix one_hot(std::span<const int> labels, std::size_t num_classes) {
    Matrix out(labels.size(), num_classes);
    for (std::size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= num_classes) {
            throw ContractError("label " + std::to_string(labels[r]) + " out of range");
        }
        out(r, static_cast<std::size_t>(labels[r])) = 1.0;
    }
    return out;
}

OptimizerState OptimizerState::for_model(const MLPModel& model, double learning_rate, double momentum,
                                         double weight_decay, bool nesterov) {
    if (!(learning_rate >= 0.0)) throw ContractError("learning rate must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("momentum must lie in [0,1)");
    if (!(weight_decay >= 0.0)) throw ContractError("weight decay must be non-negative");
    return {Gradients::zeros_like(model), learning_rate, momentum, weight_decay, nesterov};
}

void sgd_step(MLPModel& model, OptimizerState& opt, const Gradients& grads) {
    if (grads.weight.size() != model.layers.size() || opt.velocity.weight.size() != model.layers.size()) {
        throw DimensionError("sgd_step: gradient/model layer count mismatch");
    }
    const double lr = opt.learning_rate, mu = opt.momentum;
    auto update = [&](std::span<double> param, std::span<const double> grad, std::span<double> vel,
                      double decay) {
        if (param.size() != grad.size() || param.size() != vel.size()) {
            throw DimensionError("sgd_step: parameter shape mismatch");
        }
        for (std::size_t i = 0; i < param.size(); ++i) {
            const double g = grad[i] + 2.0 * decay * param[i];
            vel[i] = mu * vel[i] + g;
            const double step = opt.nesterov ? g + mu * vel[i] : vel[i];
            param[i] -= lr * step;
        }
    };
    for (std::size_t k = 0; k < model.layers.size(); ++k) {
        update(model.layers[k].weight.data(), grads.weight[k].data(), opt.velocity.weight[k].data(),
               opt.weight_decay);
        update(model.layers[k].bias, grads.bias[k], opt.velocity.bias[k], 0.0);
    }
}

}  // namespace mmlab
