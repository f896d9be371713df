#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mmlab/matrix.hpp"
#include "mmlab/random.hpp"

namespace mmlab {

enum class Activation { relu, tanh };

/// One affine layer: out = W x + b with W of shape (out_dim x in_dim).
struct DenseLayer {
    Matrix weight;
    std::vector<double> bias;

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Fully connected classifier. Hidden layers apply the activation; the output
/// layer is linear and produces logits.
struct MLPModel {
    std::vector<std::size_t> layer_dims;
    Activation activation = Activation::relu;
    std::vector<DenseLayer> layers;

    std::size_t input_dim() const { return layer_dims.front(); }
    std::size_t num_classes() const { return layer_dims.back(); }
    std::size_t parameter_count() const;

    friend bool operator==(const MLPModel&, const MLPModel&) = default;
};

/// Zero-initialised model with the given layer widths.
MLPModel make_zero_model(std::vector<std::size_t> layer_dims, Activation activation);

/// He-uniform (relu) or Xavier-uniform (tanh) weights, zero biases.
MLPModel make_random_model(std::vector<std::size_t> layer_dims, Activation activation, Rng& rng);

struct ForwardCache {
    // activations[0] is the input batch; activations[k] feeds layer k.
    std::vector<Matrix> activations;
    // pre_activations[k] is layer k's affine output.
    std::vector<Matrix> pre_activations;

    bool empty() const noexcept { return activations.empty(); }
    std::size_t batch_size() const noexcept { return empty() ? 0 : activations.front().rows(); }
};

struct ForwardResult {
    Matrix logits;
    ForwardCache cache;
};

/// Same shapes as the model's parameters.
struct Gradients {
    std::vector<Matrix> weight;
    std::vector<std::vector<double>> bias;

    static Gradients zeros_like(const MLPModel& model);
    bool all_zero() const noexcept;
};

ForwardResult forward(const MLPModel& model, const Matrix& features);

/// Logits only; skips cache construction.
Matrix predict_logits(const MLPModel& model, const Matrix& features);

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits);

/// Per-example cross-entropy against soft targets, computed via log-sum-exp.
/// Each target row must be non-negative and sum to 1 within 1e-9.
std::vector<double> softmax_ce(const Matrix& logits, const Matrix& soft_targets);

/// Gradient of (1/b) * sum_i weight_i * ce_i with respect to the parameters.
/// The weights are constants: nothing flows back into them.
Gradients backward(const MLPModel& model, const ForwardCache& cache, const Matrix& logits,
                   const Matrix& soft_targets, std::span<const double> per_example_weights);

/// One-hot rows for integer labels in [0, num_classes).
Matrix one_hot(std::span<const int> labels, std::size_t num_classes);

struct OptimizerState {
    Gradients velocity;
    double learning_rate = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
    bool nesterov = true;

    static OptimizerState for_model(const MLPModel& model, double learning_rate, double momentum,
                                    double weight_decay, bool nesterov = true);
};

/// SGD with (Nesterov) momentum. Weight decay theta*||W||^2 enters as 2*theta*W
/// on weights only; biases are not decayed.
void sgd_step(MLPModel& model, OptimizerState& opt, const Gradients& grads);

}  // namespace mmlab
