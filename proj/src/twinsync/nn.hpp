#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace twinsync::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Layer widths [input, hidden..., classes]. Hidden layers use ReLU, the
// output layer softmax. Every layer carries per-neuron biases.
struct LayerSpec {
    std::vector<std::size_t> sizes;

    void validate() const;

    std::size_t input_width() const { return sizes.front(); }
    std::size_t classes() const { return sizes.back(); }
    std::size_t layer_count() const { return sizes.size() - 1; }
    std::size_t parameter_count() const;

    // Flat layout: for each layer, a row-major (out x in) weight block
    // followed by `out` biases.
    std::size_t weight_offset(std::size_t layer) const;
    std::size_t bias_offset(std::size_t layer) const { return weight_offset(layer) + sizes[layer + 1] * sizes[layer]; }

    bool operator==(const LayerSpec&) const = default;
};

struct ModelWeights {
    LayerSpec spec;
    std::vector<double> values;

    void validate() const;
};

struct Sample {
    std::vector<double> x;
    std::size_t y = 0;

    bool operator==(const Sample&) const = default;
};

struct TrainConfig {
    double learning_rate = 0.01;
    std::size_t max_iterations = 100;
    std::uint64_t seed = 1;
    // 0 selects full-batch gradient descent.
    std::size_t batch_size = 0;

    void validate() const;
};

// Dense, row-per-sample view of a sample list used by the batched kernels.
struct Batch {
    RowMatrix features;
    std::vector<std::size_t> labels;

    std::size_t size() const { return labels.size(); }
};

Batch make_batch(std::span<const Sample> samples, const LayerSpec& spec);
Batch make_batch(const std::vector<std::span<const Sample>>& parts, const LayerSpec& spec);
Batch slice_batch(const Batch& batch, std::span<const std::size_t> rows);

// Glorot-style uniform weights per layer, zero biases.
ModelWeights init_weights(const LayerSpec& spec, std::uint64_t seed);
ModelWeights zero_weights(const LayerSpec& spec);

std::vector<double> forward(const ModelWeights& w, std::span<const double> x);
RowMatrix forward(const ModelWeights& w, const Batch& batch);

struct LossGrad {
    double loss = 0.0;
    std::vector<double> grad;
};

// Mean softmax cross-entropy over the batch and its exact gradient.
LossGrad loss_and_grad(const ModelWeights& w, std::span<const Sample> batch);
LossGrad loss_and_grad(const ModelWeights& w, const Batch& batch);
double loss_only(const ModelWeights& w, const Batch& batch);

// Mean over samples of the squared per-sample gradient of log p(y|x, w).
std::vector<double> mean_squared_score(const ModelWeights& w, const Batch& batch);

ModelWeights gd_step(const ModelWeights& w, std::span<const double> grad, double learning_rate);

std::vector<std::size_t> predict(const ModelWeights& w, const Batch& batch);
std::size_t count_correct(const ModelWeights& w, const Batch& batch);
double evaluate_accuracy(const ModelWeights& w, std::span<const Sample> data);
double evaluate_accuracy(const ModelWeights& w, const Batch& data);

}  // namespace twinsync::nn
