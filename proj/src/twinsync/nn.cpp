#include "twinsync/nn.hpp"

#include <cmath>
#include <random>
#include <string>

#include "twinsync/errors.hpp"

namespace twinsync::nn {
namespace {

using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;
using MutVecMap = Eigen::Map<Eigen::RowVectorXd>;

ConstMap layer_weights(const ModelWeights& w, std::size_t l) {
    const auto& s = w.spec.sizes;
    return ConstMap(w.values.data() + w.spec.weight_offset(l), static_cast<Eigen::Index>(s[l + 1]),
                    static_cast<Eigen::Index>(s[l]));
}

ConstVecMap layer_bias(const ModelWeights& w, std::size_t l) {
    return ConstVecMap(w.values.data() + w.spec.bias_offset(l), static_cast<Eigen::Index>(w.spec.sizes[l + 1]));
}

// Pre-activations and activations of every layer for one batch.
struct Trace {
    std::vector<RowMatrix> inputs;  // inputs[l] feeds layer l
    std::vector<RowMatrix> pre;     // pre[l] = inputs[l] * W^T + b
};

Trace run_forward(const ModelWeights& w, const RowMatrix& x) {
    const std::size_t layers = w.spec.layer_count();
    Trace t;
    t.inputs.reserve(layers);
    t.pre.reserve(layers);
    t.inputs.push_back(x);
    for (std::size_t l = 0; l < layers; ++l) {
        RowMatrix z = t.inputs[l] * layer_weights(w, l).transpose();
        z.rowwise() += layer_bias(w, l);
        if (l + 1 < layers) t.inputs.push_back(z.cwiseMax(0.0));
        t.pre.push_back(std::move(z));
    }
    return t;
}

// Row-wise softmax with max-logit subtraction. Also returns log-sum-exp per row.
RowMatrix softmax_rows(const RowMatrix& logits, Eigen::VectorXd* lse) {
    RowMatrix p(logits.rows(), logits.cols());
    if (lse) lse->resize(logits.rows());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            const double e = std::exp(logits(i, c) - m);
            p(i, c) = e;
            sum += e;
        }
        p.row(i) /= sum;
        if (lse) (*lse)(i) = m + std::log(sum);
    }
    return p;
}

void check_batch(const ModelWeights& w, const Batch& batch) {
    require(batch.size() > 0, ErrorKind::EmptyInput, "empty batch");
    require(static_cast<std::size_t>(batch.features.cols()) == w.spec.input_width(), ErrorKind::Shape,
            "input width " + std::to_string(batch.features.cols()) + " does not match model input " +
                std::to_string(w.spec.input_width()));
    require(static_cast<std::size_t>(batch.features.rows()) == batch.size(), ErrorKind::Shape,
            "feature rows do not match label count");
}

// Gradient of the per-sample negative log-likelihood with respect to the
// logits: softmax(z) - onehot(y).
RowMatrix logit_residual(const RowMatrix& probs, const std::vector<std::size_t>& labels) {
    RowMatrix d = probs;
    for (std::size_t i = 0; i < labels.size(); ++i) d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(labels[i])) -= 1.0;
    return d;
}

}  // namespace

void LayerSpec::validate() const {
    require(sizes.size() >= 3, ErrorKind::InvalidArgument, "layer spec needs an input, at least one hidden layer and an output");
    for (auto s : sizes) require(s >= 1, ErrorKind::InvalidArgument, "layer widths must be >= 1");
}

std::size_t LayerSpec::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l] * sizes[l + 1] + sizes[l + 1];
    return n;
}

std::size_t LayerSpec::weight_offset(std::size_t layer) const {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l) off += sizes[l] * sizes[l + 1] + sizes[l + 1];
    return off;
}

void ModelWeights::validate() const {
    spec.validate();
    require(values.size() == spec.parameter_count(), ErrorKind::Shape,
            "weight vector has " + std::to_string(values.size()) + " entries, spec implies " +
                std::to_string(spec.parameter_count()));
}

void TrainConfig::validate() const {
    require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::InvalidArgument, "learning rate must be > 0");
}

Batch make_batch(std::span<const Sample> samples, const LayerSpec& spec) {
    return make_batch(std::vector<std::span<const Sample>>{samples}, spec);
}

Batch make_batch(const std::vector<std::span<const Sample>>& parts, const LayerSpec& spec) {
    std::size_t total = 0;
    for (auto p : parts) total += p.size();
    const std::size_t width = spec.input_width();
    Batch b;
    b.features.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(width));
    b.labels.reserve(total);
    Eigen::Index row = 0;
    for (auto part : parts) {
        for (const auto& s : part) {
            require(s.x.size() == width, ErrorKind::Shape,
                    "sample has " + std::to_string(s.x.size()) + " features, model expects " + std::to_string(width));
            require(s.y < spec.classes(), ErrorKind::Shape, "label " + std::to_string(s.y) + " out of range");
            b.features.row(row++) = ConstVecMap(s.x.data(), static_cast<Eigen::Index>(width));
            b.labels.push_back(s.y);
        }
    }
    return b;
}

Batch slice_batch(const Batch& batch, std::span<const std::size_t> rows) {
    Batch out;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), batch.features.cols());
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.features.row(static_cast<Eigen::Index>(i)) = batch.features.row(static_cast<Eigen::Index>(rows[i]));
        out.labels.push_back(batch.labels[rows[i]]);
    }
    return out;
}

ModelWeights init_weights(const LayerSpec& spec, std::uint64_t seed) {
    spec.validate();
    ModelWeights w{spec, std::vector<double>(spec.parameter_count(), 0.0)};
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < spec.layer_count(); ++l) {
        const double limit = std::sqrt(6.0 / static_cast<double>(spec.sizes[l] + spec.sizes[l + 1]));
        std::uniform_real_distribution<double> dist(-limit, limit);
        const std::size_t off = spec.weight_offset(l);
        for (std::size_t i = 0; i < spec.sizes[l] * spec.sizes[l + 1]; ++i) w.values[off + i] = dist(rng);
    }
    return w;
}

ModelWeights zero_weights(const LayerSpec& spec) {
    spec.validate();
    return ModelWeights{spec, std::vector<double>(spec.parameter_count(), 0.0)};
}

std::vector<double> forward(const ModelWeights& w, std::span<const double> x) {
    w.validate();
    require(x.size() == w.spec.input_width(), ErrorKind::Shape,
            "input has " + std::to_string(x.size()) + " features, model expects " + std::to_string(w.spec.input_width()));
    RowMatrix row = ConstVecMap(x.data(), static_cast<Eigen::Index>(x.size()));
    const RowMatrix p = softmax_rows(run_forward(w, row).pre.back(), nullptr);
    return {p.data(), p.data() + p.size()};
}

RowMatrix forward(const ModelWeights& w, const Batch& batch) {
    w.validate();
    check_batch(w, batch);
    return softmax_rows(run_forward(w, batch.features).pre.back(), nullptr);
}

LossGrad loss_and_grad(const ModelWeights& w, std::span<const Sample> batch) {
    require(!batch.empty(), ErrorKind::EmptyInput, "empty batch");
    return loss_and_grad(w, make_batch(batch, w.spec));
}

LossGrad loss_and_grad(const ModelWeights& w, const Batch& batch) {
    w.validate();
    check_batch(w, batch);
    const auto n = static_cast<double>(batch.size());
    const Trace t = run_forward(w, batch.features);

    Eigen::VectorXd lse;
    const RowMatrix probs = softmax_rows(t.pre.back(), &lse);
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        loss += lse(r) - t.pre.back()(r, static_cast<Eigen::Index>(batch.labels[i]));
    }
    loss /= n;

    LossGrad out{loss, std::vector<double>(w.values.size(), 0.0)};
    RowMatrix delta = logit_residual(probs, batch.labels) / n;
    for (std::size_t l = w.spec.layer_count(); l-- > 0;) {
        const auto rows = static_cast<Eigen::Index>(w.spec.sizes[l + 1]);
        const auto cols = static_cast<Eigen::Index>(w.spec.sizes[l]);
        MutMap(out.grad.data() + w.spec.weight_offset(l), rows, cols).noalias() = delta.transpose() * t.inputs[l];
        MutVecMap(out.grad.data() + w.spec.bias_offset(l), rows) = delta.colwise().sum();
        if (l > 0) {
            RowMatrix back = delta * layer_weights(w, l);
            delta = back.cwiseProduct((t.pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    return out;
}

double loss_only(const ModelWeights& w, const Batch& batch) {
    w.validate();
    check_batch(w, batch);
    const Trace t = run_forward(w, batch.features);
    Eigen::VectorXd lse;
    softmax_rows(t.pre.back(), &lse);
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        loss += lse(r) - t.pre.back()(r, static_cast<Eigen::Index>(batch.labels[i]));
    }
    return loss / static_cast<double>(batch.size());
}

std::vector<double> mean_squared_score(const ModelWeights& w, const Batch& batch) {
    w.validate();
    check_batch(w, batch);
    const auto n = static_cast<double>(batch.size());
    const Trace t = run_forward(w, batch.features);
    const RowMatrix probs = softmax_rows(t.pre.back(), nullptr);

    // Row i of `delta` is the per-sample gradient with respect to layer
    // pre-activations, so the squared per-sample weight gradient summed over
    // samples factorises as (delta^2)^T (input^2).
    std::vector<double> out(w.values.size(), 0.0);
    RowMatrix delta = logit_residual(probs, batch.labels);
    for (std::size_t l = w.spec.layer_count(); l-- > 0;) {
        const auto rows = static_cast<Eigen::Index>(w.spec.sizes[l + 1]);
        const auto cols = static_cast<Eigen::Index>(w.spec.sizes[l]);
        const RowMatrix d2 = delta.cwiseProduct(delta);
        const RowMatrix a2 = t.inputs[l].cwiseProduct(t.inputs[l]);
        MutMap(out.data() + w.spec.weight_offset(l), rows, cols).noalias() = (d2.transpose() * a2) / n;
        MutVecMap(out.data() + w.spec.bias_offset(l), rows) = d2.colwise().sum() / n;
        if (l > 0) {
            RowMatrix back = delta * layer_weights(w, l);
            delta = back.cwiseProduct((t.pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    return out;
}

ModelWeights gd_step(const ModelWeights& w, std::span<const double> grad, double learning_rate) {
    require(grad.size() == w.values.size(), ErrorKind::Shape,
            "gradient has " + std::to_string(grad.size()) + " entries, weights have " + std::to_string(w.values.size()));
    require(learning_rate > 0.0, ErrorKind::InvalidArgument, "learning rate must be > 0");
    ModelWeights out = w;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        require(std::isfinite(grad[i]), ErrorKind::Numeric, "non-finite gradient entry at index " + std::to_string(i));
        out.values[i] -= learning_rate * grad[i];
    }
    return out;
}

std::vector<std::size_t> predict(const ModelWeights& w, const Batch& batch) {
    w.validate();
    check_batch(w, batch);
    const RowMatrix probs = softmax_rows(run_forward(w, batch.features).pre.back(), nullptr);
    std::vector<std::size_t> out(batch.size());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        // Ties go to the lowest class index.
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < probs.cols(); ++c)
            if (probs(i, c) > probs(i, best)) best = c;
        out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(best);
    }
    return out;
}

std::size_t count_correct(const ModelWeights& w, const Batch& batch) {
    const auto pred = predict(w, batch);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == batch.labels[i];
    return hits;
}

double evaluate_accuracy(const ModelWeights& w, std::span<const Sample> data) {
    require(!data.empty(), ErrorKind::EmptyInput, "cannot evaluate accuracy on empty data");
    return evaluate_accuracy(w, make_batch(data, w.spec));
}

double evaluate_accuracy(const ModelWeights& w, const Batch& data) {
    return static_cast<double>(count_correct(w, data)) / static_cast<double>(data.size());
}

}  // namespace twinsync::nn
