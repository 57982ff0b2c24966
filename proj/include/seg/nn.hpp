#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "seg/kernels.hpp"
#include "seg/rng.hpp"
#include "seg/tensor.hpp"

namespace seg {

enum class OpKind { input, conv, convtranspose, maxpool, relu, sigmoid, concat };

struct GraphNode {
    OpKind kind;
    std::vector<int> inputs;  // node ids, evaluation order = construction order
    int param_id = -1;        // conv / convtranspose only
};

// Shape and hyperparameters of one learnable kernel; the store is built from these.
struct ParamSpec {
    int c_out = 0, c_in = 0, kh = 0, kw = 0;
    int stride = 1, padding = 0;
    bool transposed = false;
};

// Static layer DAG; immutable after construction, shared freely across runs.
struct Graph {
    std::vector<GraphNode> nodes;
    std::vector<ParamSpec> param_specs;
    int output_node = -1;

    int add(OpKind kind, std::vector<int> inputs, int param_id = -1) {
        for (int i : inputs)
            if (i < 0 || i >= static_cast<int>(nodes.size()))
                throw std::invalid_argument("Graph::add: input node out of range");
        nodes.push_back(GraphNode{kind, std::move(inputs), param_id});
        return static_cast<int>(nodes.size()) - 1;
    }

    int add_param(const ParamSpec& spec) {
        param_specs.push_back(spec);
        return static_cast<int>(param_specs.size()) - 1;
    }
};

// Parameters plus SGD momentum buffers, ordered to match Graph::param_specs.
template <typename T>
struct ParamStore {
    struct Entry {
        KernelParams<T> k;
        bool transposed = false;
        Tensor<T> vel_weight;
        std::vector<T> vel_bias;
    };
    std::vector<Entry> entries;
};

template <typename T>
struct Grads {
    std::vector<Tensor<T>> weight;
    std::vector<std::vector<T>> bias;
};

// He-initialized weights, zero biases, fully determined by the seed.
template <typename T>
ParamStore<T> init_params(const Graph& graph, std::uint64_t seed) {
    ParamStore<T> store;
    Rng rng(Rng::mix(seed));
    for (const ParamSpec& s : graph.param_specs) {
        typename ParamStore<T>::Entry e;
        e.k.weight = Tensor<T>(s.c_out, s.c_in, s.kh, s.kw);
        e.k.bias.assign(s.c_out, T(0));
        e.k.stride = s.stride;
        e.k.padding = s.padding;
        e.transposed = s.transposed;
        const double scale = std::sqrt(2.0 / (static_cast<double>(s.c_in) * s.kh * s.kw));
        for (T& wv : e.k.weight.data) wv = static_cast<T>(rng.normal() * scale);
        e.vel_weight = Tensor<T>::zeros_like(e.k.weight);
        e.vel_bias.assign(s.c_out, T(0));
        store.entries.push_back(std::move(e));
    }
    return store;
}

template <typename T>
long long count_params(const ParamStore<T>& store) {
    long long total = 0;
    for (const auto& e : store.entries)
        total += static_cast<long long>(e.k.weight.size()) + static_cast<long long>(e.k.bias.size());
    return total;
}

// Per-step activation cache; forward fills it, backward consumes it.
template <typename T>
struct ForwardCache {
    std::vector<Tensor<T>> outputs;                // one per node
    std::vector<std::vector<std::size_t>> argmax;  // maxpool nodes only
    bool valid = false;
};

template <typename T>
ForwardCache<T> forward(const Graph& graph, const ParamStore<T>& params, const Tensor<T>& batch) {
    ForwardCache<T> cache;
    cache.outputs.resize(graph.nodes.size());
    cache.argmax.resize(graph.nodes.size());
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
        const GraphNode& node = graph.nodes[i];
        switch (node.kind) {
            case OpKind::input:
                cache.outputs[i] = batch;
                break;
            case OpKind::conv:
                cache.outputs[i] =
                    conv2d_forward(cache.outputs[node.inputs[0]], params.entries[node.param_id].k);
                break;
            case OpKind::convtranspose:
                cache.outputs[i] = convtranspose2_forward(cache.outputs[node.inputs[0]],
                                                          params.entries[node.param_id].k);
                break;
            case OpKind::maxpool: {
                auto r = maxpool2_forward(cache.outputs[node.inputs[0]]);
                cache.outputs[i] = std::move(r.output);
                cache.argmax[i] = std::move(r.argmax);
                break;
            }
            case OpKind::relu:
                cache.outputs[i] = relu(cache.outputs[node.inputs[0]]);
                break;
            case OpKind::sigmoid:
                cache.outputs[i] = sigmoid(cache.outputs[node.inputs[0]]);
                break;
            case OpKind::concat: {
                std::vector<const Tensor<T>*> ins;
                ins.reserve(node.inputs.size());
                for (int j : node.inputs) ins.push_back(&cache.outputs[j]);
                cache.outputs[i] = concat_channels(ins);
                break;
            }
        }
    }
    cache.valid = true;
    return cache;
}

// Chain-rule accumulation in reverse construction order.
template <typename T>
Grads<T> backward(const Graph& graph, const ParamStore<T>& params, const ForwardCache<T>& cache,
                  const Tensor<T>& loss_grad) {
    if (!cache.valid) throw std::logic_error("backward called before forward");
    Grads<T> grads;
    grads.weight.resize(params.entries.size());
    grads.bias.resize(params.entries.size());
    for (std::size_t p = 0; p < params.entries.size(); ++p) {
        grads.weight[p] = Tensor<T>::zeros_like(params.entries[p].k.weight);
        grads.bias[p].assign(params.entries[p].k.bias.size(), T(0));
    }
    std::vector<Tensor<T>> node_grad(graph.nodes.size());
    for (std::size_t i = 0; i < graph.nodes.size(); ++i)
        node_grad[i] = Tensor<T>::zeros_like(cache.outputs[i]);
    require_same_shape(loss_grad, cache.outputs[graph.output_node], "backward loss_grad");
    node_grad[graph.output_node] = loss_grad;

    for (int i = static_cast<int>(graph.nodes.size()) - 1; i >= 0; --i) {
        const GraphNode& node = graph.nodes[i];
        const Tensor<T>& up = node_grad[i];
        switch (node.kind) {
            case OpKind::input:
                break;
            case OpKind::conv: {
                auto g = conv2d_backward(cache.outputs[node.inputs[0]],
                                         params.entries[node.param_id].k, up);
                accumulate(node_grad[node.inputs[0]], g.grad_input);
                accumulate(grads.weight[node.param_id], g.grad_weight);
                for (std::size_t b = 0; b < g.grad_bias.size(); ++b)
                    grads.bias[node.param_id][b] += g.grad_bias[b];
                break;
            }
            case OpKind::convtranspose: {
                auto g = convtranspose2_backward(cache.outputs[node.inputs[0]],
                                                 params.entries[node.param_id].k, up);
                accumulate(node_grad[node.inputs[0]], g.grad_input);
                accumulate(grads.weight[node.param_id], g.grad_weight);
                for (std::size_t b = 0; b < g.grad_bias.size(); ++b)
                    grads.bias[node.param_id][b] += g.grad_bias[b];
                break;
            }
            case OpKind::maxpool:
                accumulate(node_grad[node.inputs[0]],
                           maxpool2_backward(cache.argmax[i], up,
                                             cache.outputs[node.inputs[0]].shape));
                break;
            case OpKind::relu:
                accumulate(node_grad[node.inputs[0]],
                           relu_backward(cache.outputs[node.inputs[0]], up));
                break;
            case OpKind::sigmoid:
                accumulate(node_grad[node.inputs[0]], sigmoid_backward(cache.outputs[i], up));
                break;
            case OpKind::concat: {
                std::vector<int> channels;
                channels.reserve(node.inputs.size());
                for (int j : node.inputs) channels.push_back(cache.outputs[j].c());
                auto parts = split_channels(up, channels);
                for (std::size_t j = 0; j < parts.size(); ++j)
                    accumulate(node_grad[node.inputs[j]], parts[j]);
                break;
            }
        }
    }
    return grads;
}

template <typename T>
void accumulate(Tensor<T>& into, const Tensor<T>& delta) {
    require_same_shape(into, delta, "accumulate");
    for (std::size_t i = 0; i < into.size(); ++i) into.data[i] += delta.data[i];
}

struct TrainConfig {
    double learning_rate = 0.1;
    double momentum = 0.9;
    double clip_norm = 0.1;  // global L2 gradient-norm ceiling; 0 disables
    int epochs = 30;
    int batch_size = 8;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(learning_rate > 0)) throw std::invalid_argument("train: learning_rate must be > 0");
        if (!(momentum >= 0 && momentum < 1))
            throw std::invalid_argument("train: momentum must be in [0,1)");
        if (clip_norm < 0) throw std::invalid_argument("train: clip_norm must be non-negative");
        if (epochs < 0) throw std::invalid_argument("train: epochs must be non-negative");
        if (batch_size < 1) throw std::invalid_argument("train: batch_size must be positive");
    }
};

// Scales every gradient down uniformly when the global L2 norm exceeds the
// ceiling; unnormalized overlap losses can spike otherwise.
template <typename T>
void clip_gradients(Grads<T>& grads, double clip_norm) {
    if (clip_norm <= 0) return;
    double sq = 0;
    for (const auto& w : grads.weight)
        for (T v : w.data) sq += static_cast<double>(v) * v;
    for (const auto& b : grads.bias)
        for (T v : b) sq += static_cast<double>(v) * v;
    double norm = std::sqrt(sq);
    if (norm <= clip_norm) return;
    const T scale = static_cast<T>(clip_norm / norm);
    for (auto& w : grads.weight)
        for (T& v : w.data) v *= scale;
    for (auto& b : grads.bias)
        for (T& v : b) v *= scale;
}

// v <- momentum*v + g ; theta <- theta - lr*v, in store order.
template <typename T>
void sgd_step(ParamStore<T>& params, const Grads<T>& grads, const TrainConfig& cfg) {
    if (grads.weight.size() != params.entries.size())
        throw std::invalid_argument("sgd_step: gradient count does not match store");
    const T mu = static_cast<T>(cfg.momentum);
    const T lr = static_cast<T>(cfg.learning_rate);
    for (std::size_t p = 0; p < params.entries.size(); ++p) {
        auto& e = params.entries[p];
        require_same_shape(e.k.weight, grads.weight[p], "sgd_step weight");
        if (grads.bias[p].size() != e.k.bias.size())
            throw std::invalid_argument("sgd_step: bias length mismatch");
        for (std::size_t i = 0; i < e.k.weight.size(); ++i) {
            e.vel_weight.data[i] = mu * e.vel_weight.data[i] + grads.weight[p].data[i];
            e.k.weight.data[i] -= lr * e.vel_weight.data[i];
        }
        for (std::size_t i = 0; i < e.k.bias.size(); ++i) {
            e.vel_bias[i] = mu * e.vel_bias[i] + grads.bias[p][i];
            e.k.bias[i] -= lr * e.vel_bias[i];
        }
    }
}

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0;
    double val_dice = 0;
};

}  // namespace seg
