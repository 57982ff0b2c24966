#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "seg/nn.hpp"

namespace seg {

enum class Arch { unet, unetpp };

inline const char* arch_name(Arch a) { return a == Arch::unet ? "unet" : "unetpp"; }

struct ModelConfig {
    Arch arch = Arch::unet;
    int depth = 3;          // number of 2x downsamplings
    int base_channels = 8;  // width at full resolution, doubling per level
    int in_channels = 1;

    void validate() const {
        if (depth < 1) throw std::invalid_argument("model: depth must be >= 1");
        if (base_channels < 1) throw std::invalid_argument("model: base_channels must be >= 1");
        if (in_channels < 1) throw std::invalid_argument("model: in_channels must be >= 1");
    }
};

struct Model {
    ModelConfig cfg;
    Graph graph;
};

namespace detail {

// Two (conv 3x3 pad 1 -> relu) blocks; returns the final relu node.
inline int conv_block(Graph& g, int input, int c_in, int c_out) {
    int p1 = g.add_param({c_out, c_in, 3, 3, 1, 1, false});
    int n = g.add(OpKind::conv, {input}, p1);
    n = g.add(OpKind::relu, {n});
    int p2 = g.add_param({c_out, c_out, 3, 3, 1, 1, false});
    n = g.add(OpKind::conv, {n}, p2);
    n = g.add(OpKind::relu, {n});
    return n;
}

inline int upsample(Graph& g, int input, int c_in, int c_out) {
    int p = g.add_param({c_out, c_in, 2, 2, 2, 0, true});
    return g.add(OpKind::convtranspose, {input}, p);
}

inline int head(Graph& g, int input, int c_in) {
    int p = g.add_param({1, c_in, 1, 1, 1, 0, false});
    int n = g.add(OpKind::conv, {input}, p);
    return g.add(OpKind::sigmoid, {n});
}

}  // namespace detail

// Encoder of `depth` levels, bottleneck, mirrored decoder with plain skips.
inline Model build_unet2d(const ModelConfig& cfg) {
    cfg.validate();
    if (cfg.arch != Arch::unet) throw std::invalid_argument("build_unet2d: config arch is not unet");
    Model m{cfg, {}};
    Graph& g = m.graph;
    auto width = [&](int level) { return cfg.base_channels << level; };

    int cur = g.add(OpKind::input, {});
    std::vector<int> skips;
    int c_prev = cfg.in_channels;
    for (int level = 0; level < cfg.depth; ++level) {
        cur = detail::conv_block(g, cur, c_prev, width(level));
        skips.push_back(cur);
        cur = g.add(OpKind::maxpool, {cur});
        c_prev = width(level);
    }
    cur = detail::conv_block(g, cur, c_prev, width(cfg.depth));
    for (int level = cfg.depth - 1; level >= 0; --level) {
        int up = detail::upsample(g, cur, width(level + 1), width(level));
        int cat = g.add(OpKind::concat, {up, skips[level]});
        cur = detail::conv_block(g, cat, 2 * width(level), width(level));
    }
    g.output_node = detail::head(g, cur, width(0));
    return m;
}

// Nested-skip grid: node (i,j) concatenates all previous columns at level i
// plus an upsampling of node (i+1, j-1). Head reads (0, depth).
inline Model build_unetpp2d(const ModelConfig& cfg) {
    cfg.validate();
    if (cfg.arch != Arch::unetpp)
        throw std::invalid_argument("build_unetpp2d: config arch is not unetpp");
    Model m{cfg, {}};
    Graph& g = m.graph;
    auto width = [&](int level) { return cfg.base_channels << level; };

    int input = g.add(OpKind::input, {});
    const int levels = cfg.depth + 1;
    // grid[i][j] = output node of X(i,j); column 0 is the encoder chain
    std::vector<std::vector<int>> grid(levels);
    int cur = input;
    int c_prev = cfg.in_channels;
    for (int i = 0; i < levels; ++i) {
        if (i > 0) cur = g.add(OpKind::maxpool, {cur});
        cur = detail::conv_block(g, cur, c_prev, width(i));
        grid[i].push_back(cur);
        c_prev = width(i);
    }
    for (int j = 1; j <= cfg.depth; ++j) {
        for (int i = 0; i + j <= cfg.depth; ++i) {
            int up = detail::upsample(g, grid[i + 1][j - 1], width(i + 1), width(i));
            std::vector<int> cat_inputs(grid[i].begin(), grid[i].end());
            cat_inputs.push_back(up);
            int cat = g.add(OpKind::concat, cat_inputs);
            int node = detail::conv_block(g, cat, (j + 1) * width(i), width(i));
            grid[i].push_back(node);
        }
    }
    g.output_node = detail::head(g, grid[0][cfg.depth], width(0));
    return m;
}

inline Model build_model(const ModelConfig& cfg) {
    return cfg.arch == Arch::unet ? build_unet2d(cfg) : build_unetpp2d(cfg);
}

template <typename T>
Tensor<T> model_forward(const Model& m, const ParamStore<T>& params, const Tensor<T>& batch) {
    const int mult = 1 << m.cfg.depth;
    if (batch.h() % mult != 0 || batch.w() % mult != 0)
        throw std::invalid_argument("forward: spatial dims of " + batch.shape_str() +
                                    " must be divisible by " + std::to_string(mult));
    auto cache = forward(m.graph, params, batch);
    return cache.outputs[m.graph.output_node];
}

// Binary mask: 1 where probability >= threshold.
template <typename T>
Tensor<T> predict(const Model& m, const ParamStore<T>& params, const Tensor<T>& batch,
                  double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("predict: threshold must be in (0,1)");
    Tensor<T> prob = model_forward(m, params, batch);
    for (T& v : prob.data) v = v >= static_cast<T>(threshold) ? T(1) : T(0);
    return prob;
}

template <typename T>
Tensor<T> binarize(const Tensor<T>& prob, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("binarize: threshold must be in (0,1)");
    Tensor<T> out = prob;
    for (T& v : out.data) v = v >= static_cast<T>(threshold) ? T(1) : T(0);
    return out;
}

}  // namespace seg
