#include <doctest.h>

#include "seg/models.hpp"
#include "seg/rng.hpp"

using namespace seg;

namespace {

Tensor<float> random_image(int n, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<float> t(n, 1, h, w);
    for (float& v : t.data) v = static_cast<float>(rng.uniform());
    return t;
}

}  // namespace

TEST_CASE("unet depth 1 base 1 maps 2x2 to 2x2") {
    ModelConfig cfg{Arch::unet, 1, 1, 1};
    Model m = build_unet2d(cfg);
    auto params = init_params<float>(m.graph, 3);
    auto out = model_forward(m, params, random_image(1, 2, 2, 5));
    CHECK(out.shape == std::array<int, 4>{1, 1, 2, 2});
    for (float v : out.data) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("unet decoder receives one skip per level") {
    ModelConfig cfg{Arch::unet, 3, 4, 1};
    Model m = build_unet2d(cfg);
    int concats = 0;
    for (const auto& node : m.graph.nodes)
        if (node.kind == OpKind::concat) {
            ++concats;
            CHECK(node.inputs.size() == 2);
        }
    CHECK(concats == 3);
}

TEST_CASE("documented config lands near the 800k parameter mark") {
    ModelConfig cfg{Arch::unet, 4, 10, 1};
    Model m = build_unet2d(cfg);
    auto params = init_params<float>(m.graph, 1);
    long long n = count_params(params);
    CHECK(n == 758571);
    CHECK(n >= 700000);
    CHECK(n <= 900000);
}

TEST_CASE("unetpp depth 1 matches unet depth 1 parameter count") {
    ModelConfig ucfg{Arch::unet, 1, 3, 1};
    ModelConfig pcfg{Arch::unetpp, 1, 3, 1};
    auto u = init_params<float>(build_unet2d(ucfg).graph, 7);
    auto p = init_params<float>(build_unetpp2d(pcfg).graph, 7);
    CHECK(count_params(u) == count_params(p));
}

TEST_CASE("unetpp dense fan-in at depth 3") {
    ModelConfig cfg{Arch::unetpp, 3, 4, 1};
    Model m = build_unetpp2d(cfg);
    // X(0,3) concatenates X(0,0..2) plus one upsample: 4 inputs
    bool found4 = false;
    for (const auto& node : m.graph.nodes)
        if (node.kind == OpKind::concat && node.inputs.size() == 4) found4 = true;
    CHECK(found4);
    // its first conv fuses 4 level-0 feature maps
    bool found_fanin = false;
    for (const auto& spec : m.graph.param_specs)
        if (!spec.transposed && spec.c_in == 4 * cfg.base_channels &&
            spec.c_out == cfg.base_channels && spec.kh == 3)
            found_fanin = true;
    CHECK(found_fanin);
}

TEST_CASE("unetpp has more parameters than unet at depth >= 2") {
    ModelConfig ucfg{Arch::unet, 2, 4, 1};
    ModelConfig pcfg{Arch::unetpp, 2, 4, 1};
    auto u = init_params<float>(build_unet2d(ucfg).graph, 7);
    auto p = init_params<float>(build_unetpp2d(pcfg).graph, 7);
    CHECK(count_params(p) > count_params(u));
}

TEST_CASE("count_params basics") {
    Graph g;
    g.add_param({16, 1, 3, 3, 1, 1, false});
    auto store = init_params<float>(g, 1);
    CHECK(count_params(store) == 160);

    ParamStore<float> empty;
    CHECK(count_params(empty) == 0);
}

TEST_CASE("count is invariant under training steps") {
    ModelConfig cfg{Arch::unet, 1, 2, 1};
    Model m = build_unet2d(cfg);
    auto params = init_params<float>(m.graph, 1);
    long long before = count_params(params);
    Grads<float> grads;
    for (const auto& e : params.entries) {
        grads.weight.push_back(Tensor<float>::zeros_like(e.k.weight));
        grads.bias.emplace_back(e.k.bias.size(), 1.0f);
    }
    TrainConfig tc;
    sgd_step(params, grads, tc);
    CHECK(count_params(params) == before);
}

TEST_CASE("output dims equal input dims across configs") {
    for (Arch arch : {Arch::unet, Arch::unetpp})
        for (int depth : {1, 2, 3})
            for (int dim : {8, 16, 32}) {
                ModelConfig cfg{arch, depth, 2, 1};
                Model m = build_model(cfg);
                auto params = init_params<float>(m.graph, 11);
                auto out = model_forward(m, params, random_image(1, dim, dim, 13));
                CHECK(out.shape == std::array<int, 4>{1, 1, dim, dim});
            }
}

TEST_CASE("forward rejects indivisible spatial dims") {
    ModelConfig cfg{Arch::unet, 3, 2, 1};
    Model m = build_unet2d(cfg);
    auto params = init_params<float>(m.graph, 1);
    CHECK_THROWS_WITH_AS(model_forward(m, params, random_image(1, 12, 12, 3)),
                         doctest::Contains("divisible by 8"), std::invalid_argument);
}

TEST_CASE("forward is pure") {
    ModelConfig cfg{Arch::unetpp, 2, 2, 1};
    Model m = build_unetpp2d(cfg);
    auto params = init_params<float>(m.graph, 9);
    auto batch = random_image(2, 8, 8, 21);
    auto a = model_forward(m, params, batch);
    auto b = model_forward(m, params, batch);
    CHECK(a.data == b.data);
}

TEST_CASE("predict thresholding") {
    Tensor<float> prob(1, 1, 1, 3);
    prob.data = {0.9f, 0.5f, 0.4999f};
    auto mask = binarize(prob, 0.5);
    CHECK(mask.data[0] == 1.0f);
    CHECK(mask.data[1] == 1.0f);  // >= convention at the boundary
    CHECK(mask.data[2] == 0.0f);

    CHECK_THROWS_AS(binarize(prob, 1.5), std::invalid_argument);

    // monotone: mask at a higher threshold is a subset
    auto lo = binarize(prob, 0.45);
    auto hi = binarize(prob, 0.55);
    for (std::size_t i = 0; i < prob.size(); ++i)
        CHECK((hi.data[i] == 0.0f || lo.data[i] == 1.0f));
}
