#include "seg/train.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "seg/rng.hpp"

namespace seg {

std::pair<Tensor<float>, Tensor<float>> make_batch(const Dataset& ds,
                                                   const std::vector<int>& order, int first,
                                                   int count) {
    const int h = ds[order[first]].image.h(), w = ds[order[first]].image.w();
    Tensor<float> images(count, 1, h, w), masks(count, 1, h, w);
    for (int b = 0; b < count; ++b) {
        const SliceSample& s = ds[order[first + b]];
        if (s.image.h() != h || s.image.w() != w)
            throw std::invalid_argument("make_batch: slice dims differ within dataset");
        std::copy(s.image.data.begin(), s.image.data.end(),
                  images.data.begin() + static_cast<std::size_t>(b) * h * w);
        std::copy(s.mask.data.begin(), s.mask.data.end(),
                  masks.data.begin() + static_cast<std::size_t>(b) * h * w);
    }
    return {std::move(images), std::move(masks)};
}

EvalSummary evaluate_dataset(const Model& model, const ParamStore<float>& params,
                             const Dataset& dataset, double threshold, bool global_pool) {
    if (dataset.empty()) throw std::invalid_argument("evaluate_dataset: empty dataset");
    std::vector<int> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    ConfusionCounts pooled;
    double dice_sum = 0, sens_sum = 0, spec_sum = 0;
    int dice_n = 0, spec_n = 0;

    const int chunk = 16;
    for (int first = 0; first < static_cast<int>(dataset.size()); first += chunk) {
        int count = std::min(chunk, static_cast<int>(dataset.size()) - first);
        auto [images, truth] = make_batch(dataset, order, first, count);
        Tensor<float> pred = predict(model, params, images, threshold);
        for (int b = 0; b < count; ++b) {
            ConfusionCounts c;
            const std::size_t plane = static_cast<std::size_t>(pred.h()) * pred.w();
            for (std::size_t i = b * plane; i < (b + 1) * plane; ++i) {
                bool p = pred.data[i] != 0.0f, t = truth.data[i] != 0.0f;
                if (t)
                    (p ? c.tp : c.fn)++;
                else
                    (p ? c.fp : c.tn)++;
            }
            pooled.tp += c.tp;
            pooled.fp += c.fp;
            pooled.fn += c.fn;
            pooled.tn += c.tn;
            if (c.tp + c.fn > 0) {
                dice_sum += dice_coefficient(c);
                sens_sum += sensitivity(c);
                ++dice_n;
            }
            spec_sum += specificity(c);
            ++spec_n;
        }
    }

    EvalSummary out;
    out.slices = static_cast<int>(dataset.size());
    if (global_pool) {
        out.dice = dice_coefficient(pooled);
        out.sensitivity = sensitivity(pooled);
        out.specificity = specificity(pooled);
    } else {
        out.dice = dice_n > 0 ? dice_sum / dice_n : 1.0;
        out.sensitivity = dice_n > 0 ? sens_sum / dice_n : 1.0;
        out.specificity = spec_n > 0 ? spec_sum / spec_n : 1.0;
    }
    return out;
}

TrainResult train(const Model& model, const Dataset& train_set, const Dataset& val_set,
                  const LossConfig& loss_cfg, const TrainConfig& train_cfg,
                  const EpochHook& hook) {
    train_cfg.validate();
    loss_cfg.validate();
    if (train_set.empty()) throw std::invalid_argument("train: empty dataset");

    TrainResult result;
    result.params = init_params<float>(model.graph, train_cfg.seed);

    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(Rng::mix(train_cfg.seed ^ 0x5eedf00d5eedf00dULL));

    for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0;
        long long sample_count = 0;
        int step = 0;
        for (int first = 0; first < static_cast<int>(order.size());
             first += train_cfg.batch_size, ++step) {
            int count = std::min(train_cfg.batch_size, static_cast<int>(order.size()) - first);
            auto [images, truth] = make_batch(train_set, order, first, count);
            auto cache = forward(model.graph, result.params, images);
            const Tensor<float>& prob = cache.outputs[model.graph.output_node];
            LossResult<float> loss = eval_loss(truth, prob, loss_cfg);
            if (!std::isfinite(loss.value))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + " step " + std::to_string(step));
            Grads<float> grads = backward(model.graph, result.params, cache, loss.grad);
            clip_gradients(grads, train_cfg.clip_norm);
            sgd_step(result.params, grads, train_cfg);
            loss_sum += loss.value * count;
            sample_count += count;
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = sample_count ? loss_sum / static_cast<double>(sample_count) : 0.0;
        stats.val_dice =
            val_set.empty() ? 0.0 : evaluate_dataset(model, result.params, val_set, 0.5).dice;
        result.log.push_back(stats);
        if (hook) hook(epoch, model, result.params);
    }
    return result;
}

}  // namespace seg
