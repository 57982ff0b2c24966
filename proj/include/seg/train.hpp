#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "seg/losses.hpp"
#include "seg/metrics.hpp"
#include "seg/models.hpp"
#include "seg/synthdata.hpp"

namespace seg {

// Per-slice metrics at a fixed threshold, averaged over slices. Slices with
// empty ground truth are excluded from the dice/sensitivity means but kept in
// the specificity mean. `global_pool` switches to whole-dataset voxel pooling.
EvalSummary evaluate_dataset(const Model& model, const ParamStore<float>& params,
                             const Dataset& dataset, double threshold, bool global_pool = false);

struct TrainResult {
    ParamStore<float> params;
    std::vector<EpochStats> log;
};

using EpochHook = std::function<void(int epoch, const Model&, const ParamStore<float>&)>;

// Seeded-shuffle minibatch SGD; deterministic given (seed, dataset, configs).
// Aborts with a diagnostic on the first non-finite loss.
TrainResult train(const Model& model, const Dataset& train_set, const Dataset& val_set,
                  const LossConfig& loss_cfg, const TrainConfig& train_cfg,
                  const EpochHook& hook = {});

// Stacks dataset slices [first, first+count) into one batch tensor pair.
std::pair<Tensor<float>, Tensor<float>> make_batch(const Dataset& ds,
                                                   const std::vector<int>& order, int first,
                                                   int count);

}  // namespace seg
