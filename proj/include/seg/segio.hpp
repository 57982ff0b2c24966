#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "seg/losses.hpp"
#include "seg/models.hpp"
#include "seg/nn.hpp"
#include "seg/synthdata.hpp"

namespace seg {

// SEG1 slice container (little-endian, normative byte layout):
//   "SEG1" | u16 version=1 | u16 phenotype | u32 case_id | u32 slice_idx |
//   u32 h | u32 w | h*w float32 image (row-major) | h*w uint8 mask
// Total size: 24 + 5*h*w bytes.
void write_slice(const std::string& path, const SliceSample& s);
SliceSample read_slice(const std::string& path);

// Trained-parameter dump; carries the ModelConfig needed to rebuild the graph.
void write_params(const std::string& path, const ModelConfig& cfg, const ParamStore<float>& store);
std::pair<ModelConfig, ParamStore<float>> read_params(const std::string& path);

struct ResultRow {
    std::string architecture;
    std::string loss;
    std::uint64_t seed = 0;
    double dice = 0, sensitivity = 0, specificity = 0;
    int epochs = 0;
    long long params = 0;
    bool failed = false;
};

// CSV at 4 decimal places plus an adjacent aligned-text summary table
// (same path with a .txt extension) averaging over seeds.
void write_results(const std::string& path, const std::vector<ResultRow>& rows);

// 8-bit binary portable graymap of values in [0,1].
void write_pgm(const std::string& path, int h, int w, const float* values);

struct GridSpec {
    std::vector<Arch> architectures{Arch::unet, Arch::unetpp};
    std::vector<LossKind> losses{LossKind::bce, LossKind::dice, LossKind::focal,
                                 LossKind::focal_tversky};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    double threshold = 0.5;

    void validate() const;
};

struct FullConfig {
    ModelConfig model;
    LossConfig loss;
    TrainConfig train;
    PhantomSpec data;
    double train_fraction = 0.8;
    GridSpec grid;
    std::vector<std::string> warnings;  // e.g. duplicate keys
};

// Line-oriented `key = value` format with [model]/[loss]/[train]/[data]/[grid]
// sections. Unknown keys are errors; duplicate keys warn, last value wins.
FullConfig parse_config(const std::string& path);
FullConfig parse_config_text(const std::string& text);

}  // namespace seg
