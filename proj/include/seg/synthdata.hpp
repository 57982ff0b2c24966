#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "seg/tensor.hpp"

namespace seg {

enum class Phenotype { iph, contusion, extra_axial };

inline const char* phenotype_name(Phenotype p) {
    switch (p) {
        case Phenotype::iph: return "iph";
        case Phenotype::contusion: return "contusion";
        case Phenotype::extra_axial: return "extra_axial";
    }
    return "?";
}

Phenotype phenotype_from_name(const std::string& name);

// One synthetic phantom slice: image in [0,1], binary lesion mask.
struct SliceSample {
    Tensor<float> image;  // [1,1,h,w]
    Tensor<float> mask;   // same dims, values in {0,1}
    Phenotype phenotype = Phenotype::iph;
    int case_id = 0;
    int slice_idx = 0;
};

using Dataset = std::vector<SliceSample>;

struct PhantomSpec {
    int h = 64, w = 64;
    int n_cases = 30;
    int slices_per_case = 8;
    Phenotype phenotype = Phenotype::iph;
    double noise_std = 0.05;
    std::uint64_t seed = 7;

    void validate() const {
        if (h < 16 || w < 16) throw std::invalid_argument("phantom: dims must be >= 16");
        if (n_cases < 0) throw std::invalid_argument("phantom: n_cases must be non-negative");
        if (slices_per_case < 1)
            throw std::invalid_argument("phantom: slices_per_case must be positive");
        if (noise_std < 0) throw std::invalid_argument("phantom: noise_std must be non-negative");
    }
};

std::vector<SliceSample> generate_case(const PhantomSpec& spec, std::uint64_t case_seed,
                                       int case_id);

Dataset generate_dataset(const PhantomSpec& spec);

// Split by case: every slice of a case lands on one side.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction,
                                  std::uint64_t seed);

}  // namespace seg
