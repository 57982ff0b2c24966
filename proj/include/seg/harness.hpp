#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "seg/segio.hpp"
#include "seg/train.hpp"

namespace seg {

struct GradcheckOptions {
    std::uint64_t seed = 1;
    int n_seeds = 5;
    // Test hook: added to one analytic weight-gradient element so the suite's
    // sensitivity can itself be checked.
    double inject_error = 0.0;
};

struct GradcheckEntry {
    std::string name;
    double max_rel_err = 0;
    double threshold = 0;
    bool ok() const { return max_rel_err < threshold; }
};

struct GradcheckReport {
    std::vector<GradcheckEntry> entries;
    bool ok() const {
        for (const auto& e : entries)
            if (!e.ok()) return false;
        return true;
    }
};

// Finite-difference suite over every kernel, every loss, and end-to-end tiny
// networks. Prints one line per check.
GradcheckReport run_gradcheck(std::ostream& out, const GradcheckOptions& opts = {});

struct MatrixResult {
    std::vector<ResultRow> rows;
    bool any_failed = false;
};

// Runs every (architecture x loss x seed) cell: fresh init, train, evaluate on
// the validation split. A failed cell is recorded and the grid continues.
MatrixResult run_matrix(const FullConfig& cfg, const std::string& out_dir, int threads = 1,
                        std::ostream* progress = nullptr);

Dataset load_dataset_dir(const std::string& data_dir);

void cmd_generate(const FullConfig& cfg, const std::string& out_dir, bool force);
void cmd_train(const FullConfig& cfg, const std::string& data_dir, const std::string& out_dir);
EvalSummary cmd_eval(const std::string& params_path, const std::string& data_dir,
                     double threshold, std::ostream& out);

}  // namespace seg
