// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. The heavy criteria print progress so a long run is visibly alive.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "seg/harness.hpp"
#include "seg/metrics.hpp"
#include "seg/rng.hpp"

using namespace seg;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int idx, const std::string& name, bool ok, const std::string& detail) {
    std::printf("criterion %d [%s]: %s (%s)\n", idx, name.c_str(), ok ? "PASS" : "FAIL",
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch_dir() {
    auto p = fs::temp_directory_path() / "acceptance_scratch";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// 1. Finite-difference gradient suite, 5 seeds, under 60 s.
void criterion_gradcheck() {
    auto t0 = std::chrono::steady_clock::now();
    std::ostringstream log;
    GradcheckOptions opts;
    opts.n_seeds = 5;
    auto rep = run_gradcheck(log, opts);
    double secs = seconds_since(t0);
    double worst = 0;
    for (const auto& e : rep.entries) worst = std::max(worst, e.max_rel_err / e.threshold);
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu checks, worst rel-err %.2e of budget, %.1fs",
                  rep.entries.size(), worst, secs);
    report(1, "gradcheck", rep.ok() && secs < 60.0, buf);
}

// 2. Closed-form loss identities at 1e-12.
void criterion_loss_identities() {
    Rng rng(1001);
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Tensor<double> truth(1, 1, 4, 8), pred(1, 1, 4, 8);
        for (double& v : truth.data) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
        for (double& v : pred.data) v = rng.uniform(0.01, 0.99);

        LossConfig focal_cfg;
        focal_cfg.kind = LossKind::focal;
        focal_cfg.alpha = 0.5;
        focal_cfg.gamma_focal = 0.0;
        double f = focal_loss(truth, pred, focal_cfg).value;
        double b = bce(truth, pred, focal_cfg).value;
        worst = std::max(worst, std::abs(f - 0.5 * b));

        LossConfig tv_cfg;
        tv_cfg.beta = 0.5;
        double inter = 0, sp = 0, sq = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            inter += truth.data[i] * pred.data[i];
            sp += truth.data[i];
            sq += pred.data[i];
        }
        double soft_dice = 2.0 * inter / (sp + sq);
        worst = std::max(worst, std::abs(tversky_index(truth, pred, tv_cfg) - soft_dice));

        LossConfig ftl_cfg;
        ftl_cfg.kind = LossKind::focal_tversky;
        ftl_cfg.gamma_ftl = 1.0;
        double ftl = focal_tversky_loss(truth, pred, ftl_cfg).value;
        double ti = tversky_index(truth, pred, ftl_cfg);
        worst = std::max(worst, std::abs(ftl - (1.0 - ti)));
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "max identity gap %.2e", worst);
    report(2, "loss identities", worst <= 1e-12, buf);
}

// 3. Metrics vs brute-force voxel counting, exact.
void criterion_metric_oracle() {
    Rng rng(1002);
    bool ok = true;
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        Tensor<float> pred(1, 1, 8, 8), truth(1, 1, 8, 8);
        for (float& v : pred.data) v = rng.uniform() < rng.uniform(0.05, 0.95) ? 1.0f : 0.0f;
        for (float& v : truth.data) v = rng.uniform() < rng.uniform(0.05, 0.95) ? 1.0f : 0.0f;
        long long tp = 0, fp = 0, fn = 0, tn = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            bool p = pred.data[i] != 0, t = truth.data[i] != 0;
            tp += p && t;
            fp += p && !t;
            fn += !p && t;
            tn += !p && !t;
        }
        auto c = confusion(pred, truth);
        ok = c.tp == tp && c.fp == fp && c.fn == fn && c.tn == tn;
        double dice = (2 * tp + fp + fn) == 0 ? 1.0 : 2.0 * tp / double(2 * tp + fp + fn);
        double sens = (tp + fn) == 0 ? 1.0 : tp / double(tp + fn);
        double spec = (tn + fp) == 0 ? 1.0 : tn / double(tn + fp);
        ok = ok && dice_coefficient(c) == dice && sensitivity(c) == sens &&
             specificity(c) == spec;
    }
    report(3, "metric oracle", ok, "1000 random mask pairs, exact match");
}

// 4. Overfit four slices with each architecture in at most 500 steps.
void criterion_overfit() {
    PhantomSpec spec;
    spec.n_cases = 4;
    spec.slices_per_case = 1;
    spec.seed = 99;
    Dataset ds = generate_dataset(spec);

    for (Arch arch : {Arch::unet, Arch::unetpp}) {
        auto t0 = std::chrono::steady_clock::now();
        ModelConfig mc{arch, 3, 8, 1};
        Model model = build_model(mc);
        auto params = init_params<float>(model.graph, 11);
        std::vector<int> order{0, 1, 2, 3};
        auto [images, masks] = make_batch(ds, order, 0, 4);
        LossConfig lc;  // bce
        TrainConfig tc;
        tc.learning_rate = 0.2;
        tc.momentum = 0.9;

        double dice = 0;
        int steps = 0;
        while (steps < 500) {
            auto cache = forward(model.graph, params, images);
            auto loss = eval_loss(masks, cache.outputs[model.graph.output_node], lc);
            auto grads = backward(model.graph, params, cache, loss.grad);
            clip_gradients(grads, tc.clip_norm);
            sgd_step(params, grads, tc);
            ++steps;
            if (steps % 20 == 0 || steps == 500) {
                dice = evaluate_dataset(model, params, ds, 0.5).dice;
                if (dice >= 0.99) break;
            }
        }
        double secs = seconds_since(t0);
        char buf[96];
        std::snprintf(buf, sizeof buf, "train dice %.4f after %d steps, %.0fs", dice, steps,
                      secs);
        report(4, std::string("overfit ") + arch_name(arch), dice >= 0.99 && secs < 120.0, buf);
    }
}

// 5. Full desk-scale matrix: per-cell floor plus the two ordering trends.
void criterion_matrix_trends(const fs::path& scratch) {
    auto t0 = std::chrono::steady_clock::now();
    FullConfig cfg;  // defaults: iph phantom, 240 slices, 30 epochs, seeds {1,2,3}
    auto result = run_matrix(cfg, (scratch / "matrix").string(), 1, &std::cout);
    double secs = seconds_since(t0);

    std::map<std::string, std::pair<double, int>> cell_mean;  // arch/loss -> (sum, n)
    std::map<std::string, std::pair<double, int>> arch_mean;
    double min_cell = 1.0;
    for (const auto& row : result.rows) {
        auto& cm = cell_mean[row.architecture + "/" + row.loss];
        cm.first += row.dice;
        cm.second += 1;
        auto& am = arch_mean[row.architecture];
        am.first += row.dice;
        am.second += 1;
    }
    for (auto& [name, acc] : cell_mean) min_cell = std::min(min_cell, acc.first / acc.second);

    double upp_ftl = cell_mean["unetpp/focal_tversky"].first / 3.0;
    double u_bce = cell_mean["unet/bce"].first / 3.0;
    double upp_all = arch_mean["unetpp"].first / arch_mean["unetpp"].second;
    double u_all = arch_mean["unet"].first / arch_mean["unet"].second;

    bool a = !result.any_failed && min_cell >= 0.60;
    bool b = upp_ftl >= u_bce - 0.02;
    bool c = upp_all >= u_all - 0.02;
    char buf[192];
    std::snprintf(buf, sizeof buf,
                  "min cell %.4f; unetpp/ftl %.4f vs unet/bce %.4f; arch means %.4f vs %.4f; "
                  "%.0f min",
                  min_cell, upp_ftl, u_bce, upp_all, u_all, secs / 60.0);
    report(5, "matrix trends", a && b && c, buf);
}

// 6. Documented near-800k configuration.
void criterion_param_count() {
    ModelConfig cfg{Arch::unet, 4, 10, 1};
    auto params = init_params<float>(build_model(cfg).graph, 1);
    long long n = count_params(params);
    char buf[64];
    std::snprintf(buf, sizeof buf, "unet depth 4 base 10 -> %lld", n);
    report(6, "parameter count", n >= 700000 && n <= 900000, buf);
}

// 7. Byte-identical results CSV across two matrix runs of one config.
// A reduced grid keeps this criterion affordable; determinism of the full
// pipeline is what is being exercised, not scale.
void criterion_determinism(const fs::path& scratch) {
    FullConfig cfg;
    cfg.model = {Arch::unet, 2, 4, 1};
    cfg.data.n_cases = 6;
    cfg.data.slices_per_case = 2;
    cfg.train.epochs = 3;
    cfg.grid.losses = {LossKind::bce, LossKind::focal_tversky};
    cfg.grid.seeds = {1, 2};
    run_matrix(cfg, (scratch / "det1").string());
    run_matrix(cfg, (scratch / "det2").string());
    auto a = slurp((scratch / "det1" / "results.csv").string());
    auto b = slurp((scratch / "det2" / "results.csv").string());
    report(7, "determinism", !a.empty() && a == b, "two runs, results.csv byte-identical");
}

// 8. SEG1 round trip on 1000 random samples; CSV renders 4 decimals.
void criterion_round_trip(const fs::path& scratch) {
    Rng rng(1003);
    bool ok = true;
    auto path = (scratch / "rt.seg").string();
    for (int trial = 0; trial < 1000 && ok; ++trial) {
        SliceSample s;
        int h = rng.uniform_int(1, 24), w = rng.uniform_int(1, 24);
        s.image = Tensor<float>(1, 1, h, w);
        s.mask = Tensor<float>(1, 1, h, w);
        for (float& v : s.image.data) v = static_cast<float>(rng.normal());
        for (float& v : s.mask.data) v = rng.uniform() < 0.5 ? 1.0f : 0.0f;
        s.phenotype = static_cast<Phenotype>(rng.uniform_int(0, 2));
        s.case_id = rng.uniform_int(0, 1 << 20);
        s.slice_idx = rng.uniform_int(0, 1 << 10);
        write_slice(path, s);
        auto r = read_slice(path);
        ok = r.image.shape == s.image.shape && r.image.data == s.image.data &&
             r.mask.data == s.mask.data && r.phenotype == s.phenotype &&
             r.case_id == s.case_id && r.slice_idx == s.slice_idx;
    }

    ResultRow row;
    row.architecture = "unet";
    row.loss = "bce";
    row.seed = 1;
    row.dice = 0.94236;
    row.sensitivity = 1.0 / 3.0;
    row.specificity = 1.0;
    auto csv_path = (scratch / "rt.csv").string();
    write_results(csv_path, {row});
    auto text = slurp(csv_path);
    bool csv_ok = text.find("0.9424") != std::string::npos &&
                  text.find("0.3333") != std::string::npos &&
                  text.find("1.0000") != std::string::npos;
    report(8, "format round trip", ok && csv_ok, "1000 SEG1 samples bit-exact, CSV at 4 decimals");
}

}  // namespace

int main() {
    auto scratch = scratch_dir();
    auto t0 = std::chrono::steady_clock::now();

    criterion_gradcheck();
    criterion_loss_identities();
    criterion_metric_oracle();
    criterion_overfit();
    criterion_param_count();
    criterion_round_trip(scratch);
    criterion_determinism(scratch);
    criterion_matrix_trends(scratch);

    std::printf("acceptance: %s (%.0f s total)\n", g_failures == 0 ? "ALL PASS" : "FAILURES",
                seconds_since(t0));
    fs::remove_all(scratch);
    return g_failures == 0 ? 0 : 1;
}
