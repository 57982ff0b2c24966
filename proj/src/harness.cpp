#include "seg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <thread>

#include "seg/rng.hpp"

namespace fs = std::filesystem;

namespace seg {

namespace {

Tensor<double> random_tensor(int n, int c, int h, int w, Rng& rng, double scale = 1.0) {
    Tensor<double> t(n, c, h, w);
    for (double& v : t.data) v = rng.normal() * scale;
    return t;
}

double dot_sum(const Tensor<double>& up, const Tensor<double>& out) {
    double acc = 0;
    for (std::size_t i = 0; i < up.size(); ++i) acc += up.data[i] * out.data[i];
    return acc;
}

Tensor<double> bias_as_tensor(const std::vector<double>& bias) {
    Tensor<double> t(static_cast<int>(bias.size()), 1, 1, 1);
    std::copy(bias.begin(), bias.end(), t.data.begin());
    return t;
}

struct CheckAccum {
    GradcheckReport& report;
    std::ostream& out;

    void add(const std::string& name, double err, double threshold) {
        report.entries.push_back({name, err, threshold});
        out << (err < threshold ? "  ok   " : "  FAIL ") << std::left << std::setw(40) << name
            << " max rel err " << std::scientific << std::setprecision(3) << err << " (< "
            << threshold << ")\n"
            << std::defaultfloat;
    }
};

constexpr double kFdStep = 1e-5;
constexpr double kKernelTol = 1e-6;
constexpr double kEndToEndTol = 1e-5;

void check_conv(CheckAccum& acc, std::uint64_t seed, double inject) {
    Rng rng(Rng::mix(seed));
    const bool big = seed % 2 == 0;
    Tensor<double> x = big ? random_tensor(2, 4, 8, 8, rng) : random_tensor(1, 2, 5, 5, rng);
    KernelParams<double> k;
    k.weight = random_tensor(3, x.c(), 3, 3, rng, 0.5);
    k.bias.resize(3);
    for (double& b : k.bias) b = rng.normal() * 0.1;
    k.stride = 1;
    k.padding = 1;
    Tensor<double> up = random_tensor(x.n(), 3, x.h(), x.w(), rng);

    auto g = conv2d_backward(x, k, up);
    g.grad_weight.data[0] += inject;

    auto fd_in = finite_diff_grad(
        [&](const Tensor<double>& probe) { return dot_sum(up, conv2d_forward(probe, k)); }, x,
        kFdStep);
    auto fd_w = finite_diff_grad(
        [&](const Tensor<double>& probe) {
            KernelParams<double> kk = k;
            kk.weight = probe;
            return dot_sum(up, conv2d_forward(x, kk));
        },
        k.weight, kFdStep);
    auto fd_b = finite_diff_grad(
        [&](const Tensor<double>& probe) {
            KernelParams<double> kk = k;
            std::copy(probe.data.begin(), probe.data.end(), kk.bias.begin());
            return dot_sum(up, conv2d_forward(x, kk));
        },
        bias_as_tensor(k.bias), kFdStep);

    std::string tag = "conv2d[seed=" + std::to_string(seed) + "]";
    acc.add(tag + " grad_input", max_rel_error(g.grad_input, fd_in), kKernelTol);
    acc.add(tag + " grad_weight", max_rel_error(g.grad_weight, fd_w), kKernelTol);
    acc.add(tag + " grad_bias", max_rel_error(bias_as_tensor(g.grad_bias), fd_b), kKernelTol);
}

void check_convtranspose(CheckAccum& acc, std::uint64_t seed) {
    Rng rng(Rng::mix(seed ^ 0xabcdULL));
    Tensor<double> x = random_tensor(1, 2, 4, 4, rng);
    KernelParams<double> k;
    k.weight = random_tensor(3, 2, 2, 2, rng, 0.5);
    k.bias.resize(3);
    for (double& b : k.bias) b = rng.normal() * 0.1;
    k.stride = 2;
    k.padding = 0;
    Tensor<double> up = random_tensor(1, 3, 8, 8, rng);

    auto g = convtranspose2_backward(x, k, up);
    auto fd_in = finite_diff_grad(
        [&](const Tensor<double>& probe) { return dot_sum(up, convtranspose2_forward(probe, k)); },
        x, kFdStep);
    auto fd_w = finite_diff_grad(
        [&](const Tensor<double>& probe) {
            KernelParams<double> kk = k;
            kk.weight = probe;
            return dot_sum(up, convtranspose2_forward(x, kk));
        },
        k.weight, kFdStep);

    std::string tag = "convtranspose2[seed=" + std::to_string(seed) + "]";
    acc.add(tag + " grad_input", max_rel_error(g.grad_input, fd_in), kKernelTol);
    acc.add(tag + " grad_weight", max_rel_error(g.grad_weight, fd_w), kKernelTol);
}

void check_maxpool(CheckAccum& acc, std::uint64_t seed) {
    Rng rng(Rng::mix(seed ^ 0x77ULL));
    Tensor<double> x = random_tensor(1, 2, 6, 6, rng);
    Tensor<double> up = random_tensor(1, 2, 3, 3, rng);
    auto r = maxpool2_forward(x);
    auto g = maxpool2_backward(r.argmax, up, x.shape);
    auto fd = finite_diff_grad(
        [&](const Tensor<double>& probe) { return dot_sum(up, maxpool2_forward(probe).output); },
        x, kFdStep);
    acc.add("maxpool2[seed=" + std::to_string(seed) + "]", max_rel_error(g, fd), kKernelTol);
}

void check_activations(CheckAccum& acc, std::uint64_t seed) {
    Rng rng(Rng::mix(seed ^ 0x5150ULL));
    Tensor<double> x = random_tensor(2, 2, 4, 4, rng);
    for (double& v : x.data)  // keep relu away from its kink at 0
        if (std::abs(v) < 1e-2) v += v < 0 ? -1e-2 : 1e-2;
    Tensor<double> up = random_tensor(2, 2, 4, 4, rng);

    auto g_relu = relu_backward(x, up);
    auto fd_relu = finite_diff_grad(
        [&](const Tensor<double>& probe) { return dot_sum(up, relu(probe)); }, x, kFdStep);
    acc.add("relu[seed=" + std::to_string(seed) + "]", max_rel_error(g_relu, fd_relu), kKernelTol);

    auto y = sigmoid(x);
    auto g_sig = sigmoid_backward(y, up);
    auto fd_sig = finite_diff_grad(
        [&](const Tensor<double>& probe) { return dot_sum(up, sigmoid(probe)); }, x, kFdStep);
    acc.add("sigmoid[seed=" + std::to_string(seed) + "]", max_rel_error(g_sig, fd_sig),
            kKernelTol);
}

void check_losses(CheckAccum& acc, std::uint64_t seed) {
    Rng rng(Rng::mix(seed ^ 0x10552ULL));
    Tensor<double> truth(2, 1, 4, 4);
    Tensor<double> pred(2, 1, 4, 4);
    for (double& v : truth.data) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    for (double& v : pred.data) v = rng.uniform(0.01, 0.99);

    const LossConfig base;
    struct Case {
        const char* name;
        LossConfig cfg;
    };
    LossConfig dice_sym = base;
    dice_sym.kind = LossKind::dice;
    dice_sym.dice_smoothing = DiceSmoothing::symmetric;
    LossConfig dice_lit = base;
    dice_lit.kind = LossKind::dice;
    LossConfig focal = base;
    focal.kind = LossKind::focal;
    LossConfig ftl = base;
    ftl.kind = LossKind::focal_tversky;
    LossConfig bce_cfg = base;
    const Case cases[] = {{"bce", bce_cfg},
                          {"dice_literal", dice_lit},
                          {"dice_symmetric", dice_sym},
                          {"focal", focal},
                          {"focal_tversky", ftl}};
    for (const Case& c : cases) {
        auto r = eval_loss(truth, pred, c.cfg);
        auto fd = finite_diff_grad(
            [&](const Tensor<double>& probe) { return eval_loss(truth, probe, c.cfg).value; },
            pred, kFdStep);
        acc.add(std::string("loss ") + c.name + "[seed=" + std::to_string(seed) + "]",
                max_rel_error(r.grad, fd), kKernelTol);
    }
}

void check_end_to_end(CheckAccum& acc, const Model& model, const char* name, std::uint64_t seed) {
    Rng rng(Rng::mix(seed ^ 0xe2eULL));
    auto params = init_params<double>(model.graph, seed);
    Tensor<double> batch(1, 1, 8, 8);
    for (double& v : batch.data) v = rng.uniform();
    Tensor<double> truth(1, 1, 8, 8);
    for (double& v : truth.data) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    LossConfig loss_cfg;

    auto loss_of = [&](const ParamStore<double>& p) {
        auto cache = forward(model.graph, p, batch);
        return eval_loss(truth, cache.outputs[model.graph.output_node], loss_cfg).value;
    };

    auto cache = forward(model.graph, params, batch);
    auto loss = eval_loss(truth, cache.outputs[model.graph.output_node], loss_cfg);
    auto grads = backward(model.graph, params, cache, loss.grad);

    double worst = 0;
    for (std::size_t p = 0; p < params.entries.size(); ++p) {
        auto fd_w = finite_diff_grad(
            [&](const Tensor<double>& probe) {
                ParamStore<double> ps = params;
                ps.entries[p].k.weight = probe;
                return loss_of(ps);
            },
            params.entries[p].k.weight, kFdStep);
        worst = std::max(worst, max_rel_error(grads.weight[p], fd_w));
        auto fd_b = finite_diff_grad(
            [&](const Tensor<double>& probe) {
                ParamStore<double> ps = params;
                std::copy(probe.data.begin(), probe.data.end(), ps.entries[p].k.bias.begin());
                return loss_of(ps);
            },
            bias_as_tensor(params.entries[p].k.bias), kFdStep);
        Tensor<double> gb = bias_as_tensor(grads.bias[p]);
        worst = std::max(worst, max_rel_error(gb, fd_b));
    }
    acc.add(std::string("end-to-end ") + name, worst, kEndToEndTol);
}

}  // namespace

GradcheckReport run_gradcheck(std::ostream& out, const GradcheckOptions& opts) {
    GradcheckReport report;
    CheckAccum acc{report, out};
    for (int i = 0; i < opts.n_seeds; ++i) {
        std::uint64_t seed = opts.seed + static_cast<std::uint64_t>(i);
        check_conv(acc, seed, i == 0 ? opts.inject_error : 0.0);
        check_convtranspose(acc, seed);
        check_maxpool(acc, seed);
        check_activations(acc, seed);
        check_losses(acc, seed);
    }
    ModelConfig unet_cfg{Arch::unet, 1, 2, 1};
    check_end_to_end(acc, build_unet2d(unet_cfg), "unet d1 b2", opts.seed);
    ModelConfig upp_cfg{Arch::unetpp, 2, 2, 1};
    check_end_to_end(acc, build_unetpp2d(upp_cfg), "unetpp d2 b2", opts.seed);
    return report;
}

namespace {

struct Cell {
    int arch_idx, loss_idx, seed_idx;
};

}  // namespace

MatrixResult run_matrix(const FullConfig& cfg, const std::string& out_dir, int threads,
                        std::ostream* progress) {
    cfg.grid.validate();
    fs::create_directories(out_dir);

    Dataset full = generate_dataset(cfg.data);
    auto [train_set, val_set] = split(full, cfg.train_fraction, cfg.data.seed);

    std::vector<Cell> cells;
    for (int a = 0; a < static_cast<int>(cfg.grid.architectures.size()); ++a)
        for (int l = 0; l < static_cast<int>(cfg.grid.losses.size()); ++l)
            for (int s = 0; s < static_cast<int>(cfg.grid.seeds.size()); ++s)
                cells.push_back({a, l, s});

    MatrixResult result;
    result.rows.resize(cells.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex log_mutex;

    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const Cell& cell = cells[i];
            Arch arch = cfg.grid.architectures[cell.arch_idx];
            LossKind loss_kind = cfg.grid.losses[cell.loss_idx];
            std::uint64_t seed = cfg.grid.seeds[cell.seed_idx];

            ResultRow row;
            row.architecture = arch_name(arch);
            row.loss = loss_name(loss_kind);
            row.seed = seed;
            row.epochs = cfg.train.epochs;
            try {
                ModelConfig mc = cfg.model;
                mc.arch = arch;
                Model model = build_model(mc);
                LossConfig lc = cfg.loss;
                lc.kind = loss_kind;
                TrainConfig tc = cfg.train;
                std::uint64_t grid_index = static_cast<std::uint64_t>(
                    cell.arch_idx * cfg.grid.losses.size() + cell.loss_idx);
                tc.seed = Rng::mix(seed ^ Rng::mix(grid_index + 1));
                auto trained = train(model, train_set, val_set, lc, tc);
                row.params = count_params(trained.params);
                EvalSummary ev =
                    evaluate_dataset(model, trained.params, val_set, cfg.grid.threshold);
                row.dice = ev.dice;
                row.sensitivity = ev.sensitivity;
                row.specificity = ev.specificity;
            } catch (const std::exception& e) {
                row.failed = true;
                row.dice = row.sensitivity = row.specificity =
                    std::numeric_limits<double>::quiet_NaN();
                failed = true;
                if (progress) {
                    std::lock_guard<std::mutex> lk(log_mutex);
                    *progress << "cell " << row.architecture << "/" << row.loss << " seed " << seed
                              << " FAILED: " << e.what() << "\n";
                }
            }
            result.rows[i] = row;
            if (progress && !row.failed) {
                std::lock_guard<std::mutex> lk(log_mutex);
                *progress << "cell " << (i + 1) << "/" << cells.size() << " " << row.architecture
                          << "/" << row.loss << " seed " << seed << " dice "
                          << std::fixed << std::setprecision(4) << row.dice
                          << std::defaultfloat << std::endl;
            }
        }
    };

    threads = std::max(1, std::min<int>(threads, static_cast<int>(cells.size())));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    result.any_failed = failed.load();
    write_results((fs::path(out_dir) / "results.csv").string(), result.rows);
    return result;
}

namespace {
std::string slice_filename(int case_id, int slice_idx) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "case%03d_slice%02d.seg", case_id, slice_idx);
    return buf;
}
}  // namespace

void cmd_generate(const FullConfig& cfg, const std::string& out_dir, bool force) {
    fs::path dir(out_dir);
    if (fs::exists(dir) && !fs::is_empty(dir) && !force)
        throw std::runtime_error("output directory " + out_dir +
                                 " is not empty; pass --force to overwrite");
    fs::create_directories(dir);

    Dataset ds = generate_dataset(cfg.data);
    std::ostringstream manifest;
    manifest << "phenotype " << phenotype_name(cfg.data.phenotype) << "\n";
    manifest << "count " << ds.size() << "\n";
    for (const auto& s : ds) {
        std::string name = slice_filename(s.case_id, s.slice_idx);
        write_slice((dir / name).string(), s);
        manifest << name << " " << s.case_id << " " << s.slice_idx << " "
                 << phenotype_name(s.phenotype) << "\n";
    }
    auto [train_set, val_set] = split(ds, cfg.train_fraction, cfg.data.seed);
    auto list_cases = [](const Dataset& d) {
        std::vector<int> ids;
        for (const auto& s : d)
            if (std::find(ids.begin(), ids.end(), s.case_id) == ids.end()) ids.push_back(s.case_id);
        std::sort(ids.begin(), ids.end());
        return ids;
    };
    manifest << "[split]\n";
    manifest << "train";
    for (int id : list_cases(train_set)) manifest << " " << id;
    manifest << "\nval";
    for (int id : list_cases(val_set)) manifest << " " << id;
    manifest << "\n";
    std::ofstream mf(dir / "manifest.txt", std::ios::trunc);
    mf << manifest.str();
    if (!mf) throw std::runtime_error("cmd_generate: failed to write manifest");
}

Dataset load_dataset_dir(const std::string& data_dir) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(data_dir))
        if (entry.path().extension() == ".seg") files.push_back(entry.path().string());
    if (files.empty()) throw std::runtime_error("no .seg files in " + data_dir);
    std::sort(files.begin(), files.end());
    Dataset ds;
    ds.reserve(files.size());
    for (const auto& f : files) ds.push_back(read_slice(f));
    return ds;
}

void cmd_train(const FullConfig& cfg, const std::string& data_dir, const std::string& out_dir) {
    fs::create_directories(out_dir);
    Dataset ds = load_dataset_dir(data_dir);
    auto [train_set, val_set] = split(ds, cfg.train_fraction, cfg.data.seed);

    Model model = build_model(cfg.model);
    const int dump_every = 10;
    EpochHook hook = [&](int epoch, const Model& m, const ParamStore<float>& params) {
        if (epoch % dump_every != 0 && epoch != cfg.train.epochs - 1) return;
        if (val_set.empty()) return;
        const SliceSample& s = val_set.front();
        Tensor<float> pred = predict(m, params, s.image, 0.5);
        char prefix[32];
        std::snprintf(prefix, sizeof prefix, "epoch%03d", epoch);
        fs::path base = fs::path(out_dir) / prefix;
        write_pgm(base.string() + "_input.pgm", s.image.h(), s.image.w(), s.image.data.data());
        write_pgm(base.string() + "_truth.pgm", s.mask.h(), s.mask.w(), s.mask.data.data());
        write_pgm(base.string() + "_pred.pgm", pred.h(), pred.w(), pred.data.data());
    };

    TrainResult result = train(model, train_set, val_set, cfg.loss, cfg.train, hook);

    write_params((fs::path(out_dir) / "params.segp").string(), cfg.model, result.params);
    std::ofstream log(fs::path(out_dir) / "log.csv", std::ios::trunc);
    log << "epoch,mean_loss,val_dice\n";
    for (const auto& e : result.log)
        log << e.epoch << "," << std::fixed << std::setprecision(6) << e.mean_loss << ","
            << e.val_dice << "\n";
    if (!log) throw std::runtime_error("cmd_train: failed to write log.csv");
}

EvalSummary cmd_eval(const std::string& params_path, const std::string& data_dir, double threshold,
                     std::ostream& out) {
    auto [cfg, params] = read_params(params_path);
    Model model = build_model(cfg);
    Dataset ds = load_dataset_dir(data_dir);
    EvalSummary ev = evaluate_dataset(model, params, ds, threshold);
    out << "slices " << ev.slices << "\n"
        << std::fixed << std::setprecision(4) << "dice " << ev.dice << "\nsensitivity "
        << ev.sensitivity << "\nspecificity " << ev.specificity << "\n";
    return ev;
}

}  // namespace seg
