#include "seg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "seg/rng.hpp"

namespace seg {

Phenotype phenotype_from_name(const std::string& name) {
    if (name == "iph") return Phenotype::iph;
    if (name == "contusion") return Phenotype::contusion;
    if (name == "extra_axial") return Phenotype::extra_axial;
    throw std::invalid_argument("unknown phenotype '" + name +
                                "' (expected iph|contusion|extra_axial)");
}

namespace {

struct HeadGeometry {
    double cx, cy, rx, ry;
    // Elliptical radial coordinate: <0.88 brain, [0.88,1] skull, >1 background.
    double rho(double x, double y) const {
        double dx = (x - cx) / rx, dy = (y - cy) / ry;
        return std::sqrt(dx * dx + dy * dy);
    }
    double angle(double x, double y) const { return std::atan2((y - cy) / ry, (x - cx) / rx); }
};

constexpr double kSkullStart = 0.88;
constexpr double kLesionMaxRho = 0.85;  // keeps masks clear of the skull ring

// Bilinear low-frequency field over a coarse grid, amplitude `amp`.
std::vector<double> smooth_field(int h, int w, double amp, Rng& rng) {
    const int gh = 7, gw = 7;
    std::vector<double> grid(gh * gw);
    for (double& v : grid) v = rng.uniform(-amp, amp);
    std::vector<double> field(static_cast<std::size_t>(h) * w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            double gi = static_cast<double>(i) / (h - 1) * (gh - 1);
            double gj = static_cast<double>(j) / (w - 1) * (gw - 1);
            int i0 = std::min(static_cast<int>(gi), gh - 2);
            int j0 = std::min(static_cast<int>(gj), gw - 2);
            double fi = gi - i0, fj = gj - j0;
            field[static_cast<std::size_t>(i) * w + j] =
                grid[i0 * gw + j0] * (1 - fi) * (1 - fj) + grid[i0 * gw + j0 + 1] * (1 - fi) * fj +
                grid[(i0 + 1) * gw + j0] * fi * (1 - fj) + grid[(i0 + 1) * gw + j0 + 1] * fi * fj;
        }
    return field;
}

// Paints the lesion support for one slice into `mask` (values 0/1).
// Returns the painted area in pixels.
int paint_lesion(Phenotype phenotype, const HeadGeometry& geo, int h, int w, Rng& rng,
                 std::vector<unsigned char>& mask) {
    std::fill(mask.begin(), mask.end(), 0);
    int area = 0;
    const double scale = std::min(h, w) / 64.0;  // lesion radii track image size
    auto try_set = [&](int i, int j) {
        if (i < 0 || i >= h || j < 0 || j >= w) return;
        if (geo.rho(j + 0.5, i + 0.5) >= kLesionMaxRho) return;
        std::size_t idx = static_cast<std::size_t>(i) * w + j;
        if (!mask[idx]) {
            mask[idx] = 1;
            ++area;
        }
    };
    switch (phenotype) {
        case Phenotype::iph: {
            double a = rng.uniform(6.5, 10.5) * scale, b = rng.uniform(6.5, 10.5) * scale;
            double theta = rng.uniform(0.0, 3.14159265358979);
            double lr = rng.uniform(0.0, 0.55);
            double lt = rng.uniform(0.0, 6.28318530717959);
            double cx = geo.cx + lr * geo.rx * std::cos(lt);
            double cy = geo.cy + lr * geo.ry * std::sin(lt);
            double ct = std::cos(theta), st = std::sin(theta);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    double dx = j + 0.5 - cx, dy = i + 0.5 - cy;
                    double u = dx * ct + dy * st, v = -dx * st + dy * ct;
                    if ((u * u) / (a * a) + (v * v) / (b * b) <= 1.0) try_set(i, j);
                }
            break;
        }
        case Phenotype::contusion: {
            int blobs = rng.uniform_int(3, 5);
            for (int bidx = 0; bidx < blobs; ++bidx) {
                double r = rng.uniform(3.0, 5.0) * scale;
                double lr = rng.uniform(0.0, 0.6);
                double lt = rng.uniform(0.0, 6.28318530717959);
                double cx = geo.cx + lr * geo.rx * std::cos(lt);
                double cy = geo.cy + lr * geo.ry * std::sin(lt);
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j) {
                        double dx = j + 0.5 - cx, dy = i + 0.5 - cy;
                        if (dx * dx + dy * dy <= r * r) try_set(i, j);
                    }
            }
            break;
        }
        case Phenotype::extra_axial: {
            double outer = 0.84;
            double thickness = rng.uniform(0.14, 0.22);
            double theta0 = rng.uniform(0.0, 6.28318530717959);
            double span = rng.uniform(1.6, 2.8);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    double rho = geo.rho(j + 0.5, i + 0.5);
                    if (rho < outer - thickness || rho > outer) continue;
                    double ang = geo.angle(j + 0.5, i + 0.5) - theta0;
                    while (ang < 0) ang += 6.28318530717959;
                    if (ang <= span) try_set(i, j);
                }
            break;
        }
    }
    return area;
}

}  // namespace

std::vector<SliceSample> generate_case(const PhantomSpec& spec, std::uint64_t case_seed,
                                       int case_id) {
    spec.validate();
    Rng rng(Rng::mix(case_seed));
    const int h = spec.h, w = spec.w;
    const int min_area = std::max(1, static_cast<int>(0.005 * h * w));
    const int max_area = static_cast<int>(0.10 * h * w);

    std::vector<SliceSample> slices;
    for (int sidx = 0; sidx < spec.slices_per_case; ++sidx) {
        HeadGeometry geo;
        geo.cx = w / 2.0 + rng.uniform(-2.0, 2.0);
        geo.cy = h / 2.0 + rng.uniform(-2.0, 2.0);
        geo.rx = 0.40 * w * rng.uniform(0.95, 1.05);
        geo.ry = 0.44 * h * rng.uniform(0.95, 1.05);

        std::vector<unsigned char> mask(static_cast<std::size_t>(h) * w);
        int area = 0;
        bool placed = false;
        for (int attempt = 0; attempt < 100; ++attempt) {
            area = paint_lesion(spec.phenotype, geo, h, w, rng, mask);
            if (area >= min_area && area <= max_area) {
                placed = true;
                break;
            }
        }
        if (!placed)
            throw std::runtime_error("generate_case: lesion placement failed for case " +
                                     std::to_string(case_id) + " slice " + std::to_string(sidx));

        auto texture = smooth_field(h, w, 0.08, rng);
        double lesion_intensity = rng.uniform(0.66, 0.74);

        SliceSample s;
        s.image = Tensor<float>(1, 1, h, w);
        s.mask = Tensor<float>(1, 1, h, w);
        s.phenotype = spec.phenotype;
        s.case_id = case_id;
        s.slice_idx = sidx;

        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                std::size_t idx = static_cast<std::size_t>(i) * w + j;
                double rho = geo.rho(j + 0.5, i + 0.5);
                double v;
                if (rho > 1.0)
                    v = 0.02;
                else if (rho >= kSkullStart)
                    v = 0.95;
                else if (mask[idx])
                    v = lesion_intensity;
                else
                    v = 0.35 + texture[idx];
                v += rng.normal() * spec.noise_std;
                s.image.data[idx] = static_cast<float>(std::min(std::max(v, 0.0), 1.0));
                s.mask.data[idx] = mask[idx] ? 1.0f : 0.0f;
            }

        // Distractor blobs inside the lesion intensity band but outside the mask;
        // keeps plain thresholding from solving the task.
        int distractors = rng.uniform_int(1, 3);
        for (int d = 0; d < distractors; ++d) {
            double r = rng.uniform(1.5, 3.0) * std::min(h, w) / 64.0;
            double lr = rng.uniform(0.0, 0.6);
            double lt = rng.uniform(0.0, 6.28318530717959);
            double cx = geo.cx + lr * geo.rx * std::cos(lt);
            double cy = geo.cy + lr * geo.ry * std::sin(lt);
            double amp = rng.uniform(0.55, 0.70);
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    std::size_t idx = static_cast<std::size_t>(i) * w + j;
                    if (mask[idx]) continue;
                    if (geo.rho(j + 0.5, i + 0.5) >= 0.8) continue;
                    double dx = j + 0.5 - cx, dy = i + 0.5 - cy;
                    if (dx * dx + dy * dy <= r * r)
                        s.image.data[idx] = static_cast<float>(
                            std::min(std::max(amp + rng.normal() * spec.noise_std, 0.0), 1.0));
                }
        }
        slices.push_back(std::move(s));
    }
    return slices;
}

Dataset generate_dataset(const PhantomSpec& spec) {
    spec.validate();
    Dataset ds;
    for (int i = 0; i < spec.n_cases; ++i) {
        // splitmix-style per-case seed derivation
        std::uint64_t case_seed = Rng::mix(spec.seed + static_cast<std::uint64_t>(i) + 1);
        auto slices = generate_case(spec, case_seed, i);
        for (auto& s : slices) ds.push_back(std::move(s));
    }
    return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction,
                                  std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("split: train_fraction must be in (0,1)");
    std::vector<int> case_ids;
    for (const auto& s : dataset)
        if (std::find(case_ids.begin(), case_ids.end(), s.case_id) == case_ids.end())
            case_ids.push_back(s.case_id);
    Rng rng(Rng::mix(seed));
    rng.shuffle(case_ids);
    std::size_t n_train =
        static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(case_ids.size())));
    if (n_train == 0 || n_train == case_ids.size())
        throw std::invalid_argument("split: a side would be empty");
    std::set<int> train_ids(case_ids.begin(), case_ids.begin() + n_train);
    std::pair<Dataset, Dataset> out;
    for (const auto& s : dataset)
        (train_ids.count(s.case_id) ? out.first : out.second).push_back(s);
    return out;
}

}  // namespace seg
