#include "seg/segio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

namespace seg {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    std::string what;

    void need(std::size_t n) {
        if (pos + n > buf.size()) throw std::runtime_error(what + ": truncated payload");
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint8_t>(buf[pos]) |
                          (static_cast<std::uint16_t>(static_cast<std::uint8_t>(buf[pos + 1])) << 8);
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
};

std::string read_file(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(std::string(what) + ": cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& bytes, const char* what) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(std::string(what) + ": cannot open " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error(std::string(what) + ": write failed for " + path);
}

}  // namespace

void write_slice(const std::string& path, const SliceSample& s) {
    const int h = s.image.h(), w = s.image.w();
    std::string out;
    out.reserve(24 + static_cast<std::size_t>(5) * h * w);
    out += "SEG1";
    put_u16(out, 1);
    put_u16(out, static_cast<std::uint16_t>(s.phenotype));
    put_u32(out, static_cast<std::uint32_t>(s.case_id));
    put_u32(out, static_cast<std::uint32_t>(s.slice_idx));
    put_u32(out, static_cast<std::uint32_t>(h));
    put_u32(out, static_cast<std::uint32_t>(w));
    for (float v : s.image.data) put_f32(out, v);
    for (float v : s.mask.data) out.push_back(v != 0.0f ? '\x01' : '\x00');
    write_file(path, out, "write_slice");
}

SliceSample read_slice(const std::string& path) {
    std::string buf = read_file(path, "read_slice");
    Reader r{buf, 0, "read_slice(" + path + ")"};
    r.need(4);
    if (buf.compare(0, 4, "SEG1") != 0)
        throw std::runtime_error("read_slice: " + path + " is not a SEG1 file");
    r.pos = 4;
    std::uint16_t version = r.u16();
    if (version != 1)
        throw std::runtime_error("read_slice: unsupported SEG1 version " + std::to_string(version));
    std::uint16_t phen = r.u16();
    if (phen > 2) throw std::runtime_error("read_slice: bad phenotype code");
    SliceSample s;
    s.phenotype = static_cast<Phenotype>(phen);
    s.case_id = static_cast<int>(r.u32());
    s.slice_idx = static_cast<int>(r.u32());
    int h = static_cast<int>(r.u32());
    int w = static_cast<int>(r.u32());
    s.image = Tensor<float>(1, 1, h, w);
    s.mask = Tensor<float>(1, 1, h, w);
    for (float& v : s.image.data) v = r.f32();
    for (float& v : s.mask.data) v = r.u8() ? 1.0f : 0.0f;
    if (r.pos != buf.size()) throw std::runtime_error("read_slice: trailing bytes in " + path);
    return s;
}

void write_params(const std::string& path, const ModelConfig& cfg, const ParamStore<float>& store) {
    std::string out;
    out += "SEGP";
    put_u16(out, 1);
    put_u16(out, cfg.arch == Arch::unet ? 0 : 1);
    put_u32(out, static_cast<std::uint32_t>(cfg.depth));
    put_u32(out, static_cast<std::uint32_t>(cfg.base_channels));
    put_u32(out, static_cast<std::uint32_t>(cfg.in_channels));
    put_u32(out, static_cast<std::uint32_t>(store.entries.size()));
    for (const auto& e : store.entries) {
        put_u32(out, static_cast<std::uint32_t>(e.k.c_out()));
        put_u32(out, static_cast<std::uint32_t>(e.k.c_in()));
        put_u32(out, static_cast<std::uint32_t>(e.k.kh()));
        put_u32(out, static_cast<std::uint32_t>(e.k.kw()));
        put_u32(out, static_cast<std::uint32_t>(e.k.stride));
        put_u32(out, static_cast<std::uint32_t>(e.k.padding));
        out.push_back(e.transposed ? '\x01' : '\x00');
        for (float v : e.k.weight.data) put_f32(out, v);
        for (float v : e.k.bias) put_f32(out, v);
    }
    write_file(path, out, "write_params");
}

std::pair<ModelConfig, ParamStore<float>> read_params(const std::string& path) {
    std::string buf = read_file(path, "read_params");
    Reader r{buf, 0, "read_params(" + path + ")"};
    r.need(4);
    if (buf.compare(0, 4, "SEGP") != 0)
        throw std::runtime_error("read_params: " + path + " is not a SEGP file");
    r.pos = 4;
    if (r.u16() != 1) throw std::runtime_error("read_params: unsupported version");
    ModelConfig cfg;
    cfg.arch = r.u16() == 0 ? Arch::unet : Arch::unetpp;
    cfg.depth = static_cast<int>(r.u32());
    cfg.base_channels = static_cast<int>(r.u32());
    cfg.in_channels = static_cast<int>(r.u32());
    std::uint32_t n_entries = r.u32();
    ParamStore<float> store;
    for (std::uint32_t i = 0; i < n_entries; ++i) {
        ParamStore<float>::Entry e;
        int c_out = static_cast<int>(r.u32());
        int c_in = static_cast<int>(r.u32());
        int kh = static_cast<int>(r.u32());
        int kw = static_cast<int>(r.u32());
        e.k.stride = static_cast<int>(r.u32());
        e.k.padding = static_cast<int>(r.u32());
        e.transposed = r.u8() != 0;
        e.k.weight = Tensor<float>(c_out, c_in, kh, kw);
        for (float& v : e.k.weight.data) v = r.f32();
        e.k.bias.resize(c_out);
        for (float& v : e.k.bias) v = r.f32();
        e.vel_weight = Tensor<float>::zeros_like(e.k.weight);
        e.vel_bias.assign(c_out, 0.0f);
        store.entries.push_back(std::move(e));
    }
    return {cfg, std::move(store)};
}

namespace {
std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

std::string summary_path_for(const std::string& csv_path) {
    auto dot = csv_path.find_last_of('.');
    auto slash = csv_path.find_last_of('/');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return csv_path + ".txt";
    return csv_path.substr(0, dot) + ".txt";
}
}  // namespace

void write_results(const std::string& path, const std::vector<ResultRow>& rows) {
    if (rows.empty()) throw std::invalid_argument("write_results: no rows");
    std::string csv = "architecture,loss,seed,dice,sensitivity,specificity,epochs,params\n";
    for (const auto& r : rows) {
        csv += r.architecture + "," + r.loss + "," + std::to_string(r.seed) + "," + fmt4(r.dice) +
               "," + fmt4(r.sensitivity) + "," + fmt4(r.specificity) + "," +
               std::to_string(r.epochs) + "," + std::to_string(r.params) + "\n";
    }
    write_file(path, csv, "write_results");

    // Seed-averaged summary, best dice starred.
    struct Agg {
        double dice = 0, sens = 0, spec = 0;
        int n = 0;
        bool failed = false;
    };
    std::vector<std::pair<std::string, std::string>> order;
    std::map<std::pair<std::string, std::string>, Agg> agg;
    for (const auto& r : rows) {
        auto key = std::make_pair(r.architecture, r.loss);
        if (!agg.count(key)) order.push_back(key);
        Agg& a = agg[key];
        if (r.failed) {
            a.failed = true;
            continue;
        }
        a.dice += r.dice;
        a.sens += r.sensitivity;
        a.spec += r.specificity;
        a.n++;
    }
    double best_dice = -1;
    for (auto& [key, a] : agg)
        if (a.n > 0) best_dice = std::max(best_dice, a.dice / a.n);

    std::ostringstream os;
    os << std::left << std::setw(12) << "arch" << std::setw(16) << "loss" << std::setw(10) << "dice"
       << std::setw(13) << "sensitivity" << std::setw(13) << "specificity" << "\n";
    for (const auto& key : order) {
        const Agg& a = agg[key];
        os << std::left << std::setw(12) << key.first << std::setw(16) << key.second;
        if (a.n == 0) {
            os << "failed\n";
            continue;
        }
        std::string dice = fmt4(a.dice / a.n);
        if (best_dice >= 0 && std::abs(a.dice / a.n - best_dice) < 5e-5) dice = "*" + dice + "*";
        os << std::setw(10) << dice << std::setw(13) << fmt4(a.sens / a.n) << std::setw(13)
           << fmt4(a.spec / a.n);
        if (a.failed) os << "  (some seeds failed)";
        os << "\n";
    }
    write_file(summary_path_for(path), os.str(), "write_results");
}

void write_pgm(const std::string& path, int h, int w, const float* values) {
    std::ostringstream os;
    os << "P5\n" << w << " " << h << "\n255\n";
    std::string out = os.str();
    for (int i = 0; i < h * w; ++i) {
        double v = std::min(std::max(static_cast<double>(values[i]), 0.0), 1.0);
        out.push_back(static_cast<char>(static_cast<int>(std::lround(v * 255.0))));
    }
    write_file(path, out, "write_pgm");
}

void GridSpec::validate() const {
    if (architectures.empty()) throw std::invalid_argument("grid: architectures must be nonempty");
    if (losses.empty()) throw std::invalid_argument("grid: losses must be nonempty");
    if (seeds.empty()) throw std::invalid_argument("grid: seeds must be nonempty");
    if (!(threshold > 0 && threshold < 1))
        throw std::invalid_argument("grid: threshold must be in (0,1)");
}

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

[[noreturn]] void cfg_error(int line, const std::string& msg) {
    throw std::invalid_argument("config line " + std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& v, int line) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return d;
    } catch (...) {
        cfg_error(line, "expected a number, got '" + v + "'");
    }
}

long long parse_int(const std::string& v, int line) {
    try {
        std::size_t used = 0;
        long long i = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return i;
    } catch (...) {
        cfg_error(line, "expected an integer, got '" + v + "'");
    }
}

}  // namespace

FullConfig parse_config_text(const std::string& text) {
    FullConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::map<std::string, int> seen;  // section.key -> line of first assignment
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') cfg_error(line_no, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section != "model" && section != "loss" && section != "train" &&
                section != "data" && section != "grid")
                cfg_error(line_no, "unknown section [" + section + "]");
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) cfg_error(line_no, "expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (section.empty()) cfg_error(line_no, "key '" + key + "' before any [section]");

        std::string qual = section + "." + key;
        if (seen.count(qual))
            cfg.warnings.push_back("duplicate key '" + qual + "' at line " +
                                   std::to_string(line_no) + "; last value wins");
        seen[qual] = line_no;

        try {
            if (section == "model") {
                if (key == "arch") {
                    if (value == "unet")
                        cfg.model.arch = Arch::unet;
                    else if (value == "unetpp")
                        cfg.model.arch = Arch::unetpp;
                    else
                        cfg_error(line_no, "arch must be unet|unetpp");
                } else if (key == "depth")
                    cfg.model.depth = static_cast<int>(parse_int(value, line_no));
                else if (key == "base_channels")
                    cfg.model.base_channels = static_cast<int>(parse_int(value, line_no));
                else if (key == "in_channels")
                    cfg.model.in_channels = static_cast<int>(parse_int(value, line_no));
                else
                    cfg_error(line_no, "unknown key '" + key + "' in [model]");
            } else if (section == "loss") {
                if (key == "kind") {
                    if (value == "bce")
                        cfg.loss.kind = LossKind::bce;
                    else if (value == "dice")
                        cfg.loss.kind = LossKind::dice;
                    else if (value == "focal")
                        cfg.loss.kind = LossKind::focal;
                    else if (value == "focal_tversky")
                        cfg.loss.kind = LossKind::focal_tversky;
                    else
                        cfg_error(line_no, "kind must be bce|dice|focal|focal_tversky");
                } else if (key == "alpha")
                    cfg.loss.alpha = parse_double(value, line_no);
                else if (key == "gamma_focal")
                    cfg.loss.gamma_focal = parse_double(value, line_no);
                else if (key == "beta")
                    cfg.loss.beta = parse_double(value, line_no);
                else if (key == "gamma_ftl")
                    cfg.loss.gamma_ftl = parse_double(value, line_no);
                else if (key == "epsilon")
                    cfg.loss.epsilon = parse_double(value, line_no);
                else if (key == "dice_smoothing") {
                    if (value == "paper_literal")
                        cfg.loss.dice_smoothing = DiceSmoothing::paper_literal;
                    else if (value == "symmetric")
                        cfg.loss.dice_smoothing = DiceSmoothing::symmetric;
                    else
                        cfg_error(line_no, "dice_smoothing must be paper_literal|symmetric");
                } else
                    cfg_error(line_no, "unknown key '" + key + "' in [loss]");
            } else if (section == "train") {
                if (key == "learning_rate")
                    cfg.train.learning_rate = parse_double(value, line_no);
                else if (key == "momentum")
                    cfg.train.momentum = parse_double(value, line_no);
                else if (key == "clip_norm")
                    cfg.train.clip_norm = parse_double(value, line_no);
                else if (key == "epochs")
                    cfg.train.epochs = static_cast<int>(parse_int(value, line_no));
                else if (key == "batch_size")
                    cfg.train.batch_size = static_cast<int>(parse_int(value, line_no));
                else if (key == "seed")
                    cfg.train.seed = static_cast<std::uint64_t>(parse_int(value, line_no));
                else
                    cfg_error(line_no, "unknown key '" + key + "' in [train]");
            } else if (section == "data") {
                if (key == "height")
                    cfg.data.h = static_cast<int>(parse_int(value, line_no));
                else if (key == "width")
                    cfg.data.w = static_cast<int>(parse_int(value, line_no));
                else if (key == "n_cases")
                    cfg.data.n_cases = static_cast<int>(parse_int(value, line_no));
                else if (key == "slices_per_case")
                    cfg.data.slices_per_case = static_cast<int>(parse_int(value, line_no));
                else if (key == "phenotype")
                    cfg.data.phenotype = phenotype_from_name(value);
                else if (key == "noise_std")
                    cfg.data.noise_std = parse_double(value, line_no);
                else if (key == "seed")
                    cfg.data.seed = static_cast<std::uint64_t>(parse_int(value, line_no));
                else if (key == "train_fraction")
                    cfg.train_fraction = parse_double(value, line_no);
                else
                    cfg_error(line_no, "unknown key '" + key + "' in [data]");
            } else {  // grid
                if (key == "architectures") {
                    cfg.grid.architectures.clear();
                    for (const auto& a : split_list(value)) {
                        if (a == "unet")
                            cfg.grid.architectures.push_back(Arch::unet);
                        else if (a == "unetpp")
                            cfg.grid.architectures.push_back(Arch::unetpp);
                        else
                            cfg_error(line_no, "unknown architecture '" + a + "'");
                    }
                } else if (key == "losses") {
                    cfg.grid.losses.clear();
                    for (const auto& l : split_list(value)) {
                        if (l == "bce")
                            cfg.grid.losses.push_back(LossKind::bce);
                        else if (l == "dice")
                            cfg.grid.losses.push_back(LossKind::dice);
                        else if (l == "focal")
                            cfg.grid.losses.push_back(LossKind::focal);
                        else if (l == "focal_tversky")
                            cfg.grid.losses.push_back(LossKind::focal_tversky);
                        else
                            cfg_error(line_no, "unknown loss '" + l + "'");
                    }
                } else if (key == "seeds") {
                    cfg.grid.seeds.clear();
                    for (const auto& s : split_list(value))
                        cfg.grid.seeds.push_back(
                            static_cast<std::uint64_t>(parse_int(s, line_no)));
                } else if (key == "threshold")
                    cfg.grid.threshold = parse_double(value, line_no);
                else
                    cfg_error(line_no, "unknown key '" + key + "' in [grid]");
            }
        } catch (const std::invalid_argument&) {
            throw;
        }
    }

    cfg.model.validate();
    cfg.loss.validate();
    cfg.train.validate();
    cfg.data.validate();
    cfg.grid.validate();
    if (!(cfg.train_fraction > 0 && cfg.train_fraction < 1))
        throw std::invalid_argument("config: train_fraction must be in (0,1)");
    return cfg;
}

FullConfig parse_config(const std::string& path) {
    return parse_config_text(read_file(path, "parse_config"));
}

}  // namespace seg
