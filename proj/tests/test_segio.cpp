#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "seg/rng.hpp"
#include "seg/segio.hpp"

using namespace seg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("segio_test_" + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

SliceSample random_slice(std::uint64_t seed, int h = 16, int w = 12) {
    Rng rng(seed);
    SliceSample s;
    s.image = Tensor<float>(1, 1, h, w);
    s.mask = Tensor<float>(1, 1, h, w);
    for (float& v : s.image.data) v = static_cast<float>(rng.uniform());
    for (float& v : s.mask.data) v = rng.uniform() < 0.2 ? 1.0f : 0.0f;
    s.phenotype = Phenotype::contusion;
    s.case_id = static_cast<int>(seed % 1000);
    s.slice_idx = static_cast<int>(seed % 7);
    return s;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("slice round trip is bit exact") {
    TempDir tmp;
    auto s = random_slice(5);
    write_slice(tmp.file("a.seg"), s);
    auto r = read_slice(tmp.file("a.seg"));
    CHECK(r.image.shape == s.image.shape);
    CHECK(r.image.data == s.image.data);
    CHECK(r.mask.data == s.mask.data);
    CHECK(r.phenotype == s.phenotype);
    CHECK(r.case_id == s.case_id);
    CHECK(r.slice_idx == s.slice_idx);
}

TEST_CASE("slice file size matches the documented layout") {
    TempDir tmp;
    auto s = random_slice(6, 16, 12);
    write_slice(tmp.file("a.seg"), s);
    CHECK(fs::file_size(tmp.file("a.seg")) == 24 + 5 * 16 * 12);
}

TEST_CASE("read_slice rejects bad input") {
    TempDir tmp;
    {
        std::ofstream out(tmp.file("bad.seg"), std::ios::binary);
        out << "NOPE" << std::string(40, '\0');
    }
    CHECK_THROWS_WITH_AS(read_slice(tmp.file("bad.seg")), doctest::Contains("SEG1"),
                         std::runtime_error);

    auto s = random_slice(7);
    write_slice(tmp.file("a.seg"), s);
    auto bytes = slurp(tmp.file("a.seg"));
    {
        std::ofstream out(tmp.file("trunc.seg"), std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_AS(read_slice(tmp.file("trunc.seg")), std::runtime_error);

    {
        std::ofstream out(tmp.file("extra.seg"), std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out << "junk";
    }
    CHECK_THROWS_AS(read_slice(tmp.file("extra.seg")), std::runtime_error);

    CHECK_THROWS_AS(read_slice(tmp.file("missing.seg")), std::runtime_error);
}

TEST_CASE("params round trip") {
    TempDir tmp;
    ModelConfig cfg{Arch::unetpp, 2, 3, 1};
    Model m = build_model(cfg);
    auto store = init_params<float>(m.graph, 21);
    write_params(tmp.file("p.segp"), cfg, store);
    auto [rcfg, rstore] = read_params(tmp.file("p.segp"));
    CHECK(rcfg.arch == cfg.arch);
    CHECK(rcfg.depth == cfg.depth);
    CHECK(rcfg.base_channels == cfg.base_channels);
    REQUIRE(rstore.entries.size() == store.entries.size());
    for (std::size_t i = 0; i < store.entries.size(); ++i) {
        CHECK(rstore.entries[i].k.weight.data == store.entries[i].k.weight.data);
        CHECK(rstore.entries[i].k.bias == store.entries[i].k.bias);
        CHECK(rstore.entries[i].k.stride == store.entries[i].k.stride);
        CHECK(rstore.entries[i].transposed == store.entries[i].transposed);
    }
}

TEST_CASE("write_results formats and rounds") {
    TempDir tmp;
    std::vector<ResultRow> rows;
    ResultRow r;
    r.architecture = "unet";
    r.loss = "bce";
    r.seed = 1;
    r.dice = 0.94236;
    r.sensitivity = 0.5;
    r.specificity = 0.87654321;
    r.epochs = 30;
    r.params = 758571;
    rows.push_back(r);
    write_results(tmp.file("results.csv"), rows);

    auto text = slurp(tmp.file("results.csv"));
    CHECK(text.substr(0, text.find('\n')) ==
          "architecture,loss,seed,dice,sensitivity,specificity,epochs,params");
    CHECK(text.find("unet,bce,1,0.9424,0.5000,0.8765,30,758571") != std::string::npos);
    CHECK(fs::exists(tmp.file("results.txt")));
}

TEST_CASE("summary table averages over seeds") {
    TempDir tmp;
    std::vector<ResultRow> rows;
    for (const char* arch : {"unet", "unetpp"})
        for (const char* loss : {"bce", "dice", "focal", "focal_tversky"})
            for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
                ResultRow r;
                r.architecture = arch;
                r.loss = loss;
                r.seed = seed;
                r.dice = 0.80 + 0.01 * static_cast<double>(seed);
                rows.push_back(r);
            }
    write_results(tmp.file("results.csv"), rows);

    auto csv = slurp(tmp.file("results.csv"));
    int lines = 0;
    for (char c : csv)
        if (c == '\n') ++lines;
    CHECK(lines == 25);  // header + 24 rows

    auto txt = slurp(tmp.file("results.txt"));
    CHECK(txt.find("0.8200") != std::string::npos);  // mean of .81/.82/.83
    CHECK(txt.find("unetpp") != std::string::npos);
}

TEST_CASE("empty config text yields defaults") {
    auto cfg = parse_config_text("");
    CHECK(cfg.model.arch == Arch::unet);
    CHECK(cfg.model.depth == 3);
    CHECK(cfg.model.base_channels == 8);
    CHECK(cfg.loss.kind == LossKind::bce);
    CHECK(cfg.train.epochs == 30);
    CHECK(cfg.data.n_cases == 30);
    CHECK(cfg.train_fraction == 0.8);
    CHECK(cfg.grid.seeds == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(cfg.warnings.empty());
}

TEST_CASE("config parsing sections comments and values") {
    auto cfg = parse_config_text(
        "# top comment\n"
        "[model]\n"
        "arch = unetpp\n"
        "depth = 3\n"
        "base_channels = 6  # trailing comment\n"
        "\n"
        "[loss]\n"
        "kind = focal_tversky\n"
        "gamma_ftl = 1.25\n"
        "[train]\n"
        "epochs = 12\n"
        "learning_rate = 0.05\n"
        "[data]\n"
        "phenotype = extra_axial\n"
        "n_cases = 10\n"
        "[grid]\n"
        "seeds = 4,5\n"
        "threshold = 0.4\n");
    CHECK(cfg.model.arch == Arch::unetpp);
    CHECK(cfg.model.depth == 3);
    CHECK(cfg.model.base_channels == 6);
    CHECK(cfg.loss.kind == LossKind::focal_tversky);
    CHECK(cfg.loss.gamma_ftl == doctest::Approx(1.25));
    CHECK(cfg.train.epochs == 12);
    CHECK(cfg.train.learning_rate == doctest::Approx(0.05f));
    CHECK(cfg.data.phenotype == Phenotype::extra_axial);
    CHECK(cfg.data.n_cases == 10);
    CHECK(cfg.grid.seeds == std::vector<std::uint64_t>{4, 5});
    CHECK(cfg.grid.threshold == doctest::Approx(0.4));
}

TEST_CASE("config parser errors carry line numbers") {
    CHECK_THROWS_WITH_AS(parse_config_text("[model]\nwat = 3\n"), doctest::Contains("line 2"),
                         std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("[nosuch]\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("arch = unet\n"), std::invalid_argument);  // key before section
    CHECK_THROWS_AS(parse_config_text("[model]\ndepth: 3\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("[model]\ndepth = squid\n"), std::invalid_argument);
}

TEST_CASE("config values are validated after parsing") {
    CHECK_THROWS_WITH_AS(parse_config_text("[loss]\ngamma_ftl = 5\n"), doctest::Contains("[1,3]"),
                         std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("[model]\ndepth = 0\n"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("[grid]\nthreshold = 1.5\n"), std::invalid_argument);
}

TEST_CASE("duplicate keys warn and the last value wins") {
    auto cfg = parse_config_text("[train]\nepochs = 5\nepochs = 9\n");
    CHECK(cfg.train.epochs == 9);
    REQUIRE(cfg.warnings.size() == 1);
    CHECK(cfg.warnings[0].find("epochs") != std::string::npos);
}
