#include <doctest.h>

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "pconet/checkpoint.hpp"
#include "pconet/cli.hpp"
#include "pconet/data.hpp"
#include "pconet/metrics.hpp"
#include "support.hpp"

using namespace pconet;
using testing::TempDir;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("cli");

namespace {

const fs::path kSynthetic = fs::path(PCONET_TEST_DATA) / "synthetic";

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> v;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);)
        if (!l.empty()) v.push_back(l);
    return v;
}

// Parses --show-config output into key -> unquoted value.
std::map<std::string, std::string> shown(const std::string& text) {
    std::map<std::string, std::string> m;
    for (const auto& l : lines(text)) {
        const auto eq = l.find('=');
        if (eq == std::string::npos) continue;
        std::string v = l.substr(eq + 1);
        if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'')) v = v.substr(1, v.size() - 2);
        m[l.substr(0, eq)] = v;
    }
    return m;
}

// A checkpoint trained for a couple of epochs, shared by the read-only tests.
const fs::path& trained_checkpoint() {
    static TempDir dir("cli_model");
    static const fs::path path = [] {
        const auto p = dir / "m.pcon";
        const auto r = run({"train", "--data", kSynthetic.string(), "--epochs", "2", "--batch", "4", "--out",
                            p.string(), "--deterministic"});
        REQUIRE(r.code == 0);
        return p;
    }();
    return path;
}

}  // namespace

TEST_CASE("train writes a log and a loadable checkpoint") {
    TempDir dir("cli_train");
    const auto ckpt = dir / "model.pcon";
    const auto r = run({"train", "--data", kSynthetic.string(), "--epochs", "3", "--batch", "4", "--lr", "1e-4",
                        "--out", ckpt.string()});
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(ckpt));
    CHECK(read_curve_log(dir / "model.csv").size() == 3);
    CHECK(r.out.find(ckpt.string()) != std::string::npos);
    CHECK_NOTHROW(load_checkpoint(ckpt));
}

TEST_CASE("train reports usage and data errors") {
    TempDir dir("cli_bad");
    fs::create_directories(dir / "ds" / "infected");
    fs::copy_file(kSynthetic / "infected" / "blob_00.png", dir / "ds" / "infected" / "a.png");
    const auto missing = run({"train", "--data", (dir / "ds").string(), "--out", (dir / "m.pcon").string()});
    CHECK(missing.code == cli::kData);
    CHECK(missing.err.find("missing class directory") != std::string::npos);
    CHECK(missing.err.find("not_infected") != std::string::npos);

    CHECK(run({"train", "--data", kSynthetic.string(), "--epochs", "0"}).code == cli::kUsage);
    CHECK(run({"train", "--data", kSynthetic.string(), "--augment=maybe"}).code == cli::kUsage);
    CHECK(run({"train"}).code == cli::kUsage);
    CHECK(run({"frobnicate"}).code == cli::kUsage);
    CHECK(run({}).code == cli::kUsage);
    CHECK_FALSE(fs::exists(dir / "m.pcon"));
}

TEST_CASE("training that diverges exits with the training code") {
    TempDir dir("cli_diverge");
    const auto r = run({"train", "--data", kSynthetic.string(), "--epochs", "5", "--batch", "4", "--lr", "1e30",
                        "--out", (dir / "m.pcon").string()});
    CAPTURE(r.err);
    CHECK(r.code == cli::kTraining);
    CHECK(r.err.find("epoch") != std::string::npos);
}

TEST_CASE("eval prints a report or json") {
    const auto ckpt = trained_checkpoint().string();
    const auto text = run({"eval", "--checkpoint", ckpt, "--data", kSynthetic.string()});
    REQUIRE(text.code == 0);
    CHECK(text.out.find("Accuracy:") != std::string::npos);
    CHECK(text.out.find("F1 Score") != std::string::npos);

    const auto js = run({"eval", "--checkpoint", ckpt, "--data", kSynthetic.string(), "--json"});
    REQUIRE(js.code == 0);
    const auto j = nlohmann::json::parse(js.out);
    CHECK(j.contains("accuracy"));
    CHECK(j["per_class"].contains("infected"));
    CHECK(j["per_class"].contains("not infected"));
    std::uint64_t total = 0;
    for (const auto& row : j["confusion"])
        for (const auto& v : row) total += v.get<std::uint64_t>();
    CHECK(total == 8);
}

TEST_CASE("checkpoint errors exit with the checkpoint code") {
    TempDir dir("cli_ckpt");
    std::ofstream(dir / "junk.pcon") << "definitely not a model";
    const auto bad = (dir / "junk.pcon").string();
    CHECK(run({"eval", "--checkpoint", bad, "--data", kSynthetic.string()}).code == cli::kCheckpoint);
    CHECK(run({"summary", "--checkpoint", bad}).code == cli::kCheckpoint);
    CHECK(run({"predict", "--checkpoint", bad, (kSynthetic / "infected" / "blob_00.png").string()}).code ==
          cli::kCheckpoint);
    CHECK(run({"summary", "--checkpoint", (dir / "absent.pcon").string()}).code == cli::kCheckpoint);
}

TEST_CASE("predict") {
    const auto ckpt = trained_checkpoint().string();
    const auto img = (kSynthetic / "infected" / "blob_00.png").string();
    const auto one = run({"predict", "--checkpoint", ckpt, img});
    REQUIRE(one.code == 0);
    const auto rows = lines(one.out);
    REQUIRE(rows.size() == 1);
    std::vector<std::string> fields;
    std::istringstream in(rows[0]);
    for (std::string f; std::getline(in, f, '\t');) fields.push_back(f);
    REQUIRE(fields.size() == 4);
    CHECK(fields[0] == img);
    CHECK((fields[1] == "infected" || fields[1] == "not infected"));
    const double a = std::stod(fields[2]), b = std::stod(fields[3]);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    CHECK(b >= 0.0);
    CHECK(b <= 1.0);
    CHECK(fields[1] == (a >= b ? "infected" : "not infected"));

    TempDir dir("cli_predict");
    std::ofstream(dir / "notes.txt") << "hello";
    const auto mixed = run({"predict", "--checkpoint", ckpt, img, (dir / "notes.txt").string(),
                            (dir / "nothing.png").string()});
    CHECK(mixed.code == 0);
    CHECK(lines(mixed.out).size() == 1);
    CHECK(lines(mixed.err).size() >= 2);

    const auto none = run({"predict", "--checkpoint", ckpt, (dir / "notes.txt").string()});
    CHECK(none.code == cli::kAllFailed);
    CHECK(run({"predict", "--checkpoint", ckpt}).code == cli::kUsage);
}

TEST_CASE("summary") {
    const auto r = run({"summary"});
    REQUIRE(r.code == 0);
    const auto rows = lines(r.out);
    REQUIRE_FALSE(rows.empty());
    CHECK(rows.back() == "Total params: 582,690");
    CHECK(r.out.find("Conv_1 | 32(3,3), s=1 | (222,222,32)") != std::string::npos);
    const auto with = run({"summary", "--checkpoint", trained_checkpoint().string()});
    CHECK(with.code == 0);
    CHECK(with.out == r.out);
}

TEST_CASE("plot writes four svg files") {
    TempDir dir("cli_plot");
    const auto log = trained_checkpoint().parent_path() / "m.csv";
    const auto r = run({"plot", "--log", log.string(), "--out", (dir / "svg").string()});
    CAPTURE(r.err);
    REQUIRE(r.code == 0);
    for (const char* f : {"loss.svg", "accuracy.svg", "precision.svg", "recall.svg"}) CHECK(fs::exists(dir / "svg" / f));
    std::ofstream(dir / "empty.csv") << kCurveHeader << "\n";
    CHECK(run({"plot", "--log", (dir / "empty.csv").string(), "--out", (dir / "none").string()}).code != 0);
}

TEST_CASE("config file precedence") {
    TempDir dir("cli_config");
    const auto cfg = dir / "run.conf";
    std::ofstream(cfg) << "# sample\nepochs = 7\nbatch = 8\nlr = 0.001\nseed = 3\naugment = off\n"
                          "out = from_config.pcon\nlog = from_config.csv\nval-dir = vd\ndeterministic = true\n";

    const auto base = run({"train", "--data", "d", "--config", cfg.string(), "--show-config"});
    REQUIRE(base.code == 0);
    const auto from_file = shown(base.out);
    CHECK(from_file.at("epochs") == "7");
    CHECK(from_file.at("batch") == "8");
    CHECK(std::stod(from_file.at("lr")) == 0.001);
    CHECK(from_file.at("seed") == "3");
    CHECK(from_file.at("augment") == "off");
    CHECK(from_file.at("out") == "from_config.pcon");
    CHECK(from_file.at("log") == "from_config.csv");
    CHECK(from_file.at("val-dir") == "vd");
    CHECK(from_file.at("deterministic") == "true");

    // Every flag given on the command line wins over the file.
    const std::map<std::string, std::pair<std::string, std::string>> overrides = {
        {"epochs", {"--epochs=2", "2"}},       {"batch", {"--batch=4", "4"}},
        {"seed", {"--seed=9", "9"}},           {"augment", {"--augment=on", "on"}},
        {"out", {"--out=cli.pcon", "cli.pcon"}}, {"log", {"--log=cli.csv", "cli.csv"}},
        {"val-dir", {"--val-dir=cv", "cv"}},
    };
    for (const auto& [key, flag] : overrides) {
        CAPTURE(key);
        const auto r = run({"train", "--data", "d", flag.first, "--config", cfg.string(), "--show-config"});
        REQUIRE(r.code == 0);
        const auto m = shown(r.out);
        CHECK(m.at(key) == flag.second);
        for (const auto& [other, value] : from_file)
            if (other != key && other != "lr" && other != "config" && other != "show-config")
                CHECK(m.at(other) == value);
    }
    const auto lr = shown(run({"train", "--data", "d", "--lr", "0.5", "--config", cfg.string(), "--show-config"}).out);
    CHECK(std::stod(lr.at("lr")) == 0.5);

    std::ofstream(dir / "broken.conf") << "epochs 7\n";
    CHECK(run({"train", "--data", "d", "--config", (dir / "broken.conf").string()}).code == cli::kUsage);
    CHECK(run({"train", "--data", "d", "--config", (dir / "absent.conf").string()}).code == cli::kUsage);

    // Keys for other subcommands are ignored with a warning.
    std::ofstream(dir / "mixed.conf") << "json = true\nepochs = 5\n";
    const auto mixed = run({"train", "--data", "d", "--config", (dir / "mixed.conf").string(), "--show-config"});
    CHECK(mixed.code == 0);
    CHECK(mixed.err.find("json") != std::string::npos);
    CHECK(shown(mixed.out).at("epochs") == "5");
}

TEST_CASE("merge_config leaves explicit flags alone") {
    const auto merged = cli::merge_config({"train", "--epochs", "3", "--data=x"}, {{"epochs", "9"}, {"seed", "4"}, {"data", "y"}});
    CHECK(merged == std::vector<std::string>{"train", "--seed=4", "--epochs", "3", "--data=x"});
}

TEST_CASE("deterministic runs write identical logs") {
    TempDir dir("cli_det");
    std::string logs[2];
    for (int i = 0; i < 2; ++i) {
        const auto out = dir / ("m" + std::to_string(i) + ".pcon");
        const auto r = run({"train", "--data", kSynthetic.string(), "--epochs", "2", "--batch", "3", "--seed", "11",
                            "--out", out.string(), "--deterministic"});
        REQUIRE(r.code == 0);
        logs[i] = slurp(dir / ("m" + std::to_string(i) + ".csv"));
    }
    CHECK(logs[0] == logs[1]);
    CHECK(slurp(dir / "m0.pcon") == slurp(dir / "m1.pcon"));
}

TEST_CASE("make-synthetic produces a trainable dataset") {
    TempDir dir("cli_synth");
    const auto r = run({"make-synthetic", "--out", (dir / "ds").string(), "--per-class", "3", "--size", "32"});
    REQUIRE(r.code == 0);
    const auto scan = scan_dataset(dir / "ds");
    CHECK(scan.records.size() == 6);
}

TEST_SUITE_END();
