#include "pconet/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <omp.h>

#include <CLI11.hpp>

#include "pconet/checkpoint.hpp"
#include "pconet/data.hpp"
#include "pconet/metrics.hpp"
#include "pconet/model.hpp"
#include "pconet/trainer.hpp"

namespace pconet::cli {
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kBoolFlags = {"json", "deterministic", "show-config"};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool has_flag(const std::vector<std::string>& args, const std::string& key) {
    const std::string flag = "--" + key;
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

std::optional<bool> parse_bool(const std::string& v) {
    if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "off" || v == "0" || v == "no") return false;
    return std::nullopt;
}

// Thrown for errors that map to a specific exit code after parsing succeeded.
struct Failure {
    int code;
    std::string message;
};

void apply_threads(bool deterministic, std::ostream& err) {
    if (deterministic) {
        omp_set_num_threads(1);
        return;
    }
    if (const char* env = std::getenv("PCONET_THREADS")) {
        char* end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && n >= 1)
            omp_set_num_threads(static_cast<int>(n));
        else
            err << "warning: ignoring PCONET_THREADS=" << env << '\n';
    }
}

ScanResult scan_or_fail(const fs::path& root, std::ostream& err) {
    try {
        auto r = scan_dataset(root);
        for (const auto& w : r.warnings) err << "warning: " << w << '\n';
        return r;
    } catch (const DatasetError& e) {
        throw Failure{kData, e.what()};
    } catch (const fs::filesystem_error& e) {
        throw Failure{kData, e.what()};
    }
}

Model load_or_fail(const fs::path& path, std::optional<TrainingState>* state = nullptr) {
    try {
        return load_checkpoint(path, state);
    } catch (const CheckpointError& e) {
        throw Failure{kCheckpoint, e.what()};
    }
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// ---- subcommands ------------------------------------------------------------

struct TrainArgs {
    TrainConfig config;
    std::string augment = "on";
    fs::path out = "pconet.pcon";
    std::string log;
    std::string resume;
};

int cmd_train(TrainArgs& a, std::ostream& out, std::ostream& err) {
    auto& cfg = a.config;
    cfg.augment = a.augment == "on";
    cfg.log_path = a.log.empty() ? fs::path(a.out).replace_extension(".csv") : fs::path(a.log);
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw Failure{kUsage, e.what()};
    }

    const auto scanned = scan_or_fail(cfg.train_root, err);
    std::vector<ImageRecord> train_set, val_set;
    if (cfg.val_root.empty()) {
        try {
            auto s = split(scanned.records, cfg.split_ratio, cfg.seed);
            train_set = std::move(s.train);
            val_set = std::move(s.validation);
        } catch (const DatasetError& e) {
            throw Failure{kData, e.what()};
        }
    } else {
        train_set = scanned.records;
        val_set = scan_or_fail(cfg.val_root, err).records;
    }

    std::optional<TrainingState> state;
    Model model = a.resume.empty() ? build_pconet(cfg.seed) : load_or_fail(a.resume, &state);
    if (state && state->epoch >= cfg.epochs)
        throw Failure{kUsage, "checkpoint already holds " + std::to_string(state->epoch) + " epochs"};

    err << "training on " << train_set.size() << " images, validating on " << val_set.size() << '\n';
    FileSource train_src(train_set), val_src(val_set);
    try {
        Trainer trainer(model, train_src, val_src, cfg, state);
        trainer.train([&](const EpochRow& r) {
            err << "epoch " << r.epoch << '/' << cfg.epochs << "  loss " << fixed(r.train_loss, 4) << "  acc "
                << fixed(r.train_acc, 4) << "  val_loss " << fixed(r.val_loss, 4) << "  val_acc "
                << fixed(r.val_acc, 4) << '\n';
            return true;
        });
        const auto st = trainer.state();
        save_checkpoint(model, a.out, &st);
    } catch (const TrainingAborted& e) {
        throw Failure{kTraining, e.what()};
    } catch (const ImageDecodeError& e) {
        throw Failure{kData, e.what()};
    } catch (const CheckpointError& e) {
        throw Failure{kCheckpoint, e.what()};
    } catch (const LogError& e) {
        throw Failure{kData, e.what()};
    }

    out << summary(model);
    out << "checkpoint: " << a.out.string() << '\n' << "log: " << cfg.log_path.string() << '\n';
    return kOk;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& data, std::size_t batch, bool json, std::ostream& out,
             std::ostream& err) {
    Model model = load_or_fail(checkpoint);
    const auto scanned = scan_or_fail(data, err);
    FileSource src(scanned.records);
    Evaluation ev;
    try {
        ev = evaluate(model, src, batch);
    } catch (const ImageDecodeError& e) {
        throw Failure{kData, e.what()};
    }
    const auto rep = report(ev.confusion);
    if (json)
        out << report_json(rep, ev.confusion) << '\n';
    else
        out << format_report(rep, ev.confusion);
    return kOk;
}

int cmd_predict(const fs::path& checkpoint, const std::vector<std::string>& images, std::ostream& out,
                std::ostream& err) {
    Model model = load_or_fail(checkpoint);
    std::size_t ok = 0;
    for (const auto& path : images) {
        try {
            const auto p = predict(model, preprocess(decode_image(path)));
            out << path << '\t' << p.label_name() << '\t' << fixed(p.scores[0], 6) << '\t' << fixed(p.scores[1], 6)
                << '\n';
            ++ok;
        } catch (const ImageDecodeError& e) {
            err << "error: " << e.what() << '\n';
        }
    }
    return ok == 0 ? kAllFailed : kOk;
}

}  // namespace

std::map<std::string, std::string> read_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path.string() + ": cannot read config file");
    std::map<std::string, std::string> kv;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": expected key = value");
        auto key = trim(line.substr(0, eq));
        if (key.rfind("--", 0) == 0) key.erase(0, 2);
        if (key.empty()) throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": empty key");
        kv[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::vector<std::string> merge_config(const std::vector<std::string>& args,
                                      const std::map<std::string, std::string>& config) {
    std::vector<std::string> injected;
    for (const auto& [key, value] : config) {
        if (has_flag(args, key)) continue;
        if (kBoolFlags.count(key)) {
            const auto b = parse_bool(value);
            if (!b) throw std::runtime_error("config: " + key + " expects true/false, got '" + value + "'");
            if (*b) injected.push_back("--" + key);
        } else {
            injected.push_back("--" + key + "=" + value);
        }
    }
    std::vector<std::string> merged;
    merged.reserve(args.size() + injected.size());
    const std::size_t at = args.empty() ? 0 : 1;
    merged.insert(merged.end(), args.begin(), args.begin() + static_cast<std::ptrdiff_t>(at));
    merged.insert(merged.end(), injected.begin(), injected.end());
    merged.insert(merged.end(), args.begin() + static_cast<std::ptrdiff_t>(at), args.end());
    return merged;
}

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Train, evaluate and inspect the PCONet ultrasound classifier.", "pconet"};
    app.require_subcommand(1);
    std::string config_path;
    bool deterministic = false, show_config = false;
    auto add_common = [&](CLI::App* sc) {
        sc->add_option("--config", config_path, "Flat key = value file; command-line flags win");
        sc->add_flag("--deterministic", deterministic, "Single-threaded, reproducible run");
        sc->add_flag("--show-config", show_config, "Print the effective settings and exit");
    };

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Train from a directory dataset");
    train->add_option("--data", ta.config.train_root, "Dataset root with infected/ and not_infected/")->required();
    train->add_option("--val-dir", ta.config.val_root, "Explicit validation root (default: 80/20 split)");
    train->add_option("--epochs", ta.config.epochs, "Epochs")->capture_default_str();
    train->add_option("--batch", ta.config.batch_size, "Batch size")->capture_default_str();
    train->add_option("--lr", ta.config.learning_rate, "Adam learning rate")->capture_default_str();
    train->add_option("--seed", ta.config.seed, "Seed for init, split, shuffle and augmentation")
        ->capture_default_str();
    train->add_option("--augment", ta.augment, "on|off")->check(CLI::IsMember({"on", "off"}))->capture_default_str();
    train->add_option("--out", ta.out, "Checkpoint to write")->capture_default_str();
    train->add_option("--log", ta.log, "CSV training log (default: <out>.csv)");
    train->add_option("--checkpoint", ta.resume, "Resume from a checkpoint with optimizer state");
    add_common(train);

    fs::path ckpt, data;
    std::size_t batch = 16;
    bool json = false;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a labelled dataset");
    eval->add_option("--checkpoint", ckpt, "Checkpoint")->required();
    eval->add_option("--data", data, "Dataset root")->required();
    eval->add_option("--batch", batch, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
    eval->add_flag("--json", json, "Emit one JSON object");
    add_common(eval);

    std::vector<std::string> images;
    auto* pred = app.add_subcommand("predict", "Classify images");
    pred->add_option("--checkpoint", ckpt, "Checkpoint")->required();
    pred->add_option("images", images, "Image files")->required();
    add_common(pred);

    std::string summary_ckpt;
    auto* summ = app.add_subcommand("summary", "Print the architecture table");
    summ->add_option("--checkpoint", summary_ckpt, "Load parameters from a checkpoint first");
    add_common(summ);

    fs::path log_path, plot_dir = ".";
    auto* plot = app.add_subcommand("plot", "Render loss/accuracy/precision/recall SVGs from a training log");
    plot->add_option("--log", log_path, "CSV training log")->required();
    plot->add_option("--out", plot_dir, "Output directory")->capture_default_str();
    add_common(plot);

    fs::path synth_dir;
    std::size_t per_class = 4, synth_size = 64;
    std::uint64_t synth_seed = 1;
    auto* synth = app.add_subcommand("make-synthetic", "Write the toy blob/field dataset");
    synth->add_option("--out", synth_dir, "Dataset root to create")->required();
    synth->add_option("--per-class", per_class, "Images per class")->capture_default_str()->check(CLI::PositiveNumber);
    synth->add_option("--size", synth_size, "Side length in pixels")->capture_default_str()->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_seed, "Seed")->capture_default_str();
    add_common(synth);

    std::vector<std::string> args = raw_args;
    try {
        // The config file is read before parsing so its values can fill in flags.
        for (std::size_t i = 0; i < args.size(); ++i) {
            std::string path;
            if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
            else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
            if (path.empty()) continue;
            auto kv = read_config(path);
            CLI::App* sc = nullptr;
            if (!args.empty()) {
                try {
                    sc = app.get_subcommand(args[0]);
                } catch (const CLI::OptionNotFound&) {
                }
            }
            for (auto it = kv.begin(); it != kv.end();) {
                if (sc && sc->get_option_no_throw("--" + it->first)) {
                    ++it;
                    continue;
                }
                err << "warning: config key '" << it->first << "' does not apply to '"
                    << (args.empty() ? "" : args[0]) << "'\n";
                it = kv.erase(it);
            }
            kv.erase("config");
            args = merge_config(args, kv);
            break;
        }

        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        const auto* sc = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        err << "error: " << e.what() << '\n';
        err << "run 'pconet " << (sc == &app ? std::string() : sc->get_name() + " ") << "--help' for usage\n";
        return kUsage;
    } catch (const std::runtime_error& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }

    if (show_config) {
        for (auto* sc : app.get_subcommands()) out << sc->config_to_str(true, false);
        return kOk;
    }
    apply_threads(deterministic, err);

    try {
        if (train->parsed()) return cmd_train(ta, out, err);
        if (eval->parsed()) return cmd_eval(ckpt, data, batch, json, out, err);
        if (pred->parsed()) return cmd_predict(ckpt, images, out, err);
        if (summ->parsed()) {
            const Model model = summary_ckpt.empty() ? build_pconet() : load_or_fail(summary_ckpt);
            out << summary(model);
            return kOk;
        }
        if (plot->parsed()) {
            try {
                for (const auto& p : emit_curves_svg(log_path, plot_dir)) out << p.string() << '\n';
            } catch (const LogError& e) {
                throw Failure{kData, e.what()};
            }
            return kOk;
        }
        if (synth->parsed()) {
            make_synthetic_dataset(synth_dir, per_class, synth_size, synth_seed);
            out << synth_dir.string() << '\n';
            return kOk;
        }
    } catch (const Failure& f) {
        err << "error: " << f.message << '\n';
        return f.code;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return kUsage;
}

}  // namespace pconet::cli
