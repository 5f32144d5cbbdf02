#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "prose/checkpoint.hpp"
#include "prose/data.hpp"
#include "prose/disentangle.hpp"
#include "prose/error.hpp"
#include "prose/eval.hpp"
#include "prose/image_io.hpp"
#include "prose/keyvalue.hpp"

namespace prose::cli {

namespace {

namespace fs = std::filesystem;

// Thrown for problems that are the caller's fault (bad flag values, bad
// config keys); mapped to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct OptionSpec {
    const char* key;    // config-file key; the flag is --key with '_' → '-'
    const char* help;
    bool is_flag = false;
};

// Every option any subcommand accepts. `--no-cayley` is the one flag whose
// config equivalent is spelled differently (`cayley = false`).
const std::vector<OptionSpec>& all_options() {
    static const std::vector<OptionSpec> options{
        {"seed", "RNG seed (u64)"},
        {"out", "output directory; nothing is written outside it"},
        {"preset", "base configuration: quads | mnist"},
        {"data", "dataset file (PROSEDAT)"},
        {"checkpoint", "checkpoint file (PROSECKP)"},
        {"epochs", "training epochs"},
        {"lambda_orth", "weight of the orthonormality penalty"},
        {"tau", "Cayley step size"},
        {"backbone", "swap | bvae"},
        {"beta", "KL weight for the bvae backbone"},
        {"cayley", "apply the Cayley step during training (true|false)"},
        {"batch_size", "mini-batch size"},
        {"learning_rate", "Adam learning rate"},
        {"k", "number of latent partitions"},
        {"d", "dimension of each partition"},
        {"mnist_images", "MNIST IDX image file (gen-data)"},
        {"mnist_labels", "MNIST IDX label file (gen-data)"},
        {"block", "latent partition index"},
        {"rows", "number of row source images"},
        {"cols", "number of column source images"},
        {"a", "index of the first example (test split order)"},
        {"b", "index of the second example (test split order)"},
        {"steps", "interpolation stops including endpoints"},
        {"interpolation", "slerp | lerp"},
    };
    return options;
}

std::string flag_name(const std::string& key) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    return flag;
}

// Values collected from flags and the config file, keyed by config key.
class Settings {
public:
    void bind(CLI::App& app, const std::vector<std::string>& keys) {
        for (const auto& spec : all_options()) {
            if (std::find(keys.begin(), keys.end(), spec.key) == keys.end()) continue;
            if (std::string(spec.key) == "cayley") {
                app.add_flag("--no-cayley", no_cayley_, "disable the Cayley step during training");
                cayley_bound_ = true;
                continue;
            }
            auto* opt = app.add_option(flag_name(spec.key), raw_[spec.key], spec.help);
            options_[spec.key] = opt;
        }
        app.add_option("--config", config_path_, "key = value config file; flags override it");
    }

    // Flags win over the config file.
    void resolve() {
        for (const auto& [key, opt] : options_)
            if (opt->count() > 0) values_[key] = raw_[key];
        if (no_cayley_) values_["cayley"] = "false";
        if (config_path_.empty()) return;

        std::ifstream in(config_path_);
        if (!in) throw UsageError("cannot read config file '" + config_path_ + "'");
        std::stringstream text;
        text << in.rdbuf();
        KeyValues pairs;
        try {
            pairs = parse_key_values(text.str());
        } catch (const ConfigError& e) {
            throw UsageError(config_path_ + ": " + e.what());
        }
        std::set<std::string> known;
        for (const auto& spec : all_options()) known.insert(spec.key);
        known.insert("no_cayley");
        for (auto [key, value] : pairs) {
            if (!known.count(key)) throw UsageError(config_path_ + ": unknown key '" + key + "'");
            if (key == "no_cayley") {
                key = "cayley";
                value = parse_bool_usage(key, value) ? "false" : "true";
            }
            const bool bound = options_.count(key) > 0 || (key == "cayley" && cayley_bound_);
            if (!bound) continue;   // known, but meaningless for this subcommand
            values_.try_emplace(key, value);
        }
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) throw UsageError("missing required option " + flag_name(key));
        return it->second;
    }

    std::string get_or(const std::string& key, const std::string& fallback) const {
        return has(key) ? get(key) : fallback;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        if (!has(key)) return fallback;
        try {
            return parse_u64(key, get(key));
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static bool parse_bool_usage(const std::string& key, const std::string& value) {
        try {
            return parse_bool(key, value);
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
    }

    std::map<std::string, std::string> raw_;
    std::map<std::string, CLI::Option*> options_;
    std::map<std::string, std::string> values_;
    std::string config_path_;
    bool no_cayley_ = false;
    bool cayley_bound_ = false;
};

ProseConfig build_config(const Settings& s) {
    ProseConfig cfg;
    const std::string preset = s.get_or("preset", "quads");
    if (preset == "quads") {
        cfg = ProseConfig::quads();
    } else if (preset == "mnist") {
        cfg = ProseConfig::mnist();
    } else {
        throw UsageError("unknown preset '" + preset + "' (expected quads or mnist)");
    }
    for (const auto& [key, value] : s.values()) {
        try {
            cfg.apply(key, value);
        } catch (const ConfigError& e) {
            throw UsageError(e.what());
        }
    }
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }
    return cfg;
}

fs::path output_dir(const Settings& s) {
    fs::path dir = s.get("out");
    fs::create_directories(dir);
    return dir;
}

void configure_logging() {
    auto logger = spdlog::get("prose");
    if (!logger) {
        logger = spdlog::stderr_color_mt("prose");
        logger->set_pattern("[%l] %v");
    }
    spdlog::set_default_logger(logger);
    const char* env = std::getenv("PROSE_LOG");
    const std::string level = env != nullptr ? env : "info";
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::set_level(spdlog::level::info);
}

int cmd_gen_data(const Settings& s, std::ostream& out) {
    const fs::path dir = output_dir(s);
    const std::uint64_t seed = s.get_u64("seed", 7);
    FactorDataset ds;
    if (s.has("mnist_images") || s.has("mnist_labels")) {
        ds = load_idx(s.get("mnist_images"), s.get("mnist_labels"));
        split_dataset(ds, 0.8, seed);
    } else {
        const std::string preset = s.get_or("preset", "quads");
        if (preset != "quads") {
            throw UsageError("gen-data synthesizes only the quads preset; pass --mnist-images and "
                             "--mnist-labels to convert MNIST");
        }
        ds = generate_toy(FactorSpec::quads(), seed);
    }
    const fs::path path = dir / "dataset.prosedat";
    save_dataset(ds, path);
    out << "wrote " << path.string() << " (" << ds.size() << " examples)\n";
    return kExitOk;
}

int cmd_train(const Settings& s, std::ostream& out) {
    const ProseConfig cfg = build_config(s);
    const fs::path dir = output_dir(s);
    const FactorDataset ds = load_dataset(s.get("data"));

    std::ofstream metrics(dir / "metrics.csv", std::ios::trunc);
    if (!metrics) throw IoError("cannot write metrics.csv");
    metrics << metrics_csv_header() << '\n';
    {
        std::ofstream resolved(dir / "config.cfg", std::ios::trunc);
        resolved << format_key_values(cfg.to_key_values());
    }
    spdlog::info("training {} backbone, k={} d={} lambda_orth={} cayley={} for {} epochs",
                 to_string(cfg.backbone), cfg.k, cfg.d, cfg.lambda_orth, cfg.cayley_enabled,
                 cfg.epochs);
    const Checkpoint ckpt = train(cfg, ds, [&](const EpochMetrics& m) {
        metrics << metrics_csv_row(m) << '\n';
        spdlog::info("epoch {} step {} recon={:.6f} aux={:.6f} orth={:.6f} total={:.6f}", m.epoch,
                     m.step, m.recon, m.aux, m.orth, m.total);
    });
    const fs::path path = dir / "checkpoint.prose";
    save_checkpoint(ckpt, path);
    out << "wrote " << path.string() << '\n';
    return kExitOk;
}

int cmd_eval(const Settings& s, std::ostream& out) {
    const fs::path dir = output_dir(s);
    const std::string ckpt_path = s.get("checkpoint");
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const FactorDataset ds = load_dataset(s.get("data"));
    EvalReport report = evaluate(ckpt, ds, s.get_u64("seed", 7));
    report.checkpoint_id = fs::path(ckpt_path).filename().string();
    write_report(report, dir);
    out << "matched_map " << report.map.matched_map() << "\nmean_leakage_accuracy "
        << report.mean_leakage() << "\nmean_orth_deviation " << report.mean_orth_deviation << '\n';
    return kExitOk;
}

std::vector<std::size_t> pick_test_examples(const FactorDataset& ds, std::size_t count,
                                            std::uint64_t seed) {
    auto idx = ds.indices(Split::test);
    if (idx.size() < count) throw UsageError("not enough test examples");
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(count);
    return idx;
}

int cmd_transfer(const Settings& s, std::ostream& out) {
    const fs::path dir = output_dir(s);
    const Checkpoint ckpt = load_checkpoint(s.get("checkpoint"));
    const FactorDataset ds = load_dataset(s.get("data"));
    const std::size_t block = s.get_u64("block", 0);
    const std::size_t rows = s.get_u64("rows", 5);
    const std::size_t cols = s.get_u64("cols", 5);
    const auto picks = pick_test_examples(ds, rows + cols, s.get_u64("seed", 7));
    const std::vector<std::size_t> row_idx(picks.begin(), picks.begin() + static_cast<std::ptrdiff_t>(rows));
    const std::vector<std::size_t> col_idx(picks.begin() + static_cast<std::ptrdiff_t>(rows), picks.end());
    const TransferGrid grid = attribute_transfer_grid(ckpt, gather_rows(ds.images, row_idx),
                                                      gather_rows(ds.images, col_idx), block);
    const fs::path path = dir / ("transfer_block" + std::to_string(block) + ".ppm");
    write_pnm(grid.composite, path);
    out << "wrote " << path.string() << '\n';
    return kExitOk;
}

int cmd_interpolate(const Settings& s, std::ostream& out) {
    const fs::path dir = output_dir(s);
    const Checkpoint ckpt = load_checkpoint(s.get("checkpoint"));
    const FactorDataset ds = load_dataset(s.get("data"));
    const auto test = ds.indices(Split::test);
    const std::size_t a = s.get_u64("a", 0);
    const std::size_t b = s.get_u64("b", 1);
    if (a >= test.size() || b >= test.size()) throw UsageError("example index out of range");
    const std::size_t block = s.get_u64("block", 0);
    const std::size_t steps = s.get_u64("steps", 8);
    const std::string mode = s.get_or("interpolation", "slerp");
    if (mode != "slerp" && mode != "lerp") throw UsageError("interpolation must be slerp or lerp");
    const auto strip = interpolation_strip(
        ckpt, ds.images.row(test[a]), ds.images.row(test[b]), block, steps,
        mode == "lerp" ? Interpolation::lerp : Interpolation::slerp);
    const Image composite = tile_images({strip}, ckpt.image);
    const fs::path path = dir / ("interpolate_block" + std::to_string(block) + ".ppm");
    write_pnm(composite, path);
    out << "wrote " << path.string() << '\n';
    return kExitOk;
}

int cmd_inspect(const Settings& s, std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(s.get("checkpoint"));
    out << "format: PROSECKP v" << kCheckpointVersion << '\n';
    for (const auto& [key, value] : ckpt.config.to_key_values()) out << key << ": " << value << '\n';
    out << "image: " << ckpt.image.height << "x" << ckpt.image.width << "x" << ckpt.image.channels
        << '\n'
        << "epoch: " << ckpt.epoch << '\n'
        << "adam_step: " << ckpt.optimizer.step << '\n'
        << "encoder_parameters: " << ckpt.encoder.parameter_count() << '\n'
        << "decoder_parameters: " << ckpt.decoder.parameter_count() << '\n';
    for (const auto* net : {&ckpt.encoder, &ckpt.decoder}) {
        const char* name = net == &ckpt.encoder ? "encoder" : "decoder";
        for (std::size_t l = 0; l < net->layers().size(); ++l) {
            const auto& layer = net->layers()[l];
            out << name << "." << l << ": " << layer.in_width() << " -> " << layer.out_width() << " "
                << to_string(layer.activation) << '\n';
        }
    }
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Orthonormal latent-block disentangling toolkit", "prose"};
    app.require_subcommand(1, 1);

    struct Command {
        const char* name;
        const char* help;
        std::vector<std::string> keys;
        int (*fn)(const Settings&, std::ostream&);
    };
    const std::vector<std::string> train_keys{
        "seed", "out", "preset", "data", "epochs", "lambda_orth", "tau", "backbone", "beta",
        "cayley", "batch_size", "learning_rate", "k", "d"};
    const std::vector<Command> commands{
        {"gen-data", "write the Quads toy dataset (or convert MNIST IDX) to a PROSEDAT file",
         {"seed", "out", "preset", "mnist_images", "mnist_labels"}, cmd_gen_data},
        {"train", "train a model and write checkpoint.prose and metrics.csv", train_keys, cmd_train},
        {"eval", "write mAP, leakage and orthonormality reports",
         {"seed", "out", "checkpoint", "data"}, cmd_eval},
        {"transfer", "write an attribute-transfer grid as PPM",
         {"seed", "out", "checkpoint", "data", "block", "rows", "cols"}, cmd_transfer},
        {"interpolate", "write a single-block interpolation strip as PPM",
         {"out", "checkpoint", "data", "a", "b", "block", "steps", "interpolation"}, cmd_interpolate},
        {"inspect", "print a checkpoint header", {"checkpoint"}, cmd_inspect},
    };

    std::vector<Settings> settings(commands.size());
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < commands.size(); ++i) {
        auto* sub = app.add_subcommand(commands[i].name, commands[i].help);
        settings[i].bind(*sub, commands[i].keys);
        subs.push_back(sub);
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    if (!reversed.empty()) reversed.pop_back();   // program name
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "prose: " << e.what() << '\n' << app.help();
        return kExitUsage;
    }

    configure_logging();
    for (std::size_t i = 0; i < commands.size(); ++i) {
        if (!subs[i]->parsed()) continue;
        try {
            settings[i].resolve();
            return commands[i].fn(settings[i], out);
        } catch (const UsageError& e) {
            err << "prose " << commands[i].name << ": " << e.what() << '\n' << subs[i]->help();
            return kExitUsage;
        } catch (const prose::Error& e) {
            err << "prose " << commands[i].name << ": " << e.what() << '\n';
            return kExitModuleError;
        } catch (const std::exception& e) {
            err << "prose " << commands[i].name << ": " << e.what() << '\n';
            return kExitModuleError;
        }
    }
    return kExitUsage;
}

}  // namespace prose::cli
