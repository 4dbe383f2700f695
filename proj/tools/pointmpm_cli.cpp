// pointmpm: data generation, tokenizer training, masked point pre-training,
// fine-tuning, few-shot evaluation and gradient checks from the command line.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pointmpm/harness.hpp"

namespace fs = std::filesystem;
using namespace pointmpm;
using namespace pointmpm::harness;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::string ckpt;
    std::string data;
    std::vector<std::string> overrides;
    std::string axis = "all";
};

class UsageError : public pointmpm::Error {
public:
    explicit UsageError(const std::string& what) : Error("usage", what) {}
};

Config resolve_config(const Options& o) {
    Config cfg = o.config_path.empty() ? Config{} : load_config(o.config_path);
    for (const auto& item : o.overrides) {
        auto [key, value] = split_assignment(item);
        apply_setting(cfg, key, value);
    }
    if (o.seed) cfg.seed = *o.seed;
    cfg.validate();
    return cfg;
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

fs::path output_dir(const Options& o) {
    require(o.out_dir, "--out");
    fs::create_directories(o.out_dir);
    return o.out_dir;
}

Dataset dataset(const Options& o, const Config& cfg) {
    require(o.data, "--data");
    return load_dataset(o.data, cfg.points);
}

std::optional<Checkpoint> optional_checkpoint(const Options& o) {
    if (o.ckpt.empty()) return std::nullopt;
    return load_checkpoint(o.ckpt);
}

template <typename F>
void with_precision(const Config& cfg, F&& f) {
    if (cfg.precision == "double") {
        f(double{});
    } else {
        f(float{});
    }
}

void print(const std::string& key, const std::string& value) { std::cout << key << "=" << value << "\n"; }
void print(const std::string& key, double value) { std::cout << key << "=" << format_number(value) << "\n"; }

std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c == '\n' ? ' ' : c;
    }
    return out + "\"";
}

int cmd_gen_data(const Options& o) {
    const auto cfg = resolve_config(o);
    const auto dir = output_dir(o);
    const auto ds = gen_synthetic(cfg, cfg.seed);
    const auto manifest = save_dataset(dir, ds);
    print("manifest", manifest.string());
    print("clouds", std::to_string(ds.samples.size()));
    return 0;
}

int cmd_train_dvae(const Options& o) {
    const auto cfg = resolve_config(o);
    const auto dir = output_dir(o);
    const auto ds = dataset(o, cfg);
    MetricsLog log(dir / "metrics.log");
    with_precision(cfg, [&](auto tag) {
        using T = decltype(tag);
        const auto ck = train_dvae<T>(cfg, ds, log);
        save_checkpoint(dir / "checkpoint.bin", ck);
    });
    print("checkpoint", (dir / "checkpoint.bin").string());
    print("final", log.lines().back());
    return 0;
}

int cmd_pretrain(const Options& o) {
    const auto cfg = resolve_config(o);
    require(o.ckpt, "--ckpt");
    const auto dir = output_dir(o);
    const auto ds = dataset(o, cfg);
    const auto dvae = load_checkpoint(o.ckpt);
    MetricsLog log(dir / "metrics.log");
    with_precision(cfg, [&](auto tag) {
        using T = decltype(tag);
        save_checkpoint(dir / "checkpoint.bin", pretrain<T>(cfg, ds, dvae, log));
    });
    print("checkpoint", (dir / "checkpoint.bin").string());
    print("final", log.lines().back());
    return 0;
}

int cmd_finetune(const Options& o) {
    const auto cfg = resolve_config(o);
    const auto dir = output_dir(o);
    const auto ds = dataset(o, cfg);
    const auto init = optional_checkpoint(o);
    MetricsLog log(dir / "metrics.log");
    double accuracy = 0;
    with_precision(cfg, [&](auto tag) {
        using T = decltype(tag);
        auto res = finetune_classify<T>(cfg, ds, init ? &*init : nullptr, log);
        save_checkpoint(dir / "checkpoint.bin", res.checkpoint);
        accuracy = res.accuracy;
    });
    print("checkpoint", (dir / "checkpoint.bin").string());
    print("init", init ? "pretrained" : "scratch");
    print("accuracy", accuracy);
    return 0;
}

int cmd_fewshot(const Options& o) {
    const auto cfg = resolve_config(o);
    const auto dir = output_dir(o);
    const auto ds = dataset(o, cfg);
    const auto init = optional_checkpoint(o);
    MetricsLog log(dir / "metrics.log");
    FewshotResult res;
    with_precision(cfg, [&](auto tag) {
        using T = decltype(tag);
        res = fewshot<T>(cfg, ds, init ? &*init : nullptr, log);
    });
    print("way", std::to_string(cfg.fewshot_way));
    print("shot", std::to_string(cfg.fewshot_shot));
    print("episodes", std::to_string(res.accuracies.size()));
    print("mean", res.mean);
    print("std", res.stddev);
    return 0;
}

int cmd_ablate(const Options& o) {
    const auto cfg = resolve_config(o);
    require(o.ckpt, "--ckpt");
    const auto dir = output_dir(o);
    const auto ds = dataset(o, cfg);
    const auto dvae = load_checkpoint(o.ckpt);
    const auto cells = ablation_cells(cfg, o.axis);
    std::vector<CellOutcome> outcomes;
    with_precision(cfg, [&](auto tag) {
        using T = decltype(tag);
        outcomes = run_ablation<T>(cells, ds, dvae, dir);
    });
    for (const auto& r : outcomes) {
        std::cout << "cell=" << r.name << " status=" << (r.completed ? "completed" : "aborted")
                  << " epochs=" << r.epochs << " log=" << (dir / r.name / "metrics.log").string();
        if (!r.completed) std::cout << " diagnostic=" << quoted(r.diagnostic);
        std::cout << "\n";
    }
    return 0;
}

int cmd_gradcheck(const Options& o) {
    const std::uint64_t seed = o.seed.value_or(0);
    const double tolerance = 1e-4;
    bool ok = true;
    for (const auto& r : run_gradcheck_suite(seed)) {
        std::cout << "module=" << r.module << " max_rel_error=" << format_number(r.max_rel_error)
                  << (r.max_rel_error < tolerance ? " ok" : " FAILED") << "\n";
        ok = ok && r.max_rel_error < tolerance;
    }
    if (!ok) throw pointmpm::Error("gradcheck_failed", "relative error at or above " + format_number(tolerance));
    return 0;
}

int cmd_eval(const Options& o) {
    const auto cfg = resolve_config(o);
    require(o.ckpt, "--ckpt");
    const auto ds = dataset(o, cfg);
    const auto ck = load_checkpoint(o.ckpt);
    std::map<std::string, double> metrics;
    with_precision(cfg, [&](auto tag) {
        using T = decltype(tag);
        metrics = evaluate_checkpoint<T>(ck, cfg, ds);
    });
    print("kind", ck.kind);
    for (const auto& [k, v] : metrics) print(k, v);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Masked point modeling with multi-choice tokens"};
    app.require_subcommand(1);
    Options opts;
    int (*handler)(const Options&) = nullptr;

    struct Spec {
        const char* name;
        const char* help;
        int (*run)(const Options&);
        bool data;
    };
    const Spec specs[] = {
        {"gen-data", "Generate the synthetic shape corpus", cmd_gen_data, false},
        {"train-dvae", "Train the dVAE tokenizer", cmd_train_dvae, true},
        {"pretrain", "Masked point pre-training (needs a dvae --ckpt)", cmd_pretrain, true},
        {"finetune", "Classification fine-tuning (optional pretrain --ckpt)", cmd_finetune, true},
        {"fewshot", "K-way m-shot episodes (optional pretrain --ckpt)", cmd_fewshot, true},
        {"ablate", "Pre-training grid over tau, omega and warm-up (needs a dvae --ckpt)", cmd_ablate, true},
        {"gradcheck", "Finite-difference check of every module", cmd_gradcheck, false},
        {"eval", "Deterministic objective of a checkpoint", cmd_eval, true},
    };
    for (const auto& spec : specs) {
        auto* sub = app.add_subcommand(spec.name, spec.help);
        sub->add_option("--config", opts.config_path, "key=value config file");
        sub->add_option("--seed", opts.seed, "override the config seed");
        sub->add_option("--out", opts.out_dir, "output directory");
        sub->add_option("--ckpt", opts.ckpt, "input checkpoint");
        sub->add_option("--set", opts.overrides, "config override key=value (repeatable)");
        if (spec.data) sub->add_option("--data", opts.data, "dataset manifest");
        if (spec.run == cmd_ablate)
            sub->add_option("--axis", opts.axis, "tau, omega or all")->check(CLI::IsMember({"tau", "omega", "all"}));
        sub->callback([&handler, run = spec.run] { handler = run; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error kind=usage message=" << quoted(e.what()) << "\n";
        return 2;
    }

    try {
        return handler(opts);
    } catch (const UsageError& e) {
        std::cerr << "error kind=" << e.kind() << " message=" << quoted(e.what()) << "\n";
        return 2;
    } catch (const pointmpm::Error& e) {
        std::cerr << "error kind=" << e.kind() << " message=" << quoted(e.what()) << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error kind=internal message=" << quoted(e.what()) << "\n";
        return 1;
    }
}
