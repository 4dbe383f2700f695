#pragma once

// Flat key=value run configuration with a single schema table used for
// parsing, validation, serialization and documentation.

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pointmpm/encoder.hpp"
#include "pointmpm/error.hpp"
#include "pointmpm/pointops.hpp"
#include "pointmpm/targets.hpp"
#include "pointmpm/tokenizer.hpp"

namespace pointmpm::harness {

struct Config {
    // geometry
    std::size_t points = 256;
    std::size_t patches = 16;
    std::size_t patch_size = 16;
    double mask_min = 0.25;
    double mask_max = 0.45;

    // architecture
    std::size_t vocab = 64;
    std::size_t width = 64;
    std::size_t depth = 3;
    std::size_t heads = 4;
    std::size_t ff_width = 128;
    std::size_t embed_hidden = 32;
    std::size_t pos_hidden = 128;
    std::size_t tok_hidden = 64;
    std::size_t fold_hidden = 64;
    std::size_t tok_knn = 4;
    std::size_t cls_hidden = 64;

    // targets
    double tau = 0.005;
    double omega_floor = 0.8;
    std::size_t warmup_epochs = 30;
    bool warmup = true;
    bool single_choice = false;
    bool refine_clean_pass = false;

    // optimization
    double lr = 1e-3;
    double lr_min = 1e-5;
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_size = 8;
    std::size_t dvae_epochs = 25;
    std::size_t pretrain_epochs = 300;
    std::size_t finetune_epochs = 40;
    double finetune_lr = 1e-3;
    bool augment = true;

    // dVAE
    double kl_weight = 0.1;
    double kl_ramp = 1.0 / 3.0;
    double gumbel_start = 1.0;
    double gumbel_end = 0.0625;
    bool dvae_straight_through = false;

    // data
    std::string classes = "sphere,cube,cylinder,torus";
    std::size_t train_per_class = 24;
    std::size_t test_per_class = 12;
    double jitter = 0.01;
    double jitter_clip = 0.05;

    // few-shot
    std::size_t fewshot_way = 2;
    std::size_t fewshot_shot = 10;
    std::size_t fewshot_query = 20;
    std::size_t fewshot_episodes = 10;
    std::size_t fewshot_epochs = 20;

    // run
    std::uint64_t seed = 0;
    std::string precision = "float";

    void validate() const;

    std::vector<std::string> class_list() const;
    MaskRange mask_range() const { return {mask_min, mask_max}; }
    OmegaSchedule omega_schedule() const { return {warmup_epochs, omega_floor, pretrain_epochs, warmup}; }
    EncoderDims encoder_dims() const { return {width, depth, heads, ff_width}; }
    EmbedderDims embedder_dims() const { return {width, embed_hidden, pos_hidden}; }
    TokenizerDims tokenizer_dims() const {
        TokenizerDims t;
        t.vocab = vocab;
        t.hidden = tok_hidden;
        t.fold_hidden = fold_hidden;
        t.group_size = patch_size;
        t.knn = tok_knn;
        t.embed = {width, embed_hidden, pos_hidden};
        return t;
    }
};

namespace impl {

template <typename N>
N parse_number(const std::string& key, const std::string& text) {
    N v{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end) throw ConfigError("key '" + key + "': cannot parse '" + text + "'");
    return v;
}

inline std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "on" || text == "1") return true;
    if (text == "false" || text == "off" || text == "0") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + text + "'");
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

} // namespace impl

/// Shortest text that reads back to the same double.
inline std::string format_number(double v) { return impl::format_double(v); }

struct ConfigField {
    std::string key;
    std::string doc;
    bool architecture;  // must match between a checkpoint and the run loading it
    std::function<std::string(const Config&)> get;
    std::function<void(Config&, const std::string&)> set;
};

inline const std::vector<ConfigField>& config_schema() {
    static const std::vector<ConfigField> schema = [] {
        std::vector<ConfigField> f;
        auto count = [&](const char* key, std::size_t Config::*m, bool arch, const char* doc) {
            f.push_back({key, doc, arch, [m](const Config& c) { return std::to_string(c.*m); },
                         [m, key](Config& c, const std::string& v) { c.*m = impl::parse_number<std::size_t>(key, v); }});
        };
        auto real = [&](const char* key, double Config::*m, bool arch, const char* doc) {
            f.push_back({key, doc, arch, [m](const Config& c) { return impl::format_double(c.*m); },
                         [m, key](Config& c, const std::string& v) { c.*m = impl::parse_number<double>(key, v); }});
        };
        auto flag = [&](const char* key, bool Config::*m, const char* doc) {
            f.push_back({key, doc, false, [m](const Config& c) { return std::string(c.*m ? "true" : "false"); },
                         [m, key](Config& c, const std::string& v) { c.*m = impl::parse_bool(key, v); }});
        };
        auto text = [&](const char* key, std::string Config::*m, bool arch, const char* doc) {
            f.push_back({key, doc, arch, [m](const Config& c) { return c.*m; },
                         [m](Config& c, const std::string& v) { c.*m = v; }});
        };

        count("points", &Config::points, true, "points per cloud after ingestion");
        count("patches", &Config::patches, true, "patch count g (FPS centers)");
        count("patch_size", &Config::patch_size, true, "points per patch k");
        real("mask_min", &Config::mask_min, false, "lower bound of the block-mask ratio");
        real("mask_max", &Config::mask_max, false, "upper bound of the block-mask ratio");

        count("vocab", &Config::vocab, true, "token vocabulary size |V|");
        count("width", &Config::width, true, "embedding and transformer width d");
        count("depth", &Config::depth, true, "transformer blocks L");
        count("heads", &Config::heads, true, "attention heads (must divide width)");
        count("ff_width", &Config::ff_width, true, "transformer feed-forward width");
        count("embed_hidden", &Config::embed_hidden, true, "patch embedder first-stage width");
        count("pos_hidden", &Config::pos_hidden, true, "positional MLP hidden width");
        count("tok_hidden", &Config::tok_hidden, true, "tokenizer graph-conv width");
        count("fold_hidden", &Config::fold_hidden, true, "folding decoder MLP width");
        count("tok_knn", &Config::tok_knn, true, "graph-conv neighbors per patch (capped at g-1)");
        count("cls_hidden", &Config::cls_hidden, true, "classification head hidden width");

        real("tau", &Config::tau, false, "softening temperature for token distributions");
        real("omega_floor", &Config::omega_floor, false, "terminal omega of the cosine schedule");
        count("warmup_epochs", &Config::warmup_epochs, false, "epochs with omega pinned to 1");
        flag("warmup", &Config::warmup, "false pins omega to omega_floor from the first epoch");
        flag("single_choice", &Config::single_choice, "use one-hot argmax tokens instead of softened rows");
        flag("refine_clean_pass", &Config::refine_clean_pass,
             "compute the similarity matrix from an unmasked forward pass");

        real("lr", &Config::lr, false, "peak learning rate for dVAE and pre-training");
        real("lr_min", &Config::lr_min, false, "learning rate at the end of the cosine decay");
        real("weight_decay", &Config::weight_decay, false, "decoupled weight decay on weight matrices");
        real("beta1", &Config::beta1, false, "first-moment decay");
        real("beta2", &Config::beta2, false, "second-moment decay");
        real("adam_eps", &Config::adam_eps, false, "denominator epsilon");
        count("batch_size", &Config::batch_size, false, "clouds per optimizer step");
        count("dvae_epochs", &Config::dvae_epochs, false, "tokenizer training epochs");
        count("pretrain_epochs", &Config::pretrain_epochs, false, "masked-modeling epochs (cosine horizon)");
        count("finetune_epochs", &Config::finetune_epochs, false, "classification fine-tuning epochs");
        real("finetune_lr", &Config::finetune_lr, false, "peak learning rate for fine-tuning and few-shot");
        flag("augment", &Config::augment, "randomly rotate each training cloud at every fine-tuning step");

        real("kl_weight", &Config::kl_weight, false, "final weight of the uniform-prior KL term");
        real("kl_ramp", &Config::kl_ramp, false, "fraction of dVAE steps over which the KL weight ramps from 0");
        real("gumbel_start", &Config::gumbel_start, false, "initial Gumbel-softmax temperature");
        real("gumbel_end", &Config::gumbel_end, false, "final Gumbel-softmax temperature");
        flag("dvae_straight_through", &Config::dvae_straight_through, "decode one-hot samples during dVAE training");

        text("classes", &Config::classes, false,
             "comma-separated shape classes: sphere cube cylinder cone torus plane-pair");
        count("train_per_class", &Config::train_per_class, false, "generated training clouds per class");
        count("test_per_class", &Config::test_per_class, false, "generated test clouds per class");
        real("jitter", &Config::jitter, false, "per-coordinate Gaussian jitter sigma");
        real("jitter_clip", &Config::jitter_clip, false, "absolute clip of the jitter");

        count("fewshot_way", &Config::fewshot_way, false, "classes per few-shot episode (K)");
        count("fewshot_shot", &Config::fewshot_shot, false, "support clouds per class (m)");
        count("fewshot_query", &Config::fewshot_query, false, "query clouds per class");
        count("fewshot_episodes", &Config::fewshot_episodes, false, "episodes averaged");
        count("fewshot_epochs", &Config::fewshot_epochs, false, "fine-tuning epochs per episode");

        f.push_back({"seed", "master seed for data, initialization, masks and noise", false,
                     [](const Config& c) { return std::to_string(c.seed); },
                     [](Config& c, const std::string& v) { c.seed = impl::parse_number<std::uint64_t>("seed", v); }});
        text("precision", &Config::precision, false, "float or double");
        return f;
    }();
    return schema;
}

inline const std::set<std::string>& known_classes() {
    static const std::set<std::string> names{"sphere", "cube", "cylinder", "cone", "torus", "plane-pair"};
    return names;
}

inline std::vector<std::string> Config::class_list() const {
    std::vector<std::string> out;
    std::stringstream ss(classes);
    for (std::string item; std::getline(ss, item, ',');) {
        item = impl::trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline void Config::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    require(patches >= 4, "patches must be at least 4");
    require(patches <= points, "patches must not exceed points");
    require(patch_size >= 1 && patch_size <= points, "patch_size must lie in [1, points]");
    require(mask_min > 0.0 && mask_min <= mask_max && mask_max < 1.0, "mask range must satisfy 0 < mask_min <= mask_max < 1");
    try {
        mask_count_bounds(patches, mask_range());
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    require(vocab >= 2, "vocab must be at least 2");
    require(width >= 1 && depth >= 1 && ff_width >= 1 && embed_hidden >= 1 && pos_hidden >= 1, "widths must be positive");
    require(tok_hidden >= 1 && fold_hidden >= 1 && tok_knn >= 1 && cls_hidden >= 1, "widths must be positive");
    require(heads >= 1 && width % heads == 0, "heads must divide width");
    require(tau > 0.0, "tau must be positive");
    omega_schedule().validate();
    require(lr > 0.0 && lr_min >= 0.0 && lr_min <= lr && finetune_lr > 0.0, "learning rates must satisfy 0 <= lr_min <= lr");
    require(weight_decay >= 0.0, "weight_decay must be nonnegative");
    require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must lie in [0, 1)");
    require(adam_eps > 0.0, "adam_eps must be positive");
    require(batch_size >= 1, "batch_size must be positive");
    require(kl_weight >= 0.0 && kl_ramp >= 0.0 && kl_ramp <= 1.0, "kl_weight >= 0 and kl_ramp in [0, 1]");
    require(gumbel_start > 0.0 && gumbel_end > 0.0, "gumbel temperatures must be positive");
    const auto names = class_list();
    require(names.size() >= 2, "at least 2 classes are required");
    std::set<std::string> seen;
    for (const auto& n : names) {
        require(known_classes().count(n) == 1, "unknown class '" + n + "'");
        require(seen.insert(n).second, "duplicate class '" + n + "'");
    }
    require(train_per_class >= 1, "train_per_class must be positive");
    require(jitter >= 0.0 && jitter_clip >= 0.0, "jitter settings must be nonnegative");
    require(fewshot_way >= 2 && fewshot_shot >= 1 && fewshot_query >= 1 && fewshot_episodes >= 1,
            "few-shot settings must be positive with at least 2 ways");
    require(precision == "float" || precision == "double", "precision must be float or double");
}

inline Config preset(const std::string& name) {
    Config c;
    if (name == "desk") return c;
    if (name == "paper-scale") {
        c.points = 1024;
        c.patches = 64;
        c.patch_size = 32;
        c.mask_min = 0.25;
        c.mask_max = 0.45;
        return c;
    }
    throw ConfigError("unknown preset '" + name + "' (expected desk or paper-scale)");
}

/// Applies one key=value assignment. `preset` replaces every field.
inline void apply_setting(Config& c, const std::string& key, const std::string& value) {
    if (key == "preset") {
        c = preset(value);
        return;
    }
    for (const auto& field : config_schema()) {
        if (field.key == key) {
            field.set(c, value);
            return;
        }
    }
    throw ConfigError("unknown key '" + key + "'");
}

inline std::pair<std::string, std::string> split_assignment(const std::string& line) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + line + "'");
    return {impl::trim(line.substr(0, eq)), impl::trim(line.substr(eq + 1))};
}

/// Parses config text. Blank lines and lines starting with '#' are skipped;
/// a `preset` line, if any, must come first.
inline Config parse_config(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::size_t lineno = 0, assignments = 0;
    std::set<std::string> seen;
    for (std::string line; std::getline(in, line);) {
        ++lineno;
        line = impl::trim(line);
        if (line.empty() || line[0] == '#') continue;
        try {
            auto [key, value] = split_assignment(line);
            if (key == "preset" && assignments > 0) throw ConfigError("preset must precede other keys");
            if (!seen.insert(key).second) throw ConfigError("duplicate key '" + key + "'");
            apply_setting(c, key, value);
            ++assignments;
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return c;
}

inline Config load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

/// Every field in schema order, one `key=value` per line.
inline std::string to_text(const Config& c) {
    std::string out;
    for (const auto& field : config_schema()) out += field.key + "=" + field.get(c) + "\n";
    return out;
}

/// Architecture keys whose values differ between two configs.
inline std::vector<std::string> architecture_mismatches(const Config& a, const Config& b) {
    std::vector<std::string> out;
    for (const auto& field : config_schema()) {
        if (field.architecture && field.get(a) != field.get(b)) {
            out.push_back(field.key + " (" + field.get(a) + " vs " + field.get(b) + ")");
        }
    }
    return out;
}

} // namespace pointmpm::harness
