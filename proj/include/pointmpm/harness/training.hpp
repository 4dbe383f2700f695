#pragma once

// Training loops: dVAE tokenizer, masked-modeling pre-training,
// classification fine-tuning and few-shot episodes.

#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "pointmpm/harness/checkpoint.hpp"
#include "pointmpm/harness/dataset.hpp"
#include "pointmpm/harness/metrics.hpp"
#include "pointmpm/harness/model.hpp"
#include "pointmpm/harness/optimizer.hpp"

namespace pointmpm::harness {

// Stream tags for mix_seed.
enum : std::uint64_t {
    kSeedDvaeInit = 101,
    kSeedDvaeNoise = 102,
    kSeedBackboneInit = 201,
    kSeedPretrainMasks = 202,
    kSeedHeadInit = 301,
    kSeedFinetuneOrder = 302,
    kSeedFewshot = 401,
    kSeedEvalMasks = 501,
};

namespace impl {

inline AdamWSettings adamw_settings(const Config& cfg) {
    return {cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};
}

/// Consecutive batches of a shuffled index order; the last may be short.
inline std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n; i += batch) {
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
    }
    return out;
}

inline std::size_t batch_count(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

/// Runs one optimizer step body, converting numeric blow-ups into
/// TrainingAborted with the loop position.
template <typename F>
auto guarded(const std::string& where, F&& body) {
    try {
        return body();
    } catch (const NonFiniteError& e) {
        throw TrainingAborted(where + ": " + e.what());
    }
}

template <typename T>
void check_finite(T value, const std::string& where) {
    if (!std::isfinite(static_cast<double>(value))) throw TrainingAborted(where + ": loss is not finite");
}

template <typename T>
ParameterSet<T> groups(const ParameterSet<T>& params, std::initializer_list<std::string> names) {
    ParameterSet<T> out;
    for (const auto& g : names) {
        auto part = group_params(params, g);
        out.insert(part.begin(), part.end());
    }
    return out;
}

template <typename T>
void require_dtype(const Checkpoint& ck) {
    const std::string want = std::is_same_v<T, float> ? "float" : "double";
    if (ck.dtype != want) throw ConfigError("checkpoint stores " + ck.dtype + " tensors but the run uses " + want);
}

template <typename T>
void require_group(const ParameterSet<T>& params, const std::string& group, const Checkpoint& ck) {
    if (group_params(params, group).empty()) {
        throw ConfigError("checkpoint of kind '" + ck.kind + "' has no '" + group + "' parameters");
    }
}

template <typename T>
std::vector<Prepared<T>> labeled(const Dataset& ds, const std::string& split, const Config& cfg) {
    auto samples = ds.split(split);
    for (const auto* s : samples) {
        if (s->cloud.label < 0 || static_cast<std::size_t>(s->cloud.label) >= ds.classes.size()) {
            throw ArgumentError("label " + std::to_string(s->cloud.label) + " does not match the " +
                                std::to_string(ds.classes.size()) + "-class list");
        }
    }
    return prepare_all<T>(samples, cfg);
}

} // namespace impl

template <typename T>
Checkpoint train_dvae(const Config& cfg, const Dataset& ds, MetricsLog& log) {
    cfg.validate();
    const auto data = prepare_all<T>(ds.split("train"), cfg);
    if (data.empty()) throw ArgumentError("train_dvae: no training clouds");
    const auto dims = cfg.tokenizer_dims();

    Rng init(mix_seed(cfg.seed, kSeedDvaeInit)), rng(mix_seed(cfg.seed, kSeedDvaeNoise));
    ParameterSet<T> params;
    init_tokenizer_group(params, cfg, init);
    AdamW<T> opt(impl::adamw_settings(cfg));

    const std::size_t per_epoch = impl::batch_count(data.size(), cfg.batch_size);
    const std::size_t total = per_epoch * cfg.dvae_epochs;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.dvae_epochs; ++epoch) {
        double sum_loss = 0, sum_recon = 0, sum_kl = 0, temp = 0, klw = 0, lr = 0;
        for (const auto& batch : impl::batches(data.size(), cfg.batch_size, rng)) {
            const double progress = total > 1 ? static_cast<double>(step) / static_cast<double>(total - 1) : 1.0;
            temp = cfg.gumbel_start + (cfg.gumbel_end - cfg.gumbel_start) * progress;
            klw = cfg.kl_ramp > 0 ? cfg.kl_weight * std::min(1.0, progress / cfg.kl_ramp) : cfg.kl_weight;
            lr = cosine_lr(step, total, cfg.lr, cfg.lr_min);
            const std::string where = "train-dvae epoch " + std::to_string(epoch) + " step " + std::to_string(step);
            impl::guarded(where, [&] {
                Scope<T> s(params);
                std::vector<Var<T>> totals;
                T recon = 0, kl = 0;
                for (auto i : batch) {
                    auto noise = gumbel_noise<T>({cfg.patches, cfg.vocab}, rng);
                    auto l = dvae_loss(s, constant(data[i].patches), constant(data[i].centers), dims, static_cast<T>(temp),
                                       static_cast<T>(klw), noise, cfg.dvae_straight_through);
                    totals.push_back(l.total);
                    recon += l.recon.value()[0];
                    kl += l.kl.value()[0];
                }
                auto loss = scale(sum_all(concat(totals, 0)), T(1) / T(batch.size()));
                impl::check_finite(loss.value()[0], where);
                opt.step(params, s.gradients(loss), lr);
                sum_loss += static_cast<double>(loss.value()[0]) * static_cast<double>(batch.size());
                sum_recon += static_cast<double>(recon);
                sum_kl += static_cast<double>(kl);
            });
            ++step;
        }
        const double n = static_cast<double>(data.size());
        log.write(MetricsRecord(epoch)
                      .add("phase", "dvae")
                      .add("loss", sum_loss / n)
                      .add("recon", sum_recon / n)
                      .add("kl", sum_kl / n)
                      .add("temperature", temp)
                      .add("kl_weight", klw)
                      .add("lr", lr));
    }
    return make_checkpoint("dvae", cfg.dvae_epochs, cfg, params, &opt);
}

template <typename T>
Checkpoint pretrain(const Config& cfg, const Dataset& ds, const Checkpoint& dvae, MetricsLog& log) {
    cfg.validate();
    require_compatible(dvae, cfg);
    impl::require_dtype<T>(dvae);
    const auto tokenizer = group_params(cast_params<T>(dvae.params), kTokenizer);
    impl::require_group(tokenizer, kTokenizer, dvae);

    const auto data = prepare_all<T>(ds.split("train"), cfg);
    if (data.empty()) throw ArgumentError("pretrain: no training clouds");
    std::vector<Tensor<T>> logits;
    logits.reserve(data.size());
    for (const auto& x : data) logits.push_back(token_logits(tokenizer, x, cfg));

    Rng init(mix_seed(cfg.seed, kSeedBackboneInit)), rng(mix_seed(cfg.seed, kSeedPretrainMasks));
    ParameterSet<T> params;
    init_backbone(params, cfg, init);
    init_prediction_head(params, cfg.width, cfg.vocab, init);
    AdamW<T> opt(impl::adamw_settings(cfg));
    const auto sched = cfg.omega_schedule();

    const std::size_t per_epoch = impl::batch_count(data.size(), cfg.batch_size);
    const std::size_t total = per_epoch * cfg.pretrain_epochs;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
        const double omega = omega_at(epoch, sched);
        double sum_loss = 0, sum_ratio = 0, lr = 0;
        for (const auto& batch : impl::batches(data.size(), cfg.batch_size, rng)) {
            lr = cosine_lr(step, total, cfg.lr, cfg.lr_min);
            const std::string where = "pretrain epoch " + std::to_string(epoch) + " step " + std::to_string(step);
            impl::guarded(where, [&] {
                Scope<T> s(params);
                std::vector<Var<T>> losses;
                for (auto i : batch) {
                    const auto mask = block_mask(data[i].center_points, cfg.mask_range(), rng);
                    sum_ratio += mask.ratio();
                    losses.push_back(reshape(mpm_step(s, cfg, data[i], logits[i], mask, omega).loss, {1}));
                }
                auto loss = scale(sum_all(concat(losses, 0)), T(1) / T(batch.size()));
                impl::check_finite(loss.value()[0], where);
                opt.step(params, s.gradients(loss), lr);
                sum_loss += static_cast<double>(loss.value()[0]) * static_cast<double>(batch.size());
            });
            ++step;
        }
        const double n = static_cast<double>(data.size());
        log.write(MetricsRecord(epoch)
                      .add("phase", "pretrain")
                      .add("loss", sum_loss / n)
                      .add("omega", omega)
                      .add("tau", cfg.tau)
                      .add("mask_ratio", sum_ratio / n)
                      .add("lr", lr));
    }
    params.insert(tokenizer.begin(), tokenizer.end());
    return make_checkpoint("pretrain", cfg.pretrain_epochs, cfg, params, &opt);
}

/// Backbone from a pre-trained checkpoint, or freshly initialized when
/// `init` is null. The classification head is always fresh.
template <typename T>
ParameterSet<T> classifier_params(const Config& cfg, const Checkpoint* init, std::size_t classes, std::uint64_t head_seed) {
    ParameterSet<T> params;
    if (init) {
        require_compatible(*init, cfg);
        impl::require_dtype<T>(*init);
        params = impl::groups(cast_params<T>(init->params), {kEmbedder, kEncoder});
        impl::require_group(params, kEncoder, *init);
        impl::require_group(params, kEmbedder, *init);
    } else {
        Rng rng(mix_seed(cfg.seed, kSeedBackboneInit));
        init_backbone(params, cfg, rng);
    }
    Rng head(head_seed);
    init_cls_head(params, cfg, classes, head);
    return params;
}

struct ClassifyOutcome {
    double accuracy = 0;
    double loss = 0;
};

template <typename T>
ClassifyOutcome evaluate_classifier(const ParameterSet<T>& params, const Config& cfg,
                                       const std::vector<Prepared<T>>& data) {
    ClassifyOutcome out;
    if (data.empty()) return out;
    std::size_t correct = 0;
    for (const auto& x : data) {
        Scope<T> s(params, false);
        auto logits = classify(s, cfg, constant(x.patches), constant(x.centers));
        out.loss += static_cast<double>(cross_entropy(logits, static_cast<std::size_t>(x.label)).value()[0]);
        correct += argmax(logits.value()) == static_cast<std::size_t>(x.label);
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    out.loss /= static_cast<double>(data.size());
    return out;
}

/// Fine-tunes every parameter on `train` for `epochs`; logs one record per
/// epoch when `log` is given.
template <typename T>
void fit_classifier(ParameterSet<T>& params, const Config& cfg, const std::vector<Prepared<T>>& train,
                    const std::vector<Prepared<T>>* test, std::size_t epochs, Rng& rng, MetricsLog* log,
                    AdamW<T>& opt) {
    const std::size_t per_epoch = impl::batch_count(train.size(), cfg.batch_size);
    const std::size_t total = per_epoch * epochs;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        double sum_loss = 0, lr = 0;
        std::size_t correct = 0;
        for (const auto& batch : impl::batches(train.size(), cfg.batch_size, rng)) {
            lr = cosine_lr(step, total, cfg.finetune_lr, cfg.lr_min);
            const std::string where = "finetune epoch " + std::to_string(epoch) + " step " + std::to_string(step);
            impl::guarded(where, [&] {
                Scope<T> s(params);
                std::vector<Var<T>> losses;
                for (auto i : batch) {
                    const auto x = cfg.augment ? rotated(train[i], impl::random_rotation(rng)) : train[i];
                    auto logits = classify(s, cfg, constant(x.patches), constant(x.centers));
                    correct += argmax(logits.value()) == static_cast<std::size_t>(train[i].label);
                    losses.push_back(reshape(cross_entropy(logits, static_cast<std::size_t>(train[i].label)), {1}));
                }
                auto loss = scale(sum_all(concat(losses, 0)), T(1) / T(batch.size()));
                impl::check_finite(loss.value()[0], where);
                opt.step(params, s.gradients(loss), lr);
                sum_loss += static_cast<double>(loss.value()[0]) * static_cast<double>(batch.size());
            });
            ++step;
        }
        if (log) {
            const double n = static_cast<double>(train.size());
            MetricsRecord rec(epoch);
            rec.add("phase", "finetune").add("loss", sum_loss / n).add("train_acc", static_cast<double>(correct) / n);
            if (test) {
                const auto ev = evaluate_classifier(params, cfg, *test);
                rec.add("test_loss", ev.loss).add("test_acc", ev.accuracy);
            }
            log->write(rec.add("lr", lr));
        }
    }
}

struct FinetuneResult {
    Checkpoint checkpoint;
    double accuracy = 0;
};

/// Classification fine-tuning from `init` (null: from scratch); reports
/// test accuracy after the last epoch.
template <typename T>
FinetuneResult finetune_classify(const Config& cfg, const Dataset& ds, const Checkpoint* init, MetricsLog& log) {
    cfg.validate();
    if (ds.classes.size() < 2) throw ArgumentError("finetune: need at least 2 classes");
    const auto train = impl::labeled<T>(ds, "train", cfg);
    const auto test = impl::labeled<T>(ds, "test", cfg);
    if (train.empty() || test.empty()) throw ArgumentError("finetune: both train and test splits are required");

    auto params = classifier_params<T>(cfg, init, ds.classes.size(), mix_seed(cfg.seed, kSeedHeadInit));
    AdamW<T> opt(impl::adamw_settings(cfg));
    Rng rng(mix_seed(cfg.seed, kSeedFinetuneOrder));
    fit_classifier(params, cfg, train, &test, cfg.finetune_epochs, rng, &log, opt);
    const auto ev = evaluate_classifier(params, cfg, test);
    return {make_checkpoint("finetune", cfg.finetune_epochs, cfg, params, &opt), ev.accuracy};
}

struct FewshotResult {
    std::vector<double> accuracies;
    double mean = 0;
    double stddev = 0;  // population
};

/// K-way m-shot episodes drawn from every labeled cloud regardless of
/// split; support and query are disjoint within an episode.
template <typename T>
FewshotResult fewshot(const Config& cfg, const Dataset& ds, const Checkpoint* init, MetricsLog& log) {
    cfg.validate();
    const std::size_t way = cfg.fewshot_way, shot = cfg.fewshot_shot, query = cfg.fewshot_query;
    std::vector<std::vector<const Sample*>> by_class(ds.classes.size());
    for (const auto& s : ds.samples) {
        if (s.cloud.label < 0 || static_cast<std::size_t>(s.cloud.label) >= ds.classes.size()) {
            throw ArgumentError("fewshot: label " + std::to_string(s.cloud.label) + " outside the class list");
        }
        by_class[static_cast<std::size_t>(s.cloud.label)].push_back(&s);
    }
    std::vector<std::size_t> eligible;
    for (std::size_t c = 0; c < by_class.size(); ++c)
        if (by_class[c].size() >= shot + query) eligible.push_back(c);
    if (eligible.size() < way) {
        throw ArgumentError("fewshot: need " + std::to_string(way) + " classes with at least " +
                            std::to_string(shot + query) + " clouds, found " + std::to_string(eligible.size()));
    }

    Rng rng(mix_seed(cfg.seed, kSeedFewshot));
    FewshotResult result;
    for (std::size_t episode = 0; episode < cfg.fewshot_episodes; ++episode) {
        auto classes = eligible;
        rng.shuffle(classes.begin(), classes.end());
        classes.resize(way);
        std::vector<Prepared<T>> support, queries;
        for (std::size_t c = 0; c < way; ++c) {
            auto pool = by_class[classes[c]];
            rng.shuffle(pool.begin(), pool.end());
            for (std::size_t i = 0; i < shot + query; ++i) {
                auto x = prepare<T>(pool[i]->cloud, cfg);
                x.label = static_cast<int>(c);
                (i < shot ? support : queries).push_back(std::move(x));
            }
        }
        auto params = classifier_params<T>(cfg, init, way, rng.next());
        AdamW<T> opt(impl::adamw_settings(cfg));
        fit_classifier<T>(params, cfg, support, nullptr, cfg.fewshot_epochs, rng, nullptr, opt);
        const double acc = evaluate_classifier(params, cfg, queries).accuracy;
        result.accuracies.push_back(acc);
        std::string picked;
        for (auto c : classes) picked += (picked.empty() ? "" : ",") + ds.classes[c];
        log.write(MetricsRecord(episode).add("phase", "fewshot").add("classes", picked).add("accuracy", acc));
    }
    const double n = static_cast<double>(result.accuracies.size());
    for (double a : result.accuracies) result.mean += a / n;
    for (double a : result.accuracies) result.stddev += (a - result.mean) * (a - result.mean) / n;
    result.stddev = std::sqrt(result.stddev);
    return result;
}

/// Deterministic objective of a checkpoint on the test split (falls back to
/// train when there is no test split): reconstruction for dvae, masked
/// modeling loss for pretrain, loss and accuracy for finetune.
template <typename T>
std::map<std::string, double> evaluate_checkpoint(const Checkpoint& ck, const Config& cfg, const Dataset& ds) {
    require_compatible(ck, cfg);
    impl::require_dtype<T>(ck);
    const auto params = cast_params<T>(ck.params);
    auto samples = ds.split("test");
    if (samples.empty()) samples = ds.split("train");
    if (samples.empty()) throw ArgumentError("eval: dataset is empty");
    const auto data = prepare_all<T>(samples, cfg);
    std::map<std::string, double> out;
    out["clouds"] = static_cast<double>(data.size());

    if (ck.kind == "dvae") {
        const auto dims = cfg.tokenizer_dims();
        const Tensor<T> no_noise({cfg.patches, cfg.vocab});
        double recon = 0;
        for (const auto& x : data) {
            Scope<T> s(params, false);
            recon += static_cast<double>(dvae_loss(s, constant(x.patches), constant(x.centers), dims,
                                                   static_cast<T>(cfg.gumbel_end), T(0), no_noise, true)
                                             .recon.value()[0]);
        }
        out["recon"] = recon / static_cast<double>(data.size());
    } else if (ck.kind == "pretrain") {
        const auto tokenizer = group_params(params, kTokenizer);
        Rng rng(mix_seed(cfg.seed, kSeedEvalMasks));
        const double omega = omega_at(std::min(ck.epoch, cfg.pretrain_epochs), cfg.omega_schedule());
        double loss = 0;
        for (const auto& x : data) {
            Scope<T> s(params, false);
            const auto mask = block_mask(x.center_points, cfg.mask_range(), rng);
            loss += static_cast<double>(mpm_step(s, cfg, x, token_logits(tokenizer, x, cfg), mask, omega).loss.value()[0]);
        }
        out["loss"] = loss / static_cast<double>(data.size());
        out["omega"] = omega;
    } else if (ck.kind == "finetune") {
        const std::size_t classes = params.at(kClsHead + ".fc2.bias").size();
        if (classes != ds.classes.size()) {
            throw ConfigError("checkpoint classifies " + std::to_string(classes) + " classes, dataset has " +
                              std::to_string(ds.classes.size()));
        }
        const auto ev = evaluate_classifier(params, cfg, impl::labeled<T>(ds, samples.front()->split, cfg));
        out["loss"] = ev.loss;
        out["accuracy"] = ev.accuracy;
    } else {
        throw FormatError("unknown checkpoint kind '" + ck.kind + "'");
    }
    return out;
}

} // namespace pointmpm::harness
