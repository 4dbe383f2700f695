#pragma once

// Parameter groups and forward passes shared by the training loops, the
// evaluator and the gradient-check suite.

#include <string>
#include <vector>

#include "pointmpm/embedder.hpp"
#include "pointmpm/encoder.hpp"
#include "pointmpm/harness/config.hpp"
#include "pointmpm/harness/dataset.hpp"
#include "pointmpm/targets.hpp"
#include "pointmpm/tokenizer.hpp"

namespace pointmpm::harness {

inline const std::string kEmbedder = "embedder";
inline const std::string kClsHead = "cls_head";

/// One ingested cloud in model-ready form.
template <typename T>
struct Prepared {
    Tensor<T> patches;                // (g, k, 3)
    Tensor<T> centers;                // (g, 3)
    std::vector<Point3> center_points;
    int label = -1;
};

template <typename T>
Prepared<T> prepare(const PointCloud& cloud, const Config& cfg) {
    auto ps = build_patches(cloud, cfg.patches, cfg.patch_size);
    return {ps.template patches_tensor<T>(), ps.template centers_tensor<T>(), ps.centers, cloud.label};
}

template <typename T>
std::vector<Prepared<T>> prepare_all(const std::vector<const Sample*>& samples, const Config& cfg) {
    std::vector<Prepared<T>> out;
    out.reserve(samples.size());
    for (const auto* s : samples) out.push_back(prepare<T>(s->cloud, cfg));
    return out;
}

/// The same cloud under rotation `r` (row-major 3x3). Patch membership and
/// centers are rotation invariant, so this equals preparing the rotated cloud.
template <typename T>
Prepared<T> rotated(const Prepared<T>& x, const std::array<double, 9>& r) {
    Prepared<T> out = x;
    auto apply = [&](T* p) {
        const double v[3] = {static_cast<double>(p[0]), static_cast<double>(p[1]), static_cast<double>(p[2])};
        for (int a = 0; a < 3; ++a) p[a] = static_cast<T>(r[a * 3] * v[0] + r[a * 3 + 1] * v[1] + r[a * 3 + 2] * v[2]);
    };
    for (std::size_t i = 0; i < out.patches.size(); i += 3) apply(&out.patches[i]);
    for (std::size_t i = 0; i < out.centers.size(); i += 3) apply(&out.centers[i]);
    for (auto& c : out.center_points) {
        const Point3 v = c;
        for (int a = 0; a < 3; ++a) c[a] = r[a * 3] * v[0] + r[a * 3 + 1] * v[1] + r[a * 3 + 2] * v[2];
    }
    return out;
}

template <typename T>
void init_tokenizer_group(ParameterSet<T>& params, const Config& cfg, Rng& rng) {
    init_tokenizer(params, cfg.tokenizer_dims(), rng);
}

/// Patch embedder, positional MLP and transformer.
template <typename T>
void init_backbone(ParameterSet<T>& params, const Config& cfg, Rng& rng) {
    init_embedder(params, kEmbedder, cfg.embedder_dims(), rng);
    init_positional(params, kEmbedder, cfg.embedder_dims(), rng);
    init_encoder(params, cfg.encoder_dims(), rng);
}

template <typename T>
void init_cls_head(ParameterSet<T>& params, const Config& cfg, std::size_t classes, Rng& rng) {
    init_linear(params, kClsHead + ".fc1", 3 * cfg.width, cfg.cls_hidden, rng);
    init_linear(params, kClsHead + ".fc2", cfg.cls_hidden, classes, rng);
}

/// Frozen tokenizer logits z for one cloud.
template <typename T>
Tensor<T> token_logits(const ParameterSet<T>& tokenizer, const Prepared<T>& x, const Config& cfg) {
    Scope<T> s(tokenizer, false);
    return tokenize(s, constant(x.patches), cfg.tokenizer_dims()).value();
}

template <typename T>
struct MpmForward {
    Var<T> pred;  // (g, vocab) logits
    Var<T> h;     // (g, d) unit rows from the masked pass
};

template <typename T>
MpmForward<T> mpm_forward(Scope<T>& s, const Config& cfg, const Var<T>& patches, const Var<T>& centers,
                          const MaskSet& mask) {
    auto emb = embed_patches(s, kEmbedder, patches);
    auto pos = positional_embed(s, kEmbedder, centers);
    auto out = encode(s, apply_mask(s, emb, mask), pos, cfg.encoder_dims());
    return {prediction_head(s, out.h), out.h};
}

/// Unmasked patch representations, values only.
template <typename T>
Tensor<T> clean_representations(Scope<T>& s, const Config& cfg, const Var<T>& patches, const Var<T>& centers) {
    auto emb = embed_patches(s, kEmbedder, patches);
    auto pos = positional_embed(s, kEmbedder, centers);
    return encode(s, emb, pos, cfg.encoder_dims()).h.value();
}

/// Token distribution P from frozen logits: softened rows, or one-hot
/// argmax rows under single_choice.
template <typename T>
Tensor<T> token_distribution(const Tensor<T>& z, const Config& cfg) {
    return cfg.single_choice ? hard_token(z) : soften(z, static_cast<T>(cfg.tau));
}

template <typename T>
struct MpmStep {
    Var<T> loss;
    Tensor<T> targets;
};

/// Full masked-modeling objective for one cloud given its frozen token
/// logits, a mask and the current omega.
template <typename T>
MpmStep<T> mpm_step(Scope<T>& s, const Config& cfg, const Prepared<T>& x, const Tensor<T>& z, const MaskSet& mask,
                    double omega) {
    auto patches = constant(x.patches);
    auto centers = constant(x.centers);
    auto fwd = mpm_forward(s, cfg, patches, centers, mask);
    const Tensor<T> h = cfg.refine_clean_pass ? clean_representations(s, cfg, patches, centers) : fwd.h.value();
    auto targets = mix_targets(token_distribution(z, cfg), similarity(h), static_cast<T>(omega));
    return {mpm_loss(fwd.pred, targets, mask), std::move(targets)};
}

/// h_cls, max-pool and mean-pool of h concatenated, then a two-layer MLP:
/// (1, classes) logits.
template <typename T>
Var<T> classify(Scope<T>& s, const Config& cfg, const Var<T>& patches, const Var<T>& centers) {
    auto emb = embed_patches(s, kEmbedder, patches);
    auto pos = positional_embed(s, kEmbedder, centers);
    auto out = encode(s, emb, pos, cfg.encoder_dims());
    const std::size_t d = cfg.width;
    auto feat = concat<T>({reshape(out.cls, {1, d}), reshape(max(out.h, 0), {1, d}), reshape(mean(out.h, 0), {1, d})}, 1);
    return linear(s, kClsHead + ".fc2", gelu(linear(s, kClsHead + ".fc1", feat)));
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::size_t label) {
    const std::size_t c = logits.shape().back();
    if (label >= c) throw ArgumentError("label " + std::to_string(label) + " outside " + std::to_string(c) + " classes");
    Tensor<T> onehot(logits.shape());
    onehot[label] = T(1);
    return scale(sum_all(mul(log_softmax(logits, -1), constant(std::move(onehot)))), T(-1));
}

template <typename T>
std::size_t argmax(const Tensor<T>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

} // namespace pointmpm::harness
