#pragma once

// Finite-difference checks of every differentiable module at tiny shapes in
// double precision.

#include <set>
#include <string>
#include <vector>

#include "pointmpm/harness/model.hpp"

namespace pointmpm::harness {

/// Finite-difference step for the suite. At 1e-5 the central difference is
/// dominated by round-off on gradient entries near 1e-7.
inline constexpr double kSuiteStep = 1e-4;

struct GradCheckResult {
    std::string module;
    double max_rel_error = 0;
};

namespace impl {

inline Tensor<double> gaussian(const Shape& shape, Rng& rng, double scale = 1.0) {
    Tensor<double> t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
    return t;
}

/// Random linear functional of y, turning any output into a scalar loss.
inline Var<double> project(const Var<double>& y, const Tensor<double>& weights) {
    return sum_all(mul(y, constant(weights)));
}

inline Config tiny_config() {
    Config c;
    c.points = 24;
    c.patches = 5;
    c.patch_size = 4;
    c.vocab = 5;
    c.width = 8;
    c.depth = 1;
    c.heads = 2;
    c.ff_width = 16;
    c.embed_hidden = 4;
    c.pos_hidden = 8;
    c.tok_hidden = 6;
    c.fold_hidden = 6;
    c.tok_knn = 2;
    c.tau = 0.5;
    return c;
}

/// Leaves to check: everything except `.key.bias`, whose gradient is
/// identically zero (softmax ignores a per-query constant) and therefore
/// only measures round-off in a relative metric.
inline std::set<std::string> checked_leaves(const Bindings<double>& b) {
    std::set<std::string> out;
    for (const auto& kv : b)
        if (kv.first.find(".key.bias") == std::string::npos) out.insert(kv.first);
    return out;
}

} // namespace impl

inline std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed) {
    using impl::gaussian;
    const Config cfg = impl::tiny_config();
    const auto tdims = cfg.tokenizer_dims();
    const std::size_t g = cfg.patches, k = cfg.patch_size, d = cfg.width, v = cfg.vocab;
    Rng rng(seed);
    std::vector<GradCheckResult> results;
    auto check = [&](const std::string& name, const Expression<double>& e, const Bindings<double>& b) {
        results.push_back({name, grad_check(e, b, kSuiteStep, impl::checked_leaves(b))});
    };

    const auto patches = gaussian({g, k, 3}, rng, 0.2);
    const auto centers = gaussian({g, 3}, rng);
    const MaskSet mask{{1, 2}, 1, g};

    {
        Bindings<double> b;
        init_embedder(b, kEmbedder, cfg.embedder_dims(), rng);
        init_positional(b, kEmbedder, cfg.embedder_dims(), rng);
        b["patches"] = patches;
        b["centers"] = centers;
        const auto w1 = gaussian({g, d}, rng), w2 = gaussian({g, d}, rng);
        check("embedder", [&](Scope<double>& s) {
            return add(impl::project(embed_patches(s, kEmbedder, s.leaf("patches")), w1),
                       impl::project(positional_embed(s, kEmbedder, s.leaf("centers")), w2));
        }, b);
    }
    {
        Bindings<double> b;
        init_tokenizer(b, tdims, rng);
        b["patches"] = patches;
        const auto w = gaussian({g, v}, rng);
        check("tokenizer.encode", [&](Scope<double>& s) { return impl::project(tokenize(s, s.leaf("patches"), tdims), w); }, b);
    }
    {
        Bindings<double> b;
        init_tokenizer(b, tdims, rng);
        b["tokens"] = softmax(constant(gaussian({g, v}, rng)), -1).value();
        b["centers"] = centers;
        b["patches"] = patches;
        check("tokenizer.decode", [&](Scope<double>& s) {
            return mean_all(chamfer_batched(decode(s, s.leaf("tokens"), s.leaf("centers"), tdims), s.leaf("patches")));
        }, b);
    }
    {
        Bindings<double> b;
        init_tokenizer(b, tdims, rng);
        b["patches"] = patches;
        const auto noise = gumbel_noise<double>({g, v}, rng);
        check("dvae", [&](Scope<double>& s) {
            return dvae_loss(s, s.leaf("patches"), constant(centers), tdims, 0.7, 0.1, noise).total;
        }, b);
    }
    {
        Bindings<double> b;
        init_encoder(b, cfg.encoder_dims(), rng);
        b["emb"] = gaussian({g, d}, rng);
        b["pos"] = gaussian({g, d}, rng);
        const auto wh = gaussian({g, d}, rng), wc = gaussian({d}, rng);
        check("transformer", [&](Scope<double>& s) {
            auto out = encode(s, apply_mask(s, s.leaf("emb"), mask), s.leaf("pos"), cfg.encoder_dims());
            return add(impl::project(out.h, wh), impl::project(out.cls, wc));
        }, b);
    }
    {
        Bindings<double> b;
        init_prediction_head(b, d, v, rng);
        b["h"] = l2_normalize(constant(gaussian({g, d}, rng)), -1).value();
        const auto targets = soften(gaussian({g, v}, rng), 0.5);
        check("prediction_head", [&](Scope<double>& s) {
            return mpm_loss(prediction_head(s, s.leaf("h")), targets, mask);
        }, b);
    }
    {
        // Targets are detached, so they are built once from the initial
        // parameters and held constant while differencing.
        Bindings<double> b;
        init_backbone(b, cfg, rng);
        init_prediction_head(b, d, v, rng);
        b["patches"] = patches;
        b["centers"] = centers;
        const auto z = gaussian({g, v}, rng);
        Tensor<double> targets;
        {
            Scope<double> s(b, false);
            auto fwd = mpm_forward(s, cfg, s.leaf("patches"), s.leaf("centers"), mask);
            targets = mix_targets(soften(z, cfg.tau), similarity(fwd.h.value()), 0.6);
        }
        check("mpm", [&](Scope<double>& s) {
            return mpm_loss(mpm_forward(s, cfg, s.leaf("patches"), s.leaf("centers"), mask).pred, targets, mask);
        }, b);
    }
    return results;
}

} // namespace pointmpm::harness
