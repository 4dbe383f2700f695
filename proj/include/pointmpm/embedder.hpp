#pragma once

// Mini-PointNet patch embedding and the positional MLP over patch centers.

#include <string>
#include <vector>

#include "pointmpm/params.hpp"

namespace pointmpm {

struct EmbedderDims {
    std::size_t width = 64;       // output width d
    std::size_t hidden = 32;      // first per-point layer
    std::size_t pos_hidden = 128;
};

/// Per-point MLP 3 -> hidden -> 2*hidden, max-pool over the patch, pooled
/// vector concatenated back onto every point, per-point MLP
/// 4*hidden -> 2*hidden -> width, final max-pool.
template <typename T>
void init_embedder(ParameterSet<T>& params, const std::string& prefix, const EmbedderDims& dims, Rng& rng) {
    const std::size_t h = dims.hidden;
    init_linear(params, prefix + ".point1", 3, h, rng);
    init_linear(params, prefix + ".point2", h, 2 * h, rng);
    init_linear(params, prefix + ".fuse1", 4 * h, 2 * h, rng);
    init_linear(params, prefix + ".fuse2", 2 * h, dims.width, rng);
}

template <typename T>
void init_positional(ParameterSet<T>& params, const std::string& prefix, const EmbedderDims& dims, Rng& rng) {
    init_linear(params, prefix + ".pos1", 3, dims.pos_hidden, rng);
    init_linear(params, prefix + ".pos2", dims.pos_hidden, dims.width, rng);
}

/// (g, k, 3) center-relative patches -> (g, width) embeddings.
template <typename T>
Var<T> embed_patches(Scope<T>& s, const std::string& prefix, const Var<T>& patches) {
    const auto& shape = patches.shape();
    if (shape.size() != 3 || shape[2] != 3) {
        throw ShapeError("embed_patches expects (g, k, 3), got " + shape_str(shape));
    }
    const std::size_t g = shape[0], k = shape[1];
    auto x = reshape(patches, {g * k, 3});
    x = relu(linear(s, prefix + ".point1", x));
    x = linear(s, prefix + ".point2", x);
    const std::size_t c = x.shape()[1];
    auto pooled = max(reshape(x, {g, k, c}), 1);

    std::vector<std::size_t> owner(g * k);
    for (std::size_t i = 0; i < g * k; ++i) owner[i] = i / k;
    x = concat<T>({x, gather(pooled, std::move(owner))}, 1);
    if (x.shape()[1] != s.leaf(prefix + ".fuse1.weight").shape()[0]) {
        throw ShapeError("embedder width mismatch");
    }
    x = relu(linear(s, prefix + ".fuse1", x));
    x = linear(s, prefix + ".fuse2", x);
    return max(reshape(x, {g, k, x.shape()[1]}), 1);
}

/// Single (k, 3) patch -> (width) embedding.
template <typename T>
Var<T> embed_patch(Scope<T>& s, const std::string& prefix, const Var<T>& patch) {
    const auto& shape = patch.shape();
    if (shape.size() != 2 || shape[1] != 3) throw ShapeError("embed_patch expects (k, 3)");
    auto e = embed_patches(s, prefix, reshape(patch, {1, shape[0], 3}));
    return reshape(e, {e.shape()[1]});
}

/// (g, 3) centers -> (g, width) positional embeddings.
template <typename T>
Var<T> positional_embed(Scope<T>& s, const std::string& prefix, const Var<T>& centers) {
    if (centers.shape().size() != 2 || centers.shape()[1] != 3) {
        throw ShapeError("positional_embed expects (g, 3) centers");
    }
    return linear(s, prefix + ".pos2", gelu(linear(s, prefix + ".pos1", centers)));
}

} // namespace pointmpm
