#pragma once

// Discrete VAE tokenizer: graph-convolution encoder to vocabulary logits,
// Gumbel-softmax discretization, graph-convolution + folding decoder.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pointmpm/embedder.hpp"
#include "pointmpm/pointops.hpp"

namespace pointmpm {

struct TokenizerDims {
    std::size_t vocab = 64;
    std::size_t hidden = 64;       // graph-conv width
    std::size_t fold_hidden = 64;  // folding MLP width
    std::size_t group_size = 16;   // k points reconstructed per patch
    std::size_t knn = 4;           // neighbors per graph-conv node (capped at g-1)
    EmbedderDims embed;            // the tokenizer's own patch embedder
};

inline const std::string kTokenizer = "tokenizer";

template <typename T>
void init_tokenizer(ParameterSet<T>& params, const TokenizerDims& dims, Rng& rng) {
    if (dims.vocab < 2) throw ArgumentError("vocabulary must have at least 2 entries");
    const std::string p = kTokenizer;
    const std::size_t d = dims.embed.width, h = dims.hidden, f = dims.fold_hidden;
    init_embedder(params, p + ".embed", dims.embed, rng);
    init_linear(params, p + ".enc.edge1", 2 * d, h, rng);
    init_linear(params, p + ".enc.edge2", 2 * h, h, rng);
    init_linear(params, p + ".enc.out1", 2 * h, h, rng);
    init_linear(params, p + ".enc.out2", h, dims.vocab, rng);
    init_linear(params, p + ".dec.token", dims.vocab, h, rng);
    init_linear(params, p + ".dec.edge1", 2 * h, h, rng);
    init_linear(params, p + ".dec.edge2", 2 * h, h, rng);
    init_linear(params, p + ".dec.fuse", 2 * h, h, rng);
    init_linear(params, p + ".dec.fold1a", h + 2, f, rng);
    init_linear(params, p + ".dec.fold1b", f, f, rng);
    init_linear(params, p + ".dec.fold1c", f, 3, rng);
    init_linear(params, p + ".dec.fold2a", h + 3, f, rng);
    init_linear(params, p + ".dec.fold2b", f, f, rng);
    init_linear(params, p + ".dec.fold2c", f, 3, rng);
}

/// k nearest rows (self included) of a (g, c) feature matrix per row,
/// ascending by squared distance, ties to the lowest index.
template <typename T>
std::vector<std::vector<std::size_t>> feature_knn(const Tensor<T>& x, std::size_t k) {
    const std::size_t g = x.rows(), c = x.cols();
    if (k > g) throw ArgumentError("feature_knn: k exceeds row count");
    std::vector<std::vector<std::size_t>> out(g);
    std::vector<std::pair<T, std::size_t>> scratch(g);
    for (std::size_t i = 0; i < g; ++i) {
        for (std::size_t j = 0; j < g; ++j) {
            T d = 0;
            for (std::size_t t = 0; t < c; ++t) {
                const T diff = x[i * c + t] - x[j * c + t];
                d += diff * diff;
            }
            scratch[j] = {d, j};
        }
        std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k), scratch.end());
        for (std::size_t j = 0; j < k; ++j) out[i].push_back(scratch[j].second);
    }
    return out;
}

/// Edge convolution: for node i and neighbor j, edge feature
/// [x_j - x_i, x_i] -> shared linear + relu, max over neighbors.
template <typename T>
Var<T> edge_conv(Scope<T>& s, const std::string& prefix, const Var<T>& x,
                 const std::vector<std::vector<std::size_t>>& neighbors) {
    const std::size_t g = x.shape()[0];
    const std::size_t kf = neighbors.front().size();
    std::vector<std::size_t> nbr, self;
    nbr.reserve(g * kf);
    self.reserve(g * kf);
    for (std::size_t i = 0; i < g; ++i) {
        for (auto j : neighbors[i]) {
            nbr.push_back(j);
            self.push_back(i);
        }
    }
    auto xi = gather(x, std::move(self));
    auto edge = concat<T>({sub(gather(x, std::move(nbr)), xi), xi}, 1);
    auto y = relu(linear(s, prefix, edge));
    return max(reshape(y, {g, kf, y.shape()[1]}), 1);
}

inline std::size_t graph_neighbors(std::size_t configured, std::size_t g) {
    return std::max<std::size_t>(1, std::min(configured, g - 1));
}

/// (g, d) patch embeddings -> (g, vocab) logits z.
template <typename T>
Var<T> encode_tokens(Scope<T>& s, const Var<T>& embeddings, const TokenizerDims& dims) {
    const std::string p = kTokenizer + ".enc";
    if (embeddings.shape().size() != 2 || embeddings.shape()[1] != dims.embed.width) {
        throw ShapeError("encode_tokens: expected (g, " + std::to_string(dims.embed.width) + ") embeddings, got " +
                         shape_str(embeddings.shape()));
    }
    const std::size_t g = embeddings.shape()[0];
    if (g < 2) throw ArgumentError("encode_tokens: need at least 2 patches");
    const std::size_t kf = graph_neighbors(dims.knn, g);
    auto x1 = edge_conv(s, p + ".edge1", embeddings, feature_knn(embeddings.value(), kf));
    auto x2 = edge_conv(s, p + ".edge2", x1, feature_knn(x1.value(), kf));
    auto y = relu(linear(s, p + ".out1", concat<T>({x1, x2}, 1)));
    return linear(s, p + ".out2", y);
}

/// Tokenizer embedding followed by encode_tokens: (g, k, 3) -> (g, vocab).
template <typename T>
Var<T> tokenize(Scope<T>& s, const Var<T>& patches, const TokenizerDims& dims) {
    return encode_tokens(s, embed_patches(s, kTokenizer + ".embed", patches), dims);
}

/// Hard token ids: one-hot at each row's argmax, ties to the
/// lowest index.
template <typename T>
Tensor<T> hard_token(const Tensor<T>& z) {
    Tensor<T> out(z.shape());
    const std::size_t n = z.cols();
    for (std::size_t r = 0; r < z.rows(); ++r) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < n; ++j) {
            if (z[r * n + j] > z[r * n + best]) best = j;
        }
        out[r * n + best] = T(1);
    }
    return out;
}

template <typename T>
Tensor<T> gumbel_noise(const Shape& shape, Rng& rng) {
    Tensor<T> g(shape);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<T>(-std::log(-std::log(rng.uniform_open())));
    return g;
}

/// softmax((z + noise) / temperature) over the last axis. With
/// straight_through the forward value is the one-hot argmax of that sample
/// while gradients follow the relaxed sample.
template <typename T>
Var<T> gumbel_discretize(const Var<T>& z, T temperature, const Tensor<T>& noise, bool straight_through) {
    if (!(temperature > T(0))) throw ArgumentError("gumbel temperature must be positive");
    auto soft = softmax(scale(add(z, constant(noise)), T(1) / temperature), -1);
    return straight_through ? straight_through_onehot(soft) : soft;
}

template <typename T>
Var<T> gumbel_discretize(const Var<T>& z, T temperature, Rng& rng, bool straight_through) {
    return gumbel_discretize(z, temperature, gumbel_noise<T>(z.shape(), rng), straight_through);
}

/// Regular 2D grid of k points in [-r, r]^2, row-major, truncated to k.
template <typename T>
Tensor<T> folding_grid(std::size_t k, T radius = T(0.2)) {
    const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(k))));
    Tensor<T> grid({k, 2});
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t r = i / side, c = i % side;
        const T step = side > 1 ? T(2) * radius / T(side - 1) : T(0);
        grid.at(i, 0) = side > 1 ? -radius + step * T(c) : T(0);
        grid.at(i, 1) = side > 1 ? -radius + step * T(r) : T(0);
    }
    return grid;
}

/// (g, vocab) token rows and (g, 3) centers -> (g, k, 3) center-relative
/// patches. The decoder graph is built over the patch centers.
template <typename T>
Var<T> decode(Scope<T>& s, const Var<T>& tokens, const Var<T>& centers, const TokenizerDims& dims) {
    const std::string p = kTokenizer + ".dec";
    const auto& ts = tokens.shape();
    if (ts.size() != 2 || ts[1] != dims.vocab || centers.shape() != Shape{ts[0], 3}) {
        throw ShapeError("decode: tokens " + shape_str(ts) + " and centers " + shape_str(centers.shape()) +
                         " are inconsistent");
    }
    const std::size_t g = ts[0], k = dims.group_size;
    if (g < 2) throw ArgumentError("decode: need at least 2 patches");
    const auto neighbors = feature_knn(centers.value(), graph_neighbors(dims.knn, g));

    auto t = linear(s, p + ".token", tokens);
    auto y1 = edge_conv(s, p + ".edge1", t, neighbors);
    auto y2 = edge_conv(s, p + ".edge2", y1, neighbors);
    auto feat = relu(linear(s, p + ".fuse", concat<T>({y1, y2}, 1)));

    std::vector<std::size_t> owner(g * k);
    for (std::size_t i = 0; i < g * k; ++i) owner[i] = i / k;
    auto rep = gather(feat, std::move(owner));

    const Tensor<T> grid = folding_grid<T>(k);
    Tensor<T> tiled({g * k, 2});
    for (std::size_t i = 0; i < g * k; ++i) {
        tiled.at(i, 0) = grid.at(i % k, 0);
        tiled.at(i, 1) = grid.at(i % k, 1);
    }
    auto f1 = relu(linear(s, p + ".fold1a", concat<T>({rep, constant(std::move(tiled))}, 1)));
    f1 = relu(linear(s, p + ".fold1b", f1));
    auto coarse = linear(s, p + ".fold1c", f1);
    auto f2 = relu(linear(s, p + ".fold2a", concat<T>({rep, coarse}, 1)));
    f2 = relu(linear(s, p + ".fold2b", f2));
    auto fine = add(coarse, linear(s, p + ".fold2c", f2));
    return reshape(fine, {g, k, 3});
}

template <typename T>
struct DvaeLoss {
    Var<T> total;
    Var<T> recon;
    Var<T> kl;
    Var<T> logits;
};

/// Mean KL(softmax(z_i) || Uniform(vocab)) over rows.
template <typename T>
Var<T> uniform_kl(const Var<T>& logits) {
    const std::size_t g = logits.shape()[0], v = logits.shape()[1];
    auto q = softmax(logits, -1);
    auto neg_entropy = scale(sum_all(mul(q, log_softmax(logits, -1))), T(1) / T(g));
    return add_scalar(neg_entropy, static_cast<T>(std::log(static_cast<double>(v))));
}

/// Reconstruction (mean per-patch Chamfer) plus kl_weight times the uniform
/// prior KL, for one patch set given as (g, k, 3) patches and (g, 3) centers.
template <typename T>
DvaeLoss<T> dvae_loss(Scope<T>& s, const Var<T>& patches, const Var<T>& centers, const TokenizerDims& dims,
                      T temperature, T kl_weight, const Tensor<T>& noise, bool straight_through = false) {
    auto z = tokenize(s, patches, dims);
    auto tokens = gumbel_discretize(z, temperature, noise, straight_through);
    auto recon = mean_all(chamfer_batched(decode(s, tokens, centers, dims), patches));
    auto kl = uniform_kl(z);
    auto total = add(recon, scale(kl, kl_weight));
    return {total, recon, kl, z};
}

} // namespace pointmpm
