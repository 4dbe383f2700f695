#pragma once

// Pre-norm transformer encoder over [cls] + g patch tokens.

#include <cmath>
#include <string>
#include <vector>

#include "pointmpm/params.hpp"
#include "pointmpm/pointops.hpp"

namespace pointmpm {

struct EncoderDims {
    std::size_t width = 64;
    std::size_t depth = 3;
    std::size_t heads = 4;
    std::size_t ff_width = 128;
};

inline const std::string kEncoder = "encoder";

template <typename T>
void init_encoder(ParameterSet<T>& params, const EncoderDims& dims, Rng& rng) {
    if (dims.heads == 0 || dims.width % dims.heads != 0) {
        throw ArgumentError("encoder width " + std::to_string(dims.width) + " is not divisible by " +
                            std::to_string(dims.heads) + " heads");
    }
    const std::string p = kEncoder;
    const std::size_t d = dims.width;
    init_vector(params, p + ".cls_token", d, rng, 0.02);
    init_vector(params, p + ".cls_pos", d, rng, 0.02);
    init_vector(params, p + ".mask_token", d, rng, 0.02);
    for (std::size_t l = 0; l < dims.depth; ++l) {
        const std::string b = p + ".layer" + std::to_string(l);
        init_norm(params, b + ".norm1", d);
        init_linear(params, b + ".query", d, d, rng);
        init_linear(params, b + ".key", d, d, rng);
        init_linear(params, b + ".value", d, d, rng);
        init_linear(params, b + ".proj", d, d, rng);
        init_norm(params, b + ".norm2", d);
        init_linear(params, b + ".ff1", d, dims.ff_width, rng);
        init_linear(params, b + ".ff2", dims.ff_width, d, rng);
    }
    init_norm(params, p + ".norm", d);
}

/// Replaces the rows listed in `mask` by the learnable mask embedding.
template <typename T>
Var<T> apply_mask(Scope<T>& s, const Var<T>& embeddings, const MaskSet& mask) {
    const std::size_t g = embeddings.shape()[0], d = embeddings.shape()[1];
    std::vector<std::size_t> rows(g);
    for (std::size_t i = 0; i < g; ++i) rows[i] = i;
    for (auto i : mask.indices) {
        if (i >= g) throw ArgumentError("mask index " + std::to_string(i) + " out of range");
        rows[i] = g;
    }
    auto token = reshape(s.leaf(kEncoder + ".mask_token"), {1, d});
    return gather(concat<T>({embeddings, token}, 0), std::move(rows));
}

template <typename T>
struct EncoderOutput {
    Var<T> cls;  // (d), not normalized
    Var<T> h;    // (g, d), unit rows
};

template <typename T>
Var<T> self_attention(Scope<T>& s, const std::string& prefix, const Var<T>& x, std::size_t heads) {
    const std::size_t d = x.shape()[1], dh = d / heads;
    auto q = linear(s, prefix + ".query", x);
    auto k = linear(s, prefix + ".key", x);
    auto v = linear(s, prefix + ".value", x);
    const T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));
    std::vector<Var<T>> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        auto qh = slice_last(q, h * dh, (h + 1) * dh);
        auto kh = slice_last(k, h * dh, (h + 1) * dh);
        auto vh = slice_last(v, h * dh, (h + 1) * dh);
        auto attn = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), -1);
        outs.push_back(matmul(attn, vh));
    }
    return linear(s, prefix + ".proj", heads == 1 ? outs.front() : concat(outs, 1));
}

/// [cls + cls_pos] followed by (embeddings + positions), `depth` pre-norm
/// blocks, final norm. Patch rows are l2-normalized; the cls row is not.
template <typename T>
EncoderOutput<T> encode(Scope<T>& s, const Var<T>& embeddings, const Var<T>& positions, const EncoderDims& dims) {
    const std::string p = kEncoder;
    const auto& es = embeddings.shape();
    if (es.size() != 2 || es[1] != dims.width || positions.shape() != es) {
        throw ShapeError("encode: embeddings " + shape_str(es) + " and positions " + shape_str(positions.shape()) +
                         " must both be (g, " + std::to_string(dims.width) + ")");
    }
    const std::size_t g = es[0], d = dims.width;
    auto cls = reshape(add(s.leaf(p + ".cls_token"), s.leaf(p + ".cls_pos")), {1, d});
    auto x = concat<T>({cls, add(embeddings, positions)}, 0);
    for (std::size_t l = 0; l < dims.depth; ++l) {
        const std::string b = p + ".layer" + std::to_string(l);
        x = add(x, self_attention(s, b, norm(s, b + ".norm1", x), dims.heads));
        auto ff = linear(s, b + ".ff2", gelu(linear(s, b + ".ff1", norm(s, b + ".norm2", x))));
        x = add(x, ff);
    }
    x = norm(s, p + ".norm", x);

    std::vector<std::size_t> patch_rows(g);
    for (std::size_t i = 0; i < g; ++i) patch_rows[i] = i + 1;
    EncoderOutput<T> out;
    out.cls = reshape(gather(x, {0}), {d});
    out.h = l2_normalize(gather(x, std::move(patch_rows)), 1);
    return out;
}

} // namespace pointmpm
