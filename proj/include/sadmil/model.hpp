#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sadmil/dataio.hpp"
#include "sadmil/tape.hpp"

namespace sadmil {

enum class Pooling { attention, max, mean };

inline std::string to_string(Pooling p) {
    switch (p) {
        case Pooling::attention: return "attention";
        case Pooling::max: return "max";
        case Pooling::mean: return "mean";
    }
    return "?";
}

inline Pooling pooling_from_string(const std::string& s) {
    if (s == "attention") return Pooling::attention;
    if (s == "max") return Pooling::max;
    if (s == "mean") return Pooling::mean;
    throw ConfigError("unknown pooling '" + s + "' (expected attention, max or mean)");
}

struct ModelConfig {
    std::size_t input_dim = 10;      // F, features per instance
    std::size_t embed_dim = 16;      // D
    std::size_t attention_dim = 8;   // L
    std::size_t embed_depth = 1;     // tanh layers in the instance embedding, 0..3
    Pooling pooling = Pooling::attention;

    void validate() const {
        if (input_dim == 0 || embed_dim == 0 || attention_dim == 0)
            throw ConfigError("model dimensions must be positive");
        if (embed_depth > 3) throw ConfigError("model.embed_depth must be in [0, 3]");
        if (embed_depth == 0 && input_dim != embed_dim)
            throw ConfigError("model.embed_depth = 0 requires input_dim == embed_dim");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct DenseLayer {
    Tensor weight;  // in x out
    Tensor bias;    // [out]

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Trainable state: embedding layers, attention V (L x D) and w [L], and the
/// D -> 1 classifier.
struct ModelParams {
    ModelConfig config;
    std::vector<DenseLayer> embed;
    Tensor attention_v;
    Tensor attention_w;
    Tensor classifier_weight;  // [D]
    Tensor classifier_bias;    // [1]

    /// Parameter names in the canonical order shared by tensors(),
    /// checkpoints and tape bindings.
    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (std::size_t k = 0; k < embed.size(); ++k) {
            out.push_back("embed." + std::to_string(k) + ".weight");
            out.push_back("embed." + std::to_string(k) + ".bias");
        }
        out.insert(out.end(), {"attention.V", "attention.w", "classifier.weight", "classifier.bias"});
        return out;
    }

    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out;
        for (auto& l : embed) {
            out.push_back(&l.weight);
            out.push_back(&l.bias);
        }
        out.insert(out.end(), {&attention_v, &attention_w, &classifier_weight, &classifier_bias});
        return out;
    }

    std::vector<const Tensor*> tensors() const {
        std::vector<const Tensor*> out;
        for (auto& t : const_cast<ModelParams*>(this)->tensors()) out.push_back(t);
        return out;
    }

    std::vector<Shape> expected_shapes() const {
        const auto& c = config;
        std::vector<Shape> out;
        for (std::size_t k = 0; k < c.embed_depth; ++k) {
            const std::size_t in = k == 0 ? c.input_dim : c.embed_dim;
            out.push_back({in, c.embed_dim});
            out.push_back({c.embed_dim});
        }
        out.push_back({c.attention_dim, c.embed_dim});
        out.push_back({c.attention_dim});
        out.push_back({c.embed_dim});
        out.push_back({1});
        return out;
    }

    void validate() const {
        config.validate();
        if (embed.size() != config.embed_depth)
            throw DimensionError("model has " + std::to_string(embed.size()) + " embedding layers, config says " +
                                 std::to_string(config.embed_depth));
        const auto shapes = expected_shapes();
        const auto ts = tensors();
        const auto ns = names();
        for (std::size_t i = 0; i < ts.size(); ++i) {
            if (ts[i]->shape() != shapes[i])
                throw DimensionError("parameter " + ns[i] + " has shape " + shape_string(ts[i]->shape()) +
                                     ", expected " + shape_string(shapes[i]));
            if (!ts[i]->all_finite()) throw NumericError("parameter " + ns[i] + " is not finite");
        }
    }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Glorot-uniform weights, zero biases.
inline ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    std::mt19937_64 rng(seed);
    const auto glorot = [&rng](Shape shape, std::size_t fan_in, std::size_t fan_out) {
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> u(-a, a);
        Tensor t(std::move(shape));
        for (auto& v : t.values()) v = u(rng);
        return t;
    };
    for (std::size_t k = 0; k < cfg.embed_depth; ++k) {
        const std::size_t in = k == 0 ? cfg.input_dim : cfg.embed_dim;
        p.embed.push_back({glorot({in, cfg.embed_dim}, in, cfg.embed_dim), Tensor({cfg.embed_dim})});
    }
    p.attention_v = glorot({cfg.attention_dim, cfg.embed_dim}, cfg.embed_dim, cfg.attention_dim);
    p.attention_w = glorot({cfg.attention_dim}, cfg.attention_dim, 1);
    p.classifier_weight = glorot({cfg.embed_dim}, cfg.embed_dim, 1);
    p.classifier_bias = Tensor({1});
    return p;
}

/// ModelParams recorded as variable leaves of one tape.
struct ParamVars {
    std::vector<std::pair<Var, Var>> embed;
    Var attention_v, attention_w, classifier_weight, classifier_bias;

    std::vector<Var> all() const {
        std::vector<Var> out;
        for (const auto& [w, b] : embed) {
            out.push_back(w);
            out.push_back(b);
        }
        out.insert(out.end(), {attention_v, attention_w, classifier_weight, classifier_bias});
        return out;
    }
};

inline ParamVars bind(Tape& tape, const ModelParams& p) {
    ParamVars v;
    for (const auto& l : p.embed) v.embed.emplace_back(tape.variable(l.weight), tape.variable(l.bias));
    v.attention_v = tape.variable(p.attention_v);
    v.attention_w = tape.variable(p.attention_w);
    v.classifier_weight = tape.variable(p.classifier_weight);
    v.classifier_bias = tape.variable(p.classifier_bias);
    return v;
}

/// Instance embeddings Z (N x D): a stack of tanh(X W + b) layers.
inline Var embed(Var features, const ParamVars& p) {
    Var x = features;
    for (const auto& [w, b] : p.embed) x = tanh(add_row(matmul(x, w), b));
    return x;
}

inline Var embed(Tape& tape, const Bag& bag, const ModelParams& params, const ParamVars& p) {
    if (bag.feature_dim() != params.config.input_dim)
        throw DimensionError("bag '" + bag.id + "': instances have " + std::to_string(bag.feature_dim()) +
                             " features, model expects " + std::to_string(params.config.input_dim));
    return embed(tape.constant(bag.features), p);
}

/// f_i = w^T tanh(V z_i), one value per row of Z.
inline Var attention_values(Var z, Var v, Var w) {
    const auto& zs = z.shape();
    const auto& vs = v.shape();
    if (zs.size() != 2 || vs.size() != 2 || vs[1] != zs[1] || w.value().size() != vs[0])
        throw DimensionError("attention_values: Z " + shape_string(zs) + ", V " + shape_string(vs) + ", w " +
                             shape_string(w.shape()) + " do not agree");
    Var h = tanh(matmul(z, transpose(v)));
    return reshape(matmul(h, reshape(w, {vs[0], 1})), {zs[0]});
}

/// Softmax of the attention values within the bag.
inline Var attention_weights(Var f) { return softmax(f); }

/// sum_i s_i z_i.
inline Var attention_pool(Var z, Var s) {
    const auto& zs = z.shape();
    if (zs.size() != 2 || s.value().size() != zs[0])
        throw DimensionError("attention_pool: " + std::to_string(s.value().size()) + " weights for Z of shape " +
                             shape_string(zs));
    return reshape(matmul(reshape(s, {1, zs[0]}), z), {zs[1]});
}

/// Per-dimension max or mean over instances.
inline Var pool_baseline(Var z, Pooling mode) {
    if (z.shape().size() != 2) throw DimensionError("pool_baseline: expected N x D embeddings");
    const std::size_t d = z.shape()[1];
    switch (mode) {
        case Pooling::max: return reshape(max(z, 0), {d});
        case Pooling::mean: return reshape(mean(z, 0), {d});
        default: throw Error("pool_baseline: attention is not a baseline pooling");
    }
}

/// Tape handles of one bag's forward pass. `f` and `s` are unset for
/// baseline poolings.
struct ForwardVars {
    Var z, f, s, embedding, prob;
    bool has_attention = false;
};

inline ForwardVars forward(Tape& tape, const Bag& bag, const ModelParams& params, const ParamVars& p) {
    ForwardVars out;
    out.z = embed(tape, bag, params, p);
    if (params.config.pooling == Pooling::attention) {
        out.f = attention_values(out.z, p.attention_v, p.attention_w);
        out.s = attention_weights(out.f);
        out.embedding = attention_pool(out.z, out.s);
        out.has_attention = true;
    } else {
        out.embedding = pool_baseline(out.z, params.config.pooling);
    }
    out.prob = sigmoid(add(dot(out.embedding, p.classifier_weight), p.classifier_bias));
    return out;
}

/// Values of one forward pass.
struct BagForward {
    Tensor z;
    Tensor f;  // empty for baseline poolings
    Tensor s;  // empty for baseline poolings
    Tensor embedding;
    double prob = 0.5;

    bool has_attention() const { return !s.empty(); }
};

inline BagForward forward(const Bag& bag, const ModelParams& params) {
    Tape tape;
    const ParamVars p = bind(tape, params);
    const ForwardVars v = forward(tape, bag, params, p);
    BagForward out;
    out.z = v.z.value();
    if (v.has_attention) {
        out.f = v.f.value();
        out.s = v.s.value();
    }
    out.embedding = v.embedding.value();
    out.prob = v.prob.value().item();
    return out;
}

}  // namespace sadmil
