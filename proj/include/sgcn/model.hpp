#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <sgcn/rng.hpp>
#include <sgcn/scene_graph.hpp>
#include <sgcn/tensor.hpp>

namespace sgcn {

struct ModelConfig {
    bool baseline = false;
    bool use_map = true;
    bool weighted_adjacency = false;
    bool residual = false;
    bool use_temporal = true;
    int n_classes = 8;
    uint64_t seed = 0;

    void validate() const {
        if (baseline && residual)
            throw std::invalid_argument("config: baseline excludes residual connections");
        if (n_classes < 2) throw std::invalid_argument("config: n_classes must be >= 2");
    }
    SceneGraphOptions scene_options() const {
        SceneGraphOptions o;
        o.weighted_adjacency = weighted_adjacency;
        o.use_map = use_map;
        return o;
    }
};

struct GcnLayer {
    Tensor w;  // no bias: zero features must propagate to zero
    Tensor ln_gain, ln_bias;
};

struct LinearLayer {
    Tensor w, b;
};

struct ConvLayer {
    Tensor w, b;
    int dilation = 1, pad = 0;
};

inline constexpr int kFeatureDim = 4;
inline constexpr int kHidden = 128;
inline constexpr int kTemporalChannels = 16;

struct ModelParams {
    ModelConfig config;
    // environment encoder (two parallel stacks over suc/pre)
    std::vector<GcnLayer> env_suc, env_pre;
    LinearLayer env_suc_fc, env_pre_fc, env_merge_fc;
    // agent encoder
    GcnLayer agent_w2a;
    std::vector<GcnLayer> agent_e2a;
    // fusion
    std::vector<GcnLayer> fusion_e2w;
    LinearLayer branch_fc_agent, branch_fc_env, final_fc;
    // baseline ablation: one stack over the merged relation
    std::vector<GcnLayer> base_gcn;
    LinearLayer base_fc;
    // temporal CNN + head
    std::vector<ConvLayer> temporal;
    LinearLayer classifier;

    std::vector<std::pair<std::string, Tensor>> named;  // declaration-ordered registry

    void zero_grad() const {
        for (const auto& [name, t] : named) t.zero_grad();
    }
    size_t parameter_count() const {
        size_t n = 0;
        for (const auto& [name, t] : named) n += t.numel();
        return n;
    }
    const Tensor& find(const std::string& name) const {
        for (const auto& [n, t] : named)
            if (n == name) return t;
        throw std::invalid_argument("no parameter named " + name);
    }
};

namespace detail {

struct ParamBuilder {
    Rng rng;
    ModelParams* p;

    Tensor glorot(Shape shape, int fan_in, int fan_out, const std::string& name) {
        double limit = std::sqrt(6.0 / double(fan_in + fan_out));
        Tensor t = Tensor::zeros(std::move(shape), true);
        for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
        p->named.emplace_back(name, t);
        return t;
    }
    Tensor constant(Shape shape, double v, const std::string& name) {
        Tensor t = Tensor::zeros(std::move(shape), true);
        for (size_t i = 0; i < t.numel(); ++i) t[i] = v;
        p->named.emplace_back(name, t);
        return t;
    }
    GcnLayer gcn(int f_in, int f_out, const std::string& name) {
        GcnLayer l;
        l.w = glorot({f_in, f_out}, f_in, f_out, name + ".w");
        l.ln_gain = constant({f_out}, 1.0, name + ".ln_gain");
        l.ln_bias = constant({f_out}, 0.0, name + ".ln_bias");
        return l;
    }
    std::vector<GcnLayer> gcn_stack(const std::vector<int>& dims, const std::string& name) {
        std::vector<GcnLayer> layers;
        for (size_t i = 0; i + 1 < dims.size(); ++i)
            layers.push_back(gcn(dims[i], dims[i + 1], name + "." + std::to_string(i)));
        return layers;
    }
    LinearLayer lin(int f_in, int f_out, const std::string& name) {
        LinearLayer l;
        l.w = glorot({f_in, f_out}, f_in, f_out, name + ".w");
        l.b = constant({f_out}, 0.0, name + ".b");
        return l;
    }
    ConvLayer conv(int c_in, int c_out, int k, int dilation, int pad, const std::string& name) {
        ConvLayer l;
        l.w = glorot({c_out, c_in, k}, c_in * k, c_out * k, name + ".w");
        l.b = constant({c_out}, 0.0, name + ".b");
        l.dilation = dilation;
        l.pad = pad;
        return l;
    }
};

}  // namespace detail

inline ModelParams init_params(uint64_t seed, const ModelConfig& config) {
    config.validate();
    ModelParams p;
    p.config = config;
    p.config.seed = seed;
    detail::ParamBuilder b{Rng(seed), &p};
    const std::vector<int> env_dims = {kFeatureDim, 16, 64, kHidden, kHidden};
    if (config.baseline) {
        // one untyped graph convolution in place of the whole typed encoder
        p.base_gcn = b.gcn_stack({kFeatureDim, kHidden}, "base_gcn");
        p.base_fc = b.lin(kHidden, kHidden, "base_fc");
    } else {
        if (config.use_map) {
            p.env_suc = b.gcn_stack(env_dims, "env_suc");
            p.env_suc_fc = b.lin(kHidden, kHidden, "env_suc_fc");
            p.env_pre = b.gcn_stack(env_dims, "env_pre");
            p.env_pre_fc = b.lin(kHidden, kHidden, "env_pre_fc");
            p.env_merge_fc = b.lin(kHidden, kHidden, "env_merge_fc");
        }
        p.agent_w2a = b.gcn(kFeatureDim, kHidden, "agent_w2a");
        p.agent_e2a = b.gcn_stack({kHidden, kHidden, kHidden}, "agent_e2a");
        if (config.use_map) {
            p.fusion_e2w = b.gcn_stack({kHidden, kHidden, kHidden}, "fusion_e2w");
            p.branch_fc_env = b.lin(kHidden, kHidden, "branch_fc_env");
        }
        p.branch_fc_agent = b.lin(kHidden, kHidden, "branch_fc_agent");
        p.final_fc = b.lin(kHidden, kHidden, "final_fc");
    }
    if (config.use_temporal) {
        p.temporal.push_back(b.conv(kHidden, kTemporalChannels, 3, 1, 1, "temporal.0"));
        p.temporal.push_back(b.conv(kTemporalChannels, kTemporalChannels, 3, 2, 2, "temporal.1"));
        p.temporal.push_back(b.conv(kTemporalChannels, kTemporalChannels, 3, 4, 4, "temporal.2"));
        p.temporal.push_back(b.conv(kTemporalChannels, kTemporalChannels, 7, 1, 3, "temporal.3"));
    }
    p.classifier = b.lin(config.use_temporal ? kTemporalChannels : kHidden, config.n_classes,
                         "classifier");
    return p;
}

// ---- forward passes ----

// One index space: a single frame or a whole stacked sequence.
struct EncoderInput {
    Tensor x;  // rows x 4
    const std::array<SparseRelation, kRelationCount>* relations = nullptr;
    const SparseRelation* merged = nullptr;
    std::shared_ptr<const std::vector<uint8_t>> waypoint_rows;

    const SparseRelation& rel(RelationType t) const { return (*relations)[size_t(t)]; }
};

inline EncoderInput encoder_input(const SceneGraph& g) {
    EncoderInput in;
    in.x = g.vertices;
    in.relations = &g.relations;
    in.merged = &g.merged;
    auto wp = std::make_shared<std::vector<uint8_t>>(size_t(g.n_vertices()), 0);
    for (int w = 0; w < g.n_waypoints; ++w) (*wp)[size_t(1 + g.n_agents + w)] = 1;
    in.waypoint_rows = wp;
    return in;
}

inline EncoderInput encoder_input(const SequenceBatch& b) {
    EncoderInput in;
    in.x = b.features;
    in.relations = &b.stacked;
    in.merged = &b.stacked_merged;
    in.waypoint_rows = b.waypoint_rows;
    return in;
}

inline Tensor gcn_layer_forward(Tape* tape, const GcnLayer& l, const SparseRelation& rel,
                                const Tensor& h) {
    return relu(tape, layer_norm(tape, matmul(tape, propagate(tape, rel, h), l.w), l.ln_gain,
                                 l.ln_bias));
}

inline Tensor env_encode(Tape* tape, const ModelParams& p, const EncoderInput& in) {
    if (!p.config.use_map) throw std::logic_error("env_encode: requires use_map");
    Tensor h0 = mask_rows(tape, in.x, in.waypoint_rows);
    auto block = [&](const std::vector<GcnLayer>& layers, const LinearLayer& fc,
                     const SparseRelation& rel) {
        Tensor h = h0;
        for (const auto& l : layers) h = gcn_layer_forward(tape, l, rel, h);
        h = linear(tape, h, fc.w, fc.b);
        if (p.config.residual) h = add(tape, h, zeropad_cols(tape, h0, kHidden));
        return h;
    };
    Tensor s = block(p.env_suc, p.env_suc_fc, in.rel(RelationType::suc));
    Tensor q = block(p.env_pre, p.env_pre_fc, in.rel(RelationType::pre));
    return linear(tape, add(tape, s, q), p.env_merge_fc.w, p.env_merge_fc.b);
}

inline Tensor agent_encode(Tape* tape, const ModelParams& p, const EncoderInput& in) {
    // W2A embeds the raw 4-channel features. Rows the relation never touches
    // (the ego row in particular) pass through raw, so the E2A stage still
    // sees them; without a map the whole layer degrades to a plain embedding.
    Tensor a = in.x;
    if (p.config.use_map) {
        const SparseRelation& w2a = in.rel(RelationType::w2a);
        auto keep = std::make_shared<std::vector<uint8_t>>(size_t(w2a.n_vertices), 1);
        for (const Edge& e : w2a.edges) (*keep)[size_t(e.src)] = (*keep)[size_t(e.dst)] = 0;
        a = add(tape, propagate(tape, w2a, in.x), mask_rows(tape, in.x, keep));
    }
    a = matmul(tape, a, p.agent_w2a.w);
    a = relu(tape, layer_norm(tape, a, p.agent_w2a.ln_gain, p.agent_w2a.ln_bias));
    // stored E2A edges point ego -> agent; this block aggregates the other way,
    // pulling agent features into the ego row
    SparseRelation into_ego = reversed(in.rel(RelationType::e2a));
    Tensor h = a;
    for (const auto& l : p.agent_e2a) h = gcn_layer_forward(tape, l, into_ego, h);
    if (p.config.residual) h = add(tape, h, zeropad_cols(tape, in.x, kHidden));
    return h;
}

inline Tensor fuse(Tape* tape, const ModelParams& p, const Tensor& env_features,
                   const Tensor& agent_features, const EncoderInput& in) {
    Tensor branches = linear(tape, agent_features, p.branch_fc_agent.w, p.branch_fc_agent.b);
    if (p.config.use_map) {
        // E2W edges are stored ego -> waypoint; fusion pulls waypoint
        // environment features into the ego row
        SparseRelation into_ego = reversed(in.rel(RelationType::e2w));
        Tensor f = env_features;
        for (const auto& l : p.fusion_e2w)
            f = gcn_layer_forward(tape, l, into_ego, f);
        if (p.config.residual) f = add(tape, f, env_features);
        branches = add(tape, branches, linear(tape, f, p.branch_fc_env.w, p.branch_fc_env.b));
    }
    return linear(tape, branches, p.final_fc.w, p.final_fc.b);
}

inline Tensor spatial_encode(Tape* tape, const ModelParams& p, const EncoderInput& in) {
    if (p.config.baseline) {
        Tensor h = in.x;
        for (const auto& l : p.base_gcn) h = gcn_layer_forward(tape, l, *in.merged, h);
        return linear(tape, h, p.base_fc.w, p.base_fc.b);
    }
    Tensor agent = agent_encode(tape, p, in);
    Tensor env;
    if (p.config.use_map) env = env_encode(tape, p, in);
    return fuse(tape, p, env, agent, in);
}

// spatial: (t_len * n_vertices) x 128, masked rows already zeroed
inline Tensor temporal_forward(Tape* tape, const ModelParams& p, const Tensor& spatial,
                               int n_vertices) {
    Tensor h = spatial;
    for (const auto& l : p.temporal) {
        h = conv1d_dilated_stacked(tape, h, n_vertices, l.w, l.dilation, l.pad);
        h = selu(tape, add_bias_cols(tape, h, l.b));
    }
    return h;
}

struct Prediction {
    Tensor logits;         // t_len x n_classes
    Tensor probabilities;  // softmax rows
    std::vector<int> labels;
};

inline std::vector<int> argmax_rows(const Tensor& t) {
    std::vector<int> out(size_t(t.rows()));
    for (int i = 0; i < t.rows(); ++i) {
        int best = 0;
        for (int j = 1; j < t.cols(); ++j)
            if (t.at(i, j) > t.at(i, best)) best = j;
        out[size_t(i)] = best;
    }
    return out;
}

inline Prediction prediction_from_logits(const Tensor& logits) {
    Prediction pr;
    pr.logits = logits;
    pr.probabilities = softmax_rows(logits);
    pr.labels = argmax_rows(logits);
    return pr;
}

// Full pipeline on a stacked sequence; returns per-frame logits
inline Tensor model_logits(Tape* tape, const ModelParams& p, const SequenceBatch& batch) {
    EncoderInput in = encoder_input(batch);
    Tensor spatial = spatial_encode(tape, p, in);
    Tensor masked = mask_rows(tape, spatial, batch.mask);
    Tensor feats =
        p.config.use_temporal ? temporal_forward(tape, p, masked, batch.n_vertices) : masked;
    Tensor pooled = masked_mean_pool(tape, feats, batch.frame_groups);
    return linear(tape, pooled, p.classifier.w, p.classifier.b);
}

inline Prediction model_forward(const ModelParams& p, const SequenceBatch& batch) {
    return prediction_from_logits(model_logits(nullptr, p, batch));
}

// ---- checkpoint io ----

namespace detail {

inline void write_bytes(std::ofstream& f, const void* p, size_t n) {
    f.write(static_cast<const char*>(p), std::streamsize(n));
}
template <typename T>
void write_pod(std::ofstream& f, T v) {
    write_bytes(f, &v, sizeof(T));
}
inline void read_bytes(std::ifstream& f, void* p, size_t n) {
    if (!f.read(static_cast<char*>(p), std::streamsize(n)))
        throw std::runtime_error("checkpoint: truncated file");
}
template <typename T>
T read_pod(std::ifstream& f) {
    T v;
    read_bytes(f, &v, sizeof(T));
    return v;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'S', 'G', 'C', 'N', 'C', 'K', 'P', '1'};

inline void save_checkpoint(const ModelParams& p, const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    detail::write_bytes(f, kCheckpointMagic, 8);
    detail::write_pod<uint32_t>(f, 1);
    detail::write_pod<uint8_t>(f, p.config.baseline);
    detail::write_pod<uint8_t>(f, p.config.use_map);
    detail::write_pod<uint8_t>(f, p.config.weighted_adjacency);
    detail::write_pod<uint8_t>(f, p.config.residual);
    detail::write_pod<uint8_t>(f, p.config.use_temporal);
    detail::write_pod<int32_t>(f, p.config.n_classes);
    detail::write_pod<uint64_t>(f, p.config.seed);
    detail::write_pod<uint32_t>(f, uint32_t(p.named.size()));
    for (const auto& [name, t] : p.named) {
        detail::write_pod<uint32_t>(f, uint32_t(name.size()));
        detail::write_bytes(f, name.data(), name.size());
        detail::write_pod<uint32_t>(f, uint32_t(t.ndim()));
        for (int i = 0; i < t.ndim(); ++i) detail::write_pod<int32_t>(f, t.dim(i));
        detail::write_bytes(f, t.data(), t.numel() * sizeof(double));
    }
    if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[8];
    detail::read_bytes(f, magic, 8);
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    if (detail::read_pod<uint32_t>(f) != 1)
        throw std::runtime_error("checkpoint: unsupported version in " + path);
    ModelConfig cfg;
    cfg.baseline = detail::read_pod<uint8_t>(f);
    cfg.use_map = detail::read_pod<uint8_t>(f);
    cfg.weighted_adjacency = detail::read_pod<uint8_t>(f);
    cfg.residual = detail::read_pod<uint8_t>(f);
    cfg.use_temporal = detail::read_pod<uint8_t>(f);
    cfg.n_classes = detail::read_pod<int32_t>(f);
    uint64_t seed = detail::read_pod<uint64_t>(f);
    ModelParams p = init_params(seed, cfg);
    uint32_t count = detail::read_pod<uint32_t>(f);
    if (count != p.named.size()) throw std::runtime_error("checkpoint: tensor count mismatch");
    for (auto& [name, t] : p.named) {
        uint32_t len = detail::read_pod<uint32_t>(f);
        std::string got(len, '\0');
        detail::read_bytes(f, got.data(), len);
        if (got != name) throw std::runtime_error("checkpoint: expected tensor " + name +
                                                  ", found " + got);
        uint32_t nd = detail::read_pod<uint32_t>(f);
        if (int(nd) != t.ndim()) throw std::runtime_error("checkpoint: rank mismatch for " + name);
        for (int i = 0; i < t.ndim(); ++i)
            if (detail::read_pod<int32_t>(f) != t.dim(i))
                throw std::runtime_error("checkpoint: shape mismatch for " + name);
        detail::read_bytes(f, t.data(), t.numel() * sizeof(double));
    }
    return p;
}

}  // namespace sgcn
