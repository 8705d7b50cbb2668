#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <vector>

#include <sgcn/lane_graph.hpp>
#include <sgcn/tensor.hpp>

namespace sgcn {

struct AgentState {
    int64_t track_id = 0;
    double x = 0.0;
    double y = 0.0;
    double phi = 0.0;
    double v = 0.0;
};

struct EgoPose {
    double x = 0.0;
    double y = 0.0;
    double phi = 0.0;
    double v = 0.0;
};

// rigid transform into the frame centered on ego, heading along +x
inline std::array<double, 4> ego_transform(const EgoPose& pose, double x, double y, double phi,
                                           double v) {
    double c = std::cos(pose.phi), s = std::sin(pose.phi);
    double dx = x - pose.x, dy = y - pose.y;
    return {c * dx + s * dy, -s * dx + c * dy, wrap_angle(phi - pose.phi), v};
}

inline std::array<double, 4> ego_transform(const EgoPose& pose, const AgentState& a) {
    return ego_transform(pose, a.x, a.y, a.phi, a.v);
}

inline std::array<double, 4> ego_transform(const EgoPose& pose, const Waypoint& w) {
    return ego_transform(pose, w.x, w.y, w.phi, 0.0);
}

// A + I with self-loops only on vertices that have at least one incident edge;
// duplicate (src, dst) pairs are aggregated by weight sum
inline SparseRelation with_self_loops(const SparseRelation& rel) {
    rel.validate();
    std::map<std::pair<int, int>, double> agg;
    std::vector<uint8_t> incident(size_t(rel.n_vertices), 0);
    for (const Edge& e : rel.edges) {
        agg[{e.src, e.dst}] += e.w;
        incident[size_t(e.src)] = incident[size_t(e.dst)] = 1;
    }
    for (int v = 0; v < rel.n_vertices; ++v)
        if (incident[size_t(v)]) agg[{v, v}] += 1.0;
    SparseRelation out;
    out.n_vertices = rel.n_vertices;
    for (const auto& [key, w] : agg) out.edges.push_back({key.first, key.second, w});
    return out;
}

// Symmetric normalization of A + I. Directed structure is preserved; the degree
// of a vertex uses the self-loop plus, per neighbor, the larger of the two
// directed weights, so reciprocal edge pairs are not double counted.
inline SparseRelation normalize_relation(const SparseRelation& rel) {
    if (rel.normalized) throw std::logic_error("normalize_relation: already normalized");
    SparseRelation tilde = with_self_loops(rel);
    std::map<std::pair<int, int>, double> w;
    for (const Edge& e : tilde.edges) w[{e.src, e.dst}] = e.w;
    std::vector<double> deg(size_t(rel.n_vertices), 0.0);
    for (const Edge& e : tilde.edges) {
        if (e.src == e.dst) {
            deg[size_t(e.src)] += e.w;
        } else if (e.src < e.dst) {
            auto rev = w.find({e.dst, e.src});
            double m = std::max(e.w, rev == w.end() ? 0.0 : rev->second);
            deg[size_t(e.src)] += m;
            deg[size_t(e.dst)] += m;
        } else if (w.find({e.dst, e.src}) == w.end()) {
            deg[size_t(e.src)] += e.w;
            deg[size_t(e.dst)] += e.w;
        }
    }
    SparseRelation out;
    out.n_vertices = rel.n_vertices;
    out.normalized = true;
    for (const Edge& e : tilde.edges)
        out.edges.push_back({e.src, e.dst, e.w / std::sqrt(deg[size_t(e.src)] * deg[size_t(e.dst)])});
    return out;
}

enum class RelationType { suc = 0, pre = 1, w2a = 2, e2w = 3, e2a = 4 };
inline constexpr int kRelationCount = 5;

struct SceneGraphOptions {
    double distance_threshold = 30.0;
    bool weighted_adjacency = false;
    double min_distance = 0.5;  // clamp for reciprocal-distance weights
    bool use_map = true;
};

// Vertex layout: ego (row 0), agents by ascending track_id, then waypoints in
// lane-graph order. All five relations are normalized.
struct SceneGraph {
    static constexpr int ego_index = 0;
    Tensor vertices;  // N x 4, ego frame
    std::array<SparseRelation, kRelationCount> relations;
    SparseRelation merged;  // union of the five, normalized (baseline ablation)
    int n_agents = 0;
    int n_waypoints = 0;
    std::vector<int64_t> agent_track_ids;

    int n_vertices() const { return 1 + n_agents + n_waypoints; }
    const SparseRelation& relation(RelationType t) const { return relations[size_t(t)]; }
};

inline SceneGraph build_scene_graph(const EgoPose& pose, std::vector<AgentState> agents,
                                    const LaneGraph& lanes,
                                    const SceneGraphOptions& opt = SceneGraphOptions{}) {
    std::sort(agents.begin(), agents.end(),
              [](const AgentState& a, const AgentState& b) { return a.track_id < b.track_id; });
    for (size_t i = 1; i < agents.size(); ++i)
        if (agents[i].track_id == agents[i - 1].track_id)
            throw std::invalid_argument("build_scene_graph: duplicate track_id " +
                                        std::to_string(agents[i].track_id));

    SceneGraph g;
    g.n_agents = int(agents.size());
    g.n_waypoints = opt.use_map ? lanes.n_waypoints() : 0;
    int n = g.n_vertices();
    g.vertices = Tensor::zeros({n, 4});
    g.vertices.at(0, 3) = pose.v;
    for (int i = 0; i < g.n_agents; ++i) {
        g.agent_track_ids.push_back(agents[size_t(i)].track_id);
        auto f = ego_transform(pose, agents[size_t(i)]);
        for (int j = 0; j < 4; ++j) g.vertices.at(1 + i, j) = f[size_t(j)];
    }
    int wp_base = 1 + g.n_agents;
    if (opt.use_map)
        for (int w = 0; w < g.n_waypoints; ++w) {
            auto f = ego_transform(pose, lanes.waypoints[size_t(w)]);
            for (int j = 0; j < 4; ++j) g.vertices.at(wp_base + w, j) = f[size_t(j)];
        }

    auto edge_weight = [&](double dist) {
        return opt.weighted_adjacency ? 1.0 / std::max(dist, opt.min_distance) : 1.0;
    };

    std::array<SparseRelation, kRelationCount> raw;
    for (auto& r : raw) r.n_vertices = n;

    if (opt.use_map) {
        for (Direction dir : {Direction::suc, Direction::pre}) {
            SparseRelation lane_rel = build_directional_relation(lanes, dir);
            auto& dstrel = raw[size_t(dir == Direction::suc ? RelationType::suc : RelationType::pre)];
            for (const Edge& e : lane_rel.edges)
                dstrel.edges.push_back({wp_base + e.src, wp_base + e.dst, e.w});
        }
        for (int w = 0; w < g.n_waypoints; ++w) {
            const Waypoint& wp = lanes.waypoints[size_t(w)];
            for (int a = 0; a < g.n_agents; ++a) {
                double d = std::hypot(wp.x - agents[size_t(a)].x, wp.y - agents[size_t(a)].y);
                if (d <= opt.distance_threshold)
                    raw[size_t(RelationType::w2a)].edges.push_back(
                        {wp_base + w, 1 + a, edge_weight(d)});
            }
            double d = std::hypot(wp.x - pose.x, wp.y - pose.y);
            if (d <= opt.distance_threshold)
                raw[size_t(RelationType::e2w)].edges.push_back({0, wp_base + w, edge_weight(d)});
        }
    }
    for (int a = 0; a < g.n_agents; ++a) {
        double d = std::hypot(agents[size_t(a)].x - pose.x, agents[size_t(a)].y - pose.y);
        if (d <= opt.distance_threshold)
            raw[size_t(RelationType::e2a)].edges.push_back({0, 1 + a, edge_weight(d)});
    }

    SparseRelation merged_raw;
    merged_raw.n_vertices = n;
    for (const auto& r : raw)
        merged_raw.edges.insert(merged_raw.edges.end(), r.edges.begin(), r.edges.end());

    for (int t = 0; t < kRelationCount; ++t) g.relations[size_t(t)] = normalize_relation(raw[size_t(t)]);
    g.merged = normalize_relation(merged_raw);
    return g;
}

// Frames stacked frame-major: row t * n_vertices + v. Relations are per frame in
// the union index space (ego, union of track_ids, waypoints) and pre-offset into
// the stacked row space for the model.
struct SequenceBatch {
    int n_vertices = 0;
    int n_agents = 0;
    int n_waypoints = 0;
    int t_len = 0;
    Tensor features;  // (t_len * n_vertices) x 4
    std::shared_ptr<std::vector<uint8_t>> mask;  // length t_len * n_vertices
    std::shared_ptr<std::vector<uint8_t>> waypoint_rows;  // stacked waypoint-row indicator
    std::shared_ptr<std::vector<std::vector<int>>> frame_groups;  // active rows per frame
    std::array<SparseRelation, kRelationCount> stacked;  // normalized, stacked row space
    SparseRelation stacked_merged;
    std::vector<int> labels;
    std::vector<int64_t> agent_track_ids;

    bool active(int t, int v) const { return (*mask)[size_t(t) * size_t(n_vertices) + size_t(v)]; }
};

inline SequenceBatch assemble_sequence(const std::vector<SceneGraph>& frames,
                                       const std::vector<int>& labels) {
    if (frames.empty() || frames.size() != labels.size())
        throw std::invalid_argument("assemble_sequence: need equal nonzero frame/label counts");
    int t_len = int(frames.size());
    int n_waypoints = frames[0].n_waypoints;
    for (const auto& f : frames)
        if (f.n_waypoints != n_waypoints)
            throw std::invalid_argument("assemble_sequence: waypoint count varies across frames");

    std::vector<int64_t> union_ids;
    for (const auto& f : frames) union_ids.insert(union_ids.end(), f.agent_track_ids.begin(),
                                                  f.agent_track_ids.end());
    std::sort(union_ids.begin(), union_ids.end());
    union_ids.erase(std::unique(union_ids.begin(), union_ids.end()), union_ids.end());

    SequenceBatch b;
    b.t_len = t_len;
    b.n_agents = int(union_ids.size());
    b.n_waypoints = n_waypoints;
    b.n_vertices = 1 + b.n_agents + n_waypoints;
    b.agent_track_ids = union_ids;
    b.labels = labels;
    int n = b.n_vertices;
    b.features = Tensor::zeros({t_len * n, 4});
    b.mask = std::make_shared<std::vector<uint8_t>>(size_t(t_len) * size_t(n), 0);
    b.waypoint_rows = std::make_shared<std::vector<uint8_t>>(size_t(t_len) * size_t(n), 0);
    b.frame_groups = std::make_shared<std::vector<std::vector<int>>>(size_t(t_len));
    for (auto& r : b.stacked) {
        r.n_vertices = t_len * n;
        r.normalized = true;
    }
    b.stacked_merged.n_vertices = t_len * n;
    b.stacked_merged.normalized = true;

    auto union_rank = [&](int64_t id) {
        return int(std::lower_bound(union_ids.begin(), union_ids.end(), id) - union_ids.begin());
    };

    for (int t = 0; t < t_len; ++t) {
        const SceneGraph& f = frames[size_t(t)];
        int base = t * n;
        // local vertex index -> union vertex index
        std::vector<int> remap(size_t(f.n_vertices()));
        remap[0] = 0;
        for (int a = 0; a < f.n_agents; ++a) remap[size_t(1 + a)] = 1 + union_rank(f.agent_track_ids[size_t(a)]);
        for (int w = 0; w < n_waypoints; ++w)
            remap[size_t(1 + f.n_agents + w)] = 1 + b.n_agents + w;

        auto& group = (*b.frame_groups)[size_t(t)];
        for (int lv = 0; lv < f.n_vertices(); ++lv) {
            int uv = remap[size_t(lv)];
            (*b.mask)[size_t(base + uv)] = 1;
            for (int j = 0; j < 4; ++j) b.features.at(base + uv, j) = f.vertices.at(lv, j);
        }
        for (int uv = 0; uv < n; ++uv)
            if ((*b.mask)[size_t(base + uv)]) group.push_back(base + uv);
        for (int w = 0; w < n_waypoints; ++w)
            (*b.waypoint_rows)[size_t(base + 1 + b.n_agents + w)] = 1;

        for (int r = 0; r < kRelationCount; ++r)
            for (const Edge& e : f.relations[size_t(r)].edges)
                b.stacked[size_t(r)].edges.push_back(
                    {base + remap[size_t(e.src)], base + remap[size_t(e.dst)], e.w});
        for (const Edge& e : f.merged.edges)
            b.stacked_merged.edges.push_back(
                {base + remap[size_t(e.src)], base + remap[size_t(e.dst)], e.w});
    }
    return b;
}

}  // namespace sgcn
