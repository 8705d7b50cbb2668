#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <sgcn/tensor.hpp>

namespace sgcn {

// wrap to (-pi, pi]
inline double wrap_angle(double a) {
    a = std::fmod(a + M_PI, 2.0 * M_PI);
    if (a <= 0.0) a += 2.0 * M_PI;
    return a - M_PI;
}

struct LaneSegment {
    int64_t id = 0;
    std::vector<std::array<double, 2>> centerline;  // map frame, meters
    std::vector<int64_t> successor_ids;
    std::vector<int64_t> predecessor_ids;
};

struct Waypoint {
    double x = 0.0;
    double y = 0.0;
    double phi = 0.0;  // toward the next waypoint; last one copies its predecessor
    int64_t segment_id = 0;
    int index_in_segment = 0;
};

inline constexpr double kWaypointInterval = 3.0;

// Arc-length resampling at 0, interval, 2*interval, ...; the segment's final
// endpoint is always emitted even when the last gap is shorter than interval.
inline std::vector<Waypoint> resample_centerline(const LaneSegment& seg,
                                                 double interval = kWaypointInterval) {
    if (interval <= 0.0) throw std::invalid_argument("resample_centerline: interval must be > 0");
    const auto& pts = seg.centerline;
    if (pts.size() < 2)
        throw std::invalid_argument("resample_centerline: segment " + std::to_string(seg.id) +
                                    " needs at least 2 centerline points");
    std::vector<double> cum(pts.size(), 0.0);
    for (size_t i = 1; i < pts.size(); ++i) {
        double dx = pts[i][0] - pts[i - 1][0], dy = pts[i][1] - pts[i - 1][1];
        double d = std::hypot(dx, dy);
        if (d <= 1e-12)
            throw std::invalid_argument("resample_centerline: segment " + std::to_string(seg.id) +
                                        " has duplicate consecutive points");
        cum[i] = cum[i - 1] + d;
    }
    double total = cum.back();

    std::vector<double> stops;
    int k_max = int(std::floor((total + 1e-9) / interval));
    for (int k = 0; k <= k_max; ++k) stops.push_back(std::min(double(k) * interval, total));
    if (total - stops.back() > 1e-9) stops.push_back(total);

    std::vector<Waypoint> out;
    out.reserve(stops.size());
    size_t piece = 1;
    for (double s : stops) {
        while (piece + 1 < pts.size() && cum[piece] < s) ++piece;
        double seg_len = cum[piece] - cum[piece - 1];
        double a = (s - cum[piece - 1]) / seg_len;
        Waypoint w;
        w.x = pts[piece - 1][0] + a * (pts[piece][0] - pts[piece - 1][0]);
        w.y = pts[piece - 1][1] + a * (pts[piece][1] - pts[piece - 1][1]);
        w.segment_id = seg.id;
        w.index_in_segment = int(out.size());
        out.push_back(w);
    }
    for (size_t i = 0; i + 1 < out.size(); ++i)
        out[i].phi = std::atan2(out[i + 1].y - out[i].y, out[i + 1].x - out[i].x);
    out.back().phi = out.size() > 1 ? out[out.size() - 2].phi : 0.0;
    for (auto& w : out) w.phi = wrap_angle(w.phi);
    return out;
}

struct LaneGraph {
    std::vector<LaneSegment> segments;  // sorted by id
    std::vector<Waypoint> waypoints;    // canonical order: segment id, then index
    std::vector<int> first_waypoint;    // per segment, index into waypoints
    std::unordered_map<int64_t, size_t> segment_pos;

    size_t segment_at(int64_t id) const {
        auto it = segment_pos.find(id);
        if (it == segment_pos.end())
            throw std::invalid_argument("lane graph: unresolved segment id " + std::to_string(id));
        return it->second;
    }
    int n_waypoints() const { return int(waypoints.size()); }
};

inline LaneGraph build_lane_graph(std::vector<LaneSegment> segments,
                                  double interval = kWaypointInterval) {
    std::sort(segments.begin(), segments.end(),
              [](const LaneSegment& a, const LaneSegment& b) { return a.id < b.id; });
    LaneGraph g;
    g.segments = std::move(segments);
    for (size_t i = 0; i < g.segments.size(); ++i) {
        if (!g.segment_pos.emplace(g.segments[i].id, i).second)
            throw std::invalid_argument("lane graph: duplicate segment id " +
                                        std::to_string(g.segments[i].id));
    }
    for (const auto& seg : g.segments) {
        for (int64_t sid : seg.successor_ids) g.segment_at(sid);
        for (int64_t pid : seg.predecessor_ids) g.segment_at(pid);
        g.first_waypoint.push_back(int(g.waypoints.size()));
        auto wps = resample_centerline(seg, interval);
        g.waypoints.insert(g.waypoints.end(), wps.begin(), wps.end());
    }
    return g;
}

enum class Direction { suc, pre };

// Waypoint-indexed relation: within-segment chain edges plus last-of-segment to
// first-of-successor edges at forks. pre is the exact transpose of suc.
inline SparseRelation build_directional_relation(const LaneGraph& g, Direction dir) {
    SparseRelation rel;
    rel.n_vertices = g.n_waypoints();
    for (size_t si = 0; si < g.segments.size(); ++si) {
        int first = g.first_waypoint[si];
        int count = (si + 1 < g.segments.size() ? g.first_waypoint[si + 1] : g.n_waypoints()) - first;
        for (int i = 0; i + 1 < count; ++i) rel.edges.push_back({first + i, first + i + 1, 1.0});
        int last = first + count - 1;
        for (int64_t sid : g.segments[si].successor_ids) {
            size_t ti = g.segment_at(sid);
            rel.edges.push_back({last, g.first_waypoint[ti], 1.0});
        }
    }
    if (dir == Direction::pre)
        for (auto& e : rel.edges) std::swap(e.src, e.dst);
    rel.validate();
    return rel;
}

}  // namespace sgcn
