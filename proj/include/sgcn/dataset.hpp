#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgcn/evaluation.hpp"
#include "sgcn/lane_graph.hpp"
#include "sgcn/rng.hpp"
#include "sgcn/scene_graph.hpp"

namespace sgcn {

// ---- scenario classes ----

enum class ScenarioClass : int {
    no_scenario = 0,
    cut_in = 1,
    stationary_vehicle_in_lane = 2,
    ego_lane_change_right = 3,
    ego_lane_change_left = 4,
    right_turn_at_crossing = 5,
    left_turn_at_crossing = 6,
    straight_ahead_at_crossing = 7,
};

inline constexpr int kNumScenarioClasses = 8;

inline const char* scenario_class_name(int c) {
    static const char* const names[kNumScenarioClasses] = {
        "no-scenario",
        "cut-in",
        "stationary-vehicle-in-lane",
        "ego-lane-change-right",
        "ego-lane-change-left",
        "right-turn-at-crossing",
        "left-turn-at-crossing",
        "straight-ahead-at-crossing",
    };
    if (c < 0 || c >= kNumScenarioClasses)
        throw std::out_of_range("scenario class out of range: " + std::to_string(c));
    return names[c];
}

// ---- sequence types ----

// One observation frame. label is -1 when the frame has not been annotated.
struct FrameObs {
    double t = 0.0;
    EgoPose ego;
    std::vector<AgentState> agents;
    int label = -1;
};

struct Sequence {
    std::string id;
    std::string source;
    double hz = 4.0;
    std::vector<FrameObs> frames;
    std::vector<LaneSegment> lanes;

    bool labeled() const {
        for (const FrameObs& f : frames)
            if (f.label < 0) return false;
        return !frames.empty();
    }
};

inline void validate_sequence(const Sequence& s) {
    if (s.frames.empty()) throw std::invalid_argument("sequence " + s.id + " has no frames");
    if (!(s.hz > 0)) throw std::invalid_argument("sequence " + s.id + " has non-positive rate");
    double dt = 1.0 / s.hz;
    for (size_t i = 0; i < s.frames.size(); ++i) {
        const FrameObs& f = s.frames[i];
        if (i > 0) {
            double step = f.t - s.frames[i - 1].t;
            if (step <= 0.0 || std::fabs(step - dt) > 1e-6)
                throw std::invalid_argument("sequence " + s.id + " timestamps not uniform at " +
                                            std::to_string(s.hz) + " Hz near index " +
                                            std::to_string(i));
        }
        if (f.label > 7)
            throw std::invalid_argument("sequence " + s.id + " has label > 7");
        for (size_t a = 0; a < f.agents.size(); ++a)
            for (size_t b = a + 1; b < f.agents.size(); ++b)
                if (f.agents[a].track_id == f.agents[b].track_id)
                    throw std::invalid_argument("sequence " + s.id + " repeats track id " +
                                                std::to_string(f.agents[a].track_id) +
                                                " in frame " + std::to_string(i));
    }
    for (const LaneSegment& seg : s.lanes)
        if (seg.centerline.size() < 2)
            throw std::invalid_argument("sequence " + s.id + " lane " + std::to_string(seg.id) +
                                        " has fewer than two points");
}

// Extra checks for sequences that feed training: 4 Hz, fully labeled, at
// least one scenario frame, and a bounded length.
inline void validate_scenario_sequence(const Sequence& s) {
    validate_sequence(s);
    if (s.hz != 4.0) throw std::invalid_argument("sequence " + s.id + " is not at 4 Hz");
    if (!s.labeled()) throw std::invalid_argument("sequence " + s.id + " has unlabeled frames");
    bool any = false;
    for (const FrameObs& f : s.frames) any = any || f.label > 0;
    if (!any) throw std::invalid_argument("sequence " + s.id + " has no scenario frames");
    if (s.frames.size() < 8 || s.frames.size() > 92)
        throw std::invalid_argument("sequence " + s.id + " length " +
                                    std::to_string(s.frames.size()) +
                                    " outside the 8..92 frame range");
}

// ---- JSONL serialization ----

namespace detail {

inline void json_escape(std::string& out, const std::string& s) {
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default:
                if (uint8_t(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", int(uint8_t(c)));
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
}

}  // namespace detail

// One sequence as a single JSON line with a fixed field order.
inline std::string sequence_to_json(const Sequence& s) {
    using detail::fmt_g9;
    std::string o = "{\"id\":\"";
    detail::json_escape(o, s.id);
    o += "\",\"source\":\"";
    detail::json_escape(o, s.source);
    o += "\",\"hz\":" + fmt_g9(s.hz) + ",\"frames\":[";
    for (size_t i = 0; i < s.frames.size(); ++i) {
        const FrameObs& f = s.frames[i];
        if (i) o += ',';
        o += "{\"t\":" + fmt_g9(f.t) + ",\"ego\":{\"x\":" + fmt_g9(f.ego.x) +
             ",\"y\":" + fmt_g9(f.ego.y) + ",\"phi\":" + fmt_g9(f.ego.phi) +
             ",\"v\":" + fmt_g9(f.ego.v) + "},\"agents\":[";
        for (size_t a = 0; a < f.agents.size(); ++a) {
            const AgentState& ag = f.agents[a];
            if (a) o += ',';
            o += "{\"id\":" + std::to_string(ag.track_id) + ",\"x\":" + fmt_g9(ag.x) +
                 ",\"y\":" + fmt_g9(ag.y) + ",\"phi\":" + fmt_g9(ag.phi) +
                 ",\"v\":" + fmt_g9(ag.v) + "}";
        }
        o += "]";
        if (f.label >= 0) o += ",\"label\":" + std::to_string(f.label);
        o += "}";
    }
    o += "],\"lanes\":[";
    for (size_t l = 0; l < s.lanes.size(); ++l) {
        const LaneSegment& seg = s.lanes[l];
        if (l) o += ',';
        o += "{\"id\":" + std::to_string(seg.id) + ",\"pts\":[";
        for (size_t p = 0; p < seg.centerline.size(); ++p) {
            if (p) o += ',';
            o += "[" + fmt_g9(seg.centerline[p][0]) + "," + fmt_g9(seg.centerline[p][1]) + "]";
        }
        o += "],\"suc\":[";
        for (size_t p = 0; p < seg.successor_ids.size(); ++p) {
            if (p) o += ',';
            o += std::to_string(seg.successor_ids[p]);
        }
        o += "],\"pre\":[";
        for (size_t p = 0; p < seg.predecessor_ids.size(); ++p) {
            if (p) o += ',';
            o += std::to_string(seg.predecessor_ids[p]);
        }
        o += "]}";
    }
    o += "]}";
    return o;
}

inline Sequence sequence_from_json(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    Sequence s;
    s.id = j.at("id").get<std::string>();
    s.source = j.at("source").get<std::string>();
    s.hz = j.at("hz").get<double>();
    for (const nlohmann::json& jf : j.at("frames")) {
        FrameObs f;
        f.t = jf.at("t").get<double>();
        const nlohmann::json& je = jf.at("ego");
        f.ego = EgoPose{je.at("x").get<double>(), je.at("y").get<double>(),
                        je.at("phi").get<double>(), je.at("v").get<double>()};
        for (const nlohmann::json& ja : jf.at("agents"))
            f.agents.push_back(AgentState{ja.at("id").get<int64_t>(), ja.at("x").get<double>(),
                                          ja.at("y").get<double>(), ja.at("phi").get<double>(),
                                          ja.at("v").get<double>()});
        if (jf.contains("label")) f.label = jf.at("label").get<int>();
        s.frames.push_back(std::move(f));
    }
    for (const nlohmann::json& jl : j.at("lanes")) {
        LaneSegment seg;
        seg.id = jl.at("id").get<int64_t>();
        for (const nlohmann::json& jp : jl.at("pts"))
            seg.centerline.push_back({jp.at(0).get<double>(), jp.at(1).get<double>()});
        for (const nlohmann::json& ji : jl.at("suc")) seg.successor_ids.push_back(ji.get<int64_t>());
        for (const nlohmann::json& ji : jl.at("pre"))
            seg.predecessor_ids.push_back(ji.get<int64_t>());
        s.lanes.push_back(std::move(seg));
    }
    validate_sequence(s);
    return s;
}

inline void write_jsonl(const std::vector<Sequence>& seqs, const std::string& path) {
    std::ofstream f;
    detail::open_or_throw(f, path);
    for (const Sequence& s : seqs) f << sequence_to_json(s) << '\n';
}

inline std::vector<Sequence> read_jsonl(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for reading");
    std::vector<Sequence> out;
    std::string line;
    size_t n = 0;
    while (std::getline(f, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            out.push_back(sequence_from_json(line));
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

// ---- resampling to 4 Hz ----

inline Sequence resample_to_4hz(const Sequence& src) {
    validate_sequence(src);
    if (src.hz != 2.0 && src.hz != 4.0 && src.hz != 10.0)
        throw std::invalid_argument("sequence " + src.id + ": can only resample 2, 4 or 10 Hz");
    if (src.hz == 4.0) return src;

    Sequence out;
    out.id = src.id;
    out.source = src.source;
    out.hz = 4.0;
    out.lanes = src.lanes;

    double t0 = src.frames.front().t;
    double t_last = src.frames.back().t;
    size_t i = 0;
    for (int k = 0;; ++k) {
        double tk = t0 + 0.25 * k;
        if (tk > t_last + 1e-9) break;
        while (i + 1 < src.frames.size() && src.frames[i + 1].t <= tk + 1e-9) ++i;
        const FrameObs& lo = src.frames[i];
        FrameObs f;
        f.t = tk;
        if (std::fabs(lo.t - tk) <= 1e-9) {
            f.ego = lo.ego;
            f.agents = lo.agents;
            f.label = lo.label;
        } else {
            const FrameObs& hi = src.frames[i + 1];
            double a = (tk - lo.t) / (hi.t - lo.t);
            auto lerp = [a](double u, double v) { return u + a * (v - u); };
            f.ego.x = lerp(lo.ego.x, hi.ego.x);
            f.ego.y = lerp(lo.ego.y, hi.ego.y);
            f.ego.phi = wrap_angle(lo.ego.phi + a * wrap_angle(hi.ego.phi - lo.ego.phi));
            f.ego.v = lerp(lo.ego.v, hi.ego.v);
            for (const AgentState& ag : lo.agents) {
                const AgentState* match = nullptr;
                for (const AgentState& bg : hi.agents)
                    if (bg.track_id == ag.track_id) match = &bg;
                if (!match) {
                    f.agents.push_back(ag);
                } else {
                    f.agents.push_back(AgentState{
                        ag.track_id, lerp(ag.x, match->x), lerp(ag.y, match->y),
                        wrap_angle(ag.phi + a * wrap_angle(match->phi - ag.phi)),
                        lerp(ag.v, match->v)});
                }
            }
            for (const AgentState& bg : hi.agents) {
                bool seen = false;
                for (const AgentState& ag : lo.agents) seen = seen || ag.track_id == bg.track_id;
                if (!seen) f.agents.push_back(bg);
            }
            f.label = tk - lo.t + 1e-9 >= hi.t - tk ? hi.label : lo.label;
        }
        out.frames.push_back(std::move(f));
    }
    return out;
}

// ---- scenario extraction ----

// Cuts one sequence per maximal non-zero label run, padded with 0..8 context
// frames drawn per side, clipped at the sequence bounds.
inline std::vector<Sequence> extract_scenarios(const Sequence& src, uint64_t seed) {
    validate_sequence(src);
    if (!src.labeled())
        throw std::invalid_argument("sequence " + src.id + " must be fully labeled");
    Rng rng(seed);
    std::vector<Sequence> out;
    size_t n = src.frames.size();
    size_t cut = 0;
    for (size_t s = 0; s < n;) {
        if (src.frames[s].label == 0) {
            ++s;
            continue;
        }
        size_t e = s;
        while (e + 1 < n && src.frames[e + 1].label == src.frames[s].label) ++e;
        int left = rng.uniform_int(0, 8);
        int right = rng.uniform_int(0, 8);
        size_t lo = s >= size_t(left) ? s - size_t(left) : 0;
        size_t hi = std::min(n - 1, e + size_t(right));
        Sequence cutseq;
        cutseq.id = src.id + "#" + std::to_string(++cut);
        cutseq.source = src.source;
        cutseq.hz = src.hz;
        cutseq.lanes = src.lanes;
        cutseq.frames.assign(src.frames.begin() + long(lo), src.frames.begin() + long(hi) + 1);
        out.push_back(std::move(cutseq));
        s = e + 1;
    }
    return out;
}

// ---- synthetic generator ----

struct GeneratorKnobs {
    double noise_sigma = 0.25;
    int clutter_max = 2;
    double curvature_max = 1.0 / 30.0;  // two-lane roads bend with radius >= 30 m
    double lane_width = 3.5;
    double road_length = 36.0;
    double ego_speed = 1.6;
    double approach_length = 12.0;
    double exit_length = 9.0;
    double crossing_half_min = 5.0;
    double crossing_half_max = 7.0;
    int context_pad_min = 2;
    int context_pad_max = 6;
    int context_len_min = 12;
    int context_len_max = 24;
};

// Target labeled duration per class, seconds.
struct DurationStats {
    double mean, sd;
};

inline constexpr std::array<DurationStats, kNumScenarioClasses> kScenarioDurations = {{
    {0.0, 0.0},
    {4.7, 1.8},
    {8.1, 3.8},
    {4.3, 1.5},
    {4.6, 1.2},
    {7.0, 2.6},
    {6.7, 2.4},
    {5.1, 2.0},
}};

namespace detail {

inline double draw_duration(Rng& rng, int cls) {
    const DurationStats& d = kScenarioDurations[size_t(cls)];
    double off = rng.normal(0.0, d.sd * 0.5);
    return d.mean + std::clamp(off, -d.sd, d.sd);
}

// Constant-curvature road frame: world pose from ego-lane arc length s and
// leftward offset d. kappa = 0 degrades to a straight road along +x.
struct ArcRoad {
    double kappa = 0.0;

    std::array<double, 3> at(double s, double d) const {  // x, y, heading
        if (kappa == 0.0) return {s, d, 0.0};
        double r = 1.0 / kappa;
        double a = kappa * s;
        return {(r - d) * std::sin(a), r - (r - d) * std::cos(a), a};
    }
    // ego-lane arc consumed per second by a vehicle holding offset d at speed v
    double arc_rate(double v, double d) const { return v / std::abs(1.0 - d * kappa); }

    std::vector<LaneSegment> lanes(double length, double lane_width, int side) const {
        auto line = [&](int64_t id, double d) {
            LaneSegment seg;
            seg.id = id;
            int m = std::max(1, int(std::ceil(length / 2.0)));
            for (int i = 0; i <= m; ++i) {
                std::array<double, 3> p = at(length * i / m, d);
                seg.centerline.push_back({p[0], p[1]});
            }
            return seg;
        };
        return {line(1, 0.0), line(2, side * lane_width)};
    }
};

inline double draw_curvature(Rng& rng, const GeneratorKnobs& k) {
    bool straight = rng.uniform() < 0.2;
    double mag = rng.uniform(0.4, 1.0) * k.curvature_max;
    double sgn = rng.uniform() < 0.5 ? -1.0 : 1.0;
    return straight ? 0.0 : sgn * mag;
}

// A car that keeps its lane at constant speed for the whole sequence.
struct ClutterCar {
    int64_t id;
    double s0, d, v;
};

// Piecewise-linear path with positions, headings and cumulative arc length.
struct PolyPath {
    std::vector<std::array<double, 2>> pts;
    std::vector<double> s;

    void build() {
        s.assign(pts.size(), 0.0);
        for (size_t i = 1; i < pts.size(); ++i)
            s[i] = s[i - 1] + std::hypot(pts[i][0] - pts[i - 1][0], pts[i][1] - pts[i - 1][1]);
    }
    double length() const { return s.back(); }
    void at(double arc, double* x, double* y, double* phi) const {
        arc = std::clamp(arc, 0.0, s.back());
        size_t i = 1;
        while (i + 1 < pts.size() && s[i] < arc) ++i;
        double seg = s[i] - s[i - 1];
        double a = seg > 0 ? (arc - s[i - 1]) / seg : 0.0;
        *x = pts[i - 1][0] + a * (pts[i][0] - pts[i - 1][0]);
        *y = pts[i - 1][1] + a * (pts[i][1] - pts[i - 1][1]);
        *phi = std::atan2(pts[i][1] - pts[i - 1][1], pts[i][0] - pts[i - 1][0]);
    }
};

inline void add_position_noise(Sequence& s, Rng& rng, double sigma) {
    if (sigma <= 0) return;
    for (FrameObs& f : s.frames) {
        f.ego.x += rng.normal(0.0, sigma);
        f.ego.y += rng.normal(0.0, sigma);
        for (AgentState& a : f.agents) {
            a.x += rng.normal(0.0, sigma);
            a.y += rng.normal(0.0, sigma);
        }
    }
}

inline Sequence straight_road_scenario(int cls, uint64_t seed, const GeneratorKnobs& k) {
    Rng rng(derive_seed(seed, uint64_t(cls)));
    int side = cls == 3 ? -1 : cls == 4 ? 1 : (rng.uniform() < 0.5 ? -1 : 1);
    int n_lead = rng.uniform_int(k.context_pad_min, k.context_pad_max);
    int n_out = rng.uniform_int(k.context_pad_min, k.context_pad_max);
    double dur = draw_duration(rng, cls);
    int n_scen = std::max(1, int(std::llround(dur * 4.0)));
    double d = n_scen * 0.25;
    double v_e = k.ego_speed + rng.uniform(-0.15, 0.15);
    double x0 = rng.uniform(1.0, 3.0);
    double lw = k.lane_width;
    double t_lead = n_lead * 0.25;
    ArcRoad road{draw_curvature(rng, k)};

    Sequence s;
    s.id = "syn-c" + std::to_string(cls) + "-" + std::to_string(seed);
    s.source = "synthetic";
    s.hz = 4.0;
    s.lanes = road.lanes(k.road_length, lw, side);

    // Benign traffic; keeps its lane at constant speed, never stationary.
    std::vector<ClutterCar> extra;
    int n = n_lead + n_scen + n_out;
    if (cls == 1) {
        double v_a = v_e + rng.uniform(0.3, 0.7);
        double dx0 = rng.uniform(2.0, 5.0);
        double lat_v = lw / d;
        double s_a = x0 + dx0;
        for (int i = 0; i < n; ++i) {
            double t = 0.25 * i;
            FrameObs f;
            f.t = t;
            std::array<double, 3> e = road.at(x0 + v_e * t, 0.0);
            f.ego = EgoPose{e[0], e[1], e[2], v_e};
            double da, dd;
            if (i < n_lead) {
                da = side * lw;
                dd = 0.0;
            } else if (i < n_lead + n_scen) {
                da = side * lw * (1.0 - (t - t_lead) / d);
                dd = -side * lat_v;
                f.label = 1;
            } else {
                da = 0.0;
                dd = 0.0;
            }
            if (f.label < 0) f.label = 0;
            std::array<double, 3> p = road.at(s_a, da);
            f.agents.push_back(AgentState{1, p[0], p[1], wrap_angle(p[2] + std::atan2(dd, v_a)),
                                          std::hypot(v_a, dd)});
            s.frames.push_back(std::move(f));
            s_a += road.arc_rate(v_a, da) * 0.25;
        }
        if (k.clutter_max >= 1)
            extra.push_back(
                ClutterCar{2, x0 + rng.uniform(18.0, 26.0), 0.0, v_e + rng.uniform(-0.1, 0.3)});
        if (k.clutter_max >= 2 && rng.uniform() < 0.5)
            extra.push_back(ClutterCar{3, x0 + rng.uniform(-12.0, -4.0), side * lw,
                                       v_e + rng.uniform(-0.2, 0.5)});
    } else if (cls == 2) {
        double s_park = x0 + 15.0 + v_e * t_lead - 1e-6;
        int depart = n_lead + n_scen;
        double s_e = x0, ev = v_e;
        for (int i = 0; i < n; ++i) {
            double t = 0.25 * i;
            FrameObs f;
            f.t = t;
            std::array<double, 3> e = road.at(s_e, 0.0);
            f.ego = EgoPose{e[0], e[1], e[2], ev};
            double gap = s_park - s_e;
            f.label = (gap <= 15.0 && i < depart) ? 2 : 0;
            double s_car = s_park, v_car = 0.0;
            if (i >= depart) {
                double td = t - depart * 0.25;
                s_car = s_park + 0.75 * td * td;
                v_car = 1.5 * td;
            }
            std::array<double, 3> p = road.at(s_car, 0.0);
            f.agents.push_back(AgentState{1, p[0], p[1], p[2], v_car});
            s.frames.push_back(std::move(f));
            if (gap < 6.0) ev = std::max(0.0, ev - 1.2 * 0.25);
            s_e += ev * 0.25;
        }
        if (k.clutter_max >= 1)
            extra.push_back(
                ClutterCar{2, s_park + rng.uniform(8.0, 14.0), 0.0, v_e + rng.uniform(0.0, 0.4)});
        if (k.clutter_max >= 2 && rng.uniform() < 0.5)
            extra.push_back(ClutterCar{3, x0 + rng.uniform(-10.0, 20.0), side * lw,
                                       v_e * rng.uniform(0.8, 1.3)});
    } else {
        double lat_v = lw / d;
        double amb_dx = rng.uniform(10.0, 14.0);
        double s_e = x0, s_a = x0 + amb_dx;
        for (int i = 0; i < n; ++i) {
            double t = 0.25 * i;
            FrameObs f;
            f.t = t;
            double de, dd;
            if (i < n_lead) {
                de = 0.0;
                dd = 0.0;
            } else if (i < n_lead + n_scen) {
                de = side * lw * (t - t_lead) / d;
                dd = side * lat_v;
                f.label = cls;
            } else {
                de = side * lw;
                dd = 0.0;
            }
            if (f.label < 0) f.label = 0;
            std::array<double, 3> e = road.at(s_e, de);
            f.ego = EgoPose{e[0], e[1], wrap_angle(e[2] + std::atan2(dd, v_e)),
                            std::hypot(v_e, dd)};
            std::array<double, 3> p = road.at(s_a, side * lw);
            f.agents.push_back(AgentState{1, p[0], p[1], p[2], v_e});
            s.frames.push_back(std::move(f));
            s_e += road.arc_rate(v_e, de) * 0.25;
            s_a += road.arc_rate(v_e, side * lw) * 0.25;
        }
        if (k.clutter_max >= 1)
            extra.push_back(
                ClutterCar{2, x0 + rng.uniform(16.0, 24.0), 0.0, v_e + rng.uniform(-0.1, 0.3)});
        if (k.clutter_max >= 2 && rng.uniform() < 0.5)
            extra.push_back(ClutterCar{3, x0 + rng.uniform(-12.0, -5.0), side * lw,
                                       v_e + rng.uniform(-0.2, 0.4)});
    }
    for (FrameObs& f : s.frames)
        for (const ClutterCar& c : extra) {
            std::array<double, 3> p = road.at(c.s0 + road.arc_rate(c.v, c.d) * f.t, c.d);
            f.agents.push_back(AgentState{c.id, p[0], p[1], p[2], c.v});
        }
    add_position_noise(s, rng, k.noise_sigma);
    return s;
}

inline Sequence crossing_scenario(int cls, uint64_t seed, const GeneratorKnobs& k) {
    Rng rng(derive_seed(seed, uint64_t(cls)));
    double r = rng.uniform(k.crossing_half_min, k.crossing_half_max);
    int n_lead = rng.uniform_int(k.context_pad_min, k.context_pad_max);
    int n_out = rng.uniform_int(k.context_pad_min, k.context_pad_max);
    double dur = draw_duration(rng, cls);
    int n_scen = std::max(1, int(std::llround(dur * 4.0)));
    double d = n_scen * 0.25;
    double A = k.approach_length, E = k.exit_length;

    auto arc = [r](double cy, double th0, double th1) {
        std::vector<std::array<double, 2>> pts;
        const int m = 6;
        for (int i = 0; i <= m; ++i) {
            double th = th0 + (th1 - th0) * i / m;
            pts.push_back({-r + r * std::cos(th), cy + r * std::sin(th)});
        }
        return pts;
    };
    const double pi = 3.14159265358979323846;
    std::vector<std::array<double, 2>> right_pts = arc(-r, pi / 2, 0.0);
    std::vector<std::array<double, 2>> left_pts = arc(r, -pi / 2, 0.0);

    Sequence s;
    s.id = "syn-c" + std::to_string(cls) + "-" + std::to_string(seed);
    s.source = "synthetic";
    s.hz = 4.0;
    s.lanes.push_back(LaneSegment{1, {{-r - A, 0.0}, {-r, 0.0}}, {2, 3, 4}, {}});
    s.lanes.push_back(LaneSegment{2, right_pts, {5}, {1}});
    s.lanes.push_back(LaneSegment{3, {{-r, 0.0}, {r, 0.0}}, {6}, {1}});
    s.lanes.push_back(LaneSegment{4, left_pts, {7}, {1}});
    s.lanes.push_back(LaneSegment{5, {{0.0, -r}, {0.0, -r - E}}, {}, {2}});
    s.lanes.push_back(LaneSegment{6, {{r, 0.0}, {r + E, 0.0}}, {}, {3}});
    s.lanes.push_back(LaneSegment{7, {{0.0, r}, {0.0, r + E}}, {}, {4}});

    PolyPath path;
    path.pts.push_back({-r - A, 0.0});
    path.pts.push_back({-r, 0.0});
    if (cls == 5) {
        path.pts.insert(path.pts.end(), right_pts.begin() + 1, right_pts.end());
        path.pts.push_back({0.0, -r - E});
    } else if (cls == 6) {
        path.pts.insert(path.pts.end(), left_pts.begin() + 1, left_pts.end());
        path.pts.push_back({0.0, r + E});
    } else {
        path.pts.push_back({r, 0.0});
        path.pts.push_back({r + E, 0.0});
    }
    path.build();

    double inside = cls == 7 ? 2.0 * r : 0.0;
    if (cls != 7) {
        for (size_t i = 1; i < (cls == 5 ? right_pts : left_pts).size(); ++i) {
            const auto& pts = cls == 5 ? right_pts : left_pts;
            inside += std::hypot(pts[i][0] - pts[i - 1][0], pts[i][1] - pts[i - 1][1]);
        }
    }
    double v = inside / d;
    double s_enter = A;
    double s0 = s_enter - v * (n_lead * 0.25);
    if (s0 < 0) s0 = 0;

    double amb_x0 = r + 8.0 + rng.uniform(0.0, 4.0);
    int n = n_lead + n_scen + n_out;
    for (int i = 0; i < n; ++i) {
        double t = 0.25 * i;
        double arc_pos = s0 + v * t;
        FrameObs f;
        f.t = t;
        double x, y, phi;
        path.at(arc_pos, &x, &y, &phi);
        f.ego = EgoPose{x, y, phi, v};
        f.label = (arc_pos >= s_enter - 1e-9 && arc_pos < s_enter + inside - 1e-9) ? cls : 0;
        f.agents.push_back(AgentState{1, amb_x0 - 2.0 * t, k.lane_width, pi, 2.0});
        s.frames.push_back(std::move(f));
    }
    if (k.clutter_max >= 1) {
        // Parked car at a junction corner, off every lane.
        double cx = r + rng.uniform(1.5, 3.5);
        double cy = r + rng.uniform(1.5, 3.5);
        if (rng.uniform() < 0.5) cy = -cy;
        for (FrameObs& f : s.frames) f.agents.push_back(AgentState{2, cx, cy, 0.0, 0.0});
    }
    add_position_noise(s, rng, k.noise_sigma);
    return s;
}

}  // namespace detail

inline Sequence generate_synthetic(int scenario_class, uint64_t seed,
                                   const GeneratorKnobs& knobs = GeneratorKnobs{}) {
    if (scenario_class < 1 || scenario_class > 7)
        throw std::invalid_argument("generate_synthetic: class must be 1..7");
    Sequence s = scenario_class <= 4 ? detail::straight_road_scenario(scenario_class, seed, knobs)
                                     : detail::crossing_scenario(scenario_class, seed, knobs);
    validate_scenario_sequence(s);
    return s;
}

// All-zero-labeled drive used as negative material. Variants cover plain traffic,
// a parked car in the adjacent lane, and a slow car far ahead in the ego lane.
inline Sequence generate_context(uint64_t seed, const GeneratorKnobs& knobs = GeneratorKnobs{}) {
    Rng rng(derive_seed(seed, 0));
    int side = rng.uniform() < 0.5 ? -1 : 1;
    int n = rng.uniform_int(knobs.context_len_min, knobs.context_len_max);
    double v_e = knobs.ego_speed + rng.uniform(-0.15, 0.15);
    double x0 = rng.uniform(1.0, 3.0);
    double lw = knobs.lane_width;
    detail::ArcRoad road{detail::draw_curvature(rng, knobs)};

    double a_s0, a_d, v_a;
    int variant = rng.uniform_int(0, 2);
    if (variant == 0) {
        a_s0 = x0 + rng.uniform(-8.0, 12.0);
        a_d = side * lw;
        v_a = v_e + rng.uniform(-0.3, 0.3);
    } else if (variant == 1) {
        a_s0 = x0 + rng.uniform(6.0, 16.0);
        a_d = side * lw;
        v_a = 0.0;
    } else {
        a_s0 = x0 + rng.uniform(17.0, 26.0);
        a_d = 0.0;
        v_a = v_e + rng.uniform(0.0, 0.3);
    }
    bool trail = knobs.clutter_max >= 2 && rng.uniform() < 0.5;
    double t_s0 = x0 + rng.uniform(-14.0, -6.0);
    double t_v = v_e + rng.uniform(-0.2, 0.2);

    Sequence s;
    s.id = "syn-ctx-" + std::to_string(seed);
    s.source = "synthetic";
    s.hz = 4.0;
    s.lanes = road.lanes(knobs.road_length, lw, side);
    for (int i = 0; i < n; ++i) {
        double t = 0.25 * i;
        FrameObs f;
        f.t = t;
        std::array<double, 3> e = road.at(x0 + v_e * t, 0.0);
        f.ego = EgoPose{e[0], e[1], e[2], v_e};
        f.label = 0;
        std::array<double, 3> p = road.at(a_s0 + road.arc_rate(v_a, a_d) * t, a_d);
        f.agents.push_back(AgentState{1, p[0], p[1], p[2], v_a});
        if (trail) {
            std::array<double, 3> q = road.at(t_s0 + t_v * t, 0.0);
            f.agents.push_back(AgentState{2, q[0], q[1], q[2], t_v});
        }
        s.frames.push_back(std::move(f));
    }
    detail::add_position_noise(s, rng, knobs.noise_sigma);
    validate_sequence(s);
    return s;
}

// ---- dataset split ----

// Class of a sequence for stratification: its first non-zero label, else 0.
inline int sequence_scenario_class(const Sequence& s) {
    for (const FrameObs& f : s.frames)
        if (f.label > 0) return f.label;
    return 0;
}

struct SplitResult {
    std::vector<size_t> train, val;
    std::vector<std::string> warnings;
};

inline SplitResult split_dataset(const std::vector<Sequence>& seqs, double ratio, uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw std::invalid_argument("split ratio must be in (0, 1)");
    std::array<std::vector<size_t>, kNumScenarioClasses> by_class;
    for (size_t i = 0; i < seqs.size(); ++i)
        by_class[size_t(sequence_scenario_class(seqs[i]))].push_back(i);

    Rng rng(seed);
    SplitResult out;
    for (int c = 0; c < kNumScenarioClasses; ++c) {
        std::vector<size_t>& idx = by_class[size_t(c)];
        if (idx.empty()) continue;
        if (idx.size() == 1) {
            out.train.push_back(idx[0]);
            out.warnings.push_back(std::string("class ") + scenario_class_name(c) +
                                   " has a single sequence; keeping it in the training split");
            continue;
        }
        rng.shuffle(idx);
        size_t n_train = size_t(std::llround(ratio * double(idx.size())));
        n_train = std::clamp(n_train, size_t(1), idx.size() - 1);
        for (size_t i = 0; i < idx.size(); ++i)
            (i < n_train ? out.train : out.val).push_back(idx[i]);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    return out;
}

// ---- manifest ----

struct ClassStats {
    int64_t frames = 0;
    int64_t instances = 0;
    double mean_duration_s = 0.0;
    double sd_duration_s = 0.0;
};

struct DatasetManifest {
    std::vector<std::string> train_ids, val_ids;
    std::array<ClassStats, kNumScenarioClasses> per_class;
};

inline DatasetManifest build_manifest(const std::vector<Sequence>& seqs,
                                      const SplitResult& split) {
    DatasetManifest m;
    for (size_t i : split.train) m.train_ids.push_back(seqs[i].id);
    for (size_t i : split.val) m.val_ids.push_back(seqs[i].id);
    std::array<std::vector<double>, kNumScenarioClasses> durations;
    for (const Sequence& s : seqs) {
        size_t n = s.frames.size();
        for (size_t f = 0; f < n;) {
            int c = s.frames[f].label;
            if (c < 0) throw std::invalid_argument("sequence " + s.id + " has unlabeled frames");
            size_t e = f;
            while (e + 1 < n && s.frames[e + 1].label == c) ++e;
            m.per_class[size_t(c)].frames += int64_t(e - f + 1);
            if (c > 0) {
                m.per_class[size_t(c)].instances += 1;
                durations[size_t(c)].push_back(double(e - f + 1) / s.hz);
            }
            f = e + 1;
        }
    }
    for (int c = 1; c < kNumScenarioClasses; ++c) {
        const std::vector<double>& d = durations[size_t(c)];
        if (d.empty()) continue;
        double mean = 0;
        for (double v : d) mean += v;
        mean /= double(d.size());
        double var = 0;
        for (double v : d) var += (v - mean) * (v - mean);
        m.per_class[size_t(c)].mean_duration_s = mean;
        m.per_class[size_t(c)].sd_duration_s =
            d.size() > 1 ? std::sqrt(var / double(d.size() - 1)) : 0.0;
    }
    return m;
}

inline std::string manifest_to_json(const DatasetManifest& m) {
    using detail::fmt_g9;
    std::string o = "{\"train\":[";
    for (size_t i = 0; i < m.train_ids.size(); ++i) {
        if (i) o += ',';
        o += '"';
        detail::json_escape(o, m.train_ids[i]);
        o += '"';
    }
    o += "],\"val\":[";
    for (size_t i = 0; i < m.val_ids.size(); ++i) {
        if (i) o += ',';
        o += '"';
        detail::json_escape(o, m.val_ids[i]);
        o += '"';
    }
    o += "],\"classes\":[";
    for (int c = 0; c < kNumScenarioClasses; ++c) {
        const ClassStats& st = m.per_class[size_t(c)];
        if (c) o += ',';
        o += "{\"class\":" + std::to_string(c) + ",\"name\":\"" + scenario_class_name(c) +
             "\",\"frames\":" + std::to_string(st.frames) +
             ",\"instances\":" + std::to_string(st.instances) +
             ",\"mean_duration_s\":" + fmt_g9(st.mean_duration_s) +
             ",\"sd_duration_s\":" + fmt_g9(st.sd_duration_s) + "}";
    }
    o += "]}";
    return o;
}

inline void write_manifest_json(const DatasetManifest& m, const std::string& path) {
    std::ofstream f;
    detail::open_or_throw(f, path);
    f << manifest_to_json(m) << '\n';
}

// ---- bridge to the model ----

inline SequenceBatch sequence_to_batch(const Sequence& s, const SceneGraphOptions& opt) {
    validate_sequence(s);
    LaneGraph lg = build_lane_graph(s.lanes);
    std::vector<SceneGraph> graphs;
    std::vector<int> labels;
    for (const FrameObs& f : s.frames) {
        if (f.label < 0)
            throw std::invalid_argument("sequence " + s.id + " has unlabeled frames");
        graphs.push_back(build_scene_graph(f.ego, f.agents, lg, opt));
        labels.push_back(f.label);
    }
    return assemble_sequence(graphs, labels);
}

inline std::vector<SequenceBatch> batches_for(const std::vector<Sequence>& seqs,
                                              const std::vector<size_t>& idx,
                                              const SceneGraphOptions& opt) {
    std::vector<SequenceBatch> out;
    out.reserve(idx.size());
    for (size_t i : idx) out.push_back(sequence_to_batch(seqs[i], opt));
    return out;
}

}  // namespace sgcn
