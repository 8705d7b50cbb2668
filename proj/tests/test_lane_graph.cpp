#include <sgcn/lane_graph.hpp>

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "testutil.hpp"

using namespace sgcn;
using Catch::Approx;

namespace {

LaneSegment straight(int64_t id, double x0, double y0, double x1, double y1) {
    LaneSegment s;
    s.id = id;
    s.centerline = {{x0, y0}, {x1, y1}};
    return s;
}

}  // namespace

TEST_CASE("wrap_angle maps into (-pi, pi]") {
    CHECK(wrap_angle(0.0) == Approx(0.0).margin(1e-15));
    CHECK(wrap_angle(M_PI) == Approx(M_PI));
    CHECK(wrap_angle(-M_PI) == Approx(M_PI));
    CHECK(wrap_angle(3.0 * M_PI / 2.0) == Approx(-M_PI / 2.0));
    CHECK(wrap_angle(-3.0 * M_PI / 2.0) == Approx(M_PI / 2.0));
    CHECK(wrap_angle(2.0 * M_PI) == Approx(0.0).margin(1e-12));
    CHECK(wrap_angle(7.0 * M_PI) == Approx(M_PI));
}

TEST_CASE("straight 9 m centerline resamples to four waypoints") {
    auto wps = resample_centerline(straight(1, 0, 0, 9, 0));
    REQUIRE(wps.size() == 4);
    for (int i = 0; i < 4; ++i) {
        CHECK(wps[size_t(i)].x == Approx(3.0 * i).margin(1e-12));
        CHECK(wps[size_t(i)].y == Approx(0.0).margin(1e-12));
        CHECK(wps[size_t(i)].phi == Approx(0.0).margin(1e-12));
        CHECK(wps[size_t(i)].segment_id == 1);
        CHECK(wps[size_t(i)].index_in_segment == i);
    }
}

TEST_CASE("2 m centerline keeps both endpoints") {
    auto wps = resample_centerline(straight(2, 0, 0, 2, 0));
    REQUIRE(wps.size() == 2);
    CHECK(wps[0].x == Approx(0.0).margin(1e-12));
    CHECK(wps[1].x == Approx(2.0));
}

TEST_CASE("7 m centerline appends the endpoint after the last full step") {
    auto wps = resample_centerline(straight(3, 0, 0, 7, 0));
    REQUIRE(wps.size() == 4);
    CHECK(wps[0].x == Approx(0.0).margin(1e-12));
    CHECK(wps[1].x == Approx(3.0));
    CHECK(wps[2].x == Approx(6.0));
    CHECK(wps[3].x == Approx(7.0));
}

TEST_CASE("exact multiple of the interval emits no duplicate endpoint") {
    auto wps = resample_centerline(straight(4, 0, 0, 3, 0));
    REQUIRE(wps.size() == 2);
    CHECK(wps[1].x == Approx(3.0));

    auto six = resample_centerline(straight(5, 0, 0, 6, 0));
    REQUIRE(six.size() == 3);
    CHECK(six[2].x == Approx(6.0));
}

TEST_CASE("headings point toward the next waypoint, last copies previous") {
    LaneSegment s;
    s.id = 9;
    s.centerline = {{0, 0}, {3, 0}, {3, 3}};
    auto wps = resample_centerline(s);
    REQUIRE(wps.size() == 3);
    CHECK(wps[0].x == Approx(0.0).margin(1e-12));
    CHECK(wps[1].x == Approx(3.0));
    CHECK(wps[1].y == Approx(0.0).margin(1e-12));
    CHECK(wps[2].x == Approx(3.0));
    CHECK(wps[2].y == Approx(3.0));
    CHECK(wps[0].phi == Approx(0.0).margin(1e-12));
    CHECK(wps[1].phi == Approx(M_PI / 2.0));
    CHECK(wps[2].phi == Approx(M_PI / 2.0));
}

TEST_CASE("westbound segment heading wraps to pi") {
    auto wps = resample_centerline(straight(6, 0, 0, -6, 0));
    REQUIRE(wps.size() == 3);
    for (const auto& w : wps) CHECK(w.phi == Approx(M_PI));
}

TEST_CASE("waypoint count and spacing on random straight segments") {
    Rng rng(31);
    int checked = 0;
    while (checked < 200) {
        double len = rng.uniform(0.5, 45.0);
        double frac = std::fmod(len, kWaypointInterval);
        if (frac < 1e-6 || kWaypointInterval - frac < 1e-6) continue;  // epsilon boundary
        double angle = rng.uniform(-M_PI, M_PI);
        auto wps = resample_centerline(
            straight(7, 0, 0, len * std::cos(angle), len * std::sin(angle)));
        size_t expect = size_t(std::floor(len / kWaypointInterval)) + 2;
        REQUIRE(wps.size() == expect);
        for (size_t i = 0; i + 1 < wps.size(); ++i) {
            double gap = std::hypot(wps[i + 1].x - wps[i].x, wps[i + 1].y - wps[i].y);
            double want = (i + 2 == wps.size()) ? frac : kWaypointInterval;
            CHECK(gap == Approx(want).margin(1e-9));
            CHECK(wrap_angle(wps[i].phi - angle) == Approx(0.0).margin(1e-9));
        }
        ++checked;
    }
}

TEST_CASE("collinear subdivision does not change the resampling") {
    auto a = resample_centerline(straight(8, 0, 0, 9, 0));
    LaneSegment sub;
    sub.id = 8;
    sub.centerline = {{0, 0}, {2, 0}, {5, 0}, {9, 0}};
    auto b = resample_centerline(sub);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].x == Approx(b[i].x).margin(1e-12));
        CHECK(a[i].y == Approx(b[i].y).margin(1e-12));
        CHECK(a[i].phi == Approx(b[i].phi).margin(1e-12));
    }
}

TEST_CASE("degenerate centerlines are rejected") {
    LaneSegment one;
    one.id = 1;
    one.centerline = {{0, 0}};
    CHECK_THROWS_AS(resample_centerline(one), std::invalid_argument);

    LaneSegment dup;
    dup.id = 2;
    dup.centerline = {{0, 0}, {0, 0}, {3, 0}};
    CHECK_THROWS_AS(resample_centerline(dup), std::invalid_argument);

    CHECK_THROWS_AS(resample_centerline(straight(3, 0, 0, 9, 0), 0.0), std::invalid_argument);
}

TEST_CASE("lane graph sorts segments by id and validates references") {
    std::vector<LaneSegment> segs = {straight(5, 20, 0, 26, 0), straight(2, 0, 0, 9, 0)};
    LaneGraph g = build_lane_graph(segs);
    REQUIRE(g.segments.size() == 2);
    CHECK(g.segments[0].id == 2);
    CHECK(g.segments[1].id == 5);
    CHECK(g.first_waypoint[0] == 0);
    CHECK(g.first_waypoint[1] == 4);  // 9 m segment contributes 4 waypoints
    CHECK(g.n_waypoints() == 7);
    CHECK(g.segment_at(5) == 1);
    CHECK_THROWS_AS(g.segment_at(99), std::invalid_argument);

    std::vector<LaneSegment> dup = {straight(1, 0, 0, 3, 0), straight(1, 5, 0, 8, 0)};
    CHECK_THROWS_AS(build_lane_graph(dup), std::invalid_argument);

    LaneSegment bad = straight(1, 0, 0, 3, 0);
    bad.successor_ids = {42};
    CHECK_THROWS_AS(build_lane_graph({bad}), std::invalid_argument);
}

TEST_CASE("suc relation on one chain is the shifted identity") {
    LaneGraph g = build_lane_graph({straight(1, 0, 0, 6, 0)});  // 3 waypoints
    SparseRelation suc = build_directional_relation(g, Direction::suc);
    auto m = testutil::dense_from_relation(suc);  // m[dst][src]
    std::vector<double> want = {0, 0, 0, 1, 0, 0, 0, 1, 0};
    REQUIRE(m.size() == want.size());
    for (size_t i = 0; i < m.size(); ++i) CHECK(m[i] == want[i]);
}

TEST_CASE("fork edges connect the last waypoint to each successor head") {
    LaneSegment a = straight(1, 0, 0, 9, 0);  // wps 0..3
    a.successor_ids = {2, 3};
    LaneSegment b = straight(2, 9, 0, 15, 0);  // 6 m, wps 4..6
    b.predecessor_ids = {1};
    LaneSegment c = straight(3, 9, 0, 9, 2);  // 2 m, wps 7..8
    c.predecessor_ids = {1};
    LaneGraph g = build_lane_graph({a, b, c});
    REQUIRE(g.n_waypoints() == 9);

    SparseRelation suc = build_directional_relation(g, Direction::suc);
    std::vector<std::pair<int, int>> got;
    for (const auto& e : suc.edges) {
        CHECK(e.w == 1.0);
        got.emplace_back(e.src, e.dst);
    }
    std::sort(got.begin(), got.end());
    std::vector<std::pair<int, int>> want = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {3, 7},
                                             {4, 5}, {5, 6}, {7, 8}};
    CHECK(got == want);

    SparseRelation pre = build_directional_relation(g, Direction::pre);
    auto ms = testutil::dense_from_relation(suc);
    auto mp = testutil::dense_from_relation(pre);
    size_t n = size_t(g.n_waypoints());
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) CHECK(mp[i * n + j] == ms[j * n + i]);
}

TEST_CASE("every waypoint has at most one within-segment successor") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<LaneSegment> segs;
        int n_segs = int(rng.uniform_int(1, 5));
        for (int i = 0; i < n_segs; ++i) {
            LaneSegment s = straight(i + 1, rng.uniform(-30, 30), rng.uniform(-30, 30),
                                     rng.uniform(-30, 30), rng.uniform(-30, 30));
            if (std::hypot(s.centerline[1][0] - s.centerline[0][0],
                           s.centerline[1][1] - s.centerline[0][1]) < 1.0)
                s.centerline[1][0] += 5.0;
            if (i + 1 < n_segs && rng.uniform() < 0.7) s.successor_ids = {int64_t(i + 2)};
            segs.push_back(s);
        }
        LaneGraph g = build_lane_graph(segs);
        SparseRelation suc = build_directional_relation(g, Direction::suc);
        std::vector<int> chain_out(size_t(g.n_waypoints()), 0);
        for (const auto& e : suc.edges) {
            REQUIRE(e.src >= 0);
            REQUIRE(e.dst < g.n_waypoints());
            ++chain_out[size_t(e.src)];
        }
        for (size_t si = 0; si < g.segments.size(); ++si) {
            int first = g.first_waypoint[si];
            int next = si + 1 < g.segments.size() ? g.first_waypoint[si + 1] : g.n_waypoints();
            for (int v = first; v + 1 < next; ++v) CHECK(chain_out[size_t(v)] == 1);
            CHECK(chain_out[size_t(next - 1)] == int(g.segments[si].successor_ids.size()));
        }
    }
}
