#include <sgcn/evaluation.hpp>

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "testutil.hpp"

using namespace sgcn;
using Catch::Approx;

namespace {

std::vector<int> runs(std::initializer_list<std::pair<int, int>> parts) {
    std::vector<int> out;
    for (auto [cls, len] : parts) out.insert(out.end(), size_t(len), cls);
    return out;
}

std::vector<int> random_labels(Rng& rng, int len, int max_class) {
    std::vector<int> out(size_t(len), 0);
    for (auto& v : out) v = int(rng.uniform_int(0, max_class));
    return out;
}

}  // namespace

TEST_CASE("segmentize produces maximal covering runs") {
    auto segs = segmentize({0, 0, 1, 1, 0});
    REQUIRE(segs.size() == 3);
    CHECK(segs[0].class_id == 0);
    CHECK(segs[0].start == 0);
    CHECK(segs[0].end == 1);
    CHECK(segs[1].class_id == 1);
    CHECK(segs[1].start == 2);
    CHECK(segs[1].end == 3);
    CHECK(segs[2].class_id == 0);
    CHECK(segs[2].start == 4);
    CHECK(segs[2].end == 4);

    CHECK(segmentize({5, 5, 5}).size() == 1);
    CHECK(segmentize({1, 0, 1}).size() == 3);
    CHECK_THROWS_AS(segmentize({}), std::invalid_argument);

    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        auto labels = random_labels(rng, int(rng.uniform_int(1, 40)), 3);
        auto s = segmentize(labels);
        int covered = 0;
        for (size_t i = 0; i < s.size(); ++i) {
            CHECK(s[i].start <= s[i].end);
            CHECK(s[i].start == covered);
            covered = s[i].end + 1;
            if (i > 0) CHECK(s[i].class_id != s[i - 1].class_id);
            for (int f = s[i].start; f <= s[i].end; ++f)
                CHECK(labels[size_t(f)] == s[i].class_id);
        }
        CHECK(covered == int(labels.size()));
    }
}

TEST_CASE("error decomposition: pure overfill on a widened prediction") {
    auto gt = runs({{0, 7}, {1, 14}, {0, 3}});
    auto pred = runs({{0, 5}, {1, 16}, {0, 3}});
    EDDReport r = edd_decompose(gt, pred);
    CHECK(r.overfill == 2);
    CHECK(r.correct == 22);
    CHECK(r.serious() == 0);
    CHECK(r.total() == 24);
    CHECK(r.serious_fraction() == 0.0);
}

TEST_CASE("error decomposition: sparse hits split into insertion, underfill, fragmentation") {
    auto gt = runs({{0, 7}, {1, 14}, {0, 3}});
    std::vector<int> pred(24, 0);
    for (int i : {0, 1, 2, 3, 4, 8, 11, 14}) pred[size_t(i)] = 1;
    EDDReport r = edd_decompose(gt, pred);
    CHECK(r.insertion == 5);
    CHECK(r.underfill_normal == 7);  // frame 7 and frames 15..20
    CHECK(r.underfill_substitute == 0);
    CHECK(r.fragmentation_normal == 4);  // frames 9,10 and 12,13
    CHECK(r.fragmentation_substitute == 0);
    CHECK(r.correct == 8);  // 3 hits + 5 background frames
    CHECK(r.total() == 24);
    CHECK(r.serious() == 9);
    CHECK(r.serious_fraction() == Approx(9.0 / 24.0));
}

TEST_CASE("error decomposition: perfect prediction is all correct") {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        auto labels = random_labels(rng, int(rng.uniform_int(1, 50)), 4);
        EDDReport r = edd_decompose(labels, labels);
        CHECK(r.correct == int64_t(labels.size()));
        CHECK(r.total() == int64_t(labels.size()));
        CHECK(r.serious() == 0);
    }
}

TEST_CASE("error decomposition: spill across a class boundary is underfill-overfill") {
    auto gt = runs({{1, 5}, {2, 5}});
    auto pred = runs({{1, 7}, {2, 3}});
    EDDReport r = edd_decompose(gt, pred);
    CHECK(r.underfill_overfill == 2);  // frames 5,6
    CHECK(r.correct == 8);
    CHECK(r.serious() == 0);
    CHECK(r.total() == 10);

    // backward spill: prediction of the second class starts too early
    auto pred2 = runs({{1, 3}, {2, 7}});
    EDDReport r2 = edd_decompose(gt, pred2);
    CHECK(r2.underfill_overfill == 2);  // frames 3,4
    CHECK(r2.correct == 8);
    CHECK(r2.serious() == 0);
}

TEST_CASE("error decomposition: bridged segments count as merge") {
    auto gt = runs({{1, 3}, {0, 2}, {1, 3}});
    std::vector<int> pred(8, 1);
    EDDReport r = edd_decompose(gt, pred);
    CHECK(r.merge == 2);
    CHECK(r.correct == 6);
    CHECK(r.serious() == 2);
}

TEST_CASE("error decomposition: disconnected stray prediction is insertion, not overfill") {
    std::vector<int> gt(10, 0);
    gt[4] = gt[5] = 1;
    std::vector<int> pred(10, 0);
    pred[4] = pred[5] = 1;
    pred[8] = 1;
    EDDReport r = edd_decompose(gt, pred);
    CHECK(r.insertion == 1);
    CHECK(r.overfill == 0);
    CHECK(r.correct == 9);
}

TEST_CASE("error decomposition: a fully missed segment is deletion") {
    auto gt = runs({{0, 3}, {1, 3}, {0, 4}});
    auto pred = runs({{0, 3}, {2, 3}, {0, 4}});
    EDDReport r = edd_decompose(gt, pred);
    CHECK(r.deletion == 3);
    CHECK(r.correct == 7);
    CHECK(r.insertion == 0);  // the substituted frames are charged once, to the gt side
    CHECK(r.total() == 10);
}

TEST_CASE("error decomposition: substituted edges and gaps get substitute variants") {
    auto gt = runs({{0, 2}, {1, 6}, {0, 2}});
    //                         gt frames 2..7
    std::vector<int> pred = {0, 0, 3, 1, 2, 1, 3, 3, 0, 0};
    // frame 2: uncovered prefix with pred!=0; frame 4: interior gap with pred!=0;
    // frames 6,7: uncovered suffix with pred!=0
    EDDReport r = edd_decompose(gt, pred);
    CHECK(r.underfill_substitute == 3);
    CHECK(r.fragmentation_substitute == 1);
    CHECK(r.correct == 6);
    CHECK(r.insertion == 0);
    CHECK(r.serious() == 4);
}

TEST_CASE("error decomposition partitions every frame") {
    Rng rng(17);
    for (int trial = 0; trial < 4000; ++trial) {
        int len = int(rng.uniform_int(1, 50));
        auto gt = random_labels(rng, len, 4);
        auto pred = random_labels(rng, len, 4);
        EDDReport r = edd_decompose(gt, pred);
        REQUIRE(r.total() == len);
        CHECK(r.serious() >= 0);
        CHECK(r.serious() <= len);
    }
    CHECK_THROWS_AS(edd_decompose({0, 1}, {0}), std::invalid_argument);
}

TEST_CASE("error decomposition is invariant under a consistent class swap") {
    Rng rng(19);
    auto swap12 = [](std::vector<int> v) {
        for (auto& x : v) x = x == 1 ? 2 : (x == 2 ? 1 : x);
        return v;
    };
    for (int trial = 0; trial < 300; ++trial) {
        int len = int(rng.uniform_int(1, 40));
        auto gt = random_labels(rng, len, 3);
        auto pred = random_labels(rng, len, 3);
        EDDReport a = edd_decompose(gt, pred);
        EDDReport b = edd_decompose(swap12(gt), swap12(pred));
        CHECK(a.correct == b.correct);
        CHECK(a.overfill == b.overfill);
        CHECK(a.underfill_normal == b.underfill_normal);
        CHECK(a.underfill_substitute == b.underfill_substitute);
        CHECK(a.underfill_overfill == b.underfill_overfill);
        CHECK(a.merge == b.merge);
        CHECK(a.fragmentation_normal == b.fragmentation_normal);
        CHECK(a.fragmentation_substitute == b.fragmentation_substitute);
        CHECK(a.insertion == b.insertion);
        CHECK(a.deletion == b.deletion);
    }
}

TEST_CASE("precision-recall curve on the four-frame fixture") {
    PRCurve c = pr_curve({0.9, 0.8, 0.7, 0.1}, {1, 0, 1, 0}, 2);
    CHECK(c.class_id == 2);
    REQUIRE(c.points.size() == 4);
    CHECK(c.points[0].first == Approx(0.5));
    CHECK(c.points[0].second == Approx(1.0));
    CHECK(c.points[1].first == Approx(0.5));
    CHECK(c.points[1].second == Approx(0.5));
    CHECK(c.points[2].first == Approx(1.0));
    CHECK(c.points[2].second == Approx(2.0 / 3.0));
    CHECK(c.points[3].first == Approx(1.0));
    CHECK(c.points[3].second == Approx(0.5));
    CHECK(c.auc == Approx(5.0 / 6.0));
}

TEST_CASE("precision-recall curve degenerate and perfect cases") {
    PRCurve perfect = pr_curve({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
    CHECK(perfect.auc == Approx(1.0));

    PRCurve constant = pr_curve({0.5, 0.5, 0.5, 0.5}, {1, 0, 0, 1});
    REQUIRE(constant.points.size() == 1);
    CHECK(constant.points[0].first == Approx(1.0));
    CHECK(constant.points[0].second == Approx(0.5));
    CHECK(constant.auc == Approx(0.5));

    CHECK_THROWS_AS(pr_curve({0.5, 0.4}, {0, 0}), std::invalid_argument);
}

TEST_CASE("precision-recall curve properties: range, monotone recall, improvement") {
    Rng rng(23);
    for (int trial = 0; trial < 300; ++trial) {
        int n = int(rng.uniform_int(2, 40));
        std::vector<double> scores(size_t(n), 0.0);
        std::vector<uint8_t> gt(size_t(n), 0);
        int n_pos = 0;
        for (int i = 0; i < n; ++i) {
            scores[size_t(i)] = rng.uniform();
            gt[size_t(i)] = rng.uniform() < 0.4 ? 1 : 0;
            n_pos += gt[size_t(i)];
        }
        if (n_pos == 0) {
            gt[0] = 1;
            n_pos = 1;
        }
        PRCurve c = pr_curve(scores, gt);
        CHECK(c.auc >= 0.0);
        CHECK(c.auc <= 1.0 + 1e-12);
        for (size_t i = 1; i < c.points.size(); ++i)
            CHECK(c.points[i].first >= c.points[i - 1].first);
        CHECK(c.points.back().first == Approx(1.0));

        // raising one true positive's score never hurts
        int victim = -1;
        int k = int(rng.uniform_int(0, n - 1));
        for (int i = 0; i < n; ++i)
            if (gt[size_t((k + i) % n)]) {
                victim = (k + i) % n;
                break;
            }
        scores[size_t(victim)] += rng.uniform(0.01, 0.5);
        PRCurve improved = pr_curve(scores, gt);
        CHECK(improved.auc >= c.auc - 1e-12);
    }
}

TEST_CASE("macro average covers present classes and warns on absent ones") {
    // 6 frames over classes {0,1}: class 0 scored perfectly, class 1 constant
    std::vector<int> gt = {0, 0, 1, 1, 1, 0};
    Tensor probs = Tensor::zeros({6, 8});
    for (int i = 0; i < 6; ++i) {
        probs.at(i, 0) = gt[size_t(i)] == 0 ? 0.9 : 0.1;
        probs.at(i, 1) = 0.3;
    }
    MacroPRResult r = mean_pr_auc(gt, probs);
    REQUIRE(r.per_class[0].has_value());
    REQUIRE(r.per_class[1].has_value());
    CHECK(r.per_class[0]->auc == Approx(1.0));
    CHECK(r.per_class[1]->auc == Approx(0.5));  // constant scorer -> prevalence 3/6
    CHECK(r.mean_auc == Approx(0.75));
    CHECK(r.warnings.size() == 6);
    for (int c = 2; c < 8; ++c) CHECK_FALSE(r.per_class[size_t(c)].has_value());
}

TEST_CASE("per-class accuracy fixtures") {
    CHECK(per_class_accuracy({1, 1, 1, 1}, {1, 1, 1, 1}, 1) == 1.0);
    CHECK(per_class_accuracy({3, 3, 0}, {0, 0, 0}, 3) == 0.0);
    CHECK(per_class_accuracy({1, 1, 1, 1}, {1, 1, 0, 2}, 1) == 0.5);
    CHECK_FALSE(per_class_accuracy({1, 1}, {1, 1}, 5).has_value());
    Rng rng(29);
    for (int trial = 0; trial < 100; ++trial) {
        auto gt = random_labels(rng, 20, 3);
        auto pred = random_labels(rng, 20, 3);
        for (int c = 0; c <= 3; ++c) {
            auto acc = per_class_accuracy(gt, pred, c);
            if (!acc) continue;
            CHECK(*acc >= 0.0);
            CHECK(*acc <= 1.0);
            bool all = true;
            for (size_t i = 0; i < gt.size(); ++i)
                if (gt[i] == c && pred[i] != c) all = false;
            CHECK((*acc == 1.0) == all);
        }
    }
}

TEST_CASE("report emitters produce parseable csv and svg") {
    EDDReport r = edd_decompose(runs({{0, 7}, {1, 14}, {0, 3}}), runs({{0, 5}, {1, 16}, {0, 3}}));
    write_edd_csv(r, "edd_test.csv");
    std::ifstream csv("edd_test.csv");
    std::string line;
    int rows = 0;
    int64_t frame_sum = 0;
    REQUIRE(std::getline(csv, line));
    CHECK(line == "category,frames,serious");
    while (std::getline(csv, line)) {
        ++rows;
        if (line.find("serious_fraction") == std::string::npos) {
            auto a = line.find(','), b = line.rfind(',');
            frame_sum += std::stoll(line.substr(a + 1, b - a - 1));
        }
    }
    CHECK(rows == 11);
    CHECK(frame_sum == r.total());
    std::remove("edd_test.csv");

    write_edd_svg(r, "edd_test.svg");
    std::ifstream svg("edd_test.svg");
    std::stringstream ss;
    ss << svg.rdbuf();
    std::string body = ss.str();
    CHECK(body.rfind("<svg", 0) == 0);
    size_t rects = 0;
    for (size_t pos = 0; (pos = body.find("<rect", pos)) != std::string::npos; ++pos) ++rects;
    CHECK(rects == 10);
    std::remove("edd_test.svg");

    std::vector<PRCurve> curves = {pr_curve({0.9, 0.8, 0.7, 0.1}, {1, 0, 1, 0}, 0)};
    write_pr_csv(curves, "pr_test.csv");
    std::ifstream prc("pr_test.csv");
    int pr_rows = 0;
    while (std::getline(prc, line)) ++pr_rows;
    CHECK(pr_rows == 5);  // header + 4 points
    std::remove("pr_test.csv");

    write_pr_svg(curves, "pr_test.svg");
    std::ifstream prs("pr_test.svg");
    ss.str("");
    ss << prs.rdbuf();
    CHECK(ss.str().find("<polyline") != std::string::npos);
    std::remove("pr_test.svg");
}
