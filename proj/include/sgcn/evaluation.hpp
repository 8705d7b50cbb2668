#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <sgcn/tensor.hpp>

namespace sgcn {

struct Segment {
    int class_id = 0;
    int start = 0;  // inclusive
    int end = 0;    // inclusive
    int length() const { return end - start + 1; }
};

inline std::vector<Segment> segmentize(const std::vector<int>& labels) {
    if (labels.empty()) throw std::invalid_argument("segmentize: empty label sequence");
    std::vector<Segment> out;
    int start = 0;
    for (int i = 1; i <= int(labels.size()); ++i) {
        if (i == int(labels.size()) || labels[size_t(i)] != labels[size_t(start)]) {
            out.push_back({labels[size_t(start)], start, i - 1});
            start = i;
        }
    }
    return out;
}

// Frame-level error taxonomy over one ground-truth/prediction pair. Class 0 is
// background; every frame lands in exactly one category.
struct EDDReport {
    int64_t correct = 0;
    int64_t overfill = 0;
    int64_t underfill_normal = 0;
    int64_t underfill_substitute = 0;
    int64_t underfill_overfill = 0;
    int64_t merge = 0;
    int64_t fragmentation_normal = 0;
    int64_t fragmentation_substitute = 0;
    int64_t insertion = 0;
    int64_t deletion = 0;

    int64_t total() const {
        return correct + overfill + underfill_normal + underfill_substitute +
               underfill_overfill + merge + fragmentation_normal + fragmentation_substitute +
               insertion + deletion;
    }
    int64_t serious() const {
        return insertion + deletion + merge + fragmentation_normal + fragmentation_substitute +
               underfill_substitute;
    }
    double serious_fraction() const {
        return total() == 0 ? 0.0 : double(serious()) / double(total());
    }
    EDDReport& operator+=(const EDDReport& o) {
        correct += o.correct;
        overfill += o.overfill;
        underfill_normal += o.underfill_normal;
        underfill_substitute += o.underfill_substitute;
        underfill_overfill += o.underfill_overfill;
        merge += o.merge;
        fragmentation_normal += o.fragmentation_normal;
        fragmentation_substitute += o.fragmentation_substitute;
        insertion += o.insertion;
        deletion += o.deletion;
        return *this;
    }
};

namespace detail {

enum class EddCat : uint8_t {
    unset,
    correct,
    overfill,
    underfill_normal,
    underfill_substitute,
    underfill_overfill,
    merge,
    fragmentation_normal,
    fragmentation_substitute,
    insertion,
    deletion,
};

}  // namespace detail

inline EDDReport edd_decompose(const std::vector<int>& gt, const std::vector<int>& pred) {
    if (gt.size() != pred.size())
        throw std::invalid_argument("edd_decompose: gt/pred length mismatch");
    using detail::EddCat;
    int n = int(gt.size());
    std::vector<EddCat> cat(size_t(n), EddCat::unset);

    std::vector<Segment> gt_segs = segmentize(gt);
    std::vector<Segment> pred_segs = segmentize(pred);

    // ground-truth pass: deletion, underfill at the edges, fragmentation inside
    for (const Segment& s : gt_segs) {
        if (s.class_id == 0) continue;
        int first_cov = -1, last_cov = -1;
        for (int i = s.start; i <= s.end; ++i)
            if (pred[size_t(i)] == s.class_id) {
                if (first_cov < 0) first_cov = i;
                last_cov = i;
            }
        if (first_cov < 0) {
            for (int i = s.start; i <= s.end; ++i) cat[size_t(i)] = EddCat::deletion;
            continue;
        }
        for (int i = s.start; i < first_cov; ++i)
            cat[size_t(i)] = pred[size_t(i)] != 0 ? EddCat::underfill_substitute
                                                  : EddCat::underfill_normal;
        for (int i = last_cov + 1; i <= s.end; ++i)
            cat[size_t(i)] = pred[size_t(i)] != 0 ? EddCat::underfill_substitute
                                                  : EddCat::underfill_normal;
        for (int i = first_cov; i <= last_cov; ++i) {
            if (pred[size_t(i)] == s.class_id)
                cat[size_t(i)] = EddCat::correct;
            else
                cat[size_t(i)] = pred[size_t(i)] != 0 ? EddCat::fragmentation_substitute
                                                      : EddCat::fragmentation_normal;
        }
    }

    // a prediction run crossing the boundary between two adjacent non-zero
    // ground-truth segments: the spilled frames count once, as underfill-overfill
    for (size_t k = 0; k + 1 < gt_segs.size(); ++k) {
        const Segment& s1 = gt_segs[k];
        const Segment& s2 = gt_segs[k + 1];
        if (s1.class_id == 0 || s2.class_id == 0 || s1.class_id == s2.class_id) continue;
        if (pred[size_t(s1.end)] == s1.class_id) {  // forward spill into s2
            for (int i = s2.start; i <= s2.end && pred[size_t(i)] == s1.class_id; ++i)
                if (cat[size_t(i)] == EddCat::underfill_substitute)
                    cat[size_t(i)] = EddCat::underfill_overfill;
        }
        if (pred[size_t(s2.start)] == s2.class_id) {  // backward spill into s1
            for (int i = s1.end; i >= s1.start && pred[size_t(i)] == s2.class_id; --i)
                if (cat[size_t(i)] == EddCat::underfill_substitute)
                    cat[size_t(i)] = EddCat::underfill_overfill;
        }
    }

    // prediction pass over the frames nothing has claimed yet (background in the
    // ground truth): insertion, merge between bridged segments, overfill else
    for (const Segment& p : pred_segs) {
        if (p.class_id == 0) continue;
        std::vector<int> correct_at;
        for (int i = p.start; i <= p.end; ++i)
            if (cat[size_t(i)] == EddCat::correct && gt[size_t(i)] == p.class_id)
                correct_at.push_back(i);
        for (int i = p.start; i <= p.end; ++i) {
            if (cat[size_t(i)] != EddCat::unset) continue;
            if (correct_at.empty()) {
                cat[size_t(i)] = EddCat::insertion;
            } else {
                bool before = correct_at.front() < i, after = correct_at.back() > i;
                cat[size_t(i)] = (before && after) ? EddCat::merge : EddCat::overfill;
            }
        }
    }

    EDDReport r;
    for (int i = 0; i < n; ++i) {
        if (cat[size_t(i)] == EddCat::unset) cat[size_t(i)] = EddCat::correct;
        switch (cat[size_t(i)]) {
            case EddCat::correct: ++r.correct; break;
            case EddCat::overfill: ++r.overfill; break;
            case EddCat::underfill_normal: ++r.underfill_normal; break;
            case EddCat::underfill_substitute: ++r.underfill_substitute; break;
            case EddCat::underfill_overfill: ++r.underfill_overfill; break;
            case EddCat::merge: ++r.merge; break;
            case EddCat::fragmentation_normal: ++r.fragmentation_normal; break;
            case EddCat::fragmentation_substitute: ++r.fragmentation_substitute; break;
            case EddCat::insertion: ++r.insertion; break;
            case EddCat::deletion: ++r.deletion; break;
            case EddCat::unset: break;
        }
    }
    return r;
}

// One-vs-all curve: thresholds sweep the distinct scores descending, a frame is
// positive when score >= threshold; precision steps between recall points
struct PRCurve {
    int class_id = -1;
    std::vector<std::pair<double, double>> points;  // (recall, precision)
    double auc = 0.0;
};

inline PRCurve pr_curve(const std::vector<double>& scores, const std::vector<uint8_t>& gt,
                        int class_id = -1) {
    if (scores.size() != gt.size()) throw std::invalid_argument("pr_curve: length mismatch");
    int64_t n_pos = 0;
    for (uint8_t g : gt) n_pos += g ? 1 : 0;
    if (n_pos == 0) throw std::invalid_argument("pr_curve: no positive frames for the class");

    std::vector<size_t> order(scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });

    PRCurve c;
    c.class_id = class_id;
    int64_t tp = 0, fp = 0;
    double prev_recall = 0.0;
    size_t i = 0;
    while (i < order.size()) {
        double threshold = scores[order[i]];
        while (i < order.size() && scores[order[i]] == threshold) {
            if (gt[order[i]]) ++tp; else ++fp;
            ++i;
        }
        double recall = double(tp) / double(n_pos);
        double precision = double(tp) / double(tp + fp);
        c.points.emplace_back(recall, precision);
        c.auc += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return c;
}

struct MacroPRResult {
    double mean_auc = 0.0;
    std::array<std::optional<PRCurve>, 8> per_class;  // empty where the class is absent
    std::vector<std::string> warnings;
};

// probabilities: n_frames x n_classes, rows from softmax; classes with no
// ground-truth frame are excluded from the mean with a warning
inline MacroPRResult mean_pr_auc(const std::vector<int>& gt, const Tensor& probabilities) {
    if (int(gt.size()) != probabilities.rows())
        throw std::invalid_argument("mean_pr_auc: frame count mismatch");
    int n_classes = probabilities.cols();
    if (n_classes > 8) throw std::invalid_argument("mean_pr_auc: more than 8 classes");
    MacroPRResult r;
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < n_classes; ++c) {
        std::vector<uint8_t> binary(gt.size());
        bool any = false;
        for (size_t i = 0; i < gt.size(); ++i) {
            binary[i] = gt[i] == c ? 1 : 0;
            any = any || binary[i];
        }
        if (!any) {
            r.warnings.push_back("class " + std::to_string(c) +
                                 " absent from the split; excluded from the mean");
            continue;
        }
        std::vector<double> scores(gt.size());
        for (size_t i = 0; i < gt.size(); ++i) scores[i] = probabilities.at(int(i), c);
        r.per_class[size_t(c)] = pr_curve(scores, binary, c);
        sum += r.per_class[size_t(c)]->auc;
        ++present;
    }
    r.mean_auc = present > 0 ? sum / double(present) : 0.0;
    return r;
}

// fraction of ground-truth class-c frames predicted as c; empty when c is absent
inline std::optional<double> per_class_accuracy(const std::vector<int>& gt,
                                                const std::vector<int>& pred, int c) {
    if (gt.size() != pred.size())
        throw std::invalid_argument("per_class_accuracy: length mismatch");
    int64_t total = 0, hit = 0;
    for (size_t i = 0; i < gt.size(); ++i)
        if (gt[i] == c) {
            ++total;
            if (pred[i] == c) ++hit;
        }
    if (total == 0) return std::nullopt;
    return double(hit) / double(total);
}

// ---- report emitters ----

namespace detail {

inline std::string fmt_g9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

inline void open_or_throw(std::ofstream& f, const std::string& path) {
    f.open(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
}

}  // namespace detail

inline void write_edd_csv(const EDDReport& r, const std::string& path) {
    std::ofstream f;
    detail::open_or_throw(f, path);
    f << "category,frames,serious\n";
    auto row = [&](const char* name, int64_t v, bool serious) {
        f << name << ',' << v << ',' << (serious ? 1 : 0) << '\n';
    };
    row("correct", r.correct, false);
    row("overfill", r.overfill, false);
    row("underfill", r.underfill_normal, false);
    row("underfill_overfill", r.underfill_overfill, false);
    row("underfill_substitute", r.underfill_substitute, true);
    row("merge", r.merge, true);
    row("fragmentation", r.fragmentation_normal, true);
    row("fragmentation_substitute", r.fragmentation_substitute, true);
    row("insertion", r.insertion, true);
    row("deletion", r.deletion, true);
    f << "serious_fraction," << detail::fmt_g9(r.serious_fraction()) << ",\n";
}

inline void write_pr_csv(const std::vector<PRCurve>& curves, const std::string& path) {
    std::ofstream f;
    detail::open_or_throw(f, path);
    f << "class,recall,precision\n";
    for (const auto& c : curves)
        for (const auto& [recall, precision] : c.points)
            f << c.class_id << ',' << detail::fmt_g9(recall) << ','
              << detail::fmt_g9(precision) << '\n';
}

// horizontal bar chart, one bar per error category
inline void write_edd_svg(const EDDReport& r, const std::string& path) {
    struct Bar {
        const char* name;
        int64_t v;
        bool serious;
    };
    std::vector<Bar> bars = {
        {"correct", r.correct, false},
        {"overfill", r.overfill, false},
        {"underfill", r.underfill_normal, false},
        {"underfill-overfill", r.underfill_overfill, false},
        {"underfill-sub", r.underfill_substitute, true},
        {"merge", r.merge, true},
        {"fragmentation", r.fragmentation_normal, true},
        {"fragmentation-sub", r.fragmentation_substitute, true},
        {"insertion", r.insertion, true},
        {"deletion", r.deletion, true},
    };
    int64_t peak = 1;
    for (const auto& b : bars) peak = std::max(peak, b.v);
    const int w = 640, row_h = 28, left = 170, top = 30;
    int h = top + row_h * int(bars.size()) + 20;
    std::ofstream f;
    detail::open_or_throw(f, path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    f << "<text x=\"10\" y=\"18\">frames per category (total " << r.total() << ")</text>\n";
    for (size_t i = 0; i < bars.size(); ++i) {
        int y = top + int(i) * row_h;
        double frac = double(bars[i].v) / double(peak);
        int len = int(frac * (w - left - 60));
        f << "<text x=\"10\" y=\"" << y + 16 << "\">" << bars[i].name << "</text>\n";
        f << "<rect x=\"" << left << "\" y=\"" << y + 4 << "\" width=\"" << std::max(len, 1)
          << "\" height=\"18\" fill=\"" << (bars[i].serious ? "#c0392b" : "#2980b9")
          << "\"/>\n";
        f << "<text x=\"" << left + std::max(len, 1) + 6 << "\" y=\"" << y + 17 << "\">"
          << bars[i].v << "</text>\n";
    }
    f << "</svg>\n";
}

inline void write_pr_svg(const std::vector<PRCurve>& curves, const std::string& path) {
    const int w = 480, h = 480, m = 50;
    const char* palette[8] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                              "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    auto px = [&](double recall) { return m + recall * (w - 2 * m); };
    auto py = [&](double precision) { return h - m - precision * (h - 2 * m); };
    std::ofstream f;
    detail::open_or_throw(f, path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    f << "<rect x=\"" << m << "\" y=\"" << m << "\" width=\"" << w - 2 * m << "\" height=\""
      << h - 2 * m << "\" fill=\"none\" stroke=\"#333\"/>\n";
    f << "<text x=\"" << w / 2 - 20 << "\" y=\"" << h - 12 << "\">recall</text>\n";
    f << "<text x=\"12\" y=\"" << h / 2 << "\" transform=\"rotate(-90 12 " << h / 2
      << ")\">precision</text>\n";
    for (const auto& c : curves) {
        if (c.points.empty()) continue;
        const char* color = palette[size_t(std::max(c.class_id, 0)) % 8];
        f << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
        f << px(0.0) << ',' << py(c.points.front().second) << ' ';
        for (const auto& [recall, precision] : c.points)
            f << px(recall) << ',' << py(precision) << ' ';
        f << "\"/>\n";
        f << "<text x=\"" << w - m + 4 << "\" y=\"" << m + 14 * (c.class_id + 1) << "\" fill=\""
          << color << "\">" << c.class_id << "</text>\n";
    }
    f << "</svg>\n";
}

}  // namespace sgcn
