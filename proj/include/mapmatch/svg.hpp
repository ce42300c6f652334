#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "mapmatch/evaluation.hpp"
#include "mapmatch/geometry.hpp"
#include "mapmatch/io.hpp"

namespace mapmatch::svg {

struct Polyline {
    std::string label;
    std::string color;
    std::vector<Pose2> poses;
    double width = 1.5;
    std::string dash;  // optional stroke-dasharray
};

struct Segment {
    std::string cls;  // tp / fp / fn
    std::string color;
    Pose2 a, b;
};

// Deterministic fixed-precision SVG with one <polyline> per trajectory and
// one <line> per correspondence segment.
inline std::string render(const std::vector<Polyline>& polylines,
                          const std::vector<Segment>& segments, int width_px = 800,
                          int height_px = 600) {
    double min_x = 0.0, max_x = 1.0, min_y = 0.0, max_y = 1.0;
    bool first = true;
    auto grow = [&](const Pose2& p) {
        if (first) {
            min_x = max_x = p.x;
            min_y = max_y = p.y;
            first = false;
        } else {
            min_x = std::min(min_x, p.x);
            max_x = std::max(max_x, p.x);
            min_y = std::min(min_y, p.y);
            max_y = std::max(max_y, p.y);
        }
    };
    for (const auto& pl : polylines) {
        for (const auto& p : pl.poses) grow(p);
    }
    for (const auto& s : segments) {
        grow(s.a);
        grow(s.b);
    }
    const double margin = 40.0;
    const double span_x = std::max(max_x - min_x, 1e-9);
    const double span_y = std::max(max_y - min_y, 1e-9);
    const double scale = std::min((width_px - 2 * margin) / span_x,
                                  (height_px - 2 * margin) / span_y);
    auto tx = [&](double x) { return margin + (x - min_x) * scale; };
    auto ty = [&](double y) { return height_px - margin - (y - min_y) * scale; };

    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof(buf),
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                  "viewBox=\"0 0 %d %d\">\n",
                  width_px, height_px, width_px, height_px);
    out += buf;
    out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (const auto& s : segments) {
        std::snprintf(buf, sizeof(buf),
                      "<line class=\"%s\" x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                      "stroke=\"%s\" stroke-width=\"0.8\"/>\n",
                      s.cls.c_str(), tx(s.a.x), ty(s.a.y), tx(s.b.x), ty(s.b.y), s.color.c_str());
        out += buf;
    }
    for (const auto& pl : polylines) {
        std::snprintf(buf, sizeof(buf),
                      "<polyline class=\"%s\" fill=\"none\" stroke=\"%s\" stroke-width=\"%.1f\"%s%s%s points=\"",
                      pl.label.c_str(), pl.color.c_str(), pl.width,
                      pl.dash.empty() ? "" : " stroke-dasharray=\"",
                      pl.dash.c_str(), pl.dash.empty() ? "" : "\"");
        out += buf;
        for (const auto& p : pl.poses) {
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", tx(p.x), ty(p.y));
            out += buf;
        }
        out += "\"/>\n";
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" fill=\"%s\">%s</text>\n",
                      margin, 14.0 + 14.0 * static_cast<double>(&pl - polylines.data()),
                      pl.color.c_str(), pl.label.c_str());
        out += buf;
    }
    out += "</svg>\n";
    return out;
}

// Full task plot: one polyline per available trajectory (ground truth and
// dead reckoning for both maps, plus the deformed chains when a hypothesis is
// given), with the hypothesis's pose correspondences colored by their
// classification against the ground truth. Deformed poses are reconstructed
// by re-optimizing the merged graph with the hypothesis's constraint list,
// which determines them exactly.
inline std::string render_task(const MapSequence& query_map, const MapSequence& ref_map,
                               const std::optional<io::HypothesisRecord>& hypothesis,
                               const matcher::MatchConfig& cfg = {}) {
    std::vector<Polyline> polylines;
    std::vector<Segment> segments;
    polylines.push_back({"query-deadreckoned", "#e08214", query_map.poses, 1.5, ""});
    polylines.push_back({"ref-deadreckoned", "#8073ac", ref_map.poses, 1.5, ""});
    if (query_map.has_ground_truth()) {
        polylines.push_back({"query-groundtruth", "#fdb863", query_map.gt_poses, 1.0, "4 3"});
    }
    if (ref_map.has_ground_truth()) {
        polylines.push_back({"ref-groundtruth", "#b2abd2", ref_map.gt_poses, 1.0, "4 3"});
    }

    if (hypothesis) {
        const matcher::Hypothesis h = [&] {
            matcher::Hypothesis rebuilt;
            rebuilt.seed = hypothesis->seed;
            rebuilt.constraints = hypothesis->constraints;
            const auto graph = matcher::merge_maps(query_map, ref_map, rebuilt.constraints, cfg);
            const auto res = posegraph::optimize(graph, cfg.optimize);
            matcher::detail::split_merged_poses(res.poses, query_map.size(), rebuilt);
            rebuilt.assignment = hypothesis->assignment;
            return rebuilt;
        }();
        polylines.push_back({"query-deformed", "#b35806", h.query_poses, 2.0, ""});
        polylines.push_back({"ref-deformed", "#542788", h.ref_poses, 2.0, ""});

        if (query_map.has_ground_truth() && ref_map.has_ground_truth()) {
            const auto gt_assignment = evaluation::ground_truth_assignment(
                query_map.gt_poses, ref_map.gt_poses, cfg.consist_thresh);
            for (std::size_t i = 0; i < h.assignment.size(); ++i) {
                const int hr = h.assignment[i];
                const bool gt_has = gt_assignment[i] > 0;
                if (hr > 0) {
                    const bool correct = translation_distance(query_map.gt_poses[i],
                                                              ref_map.gt_poses[hr - 1]) <
                                         cfg.consist_thresh;
                    segments.push_back({correct ? "tp" : "fp", correct ? "#1a9850" : "#d73027",
                                        h.query_poses[i], h.ref_poses[hr - 1]});
                    if (!correct && gt_has) {
                        segments.push_back({"fn", "#fee08b", query_map.gt_poses[i],
                                            ref_map.gt_poses[gt_assignment[i] - 1]});
                    }
                } else if (gt_has) {
                    segments.push_back({"fn", "#fee08b", query_map.gt_poses[i],
                                        ref_map.gt_poses[gt_assignment[i] - 1]});
                }
            }
        }
    }
    return render(polylines, segments);
}

}  // namespace mapmatch::svg
