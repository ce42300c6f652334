#pragma once

#include <stdexcept>
#include <vector>

#include "mapmatch/assignment.hpp"
#include "mapmatch/geometry.hpp"

namespace mapmatch::evaluation {

struct QualityCounts {
    int n_tp = 0;
    int n_fp = 0;
    int n_fn = 0;
};

struct QualityScore {
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
};

inline std::vector<int> ground_truth_assignment(const std::vector<Pose2>& gt_query,
                                                const std::vector<Pose2>& gt_ref, double thresh) {
    return nearest_assignment(gt_query, gt_ref, thresh);
}

// Per-query-pose classification of a hypothesis against the ground truth.
// A pose with an asserted correspondence is a TP when the pair is within
// thresh under both the hypothesis poses and the ground-truth poses, and an
// FP when it only holds under the hypothesis. A pose the ground truth matches
// is an FN when the hypothesis misses it or asserts a pair that is wrong
// under the ground truth (a wrong reference therefore counts as one FP and
// one FN).
inline QualityCounts classify(const std::vector<int>& hyp_assignment,
                              const std::vector<Pose2>& hyp_query_poses,
                              const std::vector<Pose2>& hyp_ref_poses,
                              const std::vector<int>& gt_assignment,
                              const std::vector<Pose2>& gt_query_poses,
                              const std::vector<Pose2>& gt_ref_poses, double thresh) {
    if (hyp_assignment.size() != gt_assignment.size() ||
        hyp_assignment.size() != hyp_query_poses.size() ||
        gt_assignment.size() != gt_query_poses.size()) {
        throw std::invalid_argument("classify: assignment length mismatch");
    }
    QualityCounts counts;
    for (std::size_t i = 0; i < hyp_assignment.size(); ++i) {
        const int hr = hyp_assignment[i];
        const bool hyp_has =
            hr > 0 && translation_distance(hyp_query_poses[i], hyp_ref_poses[hr - 1]) < thresh;
        const bool hyp_correct =
            hyp_has && translation_distance(gt_query_poses[i], gt_ref_poses[hr - 1]) < thresh;
        const bool gt_has = gt_assignment[i] > 0;
        if (hyp_has && hyp_correct) ++counts.n_tp;
        if (hyp_has && !hyp_correct) ++counts.n_fp;
        if (gt_has && !(hyp_has && hyp_correct)) ++counts.n_fn;
    }
    return counts;
}

// Classification from a stored assignment alone. Assignments produced by the
// matching pipeline are within-threshold under the hypothesis poses by
// construction, so the hypothesis-side distance recheck is skipped.
inline QualityCounts classify(const std::vector<int>& hyp_assignment,
                              const std::vector<int>& gt_assignment,
                              const std::vector<Pose2>& gt_query_poses,
                              const std::vector<Pose2>& gt_ref_poses, double thresh) {
    if (hyp_assignment.size() != gt_assignment.size() ||
        gt_assignment.size() != gt_query_poses.size()) {
        throw std::invalid_argument("classify: assignment length mismatch");
    }
    QualityCounts counts;
    for (std::size_t i = 0; i < hyp_assignment.size(); ++i) {
        const int hr = hyp_assignment[i];
        const bool hyp_has = hr > 0;
        const bool hyp_correct =
            hyp_has && translation_distance(gt_query_poses[i], gt_ref_poses[hr - 1]) < thresh;
        const bool gt_has = gt_assignment[i] > 0;
        if (hyp_has && hyp_correct) ++counts.n_tp;
        if (hyp_has && !hyp_correct) ++counts.n_fp;
        if (gt_has && !(hyp_has && hyp_correct)) ++counts.n_fn;
    }
    return counts;
}

// Precision, recall, f-measure with the 0/0 -> 0 convention.
inline QualityScore prf(const QualityCounts& c) {
    QualityScore s;
    if (c.n_tp + c.n_fp > 0) s.precision = static_cast<double>(c.n_tp) / (c.n_tp + c.n_fp);
    if (c.n_tp + c.n_fn > 0) s.recall = static_cast<double>(c.n_tp) / (c.n_tp + c.n_fn);
    if (s.precision + s.recall > 0.0) {
        s.f_measure = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    }
    return s;
}

// Mean quality over the top min(X, size) ranked entries.
inline QualityScore top_x(const std::vector<QualityScore>& ranked_scores, int x) {
    if (x < 1) throw std::invalid_argument("top_x: X must be at least 1");
    if (ranked_scores.empty()) throw std::invalid_argument("top_x: empty score list");
    const int n = std::min<int>(x, static_cast<int>(ranked_scores.size()));
    QualityScore mean;
    for (int i = 0; i < n; ++i) {
        mean.precision += ranked_scores[i].precision;
        mean.recall += ranked_scores[i].recall;
        mean.f_measure += ranked_scores[i].f_measure;
    }
    mean.precision /= n;
    mean.recall /= n;
    mean.f_measure /= n;
    return mean;
}

}  // namespace mapmatch::evaluation
