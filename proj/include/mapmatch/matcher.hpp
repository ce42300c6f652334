#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "mapmatch/assignment.hpp"
#include "mapmatch/geometry.hpp"
#include "mapmatch/map_sequence.hpp"
#include "mapmatch/posegraph.hpp"
#include "mapmatch/random.hpp"
#include "mapmatch/retrieval.hpp"

namespace mapmatch::matcher {

using retrieval::Correspondence;

enum class Algorithm { Naive, Single, Multiple };

inline const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::Naive: return "naive";
        case Algorithm::Single: return "single";
        default: return "multiple";
    }
}

inline std::optional<Algorithm> algorithm_from_name(const std::string& name) {
    if (name == "naive") return Algorithm::Naive;
    if (name == "single") return Algorithm::Single;
    if (name == "multiple") return Algorithm::Multiple;
    return std::nullopt;
}

struct MatchConfig {
    int k = 10;                    // initial hypotheses
    int k_prime = 10;              // survivors spawning children per iteration
    int m = 10;                    // preemption iterations
    double consist_thresh = 10.0;  // meters; pose-pair consistency
    double tp = 1.0;               // meters; inconsistency gate for new constraints

    // Retrieval settings.
    int nr = 10;
    int nb = 1;
    int bucket_cap = 100;
    int bits = 20;
    int pca_dim = 0;               // 0 = auto (min of D, reference size, 128)
    std::uint64_t code_seed = 12345;
    bool rerank_raw = false;

    // Loop-closure noise model.
    double loop_sigma_t = 0.1;
    double loop_sigma_theta = 0.05;

    // Relative-pose measurement attached to a correspondence. Identity by
    // default; the ground-truth relative pose can be used when both maps
    // retain ground truth, and seeded noise can be added either way.
    bool use_true_relative = false;
    double rel_noise_sigma_t = 0.0;
    double rel_noise_sigma_theta = 0.0;
    std::uint64_t rel_noise_seed = 99;

    posegraph::OptimizeConfig optimize;

    void validate() const {
        if (k <= 0 || k_prime <= 0 || m < 0 || nr <= 0 || nb < 0 || bucket_cap <= 0 ||
            bits <= 0 || consist_thresh <= 0.0 || tp <= 0.0) {
            throw std::invalid_argument("MatchConfig: all counts and thresholds must be positive");
        }
        if (consist_thresh <= tp) {
            throw std::invalid_argument("MatchConfig: consist_thresh must exceed tp");
        }
    }
};

struct Hypothesis {
    int id = 0;
    int lineage = -1;  // parent hypothesis id, -1 for generation 0
    Correspondence seed;
    std::vector<Correspondence> constraints;  // constraints[0] == seed
    Pose2 transform;                          // initial rigid alignment
    std::vector<Pose2> query_poses;           // current merged-map estimates
    std::vector<Pose2> ref_poses;
    int score = 0;                            // consistent pooled correspondences
    std::vector<int> assignment;              // r_i in [0..R], 0 = unmatched
    int rank = -1;
};

struct MatchResult {
    std::vector<Hypothesis> hypotheses;  // ranked
    std::vector<std::string> diagnostics;
};

// ---------------------------------------------------------------------------
// Elementary operations

// Measured relative pose of the query pose with respect to the reference pose
// for a correspondence, per the configured model.
inline Pose2 correspondence_relative(const Correspondence& c, const MapSequence& query_map,
                                     const MapSequence& ref_map, const MatchConfig& cfg) {
    Pose2 rel;
    if (cfg.use_true_relative && query_map.has_ground_truth() && ref_map.has_ground_truth()) {
        rel = between(ref_map.gt_poses[c.ref_index], query_map.gt_poses[c.query_index]);
    }
    if (cfg.rel_noise_sigma_t > 0.0 || cfg.rel_noise_sigma_theta > 0.0) {
        Rng rng(mix_seed(cfg.rel_noise_seed,
                         static_cast<std::uint64_t>(c.query_index) * 1000003ULL +
                             static_cast<std::uint64_t>(c.ref_index)));
        rel = Pose2(rel.x + rng.gaussian(0.0, cfg.rel_noise_sigma_t),
                    rel.y + rng.gaussian(0.0, cfg.rel_noise_sigma_t),
                    rel.theta + rng.gaussian(0.0, cfg.rel_noise_sigma_theta));
    }
    return rel;
}

// The transform T with T + query_pose = ref_pose + rel.
inline Pose2 rigid_align(const Correspondence& c, const MapSequence& query_map,
                         const MapSequence& ref_map, const Pose2& rel = Pose2()) {
    return compose(compose(ref_map.poses[c.ref_index], rel),
                   inverse(query_map.poses[c.query_index]));
}

inline std::vector<int> pose_correspondences(const std::vector<Pose2>& query_poses_in_ref_frame,
                                             const std::vector<Pose2>& ref_poses,
                                             double consist_thresh) {
    if (query_poses_in_ref_frame.empty() || ref_poses.empty()) {
        throw std::invalid_argument("pose_correspondences: empty pose list");
    }
    return nearest_assignment(query_poses_in_ref_frame, ref_poses, consist_thresh);
}

inline int consistency_score(const std::vector<Pose2>& query_poses,
                             const std::vector<Pose2>& ref_poses,
                             const std::vector<Correspondence>& pooled, double consist_thresh) {
    int score = 0;
    for (const Correspondence& c : pooled) {
        if (translation_distance(query_poses[c.query_index], ref_poses[c.ref_index]) <
            consist_thresh) {
            ++score;
        }
    }
    return score;
}

inline void refresh_hypothesis(Hypothesis& h, const std::vector<Correspondence>& pooled,
                               double consist_thresh) {
    h.assignment = nearest_assignment(h.query_poses, h.ref_poses, consist_thresh);
    h.score = consistency_score(h.query_poses, h.ref_poses, pooled, consist_thresh);
}

// ---------------------------------------------------------------------------
// Merge and deform

// One pose graph holding both chains: query block first, reference block
// second, reference start anchored. The query block is initialized by the
// seed constraint's rigid alignment.
inline posegraph::PoseGraph merge_maps(const MapSequence& query_map, const MapSequence& ref_map,
                                       const std::vector<Correspondence>& constraints,
                                       const MatchConfig& cfg = {}) {
    if (constraints.empty()) {
        throw std::invalid_argument("merge_maps: at least one constraint required");
    }
    const int q = query_map.size();
    const int r = ref_map.size();
    const Pose2 seed_rel = correspondence_relative(constraints[0], query_map, ref_map, cfg);
    const Pose2 t = rigid_align(constraints[0], query_map, ref_map, seed_rel);

    posegraph::PoseGraph graph;
    graph.nodes.reserve(q + r);
    for (const Pose2& p : query_map.poses) graph.add_node(compose(t, p));
    for (const Pose2& p : ref_map.poses) graph.add_node(p);
    graph.anchor = q;

    auto add_chain = [&](const MapSequence& map, int base) {
        for (int i = 0; i + 1 < map.size(); ++i) {
            const Pose2& step = map.odometry[i];
            const double len = std::max(std::hypot(step.x, step.y), 1e-6);
            graph.add_edge(base + i, base + i + 1, step,
                           posegraph::default_information(posegraph::EdgeKind::Odometry, len,
                                                          step.theta, map.noise_frac),
                           posegraph::EdgeKind::Odometry);
        }
    };
    add_chain(query_map, 0);
    add_chain(ref_map, q);

    const Eigen::Matrix3d loop_info = posegraph::default_information(
        posegraph::EdgeKind::Loop, 1.0, 0.0, 0.01, cfg.loop_sigma_t, cfg.loop_sigma_theta);
    for (const Correspondence& c : constraints) {
        const Pose2 rel = correspondence_relative(c, query_map, ref_map, cfg);
        graph.add_edge(q + c.ref_index, c.query_index, rel, loop_info, posegraph::EdgeKind::Loop);
    }
    return graph;
}

// The least-consistent-compatible correspondence to add next: among pooled
// pairs not yet used by the hypothesis whose current pose-pair distance
// exceeds tp, the one with the smallest descriptor distance. Ties break by
// (query_index, ref_index).
inline std::optional<Correspondence> select_next_constraint(
    const Hypothesis& h, const std::vector<Correspondence>& pooled, double tp) {
    const Correspondence* best = nullptr;
    for (const Correspondence& c : pooled) {
        bool used = false;
        for (const Correspondence& u : h.constraints) {
            if (u.query_index == c.query_index && u.ref_index == c.ref_index) {
                used = true;
                break;
            }
        }
        if (used) continue;
        if (translation_distance(h.query_poses[c.query_index], h.ref_poses[c.ref_index]) <= tp) {
            continue;
        }
        if (best == nullptr || c.l2 < best->l2 ||
            (c.l2 == best->l2 && (c.query_index < best->query_index ||
                                  (c.query_index == best->query_index &&
                                   c.ref_index < best->ref_index)))) {
            best = &c;
        }
    }
    if (best == nullptr) return std::nullopt;
    return *best;
}

namespace detail {

inline void split_merged_poses(const std::vector<Pose2>& merged, int q, Hypothesis& h) {
    h.query_poses.assign(merged.begin(), merged.begin() + q);
    h.ref_poses.assign(merged.begin() + q, merged.end());
}

// Rebuilds the merged graph with the hypothesis's constraint set, optimizes,
// and refreshes the assignment and score. Returns false on solver failure.
inline bool optimize_hypothesis(Hypothesis& h, const MapSequence& query_map,
                                const MapSequence& ref_map,
                                const std::vector<Correspondence>& pooled, const MatchConfig& cfg,
                                std::vector<std::string>& diagnostics) {
    try {
        const posegraph::PoseGraph graph = merge_maps(query_map, ref_map, h.constraints, cfg);
        const posegraph::OptimizeResult res = posegraph::optimize(graph, cfg.optimize);
        split_merged_poses(res.poses, query_map.size(), h);
        refresh_hypothesis(h, pooled, cfg.consist_thresh);
        return true;
    } catch (const std::exception& e) {
        diagnostics.push_back("hypothesis " + std::to_string(h.id) +
                              ": optimization failed: " + e.what());
        return false;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Hypothesis generation

// Rigid hypotheses from the top-k ranked correspondences (no optimization).
inline std::vector<Hypothesis> initial_hypotheses(const MapSequence& query_map,
                                                  const MapSequence& ref_map,
                                                  const std::vector<Correspondence>& ranked,
                                                  int k, const std::vector<Correspondence>& pooled,
                                                  const MatchConfig& cfg = {}) {
    std::vector<Hypothesis> hypotheses;
    const int n = std::min<int>(k, static_cast<int>(ranked.size()));
    hypotheses.reserve(n);
    for (int i = 0; i < n; ++i) {
        Hypothesis h;
        h.id = i;
        h.seed = ranked[i];
        h.constraints = {ranked[i]};
        const Pose2 rel = correspondence_relative(ranked[i], query_map, ref_map, cfg);
        h.transform = rigid_align(ranked[i], query_map, ref_map, rel);
        h.query_poses.reserve(query_map.size());
        for (const Pose2& p : query_map.poses) h.query_poses.push_back(compose(h.transform, p));
        h.ref_poses = ref_map.poses;
        refresh_hypothesis(h, pooled, cfg.consist_thresh);
        hypotheses.push_back(std::move(h));
    }
    return hypotheses;
}

// Child of h extended with constraint c; empty on optimization failure.
inline std::optional<Hypothesis> deform(const Hypothesis& h, const Correspondence& c,
                                        const MapSequence& query_map, const MapSequence& ref_map,
                                        const std::vector<Correspondence>& pooled,
                                        const MatchConfig& cfg, int child_id,
                                        std::vector<std::string>& diagnostics) {
    Hypothesis child = h;
    child.id = child_id;
    child.lineage = h.id;
    child.rank = -1;
    child.constraints.push_back(c);
    if (!detail::optimize_hypothesis(child, query_map, ref_map, pooled, cfg, diagnostics)) {
        return std::nullopt;
    }
    return child;
}

namespace detail {

// Score-descending order with simpler-explanation tie breaking: fewer
// constraints first, then creation order.
inline void rank_by_score(std::vector<Hypothesis>& hypotheses) {
    std::sort(hypotheses.begin(), hypotheses.end(), [](const Hypothesis& a, const Hypothesis& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.constraints.size() != b.constraints.size()) {
            return a.constraints.size() < b.constraints.size();
        }
        return a.id < b.id;
    });
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        hypotheses[i].rank = static_cast<int>(i) + 1;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Algorithm variants over precomputed correspondences

// Rigid-transform baseline: k hypotheses ranked by ascending seed descriptor
// distance, no graph optimization.
inline MatchResult run_naive_core(const MapSequence& query_map, const MapSequence& ref_map,
                                  const std::vector<Correspondence>& ranked,
                                  const std::vector<Correspondence>& pooled,
                                  const MatchConfig& cfg) {
    cfg.validate();
    MatchResult result;
    result.hypotheses = initial_hypotheses(query_map, ref_map, ranked, cfg.k, pooled, cfg);
    if (result.hypotheses.empty()) {
        result.diagnostics.push_back("no correspondences between the maps");
        return result;
    }
    // `ranked` is l2-ascending, so creation order is already the ranking.
    for (std::size_t i = 0; i < result.hypotheses.size(); ++i) {
        result.hypotheses[i].rank = static_cast<int>(i) + 1;
    }
    return result;
}

// One round of deformation: every initial hypothesis spawns at most one child
// with a second constraint, and all hypotheses are re-ranked by score.
inline MatchResult run_single_core(const MapSequence& query_map, const MapSequence& ref_map,
                                   const std::vector<Correspondence>& ranked,
                                   const std::vector<Correspondence>& pooled,
                                   const MatchConfig& cfg) {
    cfg.validate();
    MatchResult result;
    result.hypotheses = initial_hypotheses(query_map, ref_map, ranked, cfg.k, pooled, cfg);
    if (result.hypotheses.empty()) {
        result.diagnostics.push_back("no correspondences between the maps");
        return result;
    }
    int next_id = static_cast<int>(result.hypotheses.size());
    const std::size_t n_initial = result.hypotheses.size();
    for (std::size_t i = 0; i < n_initial; ++i) {
        const auto c = select_next_constraint(result.hypotheses[i], pooled, cfg.tp);
        if (!c) continue;
        auto child = deform(result.hypotheses[i], *c, query_map, ref_map, pooled, cfg, next_id,
                            result.diagnostics);
        if (child) {
            ++next_id;
            result.hypotheses.push_back(std::move(*child));
        }
    }
    detail::rank_by_score(result.hypotheses);
    return result;
}

// The iterative preemption scheme: k merge-optimized seeds, then m rounds in
// which the best k' hypotheses so far each spawn one child by adding the
// constraint most inconsistent-compatible with them. Emits at most k + k'*m
// hypotheses, ranked by consistency score.
inline MatchResult run_multiple_core(const MapSequence& query_map, const MapSequence& ref_map,
                                     const std::vector<Correspondence>& ranked,
                                     const std::vector<Correspondence>& pooled,
                                     const MatchConfig& cfg) {
    cfg.validate();
    MatchResult result;
    result.hypotheses = initial_hypotheses(query_map, ref_map, ranked, cfg.k, pooled, cfg);
    if (result.hypotheses.empty()) {
        result.diagnostics.push_back("no correspondences between the maps");
        return result;
    }
    for (Hypothesis& h : result.hypotheses) {
        detail::optimize_hypothesis(h, query_map, ref_map, pooled, cfg, result.diagnostics);
    }

    int next_id = static_cast<int>(result.hypotheses.size());
    for (int iter = 0; iter < cfg.m; ++iter) {
        // Deterministic barrier: pick survivors over everything generated so far.
        std::vector<int> order(result.hypotheses.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            const Hypothesis& ha = result.hypotheses[a];
            const Hypothesis& hb = result.hypotheses[b];
            if (ha.score != hb.score) return ha.score > hb.score;
            if (ha.constraints.size() != hb.constraints.size()) {
                return ha.constraints.size() < hb.constraints.size();
            }
            return ha.id < hb.id;
        });
        const int survivors = std::min<int>(cfg.k_prime, static_cast<int>(order.size()));
        std::vector<Hypothesis> children;
        for (int s = 0; s < survivors; ++s) {
            const Hypothesis& parent = result.hypotheses[order[s]];
            const auto c = select_next_constraint(parent, pooled, cfg.tp);
            if (!c) continue;
            auto child = deform(parent, *c, query_map, ref_map, pooled, cfg, next_id,
                                result.diagnostics);
            if (child) {
                ++next_id;
                children.push_back(std::move(*child));
            }
        }
        for (Hypothesis& child : children) result.hypotheses.push_back(std::move(child));
    }
    detail::rank_by_score(result.hypotheses);
    return result;
}

// ---------------------------------------------------------------------------
// Full pipeline: retrieval then matching

struct RetrievalArtifacts {
    retrieval::PcaModel pca;
    retrieval::CodeModel code;
    retrieval::CorrespondenceSet correspondences;
};

// Fits the projection on the reference map (the library role), projects both
// maps, and runs the indexed descriptor search.
inline RetrievalArtifacts run_retrieval(const MapSequence& query_map, const MapSequence& ref_map,
                                        const MatchConfig& cfg) {
    RetrievalArtifacts art;
    const int dim = static_cast<int>(ref_map.descriptors[0].size());
    int d = cfg.pca_dim > 0 ? cfg.pca_dim : 128;
    d = std::min({d, dim, ref_map.size()});
    art.pca = retrieval::fit_pca(ref_map.descriptors, d);
    art.code = retrieval::make_code_model(cfg.bits, d, cfg.code_seed);

    std::vector<retrieval::Descriptor> ref_projected(ref_map.size());
    for (int i = 0; i < ref_map.size(); ++i) {
        ref_projected[i] = retrieval::project(art.pca, ref_map.descriptors[i]);
    }
    retrieval::HashIndex index = retrieval::build_index(ref_projected, art.code, cfg.bucket_cap);
    if (cfg.rerank_raw) index.raw = ref_map.descriptors;

    std::vector<retrieval::Descriptor> query_projected(query_map.size());
    for (int i = 0; i < query_map.size(); ++i) {
        query_projected[i] = retrieval::project(art.pca, query_map.descriptors[i]);
    }
    retrieval::QueryConfig qcfg{cfg.nb, cfg.nr, cfg.rerank_raw};
    art.correspondences = retrieval::global_correspondences(
        query_projected, index, qcfg, cfg.rerank_raw ? &query_map.descriptors : nullptr);
    return art;
}

inline MatchResult run_match(const MapSequence& query_map, const MapSequence& ref_map,
                             Algorithm algorithm, const MatchConfig& cfg = {}) {
    cfg.validate();
    query_map.validate();
    ref_map.validate();
    const RetrievalArtifacts art = run_retrieval(query_map, ref_map, cfg);
    const auto& ranked = art.correspondences.top;
    const auto& pooled = art.correspondences.pooled;
    switch (algorithm) {
        case Algorithm::Naive: return run_naive_core(query_map, ref_map, ranked, pooled, cfg);
        case Algorithm::Single: return run_single_core(query_map, ref_map, ranked, pooled, cfg);
        default: return run_multiple_core(query_map, ref_map, ranked, pooled, cfg);
    }
}

inline MatchResult run_naive(const MapSequence& q, const MapSequence& r, const MatchConfig& cfg = {}) {
    return run_match(q, r, Algorithm::Naive, cfg);
}
inline MatchResult run_single(const MapSequence& q, const MapSequence& r, const MatchConfig& cfg = {}) {
    return run_match(q, r, Algorithm::Single, cfg);
}
inline MatchResult run_multiple(const MapSequence& q, const MapSequence& r, const MatchConfig& cfg = {}) {
    return run_match(q, r, Algorithm::Multiple, cfg);
}

}  // namespace mapmatch::matcher
