#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>

#include <json.hpp>

#include "mapmatch/bench.hpp"
#include "mapmatch/datagen.hpp"
#include "mapmatch/matcher.hpp"
#include "oracles.hpp"

using namespace mapmatch;
using namespace mapmatch::matcher;
using retrieval::Correspondence;

namespace {

MapSequence straight_map(int n, double spacing, std::uint64_t seed, double noise_frac = 0.0,
                         double x0 = 0.0, int desc_dim = 16, std::uint64_t env_seed = 7) {
    std::vector<Pose2> gt;
    for (int i = 0; i < n; ++i) gt.emplace_back(x0 + i * spacing, 0.0, 0.0);
    datagen::DescriptorParams params;
    params.dim = desc_dim;
    const datagen::DescriptorField field(params, env_seed);
    return datagen::make_map("s" + std::to_string(seed), std::move(gt), field, noise_frac,
                             params.session_noise, seed, spacing);
}

nlohmann::json trace_json(const MatchResult& res) {
    nlohmann::json hyps = nlohmann::json::array();
    for (const auto& h : res.hypotheses) {
        nlohmann::json constraints = nlohmann::json::array();
        for (const auto& c : h.constraints) {
            constraints.push_back({c.query_index, c.ref_index});
        }
        hyps.push_back({{"rank", h.rank},
                        {"id", h.id},
                        {"lineage", h.lineage},
                        {"score", h.score},
                        {"constraints", std::move(constraints)}});
    }
    return hyps;
}

nlohmann::json load_golden(const std::string& name) {
    std::ifstream in(std::string(GOLDEN_DIR) + "/" + name);
    REQUIRE(in.good());
    return nlohmann::json::parse(in);
}

}  // namespace

// ---------------------------------------------------------------------------
// Rigid alignment and pose correspondences

TEST_CASE("rigid_align maps the query pose onto the reference pose") {
    const MapSequence q = straight_map(5, 1.0, 1);
    const MapSequence r = straight_map(5, 1.0, 2);

    // Co-located poses: identity.
    const Pose2 t0 = rigid_align({2, 2, 0.0}, q, r);
    CHECK(std::abs(t0.x) < 1e-12);
    CHECK(std::abs(t0.y) < 1e-12);
    CHECK(std::abs(t0.theta) < 1e-12);

    // Query at origin, reference at (5, 0, 0).
    const MapSequence r5 = straight_map(5, 1.0, 3, 0.0, 5.0);
    const Pose2 t5 = rigid_align({0, 0, 0.0}, q, r5);
    CHECK(t5.x == Catch::Approx(5.0).margin(1e-12));
    CHECK(t5.y == Catch::Approx(0.0).margin(1e-12));

    // Random pose pairs with a relative offset: exact mapping through compose.
    Rng rng(71);
    for (int i = 0; i < 200; ++i) {
        MapSequence qq = q, rr = r;
        qq.poses[1] = Pose2(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-kPi, kPi));
        rr.poses[3] = Pose2(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-kPi, kPi));
        const Pose2 rel(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.5, 0.5));
        const Pose2 t = rigid_align({1, 3, 0.0}, qq, rr, rel);
        const Pose2 mapped = compose(t, qq.poses[1]);
        const Pose2 target = oracle::compose(rr.poses[3], rel);
        CHECK(mapmatch::translation_distance(mapped, target) < 1e-9);
        CHECK(std::abs(wrap_angle(mapped.theta - target.theta)) < 1e-9);
    }
}

TEST_CASE("pose_correspondences basic and oracle cases") {
    const MapSequence q = straight_map(20, 1.0, 4);
    auto identity = pose_correspondences(q.poses, q.poses, 10.0);
    for (int i = 0; i < 20; ++i) CHECK(identity[i] == i + 1);

    std::vector<Pose2> displaced;
    for (const auto& p : q.poses) displaced.emplace_back(p.x + 50.0, p.y, p.theta);
    for (const int r : pose_correspondences(displaced, q.poses, 10.0)) CHECK(r == 0);

    Rng rng(72);
    std::vector<Pose2> shuffled = q.poses;
    for (auto& p : shuffled) p = Pose2(p.x + rng.uniform(-0.3, 0.3), p.y + rng.uniform(-0.3, 0.3), p.theta);
    for (int i = 0; i < 50; ++i) {
        const std::size_t a = rng.uniform_index(shuffled.size());
        const std::size_t b = rng.uniform_index(shuffled.size());
        std::swap(shuffled[a], shuffled[b]);
    }
    CHECK(pose_correspondences(shuffled, q.poses, 10.0) ==
          oracle::exhaustive_assignment(shuffled, q.poses, 10.0));

    CHECK_THROWS_AS(pose_correspondences({}, q.poses, 10.0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Initial hypotheses

TEST_CASE("initial_hypotheses scores a perfect seed with the full pooled count") {
    const MapSequence q = straight_map(10, 1.0, 5);
    std::vector<Correspondence> pooled;
    for (int i = 0; i < 10; ++i) pooled.push_back({i, i, 0.1 * i});
    const auto hyps = initial_hypotheses(q, q, pooled, 1, pooled);
    REQUIRE(hyps.size() == 1);
    CHECK(hyps[0].score == static_cast<int>(pooled.size()));
    CHECK(hyps[0].constraints.size() == 1);

    CHECK(initial_hypotheses(q, q, {}, 5, {}).empty());
}

TEST_CASE("true-match seeds outrank cross-session mismatch seeds") {
    const MapSequence q = straight_map(30, 1.0, 6);
    const MapSequence r = straight_map(30, 1.0, 7, 0.0, 10.0);  // overlap for q10..q29
    const Correspondence decoy{0, 25, 0.1};   // q0 at x=0, r25 at x=35: wrong
    const Correspondence truth{15, 5, 0.2};   // both at x=15: right
    std::vector<Correspondence> pooled{decoy, truth, {10, 0, 0.3}, {12, 2, 0.3},
                                       {20, 10, 0.3}, {25, 15, 0.3}, {29, 19, 0.3}};
    const std::vector<Correspondence> ranked{decoy, truth};
    MatchConfig cfg;
    cfg.k = 2;
    auto hyps = initial_hypotheses(q, r, ranked, cfg.k, pooled, cfg);
    REQUIRE(hyps.size() == 2);
    CHECK(hyps[0].score < hyps[1].score);  // decoy-seeded scores below truth-seeded
    detail::rank_by_score(hyps);
    CHECK(hyps[0].seed.query_index == truth.query_index);
}

// ---------------------------------------------------------------------------
// Merge and deform

TEST_CASE("merge_maps structural counts and zero-noise coincidence") {
    const MapSequence q = straight_map(8, 1.0, 8);
    const MapSequence r = straight_map(6, 1.0, 9);
    const std::vector<Correspondence> constraints{{2, 2, 0.1}};
    const auto graph = merge_maps(q, r, constraints);
    CHECK(graph.nodes.size() == 8 + 6);
    CHECK(graph.edges.size() == (8 - 1) + (6 - 1) + 1);
    CHECK(graph.anchor == 8);

    const auto res = posegraph::optimize(graph);
    CHECK(res.chi2 < 1e-18);
    // Junction pose pair coincides.
    CHECK(mapmatch::translation_distance(res.poses[2], res.poses[8 + 2]) < 1e-9);

    CHECK_THROWS_AS(merge_maps(q, r, {}), std::invalid_argument);
}

TEST_CASE("contradicting constraints split the discrepancy per the dense oracle") {
    // Query drifted 2 m long by mid-map relative to the reference.
    MapSequence q = straight_map(21, 1.0, 10);
    const MapSequence r = straight_map(21, 1.0, 11);
    for (int i = 0; i < 21; ++i) {
        q.poses[i] = Pose2(q.poses[i].x + 0.1 * i, q.poses[i].y, 0.0);
    }
    for (int i = 0; i + 1 < 21; ++i) q.odometry[i] = Pose2(1.1, 0.0, 0.0);
    const std::vector<Correspondence> constraints{{0, 0, 0.1}, {20, 20, 0.2}};
    const auto graph = merge_maps(q, r, constraints);

    posegraph::OptimizeConfig ocfg;
    ocfg.convergence_tol = 1e-14;
    ocfg.max_iterations = 300;
    const auto res = posegraph::optimize(graph, ocfg);
    const auto dense = oracle::dense_optimize(graph, 400);
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
        CHECK(res.poses[i].x == Catch::Approx(dense[i].x).margin(1e-6));
        CHECK(res.poses[i].y == Catch::Approx(dense[i].y).margin(1e-6));
        CHECK(std::abs(wrap_angle(res.poses[i].theta - dense[i].theta)) < 1e-6);
    }
    // Both junctions end up pulled together well below the 2 m contradiction.
    CHECK(mapmatch::translation_distance(res.poses[20], res.poses[21 + 20]) < 1.0);
}

TEST_CASE("select_next_constraint filters by tp and picks the smallest l2") {
    const MapSequence q = straight_map(10, 1.0, 12);
    std::vector<Correspondence> pooled;
    for (int i = 0; i < 10; ++i) pooled.push_back({i, i, 0.1});
    MatchConfig cfg;
    auto hyps = initial_hypotheses(q, q, pooled, 1, pooled, cfg);
    REQUIRE(hyps.size() == 1);

    // Identical maps: everything is within tp, nothing to add.
    CHECK_FALSE(select_next_constraint(hyps[0], pooled, cfg.tp).has_value());

    // One pair five meters out: that pair.
    std::vector<Correspondence> pooled2 = pooled;
    pooled2.push_back({3, 8, 0.05});  // q3 at x=3, r8 at x=8: 5 m
    const auto pick = select_next_constraint(hyps[0], pooled2, cfg.tp);
    REQUIRE(pick.has_value());
    CHECK(pick->query_index == 3);
    CHECK(pick->ref_index == 8);

    // Mixed set equals the filter-then-argmin oracle.
    Rng rng(73);
    std::vector<Correspondence> mixed;
    for (int i = 0; i < 60; ++i) {
        mixed.push_back({static_cast<int>(rng.uniform_index(10)),
                         static_cast<int>(rng.uniform_index(10)), rng.uniform(0.0, 1.0)});
    }
    const auto got = select_next_constraint(hyps[0], mixed, cfg.tp);
    const Correspondence* expect = nullptr;
    for (const auto& c : mixed) {
        if (c.query_index == c.ref_index) continue;  // used = the seed only; consistent pairs:
        const double d = mapmatch::translation_distance(hyps[0].query_poses[c.query_index],
                                                        hyps[0].ref_poses[c.ref_index]);
        if (d <= cfg.tp) continue;
        bool used = c.query_index == hyps[0].seed.query_index && c.ref_index == hyps[0].seed.ref_index;
        if (used) continue;
        if (!expect || c.l2 < expect->l2 ||
            (c.l2 == expect->l2 && (c.query_index < expect->query_index ||
                                    (c.query_index == expect->query_index &&
                                     c.ref_index < expect->ref_index)))) {
            expect = &c;
        }
    }
    if (expect == nullptr) {
        CHECK_FALSE(got.has_value());
    } else {
        REQUIRE(got.has_value());
        CHECK(got->query_index == expect->query_index);
        CHECK(got->ref_index == expect->ref_index);
    }
}

TEST_CASE("deform: a satisfied constraint is a near no-op and children grow by one") {
    const MapSequence q = straight_map(10, 1.0, 13);
    std::vector<Correspondence> pooled;
    for (int i = 0; i < 10; ++i) pooled.push_back({i, i, 0.1});
    MatchConfig cfg;
    auto hyps = initial_hypotheses(q, q, pooled, 1, pooled, cfg);
    std::vector<std::string> diags;
    const auto child = deform(hyps[0], pooled[5], q, q, pooled, cfg, 1, diags);
    REQUIRE(child.has_value());
    CHECK(child->constraints.size() == hyps[0].constraints.size() + 1);
    CHECK(child->lineage == hyps[0].id);
    for (int i = 0; i < 10; ++i) {
        CHECK(mapmatch::translation_distance(child->query_poses[i], hyps[0].query_poses[i]) < 1e-4);
        CHECK(mapmatch::translation_distance(child->ref_poses[i], hyps[0].ref_poses[i]) < 1e-4);
    }
}

TEST_CASE("deform with a correct far constraint shrinks the endpoint error") {
    // Noisy straight query against a noiseless reference on the same line.
    const MapSequence r = straight_map(100, 1.0, 14);
    MapSequence q = straight_map(100, 1.0, 15, 0.01);
    std::vector<Correspondence> pooled{{0, 0, 0.1}, {95, 95, 0.2}};
    MatchConfig cfg;
    auto hyps = initial_hypotheses(q, r, pooled, 1, pooled, cfg);
    const double before = mapmatch::translation_distance(hyps[0].query_poses[99], r.gt_poses[99]);

    std::vector<std::string> diags;
    const auto child = deform(hyps[0], pooled[1], q, r, pooled, cfg, 1, diags);
    REQUIRE(child.has_value());
    const double after = mapmatch::translation_distance(child->query_poses[99], r.gt_poses[99]);
    CHECK(after < before);
}

// ---------------------------------------------------------------------------
// Algorithm variants

TEST_CASE("run_multiple on the five-pose fixture matches the recorded trace") {
    const MapSequence q = straight_map(5, 10.0, 16);
    const MapSequence r = straight_map(5, 10.0, 17);
    const std::vector<Correspondence> ranked{{0, 0, 0.10}, {2, 2, 0.20}, {1, 3, 0.25},
                                             {4, 4, 0.30}, {3, 1, 0.40}};
    MatchConfig cfg;
    cfg.k = 2;
    cfg.k_prime = 1;
    cfg.m = 2;
    const auto res = run_multiple_core(q, r, ranked, ranked, cfg);
    const auto golden = load_golden("run_multiple_trace.json");
    CHECK(trace_json(res) == golden.at("hypotheses"));
}

TEST_CASE("run_single with k = 1 matches the recorded trace") {
    const MapSequence q = straight_map(5, 10.0, 16);
    const MapSequence r = straight_map(5, 10.0, 17);
    const std::vector<Correspondence> ranked{{0, 0, 0.10}, {2, 2, 0.20}, {1, 3, 0.25},
                                             {4, 4, 0.30}, {3, 1, 0.40}};
    MatchConfig cfg;
    cfg.k = 1;
    const auto res = run_single_core(q, r, ranked, ranked, cfg);
    const auto golden = load_golden("run_single_trace.json");
    CHECK(trace_json(res) == golden.at("hypotheses"));
}

TEST_CASE("run_multiple with m = 0 equals the scored initial hypotheses") {
    const MapSequence q = straight_map(12, 1.0, 18);
    std::vector<Correspondence> pooled;
    for (int i = 0; i < 12; ++i) pooled.push_back({i, i, 0.01 * i});
    MatchConfig cfg;
    cfg.k = 4;
    cfg.m = 0;
    const auto res = run_multiple_core(q, q, pooled, pooled, cfg);
    const auto init = initial_hypotheses(q, q, pooled, cfg.k, pooled, cfg);
    REQUIRE(res.hypotheses.size() == init.size());
    for (std::size_t i = 0; i < init.size(); ++i) {
        CHECK(res.hypotheses[i].id == init[i].id);
        CHECK(res.hypotheses[i].score == init[i].score);
        CHECK(res.hypotheses[i].constraints.size() == 1);
    }
}

TEST_CASE("run_naive ranks by seed descriptor distance") {
    const MapSequence q = straight_map(10, 1.0, 19);
    std::vector<Correspondence> ranked{{0, 0, 0.1}, {3, 3, 0.2}, {7, 7, 0.3}};
    MatchConfig cfg;
    cfg.k = 3;
    const auto res = run_naive_core(q, q, ranked, ranked, cfg);
    REQUIRE(res.hypotheses.size() == 3);
    for (std::size_t i = 0; i < res.hypotheses.size(); ++i) {
        CHECK(res.hypotheses[i].rank == static_cast<int>(i) + 1);
        CHECK(res.hypotheses[i].seed.l2 == ranked[i].l2);
        CHECK(res.hypotheses[i].constraints.size() == 1);  // never optimized, never extended
    }
    // Empty correspondences: empty result plus a diagnostic.
    const auto empty = run_naive_core(q, q, {}, {}, cfg);
    CHECK(empty.hypotheses.empty());
    CHECK_FALSE(empty.diagnostics.empty());
}

TEST_CASE("full naive pipeline on identical maps yields a near-identity top transform") {
    const MapSequence map = straight_map(60, 1.0, 20, 0.0, 0.0, 32);
    MatchConfig cfg;
    cfg.bits = 12;
    const auto res = run_naive(map, map, cfg);
    REQUIRE_FALSE(res.hypotheses.empty());
    const Pose2& t = res.hypotheses[0].transform;
    CHECK(std::hypot(t.x, t.y) < 1e-6);
    CHECK(std::abs(t.theta) < 1e-6);
}

TEST_CASE("hypothesis budgets: 110 for multiple, 20 for single, 10 for naive") {
    // Noisy overlapping windows of a shared route provide abundant
    // inconsistent correspondences.
    datagen::DatasetConfig dcfg;
    dcfg.seed = 21;
    dcfg.n_tasks = 1;
    dcfg.master_length_m = 420.0;
    dcfg.map_length_m = 200.0;
    dcfg.min_window_overlap_m = 150.0;
    dcfg.noise_frac = 0.05;
    dcfg.candidate_factor = 6;
    const auto tasks = datagen::generate_dataset(dcfg);
    REQUIRE(tasks.size() == 1);

    MatchConfig cfg;  // defaults: k = 10, k' = 10, m = 10
    const auto multiple = run_multiple(tasks[0].query, tasks[0].ref, cfg);
    CHECK(multiple.hypotheses.size() == 110);
    const auto single = run_single(tasks[0].query, tasks[0].ref, cfg);
    CHECK(single.hypotheses.size() <= 20);
    CHECK(single.hypotheses.size() > 10);
    const auto naive = run_naive(tasks[0].query, tasks[0].ref, cfg);
    CHECK(naive.hypotheses.size() <= 10);

    // Constraint lists are duplicate-free and drawn from the pooled set.
    const auto art = run_retrieval(tasks[0].query, tasks[0].ref, cfg);
    std::set<std::pair<int, int>> pool;
    for (const auto& c : art.correspondences.pooled) pool.insert({c.query_index, c.ref_index});
    for (const auto& h : multiple.hypotheses) {
        std::set<std::pair<int, int>> seen;
        for (const auto& c : h.constraints) {
            CHECK(pool.count({c.query_index, c.ref_index}) == 1);
            CHECK(seen.insert({c.query_index, c.ref_index}).second);
        }
        // Score is a recount under the consistency rule at the current poses.
        CHECK(h.score == consistency_score(h.query_poses, h.ref_poses,
                                           art.correspondences.pooled, cfg.consist_thresh));
        CHECK(h.assignment ==
              mapmatch::nearest_assignment(h.query_poses, h.ref_poses, cfg.consist_thresh));
    }

    // Determinism: the same inputs give an identical ranked output.
    const auto again = run_multiple(tasks[0].query, tasks[0].ref, cfg);
    REQUIRE(again.hypotheses.size() == multiple.hypotheses.size());
    for (std::size_t i = 0; i < again.hypotheses.size(); ++i) {
        CHECK(again.hypotheses[i].id == multiple.hypotheses[i].id);
        CHECK(again.hypotheses[i].score == multiple.hypotheses[i].score);
        CHECK(again.hypotheses[i].constraints.size() == multiple.hypotheses[i].constraints.size());
        for (int p = 0; p < tasks[0].query.size(); ++p) {
            CHECK(again.hypotheses[i].query_poses[p].x == multiple.hypotheses[i].query_poses[p].x);
        }
    }
}

TEST_CASE("zero-noise identical maps reach f-measure 1 and max score at the top") {
    const MapSequence map = straight_map(80, 1.0, 22, 0.0, 0.0, 32);
    MatchConfig cfg;
    cfg.bits = 12;
    const auto res = run_multiple(map, map, cfg);
    REQUIRE_FALSE(res.hypotheses.empty());
    const auto qualities = bench::hypothesis_qualities(res.hypotheses, map, map, cfg.consist_thresh);
    CHECK(qualities[0].f_measure == 1.0);
}

TEST_CASE("single beats naive on drifted maps needing one loop (statistical)") {
    int single_wins = 0, ties = 0;
    const int trials = 8;
    for (int s = 0; s < trials; ++s) {
        datagen::DatasetConfig dcfg;
        dcfg.seed = 400 + s;
        dcfg.n_tasks = 1;
        dcfg.master_length_m = 360.0;
        dcfg.map_length_m = 180.0;
        dcfg.min_window_overlap_m = 130.0;
        dcfg.noise_frac = 0.06;
        dcfg.candidate_factor = 6;
        const auto tasks = datagen::generate_dataset(dcfg);
        MatchConfig cfg;
        const auto naive = run_naive(tasks[0].query, tasks[0].ref, cfg);
        const auto single = run_single(tasks[0].query, tasks[0].ref, cfg);
        const auto qn = bench::hypothesis_qualities(naive.hypotheses, tasks[0].query, tasks[0].ref,
                                                    cfg.consist_thresh);
        const auto qs = bench::hypothesis_qualities(single.hypotheses, tasks[0].query, tasks[0].ref,
                                                    cfg.consist_thresh);
        const double fn = evaluation::top_x(qn, 1).f_measure;
        const double fs = evaluation::top_x(qs, 1).f_measure;
        if (fs > fn) ++single_wins;
        if (fs == fn) ++ties;
    }
    CHECK(single_wins + ties >= trials - 1);
    CHECK(single_wins >= 1);
}

TEST_CASE("config validation rejects bad settings") {
    MatchConfig cfg;
    cfg.consist_thresh = 0.5;  // below tp
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    MatchConfig cfg2;
    cfg2.k = 0;
    CHECK_THROWS_AS(cfg2.validate(), std::invalid_argument);
    CHECK_FALSE(algorithm_from_name("bogus").has_value());
    CHECK(algorithm_from_name("multiple").has_value());
}
