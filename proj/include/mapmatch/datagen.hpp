#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mapmatch/geometry.hpp"
#include "mapmatch/map_sequence.hpp"
#include "mapmatch/matcher.hpp"
#include "mapmatch/random.hpp"
#include "mapmatch/retrieval.hpp"

namespace mapmatch::datagen {

struct DescriptorParams {
    int dim = 64;
    double place_scale = 15.0;     // meters; length scale of the place field
    double heading_weight = 1.0;   // separation of opposite viewing directions
    double session_noise = 0.02;   // per-session appearance noise
};

struct GenConfig {
    double length_m = 300.0;
    double spacing_m = 1.0;
    double noise_frac = 0.01;
    std::uint64_t seed = 1;
    DescriptorParams descriptor;

    // Trajectory shape: straight runs alternating with bounded-curvature arcs.
    double max_curvature = 0.15;       // rad per meter
    double max_turn_per_arc = 1.1;     // rad
    double straight_min_m = 20.0;
    double straight_max_m = 60.0;

    void validate() const {
        if (spacing_m <= 0.0) throw std::invalid_argument("GenConfig: spacing must be positive");
        if (noise_frac < 0.0 || noise_frac >= 1.0) {
            throw std::invalid_argument("GenConfig: noise_frac must be in [0, 1)");
        }
        if (length_m < 2.0 * spacing_m) {
            throw std::invalid_argument("GenConfig: length must cover at least two steps");
        }
    }
};

// ---------------------------------------------------------------------------
// Ground-truth trajectories

// Smooth random walk sampled once per spacing_m of arc length. Consecutive
// headings differ by at most max_curvature * spacing_m.
inline std::vector<Pose2> generate_trajectory(const GenConfig& cfg, Rng& rng) {
    cfg.validate();
    const int steps = static_cast<int>(std::llround(cfg.length_m / cfg.spacing_m));
    std::vector<Pose2> poses;
    poses.reserve(steps + 1);
    poses.emplace_back(0.0, 0.0, rng.uniform(-kPi, kPi));

    double segment_left = 0.0;  // meters left in the current segment
    double curvature = 0.0;
    for (int i = 0; i < steps; ++i) {
        if (segment_left <= 0.0) {
            if (rng.uniform() < 0.5) {
                segment_left = rng.uniform(cfg.straight_min_m, cfg.straight_max_m);
                curvature = 0.0;
            } else {
                const double mag = rng.uniform(0.25 * cfg.max_curvature, cfg.max_curvature);
                curvature = rng.uniform() < 0.5 ? mag : -mag;
                const double turn = rng.uniform(0.3 * cfg.max_turn_per_arc, cfg.max_turn_per_arc);
                segment_left = std::min(turn / mag, 40.0);
            }
        }
        poses.push_back(compose(poses.back(), Pose2(cfg.spacing_m, 0.0, curvature * cfg.spacing_m)));
        segment_left -= cfg.spacing_m;
    }
    return poses;
}

// Noisy odometry for a ground-truth trajectory. Per-step translation noise is
// noise_frac of the step length per axis; heading noise is noise_frac of the
// turned angle plus a distance-tied floor so straight segments still drift.
// Returns the measured steps and their dead-reckoned integration.
inline std::pair<std::vector<Pose2>, std::vector<Pose2>> simulate_odometry(
    const std::vector<Pose2>& gt_poses, double noise_frac, Rng& rng) {
    if (gt_poses.size() < 2) throw std::invalid_argument("simulate_odometry: need at least 2 poses");
    std::vector<Pose2> odometry;
    std::vector<Pose2> dead_reckoned;
    odometry.reserve(gt_poses.size() - 1);
    dead_reckoned.reserve(gt_poses.size());
    dead_reckoned.push_back(gt_poses[0]);
    for (std::size_t i = 0; i + 1 < gt_poses.size(); ++i) {
        const Pose2 step = between(gt_poses[i], gt_poses[i + 1]);
        const double len = std::hypot(step.x, step.y);
        const double sigma_t = noise_frac * len;
        const double sigma_theta = noise_frac * std::abs(step.theta) + 0.1 * noise_frac * len;
        const Pose2 measured(step.x + rng.gaussian(0.0, sigma_t),
                             step.y + rng.gaussian(0.0, sigma_t),
                             step.theta + rng.gaussian(0.0, sigma_theta));
        odometry.push_back(measured);
        dead_reckoned.push_back(compose(dead_reckoned.back(), measured));
    }
    return {std::move(odometry), std::move(dead_reckoned)};
}

// ---------------------------------------------------------------------------
// Synthetic appearance

// Environment-wide descriptor fields shared by every session: random Fourier
// features of position (length scale place_scale) plus a heading component
// that separates opposite viewing directions.
class DescriptorField {
public:
    DescriptorField(const DescriptorParams& params, std::uint64_t env_seed) : params_(params) {
        Rng rng(env_seed);
        freq_x_.resize(params.dim);
        freq_y_.resize(params.dim);
        place_phase_.resize(params.dim);
        heading_phase_.resize(params.dim);
        const double inv_scale = 1.0 / params.place_scale;
        for (int j = 0; j < params.dim; ++j) {
            freq_x_[j] = rng.gaussian(0.0, inv_scale);
            freq_y_[j] = rng.gaussian(0.0, inv_scale);
            place_phase_[j] = rng.uniform(0.0, 2.0 * kPi);
            heading_phase_[j] = rng.uniform(0.0, 2.0 * kPi);
        }
    }

    // Noise-free appearance at a viewpoint.
    retrieval::Descriptor at(const Pose2& p) const {
        retrieval::Descriptor d(params_.dim);
        const double amp = std::sqrt(2.0 / params_.dim);
        for (int j = 0; j < params_.dim; ++j) {
            d[j] = amp * std::cos(freq_x_[j] * p.x + freq_y_[j] * p.y + place_phase_[j]) +
                   params_.heading_weight * amp * std::cos(p.theta - heading_phase_[j]);
        }
        return d;
    }

    const DescriptorParams& params() const { return params_; }

private:
    DescriptorParams params_;
    std::vector<double> freq_x_, freq_y_, place_phase_, heading_phase_;
};

inline std::vector<retrieval::Descriptor> synthesize_descriptors(
    const std::vector<Pose2>& gt_poses, const DescriptorField& field, double session_noise,
    Rng& rng) {
    std::vector<retrieval::Descriptor> out;
    out.reserve(gt_poses.size());
    for (const Pose2& p : gt_poses) {
        retrieval::Descriptor d = field.at(p);
        if (session_noise > 0.0) {
            for (int j = 0; j < d.size(); ++j) d[j] += rng.gaussian(0.0, session_noise);
        }
        out.push_back(std::move(d));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Map assembly

inline std::vector<double> travel_from(const std::vector<Pose2>& gt_poses) {
    std::vector<double> travel(gt_poses.size(), 0.0);
    for (std::size_t i = 1; i < gt_poses.size(); ++i) {
        travel[i] = travel[i - 1] + std::max(translation_distance(gt_poses[i - 1], gt_poses[i]), 1e-9);
    }
    return travel;
}

inline MapSequence make_map(std::string session_id, std::vector<Pose2> gt_poses,
                            const DescriptorField& field, double noise_frac, double session_noise,
                            std::uint64_t seed, double spacing_m = 1.0) {
    MapSequence map;
    map.session_id = std::move(session_id);
    map.seed = seed;
    map.spacing_m = spacing_m;
    map.noise_frac = noise_frac;
    Rng odo_rng(mix_seed(seed, 1));
    auto [odometry, poses] = simulate_odometry(gt_poses, noise_frac, odo_rng);
    map.odometry = std::move(odometry);
    map.poses = std::move(poses);
    Rng desc_rng(mix_seed(seed, 2));
    map.descriptors = synthesize_descriptors(gt_poses, field, session_noise, desc_rng);
    map.travel = travel_from(gt_poses);
    map.gt_poses = std::move(gt_poses);
    map.validate();
    return map;
}

// ---------------------------------------------------------------------------
// Dataset protocol

struct RetrievalParams {
    int nb = 1;
    int nr = 10;
    int bucket_cap = 100;
    int bits = 20;
    std::uint64_t code_seed = 12345;
    // Acceptance gate for SELF-retrieval matches only. Ranked retrieval has
    // no absolute quality cutoff, so rare code-bucket collisions between
    // unrelated places would otherwise read as long-range loop closures.
    double self_match_l2 = 0.8;
};

inline matcher::MatchConfig retrieval_only_config(const RetrievalParams& p) {
    matcher::MatchConfig cfg;
    cfg.nb = p.nb;
    cfg.nr = p.nr;
    cfg.bucket_cap = p.bucket_cap;
    cfg.bits = p.bits;
    cfg.code_seed = p.code_seed;
    return cfg;
}

// Self-retrieval: the map queried against its own index, pooled hits gated
// by the self-match quality threshold.
inline std::vector<retrieval::Correspondence> self_correspondences(const MapSequence& map,
                                                                   const RetrievalParams& params) {
    const auto art = matcher::run_retrieval(map, map, retrieval_only_config(params));
    std::vector<retrieval::Correspondence> matches;
    for (const auto& c : art.correspondences.pooled) {
        if (c.l2 <= params.self_match_l2) matches.push_back(c);
    }
    return matches;
}

// A trajectory has a large loop when two of its poses are more than
// loop_thresh_m apart in travel distance yet matched by a self-retrieval
// correspondence. Loop-less is the absence of any such pair.
inline bool is_loopless(const MapSequence& map,
                        const std::vector<retrieval::Correspondence>& self_corrs,
                        double loop_thresh_m = 100.0) {
    for (const auto& c : self_corrs) {
        if (std::abs(map.travel[c.query_index] - map.travel[c.ref_index]) > loop_thresh_m) {
            return false;
        }
    }
    return true;
}

// Maximum travel-distance spread among reference poses that match some query
// image; zero when fewer than two distinct reference poses are matched.
inline double view_overlap(const MapSequence& /*query_map*/, const MapSequence& ref_map,
                           const std::vector<retrieval::Correspondence>& correspondences) {
    double lo = 0.0, hi = 0.0;
    bool first = true;
    int first_index = -1;
    bool distinct = false;
    for (const auto& c : correspondences) {
        const double t = ref_map.travel[c.ref_index];
        if (first) {
            lo = hi = t;
            first_index = c.ref_index;
            first = false;
        } else {
            if (c.ref_index != first_index) distinct = true;
            lo = std::min(lo, t);
            hi = std::max(hi, t);
        }
    }
    if (first || !distinct) return 0.0;
    return hi - lo;
}

struct TaskPair {
    MapSequence query;
    MapSequence ref;
    double overlap = 0.0;
    int environment = 0;
    std::string task_id;
};

// Top-n candidates by descending view overlap; zero-overlap pairs are
// dropped, ties keep candidate order.
inline std::vector<TaskPair> select_task_pairs(std::vector<TaskPair> candidates, int n,
                                               std::vector<std::string>* warnings = nullptr) {
    std::erase_if(candidates, [](const TaskPair& t) { return t.overlap <= 0.0; });
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const TaskPair& a, const TaskPair& b) { return a.overlap > b.overlap; });
    if (static_cast<int>(candidates.size()) > n) candidates.resize(n);
    if (static_cast<int>(candidates.size()) < n && warnings) {
        warnings->push_back("only " + std::to_string(candidates.size()) + " of " +
                            std::to_string(n) + " requested task pairs have positive view overlap");
    }
    return candidates;
}

struct DatasetConfig {
    std::uint64_t seed = 7;
    int n_tasks = 10;
    int environments = 1;
    int sessions = 4;
    double master_length_m = 800.0;
    double map_length_m = 260.0;
    double min_window_overlap_m = 120.0;
    double spacing_m = 1.0;
    double noise_frac = 0.01;
    bool precise_ref = false;      // reference maps built without odometry noise
    int candidate_factor = 3;      // candidate window pairs per requested task
    double loop_thresh_m = 100.0;

    // Per-session deviation from the master route.
    double session_jitter_xy = 0.3;
    double session_jitter_theta = 0.03;
    double session_jitter_wavelength_m = 60.0;

    DescriptorParams descriptor;
    RetrievalParams retrieval;
    GenConfig master_gen() const {
        GenConfig g;
        g.length_m = master_length_m;
        g.spacing_m = spacing_m;
        g.noise_frac = noise_frac;
        g.descriptor = descriptor;
        return g;
    }
};

namespace detail {

// Smooth pseudo-random 1-D signal in [-1, 1], band-limited around wavelength.
inline double smooth_signal(double t, double wavelength, const double* phases) {
    double v = 0.0;
    for (int h = 1; h <= 3; ++h) {
        v += std::sin(2.0 * kPi * h * t / wavelength + phases[h - 1]) / h;
    }
    return v / 1.8333;
}

// A session's pass over the master route: the master poses perturbed by a
// smooth per-session field, so repeated traversals are close but not equal.
inline std::vector<Pose2> session_route(const std::vector<Pose2>& master,
                                        const std::vector<double>& master_travel,
                                        const DatasetConfig& cfg, std::uint64_t session_seed) {
    Rng rng(session_seed);
    double phases[9];
    for (double& p : phases) p = rng.uniform(0.0, 2.0 * kPi);
    std::vector<Pose2> route;
    route.reserve(master.size());
    for (std::size_t i = 0; i < master.size(); ++i) {
        const double t = master_travel[i];
        const double dx = cfg.session_jitter_xy * smooth_signal(t, cfg.session_jitter_wavelength_m, phases);
        const double dy = cfg.session_jitter_xy * smooth_signal(t, cfg.session_jitter_wavelength_m, phases + 3);
        const double dth = cfg.session_jitter_theta * smooth_signal(t, cfg.session_jitter_wavelength_m, phases + 6);
        route.push_back(compose(master[i], Pose2(dx, dy, dth)));
    }
    return route;
}

}  // namespace detail

// Generates n_tasks (query, reference) map pairs following the dataset
// protocol: per environment, a master route traversed by several sessions;
// overlapping windows cut from two different sessions form candidate pairs;
// candidates must be loop-less on both sides and have positive view overlap;
// the largest-overlap candidates win. Throws when the budget of candidates
// cannot satisfy the request.
inline std::vector<TaskPair> generate_dataset(const DatasetConfig& cfg,
                                              std::vector<std::string>* diagnostics = nullptr) {
    if (cfg.n_tasks <= 0 || cfg.environments <= 0 || cfg.sessions < 2) {
        throw std::invalid_argument("generate_dataset: need n_tasks > 0 and at least 2 sessions");
    }
    if (cfg.map_length_m + 2.0 * cfg.spacing_m > cfg.master_length_m) {
        throw std::invalid_argument("generate_dataset: map_length_m must fit inside master_length_m");
    }
    const int per_env = (cfg.n_tasks + cfg.environments - 1) / cfg.environments;
    std::vector<TaskPair> selected;

    for (int env = 0; env < cfg.environments; ++env) {
        const std::uint64_t env_seed = mix_seed(cfg.seed, 1000 + env);
        Rng env_rng(env_seed);
        const GenConfig master_cfg = cfg.master_gen();
        const std::vector<Pose2> master = generate_trajectory(master_cfg, env_rng);
        const std::vector<double> master_travel = travel_from(master);
        const DescriptorField field(cfg.descriptor, mix_seed(env_seed, 2));

        std::vector<std::vector<Pose2>> routes(cfg.sessions);
        for (int s = 0; s < cfg.sessions; ++s) {
            routes[s] = detail::session_route(master, master_travel, cfg, mix_seed(env_seed, 100 + s));
        }

        const int window_poses = static_cast<int>(std::llround(cfg.map_length_m / cfg.spacing_m)) + 1;
        const int max_start = static_cast<int>(master.size()) - window_poses;
        const int min_overlap_poses =
            static_cast<int>(std::llround(cfg.min_window_overlap_m / cfg.spacing_m));
        const int n_candidates = per_env * cfg.candidate_factor;

        std::vector<TaskPair> candidates;
        Rng cand_rng(mix_seed(env_seed, 3));
        for (int c = 0; c < n_candidates; ++c) {
            const int sq = static_cast<int>(cand_rng.uniform_index(cfg.sessions));
            int sr = static_cast<int>(cand_rng.uniform_index(cfg.sessions - 1));
            if (sr >= sq) ++sr;
            const int a = max_start > 0 ? static_cast<int>(cand_rng.uniform_index(max_start + 1)) : 0;
            const int lo = std::max(0, a - (window_poses - min_overlap_poses));
            const int hi = std::min(max_start, a + (window_poses - min_overlap_poses));
            const int b = lo + static_cast<int>(cand_rng.uniform_index(hi - lo + 1));

            auto window = [&](const std::vector<Pose2>& route, int start) {
                return std::vector<Pose2>(route.begin() + start, route.begin() + start + window_poses);
            };
            const std::uint64_t pair_seed = mix_seed(env_seed, 10000 + c);
            TaskPair task;
            task.environment = env;
            task.query = make_map("env" + std::to_string(env) + "/s" + std::to_string(sq),
                                  window(routes[sq], a), field, cfg.noise_frac,
                                  cfg.descriptor.session_noise, mix_seed(pair_seed, 1), cfg.spacing_m);
            task.ref = make_map("env" + std::to_string(env) + "/s" + std::to_string(sr),
                                window(routes[sr], b), field,
                                cfg.precise_ref ? 0.0 : cfg.noise_frac,
                                cfg.descriptor.session_noise, mix_seed(pair_seed, 2), cfg.spacing_m);

            if (!is_loopless(task.query, self_correspondences(task.query, cfg.retrieval),
                             cfg.loop_thresh_m) ||
                !is_loopless(task.ref, self_correspondences(task.ref, cfg.retrieval),
                             cfg.loop_thresh_m)) {
                if (diagnostics) {
                    diagnostics->push_back("env " + std::to_string(env) + " candidate " +
                                           std::to_string(c) + " rejected: large loop");
                }
                continue;
            }
            const auto art = matcher::run_retrieval(task.query, task.ref,
                                                    retrieval_only_config(cfg.retrieval));
            task.overlap = view_overlap(task.query, task.ref, art.correspondences.pooled);
            candidates.push_back(std::move(task));
        }

        std::vector<std::string> warnings;
        auto chosen = select_task_pairs(std::move(candidates), per_env, &warnings);
        if (diagnostics) {
            for (auto& w : warnings) diagnostics->push_back("env " + std::to_string(env) + ": " + w);
        }
        for (auto& t : chosen) selected.push_back(std::move(t));
    }

    if (static_cast<int>(selected.size()) > cfg.n_tasks) selected.resize(cfg.n_tasks);
    if (static_cast<int>(selected.size()) < cfg.n_tasks) {
        throw std::runtime_error(
            "generate_dataset: only " + std::to_string(selected.size()) + " of " +
            std::to_string(cfg.n_tasks) +
            " task pairs satisfied the loop-less and view-overlap requirements; "
            "increase candidate_factor, master_length_m, or window overlap");
    }
    for (std::size_t i = 0; i < selected.size(); ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "task_%02zu", i);
        selected[i].task_id = buf;
    }
    return selected;
}

}  // namespace mapmatch::datagen
