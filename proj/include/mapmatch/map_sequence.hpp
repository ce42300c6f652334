#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "mapmatch/geometry.hpp"
#include "mapmatch/retrieval.hpp"

namespace mapmatch {

// One mapping session: dead-reckoned poses with the odometry measurements
// they integrate, per-pose descriptors, travel distance along the trajectory,
// and (when available) ground-truth poses. Ground truth may be stripped for
// blind evaluation; everything else is mandatory.
struct MapSequence {
    std::string session_id;
    std::vector<Pose2> poses;                         // dead-reckoned
    std::vector<Pose2> gt_poses;                      // empty when stripped
    std::vector<Pose2> odometry;                      // size() - 1 measured steps
    std::vector<retrieval::Descriptor> descriptors;
    std::vector<double> travel;                       // cumulative meters, strictly increasing
    double spacing_m = 1.0;
    double noise_frac = 0.01;
    std::uint64_t seed = 0;

    int size() const { return static_cast<int>(poses.size()); }
    bool has_ground_truth() const { return !gt_poses.empty(); }

    void validate() const {
        const std::size_t n = poses.size();
        if (n == 0) throw std::invalid_argument("MapSequence: empty");
        if (descriptors.size() != n) throw std::invalid_argument("MapSequence: descriptor count mismatch");
        if (travel.size() != n) throw std::invalid_argument("MapSequence: travel count mismatch");
        if (!gt_poses.empty() && gt_poses.size() != n) {
            throw std::invalid_argument("MapSequence: ground-truth count mismatch");
        }
        if (odometry.size() + 1 != n) throw std::invalid_argument("MapSequence: odometry count mismatch");
        for (std::size_t i = 1; i < n; ++i) {
            if (travel[i] <= travel[i - 1]) {
                throw std::invalid_argument("MapSequence: travel must be strictly increasing");
            }
        }
        if (!gt_poses.empty()) {
            if (std::abs(poses[0].x - gt_poses[0].x) > 1e-9 ||
                std::abs(poses[0].y - gt_poses[0].y) > 1e-9 ||
                std::abs(wrap_angle(poses[0].theta - gt_poses[0].theta)) > 1e-9) {
                throw std::invalid_argument("MapSequence: dead reckoning must start at the ground-truth origin");
            }
        }
    }
};

}  // namespace mapmatch
