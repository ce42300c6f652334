#pragma once

#include <vector>

#include "mapmatch/geometry.hpp"

namespace mapmatch {

// Nearest-neighbor pose assignment under a consistency threshold. Entry i is
// the 1-based index of the closest reference pose when that distance is below
// thresh, and 0 when no reference pose qualifies. Ties keep the lowest
// reference index.
inline std::vector<int> nearest_assignment(const std::vector<Pose2>& query,
                                           const std::vector<Pose2>& ref, double thresh) {
    std::vector<int> assignment(query.size(), 0);
    for (std::size_t i = 0; i < query.size(); ++i) {
        double best = thresh;
        int best_idx = 0;
        for (std::size_t j = 0; j < ref.size(); ++j) {
            const double d = translation_distance(query[i], ref[j]);
            if (d < best) {
                best = d;
                best_idx = static_cast<int>(j) + 1;
            }
        }
        assignment[i] = best_idx;
    }
    return assignment;
}

}  // namespace mapmatch
