#pragma once

// Independent reference implementations used only to check the library:
// homogeneous-matrix SE(2) arithmetic, brute-force retrieval scans, numeric
// Jacobians, and a dense Gauss-Newton solver. These must not share code with
// the implementation paths they verify.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "mapmatch/geometry.hpp"
#include "mapmatch/posegraph.hpp"
#include "mapmatch/retrieval.hpp"

namespace oracle {

using mapmatch::Pose2;

inline Eigen::Matrix3d mat3(const Pose2& p) {
    Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
    m(0, 0) = std::cos(p.theta);
    m(0, 1) = -std::sin(p.theta);
    m(1, 0) = std::sin(p.theta);
    m(1, 1) = std::cos(p.theta);
    m(0, 2) = p.x;
    m(1, 2) = p.y;
    return m;
}

inline Pose2 pose_from_mat3(const Eigen::Matrix3d& m) {
    return Pose2(m(0, 2), m(1, 2), std::atan2(m(1, 0), m(0, 0)));
}

inline Pose2 compose(const Pose2& a, const Pose2& b) { return pose_from_mat3(mat3(a) * mat3(b)); }

inline Pose2 inverse(const Pose2& p) { return pose_from_mat3(mat3(p).inverse()); }

inline Pose2 between(const Pose2& a, const Pose2& b) {
    return pose_from_mat3(mat3(a).inverse() * mat3(b));
}

// Angle reduction by repeated +-2*pi steps (no fmod).
inline double wrap_by_reduction(double theta) {
    while (theta > mapmatch::kPi) theta -= 2.0 * mapmatch::kPi;
    while (theta <= -mapmatch::kPi) theta += 2.0 * mapmatch::kPi;
    return theta;
}

// Linear-scan retrieval oracle: Hamming filter against stored bucket codes,
// bucket-cap exclusion, exact L2 ranking, index tie break.
inline std::vector<mapmatch::retrieval::Correspondence> brute_force_query(
    const std::vector<mapmatch::retrieval::Descriptor>& stored,
    const mapmatch::retrieval::CodeModel& code_model, const mapmatch::retrieval::Descriptor& q,
    int nb, int nr, int bucket_cap, int query_idx = 0) {
    using mapmatch::retrieval::BinaryCode;
    std::vector<BinaryCode> codes(stored.size());
    for (std::size_t i = 0; i < stored.size(); ++i) {
        codes[i] = mapmatch::retrieval::encode_binary(code_model, stored[i]);
    }
    std::vector<int> bucket_size(1u << code_model.bits(), 0);
    for (const BinaryCode c : codes) ++bucket_size[c];
    const BinaryCode qcode = mapmatch::retrieval::encode_binary(code_model, q);
    std::vector<mapmatch::retrieval::Correspondence> hits;
    for (std::size_t i = 0; i < stored.size(); ++i) {
        if (mapmatch::retrieval::hamming_distance(codes[i], qcode) > nb) continue;
        if (bucket_size[codes[i]] > bucket_cap) continue;
        hits.push_back({query_idx, static_cast<int>(i), (stored[i] - q).norm()});
    }
    std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
        if (a.l2 != b.l2) return a.l2 < b.l2;
        return a.ref_index < b.ref_index;
    });
    if (static_cast<int>(hits.size()) > nr) hits.resize(nr);
    return hits;
}

// Central finite differences of an edge residual.
inline void numeric_edge_jacobians(const mapmatch::posegraph::Edge& edge,
                                   const std::vector<Pose2>& poses, Eigen::Matrix3d& ji,
                                   Eigen::Matrix3d& jj, double h = 1e-6) {
    auto residual_at = [&](int node, int comp, double delta) {
        std::vector<Pose2> perturbed = poses;
        Pose2& p = perturbed[node];
        if (comp == 0) p = Pose2(p.x + delta, p.y, p.theta);
        if (comp == 1) p = Pose2(p.x, p.y + delta, p.theta);
        if (comp == 2) p = Pose2(p.x, p.y, p.theta + delta);
        return mapmatch::posegraph::edge_residual(edge, perturbed);
    };
    for (int comp = 0; comp < 3; ++comp) {
        const Eigen::Vector3d fi = residual_at(edge.i, comp, h);
        const Eigen::Vector3d bi = residual_at(edge.i, comp, -h);
        const Eigen::Vector3d fj = residual_at(edge.j, comp, h);
        const Eigen::Vector3d bj = residual_at(edge.j, comp, -h);
        for (int r = 0; r < 3; ++r) {
            double di = fi[r] - bi[r];
            double dj = fj[r] - bj[r];
            if (r == 2) {  // heading residuals live on the circle
                di = wrap_by_reduction(di);
                dj = wrap_by_reduction(dj);
            }
            ji(r, comp) = di / (2.0 * h);
            jj(r, comp) = dj / (2.0 * h);
        }
    }
}

// Dense Gauss-Newton on a pose graph with numeric Jacobians; independent of
// the sparse analytic solver it is used to check.
inline std::vector<Pose2> dense_optimize(const mapmatch::posegraph::PoseGraph& graph,
                                         int iterations = 200) {
    const int n = static_cast<int>(graph.nodes.size());
    std::vector<int> offset(n, -1);
    int dim = 0;
    for (int i = 0; i < n; ++i) {
        if (i == graph.anchor) continue;
        offset[i] = dim;
        dim += 3;
    }
    std::vector<Pose2> poses = graph.nodes;
    if (dim == 0) return poses;
    for (int iter = 0; iter < iterations; ++iter) {
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
        for (const auto& e : graph.edges) {
            Eigen::Matrix3d ji, jj;
            numeric_edge_jacobians(e, poses, ji, jj, 1e-7);
            const Eigen::Vector3d r = mapmatch::posegraph::edge_residual(e, poses);
            const int oi = offset[e.i];
            const int oj = offset[e.j];
            if (oi >= 0) {
                h.block<3, 3>(oi, oi) += ji.transpose() * e.information * ji;
                b.segment<3>(oi) += ji.transpose() * e.information * r;
            }
            if (oj >= 0) {
                h.block<3, 3>(oj, oj) += jj.transpose() * e.information * jj;
                b.segment<3>(oj) += jj.transpose() * e.information * r;
            }
            if (oi >= 0 && oj >= 0) {
                h.block<3, 3>(oi, oj) += ji.transpose() * e.information * jj;
                h.block<3, 3>(oj, oi) += jj.transpose() * e.information * ji;
            }
        }
        if (b.lpNorm<Eigen::Infinity>() < 1e-14) break;
        h.diagonal().array() += 1e-9;
        const Eigen::VectorXd delta = h.ldlt().solve(-b);
        for (int i = 0; i < n; ++i) {
            if (offset[i] < 0) continue;
            poses[i] = Pose2(poses[i].x + delta[offset[i]], poses[i].y + delta[offset[i] + 1],
                             poses[i].theta + delta[offset[i] + 2]);
        }
        if (delta.lpNorm<Eigen::Infinity>() < 1e-13) break;
    }
    return poses;
}

// Exhaustive nearest-neighbor assignment (1-based, 0 = unmatched).
inline std::vector<int> exhaustive_assignment(const std::vector<Pose2>& query,
                                              const std::vector<Pose2>& ref, double thresh) {
    std::vector<int> out(query.size(), 0);
    for (std::size_t i = 0; i < query.size(); ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < ref.size(); ++j) {
            const double d = std::hypot(query[i].x - ref[j].x, query[i].y - ref[j].y);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(j) + 1;
            }
        }
        out[i] = best_d < thresh ? best : 0;
    }
    return out;
}

}  // namespace oracle
