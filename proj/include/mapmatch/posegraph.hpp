#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "mapmatch/geometry.hpp"

namespace mapmatch::posegraph {

enum class EdgeKind { Odometry, Loop };

struct Edge {
    int i = 0;
    int j = 0;
    Pose2 measurement;           // expected between(node_i, node_j)
    Eigen::Matrix3d information = Eigen::Matrix3d::Identity();
    EdgeKind kind = EdgeKind::Odometry;
};

// Inverse covariance of the simulated odometry noise model: per-axis
// translation sigma = noise_frac * step, heading sigma =
// noise_frac * |dtheta| + 0.1 * noise_frac * step. Loop closures use fixed
// sigmas instead. Floors keep the matrices finite for noiseless maps.
inline Eigen::Matrix3d default_information(EdgeKind kind, double step_length,
                                           double dtheta = 0.0, double noise_frac = 0.01,
                                           double loop_sigma_t = 0.1,
                                           double loop_sigma_theta = 0.05) {
    double sigma_t, sigma_theta;
    if (kind == EdgeKind::Odometry) {
        if (step_length <= 0.0) {
            throw std::invalid_argument("default_information: step length must be positive");
        }
        sigma_t = std::max(noise_frac * step_length, 1e-3);
        sigma_theta = std::max(noise_frac * std::abs(dtheta) + 0.1 * noise_frac * step_length, 1e-4);
    } else {
        sigma_t = loop_sigma_t;
        sigma_theta = loop_sigma_theta;
    }
    Eigen::Matrix3d info = Eigen::Matrix3d::Zero();
    info(0, 0) = 1.0 / (sigma_t * sigma_t);
    info(1, 1) = 1.0 / (sigma_t * sigma_t);
    info(2, 2) = 1.0 / (sigma_theta * sigma_theta);
    return info;
}

class PoseGraph {
public:
    std::vector<Pose2> nodes;
    std::vector<Edge> edges;
    int anchor = 0;

    int add_node(const Pose2& p) {
        nodes.push_back(p);
        return static_cast<int>(nodes.size()) - 1;
    }

    void add_edge(int i, int j, const Pose2& measurement, const Eigen::Matrix3d& information,
                  EdgeKind kind = EdgeKind::Odometry) {
        if (i < 0 || j < 0 || i >= static_cast<int>(nodes.size()) ||
            j >= static_cast<int>(nodes.size()) || i == j) {
            throw std::invalid_argument("PoseGraph::add_edge: invalid node indices");
        }
        if (!information.isApprox(information.transpose(), 1e-9)) {
            throw std::invalid_argument("PoseGraph::add_edge: information matrix not symmetric");
        }
        Eigen::LLT<Eigen::Matrix3d> llt(information);
        if (llt.info() != Eigen::Success) {
            throw std::invalid_argument("PoseGraph::add_edge: information matrix not positive definite");
        }
        edges.push_back({i, j, measurement, information, kind});
    }
};

// Residual of one edge in the measurement frame: zero when the estimates
// satisfy the measurement, and (1,0,0) when node j overshoots by one meter
// along the predicted x-axis.
inline Eigen::Vector3d edge_residual(const Edge& edge, const std::vector<Pose2>& poses) {
    const Pose2 r = between(edge.measurement, between(poses[edge.i], poses[edge.j]));
    return {r.x, r.y, r.theta};
}

// Analytic partials of edge_residual with respect to nodes i and j.
inline void edge_jacobians(const Edge& edge, const std::vector<Pose2>& poses,
                           Eigen::Matrix3d& ji, Eigen::Matrix3d& jj) {
    const Pose2& pi = poses[edge.i];
    const Pose2& pj = poses[edge.j];
    const double ci = std::cos(pi.theta), si = std::sin(pi.theta);
    const double cz = std::cos(edge.measurement.theta), sz = std::sin(edge.measurement.theta);

    Eigen::Matrix2d rz_t, ri_t, dri_t;
    rz_t << cz, sz, -sz, cz;
    ri_t << ci, si, -si, ci;
    dri_t << -si, ci, -ci, -si;  // d/dtheta_i of R(theta_i)^T

    const Eigen::Vector2d dt(pj.x - pi.x, pj.y - pi.y);
    const Eigen::Matrix2d a = rz_t * ri_t;

    ji.setZero();
    ji.topLeftCorner<2, 2>() = -a;
    ji.topRightCorner<2, 1>() = rz_t * dri_t * dt;
    ji(2, 2) = -1.0;

    jj.setZero();
    jj.topLeftCorner<2, 2>() = a;
    jj(2, 2) = 1.0;
}

struct OptimizeConfig {
    int max_iterations = 50;
    double convergence_tol = 1e-9;  // relative chi2 change
    double damping = 1e-4;          // initial LM lambda
};

struct OptimizeResult {
    std::vector<Pose2> poses;
    double chi2 = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> chi2_history;  // chi2 at start, then after each accepted step
};

namespace detail {

inline double graph_chi2(const PoseGraph& graph, const std::vector<Pose2>& poses) {
    double chi2 = 0.0;
    for (const Edge& e : graph.edges) {
        const Eigen::Vector3d r = edge_residual(e, poses);
        chi2 += r.dot(e.information * r);
    }
    return chi2;
}

inline void check_connected(const PoseGraph& graph) {
    const int n = static_cast<int>(graph.nodes.size());
    std::vector<int> parent(n);
    for (int i = 0; i < n; ++i) parent[i] = i;
    auto find = [&](int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (const Edge& e : graph.edges) {
        parent[find(e.i)] = find(e.j);
    }
    const int root = find(graph.anchor);
    for (int i = 0; i < n; ++i) {
        if (find(i) != root) {
            throw std::runtime_error("optimize: graph disconnected from anchor at node " +
                                     std::to_string(i));
        }
    }
}

}  // namespace detail

// Levenberg-Marquardt over the stacked weighted residuals. The anchor node is
// excluded from the state, angles are re-wrapped after every update, and a
// step is applied only when it does not increase chi2.
inline OptimizeResult optimize(const PoseGraph& graph, const OptimizeConfig& config = {}) {
    const int n = static_cast<int>(graph.nodes.size());
    if (n == 0) throw std::invalid_argument("optimize: empty graph");
    if (graph.anchor < 0 || graph.anchor >= n) {
        throw std::invalid_argument("optimize: anchor out of range");
    }
    detail::check_connected(graph);

    // State layout: all nodes except the anchor, 3 values each.
    std::vector<int> offset(n, -1);
    int dim = 0;
    for (int i = 0; i < n; ++i) {
        if (i == graph.anchor) continue;
        offset[i] = dim;
        dim += 3;
    }

    OptimizeResult result;
    result.poses = graph.nodes;
    result.chi2 = detail::graph_chi2(graph, result.poses);
    result.chi2_history.push_back(result.chi2);
    if (dim == 0) {
        result.iterations = 1;
        result.converged = true;
        return result;
    }

    double lambda = config.damping;
    // Weighted SSE at the dust level means the estimates already satisfy
    // every measurement; do not chase rounding noise.
    const double chi2_zero = 1e-20 * static_cast<double>(std::max<std::size_t>(1, graph.edges.size()));
    for (int iter = 1; iter <= config.max_iterations; ++iter) {
        result.iterations = iter;
        if (result.chi2 <= chi2_zero) {
            result.converged = true;
            break;
        }

        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(graph.edges.size() * 36);
        Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
        for (const Edge& e : graph.edges) {
            const Eigen::Vector3d r = edge_residual(e, result.poses);
            Eigen::Matrix3d ji, jj;
            edge_jacobians(e, result.poses, ji, jj);
            const int oi = offset[e.i];
            const int oj = offset[e.j];
            auto add_block = [&](int row, int col, const Eigen::Matrix3d& m) {
                for (int a = 0; a < 3; ++a)
                    for (int c = 0; c < 3; ++c) triplets.emplace_back(row + a, col + c, m(a, c));
            };
            if (oi >= 0) {
                add_block(oi, oi, ji.transpose() * e.information * ji);
                b.segment<3>(oi) += ji.transpose() * e.information * r;
            }
            if (oj >= 0) {
                add_block(oj, oj, jj.transpose() * e.information * jj);
                b.segment<3>(oj) += jj.transpose() * e.information * r;
            }
            if (oi >= 0 && oj >= 0) {
                const Eigen::Matrix3d hij = ji.transpose() * e.information * jj;
                add_block(oi, oj, hij);
                add_block(oj, oi, hij.transpose());
            }
        }

        if (b.lpNorm<Eigen::Infinity>() < 1e-12) {
            result.converged = true;
            break;
        }

        Eigen::SparseMatrix<double> h(dim, dim);
        h.setFromTriplets(triplets.begin(), triplets.end());

        bool accepted = false;
        for (int attempt = 0; attempt < 12; ++attempt) {
            Eigen::SparseMatrix<double> h_lm = h;
            for (int k = 0; k < dim; ++k) {
                h_lm.coeffRef(k, k) = h.coeff(k, k) * (1.0 + lambda) + 1e-12;
            }
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(h_lm);
            if (solver.info() != Eigen::Success) {
                lambda *= 10.0;
                continue;
            }
            const Eigen::VectorXd delta = solver.solve(-b);
            if (solver.info() != Eigen::Success || !delta.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            std::vector<Pose2> candidate = result.poses;
            for (int i = 0; i < n; ++i) {
                if (offset[i] < 0) continue;
                candidate[i] = Pose2(candidate[i].x + delta[offset[i] + 0],
                                     candidate[i].y + delta[offset[i] + 1],
                                     candidate[i].theta + delta[offset[i] + 2]);
            }
            const double chi2_new = detail::graph_chi2(graph, candidate);
            if (chi2_new <= result.chi2) {
                const double rel = (result.chi2 - chi2_new) / std::max(result.chi2, 1e-300);
                result.poses = std::move(candidate);
                result.chi2 = chi2_new;
                result.chi2_history.push_back(chi2_new);
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                if (rel < config.convergence_tol) {
                    result.converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) {
            // No damped step improves chi2: treat as converged at this point.
            result.converged = true;
            break;
        }
        if (result.converged) break;
    }
    return result;
}

}  // namespace mapmatch::posegraph
