#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "mapmatch/random.hpp"

namespace mapmatch::retrieval {

using Descriptor = Eigen::VectorXd;

// One image correspondence: query pose index, reference pose index, and the
// descriptor L2 distance used for ranking.
struct Correspondence {
    int query_index = 0;
    int ref_index = 0;
    double l2 = 0.0;
};

// ---------------------------------------------------------------------------
// PCA projection

struct PcaModel {
    Eigen::VectorXd mean;        // D
    Eigen::MatrixXd basis;       // d x D, rows orthonormal
    Eigen::VectorXd variances;   // top-d variances, decreasing
    bool rank_deficient = false; // basis padded past the data rank

    int input_dim() const { return static_cast<int>(mean.size()); }
    int output_dim() const { return static_cast<int>(basis.rows()); }
};

// Fits the top-d principal directions of the sample set. Directions beyond
// the data rank come from the SVD's orthonormal completion; the model is
// flagged when that happens.
inline PcaModel fit_pca(const std::vector<Descriptor>& features, int d) {
    const int n = static_cast<int>(features.size());
    if (n == 0) throw std::invalid_argument("fit_pca: no features");
    const int dim = static_cast<int>(features[0].size());
    if (d <= 0 || d > dim) throw std::invalid_argument("fit_pca: bad output dimension");
    if (n < d) throw std::invalid_argument("fit_pca: fewer samples than output dimension");

    Eigen::MatrixXd data(n, dim);
    for (int i = 0; i < n; ++i) {
        if (features[i].size() != dim) {
            throw std::invalid_argument("fit_pca: inconsistent feature dimensions");
        }
        data.row(i) = features[i].transpose();
    }
    PcaModel model;
    model.mean = data.colwise().mean();
    data.rowwise() -= model.mean.transpose();

    Eigen::BDCSVD<Eigen::MatrixXd> svd(data, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    model.basis = svd.matrixV().leftCols(d).transpose();
    model.variances.resize(d);
    for (int i = 0; i < d; ++i) {
        model.variances[i] = sv[i] * sv[i] / static_cast<double>(n);
    }
    model.rank_deficient = sv[d - 1] <= 1e-10 * std::max(sv[0], 1e-300);
    return model;
}

inline Descriptor project(const PcaModel& model, const Descriptor& f) {
    if (f.size() != model.mean.size()) {
        throw std::invalid_argument("project: descriptor dimension mismatch");
    }
    return model.basis * (f - model.mean);
}

// ---------------------------------------------------------------------------
// Compact binary codes

using BinaryCode = std::uint32_t;

// Seeded random-hyperplane sign code over projected descriptors.
struct CodeModel {
    Eigen::MatrixXd hyperplanes; // bits x d
    std::uint64_t seed = 0;

    int bits() const { return static_cast<int>(hyperplanes.rows()); }
    int dim() const { return static_cast<int>(hyperplanes.cols()); }
};

inline CodeModel make_code_model(int bits, int dim, std::uint64_t seed) {
    if (bits <= 0 || bits > 32) throw std::invalid_argument("make_code_model: bits must be in [1,32]");
    if (dim <= 0) throw std::invalid_argument("make_code_model: bad dimension");
    CodeModel model;
    model.seed = seed;
    model.hyperplanes.resize(bits, dim);
    Rng rng(seed);
    for (int b = 0; b < bits; ++b) {
        for (int j = 0; j < dim; ++j) {
            model.hyperplanes(b, j) = rng.gaussian();
        }
    }
    return model;
}

// Bit k is set iff the descriptor lies on the non-negative side of
// hyperplane k (a zero dot product encodes 1).
inline BinaryCode encode_binary(const CodeModel& model, const Descriptor& p) {
    if (p.size() != model.dim()) {
        throw std::invalid_argument("encode_binary: descriptor dimension mismatch");
    }
    BinaryCode code = 0;
    for (int b = 0; b < model.bits(); ++b) {
        if (model.hyperplanes.row(b).dot(p.transpose()) >= 0.0) {
            code |= (BinaryCode{1} << b);
        }
    }
    return code;
}

inline int hamming_distance(BinaryCode a, BinaryCode b) {
    return std::popcount(a ^ b);
}

// All code keys within Hamming distance <= radius of `code`, restricted to
// the lowest `bits` bits. For radius 1 this is exactly bits + 1 keys.
inline std::vector<BinaryCode> hamming_ball_keys(BinaryCode code, int bits, int radius) {
    std::vector<BinaryCode> keys;
    keys.push_back(code);
    std::vector<BinaryCode> frontier{code};
    for (int r = 0; r < radius; ++r) {
        std::vector<BinaryCode> next;
        for (BinaryCode c : frontier) {
            for (int b = 0; b < bits; ++b) {
                const BinaryCode flipped = c ^ (BinaryCode{1} << b);
                if (hamming_distance(flipped, code) == r + 1 &&
                    std::find(keys.begin(), keys.end(), flipped) == keys.end()) {
                    keys.push_back(flipped);
                    next.push_back(flipped);
                }
            }
        }
        frontier = std::move(next);
    }
    return keys;
}

// ---------------------------------------------------------------------------
// Hash index

struct IndexEntry {
    int ref_index = 0;
    Descriptor projected;
};

struct HashIndex {
    std::unordered_map<BinaryCode, std::vector<IndexEntry>> buckets;
    int bucket_cap = 100;
    CodeModel code_model;
    // Raw reference descriptors, retained only when raw-space re-ranking is on.
    std::vector<Descriptor> raw;

    std::size_t size() const {
        std::size_t total = 0;
        for (const auto& [code, entries] : buckets) total += entries.size();
        return total;
    }
};

inline HashIndex build_index(const std::vector<Descriptor>& descriptors,
                             const CodeModel& code_model, int bucket_cap = 100) {
    HashIndex index;
    index.bucket_cap = bucket_cap;
    index.code_model = code_model;
    for (int i = 0; i < static_cast<int>(descriptors.size()); ++i) {
        const BinaryCode code = encode_binary(code_model, descriptors[i]);
        index.buckets[code].push_back({i, descriptors[i]});
    }
    return index;
}

struct QueryConfig {
    int nb = 1;          // Hamming probe radius
    int nr = 10;         // results per query
    bool rerank_raw = false;
};

// Candidates are gathered from every bucket within Hamming distance nb of the
// query code, skipping buckets larger than the cap, then ranked by exact L2
// distance (projected space, or raw space when configured and retained).
// Ties break by ascending reference index.
inline std::vector<Correspondence> query_index(const HashIndex& index, const Descriptor& q,
                                               const QueryConfig& cfg, int query_idx = 0,
                                               const Descriptor* q_raw = nullptr) {
    const BinaryCode qcode = encode_binary(index.code_model, q);
    const bool use_raw = cfg.rerank_raw && q_raw != nullptr && !index.raw.empty();
    std::vector<Correspondence> candidates;
    for (BinaryCode key : hamming_ball_keys(qcode, index.code_model.bits(), cfg.nb)) {
        auto it = index.buckets.find(key);
        if (it == index.buckets.end()) continue;
        if (static_cast<int>(it->second.size()) > index.bucket_cap) continue;
        for (const IndexEntry& e : it->second) {
            const double l2 = use_raw ? (index.raw[e.ref_index] - *q_raw).norm()
                                      : (e.projected - q).norm();
            candidates.push_back({query_idx, e.ref_index, l2});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Correspondence& a, const Correspondence& b) {
        if (a.l2 != b.l2) return a.l2 < b.l2;
        return a.ref_index < b.ref_index;
    });
    if (static_cast<int>(candidates.size()) > cfg.nr) candidates.resize(cfg.nr);
    return candidates;
}

struct CorrespondenceSet {
    std::vector<Correspondence> top;    // globally smallest-l2 correspondences
    std::vector<Correspondence> pooled; // every per-query retrieval hit
};

// Queries the index with every query descriptor, pools all hits, and keeps
// the nr globally best by l2 (ties by query index then reference index).
// The full pooled list is retained for downstream constraint selection.
inline CorrespondenceSet global_correspondences(const std::vector<Descriptor>& query_projected,
                                                const HashIndex& index, const QueryConfig& cfg,
                                                const std::vector<Descriptor>* query_raw = nullptr) {
    CorrespondenceSet out;
    for (int qi = 0; qi < static_cast<int>(query_projected.size()); ++qi) {
        const Descriptor* raw = query_raw ? &(*query_raw)[qi] : nullptr;
        auto hits = query_index(index, query_projected[qi], cfg, qi, raw);
        out.pooled.insert(out.pooled.end(), hits.begin(), hits.end());
    }
    out.top = out.pooled;
    std::stable_sort(out.top.begin(), out.top.end(), [](const Correspondence& a, const Correspondence& b) {
        if (a.l2 != b.l2) return a.l2 < b.l2;
        if (a.query_index != b.query_index) return a.query_index < b.query_index;
        return a.ref_index < b.ref_index;
    });
    if (static_cast<int>(out.top.size()) > cfg.nr) out.top.resize(cfg.nr);
    return out;
}

}  // namespace mapmatch::retrieval
