#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mapmatch/evaluation.hpp"
#include "mapmatch/map_sequence.hpp"
#include "mapmatch/matcher.hpp"
#include "mapmatch/posegraph.hpp"
#include "mapmatch/retrieval.hpp"

namespace mapmatch::io {

using nlohmann::json;

// File/schema problems; mapped to exit code 2 by the CLI.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline json pose_to_json(const Pose2& p) { return json::array({p.x, p.y, p.theta}); }

inline Pose2 pose_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw DataError("expected a [x, y, theta] pose triple");
    return Pose2(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    return out;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open for reading: " + path);
    return in;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Map files: JSON-lines with one header record then one record per pose.
// Record i >= 1 carries the measured odometry step from pose i-1 to pose i;
// record 0 carries a zero step.

inline void save_map(const MapSequence& map, const std::string& path, bool strip_ground_truth = false) {
    map.validate();
    auto out = detail::open_out(path);
    json header{{"type", "header"},
                {"session_id", map.session_id},
                {"spacing_m", map.spacing_m},
                {"noise_frac", map.noise_frac},
                {"seed", map.seed},
                {"descriptor_dim", map.descriptors[0].size()}};
    out << header.dump() << "\n";
    for (int i = 0; i < map.size(); ++i) {
        json rec{{"type", "pose"},
                 {"id", i},
                 {"pose", detail::pose_to_json(map.poses[i])},
                 {"travel", map.travel[i]},
                 {"odom", detail::pose_to_json(i > 0 ? map.odometry[i - 1] : Pose2())}};
        if (map.has_ground_truth() && !strip_ground_truth) {
            rec["gt_pose"] = detail::pose_to_json(map.gt_poses[i]);
        }
        std::vector<double> values(map.descriptors[i].data(),
                                   map.descriptors[i].data() + map.descriptors[i].size());
        rec["descriptor"] = values;
        out << rec.dump() << "\n";
    }
}

inline MapSequence load_map(const std::string& path) {
    auto in = detail::open_in(path);
    MapSequence map;
    std::string line;
    bool have_header = false;
    int expected_dim = -1;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(path + ": invalid JSON line: " + e.what());
        }
        const std::string type = rec.value("type", "");
        if (type == "header") {
            map.session_id = rec.value("session_id", "");
            map.spacing_m = rec.value("spacing_m", 1.0);
            map.noise_frac = rec.value("noise_frac", 0.01);
            map.seed = rec.value("seed", std::uint64_t{0});
            expected_dim = rec.value("descriptor_dim", -1);
            have_header = true;
        } else if (type == "pose") {
            if (!rec.contains("pose") || !rec.contains("descriptor") || !rec.contains("travel")) {
                throw DataError(path + ": pose record missing pose/descriptor/travel");
            }
            map.poses.push_back(detail::pose_from_json(rec["pose"]));
            map.travel.push_back(rec["travel"].get<double>());
            if (map.poses.size() > 1) {
                if (!rec.contains("odom")) throw DataError(path + ": pose record missing odom");
                map.odometry.push_back(detail::pose_from_json(rec["odom"]));
            }
            if (rec.contains("gt_pose")) {
                map.gt_poses.push_back(detail::pose_from_json(rec["gt_pose"]));
            }
            const auto& values = rec["descriptor"];
            retrieval::Descriptor d(values.size());
            for (std::size_t k = 0; k < values.size(); ++k) d[k] = values[k].get<double>();
            if (expected_dim >= 0 && d.size() != expected_dim) {
                throw DataError(path + ": descriptor dimension mismatch against header");
            }
            map.descriptors.push_back(std::move(d));
        } else {
            throw DataError(path + ": unknown record type '" + type + "'");
        }
    }
    if (!have_header) throw DataError(path + ": missing header record");
    if (!map.gt_poses.empty() && map.gt_poses.size() != map.poses.size()) {
        throw DataError(path + ": ground truth present for only part of the map");
    }
    try {
        map.validate();
    } catch (const std::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    return map;
}

// ---------------------------------------------------------------------------
// Externally produced descriptors: JSON-lines of {pose_id, values}.

inline std::vector<retrieval::Descriptor> load_descriptors(const std::string& path) {
    auto in = detail::open_in(path);
    std::vector<std::pair<int, retrieval::Descriptor>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(path + ": invalid JSON line: " + e.what());
        }
        if (!rec.contains("pose_id") || !rec.contains("values")) {
            throw DataError(path + ": descriptor record needs pose_id and values");
        }
        const auto& values = rec["values"];
        retrieval::Descriptor d(values.size());
        for (std::size_t k = 0; k < values.size(); ++k) d[k] = values[k].get<double>();
        rows.emplace_back(rec["pose_id"].get<int>(), std::move(d));
    }
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<retrieval::Descriptor> out;
    out.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].first != static_cast<int>(i)) {
            throw DataError(path + ": pose_id values must cover 0..N-1 exactly");
        }
        out.push_back(std::move(rows[i].second));
    }
    return out;
}

// Replaces a map's descriptors with an imported set (real-feature workflows).
inline void attach_descriptors(MapSequence& map, std::vector<retrieval::Descriptor> descriptors) {
    if (static_cast<int>(descriptors.size()) != map.size()) {
        throw DataError("imported descriptor count does not match the map");
    }
    map.descriptors = std::move(descriptors);
}

// ---------------------------------------------------------------------------
// Retrieval model document: PCA plus binary-code hyperplanes.

inline json retrieval_model_to_json(const retrieval::PcaModel& pca,
                                    const retrieval::CodeModel& code) {
    json j;
    j["seed"] = code.seed;
    j["mean"] = std::vector<double>(pca.mean.data(), pca.mean.data() + pca.mean.size());
    json basis = json::array();
    for (int r = 0; r < pca.basis.rows(); ++r) {
        basis.push_back(std::vector<double>(pca.basis.row(r).begin(), pca.basis.row(r).end()));
    }
    j["basis"] = std::move(basis);
    json planes = json::array();
    for (int r = 0; r < code.hyperplanes.rows(); ++r) {
        planes.push_back(
            std::vector<double>(code.hyperplanes.row(r).begin(), code.hyperplanes.row(r).end()));
    }
    j["hyperplanes"] = std::move(planes);
    return j;
}

inline std::pair<retrieval::PcaModel, retrieval::CodeModel> retrieval_model_from_json(const json& j) {
    retrieval::PcaModel pca;
    retrieval::CodeModel code;
    const auto& mean = j.at("mean");
    pca.mean.resize(mean.size());
    for (std::size_t i = 0; i < mean.size(); ++i) pca.mean[i] = mean[i].get<double>();
    const auto& basis = j.at("basis");
    if (basis.empty()) throw DataError("retrieval model: empty basis");
    pca.basis.resize(basis.size(), basis[0].size());
    for (std::size_t r = 0; r < basis.size(); ++r) {
        for (std::size_t c = 0; c < basis[r].size(); ++c) pca.basis(r, c) = basis[r][c].get<double>();
    }
    const auto& planes = j.at("hyperplanes");
    if (planes.empty()) throw DataError("retrieval model: empty hyperplanes");
    code.hyperplanes.resize(planes.size(), planes[0].size());
    for (std::size_t r = 0; r < planes.size(); ++r) {
        for (std::size_t c = 0; c < planes[r].size(); ++c) {
            code.hyperplanes(r, c) = planes[r][c].get<double>();
        }
    }
    code.seed = j.value("seed", std::uint64_t{0});
    return {std::move(pca), std::move(code)};
}

// ---------------------------------------------------------------------------
// Hypothesis exports: a run header record then one record per hypothesis.

struct HypothesisQuality {
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
    bool available = false;
};

inline json correspondence_to_json(const retrieval::Correspondence& c) {
    return json{{"query_index", c.query_index}, {"ref_index", c.ref_index}, {"l2", c.l2}};
}

inline retrieval::Correspondence correspondence_from_json(const json& j) {
    return {j.at("query_index").get<int>(), j.at("ref_index").get<int>(), j.at("l2").get<double>()};
}

inline void save_hypotheses(const std::vector<matcher::Hypothesis>& hypotheses,
                            const std::vector<HypothesisQuality>& quality,
                            const std::string& task_id, const std::string& algorithm,
                            const std::string& path) {
    if (!quality.empty() && quality.size() != hypotheses.size()) {
        throw std::invalid_argument("save_hypotheses: quality list length mismatch");
    }
    auto out = detail::open_out(path);
    json header{{"type", "run"}, {"task_id", task_id}, {"algorithm", algorithm},
                {"count", hypotheses.size()}};
    out << header.dump() << "\n";
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        const auto& h = hypotheses[i];
        json constraints = json::array();
        for (const auto& c : h.constraints) constraints.push_back(correspondence_to_json(c));
        json rec{{"type", "hypothesis"},
                 {"rank", h.rank},
                 {"score", h.score},
                 {"seed", correspondence_to_json(h.seed)},
                 {"constraints", std::move(constraints)},
                 {"transform", detail::pose_to_json(h.transform)},
                 {"assignment", h.assignment}};
        if (!quality.empty() && quality[i].available) {
            rec["precision"] = quality[i].precision;
            rec["recall"] = quality[i].recall;
            rec["f_measure"] = quality[i].f_measure;
        } else {
            rec["precision"] = nullptr;
            rec["recall"] = nullptr;
            rec["f_measure"] = nullptr;
        }
        out << rec.dump() << "\n";
    }
}

struct HypothesisRecord {
    int rank = 0;
    int score = 0;
    retrieval::Correspondence seed;
    std::vector<retrieval::Correspondence> constraints;
    Pose2 transform;
    std::vector<int> assignment;
    HypothesisQuality quality;
};

struct HypothesisFile {
    std::string task_id;
    std::string algorithm;
    std::vector<HypothesisRecord> hypotheses;
};

inline HypothesisFile load_hypotheses(const std::string& path) {
    auto in = detail::open_in(path);
    HypothesisFile file;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(path + ": invalid JSON line: " + e.what());
        }
        const std::string type = rec.value("type", "");
        if (type == "run") {
            file.task_id = rec.value("task_id", "");
            file.algorithm = rec.value("algorithm", "");
            have_header = true;
        } else if (type == "hypothesis") {
            HypothesisRecord h;
            h.rank = rec.at("rank").get<int>();
            h.score = rec.at("score").get<int>();
            h.seed = correspondence_from_json(rec.at("seed"));
            for (const auto& c : rec.at("constraints")) {
                h.constraints.push_back(correspondence_from_json(c));
            }
            h.transform = detail::pose_from_json(rec.at("transform"));
            h.assignment = rec.at("assignment").get<std::vector<int>>();
            if (rec.contains("precision") && !rec["precision"].is_null()) {
                h.quality.precision = rec["precision"].get<double>();
                h.quality.recall = rec["recall"].get<double>();
                h.quality.f_measure = rec["f_measure"].get<double>();
                h.quality.available = true;
            }
            file.hypotheses.push_back(std::move(h));
        } else {
            throw DataError(path + ": unknown record type '" + type + "'");
        }
    }
    if (!have_header) throw DataError(path + ": missing run header record");
    return file;
}

// ---------------------------------------------------------------------------
// Metrics table

struct MetricsRow {
    std::string task_id;
    std::string algorithm;
    int x = 0;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    double mean_f = 0.0;
};

inline void save_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    auto out = detail::open_out(path);
    out << "task_id,algorithm,X,mean_precision,mean_recall,mean_f\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.6f,%.6f,%.6f\n", r.task_id.c_str(),
                      r.algorithm.c_str(), r.x, r.mean_precision, r.mean_recall, r.mean_f);
        out << buf;
    }
}

// ---------------------------------------------------------------------------
// Pose-graph text dump (debugging): VERTEX and EDGE lines with the
// upper-triangular information coefficients.

inline void dump_graph(const posegraph::PoseGraph& graph, std::ostream& out) {
    char buf[512];
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
        const Pose2& p = graph.nodes[i];
        std::snprintf(buf, sizeof(buf), "VERTEX %zu %.17g %.17g %.17g\n", i, p.x, p.y, p.theta);
        out << buf;
    }
    for (const auto& e : graph.edges) {
        const auto& m = e.measurement;
        const auto& info = e.information;
        std::snprintf(buf, sizeof(buf),
                      "EDGE %d %d %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", e.i,
                      e.j, m.x, m.y, m.theta, info(0, 0), info(0, 1), info(0, 2), info(1, 1),
                      info(1, 2), info(2, 2));
        out << buf;
    }
}

inline void save_graph(const posegraph::PoseGraph& graph, const std::string& path) {
    auto out = detail::open_out(path);
    dump_graph(graph, out);
}

inline posegraph::PoseGraph parse_graph(std::istream& in) {
    posegraph::PoseGraph graph;
    std::string tag;
    while (in >> tag) {
        if (tag == "VERTEX") {
            std::size_t id;
            double x, y, theta;
            if (!(in >> id >> x >> y >> theta)) throw DataError("graph dump: bad VERTEX line");
            if (id != graph.nodes.size()) throw DataError("graph dump: VERTEX ids must be dense");
            graph.add_node(Pose2(x, y, theta));
        } else if (tag == "EDGE") {
            int i, j;
            double dx, dy, dth, i11, i12, i13, i22, i23, i33;
            if (!(in >> i >> j >> dx >> dy >> dth >> i11 >> i12 >> i13 >> i22 >> i23 >> i33)) {
                throw DataError("graph dump: bad EDGE line");
            }
            Eigen::Matrix3d info;
            info << i11, i12, i13, i12, i22, i23, i13, i23, i33;
            graph.add_edge(i, j, Pose2(dx, dy, dth), info);
        } else {
            throw DataError("graph dump: unknown tag '" + tag + "'");
        }
    }
    return graph;
}

// ---------------------------------------------------------------------------
// Run manifest

inline void save_manifest(const json& manifest, const std::string& path) {
    auto out = detail::open_out(path);
    out << manifest.dump(2) << "\n";
}

inline json load_json_file(const std::string& path) {
    auto in = detail::open_in(path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError(path + ": invalid JSON: " + e.what());
    }
}

}  // namespace mapmatch::io
