#pragma once

#include <atomic>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "mapmatch/datagen.hpp"
#include "mapmatch/evaluation.hpp"
#include "mapmatch/io.hpp"
#include "mapmatch/matcher.hpp"

namespace mapmatch::bench {

// Per-hypothesis quality of a ranked match result against ground truth.
inline std::vector<evaluation::QualityScore> hypothesis_qualities(
    const std::vector<matcher::Hypothesis>& ranked, const MapSequence& query_map,
    const MapSequence& ref_map, double thresh) {
    if (!query_map.has_ground_truth() || !ref_map.has_ground_truth()) {
        throw std::invalid_argument("hypothesis_qualities: ground truth required");
    }
    const std::vector<int> gt_assignment =
        evaluation::ground_truth_assignment(query_map.gt_poses, ref_map.gt_poses, thresh);
    std::vector<evaluation::QualityScore> out;
    out.reserve(ranked.size());
    for (const auto& h : ranked) {
        const auto counts =
            evaluation::classify(h.assignment, h.query_poses, h.ref_poses, gt_assignment,
                                 query_map.gt_poses, ref_map.gt_poses, thresh);
        out.push_back(evaluation::prf(counts));
    }
    return out;
}

struct TaskOutcome {
    std::string task_id;
    std::string algorithm;
    std::vector<evaluation::QualityScore> qualities;  // ranked order
};

// Per-(task, algorithm) hook; runs on the worker thread that owns the task.
using ResultSink = std::function<void(const datagen::TaskPair&, matcher::Algorithm,
                                      const matcher::MatchResult&)>;

// Runs every algorithm on every task and reports top-X means per
// (task, algorithm, X). Tasks execute in parallel up to `jobs`; outputs are
// merged in task order so the result is independent of scheduling. A sink may
// write per-task artifacts from the worker (tasks never share output files).
inline std::vector<io::MetricsRow> run_tasks(const std::vector<datagen::TaskPair>& tasks,
                                             const std::vector<matcher::Algorithm>& algorithms,
                                             const matcher::MatchConfig& match_cfg,
                                             const std::vector<int>& x_list, int jobs,
                                             std::vector<TaskOutcome>* outcomes = nullptr,
                                             const ResultSink& sink = {}) {
    struct Slot {
        std::vector<io::MetricsRow> rows;
        std::vector<TaskOutcome> outcomes;
    };
    std::vector<Slot> slots(tasks.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= tasks.size()) return;
            const auto& task = tasks[t];
            for (const auto algo : algorithms) {
                const auto result = matcher::run_match(task.query, task.ref, algo, match_cfg);
                if (sink) sink(task, algo, result);
                auto qualities = hypothesis_qualities(result.hypotheses, task.query, task.ref,
                                                      match_cfg.consist_thresh);
                for (const int x : x_list) {
                    io::MetricsRow row;
                    row.task_id = task.task_id;
                    row.algorithm = matcher::algorithm_name(algo);
                    row.x = x;
                    if (!qualities.empty()) {
                        const auto mean = evaluation::top_x(qualities, x);
                        row.mean_precision = mean.precision;
                        row.mean_recall = mean.recall;
                        row.mean_f = mean.f_measure;
                    }
                    slots[t].rows.push_back(std::move(row));
                }
                slots[t].outcomes.push_back(
                    {task.task_id, matcher::algorithm_name(algo), std::move(qualities)});
            }
        }
    };
    const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    std::vector<io::MetricsRow> rows;
    for (auto& slot : slots) {
        for (auto& r : slot.rows) rows.push_back(std::move(r));
        if (outcomes) {
            for (auto& o : slot.outcomes) outcomes->push_back(std::move(o));
        }
    }
    return rows;
}

}  // namespace mapmatch::bench
