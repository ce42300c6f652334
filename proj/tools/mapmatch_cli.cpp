// mapmatch: dataset generation, map matching, evaluation, and plotting for
// deformable map matching experiments.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mapmatch/mapmatch.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mapmatch;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

class Stopwatch {
public:
    void start(const std::string& stage) {
        stage_ = stage;
        t0_ = std::chrono::steady_clock::now();
    }
    void stop(json& timings) {
        const auto dt = std::chrono::steady_clock::now() - t0_;
        timings[stage_] = std::chrono::duration_cast<std::chrono::milliseconds>(dt).count();
    }

private:
    std::string stage_;
    std::chrono::steady_clock::time_point t0_;
};

// --config values without a directory component resolve against
// MAPMATCH_CONFIG_DIR when the file is not present in the working directory.
std::string resolve_config_path(const std::string& path) {
    if (path.empty() || fs::exists(path)) return path;
    if (path.find('/') == std::string::npos) {
        if (const char* dir = std::getenv("MAPMATCH_CONFIG_DIR")) {
            const fs::path candidate = fs::path(dir) / path;
            if (fs::exists(candidate)) return candidate.string();
        }
    }
    return path;
}

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    return io::load_json_file(resolve_config_path(path));
}

json section(const json& cfg, const std::string& name) {
    if (cfg.contains(name) && cfg[name].is_object()) return cfg[name];
    return cfg;
}

datagen::DatasetConfig dataset_config_from(const json& j) {
    datagen::DatasetConfig cfg;
    cfg.seed = j.value("seed", cfg.seed);
    cfg.n_tasks = j.value("n_tasks", cfg.n_tasks);
    cfg.environments = j.value("environments", cfg.environments);
    cfg.sessions = j.value("sessions", cfg.sessions);
    cfg.master_length_m = j.value("master_length_m", cfg.master_length_m);
    cfg.map_length_m = j.value("map_length_m", cfg.map_length_m);
    cfg.min_window_overlap_m = j.value("min_window_overlap_m", cfg.min_window_overlap_m);
    cfg.spacing_m = j.value("spacing_m", cfg.spacing_m);
    cfg.noise_frac = j.value("noise_frac", cfg.noise_frac);
    cfg.precise_ref = j.value("precise_ref", cfg.precise_ref);
    cfg.candidate_factor = j.value("candidate_factor", cfg.candidate_factor);
    cfg.loop_thresh_m = j.value("loop_thresh_m", cfg.loop_thresh_m);
    cfg.session_jitter_xy = j.value("session_jitter_xy", cfg.session_jitter_xy);
    cfg.session_jitter_theta = j.value("session_jitter_theta", cfg.session_jitter_theta);
    if (j.contains("descriptor")) {
        const auto& d = j["descriptor"];
        cfg.descriptor.dim = d.value("dim", cfg.descriptor.dim);
        cfg.descriptor.place_scale = d.value("place_scale", cfg.descriptor.place_scale);
        cfg.descriptor.heading_weight = d.value("heading_weight", cfg.descriptor.heading_weight);
        cfg.descriptor.session_noise = d.value("session_noise", cfg.descriptor.session_noise);
    }
    if (j.contains("retrieval")) {
        const auto& r = j["retrieval"];
        cfg.retrieval.nb = r.value("nb", cfg.retrieval.nb);
        cfg.retrieval.nr = r.value("nr", cfg.retrieval.nr);
        cfg.retrieval.bucket_cap = r.value("bucket_cap", cfg.retrieval.bucket_cap);
        cfg.retrieval.bits = r.value("bits", cfg.retrieval.bits);
        cfg.retrieval.code_seed = r.value("code_seed", cfg.retrieval.code_seed);
        cfg.retrieval.self_match_l2 = r.value("self_match_l2", cfg.retrieval.self_match_l2);
    }
    return cfg;
}

matcher::MatchConfig match_config_from(const json& j) {
    matcher::MatchConfig cfg;
    cfg.k = j.value("k", cfg.k);
    cfg.k_prime = j.value("k_prime", cfg.k_prime);
    cfg.m = j.value("m", cfg.m);
    cfg.consist_thresh = j.value("consist_thresh", cfg.consist_thresh);
    cfg.tp = j.value("tp", cfg.tp);
    cfg.nr = j.value("nr", cfg.nr);
    cfg.nb = j.value("nb", cfg.nb);
    cfg.bucket_cap = j.value("bucket_cap", cfg.bucket_cap);
    cfg.bits = j.value("bits", cfg.bits);
    cfg.pca_dim = j.value("pca_dim", cfg.pca_dim);
    cfg.code_seed = j.value("code_seed", cfg.code_seed);
    cfg.rerank_raw = j.value("rerank_raw", cfg.rerank_raw);
    cfg.loop_sigma_t = j.value("loop_sigma_t", cfg.loop_sigma_t);
    cfg.loop_sigma_theta = j.value("loop_sigma_theta", cfg.loop_sigma_theta);
    cfg.use_true_relative = j.value("use_true_relative", cfg.use_true_relative);
    cfg.rel_noise_sigma_t = j.value("rel_noise_sigma_t", cfg.rel_noise_sigma_t);
    cfg.rel_noise_sigma_theta = j.value("rel_noise_sigma_theta", cfg.rel_noise_sigma_theta);
    cfg.optimize.max_iterations = j.value("max_iterations", cfg.optimize.max_iterations);
    cfg.optimize.convergence_tol = j.value("convergence_tol", cfg.optimize.convergence_tol);
    cfg.optimize.damping = j.value("damping", cfg.optimize.damping);
    cfg.validate();
    return cfg;
}

json manifest_base(const std::string& command, const json& config) {
    return json{{"tool_version", kVersion},
                {"command", command},
                {"config", config},
                {"inputs", json::array()},
                {"outputs", json::array()},
                {"timings_ms", json::object()}};
}

std::vector<io::HypothesisQuality> quality_for(const matcher::MatchResult& result,
                                               const MapSequence& query, const MapSequence& ref,
                                               double thresh) {
    std::vector<io::HypothesisQuality> quality(result.hypotheses.size());
    if (!query.has_ground_truth() || !ref.has_ground_truth()) return quality;
    const auto scores = bench::hypothesis_qualities(result.hypotheses, query, ref, thresh);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        quality[i] = {scores[i].precision, scores[i].recall, scores[i].f_measure, true};
    }
    return quality;
}

std::vector<int> parse_x_list(const std::string& csv) {
    std::vector<int> xs;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const int x = std::stoi(item);
        if (x < 1) throw CLI::ValidationError("--x-list values must be >= 1");
        xs.push_back(x);
    }
    if (xs.empty()) throw CLI::ValidationError("--x-list is empty");
    return xs;
}

MapSequence load_map_with_imports(const std::string& map_path, const std::string& desc_path) {
    MapSequence map = io::load_map(map_path);
    if (!desc_path.empty()) {
        io::attach_descriptors(map, io::load_descriptors(desc_path));
    }
    return map;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_gen(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed_override) {
    const json cfg_json = load_config(config_path);
    datagen::DatasetConfig cfg = dataset_config_from(section(cfg_json, "gen"));
    if (seed_override) cfg.seed = *seed_override;

    json manifest = manifest_base("gen", cfg_json);
    manifest["seeds"] = {{"dataset", cfg.seed}};
    Stopwatch watch;
    watch.start("generate");
    std::vector<std::string> diagnostics;
    const auto tasks = datagen::generate_dataset(cfg, &diagnostics);
    watch.stop(manifest["timings_ms"]);

    fs::create_directories(out_dir);
    watch.start("write");
    json task_list = json::array();
    for (const auto& t : tasks) {
        const std::string q_path = (fs::path(out_dir) / (t.task_id + "_query.jsonl")).string();
        const std::string r_path = (fs::path(out_dir) / (t.task_id + "_ref.jsonl")).string();
        io::save_map(t.query, q_path);
        io::save_map(t.ref, r_path);
        task_list.push_back({{"task_id", t.task_id},
                             {"query", q_path},
                             {"ref", r_path},
                             {"view_overlap_m", t.overlap},
                             {"query_session", t.query.session_id},
                             {"ref_session", t.ref.session_id}});
        manifest["outputs"].push_back(q_path);
        manifest["outputs"].push_back(r_path);
    }
    const std::string tasks_path = (fs::path(out_dir) / "tasks.json").string();
    io::save_manifest(task_list, tasks_path);
    manifest["outputs"].push_back(tasks_path);
    watch.stop(manifest["timings_ms"]);
    manifest["diagnostics"] = diagnostics;
    io::save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());

    std::cout << "gen: wrote " << tasks.size() << " task pairs to " << out_dir << "\n";
    for (const auto& d : diagnostics) std::cerr << "gen: " << d << "\n";
    return kExitOk;
}

int cmd_match(const std::string& query_path, const std::string& ref_path,
              const std::string& algorithm_name, const std::string& config_path,
              const std::string& out_path, const std::string& task_id,
              const std::string& query_desc, const std::string& ref_desc) {
    const auto algorithm = matcher::algorithm_from_name(algorithm_name);
    if (!algorithm) {
        std::cerr << "match: unknown algorithm '" << algorithm_name
                  << "' (expected naive, single, or multiple)\n";
        return kExitUsage;
    }
    const json cfg_json = load_config(config_path);
    const matcher::MatchConfig cfg = match_config_from(section(cfg_json, "match"));

    json manifest = manifest_base("match", cfg_json);
    manifest["inputs"] = {query_path, ref_path};
    Stopwatch watch;
    watch.start("load");
    const MapSequence query = load_map_with_imports(query_path, query_desc);
    const MapSequence ref = load_map_with_imports(ref_path, ref_desc);
    watch.stop(manifest["timings_ms"]);

    watch.start("match");
    const auto result = matcher::run_match(query, ref, *algorithm, cfg);
    watch.stop(manifest["timings_ms"]);

    watch.start("export");
    const std::string tid = task_id.empty() ? fs::path(query_path).stem().string() : task_id;
    io::save_hypotheses(result.hypotheses, quality_for(result, query, ref, cfg.consist_thresh),
                        tid, algorithm_name, out_path);
    watch.stop(manifest["timings_ms"]);
    manifest["outputs"] = {out_path};
    manifest["diagnostics"] = result.diagnostics;
    io::save_manifest(manifest, out_path + ".manifest.json");

    std::cout << "match: " << result.hypotheses.size() << " hypotheses (" << algorithm_name
              << ") -> " << out_path << "\n";
    for (const auto& d : result.diagnostics) std::cerr << "match: " << d << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& hyp_path, const std::string& query_path,
             const std::string& ref_path, const std::string& x_list_csv,
             const std::string& out_path) {
    const std::vector<int> x_list = parse_x_list(x_list_csv);
    json manifest = manifest_base("eval", json{{"x_list", x_list}});
    manifest["inputs"] = {hyp_path, query_path, ref_path};

    Stopwatch watch;
    watch.start("load");
    const auto file = io::load_hypotheses(hyp_path);
    const MapSequence query = io::load_map(query_path);
    const MapSequence ref = io::load_map(ref_path);
    watch.stop(manifest["timings_ms"]);
    if (!query.has_ground_truth() || !ref.has_ground_truth()) {
        std::cerr << "eval: ground truth missing from the map files; cannot evaluate\n";
        return kExitData;
    }

    watch.start("evaluate");
    const double thresh = 10.0;
    const auto gt_assignment =
        evaluation::ground_truth_assignment(query.gt_poses, ref.gt_poses, thresh);
    std::vector<evaluation::QualityScore> scores;
    scores.reserve(file.hypotheses.size());
    for (const auto& h : file.hypotheses) {
        scores.push_back(evaluation::prf(
            evaluation::classify(h.assignment, gt_assignment, query.gt_poses, ref.gt_poses, thresh)));
    }
    std::vector<io::MetricsRow> rows;
    for (const int x : x_list) {
        io::MetricsRow row{file.task_id, file.algorithm, x, 0.0, 0.0, 0.0};
        if (!scores.empty()) {
            const auto mean = evaluation::top_x(scores, x);
            row.mean_precision = mean.precision;
            row.mean_recall = mean.recall;
            row.mean_f = mean.f_measure;
        }
        rows.push_back(row);
    }
    io::save_metrics_csv(rows, out_path);
    watch.stop(manifest["timings_ms"]);
    manifest["outputs"] = {out_path};
    io::save_manifest(manifest, out_path + ".manifest.json");

    std::cout << "eval: " << rows.size() << " rows -> " << out_path << "\n";
    return kExitOk;
}

int cmd_plot(const std::string& query_path, const std::string& ref_path,
             const std::string& hyp_path, int rank, const std::string& config_path,
             const std::string& out_path) {
    const json cfg_json = load_config(config_path);
    const matcher::MatchConfig cfg = match_config_from(section(cfg_json, "match"));
    const MapSequence query = io::load_map(query_path);
    const MapSequence ref = io::load_map(ref_path);

    std::optional<io::HypothesisRecord> hypothesis;
    if (!hyp_path.empty()) {
        const auto file = io::load_hypotheses(hyp_path);
        for (const auto& h : file.hypotheses) {
            if (h.rank == rank) {
                hypothesis = h;
                break;
            }
        }
        if (!hypothesis && !file.hypotheses.empty()) hypothesis = file.hypotheses.front();
    }
    const std::string text = svg::render_task(query, ref, hypothesis, cfg);
    std::ofstream out(out_path);
    if (!out) {
        std::cerr << "plot: cannot open " << out_path << " for writing\n";
        return kExitData;
    }
    out << text;
    std::cout << "plot: wrote " << out_path << "\n";
    return kExitOk;
}

int cmd_bench(const std::string& config_path, const std::string& out_dir, int jobs,
              const std::string& x_list_csv, std::optional<std::uint64_t> seed_override) {
    const std::vector<int> x_list = parse_x_list(x_list_csv);
    const json cfg_json = load_config(config_path);
    datagen::DatasetConfig gen_cfg = dataset_config_from(section(cfg_json, "gen"));
    if (seed_override) gen_cfg.seed = *seed_override;
    const matcher::MatchConfig match_cfg = match_config_from(section(cfg_json, "match"));

    json manifest = manifest_base("bench", cfg_json);
    manifest["seeds"] = {{"dataset", gen_cfg.seed}};
    Stopwatch watch;
    watch.start("generate");
    std::vector<std::string> diagnostics;
    const auto tasks = datagen::generate_dataset(gen_cfg, &diagnostics);
    watch.stop(manifest["timings_ms"]);

    fs::create_directories(out_dir);
    watch.start("write_maps");
    for (const auto& t : tasks) {
        io::save_map(t.query, (fs::path(out_dir) / (t.task_id + "_query.jsonl")).string());
        io::save_map(t.ref, (fs::path(out_dir) / (t.task_id + "_ref.jsonl")).string());
    }
    watch.stop(manifest["timings_ms"]);

    const std::vector<matcher::Algorithm> algorithms{
        matcher::Algorithm::Naive, matcher::Algorithm::Single, matcher::Algorithm::Multiple};

    watch.start("match_eval");
    std::vector<bench::TaskOutcome> outcomes;
    const auto sink = [&](const datagen::TaskPair& t, matcher::Algorithm algo,
                          const matcher::MatchResult& result) {
        const std::string path =
            (fs::path(out_dir) /
             (t.task_id + "_" + matcher::algorithm_name(algo) + ".jsonl")).string();
        io::save_hypotheses(result.hypotheses,
                            quality_for(result, t.query, t.ref, match_cfg.consist_thresh),
                            t.task_id, matcher::algorithm_name(algo), path);
    };
    const auto rows = bench::run_tasks(tasks, algorithms, match_cfg, x_list, jobs, &outcomes, sink);
    watch.stop(manifest["timings_ms"]);

    watch.start("export");
    for (const auto& t : tasks) {
        for (const auto algo : algorithms) {
            manifest["outputs"].push_back(
                (fs::path(out_dir) /
                 (t.task_id + "_" + matcher::algorithm_name(algo) + ".jsonl")).string());
        }
    }
    const std::string csv_path = (fs::path(out_dir) / "metrics.csv").string();
    io::save_metrics_csv(rows, csv_path);
    manifest["outputs"].push_back(csv_path);
    watch.stop(manifest["timings_ms"]);
    manifest["diagnostics"] = diagnostics;
    io::save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());

    std::cout << "bench: " << tasks.size() << " tasks x " << algorithms.size()
              << " algorithms -> " << csv_path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deformable map matching for uncertain loop-less maps"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    std::string config_path, out_path, query_path, ref_path, hyp_path;
    std::string algorithm = "multiple", x_list = "1,2,5,10", task_id, query_desc, ref_desc;
    int jobs = 1, rank = 1;
    std::uint64_t seed = 0;

    auto* gen = app.add_subcommand("gen", "Generate a synthetic task-pair dataset");
    gen->add_option("--config", config_path, "JSON config (gen section)");
    gen->add_option("--out", out_path, "Output directory")->required();
    auto* gen_seed = gen->add_option("--seed", seed, "Override the dataset seed");

    auto* match = app.add_subcommand("match", "Match a query map against a reference map");
    match->add_option("--query", query_path, "Query map JSONL")->required();
    match->add_option("--ref", ref_path, "Reference map JSONL")->required();
    match->add_option("--algorithm", algorithm, "naive | single | multiple");
    match->add_option("--config", config_path, "JSON config (match section)");
    match->add_option("--out", out_path, "Hypotheses JSONL output")->required();
    match->add_option("--task-id", task_id, "Task id recorded in the output");
    match->add_option("--query-descriptors", query_desc, "Imported query descriptors JSONL");
    match->add_option("--ref-descriptors", ref_desc, "Imported reference descriptors JSONL");

    auto* eval = app.add_subcommand("eval", "Score ranked hypotheses against ground truth");
    eval->add_option("--hypotheses", hyp_path, "Hypotheses JSONL")->required();
    eval->add_option("--query", query_path, "Query map JSONL")->required();
    eval->add_option("--ref", ref_path, "Reference map JSONL")->required();
    eval->add_option("--x-list", x_list, "Comma-separated top-X settings");
    eval->add_option("--out", out_path, "Metrics CSV output")->required();

    auto* plot = app.add_subcommand("plot", "Render trajectories and correspondences to SVG");
    plot->add_option("--query", query_path, "Query map JSONL")->required();
    plot->add_option("--ref", ref_path, "Reference map JSONL")->required();
    plot->add_option("--hypotheses", hyp_path, "Hypotheses JSONL (optional)");
    plot->add_option("--rank", rank, "Hypothesis rank to draw");
    plot->add_option("--config", config_path, "JSON config (match section)");
    plot->add_option("--out", out_path, "SVG output")->required();

    auto* bench_cmd = app.add_subcommand("bench", "Chain gen, match (all algorithms), and eval");
    bench_cmd->add_option("--config", config_path, "JSON config (gen + match sections)");
    bench_cmd->add_option("--out", out_path, "Output directory")->required();
    bench_cmd->add_option("--jobs", jobs, "Parallel tasks")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--x-list", x_list, "Comma-separated top-X settings");
    auto* bench_seed = bench_cmd->add_option("--seed", seed, "Override the dataset seed");

    try {
        app.parse(argc, argv);
        std::optional<std::uint64_t> seed_override;
        if (gen_seed->count() > 0 || bench_seed->count() > 0) seed_override = seed;
        if (gen->parsed()) return cmd_gen(config_path, out_path, seed_override);
        if (match->parsed()) {
            return cmd_match(query_path, ref_path, algorithm, config_path, out_path, task_id,
                             query_desc, ref_desc);
        }
        if (eval->parsed()) return cmd_eval(hyp_path, query_path, ref_path, x_list, out_path);
        if (plot->parsed()) return cmd_plot(query_path, ref_path, hyp_path, rank, config_path, out_path);
        if (bench_cmd->parsed()) return cmd_bench(config_path, out_path, jobs, x_list, seed_override);
        return kExitUsage;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    } catch (const io::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}
