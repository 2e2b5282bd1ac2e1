// Command line front end: submit scripts, inspect the repository, generate
// benchmark data and run the benchmark workloads.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "restore/bench.hpp"
#include "restore/datagen.hpp"
#include "restore/engine.hpp"

using nlohmann::json;
using namespace restore;

namespace {

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

json to_json(const JobStatistics& s) {
    json ops = json::object();
    for (const auto& [id, t] : s.t_ops) ops[std::to_string(id)] = t;
    return {{"job_id", s.job_id},
            {"t_load", s.t_load},
            {"t_sort", s.t_sort},
            {"t_store", s.t_store},
            {"t_elapsed", s.t_elapsed},
            {"t_ops", ops},
            {"input_bytes", s.input_bytes},
            {"output_bytes", s.output_bytes},
            {"map_tasks", s.map_tasks},
            {"reduce_tasks", s.reduce_tasks},
            {"mapper_avg", s.mapper_avg},
            {"reducer_avg", s.reducer_avg}};
}

json to_json(const SubmitReport& r) {
    json j;
    j["ok"] = r.ok;
    j["workflow_id"] = r.workflow_id;
    if (!r.error.empty()) j["error"] = r.error;
    json diags = json::array();
    for (const auto& d : r.diagnostics) diags.push_back(d.to_text());
    j["diagnostics"] = diags;
    j["jobs_compiled"] = r.jobs_compiled;
    j["jobs_executed"] = r.jobs_executed;
    json reused = json::array();
    for (int64_t id : r.rewrite.entries_used) reused.push_back(id);
    j["entries_reused"] = reused;
    json rw = json::array();
    for (const auto& jr : r.rewrite.jobs)
        rw.push_back({{"job", jr.job_id},
                      {"ops_before", jr.ops_before},
                      {"ops_after", jr.ops_after},
                      {"elided", jr.elided},
                      {"pruned", jr.pruned}});
    j["rewrites"] = rw;
    json inj = json::array();
    for (const auto& [job_id, rec] : r.injected)
        inj.push_back({{"job", job_id}, {"op", rec.op_id}, {"path", rec.path}});
    j["injected"] = inj;
    json adm = json::array();
    for (const auto& a : r.admitted)
        adm.push_back({{"job", a.job_id},
                       {"path", a.path},
                       {"accepted", a.accepted},
                       {"entry", a.entry_id},
                       {"reason", a.reason}});
    j["admitted"] = adm;
    json ev = json::array();
    for (const auto& e : r.evicted)
        ev.push_back({{"entry", e.id}, {"path", e.output_path}, {"reason", e.reason}});
    j["evicted"] = ev;
    json jobs = json::array();
    for (const auto& outcome : r.stats.jobs) {
        json o = to_json(outcome.stats);
        o["state"] = outcome.state == JobOutcome::State::Done      ? "done"
                     : outcome.state == JobOutcome::State::Failed ? "failed"
                                                                  : "skipped";
        if (!outcome.error.empty()) o["error"] = outcome.error;
        jobs.push_back(o);
    }
    j["jobs"] = jobs;
    json totals = json::object();
    for (const auto& [id, t] : r.stats.t_total) totals[id] = t;
    j["t_total"] = totals;
    j["critical_path"] = r.stats.critical_path;
    j["wall_seconds"] = r.stats.wall_seconds;
    return j;
}

void print_submit_text(const SubmitReport& r) {
    std::printf("workflow %s: %s\n", r.workflow_id.c_str(), r.ok ? "ok" : "FAILED");
    for (const auto& d : r.diagnostics) std::printf("  %s\n", d.to_text().c_str());
    if (!r.error.empty()) std::printf("  error: %s\n", r.error.c_str());
    std::printf("  jobs compiled=%d executed=%d\n", r.jobs_compiled, r.jobs_executed);
    for (const auto& jr : r.rewrite.jobs) {
        if (jr.entries.empty() && !jr.elided && !jr.pruned) continue;
        std::printf("  rewrite %s: ops %d -> %d%s%s, entries:", jr.job_id.c_str(),
                    jr.ops_before, jr.ops_after, jr.elided ? ", elided" : "",
                    jr.pruned ? ", pruned" : "");
        for (int64_t e : jr.entries) std::printf(" %lld", (long long)e);
        std::printf("\n");
    }
    for (const auto& [job_id, rec] : r.injected)
        std::printf("  stored %s (op %d of %s)\n", rec.path.c_str(), rec.op_id,
                    job_id.c_str());
    for (const auto& a : r.admitted)
        std::printf("  candidate %s: %s\n", a.path.c_str(),
                    a.accepted ? ("entry " + std::to_string(a.entry_id)).c_str()
                               : a.reason.c_str());
    for (const auto& e : r.evicted)
        std::printf("  evicted entry %lld (%s): %s\n", (long long)e.id,
                    e.output_path.c_str(), e.reason.c_str());
    for (const auto& outcome : r.stats.jobs) {
        const auto& s = outcome.stats;
        std::printf("  job %-8s %-7s elapsed=%.3fs load=%.3f sort=%.3f store=%.3f "
                    "in=%llu out=%llu\n",
                    s.job_id.c_str(),
                    outcome.state == JobOutcome::State::Done      ? "done"
                    : outcome.state == JobOutcome::State::Failed ? "failed"
                                                                 : "skipped",
                    s.t_elapsed, s.t_load, s.t_sort, s.t_store,
                    (unsigned long long)s.input_bytes,
                    (unsigned long long)s.output_bytes);
        if (!outcome.error.empty()) std::printf("    %s\n", outcome.error.c_str());
    }
    std::printf("  critical path %.3fs, wall %.3fs\n", r.stats.critical_path,
                r.stats.wall_seconds);
}

json to_json(const std::vector<BenchPoint>& points,
             const std::vector<TrendCheck>& trends) {
    json j;
    json ps = json::array();
    for (const auto& p : points)
        ps.push_back({{"workload", p.workload},
                      {"selectivity", p.selectivity},
                      {"baseline", p.baseline()},
                      {"instrumented", p.instrumented()},
                      {"reused", p.reused()},
                      {"overhead", p.overhead()},
                      {"speedup", p.speedup()},
                      {"stored_bytes", p.stored_bytes},
                      {"baseline_trials", p.baseline_trials},
                      {"instrumented_trials", p.instrumented_trials},
                      {"reused_trials", p.reused_trials}});
    j["points"] = ps;
    json ts = json::array();
    for (const auto& t : trends)
        ts.push_back({{"curve", t.curve},
                      {"ok", t.ok},
                      {"inversions", t.inversions},
                      {"detail", t.detail}});
    j["trends"] = ts;
    return j;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dataflow engine with transparent result storage and reuse"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string dfs_root = env_or("RESTORE_DFS_ROOT", "dfs");
    std::string repo_root = env_or("RESTORE_REPO_ROOT", "repo");
    std::string heuristic = "aggressive";
    int parallelism = 1;
    int reducers = 4;
    double window_secs = 7 * 24 * 3600.0;
    bool canonical = false;
    bool as_json = false;
    app.add_option("--dfs-root", dfs_root, "dataset root directory");
    app.add_option("--repo-root", repo_root, "repository root directory");
    app.add_option("--heuristic", heuristic,
                   "store injection policy: conservative|aggressive|none|off")
        ->check(CLI::IsMember({"conservative", "aggressive", "none", "off"}));
    app.add_option("--parallelism", parallelism, "jobs run concurrently");
    app.add_option("--reducers", reducers, "reduce tasks per job");
    app.add_option("--window", window_secs, "idle eviction window in seconds");
    app.add_flag("--canonical", canonical, "sort sink outputs after the run");
    app.add_flag("--json", as_json, "emit reports as JSON");

    // submit
    auto* submit = app.add_subcommand("submit", "compile and run a script");
    std::string script_path;
    bool no_reuse = false, no_admit = false, overwrite = false;
    submit->add_option("script", script_path, "script file")->required();
    submit->add_flag("--no-reuse", no_reuse, "disable repository matching");
    submit->add_flag("--no-admit", no_admit, "do not store new outputs");
    submit->add_flag("--overwrite", overwrite, "overwrite existing sink datasets");

    // repo
    auto* repo_cmd = app.add_subcommand("repo", "inspect the repository");
    auto* repo_list = repo_cmd->add_subcommand("list", "list entries in scan order");
    auto* repo_show = repo_cmd->add_subcommand("show", "show one entry");
    int64_t show_id = 0;
    repo_show->add_option("id", show_id, "entry id")->required();
    auto* repo_gc = repo_cmd->add_subcommand("gc", "apply eviction rules now");
    auto* repo_rm = repo_cmd->add_subcommand("rm", "remove one entry");
    int64_t rm_id = 0;
    repo_rm->add_option("id", rm_id, "entry id")->required();
    repo_cmd->require_subcommand(1);

    // datagen
    auto* datagen = app.add_subcommand("datagen", "generate benchmark datasets");
    std::string synth_path = "bench/synth";
    uint64_t synth_rows = 2'000'000;
    uint64_t pv_rows = 100'000, users_rows = 10'000;
    uint64_t seed = 42;
    bool gen_overwrite = false;
    auto* synth = datagen->add_subcommand("synth", "12-field synthetic table");
    synth->add_option("--rows", synth_rows, "row count");
    synth->add_option("--path", synth_path, "dataset path");
    synth->add_option("--seed", seed, "prng seed");
    synth->add_flag("--overwrite", gen_overwrite, "replace existing dataset");
    auto* pigmix = datagen->add_subcommand("pigmix", "page_views and users tables");
    pigmix->add_option("--page-views", pv_rows, "page_views row count");
    pigmix->add_option("--users", users_rows, "users row count");
    pigmix->add_option("--seed", seed, "prng seed");
    pigmix->add_flag("--overwrite", gen_overwrite, "replace existing datasets");
    datagen->require_subcommand(1);

    // bench
    auto* bench = app.add_subcommand("bench", "run benchmark workloads");
    std::string bench_which = "all";
    uint64_t bench_rows = 2'000'000;
    int trials = 3;
    std::string csv_path;
    bench->add_option("workload", bench_which, "qp, qf, q1q2 or all")
        ->check(CLI::IsMember({"qp", "qf", "q1q2", "all"}));
    bench->add_option("--rows", bench_rows, "synthetic dataset rows");
    bench->add_option("--trials", trials, "runs per configuration");
    bench->add_option("--csv", csv_path, "write per-trial timings to a CSV file");

    CLI11_PARSE(app, argc, argv);

    try {
        Dfs dfs(dfs_root);
        Repository repo(dfs, repo_root);

        if (*submit) {
            EngineConfig cfg;
            cfg.heuristic = heuristic;
            cfg.reuse = !no_reuse;
            cfg.admit = !no_admit;
            cfg.parallelism = parallelism;
            cfg.reducers = reducers;
            cfg.window_us = static_cast<int64_t>(window_secs * 1e6);
            cfg.overwrite = overwrite;
            cfg.canonical = canonical;
            Engine eng(dfs, repo, cfg);
            auto report = eng.submit(read_file(script_path));
            if (as_json)
                std::cout << to_json(report).dump(2) << "\n";
            else
                print_submit_text(report);
            return report.ok ? 0 : 1;
        }

        if (*repo_cmd) {
            if (*repo_list) {
                json arr = json::array();
                for (const auto& e : repo.ordered_scan()) {
                    if (as_json) {
                        arr.push_back({{"id", e->id},
                                       {"output", e->output_path},
                                       {"bytes", e->output_bytes},
                                       {"cost", e->recompute_cost()},
                                       {"reuse_count", e->reuse_count}});
                    } else {
                        std::printf("%-6lld %-40s %12llu bytes  cost=%.3fs reused=%lld\n",
                                    (long long)e->id, e->output_path.c_str(),
                                    (unsigned long long)e->output_bytes,
                                    e->recompute_cost(), (long long)e->reuse_count);
                    }
                }
                if (as_json) std::cout << arr.dump(2) << "\n";
                return 0;
            }
            if (*repo_show) {
                auto e = repo.find(show_id);
                if (!e) {
                    std::fprintf(stderr, "no entry %lld\n", (long long)show_id);
                    return 1;
                }
                if (as_json) {
                    json j = {{"id", e->id},
                              {"output", e->output_path},
                              {"schema", schema_to_text(e->stored_schema)},
                              {"t_load", e->t_load},
                              {"t_ops", e->t_ops},
                              {"t_sort", e->t_sort},
                              {"t_store", e->t_store},
                              {"input_bytes", e->input_bytes},
                              {"output_bytes", e->output_bytes},
                              {"reuse_count", e->reuse_count},
                              {"plan", plan_to_text(e->plan)}};
                    std::cout << j.dump(2) << "\n";
                } else {
                    std::printf("entry %lld -> %s\nschema %s\n%s", (long long)e->id,
                                e->output_path.c_str(),
                                schema_to_text(e->stored_schema).c_str(),
                                plan_to_text(e->plan).c_str());
                }
                return 0;
            }
            if (*repo_gc) {
                auto evicted = repo.evict(static_cast<int64_t>(window_secs * 1e6));
                for (const auto& e : evicted)
                    std::printf("evicted %lld (%s): %s\n", (long long)e.id,
                                e.output_path.c_str(), e.reason.c_str());
                std::printf("%zu entries remain\n", repo.size());
                return 0;
            }
            if (*repo_rm) {
                if (!repo.remove(rm_id)) {
                    std::fprintf(stderr, "no entry %lld\n", (long long)rm_id);
                    return 1;
                }
                return 0;
            }
        }

        if (*datagen) {
            if (*synth) {
                generate_synthetic(dfs, synth_path, {.rows = synth_rows, .seed = seed},
                                   gen_overwrite);
                std::printf("wrote %s (%llu rows)\n", synth_path.c_str(),
                            (unsigned long long)synth_rows);
            }
            if (*pigmix) {
                generate_page_views(dfs, "data/page_views",
                                    {.rows = pv_rows, .users = users_rows, .seed = seed},
                                    gen_overwrite);
                generate_users(dfs, "data/users", users_rows, gen_overwrite);
                std::printf("wrote data/page_views (%llu rows) and data/users (%llu rows)\n",
                            (unsigned long long)pv_rows,
                            (unsigned long long)users_rows);
            }
            return 0;
        }

        if (*bench) {
            BenchConfig bcfg;
            bcfg.synth_rows = bench_rows;
            bcfg.trials = trials;
            bcfg.reducers = reducers;
            bcfg.seed = seed;
            BenchRunner runner(dfs, std::filesystem::path(repo_root) / "bench", bcfg);
            std::vector<BenchPoint> points;
            std::vector<TrendCheck> trends;
            bool all_ok = true;
            if (bench_which == "qp" || bench_which == "all") {
                auto qp = runner.run_qp();
                auto t = qp_trends(qp);
                points.insert(points.end(), qp.begin(), qp.end());
                trends.insert(trends.end(), t.begin(), t.end());
            }
            if (bench_which == "qf" || bench_which == "all") {
                auto qf = runner.run_qf();
                auto t = qf_trends(qf);
                points.insert(points.end(), qf.begin(), qf.end());
                trends.insert(trends.end(), t.begin(), t.end());
            }
            json j = to_json(points, trends);
            if (bench_which == "q1q2" || bench_which == "all") {
                auto q12 = runner.run_q1q2(read_file("queries/q1.pig"),
                                           read_file("queries/q2.pig"));
                j["q1q2"] = {{"cold", q12.cold()},
                             {"warm", q12.warm()},
                             {"speedup", q12.speedup()},
                             {"warm_jobs", q12.warm_jobs}};
                if (q12.speedup() <= 1.0) all_ok = false;
                if (!as_json)
                    std::printf("q1q2: cold=%.3fs warm=%.3fs speedup=%.2f warm_jobs=%d\n",
                                q12.cold(), q12.warm(), q12.speedup(), q12.warm_jobs);
            }
            for (const auto& t : trends)
                if (!t.ok) all_ok = false;
            if (as_json) {
                std::cout << j.dump(2) << "\n";
            } else {
                std::printf("%s", render_points_text(points).c_str());
                for (const auto& t : trends)
                    std::printf("trend %-45s %s%s%s\n", t.curve.c_str(),
                                t.ok ? "ok" : "VIOLATED", t.detail.empty() ? "" : ": ",
                                t.detail.c_str());
            }
            if (!csv_path.empty()) {
                std::ofstream f(csv_path, std::ios::trunc);
                f << render_points_csv(points);
            }
            return all_ok ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
