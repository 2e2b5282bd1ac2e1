#pragma once

// The submission pipeline. One submit() call takes a script through parse,
// compile, rewrite against the repository, store injection, execution,
// candidate admission, eviction and tmp cleanup, and returns a report of
// everything that happened.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "restore/compiler.hpp"
#include "restore/dfs.hpp"
#include "restore/executor.hpp"
#include "restore/matcher.hpp"
#include "restore/query.hpp"
#include "restore/repository.hpp"
#include "restore/subjob.hpp"

namespace restore {

struct EngineConfig {
    std::string heuristic = "aggressive"; // conservative|aggressive|none|off
    bool reuse = true;                    // match against the repository
    bool admit = true;                    // offer finished outputs to the repository
    int parallelism = 1;                  // concurrent jobs per ready batch
    int reducers = 4;
    int task_threads = 1;
    uint64_t chunk_bytes = 16ull * 1024 * 1024;
    int64_t window_us = 7ll * 24 * 3600 * 1'000'000; // idle eviction horizon
    bool overwrite = false;
    bool canonical = false; // sort user sink outputs after the run
    bool evict_after = true;
};

struct AdmissionRecord {
    std::string job_id;
    std::string path;
    bool accepted = false;
    int64_t entry_id = -1;
    std::string reason;
};

struct SubmitReport {
    bool ok = false;
    std::string workflow_id;
    std::string error;
    std::vector<Diagnostic> diagnostics;
    int jobs_compiled = 0;
    int jobs_executed = 0;
    RewriteReport rewrite;
    std::vector<std::pair<std::string, InjectedStore>> injected; // job id, record
    std::vector<AdmissionRecord> admitted;
    std::vector<EvictionRecord> evicted;
    WorkflowStatistics stats;
    std::vector<std::string> sink_paths;
};

class Engine {
public:
    Engine(Dfs& dfs, Repository& repo, EngineConfig cfg = {})
        : dfs_(dfs), repo_(repo), cfg_(std::move(cfg)) {}

    const EngineConfig& config() const { return cfg_; }

    SubmitReport submit(const std::string& script) {
        SubmitReport report;
        report.workflow_id = next_workflow_id();

        std::optional<Workflow> wf;
        try {
            wf = compile_script(script, report.workflow_id, report.diagnostics);
        } catch (const ParseError& e) {
            report.diagnostics.push_back({-1, "", e.line, e.col, e.what()});
        }
        if (!wf) {
            report.error = "script rejected";
            return report;
        }
        report.jobs_compiled = static_cast<int>(wf->jobs.size());
        for (const auto& job : wf->jobs)
            for (const auto& p : job.store_paths)
                if (!engine_owned(p)) report.sink_paths.push_back(p);

        if (cfg_.reuse) {
            // Entries whose datasets changed since admission must not feed a
            // rewrite; a freshness-only sweep drops them first.
            report.evicted = repo_.evict(0);
            auto snap = repo_.match_snapshot();
            report.rewrite = rewrite_workflow(*wf, snap.views);
            for (int64_t id : report.rewrite.entries_used) repo_.record_reuse(id);
        } else {
            report.rewrite.jobs_before = report.rewrite.jobs_after =
                static_cast<int>(wf->jobs.size());
        }

        Heuristic heuristic = Heuristic::from_name(cfg_.heuristic);
        std::vector<std::pair<std::string, InjectedStore>> injected;
        for (auto& job : wf->jobs) {
            auto points = enumerate_candidates(job.plan, heuristic);
            for (const auto& rec : inject_stores(job, points, report.workflow_id))
                injected.emplace_back(job.id, rec);
        }
        report.injected = injected;

        Executor ex(dfs_, {.chunk_bytes = cfg_.chunk_bytes,
                           .reducers = cfg_.reducers,
                           .task_threads = cfg_.task_threads,
                           .overwrite = cfg_.overwrite});
        report.stats = ex.execute_workflow(*wf, cfg_.parallelism);
        report.jobs_executed = static_cast<int>(report.stats.jobs.size());
        report.ok = report.stats.ok();
        if (!report.ok) {
            for (const auto& outcome : report.stats.jobs)
                if (outcome.state == JobOutcome::State::Failed)
                    report.error += (report.error.empty() ? "" : "; ") + outcome.error;
            if (report.error.empty()) report.error = "workflow did not complete";
        }

        if (report.ok) {
            for (const auto& outcome : report.stats.jobs)
                repo_.note_load_throughput(outcome.stats.input_bytes,
                                           outcome.stats.t_load);
            if (cfg_.admit) admit_candidates(*wf, injected, report);
        }
        if (cfg_.evict_after)
            for (auto& ev : repo_.evict(cfg_.window_us))
                report.evicted.push_back(std::move(ev));
        if (report.ok) cleanup_tmp(report.workflow_id);
        if (report.ok && cfg_.canonical)
            for (const auto& p : report.sink_paths) dfs_.canonicalize(p);
        return report;
    }

private:
    static bool engine_owned(const std::string& path) {
        return path.rfind("tmp/", 0) == 0 || path.rfind("restore/", 0) == 0;
    }

    std::string next_workflow_id() {
        auto now = std::chrono::duration_cast<std::chrono::microseconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
        return "wf" + std::to_string(now) + "n" + std::to_string(++counter_);
    }

    // Every store of every executed job is a potential repository entry: the
    // job's own outputs (their plan is the store's ancestor closure) and the
    // injected sub-job outputs alike. Larger fragments are offered first so
    // the repository order settles with subsuming entries up front.
    void admit_candidates(const Workflow& wf,
                          const std::vector<std::pair<std::string, InjectedStore>>& injected,
                          SubmitReport& report) {
        for (size_t i = 0; i < wf.jobs.size(); ++i) {
            const auto& job = wf.jobs[i];
            if (i >= report.stats.jobs.size() ||
                report.stats.jobs[i].state != JobOutcome::State::Done)
                continue;
            const JobStatistics& stats = report.stats.jobs[i].stats;
            auto schemas = infer_schemas(job.plan);
            if (!schemas.ok()) continue;

            std::set<int> injected_ids;
            for (const auto& [jid, rec] : injected)
                if (jid == job.id) injected_ids.insert(rec.store_id);

            std::vector<int> store_ids;
            for (int sid : job.plan.ids_of(OpKind::Store))
                if (!injected_ids.count(sid)) store_ids.push_back(sid);
            for (const auto& [jid, rec] : injected)
                if (jid == job.id) store_ids.push_back(rec.store_id);

            for (int sid : store_ids) {
                AdmitCandidate cand = derive_candidate(job, sid, stats, schemas);
                AdmissionRecord ar;
                ar.job_id = job.id;
                ar.path = cand.output_path;
                auto res = repo_.admit(cand);
                ar.accepted = res.accepted;
                ar.entry_id = res.id;
                ar.reason = res.reason;
                report.admitted.push_back(ar);
            }
        }
    }

    AdmitCandidate derive_candidate(const MapReduceJob& job, int store_id,
                                    const JobStatistics& stats,
                                    const SchemaResult& schemas) {
        AdmitCandidate cand;
        cand.plan = extract_subjob_plan(job.plan, store_id);
        const auto* store = job.plan.find(store_id);
        cand.output_path = store->params.path;
        cand.stored_schema = schemas.by_op.at(job.plan.inputs(store_id)[0]);
        bool has_shuffle = false;
        for (const auto& op : cand.plan.ops) {
            if (op.kind == OpKind::Load) {
                auto lit = stats.t_load_per_op.find(op.id);
                if (lit != stats.t_load_per_op.end()) cand.t_load += lit->second;
                auto bit = stats.input_bytes_per_path.find(op.params.path);
                if (bit != stats.input_bytes_per_path.end())
                    cand.input_bytes += bit->second;
            } else if (op.kind != OpKind::Store) {
                if (is_shuffle_kind(op.kind)) has_shuffle = true;
                auto oit = stats.t_ops.find(op.id);
                if (oit != stats.t_ops.end()) cand.t_ops += oit->second;
            }
        }
        if (has_shuffle) cand.t_sort = stats.t_sort;
        auto sit = stats.t_store_per_op.find(store_id);
        if (sit != stats.t_store_per_op.end()) cand.t_store = sit->second;
        auto bit = stats.store_bytes.find(store_id);
        if (bit != stats.store_bytes.end()) cand.output_bytes = bit->second;
        cand.t_elapsed = cand.recompute_cost();
        return cand;
    }

    // Tmp data of this workflow disappears unless an admitted entry now owns
    // it as its stored dataset.
    void cleanup_tmp(const std::string& wf_id) {
        std::set<std::string> keep;
        for (const auto& e : repo_.ordered_scan()) keep.insert(e->output_path);
        std::string prefix = "tmp/" + wf_id + "/";
        for (const auto& path : dfs_.list()) {
            if (path.rfind(prefix, 0) != 0) continue;
            if (keep.count(path)) continue;
            dfs_.remove(path);
        }
    }

    Dfs& dfs_;
    Repository& repo_;
    EngineConfig cfg_;
    int64_t counter_ = 0;
};

} // namespace restore
