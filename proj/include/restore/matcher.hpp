#pragma once

// Plan containment matching and workflow rewriting. A repository entry whose
// plan is contained in a job's plan lets the job splice in a Load of the
// entry's stored output in place of recomputing that fragment. Containment is
// decided by pairing every stored-plan operator with an equivalent input-plan
// operator, walking both plans upward from their Load frontiers; signatures
// and slot-aligned inputs must agree, the pairing is injective, and dead ends
// backtrack, so a match is found whenever one exists.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "restore/compiler.hpp"
#include "restore/plan.hpp"

namespace restore {

// What the matcher needs to know about one repository entry.
struct CandidateView {
    int64_t id = -1;
    const PhysicalPlan* plan = nullptr;
    std::string output_path;
    SchemaDef stored_schema;
};

struct PlanMatch {
    std::map<int, int> mapping; // repo op id -> input op id
    int frontier_input = -1;    // input op equivalent to the repo plan's pre-store op
    int frontier_repo = -1;
};

namespace detail {

class Traverser {
public:
    Traverser(const PhysicalPlan& input, const PhysicalPlan& repo)
        : input_(input), repo_(repo) {}

    std::optional<PlanMatch> run() {
        // The stored plan must end in exactly one Store.
        auto repo_stores = repo_.ids_of(OpKind::Store);
        if (repo_stores.size() != 1) return std::nullopt;
        int pre_store = repo_.inputs(repo_stores[0])[0];

        // Pair repo operators in topological order, so every operator's
        // inputs are already paired when its own candidates are screened.
        for (int id : repo_.topo_order())
            if (repo_.find(id)->kind != OpKind::Store) order_.push_back(id);
        if (!pair_from(0)) return std::nullopt;

        PlanMatch m;
        m.mapping = mapping_;
        m.frontier_repo = pre_store;
        m.frontier_input = mapping_.at(pre_store);
        return m;
    }

private:
    bool equivalent(int in_id, int repo_id) const {
        const auto* a = input_.find(in_id);
        const auto* b = repo_.find(repo_id);
        if (a->kind != b->kind) return false;
        if (a->signature() != b->signature()) return false;
        auto in_inputs = input_.inputs(in_id);
        auto repo_inputs = repo_.inputs(repo_id);
        if (in_inputs.size() != repo_inputs.size()) return false;
        // Slot-aligned inputs must already be paired with each other.
        for (size_t s = 0; s < repo_inputs.size(); ++s) {
            auto it = mapping_.find(repo_inputs[s]);
            if (it == mapping_.end() || it->second != in_inputs[s]) return false;
        }
        return true;
    }

    // Tries every same-kind input operator for the k-th repo operator and
    // backtracks on dead ends. Backtracking matters when one dataset is
    // loaded several times: the first load pairing an anchor picks can leave
    // the rest of the fragment unmatchable even though another choice works.
    bool pair_from(size_t k) {
        if (k == order_.size()) return true;
        int r = order_[k];
        for (int cand : input_.ids_of(repo_.find(r)->kind)) {
            if (consumed_input_.count(cand) || !equivalent(cand, r)) continue;
            mapping_[r] = cand;
            consumed_input_.insert(cand);
            if (pair_from(k + 1)) return true;
            mapping_.erase(r);
            consumed_input_.erase(cand);
        }
        return false;
    }

    const PhysicalPlan& input_;
    const PhysicalPlan& repo_;
    std::vector<int> order_;
    std::map<int, int> mapping_;
    std::set<int> consumed_input_;
};

} // namespace detail

inline std::optional<PlanMatch> pairwise_plan_traversal(const PhysicalPlan& input,
                                                        const PhysicalPlan& repo) {
    return detail::Traverser(input, repo).run();
}

// ---------------------------------------------------------------------------
// Job rewriting

// Replaces everything the matched fragment computed with a Load of the
// entry's stored output, then drops operators that no longer reach a store.
inline PhysicalPlan splice_reuse(const PhysicalPlan& plan, int frontier,
                                 const CandidateView& entry) {
    PhysicalPlan np = plan;
    OpParams load_params;
    load_params.path = entry.output_path;
    load_params.schema = entry.stored_schema;
    int load_id = np.add(OpKind::Load, load_params);
    for (auto& e : np.edges)
        if (e.src == frontier) e.src = load_id;
    std::set<int> live;
    for (int sid : np.ids_of(OpKind::Store)) {
        auto anc = np.ancestors(sid);
        live.insert(anc.begin(), anc.end());
    }
    PhysicalPlan pruned;
    for (const auto& op : np.ops)
        if (live.count(op.id)) pruned.ops.push_back(op);
    for (const auto& e : np.edges)
        if (live.count(e.src) && live.count(e.dst)) pruned.edges.push_back(e);
    return pruned;
}

struct JobRewrite {
    bool changed = false;
    std::vector<int64_t> entries_used;
    int ops_before = 0, ops_after = 0;
};

// Repeatedly scans the ordered entries and applies the first acceptable
// match until a full scan finds none. Every splice must strictly shrink the
// plan and still type-check, so the loop terminates.
inline JobRewrite match_job(MapReduceJob& job,
                            const std::vector<CandidateView>& entries) {
    JobRewrite result;
    result.ops_before = static_cast<int>(job.plan.ops.size());
    bool progressed = true;
    while (progressed) {
        progressed = false;
        for (const auto& entry : entries) {
            if (!entry.plan) continue;
            if (entry.output_path == job.output_path) continue; // self reference
            auto m = pairwise_plan_traversal(job.plan, *entry.plan);
            if (!m) continue;
            // The stored dataset must look exactly like what the fragment
            // would have produced.
            auto schemas = infer_schemas(job.plan);
            if (!schemas.ok()) continue;
            if (schema_to_text(schemas.by_op.at(m->frontier_input)) !=
                schema_to_text(entry.stored_schema))
                continue;
            PhysicalPlan np = splice_reuse(job.plan, m->frontier_input, entry);
            if (np.ops.size() >= job.plan.ops.size()) continue;
            if (!np.check().empty()) continue;
            if (!infer_schemas(np).ok()) continue;
            int shuffles = 0;
            for (const auto& op : np.ops)
                if (is_shuffle_kind(op.kind)) ++shuffles;
            if (shuffles > 1) continue;
            job.plan = std::move(np);
            finalize_job(job);
            result.changed = true;
            result.entries_used.push_back(entry.id);
            progressed = true;
            break;
        }
    }
    result.ops_after = static_cast<int>(job.plan.ops.size());
    return result;
}

// ---------------------------------------------------------------------------
// Workflow rewriting

struct RewriteReport {
    struct JobReport {
        std::string job_id;
        std::vector<int64_t> entries;
        int ops_before = 0, ops_after = 0;
        bool elided = false; // collapsed to a copy of a stored dataset
        bool pruned = false; // output no longer needed by anyone
    };
    std::vector<JobReport> jobs;
    std::set<int64_t> entries_used;
    int jobs_before = 0, jobs_after = 0;

    bool changed() const { return !entries_used.empty() || jobs_before != jobs_after; }
};

namespace detail {

inline bool is_tmp_path(const std::string& path) { return path.rfind("tmp/", 0) == 0; }

// A job whose whole computation matched: Load(stored) -> Store(out).
inline bool is_copy_job(const MapReduceJob& job, std::string* src,
                        SchemaDef* src_schema) {
    if (job.plan.ops.size() != 2) return false;
    const PhysicalOperator* load = nullptr;
    const PhysicalOperator* store = nullptr;
    for (const auto& op : job.plan.ops) {
        if (op.kind == OpKind::Load) load = &op;
        if (op.kind == OpKind::Store) store = &op;
    }
    if (!load || !store) return false;
    if (src) *src = load->params.path;
    if (src_schema) *src_schema = load->params.schema;
    return true;
}

inline void recompute_deps(Workflow& wf) {
    wf.deps.clear();
    std::map<std::string, int> producer_of;
    for (size_t i = 0; i < wf.jobs.size(); ++i)
        for (const auto& path : wf.jobs[i].store_paths)
            producer_of[path] = static_cast<int>(i);
    for (size_t i = 0; i < wf.jobs.size(); ++i)
        for (const auto& path : wf.jobs[i].input_paths) {
            auto it = producer_of.find(path);
            if (it != producer_of.end() && it->second != static_cast<int>(i))
                wf.deps.emplace_back(static_cast<int>(i), it->second);
        }
    std::sort(wf.deps.begin(), wf.deps.end());
    wf.deps.erase(std::unique(wf.deps.begin(), wf.deps.end()), wf.deps.end());
}

} // namespace detail

// Matches every job against the repository in dependency order. Jobs that
// collapse into plain copies of a stored dataset are elided when their output
// is engine-owned tmp data (consumers read the stored dataset directly), and
// producers whose tmp outputs lose all consumers are pruned.
inline RewriteReport rewrite_workflow(Workflow& wf,
                                      const std::vector<CandidateView>& entries) {
    RewriteReport report;
    report.jobs_before = static_cast<int>(wf.jobs.size());
    std::map<std::string, RewriteReport::JobReport> by_id;

    std::vector<int> order;
    for (const auto& batch : execution_order(wf))
        for (int idx : batch) order.push_back(idx);

    std::set<size_t> drop;
    for (int idx : order) {
        MapReduceJob& job = wf.jobs[static_cast<size_t>(idx)];
        JobRewrite jr = match_job(job, entries);
        RewriteReport::JobReport jrep;
        jrep.job_id = job.id;
        jrep.ops_before = jr.ops_before;
        jrep.ops_after = jr.ops_after;
        jrep.entries = jr.entries_used;
        for (int64_t e : jr.entries_used) report.entries_used.insert(e);

        std::string src;
        SchemaDef src_schema;
        if (jr.changed && detail::is_copy_job(job, &src, &src_schema) &&
            detail::is_tmp_path(job.output_path)) {
            // Consumers read the stored dataset directly; this job vanishes.
            for (size_t j = 0; j < wf.jobs.size(); ++j) {
                if (j == static_cast<size_t>(idx) || drop.count(j)) continue;
                bool touched = false;
                for (auto& op : wf.jobs[j].plan.ops) {
                    if (op.kind == OpKind::Load && op.params.path == job.output_path) {
                        op.params.path = src;
                        op.params.schema = src_schema;
                        touched = true;
                    }
                }
                if (touched) finalize_job(wf.jobs[j]);
            }
            drop.insert(static_cast<size_t>(idx));
            jrep.elided = true;
        }
        by_id[job.id] = jrep;
    }

    // Drop producers whose only purpose was tmp data nobody loads anymore.
    bool pruned = true;
    while (pruned) {
        pruned = false;
        std::set<std::string> loaded;
        for (size_t j = 0; j < wf.jobs.size(); ++j) {
            if (drop.count(j)) continue;
            for (const auto& p : wf.jobs[j].input_paths) loaded.insert(p);
        }
        for (size_t j = 0; j < wf.jobs.size(); ++j) {
            if (drop.count(j)) continue;
            const MapReduceJob& job = wf.jobs[j];
            bool needed = false;
            for (const auto& p : job.store_paths)
                if (!detail::is_tmp_path(p) || loaded.count(p)) needed = true;
            if (!needed) {
                drop.insert(j);
                by_id[job.id].pruned = true;
                pruned = true;
            }
        }
    }

    if (!drop.empty()) {
        std::vector<MapReduceJob> kept;
        for (size_t j = 0; j < wf.jobs.size(); ++j)
            if (!drop.count(j)) kept.push_back(std::move(wf.jobs[j]));
        wf.jobs = std::move(kept);
    }
    detail::recompute_deps(wf);

    report.jobs_after = static_cast<int>(wf.jobs.size());
    for (auto& [id, jrep] : by_id) report.jobs.push_back(jrep);
    return report;
}

} // namespace restore
