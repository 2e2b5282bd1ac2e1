#pragma once

// Lowers validated scripts to physical plans and splits plans into workflows
// of MapReduce-style jobs. Every shuffle operator (join, group, cogroup,
// distinct) anchors exactly one job; map-side chains are packed greedily
// around it. Edges that would carry data out of a reduce stage are cut with a
// tmp Store/Load pair, which is also where inter-job dependencies come from.

#include <cassert>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "restore/plan.hpp"
#include "restore/query.hpp"

namespace restore {

struct CompileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Logical -> physical

inline PhysicalPlan to_physical(const LogicalPlan& lp) {
    PhysicalPlan plan;
    std::map<int, int> op_of_stmt;
    for (const auto& st : lp.stmts) {
        OpParams params;
        OpKind kind;
        switch (st.kind) {
            case StmtKind::Load:
                kind = OpKind::Load;
                params.path = st.dataset;
                params.schema = st.load_schema;
                break;
            case StmtKind::Store:
                kind = OpKind::Store;
                params.path = st.dataset;
                break;
            case StmtKind::Foreach:
                if (st.is_aggregate) {
                    kind = OpKind::Aggregate;
                    params.aggs = st.agg_items;
                } else {
                    kind = OpKind::Project;
                    params.columns = st.proj_cols;
                }
                break;
            case StmtKind::Filter:
                kind = OpKind::Filter;
                params.predicate = st.resolved_pred;
                break;
            case StmtKind::Join:
                kind = OpKind::Join;
                params.keys = st.resolved_keys;
                break;
            case StmtKind::Group:
                kind = OpKind::Group;
                params.keys = st.resolved_keys;
                break;
            case StmtKind::CoGroup:
                kind = OpKind::CoGroup;
                params.keys = st.resolved_keys;
                break;
            case StmtKind::Distinct:
                kind = OpKind::Distinct;
                break;
            case StmtKind::Union:
                kind = OpKind::Union;
                break;
        }
        int id = plan.add(kind, std::move(params));
        op_of_stmt[st.id] = id;
        for (size_t slot = 0; slot < st.inputs.size(); ++slot)
            plan.add_edge(op_of_stmt[st.inputs[slot]], id, static_cast<int>(slot));
    }
    // Drop statements that never reach a store.
    std::set<int> live;
    for (int id : plan.ids_of(OpKind::Store)) {
        auto anc = plan.ancestors(id);
        live.insert(anc.begin(), anc.end());
    }
    PhysicalPlan pruned;
    for (const auto& op : plan.ops)
        if (live.count(op.id)) pruned.ops.push_back(op);
    for (const auto& e : plan.edges)
        if (live.count(e.src) && live.count(e.dst)) pruned.edges.push_back(e);
    return pruned;
}

// ---------------------------------------------------------------------------
// Jobs and workflows

struct MapReduceJob {
    std::string id;
    PhysicalPlan plan;
    std::optional<int> shuffle_op;
    std::set<int> reduce_ops; // shuffle op and everything downstream of it
    std::string output_path;
    std::vector<std::string> input_paths;
    std::vector<std::string> store_paths;
    std::vector<std::vector<std::string>> shuffle_keys;

    bool is_map_only() const { return !shuffle_op.has_value(); }
    bool is_reduce_op(int op_id) const { return reduce_ops.count(op_id) > 0; }
};

struct Workflow {
    std::string id;
    std::vector<MapReduceJob> jobs;
    // (consumer, producer) pairs by job index
    std::vector<std::pair<int, int>> deps;

    std::vector<int> deps_of(int job) const {
        std::vector<int> out;
        for (auto& [c, p] : deps)
            if (c == job) out.push_back(p);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
};

// Recomputes a job's derived fields from its plan. Used after initial
// splitting and again after every rewrite, so the plan is the single source
// of truth.
inline void finalize_job(MapReduceJob& job) {
    std::string problem = job.plan.check();
    if (!problem.empty())
        throw CompileError("job " + job.id + ": invalid plan: " + problem);
    std::vector<int> shuffles;
    for (const auto& op : job.plan.ops)
        if (is_shuffle_kind(op.kind)) shuffles.push_back(op.id);
    if (shuffles.size() > 1)
        throw CompileError("job " + job.id + " has more than one shuffle operator");
    job.shuffle_op.reset();
    job.reduce_ops.clear();
    job.shuffle_keys.clear();
    if (!shuffles.empty()) {
        int s = shuffles[0];
        job.shuffle_op = s;
        std::vector<int> stack{s};
        while (!stack.empty()) {
            int cur = stack.back();
            stack.pop_back();
            if (!job.reduce_ops.insert(cur).second) continue;
            for (int c : job.plan.consumers(cur)) stack.push_back(c);
        }
        const auto* op = job.plan.find(s);
        if (op->kind == OpKind::Distinct)
            job.shuffle_keys.assign(1, {}); // whole-row key
        else
            job.shuffle_keys = op->params.keys;
    }
    job.input_paths.clear();
    for (int id : job.plan.ids_of(OpKind::Load))
        job.input_paths.push_back(job.plan.find(id)->params.path);
    std::sort(job.input_paths.begin(), job.input_paths.end());
    job.input_paths.erase(std::unique(job.input_paths.begin(), job.input_paths.end()),
                          job.input_paths.end());
    job.store_paths.clear();
    for (int id : job.plan.topo_order()) {
        const auto* op = job.plan.find(id);
        if (op->kind == OpKind::Store) job.store_paths.push_back(op->params.path);
    }
    if (job.store_paths.empty())
        throw CompileError("job " + job.id + " has no store");
    if (job.output_path.empty() ||
        std::find(job.store_paths.begin(), job.store_paths.end(), job.output_path) ==
            job.store_paths.end())
        job.output_path = job.store_paths.back();
}

inline Workflow split_into_jobs(const PhysicalPlan& pp0, const std::string& wf_id) {
    {
        std::string problem = pp0.check();
        if (!problem.empty()) throw CompileError("invalid plan: " + problem);
        if (pp0.ids_of(OpKind::Store).empty())
            throw CompileError("plan has no store");
    }
    auto schemas = infer_schemas(pp0);
    if (!schemas.ok()) throw CompileError("plan failed validation: " + schemas.errors[0]);

    Workflow wf;
    wf.id = wf_id;

    PhysicalPlan pp = pp0;
    std::vector<int> shuffles;
    for (int id : pp.topo_order())
        if (is_shuffle_kind(pp.find(id)->kind)) shuffles.push_back(id);

    if (shuffles.empty()) {
        MapReduceJob job;
        job.id = "j1";
        job.plan = pp;
        finalize_job(job);
        wf.jobs.push_back(std::move(job));
        return wf;
    }

    // Reduce regions: each shuffle op plus every downstream operator whose
    // inputs all sit in the same region already.
    std::map<int, int> region;
    for (int s : shuffles) region[s] = s;
    for (int id : pp.topo_order()) {
        const auto* op = pp.find(id);
        if (is_shuffle_kind(op->kind) || op->kind == OpKind::Load) continue;
        auto ins = pp.inputs(id);
        if (ins.empty()) continue;
        int r = -1;
        bool all = true;
        for (int src : ins) {
            auto it = region.find(src);
            if (it == region.end() || (r != -1 && it->second != r)) {
                all = false;
                break;
            }
            r = it->second;
        }
        if (all) region[id] = r;
    }

    std::map<int, std::string> job_name;
    for (size_t i = 0; i < shuffles.size(); ++i)
        job_name[shuffles[i]] = "j" + std::to_string(i + 1);

    // Cut every edge that leaves a reduce region: the producing job stores to
    // tmp, consumers load it back.
    std::vector<size_t> cut_edges;
    for (size_t i = 0; i < pp.edges.size(); ++i) {
        const auto& e = pp.edges[i];
        auto ru = region.find(e.src);
        if (ru == region.end()) continue;
        auto rv = region.find(e.dst);
        if (rv != region.end() && rv->second == ru->second) continue;
        cut_edges.push_back(i);
    }
    std::set<std::string> used_tmp;
    std::map<int, int> load_for_producer;
    for (size_t i : cut_edges) {
        int u = pp.edges[i].src;
        int load_id;
        auto it = load_for_producer.find(u);
        if (it != load_for_producer.end()) {
            load_id = it->second;
        } else {
            std::string base = "tmp/" + wf_id + "/" + job_name[region.at(u)];
            std::string tmp_path = base;
            if (!used_tmp.insert(tmp_path).second) {
                tmp_path = base + "_op" + std::to_string(u);
                used_tmp.insert(tmp_path);
            }
            OpParams store_params;
            store_params.path = tmp_path;
            int store_id = pp.add(OpKind::Store, store_params);
            pp.add_edge(u, store_id, 0);
            region[store_id] = region.at(u);
            OpParams load_params;
            load_params.path = tmp_path;
            load_params.schema = schemas.by_op.at(u);
            load_id = pp.add(OpKind::Load, load_params);
            load_for_producer[u] = load_id;
        }
        pp.edges[i].src = load_id;
    }

    // Node set per job: the reduce region plus the map-side ancestry of the
    // shuffle. Map operators shared by several shuffles are duplicated into
    // each job, keeping their identity.
    std::vector<std::set<int>> nodes(shuffles.size());
    for (size_t i = 0; i < shuffles.size(); ++i) {
        int s = shuffles[i];
        for (auto& [id, r] : region)
            if (r == s) nodes[i].insert(id);
        auto anc = pp.ancestors(s);
        nodes[i].insert(anc.begin(), anc.end());
    }

    // Stores fed from map context attach to a job that already computes part
    // of their ancestry. Stores whose ancestry touches no job (chains hanging
    // off a cut edge, or shuffle-free islands) become map-only jobs of their
    // own.
    for (int st : pp.ids_of(OpKind::Store)) {
        if (region.count(st)) continue;
        auto anc = pp.ancestors(st);
        size_t target = nodes.size();
        for (size_t i = 0; i < nodes.size() && target == nodes.size(); ++i)
            for (int a : anc)
                if (nodes[i].count(a)) {
                    target = i;
                    break;
                }
        if (target == nodes.size()) nodes.emplace_back();
        nodes[target].insert(anc.begin(), anc.end());
    }

    for (size_t i = 0; i < nodes.size(); ++i) {
        MapReduceJob job;
        job.id = "j" + std::to_string(i + 1); // matches job_name for shuffle jobs
        for (const auto& op : pp.ops)
            if (nodes[i].count(op.id)) job.plan.ops.push_back(op);
        for (const auto& e : pp.edges)
            if (nodes[i].count(e.src) && nodes[i].count(e.dst))
                job.plan.edges.push_back(e);
        finalize_job(job);
        wf.jobs.push_back(std::move(job));
    }

    // Dependencies: loading a path another job stores orders the two jobs.
    std::map<std::string, int> producer_of;
    for (size_t i = 0; i < wf.jobs.size(); ++i)
        for (const auto& path : wf.jobs[i].store_paths) {
            if (producer_of.count(path))
                throw CompileError("dataset '" + path + "' is stored twice");
            producer_of[path] = static_cast<int>(i);
        }
    for (size_t i = 0; i < wf.jobs.size(); ++i)
        for (const auto& path : wf.jobs[i].input_paths) {
            auto it = producer_of.find(path);
            if (it != producer_of.end() && it->second != static_cast<int>(i))
                wf.deps.emplace_back(static_cast<int>(i), it->second);
        }
    std::sort(wf.deps.begin(), wf.deps.end());
    wf.deps.erase(std::unique(wf.deps.begin(), wf.deps.end()), wf.deps.end());
    return wf;
}

// Batches of job indices; every batch only depends on earlier batches.
inline std::vector<std::vector<int>> execution_order(const Workflow& wf) {
    std::vector<int> pending(wf.jobs.size(), 0);
    for (auto& [c, p] : wf.deps) ++pending[static_cast<size_t>(c)];
    std::vector<std::vector<int>> batches;
    std::set<int> done;
    while (done.size() < wf.jobs.size()) {
        std::vector<int> batch;
        for (size_t i = 0; i < wf.jobs.size(); ++i) {
            if (done.count(static_cast<int>(i))) continue;
            bool ready = true;
            for (auto& [c, p] : wf.deps)
                if (c == static_cast<int>(i) && !done.count(p)) ready = false;
            if (ready) batch.push_back(static_cast<int>(i));
        }
        if (batch.empty())
            throw CompileError("workflow dependency cycle");
        for (int i : batch) done.insert(i);
        batches.push_back(std::move(batch));
    }
    return batches;
}

// Compiles a script all the way to a workflow; throws on parse errors and
// returns validation diagnostics through `diags`.
inline std::optional<Workflow> compile_script(std::string_view script,
                                              const std::string& wf_id,
                                              std::vector<Diagnostic>& diags) {
    LogicalPlan lp = parse_script(script);
    bool has_store = false;
    for (const auto& st : lp.stmts)
        if (st.kind == StmtKind::Store) has_store = true;
    diags = validate(lp);
    if (!has_store)
        diags.push_back({-1, "", 1, 1, "script has no store statement"});
    if (!diags.empty()) return std::nullopt;
    return split_into_jobs(to_physical(lp), wf_id);
}

} // namespace restore
