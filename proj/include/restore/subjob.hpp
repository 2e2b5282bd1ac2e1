#pragma once

// Sub-job output materialization. After a job's plan is final, selected
// intermediate operators get a Split spliced behind them so their output is
// both forwarded to the original consumers and stored as its own dataset.
// Each injected store later becomes a repository candidate whose plan is the
// ancestor closure of the store with the Splits contracted away.

#include <set>
#include <string>
#include <vector>

#include "restore/compiler.hpp"
#include "restore/plan.hpp"

namespace restore {

// Which operator kinds are worth materializing.
struct Heuristic {
    std::string name;
    std::set<OpKind> kinds;
    bool enabled = true;

    bool eligible(OpKind k) const { return enabled && kinds.count(k) > 0; }

    // Cheap-to-store outputs only: row-shrinking operators.
    static Heuristic conservative() {
        return {"conservative", {OpKind::Project, OpKind::Filter}, true};
    }
    // Also keep the expensive-to-recompute shuffle outputs.
    static Heuristic aggressive() {
        return {"aggressive",
                {OpKind::Project, OpKind::Filter, OpKind::Join, OpKind::Group,
                 OpKind::CoGroup},
                true};
    }
    // Every intermediate output.
    static Heuristic keep_all() {
        return {"none",
                {OpKind::Project, OpKind::Filter, OpKind::Join, OpKind::Group,
                 OpKind::CoGroup, OpKind::Distinct, OpKind::Union, OpKind::Aggregate},
                true};
    }
    static Heuristic disabled() { return {"off", {}, false}; }

    static Heuristic from_name(const std::string& n) {
        if (n == "conservative") return conservative();
        if (n == "aggressive") return aggressive();
        if (n == "none") return keep_all();
        if (n == "off") return disabled();
        throw std::invalid_argument("unknown heuristic '" + n + "'");
    }
};

// Operators whose outputs the heuristic wants stored, in topological order.
// Loads and Stores produce nothing new and Splits are plumbing, so they are
// never candidates regardless of heuristic.
inline std::vector<int> enumerate_candidates(const PhysicalPlan& plan,
                                             const Heuristic& h) {
    std::vector<int> points;
    for (int id : plan.topo_order()) {
        OpKind k = plan.find(id)->kind;
        if (k == OpKind::Load || k == OpKind::Store || k == OpKind::Split) continue;
        if (h.eligible(k)) points.push_back(id);
    }
    return points;
}

struct InjectedStore {
    int op_id = -1;    // operator whose output is materialized
    int split_id = -1; // Split spliced behind it
    int store_id = -1; // Store hanging off the Split
    std::string path;
};

// Splices op -> Split -> {original consumers, Store(path)} for every point.
// Points whose output already goes straight to a Store are skipped: that
// output is being written anyway and the job it feeds is the candidate.
inline std::vector<InjectedStore> inject_stores(MapReduceJob& job,
                                                const std::vector<int>& points,
                                                const std::string& wf_id) {
    std::vector<InjectedStore> out;
    for (int u : points) {
        bool feeds_store = false;
        for (int c : job.plan.consumers(u))
            if (job.plan.find(c)->kind == OpKind::Store) feeds_store = true;
        if (feeds_store) continue;

        InjectedStore rec;
        rec.op_id = u;
        rec.path = "restore/" + wf_id + "/" + job.id + "/op" + std::to_string(u);
        rec.split_id = job.plan.add(OpKind::Split, {});
        OpParams sp;
        sp.path = rec.path;
        rec.store_id = job.plan.add(OpKind::Store, sp);
        for (auto& e : job.plan.edges)
            if (e.src == u) e.src = rec.split_id;
        job.plan.add_edge(u, rec.split_id, 0);
        job.plan.add_edge(rec.split_id, rec.store_id, 0);
        out.push_back(rec);
    }
    if (!out.empty()) finalize_job(job);
    return out;
}

// The standalone plan an injected store's dataset was computed by: ancestor
// closure of the store with the pass-through Splits contracted away.
inline PhysicalPlan extract_subjob_plan(const PhysicalPlan& instrumented,
                                        int store_id) {
    auto closure = instrumented.ancestors(store_id);
    PhysicalPlan sub;
    for (const auto& op : instrumented.ops)
        if (closure.count(op.id)) sub.ops.push_back(op);
    for (const auto& e : instrumented.edges)
        if (closure.count(e.src) && closure.count(e.dst)) sub.edges.push_back(e);

    bool again = true;
    while (again) {
        again = false;
        for (const auto& op : sub.ops) {
            if (op.kind != OpKind::Split) continue;
            int feeder = sub.inputs(op.id)[0];
            for (auto& e : sub.edges)
                if (e.src == op.id) e.src = feeder;
            std::erase_if(sub.edges,
                          [&](const PlanEdge& e) { return e.dst == op.id; });
            std::erase_if(sub.ops,
                          [&](const PhysicalOperator& o) { return o.id == op.id; });
            again = true;
            break;
        }
    }
    return sub;
}

} // namespace restore
