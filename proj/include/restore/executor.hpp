#pragma once

// Local MapReduce-style execution of compiled jobs. A job runs as a map stage
// (chunked dataset scan through the map fragment, hash-partitioned sorted
// spills at the shuffle boundary) and, when the job has a shuffle operator, a
// reduce stage (k-way merge per partition, per-key shuffle evaluation, then
// the reduce chain). Output datasets commit atomically after all tasks
// succeed; a failed job publishes nothing.
//
// Timing: each task records exclusive time per phase (load, per-operator,
// sort/merge, store). Stage totals are cumulative busy times scaled by
// min(1, stage wall / stage busy), so phase sums can never exceed the
// measured job wall even when tasks overlap.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "restore/compiler.hpp"
#include "restore/dfs.hpp"

namespace restore {

struct ExecError : std::runtime_error {
    std::string job_id;
    ExecError(std::string job, const std::string& msg)
        : std::runtime_error("job " + job + ": " + msg), job_id(std::move(job)) {}
};

struct JobStatistics {
    std::string job_id;
    double t_load = 0, t_sort = 0, t_store = 0, t_elapsed = 0;
    std::map<int, double> t_ops;          // exclusive seconds per operator id
    std::map<int, double> t_load_per_op;  // per load operator
    std::map<int, double> t_store_per_op; // per store operator
    uint64_t input_bytes = 0, output_bytes = 0;
    std::map<std::string, uint64_t> input_bytes_per_path;
    std::map<int, uint64_t> store_bytes; // per store operator id
    int map_tasks = 0, reduce_tasks = 0;
    double mapper_avg = 0, reducer_avg = 0;

    double t_ops_sum() const {
        double s = 0;
        for (auto& [id, v] : t_ops) s += v;
        return s;
    }
    // Job cost: load + operator work + sort + store.
    double et() const { return t_load + t_ops_sum() + t_sort + t_store; }
};

struct JobOutcome {
    enum class State { Done, Failed, Skipped };
    State state = State::Done;
    JobStatistics stats;
    std::string error;
};

struct WorkflowStatistics {
    std::string workflow_id;
    std::vector<JobOutcome> jobs; // by workflow job index
    std::map<std::string, double> t_total;
    double critical_path = 0;
    double wall_seconds = 0;

    bool ok() const {
        for (const auto& j : jobs)
            if (j.state != JobOutcome::State::Done) return false;
        return true;
    }
};

// t_total(job) = t_elapsed(job) + max over upstream jobs of t_total, with an
// empty dependency set contributing zero.
inline std::map<std::string, double> compute_t_total(const Workflow& wf,
                                                     const std::vector<JobOutcome>& jobs) {
    std::map<std::string, double> out;
    std::function<double(int)> total = [&](int idx) -> double {
        const std::string& id = wf.jobs[static_cast<size_t>(idx)].id;
        auto it = out.find(id);
        if (it != out.end()) return it->second;
        double dep_max = 0;
        for (int p : wf.deps_of(idx)) dep_max = std::max(dep_max, total(p));
        double v = jobs[static_cast<size_t>(idx)].stats.t_elapsed + dep_max;
        out[id] = v;
        return v;
    };
    for (size_t i = 0; i < wf.jobs.size(); ++i) total(static_cast<int>(i));
    return out;
}

struct ExecutorConfig {
    uint64_t chunk_bytes = 16ull << 20;
    int reducers = 4;
    int task_threads = 0; // 0: hardware concurrency
    bool overwrite = false;
};

namespace detail {

inline double now_sec() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

class ScopedTimer {
public:
    explicit ScopedTimer(double& acc) : acc_(acc), t0_(now_sec()) {}
    ~ScopedTimer() { acc_ += now_sec() - t0_; }

private:
    double& acc_;
    double t0_;
};

// Runs fn(0..n-1) on up to `threads` workers; rethrows the first failure.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::mutex err_mu;
    std::exception_ptr first_error;
    auto worker = [&] {
        while (true) {
            int i = next.fetch_add(1);
            if (i >= n || failed.load()) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(err_mu);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

struct CompiledCmp {
    int lhs_idx = -1; // column index, or -1 when literal
    Operand lhs;
    CmpOp op = CmpOp::Eq;
    int rhs_idx = -1;
    Operand rhs;
    bool numeric = false; // literal side is a number: compare numerically
};

struct CompiledAgg {
    bool is_key = false;
    AggFn fn = AggFn::Count;
    int group_idx = -1;
    int bag_idx = -1;
    int inner_idx = -1;
};

struct CompiledOp {
    OpKind kind = OpKind::Load;
    const PhysicalOperator* op = nullptr;
    SchemaDef out_schema;
    std::vector<int> proj_idx;
    std::vector<CompiledCmp> cmps;
    std::vector<std::vector<int>> key_idx; // per input slot (shuffle ops)
    std::vector<CompiledAgg> aggs;
    std::vector<std::pair<int, int>> out_edges; // (consumer, slot)
};

struct TaskStats {
    double busy = 0, t_load = 0, t_sort = 0, t_store = 0;
    std::map<int, double> t_ops;
    std::map<int, double> t_load_per_op, t_store_per_op;
};

struct RunRecord {
    std::string key;
    int tag = 0;
    std::string line;

    bool operator<(const RunRecord& o) const {
        if (key != o.key) return key < o.key;
        if (tag != o.tag) return tag < o.tag;
        return line < o.line;
    }
};

class RunReader {
public:
    explicit RunReader(const fs::path& file) : in_(file, std::ios::binary) { advance(); }

    bool valid() const { return valid_; }
    const RunRecord& current() const { return cur_; }

    void advance() {
        std::string line;
        if (!std::getline(in_, line)) {
            valid_ = false;
            return;
        }
        size_t a = line.find('\x02');
        size_t b = line.find('\x02', a + 1);
        cur_.key = line.substr(0, a);
        cur_.tag = std::stoi(line.substr(a + 1, b - a - 1));
        cur_.line = line.substr(b + 1);
        valid_ = true;
    }

private:
    std::ifstream in_;
    RunRecord cur_;
    bool valid_ = false;
};

} // namespace detail

class Executor {
public:
    Executor(Dfs& dfs, ExecutorConfig cfg = {}) : dfs_(dfs), cfg_(cfg) {
        if (cfg_.task_threads <= 0) {
            unsigned hc = std::thread::hardware_concurrency();
            cfg_.task_threads = hc ? static_cast<int>(hc) : 1;
        }
        if (cfg_.reducers < 1) cfg_.reducers = 1;
    }

    const ExecutorConfig& config() const { return cfg_; }

    JobStatistics execute_job(const MapReduceJob& job) {
        double job_t0 = detail::now_sec();
        JobStatistics stats;
        stats.job_id = job.id;

        auto schemas = infer_schemas(job.plan);
        if (!schemas.ok()) throw ExecError(job.id, "plan invalid: " + schemas.errors[0]);
        auto compiled = compile_ops(job, schemas);

        // Pre-flight input checks and read leases for the whole run.
        std::vector<ReadLease> leases;
        for (const auto& path : job.input_paths) {
            if (!dfs_.exists(path))
                throw ExecError(job.id, "missing input dataset '" + path + "'");
            leases.push_back(dfs_.acquire_read(path));
            DatasetMeta meta = dfs_.stat(path);
            stats.input_bytes += meta.bytes;
            stats.input_bytes_per_path[path] = meta.bytes;
        }
        for (int load_id : job.plan.ids_of(OpKind::Load)) {
            const auto* op = job.plan.find(load_id);
            if (op->params.schema.empty()) continue;
            DatasetMeta meta = dfs_.stat(op->params.path);
            if (!meta.schema.empty() && meta.schema.size() != op->params.schema.size())
                throw ExecError(job.id,
                                "load schema width " +
                                    std::to_string(op->params.schema.size()) +
                                    " does not match dataset '" + op->params.path +
                                    "' width " + std::to_string(meta.schema.size()));
        }

        // Map tasks: byte-range chunks over every load's part files.
        struct Chunk {
            int load_op;
            fs::path file;
            uint64_t begin, end;
        };
        std::vector<Chunk> chunks;
        for (int load_id : job.plan.ids_of(OpKind::Load)) {
            const std::string& path = job.plan.find(load_id)->params.path;
            for (auto& [file, size] : dfs_.part_files(path)) {
                uint64_t off = 0;
                do {
                    uint64_t end = std::min(size, off + cfg_.chunk_bytes);
                    if (size > 0) chunks.push_back({load_id, file, off, end});
                    off = end;
                } while (off < size);
            }
        }
        stats.map_tasks = static_cast<int>(chunks.size());
        bool has_reduce = job.shuffle_op.has_value();
        stats.reduce_tasks = has_reduce ? cfg_.reducers : 0;

        // Writers for every store, partitioned by producing stage.
        std::map<int, std::unique_ptr<DatasetWriter>> writers;
        std::vector<int> store_ids = job.plan.ids_of(OpKind::Store);
        try {
            for (int sid : store_ids) {
                const auto* op = job.plan.find(sid);
                bool reduce_side = job.is_reduce_op(sid);
                int parts = reduce_side ? cfg_.reducers : static_cast<int>(chunks.size());
                writers[sid] = std::make_unique<DatasetWriter>(dfs_.create(
                    op->params.path, schemas.by_op.at(sid), parts, cfg_.overwrite));
            }
        } catch (const DfsError& e) {
            throw ExecError(job.id, e.what());
        }

        fs::path work = dfs_.work_root() / ("job-" + std::to_string(work_token_.fetch_add(1)));
        fs::create_directories(work);
        struct WorkGuard {
            fs::path dir;
            ~WorkGuard() {
                std::error_code ec;
                fs::remove_all(dir, ec);
            }
        } work_guard{work};

        std::mutex stats_mu;
        std::vector<detail::TaskStats> map_stats, reduce_stats;

        auto run_stage = [&](int n, const std::function<void(int, detail::TaskStats&)>& body,
                             std::vector<detail::TaskStats>& sink) -> double {
            double t0 = detail::now_sec();
            detail::parallel_for(n, cfg_.task_threads, [&](int i) {
                detail::TaskStats ts;
                double task0 = detail::now_sec();
                body(i, ts);
                ts.busy = detail::now_sec() - task0;
                std::lock_guard lock(stats_mu);
                sink.push_back(std::move(ts));
            });
            return detail::now_sec() - t0;
        };

        double map_wall = 0, reduce_wall = 0;
        try {
            map_wall = run_stage(
                static_cast<int>(chunks.size()),
                [&](int i, detail::TaskStats& ts) {
                    run_map_task(job, compiled, chunks[i].load_op, chunks[i].file,
                                 chunks[i].begin, chunks[i].end, i, writers, work, ts);
                },
                map_stats);
            if (has_reduce) {
                reduce_wall = run_stage(
                    cfg_.reducers,
                    [&](int p, detail::TaskStats& ts) {
                        run_reduce_task(job, compiled, p, static_cast<int>(chunks.size()),
                                        writers, work, ts);
                    },
                    reduce_stats);
            }
        } catch (const ExecError&) {
            for (auto& [sid, w] : writers) w->abort();
            throw;
        } catch (const std::exception& e) {
            for (auto& [sid, w] : writers) w->abort();
            throw ExecError(job.id, e.what());
        }

        for (int sid : store_ids) stats.store_bytes[sid] = writers[sid]->bytes_written();
        for (int sid : store_ids) {
            try {
                writers[sid]->commit();
            } catch (const DfsError& e) {
                throw ExecError(job.id, e.what());
            }
        }
        for (int sid : store_ids)
            if (job.plan.find(sid)->params.path == job.output_path)
                stats.output_bytes = stats.store_bytes[sid];

        // Fold task stats with per-stage normalization.
        auto fold = [&](const std::vector<detail::TaskStats>& tasks, double wall,
                        double& avg_out) {
            double busy = 0;
            for (const auto& ts : tasks) busy += ts.busy;
            double scale = busy > 0 ? std::min(1.0, wall / busy) : 0.0;
            for (const auto& ts : tasks) {
                stats.t_load += ts.t_load * scale;
                stats.t_sort += ts.t_sort * scale;
                stats.t_store += ts.t_store * scale;
                for (auto& [id, v] : ts.t_ops) stats.t_ops[id] += v * scale;
                for (auto& [id, v] : ts.t_load_per_op) stats.t_load_per_op[id] += v * scale;
                for (auto& [id, v] : ts.t_store_per_op)
                    stats.t_store_per_op[id] += v * scale;
            }
            avg_out = tasks.empty() ? 0 : busy / static_cast<double>(tasks.size());
        };
        fold(map_stats, map_wall, stats.mapper_avg);
        if (has_reduce) fold(reduce_stats, reduce_wall, stats.reducer_avg);

        stats.t_elapsed = detail::now_sec() - job_t0;
        return stats;
    }

    WorkflowStatistics execute_workflow(const Workflow& wf, int parallelism = 1) {
        double t0 = detail::now_sec();
        WorkflowStatistics ws;
        ws.workflow_id = wf.id;
        ws.jobs.resize(wf.jobs.size());
        for (size_t i = 0; i < wf.jobs.size(); ++i)
            ws.jobs[i].stats.job_id = wf.jobs[i].id;
        parallelism = std::max(1, parallelism);

        std::mutex mu;
        for (const auto& batch : execution_order(wf)) {
            std::vector<int> runnable;
            for (int idx : batch) {
                bool upstream_ok = true;
                for (int p : wf.deps_of(idx))
                    if (ws.jobs[static_cast<size_t>(p)].state != JobOutcome::State::Done)
                        upstream_ok = false;
                if (!upstream_ok) {
                    ws.jobs[static_cast<size_t>(idx)].state = JobOutcome::State::Skipped;
                    ws.jobs[static_cast<size_t>(idx)].error = "upstream job failed";
                } else {
                    runnable.push_back(idx);
                }
            }
            detail::parallel_for(
                static_cast<int>(runnable.size()), parallelism, [&](int i) {
                    int idx = runnable[static_cast<size_t>(i)];
                    try {
                        JobStatistics js = execute_job(wf.jobs[static_cast<size_t>(idx)]);
                        std::lock_guard lock(mu);
                        ws.jobs[static_cast<size_t>(idx)].state = JobOutcome::State::Done;
                        ws.jobs[static_cast<size_t>(idx)].stats = std::move(js);
                    } catch (const std::exception& e) {
                        std::lock_guard lock(mu);
                        ws.jobs[static_cast<size_t>(idx)].state = JobOutcome::State::Failed;
                        ws.jobs[static_cast<size_t>(idx)].error = e.what();
                    }
                });
        }
        ws.t_total = compute_t_total(wf, ws.jobs);
        for (auto& [id, v] : ws.t_total) ws.critical_path = std::max(ws.critical_path, v);
        ws.wall_seconds = detail::now_sec() - t0;
        return ws;
    }

private:
    std::map<int, detail::CompiledOp> compile_ops(const MapReduceJob& job,
                                                  const SchemaResult& schemas) {
        std::map<int, detail::CompiledOp> out;
        for (const auto& op : job.plan.ops) {
            detail::CompiledOp c;
            c.kind = op.kind;
            c.op = &op;
            c.out_schema = schemas.by_op.at(op.id);
            auto ins = job.plan.inputs(op.id);
            const SchemaDef* in0 =
                ins.empty() ? nullptr : &schemas.by_op.at(ins[0]);
            switch (op.kind) {
                case OpKind::Project:
                    for (const auto& col : op.params.columns)
                        c.proj_idx.push_back(schema_index(*in0, col));
                    break;
                case OpKind::Filter:
                    for (const auto& cmp : op.params.predicate.conjuncts) {
                        detail::CompiledCmp cc;
                        cc.lhs = cmp.lhs;
                        cc.rhs = cmp.rhs;
                        cc.op = cmp.op;
                        if (cmp.lhs.kind == OperandKind::Column)
                            cc.lhs_idx = schema_index(*in0, cmp.lhs.text);
                        if (cmp.rhs.kind == OperandKind::Column)
                            cc.rhs_idx = schema_index(*in0, cmp.rhs.text);
                        cc.numeric = cmp.lhs.kind == OperandKind::Number ||
                                     cmp.rhs.kind == OperandKind::Number;
                        c.cmps.push_back(std::move(cc));
                    }
                    break;
                case OpKind::Join:
                case OpKind::Group:
                case OpKind::CoGroup:
                    for (size_t slot = 0; slot < ins.size(); ++slot) {
                        const SchemaDef& in = schemas.by_op.at(ins[slot]);
                        std::vector<int> idx;
                        for (const auto& k : op.params.keys[slot])
                            idx.push_back(schema_index(in, k));
                        c.key_idx.push_back(std::move(idx));
                    }
                    break;
                case OpKind::Distinct:
                    c.key_idx.push_back({}); // whole-row key
                    break;
                case OpKind::Aggregate:
                    for (const auto& item : op.params.aggs) {
                        detail::CompiledAgg ca;
                        ca.is_key = item.is_key;
                        ca.fn = item.fn;
                        if (item.is_key) {
                            ca.group_idx = schema_index(*in0, "group");
                        } else {
                            ca.bag_idx = schema_index(*in0, item.bag_col);
                            if (!item.inner_col.empty()) {
                                const Column& bag =
                                    (*in0)[static_cast<size_t>(ca.bag_idx)];
                                for (size_t i = 0; i < bag.inner.size(); ++i)
                                    if (bag.inner[i] == item.inner_col)
                                        ca.inner_idx = static_cast<int>(i);
                            }
                        }
                        c.aggs.push_back(ca);
                    }
                    break;
                default:
                    break;
            }
            for (const auto& e : job.plan.edges)
                if (e.src == op.id) c.out_edges.emplace_back(e.dst, e.slot);
            std::sort(c.out_edges.begin(), c.out_edges.end());
            out[op.id] = std::move(c);
        }
        return out;
    }

    bool eval_filter(const MapReduceJob& job, const detail::CompiledOp& c,
                     const Row& row) {
        for (const auto& cmp : c.cmps) {
            auto side = [&](int idx, const Operand& o) -> const std::string& {
                return idx >= 0 ? row[static_cast<size_t>(idx)] : o.text;
            };
            const std::string& lv = side(cmp.lhs_idx, cmp.lhs);
            const std::string& rv = side(cmp.rhs_idx, cmp.rhs);
            int rel;
            bool string_literal_eq =
                (cmp.lhs.kind == OperandKind::String ||
                 cmp.rhs.kind == OperandKind::String) &&
                (cmp.op == CmpOp::Eq || cmp.op == CmpOp::Ne);
            if (cmp.numeric) {
                auto ln = parse_number(lv), rn = parse_number(rv);
                if (!ln || !rn)
                    throw ExecError(job.id, "non-numeric value '" + (ln ? rv : lv) +
                                                "' in numeric comparison");
                rel = (*ln < *rn) ? -1 : (*ln > *rn) ? 1 : 0;
            } else if (!string_literal_eq && cmp.lhs_idx >= 0 && cmp.rhs_idx >= 0) {
                auto ln = parse_number(lv), rn = parse_number(rv);
                if (ln && rn)
                    rel = (*ln < *rn) ? -1 : (*ln > *rn) ? 1 : 0;
                else
                    rel = lv.compare(rv) < 0 ? -1 : (lv == rv ? 0 : 1);
            } else {
                rel = lv.compare(rv) < 0 ? -1 : (lv == rv ? 0 : 1);
            }
            bool pass = false;
            switch (cmp.op) {
                case CmpOp::Eq: pass = rel == 0; break;
                case CmpOp::Ne: pass = rel != 0; break;
                case CmpOp::Lt: pass = rel < 0; break;
                case CmpOp::Le: pass = rel <= 0; break;
                case CmpOp::Gt: pass = rel > 0; break;
                case CmpOp::Ge: pass = rel >= 0; break;
            }
            if (!pass) return false;
        }
        return true;
    }

    Row eval_aggregate(const MapReduceJob& job, const detail::CompiledOp& c,
                       const Row& row) {
        Row out;
        out.reserve(c.aggs.size());
        for (const auto& a : c.aggs) {
            if (a.is_key) {
                out.push_back(row[static_cast<size_t>(a.group_idx)]);
                continue;
            }
            const std::string& bag_text = row[static_cast<size_t>(a.bag_idx)];
            if (a.fn == AggFn::Count) {
                auto n = bag_text_count(bag_text);
                if (!n) throw ExecError(job.id, "malformed bag value");
                out.push_back(format_number(static_cast<double>(*n)));
                continue;
            }
            auto tuples = bag_from_text(bag_text);
            if (!tuples) throw ExecError(job.id, "malformed bag value");
            double acc = 0;
            size_t n = 0;
            for (const auto& t : *tuples) {
                if (a.inner_idx < 0 || a.inner_idx >= static_cast<int>(t.size()))
                    throw ExecError(job.id, "bag tuple is narrower than its schema");
                auto v = parse_number(t[static_cast<size_t>(a.inner_idx)]);
                if (!v)
                    throw ExecError(job.id, "non-numeric value '" +
                                                t[static_cast<size_t>(a.inner_idx)] +
                                                "' under " + agg_fn_name(a.fn));
                ++n;
                switch (a.fn) {
                    case AggFn::Sum:
                    case AggFn::Avg: acc += *v; break;
                    case AggFn::Min: acc = (n == 1) ? *v : std::min(acc, *v); break;
                    case AggFn::Max: acc = (n == 1) ? *v : std::max(acc, *v); break;
                    default: break;
                }
            }
            if (n == 0) {
                out.emplace_back(); // aggregate over an empty bag is null
                continue;
            }
            if (a.fn == AggFn::Avg) acc /= static_cast<double>(n);
            out.push_back(format_number(acc));
        }
        return out;
    }

    struct MapSinks {
        // One spill buffer per reduce partition: (key, tag, line).
        std::vector<std::vector<detail::RunRecord>> spill;
    };

    // Pushes a batch into an operator and onward to its consumers.
    void deliver(const MapReduceJob& job, std::map<int, detail::CompiledOp>& ops,
                 int op_id, int slot, std::vector<Row>&& batch, int part_index,
                 std::map<int, std::map<int, PartWriter>>& open_parts,
                 std::map<int, std::unique_ptr<DatasetWriter>>& writers,
                 MapSinks* sinks, detail::TaskStats& ts) {
        detail::CompiledOp& c = ops.at(op_id);
        switch (c.kind) {
            case OpKind::Load:
                throw ExecError(job.id, "data delivered into a load operator");
            case OpKind::Store: {
                detail::ScopedTimer t1(ts.t_store);
                detail::ScopedTimer t2(ts.t_store_per_op[op_id]);
                auto it = open_parts[op_id].find(part_index);
                if (it == open_parts[op_id].end())
                    it = open_parts[op_id]
                             .emplace(part_index, writers.at(op_id)->open_part(part_index))
                             .first;
                for (const auto& row : batch) it->second.append(to_line(row));
                return;
            }
            case OpKind::Join:
            case OpKind::Group:
            case OpKind::CoGroup:
            case OpKind::Distinct: {
                // Map-side shuffle boundary: partition, tag and buffer.
                if (!sinks)
                    throw ExecError(job.id, "shuffle operator reached in reduce chain");
                detail::ScopedTimer t(ts.t_ops[op_id]);
                int reducers = static_cast<int>(sinks->spill.size());
                for (auto& row : batch) {
                    std::string key =
                        c.kind == OpKind::Distinct
                            ? to_line(row)
                            : composite_key(row, c.key_idx[static_cast<size_t>(slot)]);
                    int p = static_cast<int>(fnv1a(key) % static_cast<uint64_t>(reducers));
                    sinks->spill[static_cast<size_t>(p)].push_back(
                        {std::move(key), slot, to_line(row)});
                }
                return;
            }
            default:
                break;
        }
        std::vector<Row> out;
        {
            detail::ScopedTimer t(ts.t_ops[op_id]);
            switch (c.kind) {
                case OpKind::Project:
                    out.reserve(batch.size());
                    for (const auto& row : batch) {
                        Row r;
                        r.reserve(c.proj_idx.size());
                        for (int idx : c.proj_idx) r.push_back(row[static_cast<size_t>(idx)]);
                        out.push_back(std::move(r));
                    }
                    break;
                case OpKind::Filter:
                    for (auto& row : batch)
                        if (eval_filter(job, c, row)) out.push_back(std::move(row));
                    break;
                case OpKind::Aggregate:
                    out.reserve(batch.size());
                    for (const auto& row : batch) out.push_back(eval_aggregate(job, c, row));
                    break;
                case OpKind::Union:
                case OpKind::Split:
                    out = std::move(batch);
                    break;
                default:
                    break;
            }
        }
        for (size_t i = 0; i < c.out_edges.size(); ++i) {
            auto [dst, dst_slot] = c.out_edges[i];
            std::vector<Row> feed =
                (i + 1 == c.out_edges.size()) ? std::move(out) : out;
            deliver(job, ops, dst, dst_slot, std::move(feed), part_index, open_parts,
                    writers, sinks, ts);
        }
    }

    void run_map_task(const MapReduceJob& job, std::map<int, detail::CompiledOp> ops,
                      int load_op, const fs::path& file, uint64_t begin, uint64_t end,
                      int task_index,
                      std::map<int, std::unique_ptr<DatasetWriter>>& writers,
                      const fs::path& work, detail::TaskStats& ts) {
        MapSinks sinks;
        bool has_reduce = job.shuffle_op.has_value();
        if (has_reduce) sinks.spill.resize(static_cast<size_t>(cfg_.reducers));
        std::map<int, std::map<int, PartWriter>> open_parts;

        size_t width = ops.at(load_op).out_schema.size();
        std::ifstream in(file, std::ios::binary);
        if (!in) throw ExecError(job.id, "cannot open " + file.string());
        uint64_t pos = begin;
        if (begin > 0) {
            in.seekg(static_cast<std::streamoff>(begin - 1));
            std::string skip;
            std::getline(in, skip);
            pos = static_cast<uint64_t>(in.tellg());
        }

        const size_t batch_rows = 4096;
        std::vector<Row> batch;
        bool eof = false;
        while (!eof && pos < end) {
            {
                detail::ScopedTimer t1(ts.t_load);
                detail::ScopedTimer t2(ts.t_load_per_op[load_op]);
                batch.clear();
                std::string line;
                while (batch.size() < batch_rows && pos < end) {
                    if (!std::getline(in, line)) {
                        eof = true;
                        break;
                    }
                    pos += line.size() + 1;
                    Row row = from_line(line);
                    if (width > 0 && row.size() != width)
                        throw ExecError(job.id, "record width " +
                                                    std::to_string(row.size()) +
                                                    " does not match schema width " +
                                                    std::to_string(width) + " in '" +
                                                    ops.at(load_op).op->params.path + "'");
                    batch.push_back(std::move(row));
                }
            }
            if (batch.empty()) continue;
            for (size_t i = 0; i < ops.at(load_op).out_edges.size(); ++i) {
                auto [dst, dst_slot] = ops.at(load_op).out_edges[i];
                std::vector<Row> feed =
                    (i + 1 == ops.at(load_op).out_edges.size()) ? std::move(batch)
                                                                : batch;
                deliver(job, ops, dst, dst_slot, std::move(feed), task_index, open_parts,
                        writers, has_reduce ? &sinks : nullptr, ts);
            }
            batch.clear();
        }
        for (auto& [sid, parts] : open_parts)
            for (auto& [idx, pw] : parts) pw.flush();

        if (has_reduce) {
            detail::ScopedTimer t(ts.t_sort);
            for (int p = 0; p < cfg_.reducers; ++p) {
                auto& bucket = sinks.spill[static_cast<size_t>(p)];
                std::sort(bucket.begin(), bucket.end());
                fs::path run = work / ("map" + std::to_string(task_index) + "_p" +
                                       std::to_string(p) + ".run");
                std::ofstream out(run, std::ios::binary);
                for (const auto& rec : bucket) {
                    out << rec.key << '\x02' << rec.tag << '\x02' << rec.line << '\n';
                }
            }
        }
    }

    void run_reduce_task(const MapReduceJob& job, std::map<int, detail::CompiledOp> ops,
                         int partition, int map_tasks,
                         std::map<int, std::unique_ptr<DatasetWriter>>& writers,
                         const fs::path& work, detail::TaskStats& ts) {
        int shuffle = *job.shuffle_op;
        detail::CompiledOp& sc = ops.at(shuffle);
        size_t arity = job.plan.inputs(shuffle).size();
        std::map<int, std::map<int, PartWriter>> open_parts;

        std::vector<std::unique_ptr<detail::RunReader>> readers;
        {
            detail::ScopedTimer t(ts.t_sort);
            for (int m = 0; m < map_tasks; ++m) {
                fs::path run = work / ("map" + std::to_string(m) + "_p" +
                                       std::to_string(partition) + ".run");
                if (!fs::exists(run)) continue;
                auto r = std::make_unique<detail::RunReader>(run);
                if (r->valid()) readers.push_back(std::move(r));
            }
        }

        auto emit_group = [&](const std::string& key,
                              std::vector<std::vector<Row>>& by_slot) {
            std::vector<Row> out;
            {
                detail::ScopedTimer t(ts.t_ops[shuffle]);
                switch (sc.kind) {
                    case OpKind::Join: {
                        bool all = true;
                        for (const auto& rows : by_slot)
                            if (rows.empty()) all = false;
                        if (!all) break;
                        std::vector<size_t> pick(arity, 0);
                        while (true) {
                            Row r;
                            for (size_t s = 0; s < arity; ++s)
                                for (const auto& f : by_slot[s][pick[s]]) r.push_back(f);
                            out.push_back(std::move(r));
                            size_t s = arity;
                            while (s > 0) {
                                --s;
                                if (++pick[s] < by_slot[s].size()) break;
                                pick[s] = 0;
                                if (s == 0) goto joined;
                            }
                        }
                    joined:
                        break;
                    }
                    case OpKind::Group: {
                        Row r;
                        r.push_back(key_display(key));
                        r.push_back(bag_to_text(by_slot[0]));
                        out.push_back(std::move(r));
                        break;
                    }
                    case OpKind::CoGroup: {
                        Row r;
                        r.push_back(key_display(key));
                        for (size_t s = 0; s < arity; ++s)
                            r.push_back(bag_to_text(by_slot[s]));
                        out.push_back(std::move(r));
                        break;
                    }
                    case OpKind::Distinct:
                        out.push_back(from_line(key));
                        break;
                    default:
                        throw ExecError(job.id, "unexpected shuffle operator");
                }
            }
            if (out.empty()) return;
            for (size_t i = 0; i < sc.out_edges.size(); ++i) {
                auto [dst, slot] = sc.out_edges[i];
                std::vector<Row> feed = (i + 1 == sc.out_edges.size()) ? std::move(out)
                                                                       : out;
                deliver(job, ops, dst, slot, std::move(feed), partition, open_parts,
                        writers, nullptr, ts);
            }
        };

        // k-way merge over the sorted runs, grouping by key.
        auto least = [&]() -> int {
            int best = -1;
            for (size_t i = 0; i < readers.size(); ++i) {
                if (!readers[i]->valid()) continue;
                if (best < 0 || readers[i]->current() < readers[static_cast<size_t>(best)]->current())
                    best = static_cast<int>(i);
            }
            return best;
        };
        std::string cur_key;
        bool have_group = false;
        std::vector<std::vector<Row>> by_slot(arity);
        while (true) {
            int src;
            {
                detail::ScopedTimer t(ts.t_sort);
                src = least();
            }
            if (src < 0) break;
            detail::RunRecord rec = readers[static_cast<size_t>(src)]->current();
            {
                detail::ScopedTimer t(ts.t_sort);
                readers[static_cast<size_t>(src)]->advance();
            }
            if (have_group && rec.key != cur_key) {
                emit_group(cur_key, by_slot);
                for (auto& rows : by_slot) rows.clear();
            }
            cur_key = rec.key;
            have_group = true;
            if (sc.kind == OpKind::Distinct) {
                if (!by_slot[0].empty()) continue; // duplicate line
                by_slot[0].push_back(from_line(rec.line));
            } else {
                by_slot[static_cast<size_t>(rec.tag)].push_back(from_line(rec.line));
            }
        }
        if (have_group) emit_group(cur_key, by_slot);

        // Ensure reduce-side stores materialize this partition's part file
        // even when it received no records.
        for (int sid : job.plan.ids_of(OpKind::Store))
            if (job.is_reduce_op(sid) && !open_parts[sid].count(partition))
                open_parts[sid].emplace(partition, writers.at(sid)->open_part(partition));

        for (auto& [sid, parts] : open_parts)
            for (auto& [idx, pw] : parts) pw.flush();
    }

    Dfs& dfs_;
    ExecutorConfig cfg_;
    std::atomic<uint64_t> work_token_{0};
};

} // namespace restore
