#pragma once

// The store of reusable datasets. Each entry pairs a stored dataset with the
// canonical plan that produced it plus the statistics needed to decide
// whether keeping or reusing it is worthwhile. Entries are kept in a scan
// order where a plan that subsumes another comes first, so greedy matching
// sees the largest reusable fragment before its sub-fragments. Everything is
// persisted under a plain directory so a new process sees the same state.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "restore/dfs.hpp"
#include "restore/matcher.hpp"
#include "restore/plan.hpp"

namespace restore {

struct InputFingerprint {
    std::string path;
    int64_t mtime_us = 0;
    uint64_t bytes = 0;
};

struct RepositoryEntry {
    int64_t id = -1;
    PhysicalPlan plan; // canonical, single Store
    std::string output_path;
    SchemaDef stored_schema;
    double t_load = 0, t_ops = 0, t_sort = 0, t_store = 0;
    double t_elapsed = 0;
    uint64_t input_bytes = 0, output_bytes = 0;
    int64_t created_us = 0;
    int64_t last_reused_us = 0;
    int64_t reuse_count = 0;
    std::vector<InputFingerprint> inputs;
    int64_t out_mtime_us = 0;
    uint64_t out_bytes = 0;

    double recompute_cost() const { return t_load + t_ops + t_sort + t_store; }
    double reduction_ratio() const {
        return output_bytes == 0 ? 1e18
                                 : double(input_bytes) / double(output_bytes);
    }
    int64_t last_activity_us() const { return std::max(created_us, last_reused_us); }
};

struct AdmitCandidate {
    PhysicalPlan plan;
    std::string output_path;
    SchemaDef stored_schema;
    double t_load = 0, t_ops = 0, t_sort = 0, t_store = 0;
    double t_elapsed = 0;
    uint64_t input_bytes = 0, output_bytes = 0;

    double recompute_cost() const { return t_load + t_ops + t_sort + t_store; }
};

struct AdmitResult {
    bool accepted = false;
    int64_t id = -1;
    std::string reason;
};

struct EvictionRecord {
    int64_t id = -1;
    std::string output_path;
    std::string reason;
};

class RepositoryError : public std::runtime_error {
public:
    explicit RepositoryError(const std::string& msg) : std::runtime_error(msg) {}
};

class Repository {
public:
    using Clock = std::function<int64_t()>; // microseconds

    Repository(Dfs& dfs, std::filesystem::path root, Clock clock = {})
        : dfs_(dfs), root_(std::move(root)), clock_(std::move(clock)) {
        if (!clock_)
            clock_ = [] {
                return std::chrono::duration_cast<std::chrono::microseconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                    .count();
            };
        std::filesystem::create_directories(root_);
        load_state();
    }

    // ---- admission -------------------------------------------------------

    // Keeping a dataset must be plausibly profitable: it has to be smaller
    // than what it was computed from, and reading it back has to beat paying
    // for the computation again. Rejected datasets are deleted when they are
    // engine-owned.
    AdmitResult admit(const AdmitCandidate& cand) {
        std::lock_guard<std::mutex> lk(mu_);
        AdmitResult res;
        if (cand.output_bytes >= cand.input_bytes) {
            res.reason = "output not smaller than input";
            discard_dataset(cand.output_path);
            return res;
        }
        double read_cost = double(cand.output_bytes) / load_throughput_locked();
        if (read_cost >= cand.recompute_cost()) {
            res.reason = "reading back would not beat recomputing";
            discard_dataset(cand.output_path);
            return res;
        }

        auto entry = std::make_shared<RepositoryEntry>();
        entry->plan = renumber_canonical(cand.plan);
        entry->output_path = cand.output_path;
        entry->stored_schema = cand.stored_schema;
        entry->t_load = cand.t_load;
        entry->t_ops = cand.t_ops;
        entry->t_sort = cand.t_sort;
        entry->t_store = cand.t_store;
        entry->t_elapsed = cand.t_elapsed;
        entry->input_bytes = cand.input_bytes;
        entry->output_bytes = cand.output_bytes;
        entry->created_us = clock_();
        if (!fingerprint(*entry)) {
            res.reason = "input dataset disappeared before admission";
            discard_dataset(cand.output_path);
            return res;
        }

        // An equivalent plan may already be stored.
        for (size_t i = 0; i < order_.size(); ++i) {
            auto& old = order_[i];
            if (!equivalent(*entry, *old)) continue;
            if (same_inputs(*entry, *old)) {
                if (old->output_path != entry->output_path)
                    discard_dataset(entry->output_path);
                res.accepted = false;
                res.id = old->id;
                res.reason = "equivalent entry already stored";
                return res;
            }
            // Same plan over changed inputs: the old dataset is stale.
            remove_entry_locked(i, "inputs changed");
            break;
        }

        entry->id = next_id_++;
        insert_ordered(entry);
        persist_entry(*entry);
        persist_order();
        res.accepted = true;
        res.id = entry->id;
        return res;
    }

    // ---- reuse bookkeeping -------------------------------------------------

    void record_reuse(int64_t id) {
        std::lock_guard<std::mutex> lk(mu_);
        for (auto& e : order_) {
            if (e->id == id) {
                e->reuse_count += 1;
                e->last_reused_us = clock_();
                persist_entry(*e);
                return;
            }
        }
        throw RepositoryError("record_reuse: unknown entry " + std::to_string(id));
    }

    // Feeds the observed read rate so admission can price future reads.
    void note_load_throughput(uint64_t bytes, double seconds) {
        if (seconds <= 0 || bytes == 0) return;
        std::lock_guard<std::mutex> lk(mu_);
        meter_bytes_ += bytes;
        meter_secs_ += seconds;
        persist_meter();
    }

    double load_throughput() {
        std::lock_guard<std::mutex> lk(mu_);
        return load_throughput_locked();
    }

    // ---- eviction ----------------------------------------------------------

    // Drops entries that sat unused for longer than the window and entries
    // whose input data vanished or changed (their dataset no longer reflects
    // anything recomputable). Deleting one stored dataset can invalidate
    // entries computed from it, so the scan repeats until stable.
    std::vector<EvictionRecord> evict(int64_t idle_window_us) {
        std::lock_guard<std::mutex> lk(mu_);
        std::vector<EvictionRecord> out;
        int64_t now = clock_();
        bool again = true;
        while (again) {
            again = false;
            for (size_t i = 0; i < order_.size(); ++i) {
                auto& e = order_[i];
                std::string reason;
                if (idle_window_us > 0 && now - e->last_activity_us() > idle_window_us)
                    reason = "idle beyond window";
                else if (!inputs_fresh(*e))
                    reason = "input data deleted or modified";
                else if (!output_fresh(*e))
                    reason = "stored dataset deleted or modified";
                if (reason.empty()) continue;
                out.push_back({e->id, e->output_path, reason});
                remove_entry_locked(i, reason);
                again = true;
                break;
            }
        }
        if (!out.empty()) persist_order();
        return out;
    }

    bool remove(int64_t id) {
        std::lock_guard<std::mutex> lk(mu_);
        for (size_t i = 0; i < order_.size(); ++i) {
            if (order_[i]->id == id) {
                remove_entry_locked(i, "removed");
                persist_order();
                return true;
            }
        }
        return false;
    }

    // ---- scanning ----------------------------------------------------------

    std::vector<std::shared_ptr<const RepositoryEntry>> ordered_scan() const {
        std::lock_guard<std::mutex> lk(mu_);
        return {order_.begin(), order_.end()};
    }

    struct Snapshot {
        std::vector<std::shared_ptr<const RepositoryEntry>> entries;
        std::vector<CandidateView> views;
    };

    // Matching view of the repository: entries whose stored dataset still
    // exists unchanged. Stale entries are skipped here and reaped by evict.
    Snapshot match_snapshot() const {
        std::lock_guard<std::mutex> lk(mu_);
        Snapshot snap;
        for (const auto& e : order_) {
            if (!output_fresh(*e)) continue;
            snap.entries.push_back(e);
            CandidateView v;
            v.id = e->id;
            v.plan = &e->plan;
            v.output_path = e->output_path;
            v.stored_schema = e->stored_schema;
            snap.views.push_back(v);
        }
        return snap;
    }

    size_t size() const {
        std::lock_guard<std::mutex> lk(mu_);
        return order_.size();
    }

    std::shared_ptr<const RepositoryEntry> find(int64_t id) const {
        std::lock_guard<std::mutex> lk(mu_);
        for (const auto& e : order_)
            if (e->id == id) return e;
        return nullptr;
    }

private:
    static bool subsumes(const RepositoryEntry& a, const RepositoryEntry& b) {
        return pairwise_plan_traversal(a.plan, b.plan).has_value();
    }
    static bool equivalent(const RepositoryEntry& a, const RepositoryEntry& b) {
        return subsumes(a, b) && subsumes(b, a);
    }
    static bool strictly_subsumes(const RepositoryEntry& a, const RepositoryEntry& b) {
        return subsumes(a, b) && !subsumes(b, a);
    }
    static bool ranks_before(const RepositoryEntry& a, const RepositoryEntry& b) {
        if (a.reduction_ratio() != b.reduction_ratio())
            return a.reduction_ratio() > b.reduction_ratio();
        if (a.t_elapsed != b.t_elapsed) return a.t_elapsed > b.t_elapsed;
        return a.id < b.id;
    }
    static bool same_inputs(const RepositoryEntry& a, const RepositoryEntry& b) {
        if (a.inputs.size() != b.inputs.size()) return false;
        for (size_t i = 0; i < a.inputs.size(); ++i) {
            if (a.inputs[i].path != b.inputs[i].path) return false;
            if (a.inputs[i].mtime_us != b.inputs[i].mtime_us) return false;
            if (a.inputs[i].bytes != b.inputs[i].bytes) return false;
        }
        return true;
    }

    double load_throughput_locked() const {
        // Until a read has been observed, assume a mid-range disk.
        if (meter_secs_ <= 0 || meter_bytes_ == 0) return 64.0 * 1024 * 1024;
        return double(meter_bytes_) / meter_secs_;
    }

    bool fingerprint(RepositoryEntry& e) {
        e.inputs.clear();
        std::set<std::string> seen;
        for (const auto& op : e.plan.ops) {
            if (op.kind != OpKind::Load) continue;
            if (!seen.insert(op.params.path).second) continue;
            if (!dfs_.exists(op.params.path)) return false;
            auto meta = dfs_.stat(op.params.path);
            e.inputs.push_back({op.params.path, meta.mtime, meta.bytes});
        }
        std::sort(e.inputs.begin(), e.inputs.end(),
                  [](const auto& a, const auto& b) { return a.path < b.path; });
        if (!dfs_.exists(e.output_path)) return false;
        auto ometa = dfs_.stat(e.output_path);
        e.out_mtime_us = ometa.mtime;
        e.out_bytes = ometa.bytes;
        return true;
    }

    bool inputs_fresh(const RepositoryEntry& e) const {
        for (const auto& fp : e.inputs) {
            if (!dfs_.exists(fp.path)) return false;
            auto meta = dfs_.stat(fp.path);
            if (meta.mtime != fp.mtime_us || meta.bytes != fp.bytes) return false;
        }
        return true;
    }

    bool output_fresh(const RepositoryEntry& e) const {
        if (!dfs_.exists(e.output_path)) return false;
        auto meta = dfs_.stat(e.output_path);
        return meta.mtime == e.out_mtime_us && meta.bytes == e.out_bytes;
    }

    // Only engine-owned datasets may be deleted from the file system.
    static bool deletable(const std::string& path) {
        return path.rfind("restore/", 0) == 0 || path.rfind("tmp/", 0) == 0;
    }

    void discard_dataset(const std::string& path) {
        if (!deletable(path)) return;
        for (const auto& e : order_)
            if (e->output_path == path) return; // still referenced
        if (dfs_.exists(path)) dfs_.remove(path);
    }

    void remove_entry_locked(size_t idx, const std::string&) {
        auto entry = order_[idx];
        order_.erase(order_.begin() + static_cast<long>(idx));
        std::error_code ec;
        std::filesystem::remove_all(root_ / std::to_string(entry->id), ec);
        discard_dataset(entry->output_path);
    }

    // After every entry that subsumes it, before the ones it subsumes, and
    // among incomparable neighbours the stronger reducer goes first.
    void insert_ordered(const std::shared_ptr<RepositoryEntry>& entry) {
        size_t pos = 0;
        for (size_t i = 0; i < order_.size(); ++i)
            if (strictly_subsumes(*order_[i], *entry)) pos = i + 1;
        while (pos < order_.size()) {
            const auto& at = *order_[pos];
            if (strictly_subsumes(*entry, at)) break;
            if (strictly_subsumes(at, *entry)) break; // consistent lists never hit this
            if (!ranks_before(at, *entry)) break;
            ++pos;
        }
        order_.insert(order_.begin() + static_cast<long>(pos), entry);
    }

    // ---- persistence -------------------------------------------------------

    void persist_entry(const RepositoryEntry& e) {
        auto dir = root_ / std::to_string(e.id);
        std::filesystem::create_directories(dir);
        {
            std::ofstream f(dir / "plan.txt", std::ios::trunc);
            f << plan_to_text(e.plan);
        }
        std::ostringstream kv;
        kv << "id=" << e.id << "\n";
        kv << "output_path=" << e.output_path << "\n";
        kv << "schema=" << schema_to_text(e.stored_schema) << "\n";
        kv << "t_load=" << e.t_load << "\n";
        kv << "t_ops=" << e.t_ops << "\n";
        kv << "t_sort=" << e.t_sort << "\n";
        kv << "t_store=" << e.t_store << "\n";
        kv << "t_elapsed=" << e.t_elapsed << "\n";
        kv << "input_bytes=" << e.input_bytes << "\n";
        kv << "output_bytes=" << e.output_bytes << "\n";
        kv << "created_us=" << e.created_us << "\n";
        kv << "last_reused_us=" << e.last_reused_us << "\n";
        kv << "reuse_count=" << e.reuse_count << "\n";
        kv << "out_mtime_us=" << e.out_mtime_us << "\n";
        kv << "out_bytes=" << e.out_bytes << "\n";
        for (size_t i = 0; i < e.inputs.size(); ++i)
            kv << "input" << i << "=" << e.inputs[i].mtime_us << " "
               << e.inputs[i].bytes << " " << e.inputs[i].path << "\n";
        std::ofstream f(dir / "meta.kv", std::ios::trunc);
        f << kv.str();
    }

    void persist_order() {
        std::ofstream f(root_ / "ORDER", std::ios::trunc);
        for (const auto& e : order_) f << e->id << "\n";
        std::ofstream g(root_ / "NEXT_ID", std::ios::trunc);
        g << next_id_ << "\n";
    }

    void persist_meter() {
        std::ofstream f(root_ / "meter.kv", std::ios::trunc);
        f << "bytes=" << meter_bytes_ << "\n";
        f << "secs=" << meter_secs_ << "\n";
    }

    void load_state() {
        next_id_ = 1;
        {
            std::ifstream f(root_ / "NEXT_ID");
            if (f) f >> next_id_;
        }
        {
            std::ifstream f(root_ / "meter.kv");
            std::string line;
            while (f && std::getline(f, line)) {
                auto eq = line.find('=');
                if (eq == std::string::npos) continue;
                auto key = line.substr(0, eq);
                auto val = line.substr(eq + 1);
                if (key == "bytes") meter_bytes_ = std::stoull(val);
                if (key == "secs") meter_secs_ = std::stod(val);
            }
        }
        std::ifstream f(root_ / "ORDER");
        if (!f) return;
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            int64_t id = std::stoll(line);
            auto e = load_entry(id);
            if (e) order_.push_back(e);
        }
    }

    std::shared_ptr<RepositoryEntry> load_entry(int64_t id) {
        auto dir = root_ / std::to_string(id);
        std::ifstream pf(dir / "plan.txt");
        std::ifstream mf(dir / "meta.kv");
        if (!pf || !mf) return nullptr;
        auto e = std::make_shared<RepositoryEntry>();
        std::stringstream plan_text;
        plan_text << pf.rdbuf();
        e->plan = plan_from_text(plan_text.str());
        std::string line;
        std::map<size_t, InputFingerprint> fps;
        while (std::getline(mf, line)) {
            auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            auto key = line.substr(0, eq);
            auto val = line.substr(eq + 1);
            if (key == "id") e->id = std::stoll(val);
            else if (key == "output_path") e->output_path = val;
            else if (key == "schema") e->stored_schema = schema_from_text(val);
            else if (key == "t_load") e->t_load = std::stod(val);
            else if (key == "t_ops") e->t_ops = std::stod(val);
            else if (key == "t_sort") e->t_sort = std::stod(val);
            else if (key == "t_store") e->t_store = std::stod(val);
            else if (key == "t_elapsed") e->t_elapsed = std::stod(val);
            else if (key == "input_bytes") e->input_bytes = std::stoull(val);
            else if (key == "output_bytes") e->output_bytes = std::stoull(val);
            else if (key == "created_us") e->created_us = std::stoll(val);
            else if (key == "last_reused_us") e->last_reused_us = std::stoll(val);
            else if (key == "reuse_count") e->reuse_count = std::stoll(val);
            else if (key == "out_mtime_us") e->out_mtime_us = std::stoll(val);
            else if (key == "out_bytes") e->out_bytes = std::stoull(val);
            else if (key.rfind("input", 0) == 0) {
                size_t idx = std::stoul(key.substr(5));
                std::istringstream is(val);
                InputFingerprint fp;
                is >> fp.mtime_us >> fp.bytes;
                std::getline(is, fp.path);
                if (!fp.path.empty() && fp.path[0] == ' ') fp.path.erase(0, 1);
                fps[idx] = fp;
            }
        }
        for (auto& [idx, fp] : fps) e->inputs.push_back(fp);
        return e;
    }

    Dfs& dfs_;
    std::filesystem::path root_;
    Clock clock_;
    mutable std::mutex mu_;
    std::vector<std::shared_ptr<RepositoryEntry>> order_;
    int64_t next_id_ = 1;
    uint64_t meter_bytes_ = 0;
    double meter_secs_ = 0;
};

} // namespace restore
